//! Schrödinger dynamics on star graphs.
//!
//! A star graph is a single vertex with `n` half-line edges attached. This
//! crate discretizes the graph (each edge truncated to `[0, L]` on a shared
//! uniform grid), realizes the Laplacian for a general self-adjoint vertex
//! condition `A f(0) + B f'(0+) = 0`, and provides
//!
//! * exact spectral propagators for the Dirichlet and Kirchhoff conditions,
//!   plus a unitary Crank–Nicolson propagator for arbitrary admissible
//!   `(A, B)` pairs ([`propagators`]),
//! * the Fourier–Sine transform together with the multiplier/dilation
//!   factorization of the Dirichlet flow ([`transforms`]),
//! * vertex scattering matrices, resolvent kernels and bound states
//!   ([`vertex`]),
//! * a split-step solver for `i∂ₜu + Δu + λ|u|^p u = 0` with conservation and
//!   window monitors ([`nls`]),
//! * scattering diagnostics: free pullbacks, Dollard profiles, the vertex
//!   pairing audit and a numerical wave operator ([`scattering`]).

pub mod fit;
pub mod graph;
pub mod nls;
pub mod propagators;
pub mod scattering;
pub mod transforms;
pub mod vertex;

pub use graph::{sample_function, GraphError, GraphFunction, Preset, SpectralField, StarGraph};
pub use nls::{
    admissible_pair_check, evolve, nonlinear_step, weak_residual, ConfigRecord, EvolutionConfig,
    Nonlinearity, SolverError, Trajectory,
};
pub use propagators::{
    boundary_flux, dirichlet_image_kernel, dirichlet_propagate, kirchhoff_propagate,
    vertex_condition_residual, BackendKind, CnPropagator, LinearPropagator, PropagatorError,
};
pub use scattering::{
    adversarial_test_function, dollard_profile, free_pullback_series, pairing_audit, wave_operator,
    AdversarialTestFunction, PairingAudit, PullbackKind, PullbackPoint, ScatteringError, SeriesFit,
    WaveOperatorResult,
};
pub use transforms::{
    dilation_apply, dilation_inverse, dollard_propagate, hausdorff_young_check, multiplier_apply,
    multiplier_inverse, sine_inverse, sine_transform, TransformError,
};
pub use vertex::{
    BoundState, BoundaryForm, VertexCondition, VertexConditionRecord, VertexError, VertexKind,
};
