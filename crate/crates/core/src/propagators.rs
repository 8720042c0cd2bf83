//! Linear propagators `e^{itΔ_M}` on the star graph.
//!
//! Three backends:
//!
//! * `dirichlet-spectral` — each edge evolves independently through the odd
//!   extension onto a ring of circumference `2L` and the exact free spectral
//!   multiplier `e^{-itξ²}`; exactly unitary in the trapezoid norm.
//! * `kirchhoff-kernel` — the energy-independent Kirchhoff scattering matrix
//!   `S = (2/n)J − I` collapses the vertex coupling onto a mean/deviation
//!   split: the edge mean evolves as a half-line Neumann problem (even
//!   extension), the deviations as Dirichlet problems. Also exactly unitary.
//! * `cn-general` — Crank–Nicolson with the vertex condition built into the
//!   discrete quadratic form, for arbitrary admissible `(A, B)`. The
//!   Hamiltonian is Hermitian w.r.t. the trapezoid inner product by
//!   construction, so each Cayley step conserves the discrete norm exactly.
//!
//! The method-of-images quadrature of the Dirichlet kernel is kept as an
//! independent oracle, and the vertex derivative of an evolved Dirichlet wave
//! (the boundary-flux functional) is evaluated from its closed quadrature
//! formula.

use crate::graph::{trapezoid_weight, GraphError, GraphFunction, StarGraph};
use crate::transforms::fft_forward;
use crate::vertex::{BoundaryForm, VertexCondition, VertexError, VertexKind};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

type CMat = DMatrix<Complex64>;

#[derive(Debug, Error)]
pub enum PropagatorError {
    #[error("backend {backend} requires the {needs} condition, got {got}")]
    BackendMismatch { backend: BackendKind, needs: &'static str, got: VertexKind },
    #[error("invalid time: {0}")]
    InvalidTime(String),
    #[error("assembled Hamiltonian is not Hermitian (defect {0:.3e}); discretization bug")]
    NonHermitianDiscretization(f64),
    #[error("cn-general requires a positive time step, got {0}")]
    InvalidTimeStep(f64),
    #[error(transparent)]
    Vertex(#[from] VertexError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    DirichletSpectral,
    KirchhoffKernel,
    CnGeneral,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BackendKind::DirichletSpectral => "dirichlet-spectral",
            BackendKind::KirchhoffKernel => "kirchhoff-kernel",
            BackendKind::CnGeneral => "cn-general",
        };
        f.write_str(s)
    }
}

/// Free spectral step on the `2L` ring: multiply mode `k` by
/// `e^{-it·ω_k²}`, `ω_k = π·min(k, 2m−k)/L`. `buf` has length `2m`.
fn ring_evolve(buf: &mut [Complex64], t: f64, edge_length: f64) {
    let two_m = buf.len();
    fft_forward(two_m).process(buf);
    let base = std::f64::consts::PI / edge_length;
    for (k, v) in buf.iter_mut().enumerate() {
        let idx = k.min(two_m - k);
        let omega = base * idx as f64;
        *v *= Complex64::from_polar(1.0, -t * omega * omega);
    }
    // Inverse transform via conjugation: F^{-1}x = conj(F(conj x))/N.
    for v in buf.iter_mut() {
        *v = v.conj();
    }
    fft_forward(two_m).process(buf);
    let scale = 1.0 / two_m as f64;
    for v in buf.iter_mut() {
        *v = v.conj() * scale;
    }
}

/// Evolve one edge row under the half-line Dirichlet flow (odd extension).
fn dirichlet_edge_evolve(row: &[Complex64], t: f64, edge_length: f64) -> Vec<Complex64> {
    let m = row.len() - 1;
    let mut buf = vec![Complex64::new(0.0, 0.0); 2 * m];
    for j in 1..m {
        buf[j] = row[j];
        buf[2 * m - j] = -row[j];
    }
    ring_evolve(&mut buf, t, edge_length);
    let mut out = vec![Complex64::new(0.0, 0.0); m + 1];
    out[1..m].copy_from_slice(&buf[1..m]);
    // The odd symmetry pins the vertex and wall samples exactly.
    out
}

/// Evolve one edge row under the half-line Neumann flow (even extension).
fn neumann_edge_evolve(row: &[Complex64], t: f64, edge_length: f64) -> Vec<Complex64> {
    let m = row.len() - 1;
    let mut buf = vec![Complex64::new(0.0, 0.0); 2 * m];
    buf[..=m].copy_from_slice(&row[..=m]);
    for j in 1..m {
        buf[2 * m - j] = row[j];
    }
    ring_evolve(&mut buf, t, edge_length);
    buf[..=m].to_vec()
}

/// `e^{itΔ_D}φ` per edge (any real `t`). Warns when `φ` is not
/// Dirichlet-compatible: the odd extension silently pins `φ(0)` to zero.
pub fn dirichlet_propagate(t: f64, phi: &GraphFunction) -> GraphFunction {
    let graph = *phi.graph();
    let sup = phi.sup_norm();
    let mut out = GraphFunction::zeros(graph);
    for j in 0..graph.n_edges() {
        let row: Vec<Complex64> = phi.edge(j).to_vec();
        if sup > 0.0 && row[0].norm() > 1e-6 * sup {
            log::warn!(
                "dirichlet_propagate: edge {j} vertex value |φ(0)| = {:.3e} is projected to 0",
                row[0].norm()
            );
        }
        let evolved = dirichlet_edge_evolve(&row, t, graph.edge_length());
        out.edge_mut(j).iter_mut().zip(evolved).for_each(|(o, v)| *o = v);
    }
    out
}

/// `e^{itΔ_K}φ`: deviations from the vertex mean evolve as Dirichlet
/// half-lines, the mean as a Neumann half-line (any real `t`).
pub fn kirchhoff_propagate(t: f64, phi: &GraphFunction) -> GraphFunction {
    let graph = *phi.graph();
    let n = graph.n_edges();
    let nodes = graph.n_nodes();
    let mut mean = vec![Complex64::new(0.0, 0.0); nodes];
    for j in 0..n {
        for (k, v) in phi.edge(j).iter().enumerate() {
            mean[k] += v;
        }
    }
    let inv_n = Complex64::new(1.0 / n as f64, 0.0);
    for v in mean.iter_mut() {
        *v *= inv_n;
    }
    let mean_evolved = neumann_edge_evolve(&mean, t, graph.edge_length());

    let mut out = GraphFunction::zeros(graph);
    for j in 0..n {
        let dev: Vec<Complex64> =
            phi.edge(j).iter().zip(mean.iter()).map(|(v, m)| v - m).collect();
        let dev_evolved = dirichlet_edge_evolve(&dev, t, graph.edge_length());
        out.edge_mut(j)
            .iter_mut()
            .zip(dev_evolved.iter().zip(mean_evolved.iter()))
            .for_each(|(o, (d, m))| *o = d + m);
    }
    out
}

/// Method-of-images quadrature of the Dirichlet kernel,
/// `w(t,x) = (4πit)^{-1/2} ∫₀^L (e^{i(x−y)²/4t} − e^{i(x+y)²/4t}) φ(y) dy`.
///
/// O(m²) per edge; kept as an independent oracle for `t ≥ 1`.
pub fn dirichlet_image_kernel(t: f64, phi: &GraphFunction) -> Result<GraphFunction, PropagatorError> {
    if !(t >= 1.0) {
        return Err(PropagatorError::InvalidTime(format!(
            "image-kernel oracle is restricted to t >= 1, got {t}"
        )));
    }
    let graph = *phi.graph();
    let m = graph.points_per_edge();
    let h = graph.spacing();
    // (4πit)^{-1/2} = e^{-iπ/4} / (2√(πt)).
    let pref = Complex64::from_polar(
        0.5 / (std::f64::consts::PI * t).sqrt(),
        -std::f64::consts::FRAC_PI_4,
    );
    let quarter_t = 1.0 / (4.0 * t);
    let mut out = GraphFunction::zeros(graph);
    for j in 0..graph.n_edges() {
        let row: Vec<Complex64> = phi.edge(j).to_vec();
        let mut edge = out.edge_mut(j);
        for a in 0..=m {
            let x = graph.node(a);
            let mut acc = Complex64::new(0.0, 0.0);
            for (b, v) in row.iter().enumerate() {
                let y = graph.node(b);
                let km = Complex64::from_polar(1.0, (x - y) * (x - y) * quarter_t);
                let kp = Complex64::from_polar(1.0, (x + y) * (x + y) * quarter_t);
                acc += trapezoid_weight(b, m) * (km - kp) * v;
            }
            edge[a] = pref * acc * h;
        }
    }
    Ok(out)
}

/// `∂_x w_j(t, 0+)` for `w = e^{itΔ_D}φ`, from the closed quadrature formula
/// `2(4πit)^{-1/2} ∫₀^∞ e^{iy²/4t} φ'(y) dy` (`φ'` by centered differences).
pub fn boundary_flux(phi: &GraphFunction, t: f64, j: usize) -> Result<Complex64, PropagatorError> {
    if !(t >= 1.0) {
        return Err(PropagatorError::InvalidTime(format!(
            "boundary flux is defined for t >= 1, got {t}"
        )));
    }
    if j >= phi.graph().n_edges() {
        return Err(GraphError::EdgeOutOfRange(j).into());
    }
    let graph = *phi.graph();
    let m = graph.points_per_edge();
    let h = graph.spacing();
    let deriv = derivative_row(&phi.edge(j).to_vec(), h);
    let quarter_t = 1.0 / (4.0 * t);
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, d) in deriv.iter().enumerate() {
        let y = graph.node(k);
        acc += trapezoid_weight(k, m) * Complex64::from_polar(1.0, y * y * quarter_t) * d;
    }
    // 2(4πit)^{-1/2} = e^{-iπ/4}/√(πt).
    let pref =
        Complex64::from_polar(1.0 / (std::f64::consts::PI * t).sqrt(), -std::f64::consts::FRAC_PI_4);
    Ok(pref * acc * h)
}

/// Centered differences inside, second-order one-sided at the ends.
pub(crate) fn derivative_row(row: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = row.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let inv2h = 1.0 / (2.0 * h);
    out[0] = (-3.0 * row[0] + 4.0 * row[1] - row[2]) * inv2h;
    for k in 1..n - 1 {
        out[k] = (row[k + 1] - row[k - 1]) * inv2h;
    }
    out[n - 1] = (3.0 * row[n - 1] - 4.0 * row[n - 2] + row[n - 3]) * inv2h;
    out
}

/// `‖A u(0) + B u'(0+)‖` with the second-order one-sided derivative stencil;
/// O(h²) on states evolved by a consistent scheme.
pub fn vertex_condition_residual(vc: &VertexCondition, u: &GraphFunction) -> f64 {
    let n = u.graph().n_edges();
    let h = u.graph().spacing();
    let inv2h = 1.0 / (2.0 * h);
    let f0 = nalgebra::DVector::from_iterator(n, (0..n).map(|j| u.edge(j)[0]));
    let f1 = nalgebra::DVector::from_iterator(
        n,
        (0..n).map(|j| {
            let e = u.edge(j);
            (-3.0 * e[0] + 4.0 * e[1] - e[2]) * inv2h
        }),
    );
    (vc.a() * f0 + vc.b() * f1).norm()
}

/// Crank–Nicolson propagator for a general admissible vertex condition.
///
/// State layout per edge: nodes `1..m-1` are interior unknowns, node `m` is
/// the Dirichlet wall, and the vertex samples live in the Robin subspace
/// `u(0) = Q b` of the condition's [`BoundaryForm`]. One step solves
/// `(I + i·dt/2·H) u⁺ = (I − i·dt/2·H) u` with the bordered-tridiagonal
/// structure eliminated through a d×d Schur complement (d ≤ n).
pub struct CnPropagator {
    graph: StarGraph,
    vc: VertexCondition,
    dt: f64,
    form: BoundaryForm,
    /// iθ/h² with θ = dt/2.
    coupling: Complex64,
    /// Thomas forward-elimination data for the implicit tridiagonal.
    cprime: Vec<Complex64>,
    denom_inv: Vec<Complex64>,
    /// T⁻¹ e₁ (response of an interior chain to a unit vertex sample).
    z: Vec<Complex64>,
    /// LU factorization of the Schur block.
    schur: Option<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl CnPropagator {
    pub fn new(vc: &VertexCondition, graph: StarGraph, dt: f64) -> Result<Self, PropagatorError> {
        if !(dt > 0.0) {
            return Err(PropagatorError::InvalidTimeStep(dt));
        }
        if vc.n() != graph.n_edges() {
            return Err(PropagatorError::Vertex(VertexError::BadShape(format!(
                "condition has n = {}, graph has {} edges",
                vc.n(),
                graph.n_edges()
            ))));
        }
        let form = vc.boundary_form()?;
        let theta = 0.5 * dt;
        let h = graph.spacing();
        let coupling = Complex64::new(0.0, theta / (h * h));
        let m = graph.points_per_edge();
        let interior = m - 1;

        // Thomas factorization of T = tridiag(-c, 1+2c, -c), c = iθ/h².
        let diag = Complex64::new(1.0, 0.0) + 2.0 * coupling;
        let off = -coupling;
        let mut cprime = vec![Complex64::new(0.0, 0.0); interior];
        let mut denom_inv = vec![Complex64::new(0.0, 0.0); interior];
        let mut denom = diag;
        denom_inv[0] = 1.0 / denom;
        cprime[0] = off * denom_inv[0];
        for k in 1..interior {
            denom = diag - off * cprime[k - 1];
            denom_inv[k] = 1.0 / denom;
            cprime[k] = off * denom_inv[k];
        }

        let mut this = Self {
            graph,
            vc: vc.clone(),
            dt,
            form,
            coupling,
            cprime,
            denom_inv,
            z: Vec::new(),
            schur: None,
        };

        let mut e1 = vec![Complex64::new(0.0, 0.0); interior];
        e1[0] = Complex64::new(1.0, 0.0);
        this.z = this.thomas_solve(&e1);

        let d = this.form.robin_dim();
        if d > 0 {
            let theta_c = Complex64::new(0.0, theta);
            // M_b = (1 + 2iθ/h²) I + (2iθ/h) Λ, S = M_b + 2θ²/h⁴ · z₁ I.
            let mut s = &this.form.robin_coupling * (2.0 * theta_c / h);
            let shift = Complex64::new(1.0, 0.0)
                + 2.0 * coupling
                + 2.0 * (theta / (h * h)).powi(2) * this.z[0];
            for i in 0..d {
                s[(i, i)] += shift;
            }
            this.schur = Some(s.lu());
        }

        // On small grids, verify Hermiticity of the assembled Hamiltonian in
        // the weighted inner product outright.
        if graph.n_edges() * graph.n_nodes() <= 600 {
            let defect = this.hermitian_defect();
            if defect > 1e-8 {
                return Err(PropagatorError::NonHermitianDiscretization(defect));
            }
        }

        Ok(this)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn vertex_condition(&self) -> &VertexCondition {
        &self.vc
    }

    fn thomas_solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let n = rhs.len();
        let off = -self.coupling;
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        x[0] = rhs[0] * self.denom_inv[0];
        for k in 1..n {
            x[k] = (rhs[k] - off * x[k - 1]) * self.denom_inv[k];
        }
        for k in (0..n - 1).rev() {
            x[k] = x[k] - self.cprime[k] * x[k + 1];
        }
        x
    }

    /// Apply `H` to the state `(v, b)`; returns interior rows and b-part.
    fn apply_h(
        &self,
        v: &[Vec<Complex64>],
        b: &nalgebra::DVector<Complex64>,
    ) -> (Vec<Vec<Complex64>>, nalgebra::DVector<Complex64>) {
        let n = self.graph.n_edges();
        let h = self.graph.spacing();
        let inv_h2 = 1.0 / (h * h);
        let u0 = &self.form.robin_basis * b;
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let vj = &v[j];
            let interior = vj.len();
            let mut row = vec![Complex64::new(0.0, 0.0); interior];
            for k in 0..interior {
                let left = if k == 0 { u0[j] } else { vj[k - 1] };
                let right = if k + 1 < interior { vj[k + 1] } else { Complex64::new(0.0, 0.0) };
                row[k] = -(left - 2.0 * vj[k] + right) * inv_h2;
            }
            out.push(row);
        }
        let d = self.form.robin_dim();
        let hb = if d == 0 {
            nalgebra::DVector::zeros(0)
        } else {
            let v1 = nalgebra::DVector::from_iterator(n, (0..n).map(|j| v[j][0]));
            let qh_v1 = self.form.robin_basis.adjoint() * v1;
            (b - &qh_v1) * Complex64::new(2.0 * inv_h2, 0.0)
                + &self.form.robin_coupling * b * Complex64::new(2.0 / h, 0.0)
        };
        (out, hb)
    }

    /// One Crank–Nicolson step.
    pub fn step(&self, u: &GraphFunction) -> GraphFunction {
        let n = self.graph.n_edges();
        let m = self.graph.points_per_edge();
        let theta_i = self.coupling * Complex64::new(self.graph.spacing().powi(2), 0.0); // iθ

        // Split the state; vertex samples are projected onto the admissible
        // subspace.
        let v: Vec<Vec<Complex64>> = (0..n).map(|j| u.edge(j).to_vec()[1..m].to_vec()).collect();
        let d = self.form.robin_dim();
        let b = if d == 0 {
            nalgebra::DVector::zeros(0)
        } else {
            let u0 = nalgebra::DVector::from_iterator(n, (0..n).map(|j| u.edge(j)[0]));
            self.form.robin_basis.adjoint() * u0
        };

        // rhs = (I - iθH) u.
        let (hv, hb) = self.apply_h(&v, &b);
        let rhs_v: Vec<Vec<Complex64>> = v
            .iter()
            .zip(hv.iter())
            .map(|(vj, hj)| vj.iter().zip(hj).map(|(a, c)| a - theta_i * c).collect())
            .collect();
        let rhs_b = &b - &hb * theta_i;

        // Interior pre-solves y = T⁻¹ rhs.
        let y: Vec<Vec<Complex64>> = rhs_v.iter().map(|r| self.thomas_solve(r)).collect();

        // Schur solve for the new vertex coordinates.
        let inv_h2 = 1.0 / self.graph.spacing().powi(2);
        let b_new = if d == 0 {
            nalgebra::DVector::zeros(0)
        } else {
            let y1 = nalgebra::DVector::from_iterator(n, (0..n).map(|j| y[j][0]));
            let rhs_s = rhs_b + self.form.robin_basis.adjoint() * y1 * (2.0 * theta_i * inv_h2);
            self.schur.as_ref().unwrap().solve(&rhs_s).expect("Schur block is invertible")
        };

        // Back-substitute the vertex coupling into the interiors.
        let u0_new = &self.form.robin_basis * &b_new;
        let mut out = GraphFunction::zeros(self.graph);
        for j in 0..n {
            let corr = self.coupling * u0_new[j];
            let mut edge = out.edge_mut(j);
            edge[0] = u0_new[j];
            for k in 0..m - 1 {
                edge[k + 1] = y[j][k] + corr * self.z[k];
            }
        }
        out
    }

    /// Compose `round(t/dt)` steps; `t` must be an integer multiple of `dt`.
    pub fn evolve(&self, u: &GraphFunction, t: f64) -> Result<GraphFunction, PropagatorError> {
        let steps_f = t / self.dt;
        let steps = steps_f.round();
        if steps < 0.0 || (steps_f - steps).abs() > 1e-9 * steps_f.abs().max(1.0) {
            return Err(PropagatorError::InvalidTime(format!(
                "t = {t} is not a nonnegative multiple of dt = {}",
                self.dt
            )));
        }
        let mut state = u.clone();
        for _ in 0..steps as u64 {
            state = self.step(&state);
        }
        Ok(state)
    }

    /// Max-abs Hermiticity defect of the dense assembled Hamiltonian in the
    /// weighted (trapezoid) inner product. O((nm)²·nm) — small grids only.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.graph.n_edges();
        let m = self.graph.points_per_edge();
        let interior = m - 1;
        let d = self.form.robin_dim();
        let dim = n * interior + d;
        let mut hmat = CMat::zeros(dim, dim);
        for col in 0..dim {
            let mut v = vec![vec![Complex64::new(0.0, 0.0); interior]; n];
            let mut b = nalgebra::DVector::zeros(d);
            if col < n * interior {
                v[col / interior][col % interior] = Complex64::new(1.0, 0.0);
            } else {
                b[col - n * interior] = Complex64::new(1.0, 0.0);
            }
            let (hv, hb) = self.apply_h(&v, &b);
            for j in 0..n {
                for k in 0..interior {
                    hmat[(j * interior + k, col)] = hv[j][k];
                }
            }
            for i in 0..d {
                hmat[(n * interior + i, col)] = hb[i];
            }
        }
        // Weighted Hermiticity: W H = (W H)^*, interior weight 1, vertex ½.
        let mut wh = hmat;
        for i in 0..d {
            for col in 0..dim {
                wh[(n * interior + i, col)] *= Complex64::new(0.5, 0.0);
            }
        }
        let defect = &wh - wh.adjoint();
        defect.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Backend-tagged linear propagator with a uniform `propagate` surface.
pub enum LinearPropagator {
    DirichletSpectral { graph: StarGraph },
    KirchhoffKernel { graph: StarGraph },
    CnGeneral(Box<CnPropagator>),
}

impl LinearPropagator {
    /// `dt` is required (and only used) by the `cn-general` backend.
    pub fn new(
        backend: BackendKind,
        vc: &VertexCondition,
        graph: StarGraph,
        dt: Option<f64>,
    ) -> Result<Self, PropagatorError> {
        match backend {
            BackendKind::DirichletSpectral => {
                if vc.kind() != VertexKind::Dirichlet {
                    return Err(PropagatorError::BackendMismatch {
                        backend,
                        needs: "dirichlet",
                        got: vc.kind(),
                    });
                }
                Ok(Self::DirichletSpectral { graph })
            }
            BackendKind::KirchhoffKernel => {
                if vc.kind() != VertexKind::Kirchhoff {
                    return Err(PropagatorError::BackendMismatch {
                        backend,
                        needs: "kirchhoff",
                        got: vc.kind(),
                    });
                }
                Ok(Self::KirchhoffKernel { graph })
            }
            BackendKind::CnGeneral => {
                let dt = dt.ok_or(PropagatorError::InvalidTimeStep(0.0))?;
                Ok(Self::CnGeneral(Box::new(CnPropagator::new(vc, graph, dt)?)))
            }
        }
    }

    pub fn backend(&self) -> BackendKind {
        match self {
            Self::DirichletSpectral { .. } => BackendKind::DirichletSpectral,
            Self::KirchhoffKernel { .. } => BackendKind::KirchhoffKernel,
            Self::CnGeneral(_) => BackendKind::CnGeneral,
        }
    }

    pub fn propagate(&self, u: &GraphFunction, t: f64) -> Result<GraphFunction, PropagatorError> {
        match self {
            Self::DirichletSpectral { .. } => Ok(dirichlet_propagate(t, u)),
            Self::KirchhoffKernel { .. } => Ok(kirchhoff_propagate(t, u)),
            Self::CnGeneral(cn) => cn.evolve(u, t),
        }
    }

    /// One step of size `dt` for the split-step driver; spectral backends
    /// evolve exactly by `dt`.
    pub fn step(&self, u: &GraphFunction, dt: f64) -> Result<GraphFunction, PropagatorError> {
        match self {
            Self::DirichletSpectral { .. } => Ok(dirichlet_propagate(dt, u)),
            Self::KirchhoffKernel { .. } => Ok(kirchhoff_propagate(dt, u)),
            Self::CnGeneral(cn) => {
                if (dt - cn.dt()).abs() > 1e-12 * cn.dt() {
                    return Err(PropagatorError::InvalidTime(format!(
                        "cn-general step size is fixed at construction ({}), got {dt}",
                        cn.dt()
                    )));
                }
                Ok(cn.step(u))
            }
        }
    }
}
