//! Split-step integration of `i∂ₜu + Δ_M u + λ|u|^p u = 0`.
//!
//! Strang composition per step: half nonlinear phase, full linear step
//! through the chosen backend, half nonlinear phase. The nonlinear substep is
//! the exact flow of `i∂ₜu + λ|u|^p u = 0` (the modulus is pointwise
//! conserved, so it is a pure phase rotation) — for `p < 1` this sidesteps the
//! non-Lipschitz nonlinearity entirely. Every substep conserves the discrete
//! mass exactly, so the composed scheme inherits conservation to roundoff.
//!
//! A trajectory carries its monitors: mass and escape-guard series at the
//! snapshot times, a windowed `L⁴(window; L^∞)` Strichartz series, the dense
//! vertex trace `u_j(t, 0+)` at every step (needed by the pairing audit), and
//! the running weak-formula residual against a fixed test function.

use crate::graph::{GraphError, GraphFunction, Preset, StarGraph};
use crate::propagators::{BackendKind, LinearPropagator, PropagatorError};
use crate::vertex::{VertexCondition, VertexConditionRecord, VertexError};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("escape guard violated at t = {t}: near-wall mass fraction {fraction:.3e} (run flagged invalid)")]
    EscapeGuardViolation { t: f64, fraction: f64, partial: Box<Trajectory> },
    #[error("non-finite field detected at t = {0}")]
    NanDetected(f64),
    #[error("no snapshot recorded at t = {0}")]
    MissingSnapshot(f64),
    #[error("test function violates the boundary condition: |φ(0)| = {0:.3e}")]
    TestFunctionBoundary(f64),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error(transparent)]
    Vertex(#[from] VertexError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Nonlinearity {
    /// Purely linear evolution (the splitting degenerates to the backend).
    Off,
    /// `λ|u|^p u` with `λ = ±1`.
    Power { p: f64, lambda: f64 },
}

#[derive(Clone, Debug)]
pub struct EvolutionConfig {
    pub nonlinearity: Nonlinearity,
    pub dt: f64,
    pub t_end: f64,
    pub vc: VertexCondition,
    pub backend: BackendKind,
    /// Increasing snapshot times; each must sit on a step boundary.
    pub snapshot_times: Vec<f64>,
    /// Fixed bounded offset profile (the solitary-wave allowance); used only
    /// by diagnostics, never by the evolution.
    pub offset_profile: Option<GraphFunction>,
    /// Window length of the `L⁴(window; L^∞)` monitor.
    pub strichartz_window: f64,
}

impl EvolutionConfig {
    pub fn new(vc: VertexCondition, backend: BackendKind, nonlinearity: Nonlinearity) -> Self {
        Self {
            nonlinearity,
            dt: 5e-3,
            t_end: 10.0,
            vc,
            backend,
            snapshot_times: Vec::new(),
            offset_profile: None,
            strichartz_window: 0.5,
        }
    }

    /// Snapshots every `interval` from 0 through `t_end`.
    pub fn with_snapshot_interval(mut self, interval: f64) -> Self {
        let mut t = 0.0;
        self.snapshot_times.clear();
        while t <= self.t_end + 1e-12 {
            self.snapshot_times.push(t.min(self.t_end));
            t += interval;
        }
        self
    }

    pub fn validate(&self, graph: &StarGraph) -> Result<(), SolverError> {
        if !(self.dt > 0.0) || self.dt > 1e-2 + 1e-15 {
            return Err(SolverError::InvalidConfig(format!(
                "dt = {} outside (0, 1e-2]",
                self.dt
            )));
        }
        if !(self.t_end > 0.0) {
            return Err(SolverError::InvalidConfig(format!("t_end = {} must be positive", self.t_end)));
        }
        if let Nonlinearity::Power { p, lambda } = self.nonlinearity {
            if !(p > 0.0 && p <= 4.0) {
                return Err(SolverError::InvalidConfig(format!("p = {p} outside (0, 4]")));
            }
            if lambda != 1.0 && lambda != -1.0 {
                return Err(SolverError::InvalidConfig(format!("lambda = {lambda}, need ±1")));
            }
        }
        let mut prev = -1.0;
        for &t in &self.snapshot_times {
            if t < 0.0 || t > self.t_end + 1e-9 {
                return Err(SolverError::InvalidConfig(format!("snapshot time {t} outside [0, t_end]")));
            }
            if t <= prev {
                return Err(SolverError::InvalidConfig("snapshot times must increase".into()));
            }
            let steps = t / self.dt;
            if (steps - steps.round()).abs() > 1e-6 {
                return Err(SolverError::InvalidConfig(format!(
                    "snapshot time {t} is not a step boundary of dt = {}",
                    self.dt
                )));
            }
            prev = t;
        }
        if self.vc.n() != graph.n_edges() {
            return Err(SolverError::InvalidConfig(format!(
                "vertex condition has n = {}, graph has {} edges",
                self.vc.n(),
                graph.n_edges()
            )));
        }
        if let Some(l) = &self.offset_profile {
            if l.graph() != graph {
                return Err(SolverError::InvalidConfig("offset profile lives on a different graph".into()));
            }
            if !l.is_finite() {
                return Err(SolverError::InvalidConfig("offset profile has non-finite samples".into()));
            }
            // The offset is required to be L² ∩ L^q for some q < 2; check a
            // representative q.
            let _ = l.lp_norm(1.5)?;
        }
        if !(self.strichartz_window > 0.0) {
            return Err(SolverError::InvalidConfig("strichartz window must be positive".into()));
        }
        Ok(())
    }
}

/// Serializable echo of the configuration (for trajectory export).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub nonlinearity: Nonlinearity,
    pub dt: f64,
    pub t_end: f64,
    pub vertex: VertexConditionRecord,
    pub backend: BackendKind,
    pub n_edges: usize,
    pub edge_length: f64,
    pub points_per_edge: usize,
    pub strichartz_window: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub graph: StarGraph,
    pub nonlinearity: Nonlinearity,
    pub dt: f64,
    pub backend: BackendKind,
    pub vc: VertexCondition,
    pub snapshots: Vec<(f64, GraphFunction)>,
    /// (t, ‖u(t)‖₂) at snapshot times.
    pub mass: Vec<(f64, f64)>,
    /// (window start, ‖u‖_{L⁴(window; L^∞)}).
    pub strichartz: Vec<(f64, f64)>,
    /// (t, near-wall mass fraction) at snapshot times.
    pub escape: Vec<(f64, f64)>,
    /// (t, weak-formula residual over [0, t]) at snapshot times.
    pub weak_residual_series: Vec<(f64, f64)>,
    /// Vertex samples u_j(k·dt, 0+), one row per step.
    pub vertex_trace: Vec<Vec<Complex64>>,
    /// ‖u(k·dt)‖_∞ per step.
    pub sup_trace: Vec<f64>,
    pub initial_mass: f64,
    pub offset_profile: Option<GraphFunction>,
    pub valid: bool,
}

impl Trajectory {
    pub fn snapshot_at(&self, t: f64) -> Result<&GraphFunction, SolverError> {
        self.snapshots
            .iter()
            .find(|(s, _)| (s - t).abs() <= self.dt * 0.5 + 1e-12)
            .map(|(_, u)| u)
            .ok_or(SolverError::MissingSnapshot(t))
    }

    /// Vertex trace `u_j(t, 0+)` linearly interpolated on the step grid.
    pub fn vertex_value(&self, j: usize, t: f64) -> Complex64 {
        let s = (t / self.dt).clamp(0.0, (self.vertex_trace.len() - 1) as f64);
        let k = s.floor() as usize;
        if k + 1 >= self.vertex_trace.len() {
            return self.vertex_trace[self.vertex_trace.len() - 1][j];
        }
        let w = s - k as f64;
        self.vertex_trace[k][j] * (1.0 - w) + self.vertex_trace[k + 1][j] * w
    }

    /// Max relative deviation of the mass series from the initial mass.
    pub fn mass_drift(&self) -> f64 {
        self.mass
            .iter()
            .map(|(_, m)| (m - self.initial_mass).abs())
            .fold(0.0, f64::max)
            / self.initial_mass.max(f64::MIN_POSITIVE)
    }

    pub fn config_record(&self) -> ConfigRecord {
        ConfigRecord {
            nonlinearity: self.nonlinearity,
            dt: self.dt,
            t_end: self.snapshots.last().map_or(0.0, |(t, _)| *t),
            vertex: self.vc.to_record(),
            backend: self.backend,
            n_edges: self.graph.n_edges(),
            edge_length: self.graph.edge_length(),
            points_per_edge: self.graph.points_per_edge(),
            strichartz_window: 0.0,
        }
    }

    /// Export: config record, snapshot files, monitors as columnar text.
    pub fn export(&self, dir: &Path) -> Result<(), SolverError> {
        std::fs::create_dir_all(dir.join("snapshots")).map_err(GraphError::Io)?;
        let cfg = serde_json::to_string_pretty(&self.config_record())
            .expect("config record serializes");
        std::fs::write(dir.join("config.json"), cfg).map_err(GraphError::Io)?;
        for (idx, (t, u)) in self.snapshots.iter().enumerate() {
            let mut f = std::fs::File::create(
                dir.join("snapshots").join(format!("snap_{idx:05}_t{t:.3}.txt")),
            )
            .map_err(GraphError::Io)?;
            u.write_columnar(&mut f)?;
        }
        let mut mon = std::fs::File::create(dir.join("monitors.txt")).map_err(GraphError::Io)?;
        writeln!(mon, "t mass strichartz_window escape weak_residual").map_err(GraphError::Io)?;
        for (idx, (t, m)) in self.mass.iter().enumerate() {
            let s = self
                .strichartz
                .iter()
                .rev()
                .find(|(w, _)| w + 1e-12 <= *t)
                .map_or(0.0, |(_, v)| *v);
            let e = self.escape[idx].1;
            let w = self.weak_residual_series[idx].1;
            writeln!(mon, "{t:.6e} {m:.16e} {s:.16e} {e:.16e} {w:.16e}").map_err(GraphError::Io)?;
        }
        Ok(())
    }
}

/// Exact flow of `i∂ₜu + λ|u|^p u = 0` over `dt`: the pointwise phase
/// rotation `u ← e^{iλ|u|^p dt} u`. At `u = 0` the phase is 1 (the
/// well-defined limit for p > 0).
pub fn nonlinear_step(u: &GraphFunction, dt: f64, lambda: f64, p: f64) -> GraphFunction {
    let mut out = u.clone();
    apply_nonlinear_phase(&mut out, dt, lambda, p);
    out
}

fn modulus_power(norm_sqr: f64, p: f64) -> f64 {
    // |u|^p from |u|²; fast paths for the exponents the experiments use.
    if p == 0.5 {
        norm_sqr.sqrt().sqrt()
    } else if p == 1.0 {
        norm_sqr.sqrt()
    } else if p == 2.0 {
        norm_sqr
    } else if p == 3.0 {
        norm_sqr * norm_sqr.sqrt()
    } else {
        norm_sqr.powf(0.5 * p)
    }
}

fn apply_nonlinear_phase(u: &mut GraphFunction, dt: f64, lambda: f64, p: f64) {
    for v in u.values_mut().iter_mut() {
        let ns = v.norm_sqr();
        if ns > 0.0 {
            *v *= Complex64::from_polar(1.0, lambda * modulus_power(ns, p) * dt);
        }
    }
}

/// Integrate the configuration from `u0`, recording snapshots and monitors.
pub fn evolve(config: &EvolutionConfig, u0: &GraphFunction) -> Result<Trajectory, SolverError> {
    let graph = *u0.graph();
    config.validate(&graph)?;
    let propagator = LinearPropagator::new(config.backend, &config.vc, graph, Some(config.dt))?;
    let n_steps = (config.t_end / config.dt).round() as u64;
    if ((config.t_end / config.dt) - n_steps as f64).abs() > 1e-6 {
        return Err(SolverError::InvalidConfig(format!(
            "t_end = {} is not a multiple of dt = {}",
            config.t_end, config.dt
        )));
    }

    // Monitor test function for the running weak-formula residual.
    let monitor_phi = sample_monitor_phi(graph);
    let mut weak = WeakResidualAccumulator::new(&monitor_phi, 0, config.nonlinearity)?;

    let mut traj = Trajectory {
        graph,
        nonlinearity: config.nonlinearity,
        dt: config.dt,
        backend: config.backend,
        vc: config.vc.clone(),
        snapshots: Vec::new(),
        mass: Vec::new(),
        strichartz: Vec::new(),
        escape: Vec::new(),
        weak_residual_series: Vec::new(),
        vertex_trace: Vec::with_capacity(n_steps as usize + 1),
        sup_trace: Vec::with_capacity(n_steps as usize + 1),
        initial_mass: u0.l2_norm(),
        offset_profile: config.offset_profile.clone(),
        valid: true,
    };

    let snapshot_steps: Vec<u64> = config
        .snapshot_times
        .iter()
        .map(|t| (t / config.dt).round() as u64)
        .collect();

    let mut u = u0.clone();
    let mut window_acc = 0.0_f64;
    let mut window_start = 0.0_f64;
    let window_len = config.strichartz_window;

    let record_state =
        |traj: &mut Trajectory, weak: &mut WeakResidualAccumulator, u: &GraphFunction, step: u64, t: f64|
         -> Result<(), SolverError> {
            let sup = u.sup_norm();
            if !sup.is_finite() {
                return Err(SolverError::NanDetected(t));
            }
            traj.sup_trace.push(sup);
            traj.vertex_trace.push((0..graph.n_edges()).map(|j| u.edge(j)[0]).collect());
            weak.step(u, t)?;
            if snapshot_steps.contains(&step) {
                traj.mass.push((t, u.l2_norm()));
                let esc = u.wall_mass_fraction(5);
                traj.escape.push((t, esc));
                traj.weak_residual_series.push((t, weak.residual(u, t)?));
                traj.snapshots.push((t, u.clone()));
                if esc > 1e-6 {
                    return Err(SolverError::EscapeGuardViolation {
                        t,
                        fraction: esc,
                        partial: Box::new(Trajectory { valid: false, ..traj.clone() }),
                    });
                }
            }
            Ok(())
        };

    record_state(&mut traj, &mut weak, &u, 0, 0.0)?;

    for step in 1..=n_steps {
        match config.nonlinearity {
            Nonlinearity::Off => {
                u = propagator.step(&u, config.dt)?;
            }
            Nonlinearity::Power { p, lambda } => {
                apply_nonlinear_phase(&mut u, 0.5 * config.dt, lambda, p);
                u = propagator.step(&u, config.dt)?;
                apply_nonlinear_phase(&mut u, 0.5 * config.dt, lambda, p);
            }
        }
        let t = step as f64 * config.dt;

        // Strichartz window bookkeeping (rectangle rule over steps).
        window_acc += traj.sup_trace.last().unwrap().powi(4) * config.dt;
        if t + 1e-12 >= window_start + window_len || step == n_steps {
            traj.strichartz.push((window_start, window_acc.powf(0.25)));
            window_acc = 0.0;
            window_start = t;
        }

        record_state(&mut traj, &mut weak, &u, step, t)?;
    }

    Ok(traj)
}

fn sample_monitor_phi(graph: StarGraph) -> GraphFunction {
    let l = graph.edge_length();
    crate::graph::sample_function(
        graph,
        &Preset::GaussianBump {
            center: l / 4.0,
            width: l / 40.0,
            amplitude: 1.0,
            phase_velocity: 0.0,
            edges: Some(vec![0]),
            dirichlet: true,
        },
    )
    .expect("monitor preset is valid")
}

/// Incremental evaluation of the weak-formula defect
/// `|i⟨u(τ),φ⟩_j − i⟨u₀,φ⟩_j + ∫⟨u,φ''⟩_j + ∫u_j(t,0+)·conj(φ'(0+)) + λ∫⟨|u|^p u,φ⟩_j|`.
struct WeakResidualAccumulator {
    phi: GraphFunction,
    phi_second: GraphFunction,
    dphi0: Complex64,
    edge: usize,
    nonlinearity: Nonlinearity,
    first_term0: Option<Complex64>,
    cum_lap: Complex64,
    cum_boundary: Complex64,
    cum_nonlin: Complex64,
    prev: Option<(f64, Complex64, Complex64, Complex64)>,
}

impl WeakResidualAccumulator {
    fn new(
        phi: &GraphFunction,
        edge: usize,
        nonlinearity: Nonlinearity,
    ) -> Result<Self, SolverError> {
        let sup = phi.sup_norm();
        let v0 = phi.edge(edge)[0].norm();
        if sup > 0.0 && v0 > 1e-6 * sup {
            return Err(SolverError::TestFunctionBoundary(v0));
        }
        Ok(Self {
            phi: phi.clone(),
            phi_second: second_derivative(phi),
            dphi0: {
                let h = phi.graph().spacing();
                let e = phi.edge(edge);
                (-3.0 * e[0] + 4.0 * e[1] - e[2]) / Complex64::new(2.0 * h, 0.0)
            },
            edge,
            nonlinearity,
            first_term0: None,
            cum_lap: Complex64::new(0.0, 0.0),
            cum_boundary: Complex64::new(0.0, 0.0),
            cum_nonlin: Complex64::new(0.0, 0.0),
            prev: None,
        })
    }

    fn integrands(&self, u: &GraphFunction) -> Result<(Complex64, Complex64, Complex64), SolverError> {
        // Row-local evaluation: this runs every step of a long trajectory.
        let graph = u.graph();
        let m = graph.points_per_edge();
        let h = Complex64::new(graph.spacing(), 0.0);
        let urow = u.edge(self.edge);
        let mut lap = Complex64::new(0.0, 0.0);
        let mut nonlin = Complex64::new(0.0, 0.0);
        let phi_row = self.phi.edge(self.edge);
        let phi2_row = self.phi_second.edge(self.edge);
        for (k, uv) in urow.iter().enumerate() {
            let w = crate::graph::trapezoid_weight(k, m);
            lap += w * uv * phi2_row[k].conj();
            if let Nonlinearity::Power { p, lambda } = self.nonlinearity {
                let fu = lambda * modulus_power(uv.norm_sqr(), p) * uv;
                nonlin += w * fu * phi_row[k].conj();
            }
        }
        let boundary = urow[0] * self.dphi0.conj();
        Ok((lap * h, boundary, nonlin * h))
    }

    fn step(&mut self, u: &GraphFunction, t: f64) -> Result<(), SolverError> {
        let (lap, boundary, nonlin) = self.integrands(u)?;
        if let Some((tp, lp, bp, np)) = self.prev {
            let half = Complex64::new(0.5 * (t - tp), 0.0);
            self.cum_lap += half * (lap + lp);
            self.cum_boundary += half * (boundary + bp);
            self.cum_nonlin += half * (nonlin + np);
        } else {
            self.first_term0 = Some(u.edge_inner_product(&self.phi, self.edge)?);
        }
        self.prev = Some((t, lap, boundary, nonlin));
        Ok(())
    }

    fn residual(&self, u: &GraphFunction, _t: f64) -> Result<f64, SolverError> {
        let i = Complex64::i();
        let head = i * (u.edge_inner_product(&self.phi, self.edge)? - self.first_term0.unwrap());
        Ok((head + self.cum_lap + self.cum_boundary + self.cum_nonlin).norm())
    }
}

fn second_derivative(phi: &GraphFunction) -> GraphFunction {
    let graph = *phi.graph();
    let h2 = graph.spacing() * graph.spacing();
    let mut out = GraphFunction::zeros(graph);
    let m = graph.points_per_edge();
    for j in 0..graph.n_edges() {
        let row: Vec<Complex64> = phi.edge(j).to_vec();
        let mut edge = out.edge_mut(j);
        for k in 1..m {
            edge[k] = (row[k + 1] - 2.0 * row[k] + row[k - 1]) / h2;
        }
        edge[0] = (2.0 * row[0] - 5.0 * row[1] + 4.0 * row[2] - row[3]) / h2;
        edge[m] = (2.0 * row[m] - 5.0 * row[m - 1] + 4.0 * row[m - 2] - row[m - 3]) / h2;
    }
    out
}

/// Weak-formula residual of a completed trajectory against a caller-supplied
/// test function, on `[0, τ]`. Time integrals run over the snapshot grid
/// (except the boundary term, which uses the dense vertex trace).
pub fn weak_residual(
    traj: &Trajectory,
    phi: &GraphFunction,
    j: usize,
    tau: f64,
) -> Result<f64, SolverError> {
    let sup = phi.sup_norm();
    let v0 = phi.edge(j)[0].norm();
    if sup > 0.0 && v0 > 1e-6 * sup {
        return Err(SolverError::TestFunctionBoundary(v0));
    }
    let u_tau = traj.snapshot_at(tau)?;
    let u_0 = traj.snapshot_at(0.0)?;
    let phi_second = second_derivative(phi);
    let h = phi.graph().spacing();
    let e = phi.edge(j);
    let dphi0 = (-3.0 * e[0] + 4.0 * e[1] - e[2]) / Complex64::new(2.0 * h, 0.0);

    let i = Complex64::i();
    let head = i * (u_tau.edge_inner_product(phi, j)? - u_0.edge_inner_product(phi, j)?);

    // Snapshot-grid trapezoid for the Laplacian and nonlinear terms.
    let mut cum_lap = Complex64::new(0.0, 0.0);
    let mut cum_nonlin = Complex64::new(0.0, 0.0);
    let mut prev: Option<(f64, Complex64, Complex64)> = None;
    for (t, u) in traj.snapshots.iter().take_while(|(t, _)| *t <= tau + 1e-9) {
        let lap = u.edge_inner_product(&phi_second, j)?;
        let nonlin = match traj.nonlinearity {
            Nonlinearity::Off => Complex64::new(0.0, 0.0),
            Nonlinearity::Power { p, lambda } => {
                let mut fu = u.clone();
                for v in fu.values_mut().iter_mut() {
                    let ns = v.norm_sqr();
                    *v *= lambda * modulus_power(ns, p);
                }
                fu.edge_inner_product(phi, j)?
            }
        };
        if let Some((tp, lp, np)) = prev {
            let half = Complex64::new(0.5 * (t - tp), 0.0);
            cum_lap += half * (lap + lp);
            cum_nonlin += half * (nonlin + np);
        }
        prev = Some((*t, lap, nonlin));
    }

    // Dense trapezoid for the boundary term.
    let mut cum_boundary = Complex64::new(0.0, 0.0);
    let steps = (tau / traj.dt).round() as usize;
    for k in 0..steps {
        let a = traj.vertex_trace[k][j];
        let b = traj.vertex_trace[k + 1][j];
        cum_boundary += Complex64::new(0.5 * traj.dt, 0.0) * (a + b);
    }
    cum_boundary *= dphi0.conj();

    Ok((head + cum_lap + cum_boundary + cum_nonlin).norm())
}

/// Strichartz-admissible pair on the half-line scaling:
/// `2/q = 1/2 − 1/r`, `2 ≤ q, r ≤ ∞` (infinities handled by IEEE division).
pub fn admissible_pair_check(q: f64, r: f64) -> bool {
    if !(q >= 2.0) || !(r >= 2.0) {
        return false;
    }
    let lhs = 2.0 / q;
    let rhs = 0.5 - 1.0 / r;
    (lhs - rhs).abs() <= 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sample_function, Preset};
    use crate::propagators::dirichlet_propagate;
    use crate::vertex::VertexKind;
    use approx::assert_relative_eq;

    fn bump(graph: StarGraph, center: f64, width: f64) -> GraphFunction {
        sample_function(
            graph,
            &Preset::GaussianBump {
                center,
                width,
                amplitude: 1.0,
                phase_velocity: 0.0,
                edges: None,
                dirichlet: true,
            },
        )
        .unwrap()
    }

    fn dirichlet_config(nl: Nonlinearity) -> EvolutionConfig {
        let vc = VertexCondition::canonical(VertexKind::Dirichlet, 2, 0.0).unwrap();
        EvolutionConfig::new(vc, BackendKind::DirichletSpectral, nl)
    }

    #[test]
    fn nonlinear_step_is_a_pure_phase() {
        let graph = StarGraph::new(2, 40.0, 256).unwrap();
        let u = bump(graph, 15.0, 2.0);
        let stepped = nonlinear_step(&u, 0.3, 1.0, 0.5);
        for (a, b) in stepped.values().iter().zip(u.values().iter()) {
            assert_relative_eq!(a.norm(), b.norm(), epsilon = 1e-15);
        }
        let zero = GraphFunction::zeros(graph);
        assert_eq!(nonlinear_step(&zero, 0.3, 1.0, 0.5).sup_norm(), 0.0);

        // Constant-modulus data rotates by a global phase e^{iλc^p dt}.
        let c = 0.7_f64;
        let flat = GraphFunction::from_fn(graph, |_, _| Complex64::new(c, 0.0)).unwrap();
        let dt = 0.11;
        let p = 0.5;
        let out = nonlinear_step(&flat, dt, -1.0, p);
        let expect = Complex64::from_polar(c, -c.powf(p) * dt);
        for v in out.values().iter() {
            assert!((v - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn linear_limit_matches_backend_exactly() {
        let graph = StarGraph::new(2, 40.0, 512).unwrap();
        let u0 = bump(graph, 15.0, 2.0);
        let mut config = dirichlet_config(Nonlinearity::Off);
        config.t_end = 2.0;
        config.dt = 1e-2;
        config = config.with_snapshot_interval(1.0);
        let traj = evolve(&config, &u0).unwrap();
        let direct = dirichlet_propagate(2.0, &u0);
        let err = (traj.snapshot_at(2.0).unwrap() - &direct).l2_norm();
        assert!(err < 1e-11 * u0.l2_norm(), "splitting degenerates to the backend: {err:.3e}");
    }

    #[test]
    fn mass_is_conserved() {
        let graph = StarGraph::new(2, 60.0, 1024).unwrap();
        let u0 = bump(graph, 20.0, 2.0);
        for (p, lambda) in [(0.5, 1.0), (0.5, -1.0), (3.0, -1.0)] {
            let mut config = dirichlet_config(Nonlinearity::Power { p, lambda });
            config.t_end = 5.0;
            config.dt = 5e-3;
            config = config.with_snapshot_interval(1.0);
            let traj = evolve(&config, &u0).unwrap();
            assert!(traj.mass_drift() < 1e-10, "p={p} λ={lambda}: drift {}", traj.mass_drift());
            assert!(traj.valid);
        }
    }

    #[test]
    fn strang_splitting_is_second_order() {
        let graph = StarGraph::new(2, 60.0, 1024).unwrap();
        let u0 = bump(graph, 20.0, 2.0);
        let t_end = 2.0;
        let run = |dt: f64| {
            let mut config = dirichlet_config(Nonlinearity::Power { p: 0.5, lambda: 1.0 });
            config.t_end = t_end;
            config.dt = dt;
            config.snapshot_times = vec![0.0, t_end];
            evolve(&config, &u0).unwrap().snapshot_at(t_end).unwrap().clone()
        };
        let reference = run(2.5e-4);
        let e1 = (&run(2e-3) - &reference).l2_norm();
        let e2 = (&run(1e-3) - &reference).l2_norm();
        let order = (e1 / e2).log2();
        assert!((1.7..=2.3).contains(&order), "observed order {order:.2} (errors {e1:.3e}, {e2:.3e})");
    }

    #[test]
    fn time_reversal_through_conjugation() {
        // conj(u(T)) evolved for T under the same equation returns conj(u0).
        let graph = StarGraph::new(3, 60.0, 512).unwrap();
        let u0 = bump(graph, 20.0, 2.0);
        let vc = VertexCondition::canonical(VertexKind::Kirchhoff, 3, 0.0).unwrap();
        let mut config =
            EvolutionConfig::new(vc, BackendKind::CnGeneral, Nonlinearity::Power { p: 0.5, lambda: 1.0 });
        config.t_end = 1.0;
        config.dt = 1e-2;
        config.snapshot_times = vec![0.0, 1.0];
        let forward = evolve(&config, &u0).unwrap();
        let back = evolve(&config, &forward.snapshot_at(1.0).unwrap().conj()).unwrap();
        let recovered = back.snapshot_at(1.0).unwrap().conj();
        let err = (&recovered - &u0).l2_norm() / u0.l2_norm();
        assert!(err < 1e-10, "time reversal defect {err:.3e}");
    }

    #[test]
    fn escape_guard_fires() {
        let graph = StarGraph::new(2, 30.0, 256).unwrap();
        // Fast bump aimed at the wall.
        let u0 = sample_function(
            graph,
            &Preset::GaussianBump {
                center: 20.0,
                width: 2.0,
                amplitude: 1.0,
                phase_velocity: 3.0,
                edges: None,
                dirichlet: true,
            },
        )
        .unwrap();
        let mut config = dirichlet_config(Nonlinearity::Off);
        config.t_end = 4.0;
        config.dt = 1e-2;
        config = config.with_snapshot_interval(0.5);
        match evolve(&config, &u0) {
            Err(SolverError::EscapeGuardViolation { partial, .. }) => {
                assert!(!partial.valid);
                assert!(!partial.snapshots.is_empty());
            }
            other => panic!("expected escape-guard violation, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn weak_residual_decreases_under_refinement() {
        // Linear Dirichlet evolution against a smooth static test function.
        let mut residuals = Vec::new();
        for (m, dt, snap) in [(512usize, 8e-3, 0.4), (1024, 4e-3, 0.2)] {
            let graph = StarGraph::new(2, 60.0, m).unwrap();
            let u0 = bump(graph, 20.0, 2.0);
            let mut config = dirichlet_config(Nonlinearity::Power { p: 0.5, lambda: 1.0 });
            config.t_end = 4.0;
            config.dt = dt;
            config = config.with_snapshot_interval(snap);
            let traj = evolve(&config, &u0).unwrap();
            let phi = bump(graph, 10.0, 1.5);
            residuals.push(weak_residual(&traj, &phi, 0, 4.0).unwrap());
        }
        let order = (residuals[0] / residuals[1]).log2();
        assert!(order >= 1.0, "weak residual order {order:.2} ({residuals:?})");

        // Zero solution: residual identically zero.
        let graph = StarGraph::new(2, 60.0, 512).unwrap();
        let mut config = dirichlet_config(Nonlinearity::Power { p: 0.5, lambda: 1.0 });
        config.t_end = 1.0;
        config.dt = 1e-2;
        config = config.with_snapshot_interval(0.5);
        let traj = evolve(&config, &GraphFunction::zeros(graph)).unwrap();
        let phi = bump(graph, 10.0, 1.5);
        assert_eq!(weak_residual(&traj, &phi, 0, 1.0).unwrap(), 0.0);

        // A test function violating φ(0) = 0 is rejected.
        let bad = sample_function(
            graph,
            &Preset::ExponentialDecay { rate: 0.5, dirichlet: false },
        )
        .unwrap();
        assert!(matches!(
            weak_residual(&traj, &bad, 0, 1.0),
            Err(SolverError::TestFunctionBoundary(_))
        ));
    }

    #[test]
    fn admissible_pairs() {
        assert!(admissible_pair_check(f64::INFINITY, 2.0));
        assert!(admissible_pair_check(4.0, f64::INFINITY));
        assert!(admissible_pair_check(8.0, 4.0));
        assert!(!admissible_pair_check(2.0, 2.0));
        assert!(!admissible_pair_check(1.0, f64::INFINITY));
    }

    #[test]
    fn config_validation() {
        let graph = StarGraph::new(2, 40.0, 256).unwrap();
        let mut config = dirichlet_config(Nonlinearity::Power { p: -0.5, lambda: 1.0 });
        assert!(config.validate(&graph).is_err(), "negative p");
        config.nonlinearity = Nonlinearity::Power { p: 0.5, lambda: 1.0 };
        config.dt = 0.02;
        assert!(config.validate(&graph).is_err(), "dt too large");
        config.dt = 5e-3;
        config.snapshot_times = vec![0.0, 0.0033];
        assert!(config.validate(&graph).is_err(), "snapshot off the step grid");
        config.snapshot_times = vec![0.0, 5.0];
        assert!(config.validate(&graph).is_ok());
    }

    #[test]
    fn trajectory_export_round_trip() {
        let graph = StarGraph::new(2, 40.0, 256).unwrap();
        let u0 = bump(graph, 15.0, 2.0);
        let mut config = dirichlet_config(Nonlinearity::Power { p: 0.5, lambda: 1.0 });
        config.t_end = 1.0;
        config.dt = 1e-2;
        config = config.with_snapshot_interval(0.5);
        let traj = evolve(&config, &u0).unwrap();
        let dir = std::env::temp_dir().join("starnls_traj_test");
        let _ = std::fs::remove_dir_all(&dir);
        traj.export(&dir).unwrap();
        assert!(dir.join("config.json").exists());
        assert!(dir.join("monitors.txt").exists());
        let snap = std::fs::read_dir(dir.join("snapshots")).unwrap().count();
        assert_eq!(snap, traj.snapshots.len());
        let _ = std::fs::remove_dir_all(&dir);
    }
}
