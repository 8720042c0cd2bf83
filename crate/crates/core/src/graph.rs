//! Discretized star graph and complex fields on it.
//!
//! Every edge is the truncation `[0, L]` of a half-line, sampled on the shared
//! uniform grid `x_k = k·h`, `h = L/m`, `k = 0..=m`. The far endpoint carries a
//! homogeneous Dirichlet wall; experiments are expected to keep mass away from
//! it (see the escape guard in [`crate::nls`]). All integrals are trapezoidal,
//! which pairs exactly with the sine-transform conventions in
//! [`crate::transforms`].

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operands live on different graphs")]
    GraphMismatch,
    #[error("invalid L^p exponent {0}; need 1 <= p <= inf")]
    InvalidExponent(f64),
    #[error("non-finite sample at edge {edge}, node {node}")]
    NonFinite { edge: usize, node: usize },
    #[error("edge index {0} out of range")]
    EdgeOutOfRange(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Star-shaped metric graph: `n` identical truncated half-line edges glued at
/// one vertex, with a shared uniform grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarGraph {
    n_edges: usize,
    edge_length: f64,
    points_per_edge: usize,
}

impl StarGraph {
    /// `n` edges of length `L`, `m` grid intervals per edge.
    pub fn new(n_edges: usize, edge_length: f64, points_per_edge: usize) -> Result<Self, GraphError> {
        if n_edges < 2 {
            return Err(GraphError::InvalidParameter(format!(
                "n_edges = {n_edges}, need at least 2"
            )));
        }
        if !(edge_length > 0.0) || !edge_length.is_finite() {
            return Err(GraphError::InvalidParameter(format!(
                "edge_length = {edge_length}, need a positive real"
            )));
        }
        if points_per_edge < 8 {
            return Err(GraphError::InvalidParameter(format!(
                "points_per_edge = {points_per_edge}, need at least 8"
            )));
        }
        Ok(Self { n_edges, edge_length, points_per_edge })
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn edge_length(&self) -> f64 {
        self.edge_length
    }

    /// Number of grid intervals per edge (the paper grid has `m+1` nodes).
    pub fn points_per_edge(&self) -> usize {
        self.points_per_edge
    }

    /// Nodes per edge, `m + 1`.
    pub fn n_nodes(&self) -> usize {
        self.points_per_edge + 1
    }

    /// Grid spacing `h = L/m`.
    pub fn spacing(&self) -> f64 {
        self.edge_length / self.points_per_edge as f64
    }

    /// Position of node `k` on any edge.
    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.spacing()
    }

    /// Spacing of the dual (sine-transform) grid, `π/L`.
    pub fn xi_spacing(&self) -> f64 {
        std::f64::consts::PI / self.edge_length
    }

    /// Frequency node `ξ_k = kπ/L`.
    pub fn xi_node(&self, k: usize) -> f64 {
        k as f64 * self.xi_spacing()
    }
}

/// Trapezoid weight of node `k` on a grid with `m` intervals.
pub(crate) fn trapezoid_weight(k: usize, m: usize) -> f64 {
    if k == 0 || k == m {
        0.5
    } else {
        1.0
    }
}

fn check_finite(values: &Array2<Complex64>) -> Result<(), GraphError> {
    for ((j, k), v) in values.indexed_iter() {
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(GraphError::NonFinite { edge: j, node: k });
        }
    }
    Ok(())
}

/// Complex field on a [`StarGraph`]: one sample row per edge,
/// `values[j][k] ≈ f_j(x_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphFunction {
    graph: StarGraph,
    values: Array2<Complex64>,
}

/// Field on the dual sine-transform grid `ξ_k = kπ/L`, same shape as a
/// [`GraphFunction`]; endpoints are pinned to zero by the transform.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    graph: StarGraph,
    coefficients: Array2<Complex64>,
}

macro_rules! field_common {
    ($ty:ident, $field:ident) => {
        impl $ty {
            pub fn zeros(graph: StarGraph) -> Self {
                Self {
                    graph,
                    $field: Array2::zeros((graph.n_edges(), graph.n_nodes())),
                }
            }

            pub fn from_values(graph: StarGraph, values: Array2<Complex64>) -> Result<Self, GraphError> {
                if values.dim() != (graph.n_edges(), graph.n_nodes()) {
                    return Err(GraphError::InvalidParameter(format!(
                        "value array of shape {:?} does not match graph shape {:?}",
                        values.dim(),
                        (graph.n_edges(), graph.n_nodes())
                    )));
                }
                check_finite(&values)?;
                Ok(Self { graph, $field: values })
            }

            pub fn graph(&self) -> &StarGraph {
                &self.graph
            }

            pub fn values(&self) -> &Array2<Complex64> {
                &self.$field
            }

            #[allow(dead_code)]
            pub(crate) fn values_mut(&mut self) -> &mut Array2<Complex64> {
                &mut self.$field
            }

            pub fn edge(&self, j: usize) -> ArrayView1<'_, Complex64> {
                self.$field.row(j)
            }

            pub(crate) fn edge_mut(&mut self, j: usize) -> ArrayViewMut1<'_, Complex64> {
                self.$field.row_mut(j)
            }

            /// Largest modulus over all samples.
            pub fn sup_norm(&self) -> f64 {
                self.$field.iter().map(|v| v.norm()).fold(0.0, f64::max)
            }

            pub fn is_finite(&self) -> bool {
                self.$field.iter().all(|v| v.re.is_finite() && v.im.is_finite())
            }

            pub fn scaled(&self, c: Complex64) -> Self {
                Self { graph: self.graph, $field: self.$field.mapv(|v| c * v) }
            }

            pub fn conj(&self) -> Self {
                Self { graph: self.graph, $field: self.$field.mapv(|v| v.conj()) }
            }
        }

        impl std::ops::Add for &$ty {
            type Output = $ty;
            fn add(self, rhs: &$ty) -> $ty {
                assert_eq!(self.graph, rhs.graph, "graph mismatch");
                $ty { graph: self.graph, $field: &self.$field + &rhs.$field }
            }
        }

        impl std::ops::Sub for &$ty {
            type Output = $ty;
            fn sub(self, rhs: &$ty) -> $ty {
                assert_eq!(self.graph, rhs.graph, "graph mismatch");
                $ty { graph: self.graph, $field: &self.$field - &rhs.$field }
            }
        }
    };
}

field_common!(GraphFunction, values);
field_common!(SpectralField, coefficients);

/// Quadrature/norm routines shared by the two grids; `spacing` is the grid
/// step of the underlying axis.
pub(crate) fn inner_product_row(
    f: ArrayView1<'_, Complex64>,
    g: ArrayView1<'_, Complex64>,
    spacing: f64,
) -> Complex64 {
    let m = f.len() - 1;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, (a, b)) in f.iter().zip(g.iter()).enumerate() {
        acc += trapezoid_weight(k, m) * a * b.conj();
    }
    spacing * acc
}

pub(crate) fn lp_norm_rows(values: &Array2<Complex64>, spacing: f64, p: f64) -> Result<f64, GraphError> {
    if p.is_infinite() && p > 0.0 {
        return Ok(values.iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(GraphError::InvalidExponent(p));
    }
    let m = values.ncols() - 1;
    let mut total = 0.0;
    for row in values.rows() {
        let mut edge = 0.0;
        for (k, v) in row.iter().enumerate() {
            edge += trapezoid_weight(k, m) * v.norm().powf(p);
        }
        total += spacing * edge;
    }
    Ok(total.powf(1.0 / p))
}

impl GraphFunction {
    /// Build from a pointwise formula `f(edge, x)`.
    pub fn from_fn(
        graph: StarGraph,
        f: impl Fn(usize, f64) -> Complex64,
    ) -> Result<Self, GraphError> {
        let values = Array2::from_shape_fn((graph.n_edges(), graph.n_nodes()), |(j, k)| {
            f(j, graph.node(k))
        });
        Self::from_values(graph, values)
    }

    /// `⟨f,g⟩ = Σ_j ⟨f,g⟩_j` with `⟨f,g⟩_j = ∫ f_j ḡ_j` (trapezoid).
    pub fn inner_product(&self, g: &GraphFunction) -> Result<Complex64, GraphError> {
        if self.graph != g.graph {
            return Err(GraphError::GraphMismatch);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..self.graph.n_edges() {
            acc += inner_product_row(self.edge(j), g.edge(j), self.graph.spacing());
        }
        Ok(acc)
    }

    /// Single-edge inner product `⟨f,g⟩_j`.
    pub fn edge_inner_product(&self, g: &GraphFunction, j: usize) -> Result<Complex64, GraphError> {
        if self.graph != g.graph {
            return Err(GraphError::GraphMismatch);
        }
        if j >= self.graph.n_edges() {
            return Err(GraphError::EdgeOutOfRange(j));
        }
        Ok(inner_product_row(self.edge(j), g.edge(j), self.graph.spacing()))
    }

    /// `‖f‖_{L^p(𝒢)}`: the `ℓ^p`-sum of edge norms for finite `p`, the sup of
    /// edge sup-norms for `p = ∞`.
    pub fn lp_norm(&self, p: f64) -> Result<f64, GraphError> {
        lp_norm_rows(&self.values, self.graph.spacing(), p)
    }

    /// `‖f‖_{L²(𝒢)}`.
    pub fn l2_norm(&self) -> f64 {
        self.lp_norm(2.0).expect("p = 2 is always valid")
    }

    /// `‖f‖_{L^p(e_j)}` on a single edge.
    pub fn edge_lp_norm(&self, j: usize, p: f64) -> Result<f64, GraphError> {
        if j >= self.graph.n_edges() {
            return Err(GraphError::EdgeOutOfRange(j));
        }
        let row = self.values.row(j).insert_axis(ndarray::Axis(0)).to_owned();
        lp_norm_rows(&row, self.graph.spacing(), p)
    }

    /// Mass fraction within `cells` grid cells of the far wall (used by the
    /// escape guard).
    pub fn wall_mass_fraction(&self, cells: usize) -> f64 {
        let m = self.graph.points_per_edge();
        let start = m.saturating_sub(cells);
        let mut near = 0.0;
        let mut total = 0.0;
        for row in self.values.rows() {
            for (k, v) in row.iter().enumerate() {
                let w = trapezoid_weight(k, m) * v.norm_sqr();
                total += w;
                if k >= start {
                    near += w;
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            near / total
        }
    }
}

impl SpectralField {
    /// Inner product on the dual grid (spacing `π/L`).
    pub fn inner_product(&self, g: &SpectralField) -> Result<Complex64, GraphError> {
        if self.graph != g.graph {
            return Err(GraphError::GraphMismatch);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..self.graph.n_edges() {
            acc += inner_product_row(self.edge(j), g.edge(j), self.graph.xi_spacing());
        }
        Ok(acc)
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64, GraphError> {
        lp_norm_rows(&self.coefficients, self.graph.xi_spacing(), p)
    }

    pub fn l2_norm(&self) -> f64 {
        self.lp_norm(2.0).expect("p = 2 is always valid")
    }

    pub fn edge_lp_norm(&self, j: usize, p: f64) -> Result<f64, GraphError> {
        if j >= self.graph.n_edges() {
            return Err(GraphError::EdgeOutOfRange(j));
        }
        let row = self.coefficients.row(j).insert_axis(ndarray::Axis(0)).to_owned();
        lp_norm_rows(&row, self.graph.xi_spacing(), p)
    }
}

/// Deterministic initial-data generators.
///
/// With `dirichlet: true`, a preset is multiplied by the vanishing window
/// `1 − e^{−(x/s)²}` (scale `s` tied to the preset's own width), which pins
/// `f(0) = 0` without touching the bulk profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Preset {
    Zero,
    GaussianBump {
        center: f64,
        width: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default)]
        phase_velocity: f64,
        /// Edges the bump lives on; `None` = all edges.
        #[serde(default)]
        edges: Option<Vec<usize>>,
        #[serde(default)]
        dirichlet: bool,
    },
    ExponentialDecay {
        rate: f64,
        #[serde(default)]
        dirichlet: bool,
    },
    /// One half-line profile copied to every edge (`m + 1` samples).
    SymmetricCopy { profile: Vec<(f64, f64)> },
}

fn default_amplitude() -> f64 {
    1.0
}

fn dirichlet_window(x: f64, scale: f64) -> f64 {
    1.0 - (-(x / scale).powi(2)).exp()
}

/// Evaluate a preset on a graph.
pub fn sample_function(graph: StarGraph, preset: &Preset) -> Result<GraphFunction, GraphError> {
    match preset {
        Preset::Zero => Ok(GraphFunction::zeros(graph)),
        Preset::GaussianBump { center, width, amplitude, phase_velocity, edges, dirichlet } => {
            if !(*width > 0.0) {
                return Err(GraphError::InvalidParameter(format!(
                    "gaussian-bump width = {width}, need > 0"
                )));
            }
            if let Some(mask) = edges {
                for &j in mask {
                    if j >= graph.n_edges() {
                        return Err(GraphError::EdgeOutOfRange(j));
                    }
                }
            }
            let on_edge = |j: usize| edges.as_ref().map_or(true, |mask| mask.contains(&j));
            GraphFunction::from_fn(graph, |j, x| {
                if !on_edge(j) {
                    return Complex64::new(0.0, 0.0);
                }
                let env = amplitude * (-(x - center).powi(2) / (2.0 * width * width)).exp();
                let win = if *dirichlet { dirichlet_window(x, width / 2.0) } else { 1.0 };
                Complex64::from_polar(env * win, phase_velocity * x)
            })
        }
        Preset::ExponentialDecay { rate, dirichlet } => {
            if !(*rate > 0.0) {
                return Err(GraphError::InvalidParameter(format!(
                    "exponential-decay rate = {rate}, need > 0"
                )));
            }
            GraphFunction::from_fn(graph, |_, x| {
                let win = if *dirichlet { dirichlet_window(x, 0.5 / rate) } else { 1.0 };
                Complex64::new((-rate * x).exp() * win, 0.0)
            })
        }
        Preset::SymmetricCopy { profile } => {
            if profile.len() != graph.n_nodes() {
                return Err(GraphError::InvalidParameter(format!(
                    "symmetric-copy profile has {} samples, grid needs {}",
                    profile.len(),
                    graph.n_nodes()
                )));
            }
            let row: Array1<Complex64> =
                profile.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
            let mut values = Array2::zeros((graph.n_edges(), graph.n_nodes()));
            for mut r in values.rows_mut() {
                r.assign(&row);
            }
            GraphFunction::from_values(graph, values)
        }
    }
}

impl GraphFunction {
    /// Columnar text serialization: one header line, then
    /// `edge_index x re im` rows at 17 significant digits (bit-stable
    /// round trip).
    pub fn write_columnar<W: Write>(&self, mut w: W) -> Result<(), GraphError> {
        writeln!(w, "edge x re im")?;
        for (j, row) in self.values.rows().into_iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                writeln!(w, "{} {:.16e} {:.16e} {:.16e}", j, self.graph.node(k), v.re, v.im)?;
            }
        }
        Ok(())
    }

    /// Read back the columnar format, inferring the graph from the rows.
    pub fn read_columnar<R: BufRead>(r: R) -> Result<Self, GraphError> {
        let mut rows: Vec<(usize, f64, f64, f64)> = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            if idx == 0 {
                if line.trim() != "edge x re im" {
                    return Err(GraphError::Parse { line: 1, msg: "bad header".into() });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut tok = |what: &str| -> Result<String, GraphError> {
                it.next().map(str::to_owned).ok_or_else(|| GraphError::Parse {
                    line: idx + 1,
                    msg: format!("missing {what}"),
                })
            };
            let j: usize = tok("edge")?.parse().map_err(|e| GraphError::Parse {
                line: idx + 1,
                msg: format!("edge index: {e}"),
            })?;
            let mut num = |what: &str| -> Result<f64, GraphError> {
                tok(what)?.parse().map_err(|e| GraphError::Parse {
                    line: idx + 1,
                    msg: format!("{what}: {e}"),
                })
            };
            let x = num("x")?;
            let re = num("re")?;
            let im = num("im")?;
            rows.push((j, x, re, im));
        }
        if rows.is_empty() {
            return Err(GraphError::Parse { line: 1, msg: "no data rows".into() });
        }
        let n_edges = rows.iter().map(|r| r.0).max().unwrap() + 1;
        if rows.len() % n_edges != 0 {
            return Err(GraphError::Parse { line: 1, msg: "ragged edge blocks".into() });
        }
        let n_nodes = rows.len() / n_edges;
        let edge_length = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        let graph = StarGraph::new(n_edges, edge_length, n_nodes - 1)?;
        let mut values = Array2::zeros((n_edges, n_nodes));
        let mut seen = vec![0usize; n_edges];
        for (j, _x, re, im) in rows {
            if seen[j] >= n_nodes {
                return Err(GraphError::Parse { line: 1, msg: format!("too many rows for edge {j}") });
            }
            values[(j, seen[j])] = Complex64::new(re, im);
            seen[j] += 1;
        }
        GraphFunction::from_values(graph, values)
    }
}
