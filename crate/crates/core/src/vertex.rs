//! Vertex conditions `A f(0) + B f'(0+) = 0` on the star graph.
//!
//! A pair of complex `n×n` matrices is admissible when the `n×2n` block
//! `(A B)` has maximal rank and `AB*` is self-adjoint; exactly then the
//! Laplacian with that boundary relation is self-adjoint. This module houses
//! the admissibility checks, the four canonical conditions, the vertex
//! scattering matrix `G(M) = −(A + ikB)⁻¹(A − ikB)`, the resolvent kernel, the
//! finite-rank resolvent-difference check against the Dirichlet Laplacian, and
//! the bound-state finder.

use crate::graph::{trapezoid_weight, GraphError, GraphFunction, StarGraph};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

type CMat = DMatrix<Complex64>;
type CVec = DVector<Complex64>;

#[derive(Debug, Error)]
pub enum VertexError {
    #[error("invalid matrices: {0}")]
    BadShape(String),
    #[error("rank deficient: (A B) has numerical rank {rank} < n = {n} (σ_min/σ_max = {ratio:.3e})")]
    RankDeficient { rank: usize, n: usize, ratio: f64 },
    #[error("AB* is not self-adjoint: defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    NonSelfAdjointAbStar { defect: f64, tol: f64 },
    #[error("delta condition requires α ≠ 0")]
    InvalidAlpha,
    #[error("A + ikB is numerically singular at k = {k} (cond ≈ {cond:.3e})")]
    SingularMatrix { k: String, cond: f64 },
    #[error("invalid spectral parameter λ = {0}: need Im λ > 0 and λ² ∉ ℝ")]
    InvalidSpectralParameter(String),
    #[error("vertex boundary form is non-Hermitian (defect {0:.3e}); discretization bug")]
    NonHermitianForm(f64),
    #[error("unknown vertex kind `{0}`")]
    UnknownKind(String),
    #[error("record is missing matrices for a custom condition")]
    MissingMatrices,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VertexKind {
    Kirchhoff,
    Delta,
    Dirichlet,
    DeltaPrime,
    Custom,
}

impl std::fmt::Display for VertexKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            VertexKind::Kirchhoff => "kirchhoff",
            VertexKind::Delta => "delta",
            VertexKind::Dirichlet => "dirichlet",
            VertexKind::DeltaPrime => "delta-prime",
            VertexKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// A validated matrix pair `(A, B)`.
#[derive(Clone, Debug)]
pub struct VertexCondition {
    n: usize,
    a: CMat,
    b: CMat,
    kind: VertexKind,
    alpha: Option<f64>,
}

/// Negative eigenvalue `−κ²` of `−Δ_M` with eigenfunction `c_j e^{−κx}`.
#[derive(Clone, Debug)]
pub struct BoundState {
    pub kappa: f64,
    pub energy: f64,
    pub coefficients: Vec<Complex64>,
    pub eigenfunction: GraphFunction,
}

/// Canonical split of an admissible condition: boundary values are
/// constrained to `ran(Q)` (the Dirichlet part `P_D f(0) = 0` removed), and on
/// that subspace the outgoing derivative couples through the self-adjoint
/// `Λ`: `Q* f'(0+) = Λ Q* f(0)`.
///
/// Derived from the unitary `U = G(M)` at `k = 1` via the identity
/// `A x + B y = 0  ⟺  (U − I)x + i(U + I)y = 0`; the Dirichlet subspace is
/// `ker(U + I)` and `Λ = i(U_R − I)(U_R + I)⁻¹` on the complement.
#[derive(Clone, Debug)]
pub struct BoundaryForm {
    /// Orthonormal basis of the admissible boundary-value subspace, `n×d`.
    pub robin_basis: CMat,
    /// Self-adjoint coupling on the subspace, `d×d`.
    pub robin_coupling: CMat,
}

impl BoundaryForm {
    pub fn robin_dim(&self) -> usize {
        self.robin_basis.ncols()
    }
}

fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

impl VertexCondition {
    /// Check (A1) maximal rank of `(A B)` and (A2) self-adjointness of `AB*`,
    /// returning a validated condition of kind `Custom`.
    pub fn validate(a: CMat, b: CMat) -> Result<Self, VertexError> {
        Self::validate_tagged(a, b, VertexKind::Custom, None)
    }

    fn validate_tagged(
        a: CMat,
        b: CMat,
        kind: VertexKind,
        alpha: Option<f64>,
    ) -> Result<Self, VertexError> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || b.ncols() != n {
            return Err(VertexError::BadShape(format!(
                "need square matrices of equal size, got {}×{} and {}×{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if n < 2 {
            return Err(VertexError::BadShape(format!("n = {n}, need n ≥ 2")));
        }

        // (A1): numerical rank of the n×2n block via singular values.
        let mut block = CMat::zeros(n, 2 * n);
        block.view_mut((0, 0), (n, n)).copy_from(&a);
        block.view_mut((0, n), (n, n)).copy_from(&b);
        let sv = block.svd(false, false).singular_values;
        let smax = sv.max();
        if smax == 0.0 {
            return Err(VertexError::RankDeficient { rank: 0, n, ratio: 0.0 });
        }
        let rank = sv.iter().filter(|&&s| s > 1e-10 * smax).count();
        if rank < n {
            return Err(VertexError::RankDeficient { rank, n, ratio: sv.min() / smax });
        }

        // (A2): AB* Hermitian.
        let ab = &a * b.adjoint();
        let defect = max_abs(&(&ab - ab.adjoint()));
        let tol = 1e-10 * (spectral_norm(&a) * spectral_norm(&b) + 1.0);
        if defect > tol {
            return Err(VertexError::NonSelfAdjointAbStar { defect, tol });
        }

        Ok(Self { n, a, b, kind, alpha })
    }

    /// The four canonical conditions with the exact matrices of the model:
    /// Kirchhoff (continuity + zero total flux), δ coupling of strength
    /// `α ≠ 0`, decoupling Dirichlet, and δ′ of strength `α ∈ ℝ`.
    pub fn canonical(kind: VertexKind, n: usize, alpha: f64) -> Result<Self, VertexError> {
        if n < 2 {
            return Err(VertexError::BadShape(format!("n = {n}, need n ≥ 2")));
        }
        let one = Complex64::new(1.0, 0.0);
        let difference_rows = |m: &mut CMat| {
            for i in 0..n - 1 {
                m[(i, i)] = one;
                m[(i, i + 1)] = -one;
            }
        };
        let (a, b, alpha) = match kind {
            VertexKind::Kirchhoff => {
                let mut a = CMat::zeros(n, n);
                difference_rows(&mut a);
                let mut b = CMat::zeros(n, n);
                for j in 0..n {
                    b[(n - 1, j)] = one;
                }
                (a, b, None)
            }
            VertexKind::Delta => {
                if alpha == 0.0 {
                    return Err(VertexError::InvalidAlpha);
                }
                let mut a = CMat::zeros(n, n);
                difference_rows(&mut a);
                a[(n - 1, 0)] = Complex64::new(-alpha, 0.0);
                let mut b = CMat::zeros(n, n);
                for j in 0..n {
                    b[(n - 1, j)] = one;
                }
                (a, b, Some(alpha))
            }
            VertexKind::Dirichlet => (CMat::identity(n, n), CMat::zeros(n, n), None),
            VertexKind::DeltaPrime => {
                let mut a = CMat::zeros(n, n);
                for j in 0..n {
                    a[(n - 1, j)] = one;
                }
                let mut b = CMat::zeros(n, n);
                difference_rows(&mut b);
                b[(n - 1, 0)] = Complex64::new(-alpha, 0.0);
                (a, b, Some(alpha))
            }
            VertexKind::Custom => {
                return Err(VertexError::BadShape(
                    "custom conditions are built through validate()".into(),
                ))
            }
        };
        Self::validate_tagged(a, b, kind, alpha)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> VertexKind {
        self.kind
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn a(&self) -> &CMat {
        &self.a
    }

    pub fn b(&self) -> &CMat {
        &self.b
    }

    /// Vertex scattering matrix `G(M) = −(A + ikB)⁻¹(A − ikB)`.
    ///
    /// Unitary for real `k`; energy-independent exactly for Kirchhoff and
    /// Dirichlet.
    pub fn scattering_matrix(&self, k: Complex64) -> Result<CMat, VertexError> {
        let i = Complex64::i();
        let plus = &self.a + &self.b * (i * k);
        let minus = &self.a - &self.b * (i * k);
        let svd = plus.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin == 0.0 || smax / smin > 1e12 {
            return Err(VertexError::SingularMatrix {
                k: format!("{k}"),
                cond: if smin == 0.0 { f64::INFINITY } else { smax / smin },
            });
        }
        let lu = plus.lu();
        let solved = lu
            .solve(&minus)
            .ok_or_else(|| VertexError::SingularMatrix { k: format!("{k}"), cond: f64::INFINITY })?;
        Ok(-solved)
    }

    /// Two pairs describe the same condition iff their scattering matrices
    /// agree; compared at three sample momenta, tolerance 1e-8.
    pub fn equivalent(&self, other: &VertexCondition) -> bool {
        if self.n != other.n {
            return false;
        }
        for k in [0.5, 1.0, 2.0] {
            let k = Complex64::new(k, 0.0);
            match (self.scattering_matrix(k), other.scattering_matrix(k)) {
                (Ok(s1), Ok(s2)) => {
                    if max_abs(&(&s1 - &s2)) > 1e-8 {
                        return false;
                    }
                }
                _ => return false,
            }
        }
        true
    }

    /// All decay rates `κ ∈ (0, κ_max]` with `det(A − κB) = 0`, each paired
    /// with the null vector and the grid-normalized eigenfunction
    /// `c_j e^{−κx}`.
    ///
    /// The determinant is complex for real κ, so roots are located as local
    /// minima of the scale-normalized `|det|` on a 2048-point log grid and
    /// polished by golden-section refinement; multiplicity comes from the
    /// null-space dimension.
    pub fn find_bound_states(&self, graph: StarGraph, kappa_max: Option<f64>) -> Vec<BoundState> {
        let norm_a = spectral_norm(&self.a);
        let norm_b = spectral_norm(&self.b);
        let kappa_max = kappa_max
            .unwrap_or_else(|| 10.0 * (1.0 + norm_a / norm_b.max(1e-12)))
            .min(1e12);
        let kappa_min = (kappa_max * 1e-8).max(1e-10);

        let pencil = |kappa: f64| -> CMat { &self.a - &self.b * Complex64::new(kappa, 0.0) };
        // Hadamard-normalized |det|, scale-free in κ.
        let score = |kappa: f64| -> f64 {
            let m = pencil(kappa);
            let det = m.clone().lu().determinant().norm();
            let scale: f64 = (0..self.n)
                .map(|r| m.row(r).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt().max(1e-300))
                .product();
            det / scale
        };

        const GRID: usize = 2048;
        let ratio = (kappa_max / kappa_min).ln() / (GRID - 1) as f64;
        let kappas: Vec<f64> = (0..GRID).map(|i| kappa_min * (ratio * i as f64).exp()).collect();
        let scores: Vec<f64> = kappas.iter().map(|&k| score(k)).collect();

        let mut states = Vec::new();
        for i in 1..GRID - 1 {
            // Loose bracket threshold: at grid resolution a simple root only
            // dips to ~Δκ/κ; the refinement below rejects shallow minima.
            if scores[i] <= scores[i - 1] && scores[i] <= scores[i + 1] && scores[i] < 5e-2 {
                // Skip plateaus: only act on the left edge of a run.
                if scores[i] == scores[i - 1] {
                    continue;
                }
                let (mut lo, mut hi) = (kappas[i - 1], kappas[i + 1]);
                // Golden-section minimization of the normalized |det|.
                let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
                let mut x1 = hi - phi * (hi - lo);
                let mut x2 = lo + phi * (hi - lo);
                let mut f1 = score(x1);
                let mut f2 = score(x2);
                for _ in 0..200 {
                    if f1 < f2 {
                        hi = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = hi - phi * (hi - lo);
                        f1 = score(x1);
                    } else {
                        lo = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = lo + phi * (hi - lo);
                        f2 = score(x2);
                    }
                    if (hi - lo) < 1e-14 * hi {
                        break;
                    }
                }
                let kappa = 0.5 * (lo + hi);
                if score(kappa) > 1e-9 {
                    continue; // shallow dip, not a root
                }
                // Null vectors from the singular decomposition at the root.
                let m = pencil(kappa);
                let svd = m.clone().svd(false, true);
                let smax = svd.singular_values.max().max(1e-300);
                let v_t = svd.v_t.expect("requested");
                let res_tol = 1e-8 * (norm_a + kappa * norm_b);
                for (idx, &s) in svd.singular_values.iter().enumerate() {
                    if s > 1e-8 * smax {
                        continue;
                    }
                    let c: CVec = v_t.row(idx).adjoint();
                    let residual = (&m * &c).norm();
                    if residual > res_tol {
                        continue;
                    }
                    if let Some(state) = self.assemble_bound_state(graph, kappa, c) {
                        states.push(state);
                    }
                }
            }
        }
        states.sort_by(|a, b| a.kappa.partial_cmp(&b.kappa).unwrap());
        states
    }

    fn assemble_bound_state(&self, graph: StarGraph, kappa: f64, c: CVec) -> Option<BoundState> {
        let mut f = GraphFunction::from_fn(graph, |j, x| c[j] * (-kappa * x).exp()).ok()?;
        let norm = f.l2_norm();
        if norm == 0.0 {
            return None;
        }
        let inv = Complex64::new(1.0 / norm, 0.0);
        for v in f.values_mut().iter_mut() {
            *v *= inv;
        }
        let coeff_scale = 1.0 / norm;
        Some(BoundState {
            kappa,
            energy: -kappa * kappa,
            coefficients: c.iter().map(|v| v * coeff_scale).collect(),
            eigenfunction: f,
        })
    }

    /// Entry `(j,l)` of the resolvent kernel `r(x, y, λ)` of
    /// `(−Δ_M − λ²)⁻¹`:
    /// `(i/2λ)[δ_{jl} e^{iλ|x−y|} + G(M)_{jl} e^{iλ(x+y)}]`.
    pub fn resolvent_kernel(
        &self,
        lam: Complex64,
        j: usize,
        x: f64,
        l: usize,
        y: f64,
    ) -> Result<Complex64, VertexError> {
        check_spectral_parameter(lam)?;
        let g = self.scattering_matrix(lam)?;
        let i = Complex64::i();
        let pref = i / (2.0 * lam);
        let free = if j == l {
            (i * lam * (x - y).abs()).exp()
        } else {
            Complex64::new(0.0, 0.0)
        };
        Ok(pref * (free + g[(j, l)] * (i * lam * (x + y)).exp()))
    }

    /// Numerical rank of the discretized kernel of
    /// `(−Δ_D − i)⁻¹ − (−Δ_M − i)⁻¹` on the grid; always ≤ n.
    ///
    /// The kernel factors through the `n×n` matrix
    /// `(i/2λ)(G(D) − G(M))`, so the singular values of the full grid operator
    /// equal those of the small matrix scaled by the per-edge factor norms;
    /// this is what gets decomposed (a dense assembly agrees, see tests).
    pub fn resolvent_difference_rank(&self, graph: StarGraph) -> Result<usize, VertexError> {
        let lam = Complex64::new(1.0, 1.0) / Complex64::new(2.0_f64.sqrt(), 0.0);
        let g_m = self.scattering_matrix(lam)?;
        let g_d = -CMat::identity(self.n, self.n);
        let diff = (g_d - g_m) * (Complex64::i() / (2.0 * lam));

        let m = graph.points_per_edge();
        let h = graph.spacing();
        // Column factor e^{iλx_a} and row factor e^{iλy_b}·h·w_b.
        let mut col_sq = 0.0;
        let mut row_sq = 0.0;
        for k in 0..=m {
            let e = (Complex64::i() * lam * graph.node(k)).exp().norm_sqr();
            col_sq += e;
            row_sq += e * (h * trapezoid_weight(k, m)).powi(2);
        }
        let scaled = diff * Complex64::new((col_sq * row_sq).sqrt(), 0.0);
        let sv = scaled.svd(false, false).singular_values;
        let smax = sv.max();
        if smax == 0.0 {
            return Ok(0);
        }
        Ok(sv.iter().filter(|&&s| s > 1e-8 * smax).count())
    }

    /// Canonical projector/coupling split used by the Crank–Nicolson
    /// discretization; see [`BoundaryForm`].
    pub fn boundary_form(&self) -> Result<BoundaryForm, VertexError> {
        let u = self.scattering_matrix(Complex64::new(1.0, 0.0))?;
        let n = self.n;
        let shifted = &u + CMat::identity(n, n);
        let svd = shifted.clone().svd(false, true);
        let v_t = svd.v_t.expect("requested");
        // U is unitary, so singular values of U+I are |eigenvalue + 1|;
        // an absolute threshold is scale-correct.
        let keep: Vec<usize> =
            (0..n).filter(|&i| svd.singular_values[i] > 1e-8).collect();
        let d = keep.len();
        let mut q = CMat::zeros(n, d);
        for (col, &i) in keep.iter().enumerate() {
            q.set_column(col, &v_t.row(i).adjoint());
        }
        if d == 0 {
            return Ok(BoundaryForm { robin_basis: q, robin_coupling: CMat::zeros(0, 0) });
        }
        let u_r = q.adjoint() * &u * &q;
        let cayley_den = &u_r + CMat::identity(d, d);
        let lu = cayley_den.lu();
        let inv = lu
            .solve(&CMat::identity(d, d))
            .ok_or_else(|| VertexError::NonHermitianForm(f64::INFINITY))?;
        let lambda = ((&u_r - CMat::identity(d, d)) * inv) * Complex64::i();
        let defect = max_abs(&(&lambda - lambda.adjoint()));
        if defect > 1e-8 * (1.0 + max_abs(&lambda)) {
            return Err(VertexError::NonHermitianForm(defect));
        }
        let herm = (&lambda + lambda.adjoint()).scale(0.5);
        Ok(BoundaryForm { robin_basis: q, robin_coupling: herm })
    }
}

fn check_spectral_parameter(lam: Complex64) -> Result<(), VertexError> {
    let sq = lam * lam;
    if lam.im <= 0.0 || sq.im.abs() <= 1e-14 * sq.norm() {
        return Err(VertexError::InvalidSpectralParameter(format!("{lam}")));
    }
    Ok(())
}

/// Serialization record: canonical kinds may omit the matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VertexConditionRecord {
    pub kind: VertexKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<(f64, f64)>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<(f64, f64)>>>,
}

fn matrix_to_rows(m: &CMat) -> Vec<Vec<(f64, f64)>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| (m[(r, c)].re, m[(r, c)].im)).collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<(f64, f64)>], n: usize) -> Result<CMat, VertexError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(VertexError::BadShape(format!("matrix rows do not form an {n}×{n} square")));
    }
    Ok(CMat::from_fn(n, n, |r, c| Complex64::new(rows[r][c].0, rows[r][c].1)))
}

impl VertexCondition {
    pub fn to_record(&self) -> VertexConditionRecord {
        let custom = self.kind == VertexKind::Custom;
        VertexConditionRecord {
            kind: self.kind,
            n: self.n,
            alpha: self.alpha,
            a: custom.then(|| matrix_to_rows(&self.a)),
            b: custom.then(|| matrix_to_rows(&self.b)),
        }
    }

    pub fn from_record(rec: &VertexConditionRecord) -> Result<Self, VertexError> {
        match rec.kind {
            VertexKind::Custom => {
                let a = rec.a.as_ref().ok_or(VertexError::MissingMatrices)?;
                let b = rec.b.as_ref().ok_or(VertexError::MissingMatrices)?;
                Self::validate(rows_to_matrix(a, rec.n)?, rows_to_matrix(b, rec.n)?)
            }
            kind => Self::canonical(kind, rec.n, rec.alpha.unwrap_or(0.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn test_graph() -> StarGraph {
        StarGraph::new(3, 60.0, 1024).unwrap()
    }

    fn kirchhoff_s(n: usize) -> CMat {
        let two_over_n = Complex64::new(2.0 / n as f64, 0.0);
        CMat::from_fn(n, n, |r, c| {
            two_over_n - if r == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
        })
    }

    #[test]
    fn validate_canonical_and_failures() {
        for n in 2..=8 {
            assert!(VertexCondition::canonical(VertexKind::Kirchhoff, n, 0.0).is_ok());
            assert!(VertexCondition::canonical(VertexKind::Dirichlet, n, 0.0).is_ok());
            for alpha in [-2.0, -1.0, 1.0, 2.0] {
                assert!(VertexCondition::canonical(VertexKind::Delta, n, alpha).is_ok());
                assert!(VertexCondition::canonical(VertexKind::DeltaPrime, n, alpha).is_ok());
            }
            // δ' allows α = 0 ("Let α ∈ ℝ"); δ does not.
            assert!(VertexCondition::canonical(VertexKind::DeltaPrime, n, 0.0).is_ok());
            assert!(matches!(
                VertexCondition::canonical(VertexKind::Delta, n, 0.0),
                Err(VertexError::InvalidAlpha)
            ));
        }

        let zero = CMat::zeros(3, 3);
        assert!(matches!(
            VertexCondition::validate(zero.clone(), zero.clone()),
            Err(VertexError::RankDeficient { .. })
        ));
        // A = I, B = iI has AB* = -iI, anti-Hermitian.
        let eye = CMat::identity(3, 3);
        let i_eye = CMat::from_diagonal(&CVec::from_element(3, Complex64::i()));
        assert!(matches!(
            VertexCondition::validate(eye, i_eye),
            Err(VertexError::NonSelfAdjointAbStar { .. })
        ));
    }

    #[test]
    fn scattering_matrix_closed_forms() {
        let n = 3;
        let d = VertexCondition::canonical(VertexKind::Dirichlet, n, 0.0).unwrap();
        for k in [0.5, 1.0, 2.0] {
            let s = d.scattering_matrix(Complex64::new(k, 0.0)).unwrap();
            assert!(max_abs(&(&s + CMat::identity(n, n))) < 1e-14);
        }

        let kir = VertexCondition::canonical(VertexKind::Kirchhoff, n, 0.0).unwrap();
        for k in [0.5, 1.0, 2.0] {
            let s = kir.scattering_matrix(Complex64::new(k, 0.0)).unwrap();
            assert!(max_abs(&(&s - kirchhoff_s(n))) < 1e-12, "k-independent closed form");
        }
    }

    #[test]
    fn scattering_matrix_unitary_for_real_k() {
        for (kind, alpha) in [
            (VertexKind::Kirchhoff, 0.0),
            (VertexKind::Dirichlet, 0.0),
            (VertexKind::Delta, -1.0),
            (VertexKind::Delta, 2.0),
            (VertexKind::DeltaPrime, -1.5),
            (VertexKind::DeltaPrime, 0.0),
        ] {
            for n in [2, 3, 5] {
                let vc = VertexCondition::canonical(kind, n, alpha).unwrap();
                for k in [0.5, 1.0, 2.0] {
                    let s = vc.scattering_matrix(Complex64::new(k, 0.0)).unwrap();
                    let defect = max_abs(&(&s * s.adjoint() - CMat::identity(n, n)));
                    assert!(defect < 1e-10, "{kind} n={n} k={k}: unitarity defect {defect}");
                }
            }
        }
    }

    #[test]
    fn delta_condition_alternative_pair_is_equivalent() {
        // The remark's alternative pair A = -αI, B = all-ones matrix.
        let n = 3;
        let alpha = -1.0;
        let delta = VertexCondition::canonical(VertexKind::Delta, n, alpha).unwrap();
        let a = CMat::from_diagonal(&CVec::from_element(n, Complex64::new(-alpha, 0.0)));
        let b = CMat::from_element(n, n, Complex64::new(1.0, 0.0));
        let alt = VertexCondition::validate(a, b).unwrap();
        assert!(delta.equivalent(&alt));
        assert!(!delta.equivalent(&VertexCondition::canonical(VertexKind::Kirchhoff, n, 0.0).unwrap()));
    }

    #[test]
    fn bound_states_of_canonical_conditions() {
        let graph = test_graph();
        // Analytic oracle: δ with α < 0 has exactly one state with κ = -α/n.
        for n in 2..=6 {
            let graph_n = StarGraph::new(n, 60.0, 1024).unwrap();
            for alpha in [-2.0, -1.0, -0.5] {
                let vc = VertexCondition::canonical(VertexKind::Delta, n, alpha).unwrap();
                let states = vc.find_bound_states(graph_n, None);
                assert_eq!(states.len(), 1, "delta({n},{alpha})");
                assert_relative_eq!(states[0].kappa, -alpha / n as f64, max_relative = 1e-9);
                assert_relative_eq!(states[0].energy, -(alpha / n as f64).powi(2), max_relative = 1e-8);
                assert_relative_eq!(states[0].eigenfunction.l2_norm(), 1.0, epsilon = 1e-10);
            }
            for alpha in [0.5, 1.0, 2.0] {
                let vc = VertexCondition::canonical(VertexKind::Delta, n, alpha).unwrap();
                assert!(vc.find_bound_states(graph_n, None).is_empty());
            }
        }

        let kir = VertexCondition::canonical(VertexKind::Kirchhoff, 3, 0.0).unwrap();
        assert!(kir.find_bound_states(graph, None).is_empty());
        let dir = VertexCondition::canonical(VertexKind::Dirichlet, 3, 0.0).unwrap();
        assert!(dir.find_bound_states(graph, None).is_empty());

        // δ' analogue: one state with κ = -n/α for α < 0.
        let dp = VertexCondition::canonical(VertexKind::DeltaPrime, 3, -1.5).unwrap();
        let states = dp.find_bound_states(graph, None);
        assert_eq!(states.len(), 1);
        assert_relative_eq!(states[0].kappa, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn bound_state_residual_invariant() {
        let graph = test_graph();
        let vc = VertexCondition::canonical(VertexKind::Delta, 3, -1.0).unwrap();
        let state = &vc.find_bound_states(graph, None)[0];
        let c = CVec::from_iterator(3, state.coefficients.iter().cloned());
        let m = vc.a() - vc.b() * Complex64::new(state.kappa, 0.0);
        let res = (&m * &c).norm();
        let bound = 1e-8 * c.norm() * (spectral_norm(vc.a()) + state.kappa * spectral_norm(vc.b()));
        assert!(res <= bound, "residual {res} vs bound {bound}");
    }

    #[test]
    fn resolvent_kernel_values_and_symmetry() {
        let lam = Complex64::new(1.0, 1.0) / Complex64::new(2.0_f64.sqrt(), 0.0);
        let i = Complex64::i();

        // Dirichlet closed form at x = y = 1, same edge.
        let dir = VertexCondition::canonical(VertexKind::Dirichlet, 3, 0.0).unwrap();
        let r = dir.resolvent_kernel(lam, 0, 1.0, 0, 1.0).unwrap();
        let expect = i / (2.0 * lam) * (Complex64::new(1.0, 0.0) - (2.0 * i * lam).exp());
        assert!((r - expect).norm() < 1e-14);

        // Transpose symmetry r(x,y) = r(y,x)^T for real matrix pairs.
        for (kind, alpha) in [
            (VertexKind::Kirchhoff, 0.0),
            (VertexKind::Delta, -1.0),
            (VertexKind::DeltaPrime, 1.0),
        ] {
            let vc = VertexCondition::canonical(kind, 3, alpha).unwrap();
            for &(x, y) in &[(0.3, 1.7), (2.0, 0.1), (1.1, 1.1)] {
                for j in 0..3 {
                    for l in 0..3 {
                        let a = vc.resolvent_kernel(lam, j, x, l, y).unwrap();
                        let b = vc.resolvent_kernel(lam, l, y, j, x).unwrap();
                        assert!((a - b).norm() < 1e-13);
                    }
                }
            }
        }

        // Kirchhoff n=2 is the free line under x ↦ -x₁, x ↦ +x₂.
        let k2 = VertexCondition::canonical(VertexKind::Kirchhoff, 2, 0.0).unwrap();
        let free = |s: f64, t: f64| i / (2.0 * lam) * (i * lam * (s - t).abs()).exp();
        for &(x, y) in &[(0.4, 1.3), (2.1, 0.2)] {
            let cross = k2.resolvent_kernel(lam, 0, x, 1, y).unwrap();
            assert!((cross - free(-x, y)).norm() < 1e-13);
            let same = k2.resolvent_kernel(lam, 0, x, 0, y).unwrap();
            assert!((same - free(-x, -y)).norm() < 1e-13);
        }

        assert!(matches!(
            dir.resolvent_kernel(Complex64::new(1.0, 0.0), 0, 1.0, 0, 1.0),
            Err(VertexError::InvalidSpectralParameter(_))
        ));
        // Purely imaginary λ has λ² real: also rejected.
        assert!(matches!(
            dir.resolvent_kernel(Complex64::new(0.0, 1.0), 0, 1.0, 0, 1.0),
            Err(VertexError::InvalidSpectralParameter(_))
        ));
    }

    #[test]
    fn resolvent_difference_ranks() {
        let graph = StarGraph::new(3, 20.0, 128).unwrap();
        let dir = VertexCondition::canonical(VertexKind::Dirichlet, 3, 0.0).unwrap();
        assert_eq!(dir.resolvent_difference_rank(graph).unwrap(), 0);

        // G(D) - G(K) = -2J/n has rank 1.
        let kir = VertexCondition::canonical(VertexKind::Kirchhoff, 3, 0.0).unwrap();
        assert_eq!(kir.resolvent_difference_rank(graph).unwrap(), 1);

        let delta = VertexCondition::canonical(VertexKind::Delta, 3, -1.0).unwrap();
        assert!(delta.resolvent_difference_rank(graph).unwrap() <= 3);
    }

    #[test]
    fn resolvent_difference_rank_matches_dense_assembly() {
        // Assemble the full grid kernel on a coarse graph and compare ranks.
        let graph = StarGraph::new(2, 10.0, 24).unwrap();
        let lam = Complex64::new(1.0, 1.0) / Complex64::new(2.0_f64.sqrt(), 0.0);
        for (kind, alpha) in [(VertexKind::Kirchhoff, 0.0), (VertexKind::Delta, -1.0)] {
            let vc = VertexCondition::canonical(kind, 2, alpha).unwrap();
            let g_m = vc.scattering_matrix(lam).unwrap();
            let diff = (-CMat::identity(2, 2) - g_m) * (Complex64::i() / (2.0 * lam));
            let m = graph.points_per_edge();
            let nn = 2 * (m + 1);
            let h = graph.spacing();
            let dense = CMat::from_fn(nn, nn, |row, col| {
                let (j, a) = (row / (m + 1), row % (m + 1));
                let (l, b) = (col / (m + 1), col % (m + 1));
                let phi_x = (Complex64::i() * lam * graph.node(a)).exp();
                let phi_y = (Complex64::i() * lam * graph.node(b)).exp();
                phi_x * diff[(j, l)] * phi_y * (h * trapezoid_weight(b, m))
            });
            let sv = dense.svd(false, false).singular_values;
            let smax = sv.max();
            let dense_rank = sv.iter().filter(|&&s| s > 1e-8 * smax).count();
            assert_eq!(dense_rank, vc.resolvent_difference_rank(graph).unwrap(), "{kind}");
        }
    }

    #[test]
    fn boundary_form_closed_cases() {
        // Kirchhoff: 1-dim Robin space spanned by the constant vector, Λ = 0.
        let kir = VertexCondition::canonical(VertexKind::Kirchhoff, 3, 0.0).unwrap();
        let form = kir.boundary_form().unwrap();
        assert_eq!(form.robin_dim(), 1);
        let q0 = form.robin_basis.column(0);
        let mean = q0.iter().sum::<Complex64>() / Complex64::new(3.0, 0.0);
        for v in q0.iter() {
            assert!((v - mean).norm() < 1e-10, "constant direction");
        }
        assert!(max_abs(&form.robin_coupling) < 1e-10);

        // δ(n, α): Λ = α/n on the constant direction.
        let delta = VertexCondition::canonical(VertexKind::Delta, 4, -2.0).unwrap();
        let form = delta.boundary_form().unwrap();
        assert_eq!(form.robin_dim(), 1);
        assert_relative_eq!(form.robin_coupling[(0, 0)].re, -0.5, max_relative = 1e-10);
        assert!(form.robin_coupling[(0, 0)].im.abs() < 1e-10);

        // Dirichlet: no Robin directions at all.
        let dir = VertexCondition::canonical(VertexKind::Dirichlet, 3, 0.0).unwrap();
        assert_eq!(dir.boundary_form().unwrap().robin_dim(), 0);

        // δ'(n, α≠0): full Robin space with Λ = J/α.
        let n = 3;
        let alpha = 2.0;
        let dp = VertexCondition::canonical(VertexKind::DeltaPrime, n, alpha).unwrap();
        let form = dp.boundary_form().unwrap();
        assert_eq!(form.robin_dim(), n);
        let q = &form.robin_basis;
        let lambda_full = q * &form.robin_coupling * q.adjoint();
        let expect = CMat::from_element(n, n, Complex64::new(1.0 / alpha, 0.0));
        assert!(max_abs(&(&lambda_full - &expect)) < 1e-9);
    }

    #[test]
    fn boundary_form_reproduces_the_condition() {
        // Vectors built from the projector form satisfy A f(0) + B f'(0+) = 0.
        for (kind, alpha) in [
            (VertexKind::Kirchhoff, 0.0),
            (VertexKind::Delta, -1.0),
            (VertexKind::DeltaPrime, 1.5),
            (VertexKind::Dirichlet, 0.0),
        ] {
            let n = 3;
            let vc = VertexCondition::canonical(kind, n, alpha).unwrap();
            let form = vc.boundary_form().unwrap();
            let d = form.robin_dim();
            for trial in 0..3.min(d.max(1)) {
                if d == 0 {
                    break;
                }
                let mut b = CVec::zeros(d);
                b[trial % d] = Complex64::new(1.0, 0.3);
                let f0 = &form.robin_basis * &b;
                let f1 = &form.robin_basis * (&form.robin_coupling * &b);
                let res = (vc.a() * &f0 + vc.b() * &f1).norm();
                assert!(res < 1e-9, "{kind}: residual {res}");
            }
        }
    }

    #[test]
    fn record_round_trip() {
        let delta = VertexCondition::canonical(VertexKind::Delta, 3, -1.0).unwrap();
        let rec = delta.to_record();
        assert!(rec.a.is_none(), "canonical kinds omit matrices");
        let json = serde_json::to_string(&rec).unwrap();
        let back: VertexConditionRecord = serde_json::from_str(&json).unwrap();
        let vc = VertexCondition::from_record(&back).unwrap();
        assert!(vc.equivalent(&delta));

        let custom = VertexCondition::validate(
            CMat::from_diagonal(&CVec::from_element(2, Complex64::new(1.0, 0.0))),
            CMat::from_diagonal(&CVec::from_element(2, Complex64::new(-1.0, 0.0))),
        )
        .unwrap();
        let rec = custom.to_record();
        assert!(rec.a.is_some());
        let json = serde_json::to_string(&rec).unwrap();
        let back = VertexCondition::from_record(&serde_json::from_str(&json).unwrap()).unwrap();
        assert!(back.equivalent(&custom));
        let _ = json;
    }
}
