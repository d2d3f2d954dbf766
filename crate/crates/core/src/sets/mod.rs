//! Polytopes, zonotopes, confidence sets and constraint tightening.
//!
//! Confidence sets and disturbance accumulations are zonotopes, so Minkowski
//! sums are generator concatenations and Pontryagin differences against an
//! H-polytope subtract `Σ_j |H_i g_j|` from each offset. Linear programs are
//! only needed for emptiness, support, inclusion and redundancy queries.

mod text;

use thiserror::Error;

use crate::lp::{self, LpError, LpOutcome};
use crate::mat::{self, spectral_radius, sym_eig, Mat, MatError};

pub use text::{parse_hpolytope, write_hpolytope, write_matrix, write_zonotope, ParseError};

/// Slack allowed in inclusion and invariance certificates.
pub const INCLUSION_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("set is empty")]
    Empty,
    #[error("linear program is unbounded along the requested direction")]
    Unbounded,
    #[error("row {0} of the polytope has a zero normal")]
    ZeroNormal(usize),
    #[error("probability {0} is outside (0, 1)")]
    Probability(f64),
    #[error("invalid probability budget: {0}")]
    Budget(String),
    #[error("covariance bound is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("closed-loop matrix is not Schur (spectral radius {0})")]
    NotSchur(f64),
    #[error("the safe set must contain the origin in its interior")]
    OriginNotInterior,
    #[error("robust invariant set iteration became empty at iteration {0}")]
    EmptyRpi(usize),
    #[error("robust invariant set iteration did not terminate after {iterations} iterations")]
    RpiNonTermination { iterations: usize, last: Box<HPolytope> },
    #[error("{stage} tightening is empty at step {index}")]
    TighteningInfeasible { stage: &'static str, index: usize },
}

pub type Result<T> = std::result::Result<T, SetError>;

fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
///
/// Acklam's rational approximation followed by two Halley refinements against
/// the complementary error function.
pub fn inv_norm_cdf(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(SetError::Probability(q));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    let low = 0.02425;
    let mut x = if q < low {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    } else if q <= 1.0 - low {
        let r = q - 0.5;
        let s = r * r;
        (((((A[0] * s + A[1]) * s + A[2]) * s + A[3]) * s + A[4]) * s + A[5]) * r
            / (((((B[0] * s + B[1]) * s + B[2]) * s + B[3]) * s + B[4]) * s + 1.0)
    } else {
        let r = (-2.0 * (1.0 - q).ln()).sqrt();
        -(((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };
    for _ in 0..2 {
        // residual Φ(x) − q, evaluated in the tail that keeps it accurate
        let e = if x > 0.0 {
            (1.0 - q) - 0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
        } else {
            norm_cdf(x) - q
        };
        let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// Per-row violation probabilities `p_m` with `Σ p_m = p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityBudget {
    total: f64,
    per_row: Vec<f64>,
}

impl ProbabilityBudget {
    pub fn uniform(total: f64, rows: usize) -> Result<Self> {
        if rows == 0 {
            return Err(SetError::Budget("no rows".into()));
        }
        ProbabilityBudget::new(vec![total / rows as f64; rows])
    }

    pub fn new(per_row: Vec<f64>) -> Result<Self> {
        if per_row.is_empty() {
            return Err(SetError::Budget("no rows".into()));
        }
        if let Some(&bad) = per_row.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(SetError::Probability(bad));
        }
        let total: f64 = per_row.iter().sum();
        if !(total > 0.0 && total < 1.0) {
            return Err(SetError::Budget(format!("row probabilities sum to {total}")));
        }
        Ok(ProbabilityBudget { total, per_row })
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn per_row(&self) -> &[f64] {
        &self.per_row
    }
}

/// `{c + Σ α_j g_j : |α_j| ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    pub center: Vec<f64>,
    pub generators: Vec<Vec<f64>>,
}

impl Zonotope {
    pub fn new(center: Vec<f64>, generators: Vec<Vec<f64>>) -> Result<Self> {
        let n = center.len();
        if let Some(g) = generators.iter().find(|g| g.len() != n) {
            return Err(SetError::Dimension(format!("generator of length {} in dimension {n}", g.len())));
        }
        Ok(Zonotope { center, generators })
    }

    /// The singleton `{0}`.
    pub fn origin(dim: usize) -> Self {
        Zonotope { center: vec![0.0; dim], generators: Vec::new() }
    }

    /// Centered zonotope with the given generators.
    pub fn centered(dim: usize, generators: Vec<Vec<f64>>) -> Result<Self> {
        Zonotope::new(vec![0.0; dim], generators)
    }

    /// Axis-aligned box `[-r, r]` per coordinate.
    pub fn symmetric_box(half_widths: &[f64]) -> Self {
        let n = half_widths.len();
        let generators = half_widths
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let mut g = vec![0.0; n];
                g[i] = r;
                g
            })
            .collect();
        Zonotope { center: vec![0.0; n], generators }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `dᵀc + Σ_j |dᵀg_j|`.
    pub fn support(&self, d: &[f64]) -> f64 {
        mat::dot(d, &self.center) + self.generators.iter().map(|g| mat::dot(d, g).abs()).sum::<f64>()
    }

    /// Vertices of a 2-D zonotope in counter-clockwise order.
    pub fn vertices_2d(&self) -> Vec<[f64; 2]> {
        assert_eq!(self.dim(), 2, "vertices_2d needs a planar zonotope");
        let mut gens: Vec<[f64; 2]> = self
            .generators
            .iter()
            .filter(|g| g[0] != 0.0 || g[1] != 0.0)
            .map(|g| if g[1] < 0.0 || (g[1] == 0.0 && g[0] < 0.0) { [-g[0], -g[1]] } else { [g[0], g[1]] })
            .collect();
        if gens.is_empty() {
            return vec![[self.center[0], self.center[1]]];
        }
        gens.sort_by(|a, b| a[1].atan2(a[0]).partial_cmp(&b[1].atan2(b[0])).unwrap());
        let mut p = [self.center[0], self.center[1]];
        for g in &gens {
            p[0] -= g[0];
            p[1] -= g[1];
        }
        let mut out = Vec::with_capacity(2 * gens.len());
        for sign in [2.0, -2.0] {
            for g in &gens {
                out.push(p);
                p[0] += sign * g[0];
                p[1] += sign * g[1];
            }
        }
        out
    }

    /// Membership test by linear programming, `|α_j| ≤ 1 + tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        let n = self.dim();
        if x.len() != n {
            return Err(SetError::Dimension(format!("point of length {} in dimension {n}", x.len())));
        }
        let m = self.generators.len();
        let target = mat::vsub(x, &self.center);
        if m == 0 {
            return Ok(mat::norm2(&target) <= tol);
        }
        // G α = target as two inequalities, |α| ≤ 1 + tol
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..n {
            let row: Vec<f64> = self.generators.iter().map(|g| g[i]).collect();
            rows.push(row.clone());
            rhs.push(target[i] + tol);
            rows.push(row.iter().map(|v| -v).collect());
            rhs.push(-target[i] + tol);
        }
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            rows.push(e.clone());
            rhs.push(1.0 + tol);
            e[j] = -1.0;
            rows.push(e);
            rhs.push(1.0 + tol);
        }
        let a = Mat::from_rows(&rows)?;
        Ok(lp::feasible_point(&a, &rhs)?.is_some())
    }
}

/// `Z1 ⊕ Z2`.
pub fn minkowski_sum(z1: &Zonotope, z2: &Zonotope) -> Result<Zonotope> {
    if z1.dim() != z2.dim() {
        return Err(SetError::Dimension(format!("Minkowski sum of dimensions {} and {}", z1.dim(), z2.dim())));
    }
    let mut generators = z1.generators.clone();
    generators.extend(z2.generators.iter().cloned());
    Ok(Zonotope { center: mat::vadd(&z1.center, &z2.center), generators })
}

/// `M Z`.
pub fn linear_map(m: &Mat, z: &Zonotope) -> Result<Zonotope> {
    if m.cols() != z.dim() {
        return Err(SetError::Dimension(format!("{}x{} map applied to dimension {}", m.rows(), m.cols(), z.dim())));
    }
    Ok(Zonotope { center: m.mul_vec(&z.center), generators: z.generators.iter().map(|g| m.mul_vec(g)).collect() })
}

/// Uniformly bounded confidence set: the rectangle aligned with the
/// eigenvectors `v_j` of a covariance bound, with half-widths
/// `cdf⁻¹(1 − p_m) √λ_j`. Rows `j` and `n + j` of the budget belong to
/// `+v_j` and `−v_j`.
#[derive(Debug, Clone)]
pub struct ConfidenceSet {
    pub zonotope: Zonotope,
    /// Eigenvectors as columns.
    pub axes: Mat,
    pub half_widths: Vec<f64>,
    pub quantiles: Vec<f64>,
    /// Axes whose eigenvalue is zero, so the set is flat along them.
    pub degenerate: Vec<usize>,
}

impl ConfidenceSet {
    /// `H = [V  −V]ᵀ`, `h = [w; w]`.
    pub fn to_hpolytope(&self) -> HPolytope {
        let n = self.half_widths.len();
        let vt = self.axes.transpose();
        let normals = vt.vstack(&(-&vt));
        let mut offsets = self.half_widths.clone();
        offsets.extend_from_slice(&self.half_widths);
        HPolytope { normals, offsets, dim: n }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        (0..self.half_widths.len()).all(|j| mat::dot(&self.axes.col(j), x).abs() <= self.half_widths[j] + tol)
    }

    /// The zero set in dimension `n`, used when a disturbance channel is switched off.
    pub fn zero(n: usize) -> Self {
        ConfidenceSet {
            zonotope: Zonotope::origin(n),
            axes: Mat::identity(n),
            half_widths: vec![0.0; n],
            quantiles: vec![0.0; n],
            degenerate: (0..n).collect(),
        }
    }
}

pub fn ubcs(sigma_bound: &Mat, budget: &ProbabilityBudget) -> Result<ConfidenceSet> {
    let n = sigma_bound.rows();
    if budget.per_row().len() != 2 * n {
        return Err(SetError::Budget(format!("{} row probabilities for {} rows", budget.per_row().len(), 2 * n)));
    }
    let eig = sym_eig(sigma_bound)?;
    let floor = -1e-9 * (1.0 + sigma_bound.max_abs());
    if eig.min_value() < floor {
        return Err(SetError::NotPsd(eig.min_value()));
    }
    let mut generators = Vec::with_capacity(n);
    let mut half_widths = Vec::with_capacity(n);
    let mut quantiles = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    for j in 0..n {
        let lambda = eig.values[j].max(0.0);
        let pos = inv_norm_cdf(1.0 - budget.per_row()[j])?;
        let neg = inv_norm_cdf(1.0 - budget.per_row()[n + j])?;
        let q = pos.max(neg);
        let w = q * lambda.sqrt();
        if lambda <= 0.0 {
            degenerate.push(j);
        }
        generators.push(mat::vscale(&eig.vector(j), w));
        half_widths.push(w);
        quantiles.push(q);
    }
    Ok(ConfidenceSet { zonotope: Zonotope::centered(n, generators)?, axes: eig.vectors, half_widths, quantiles, degenerate })
}

/// `{x : H x ≤ h}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    normals: Mat,
    offsets: Vec<f64>,
    dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    pub value: f64,
    pub maximizer: Vec<f64>,
}

impl HPolytope {
    pub fn new(normals: Mat, offsets: Vec<f64>) -> Result<Self> {
        if normals.rows() != offsets.len() {
            return Err(SetError::Dimension(format!("{} normals with {} offsets", normals.rows(), offsets.len())));
        }
        for i in 0..normals.rows() {
            if normals.row(i).iter().all(|v| *v == 0.0) {
                return Err(SetError::ZeroNormal(i));
            }
        }
        if offsets.iter().any(|v| !v.is_finite()) {
            return Err(SetError::Dimension("non-finite offset".into()));
        }
        let dim = normals.cols();
        Ok(HPolytope { normals, offsets, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(normals: &[R], offsets: &[f64]) -> Result<Self> {
        HPolytope::new(Mat::from_rows(normals)?, offsets.to_vec())
    }

    /// Builds from rows, dropping zero normals with nonnegative offset and
    /// collapsing to a canonical empty set if any zero normal has a negative one.
    fn from_rows_lenient(dim: usize, rows: Vec<(Vec<f64>, f64)>) -> Self {
        let mut data = Vec::with_capacity(rows.len() * dim);
        let mut offsets = Vec::with_capacity(rows.len());
        for (n, h) in rows {
            let scale = n.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if scale <= 1e-14 {
                if h < -1e-12 {
                    return HPolytope::canonical_empty(dim);
                }
                continue;
            }
            data.extend(n);
            offsets.push(h);
        }
        let normals = Mat::from_row_major(offsets.len(), dim, data).expect("finite rows");
        HPolytope { normals, offsets, dim }
    }

    /// `x_0 ≤ -1` and `-x_0 ≤ -1`.
    fn canonical_empty(dim: usize) -> Self {
        let mut normals = Mat::zeros(2, dim);
        normals[(0, 0)] = 1.0;
        normals[(1, 0)] = -1.0;
        HPolytope { normals, offsets: vec![-1.0, -1.0], dim }
    }

    /// `lower ≤ x ≤ upper`.
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(SetError::Dimension("box bounds differ in length".into()));
        }
        let n = lower.len();
        let mut rows = Vec::with_capacity(2 * n);
        let mut offsets = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            rows.push(e.clone());
            offsets.push(upper[i]);
            e[i] = -1.0;
            rows.push(e);
            offsets.push(-lower[i]);
        }
        HPolytope::from_rows(&rows, &offsets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len()
    }

    pub fn normals(&self) -> &Mat {
        &self.normals
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.n_rows()).map(move |i| (self.normals.row(i), self.offsets[i]))
    }

    /// Same normals with `offsets` scaled by `s`; for a set containing the origin this is `s·P`.
    pub fn scaled(&self, s: f64) -> Self {
        HPolytope { normals: self.normals.clone(), offsets: mat::vscale(&self.offsets, s), dim: self.dim }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.rows().all(|(n, h)| mat::dot(n, x) <= h + tol)
    }

    /// Largest row violation `max_i (H_i x − h_i)`; negative inside.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows().map(|(n, h)| mat::dot(n, x) - h).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn feasible_point(&self) -> Result<Option<Vec<f64>>> {
        Ok(lp::feasible_point(&self.normals, &self.offsets)?)
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.feasible_point()?.is_none())
    }

    /// `max dᵀx` over the polytope with a maximizing witness.
    pub fn support(&self, d: &[f64]) -> Result<Support> {
        if d.len() != self.dim {
            return Err(SetError::Dimension(format!("direction of length {} in dimension {}", d.len(), self.dim)));
        }
        match lp::maximize(d, &self.normals, &self.offsets)? {
            LpOutcome::Optimal { x, value } => Ok(Support { value, maximizer: x }),
            LpOutcome::Infeasible => Err(SetError::Empty),
            LpOutcome::Unbounded => Err(SetError::Unbounded),
        }
    }

    /// `P ∩ Q`, stacking rows.
    pub fn intersect(&self, other: &HPolytope) -> Result<HPolytope> {
        if self.dim != other.dim {
            return Err(SetError::Dimension(format!("intersection of dimensions {} and {}", self.dim, other.dim)));
        }
        let mut offsets = self.offsets.clone();
        offsets.extend_from_slice(&other.offsets);
        Ok(HPolytope { normals: self.normals.vstack(&other.normals), offsets, dim: self.dim })
    }

    /// `{x : M x ∈ P}`.
    pub fn preimage(&self, m: &Mat) -> Result<HPolytope> {
        if m.rows() != self.dim {
            return Err(SetError::Dimension(format!("preimage under {}x{} of dimension {}", m.rows(), m.cols(), self.dim)));
        }
        let hm = &self.normals * m;
        let rows = (0..self.n_rows()).map(|i| (hm.row(i).to_vec(), self.offsets[i])).collect();
        Ok(HPolytope::from_rows_lenient(m.cols(), rows))
    }

    /// `P ⊖ Z`: each offset loses the zonotope's support along its normal.
    pub fn pontryagin_diff(&self, z: &Zonotope) -> Result<HPolytope> {
        if z.dim() != self.dim {
            return Err(SetError::Dimension(format!("Pontryagin difference of dimensions {} and {}", self.dim, z.dim())));
        }
        let offsets = self.rows().map(|(n, h)| h - z.support(n)).collect();
        Ok(HPolytope { normals: self.normals.clone(), offsets, dim: self.dim })
    }

    /// `inner ⊆ self`, decided row by row with support LPs over `inner`.
    pub fn includes(&self, inner: &HPolytope) -> Result<bool> {
        for (n, h) in self.rows() {
            match inner.support(n) {
                Ok(s) if s.value <= h + INCLUSION_TOL => {}
                Ok(_) | Err(SetError::Unbounded) => return Ok(false),
                Err(e) => return Err(e),
            }
        }
        Ok(true)
    }

    /// Drops duplicate and LP-redundant rows.
    pub fn remove_redundant(&self) -> Result<HPolytope> {
        if self.is_empty()? {
            return Ok(self.clone());
        }
        let mut keep: Vec<usize> = (0..self.n_rows()).collect();
        let mut i = 0;
        while i < keep.len() {
            let row = keep[i];
            let others: Vec<usize> = keep.iter().copied().filter(|&r| r != row).collect();
            let redundant = if others.is_empty() {
                false
            } else {
                let sub = self.select(&others);
                match sub.support(self.normals.row(row)) {
                    Ok(s) => s.value <= self.offsets[row] + 1e-10 * (1.0 + self.offsets[row].abs()),
                    Err(SetError::Unbounded) => false,
                    Err(e) => return Err(e),
                }
            };
            if redundant {
                keep.remove(i);
            } else {
                i += 1;
            }
        }
        Ok(self.select(&keep))
    }

    fn select(&self, rows: &[usize]) -> HPolytope {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.normals.row(r));
        }
        HPolytope {
            normals: Mat::from_row_major(rows.len(), self.dim, data).expect("finite rows"),
            offsets: rows.iter().map(|&r| self.offsets[r]).collect(),
            dim: self.dim,
        }
    }
}

pub fn pontryagin_diff(p: &HPolytope, z: &Zonotope) -> Result<HPolytope> {
    p.pontryagin_diff(z)
}

pub fn lp_support(p: &HPolytope, d: &[f64]) -> Result<Support> {
    p.support(d)
}

pub fn poly_includes(outer: &HPolytope, inner: &HPolytope) -> Result<bool> {
    outer.includes(inner)
}

/// Largest amount by which `Acl Ω ⊕ W ⊆ Ω` fails, over the rows of `Ω`.
/// Nonpositive (up to tolerance) for a robust positive invariant set.
pub fn rpi_certificate(acl: &Mat, w: &Zonotope, omega: &HPolytope) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    let at = acl.transpose();
    for (n, h) in omega.rows() {
        let dir = at.mul_vec(n);
        let s = if dir.iter().all(|v| *v == 0.0) { 0.0 } else { omega.support(&dir)?.value };
        worst = worst.max(s + w.support(n) - h);
    }
    Ok(worst)
}

/// Maximal robust positive invariant subset of `safe` for `x⁺ = Acl x + w`, `w ∈ W`.
///
/// Iterates `Ω_{t+1} = S ∩ {x : Acl x ∈ Ω_t ⊖ W}` from `Ω_0 = S` until
/// `Ω_t ⊆ Ω_{t+1}`; the result has redundant rows removed.
pub fn max_rpi(acl: &Mat, w: &Zonotope, safe: &HPolytope, max_iter: usize) -> Result<HPolytope> {
    let n = safe.dim();
    if acl.rows() != n || acl.cols() != n || w.dim() != n {
        return Err(SetError::Dimension("closed-loop matrix, disturbance and safe set must share a dimension".into()));
    }
    let rho = spectral_radius(acl);
    if rho >= 1.0 {
        return Err(SetError::NotSchur(rho));
    }
    if safe.offsets().iter().any(|h| *h <= 0.0) {
        return Err(SetError::OriginNotInterior);
    }
    let mut omega = safe.clone();
    for t in 0..max_iter {
        let next = safe.intersect(&omega.pontryagin_diff(w)?.preimage(acl)?)?;
        if next.is_empty()? {
            return Err(SetError::EmptyRpi(t + 1));
        }
        if next.includes(&omega)? {
            return next.remove_redundant();
        }
        omega = next;
    }
    Err(SetError::RpiNonTermination { iterations: max_iter, last: Box::new(omega) })
}

/// `base ⊖ (map·A⁰E ⊕ map·A¹E ⊕ … ⊕ map·A^{i−1}E)` for `i = 0..n`.
fn shrinking_tube(
    stage: &'static str,
    base: &HPolytope,
    e: &Zonotope,
    map: Option<&Mat>,
    acl: &Mat,
    n: usize,
) -> Result<Vec<HPolytope>> {
    if n == 0 {
        return Err(SetError::Dimension("tube horizon must be at least 1".into()));
    }
    if acl.rows() != e.dim() || acl.cols() != e.dim() {
        return Err(SetError::Dimension("closed-loop matrix does not match disturbance dimension".into()));
    }
    let mut out = Vec::with_capacity(n);
    let mut acc = Zonotope::origin(base.dim());
    let mut image = e.clone();
    for i in 0..n {
        let set = base.pontryagin_diff(&acc)?;
        if set.is_empty()? {
            return Err(SetError::TighteningInfeasible { stage, index: i });
        }
        out.push(set);
        let term = match map {
            Some(k) => linear_map(k, &image)?,
            None => image.clone(),
        };
        acc = minkowski_sum(&acc, &term)?;
        image = linear_map(acl, &image)?;
    }
    Ok(out)
}

/// State tube `X̄_i = X̂ ⊖ ⨁_{q<i} A_cl^q E`, `i = 0..N−1`.
pub fn tighten_state(xhat: &HPolytope, e: &Zonotope, acl: &Mat, n: usize) -> Result<Vec<HPolytope>> {
    if xhat.dim() != e.dim() {
        return Err(SetError::Dimension("state set and disturbance differ in dimension".into()));
    }
    shrinking_tube("state", xhat, e, None, acl, n)
}

/// Input tube `Ū_i = U ⊖ ⨁_{q<i} K A_cl^q E`, `i = 0..N−1`.
pub fn tighten_input(u: &HPolytope, e: &Zonotope, k: &Mat, acl: &Mat, n: usize) -> Result<Vec<HPolytope>> {
    if k.rows() != u.dim() || k.cols() != e.dim() {
        return Err(SetError::Dimension("gain does not match input set and disturbance".into()));
    }
    shrinking_tube("input", u, e, Some(k), acl, n)
}

/// `X̂_f ⊖ ⨁_{q=0}^{N−1} A_cl^q E`.
pub fn terminal_set(xf_hat: &HPolytope, e: &Zonotope, acl: &Mat, n: usize) -> Result<HPolytope> {
    let mut acc = Zonotope::origin(e.dim());
    let mut image = e.clone();
    for _ in 0..n {
        acc = minkowski_sum(&acc, &image)?;
        image = linear_map(acl, &image)?;
    }
    let set = xf_hat.pontryagin_diff(&acc)?;
    if set.is_empty()? {
        return Err(SetError::TighteningInfeasible { stage: "terminal", index: n });
    }
    Ok(set)
}
