//! Small dense real matrices.
//!
//! Everything in this crate works at dimension ten or below, so the
//! routines here favour accuracy and simplicity over blocking or
//! vectorisation: cyclic Jacobi for symmetric eigenproblems, textbook
//! Cholesky, partial-pivot LU, and a fixed-point Riccati iteration.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatError {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("ragged rows: row {row} has {found} entries, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is singular")]
    Singular,
    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    DareDiverged { iterations: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, MatError>;

/// Dense row-major real matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Mat::zeros(d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Column vector.
    pub fn column(v: &[f64]) -> Self {
        Mat { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    pub fn scalar(v: f64) -> Self {
        Mat { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MatError::Dimension(format!(
                "{} entries for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        let m = Mat { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(MatError::Ragged { row: i, found: r.len(), expected: cols });
            }
            data.extend_from_slice(r);
        }
        Mat::from_row_major(rows.len(), cols, data)
    }

    /// Builds a matrix and checks `|M - Mᵀ|_max ≤ 1e-12 (1 + |M|_max)`.
    pub fn symmetric_from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = Mat::from_rows(rows)?;
        m.require_symmetric()?;
        Ok(m)
    }

    fn check_finite(&self) -> Result<()> {
        for (idx, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(MatError::NonFinite { row: idx / self.cols.max(1), col: idx % self.cols.max(1) });
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square() && self.asymmetry() <= 1e-12 * (1.0 + self.max_abs())
    }

    pub fn require_symmetric(&self) -> Result<()> {
        if !self.is_square() {
            return Err(MatError::Dimension(format!("{}x{} matrix is not square", self.rows, self.cols)));
        }
        if !self.is_symmetric() {
            return Err(MatError::NotSymmetric { asymmetry: self.asymmetry() });
        }
        Ok(())
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrized(&self) -> Mat {
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `M^k` for square `M`.
    pub fn pow(&self, k: usize) -> Mat {
        assert!(self.is_square());
        let mut out = Mat::identity(self.rows);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// `M X Mᵀ`, symmetrized.
    pub fn congruence(&self, x: &Mat) -> Mat {
        (&(self * x) * &self.transpose()).symmetrized()
    }

    /// Stacks `self` above `other`.
    pub fn vstack(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "vstack column mismatch");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Mat { rows: self.rows + other.rows, cols: self.cols, data }
    }

    /// Places `other` to the right of `self`.
    pub fn hstack(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "hstack row mismatch");
        let cols = self.cols + other.cols;
        let mut out = Mat::zeros(self.rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)];
            }
            for j in 0..other.cols {
                out[(i, self.cols + j)] = other[(i, j)];
            }
        }
        out
    }

    /// Rank by singular values of `M Mᵀ` above `tol · max`.
    pub fn rank(&self, tol: f64) -> usize {
        let gram = if self.rows <= self.cols {
            (self * &self.transpose()).symmetrized()
        } else {
            (&self.transpose() * self).symmetrized()
        };
        let eig = sym_eig_unchecked(&gram);
        let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
        if top == 0.0 {
            return 0;
        }
        eig.values.iter().filter(|&&l| l > tol * tol * top).count()
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<'a> Mul<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn mul(self, rhs: &'a Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }
}

impl<'a> Add<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn add(self, rhs: &'a Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add dimension mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn sub(self, rhs: &'a Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub dimension mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{}", self.rows, self.cols)?;
        f.debug_list().entries(self.to_rows()).finish()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn vadd(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn vsub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn vscale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `values`.
    pub vectors: Mat,
}

impl SymEig {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        self.vectors.col(j)
    }

    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// `V f(D) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Mat {
        let n = self.values.len();
        let mut out = Mat::zeros(n, n);
        for (k, &l) in self.values.iter().enumerate() {
            let fl = f(l);
            for i in 0..n {
                let vik = self.vectors[(i, k)] * fl;
                for j in 0..n {
                    out[(i, j)] += vik * self.vectors[(j, k)];
                }
            }
        }
        out.symmetrized()
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eig(m: &Mat) -> Result<SymEig> {
    m.require_symmetric()?;
    Ok(sym_eig_unchecked(m))
}

fn sym_eig_unchecked(m: &Mat) -> SymEig {
    let n = m.rows;
    let mut a = m.symmetrized();
    let mut v = Mat::identity(n);
    let threshold = 1e-14 * a.frobenius();

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= threshold || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    SymEig { values, vectors }
}

/// Löwner order test: `lhs ⪯ rhs` up to `tol` on the smallest eigenvalue of `rhs - lhs`.
pub fn psd_leq(lhs: &Mat, rhs: &Mat, tol: f64) -> Result<bool> {
    if lhs.rows != rhs.rows || lhs.cols != rhs.cols {
        return Err(MatError::Dimension(format!(
            "psd_leq of {}x{} and {}x{}",
            lhs.rows, lhs.cols, rhs.rows, rhs.cols
        )));
    }
    lhs.require_symmetric()?;
    rhs.require_symmetric()?;
    let diff = rhs - lhs;
    Ok(sym_eig_unchecked(&diff).min_value() >= -tol)
}

/// Lower Cholesky factor of a positive definite matrix.
pub fn cholesky(m: &Mat) -> Result<Mat> {
    m.require_symmetric()?;
    let n = m.rows;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(MatError::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Square-root factor `L` with `L Lᵀ = M` for a positive semidefinite `M`.
///
/// Pivots below `zero_tol · (1 + |M|_max)` are treated as zero and their
/// column is left empty; a pivot below the negative of that threshold
/// reports the matrix as indefinite.
pub fn psd_factor(m: &Mat, zero_tol: f64) -> Result<Mat> {
    m.require_symmetric()?;
    let n = m.rows;
    let thresh = zero_tol * (1.0 + m.max_abs());
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -thresh {
            return Err(MatError::NotPositiveDefinite { pivot: j, value: d });
        }
        if d <= thresh {
            continue;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `M X = rhs` for positive definite `M`.
pub fn chol_solve(m: &Mat, rhs: &Mat) -> Result<Mat> {
    if rhs.rows != m.rows {
        return Err(MatError::Dimension(format!("rhs has {} rows, matrix is {}x{}", rhs.rows, m.rows, m.cols)));
    }
    let l = cholesky(m)?;
    let n = m.rows;
    let mut x = rhs.clone();
    for c in 0..rhs.cols {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Moore-Penrose inverse of a symmetric PSD matrix; eigenvalues below
/// `tol · (1 + λ_max)` are treated as zero.
pub fn pinv_sym(m: &Mat, tol: f64) -> Result<Mat> {
    let eig = sym_eig(m)?;
    let cut = tol * (1.0 + eig.max_value().abs());
    Ok(eig.reconstruct_with(|l| if l > cut { 1.0 / l } else { 0.0 }))
}

/// `M⁻¹ rhs` by Cholesky, falling back to the pseudo-inverse when `M` is
/// only semidefinite (e.g. noiseless innovation covariances).
pub fn spd_or_pinv_solve(m: &Mat, rhs: &Mat) -> Result<Mat> {
    match chol_solve(m, rhs) {
        Ok(x) => Ok(x),
        Err(MatError::NotPositiveDefinite { .. }) => Ok(&pinv_sym(m, 1e-12)? * rhs),
        Err(e) => Err(e),
    }
}

/// LU factorisation with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Mat,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    pub fn new(m: &Mat) -> Result<Self> {
        if !m.is_square() {
            return Err(MatError::Dimension(format!("LU of {}x{} matrix", m.rows, m.cols)));
        }
        let n = m.rows;
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, best) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best <= 1e-14 * scale {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        lu[(i, j)] -= f * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Lu { lu, perm, sign, singular })
    }

    pub fn det(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        (0..self.lu.rows).map(|i| self.lu[(i, i)]).product::<f64>() * self.sign
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        if self.singular {
            return Err(MatError::Singular);
        }
        let n = self.lu.rows;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.lu[(i, k)] * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        Ok(x)
    }

    pub fn solve(&self, rhs: &Mat) -> Result<Mat> {
        let mut out = Mat::zeros(rhs.rows, rhs.cols);
        for c in 0..rhs.cols {
            let col = self.solve_vec(&rhs.col(c))?;
            for (i, v) in col.into_iter().enumerate() {
                out[(i, c)] = v;
            }
        }
        Ok(out)
    }
}

pub fn inverse(m: &Mat) -> Result<Mat> {
    Lu::new(m)?.solve(&Mat::identity(m.rows))
}

pub fn det(m: &Mat) -> Result<f64> {
    Ok(Lu::new(m)?.det())
}

/// Spectral radius via repeated squaring, `ρ(M) = lim ‖M^(2^j)‖^(1/2^j)`.
pub fn spectral_radius(m: &Mat) -> f64 {
    assert!(m.is_square());
    let mut cur = m.clone();
    let mut log_scale = 0.0_f64;
    let mut estimate = cur.frobenius();
    for j in 0..48 {
        let nrm = cur.frobenius();
        if nrm == 0.0 {
            return 0.0;
        }
        let power = 2f64.powi(j);
        estimate = ((log_scale + nrm.ln()) / power).exp();
        cur = cur.scale(1.0 / nrm);
        log_scale = 2.0 * (log_scale + nrm.ln());
        cur = &cur * &cur;
    }
    estimate
}

/// Control-form Riccati map `P ↦ AᵀPA − AᵀPG(GᵀPG + Rc)⁻¹GᵀPA + Qc`.
pub fn riccati_map(p: &Mat, a: &Mat, g: &Mat, qc: &Mat, rc: &Mat) -> Result<Mat> {
    let at = a.transpose();
    let pg = p * g;
    let s = &(&g.transpose() * &pg) + rc;
    let gtpa = &pg.transpose() * a;
    let k = spd_or_pinv_solve(&s.symmetrized(), &gtpa)?;
    let atpa = &(&at * p) * a;
    let corr = &gtpa.transpose() * &k;
    Ok((&(&atpa - &corr) + qc).symmetrized())
}

/// Discrete algebraic Riccati equation by fixed-point iteration from `P₀ = Qc`.
///
/// Returns `P` with `|P − f(P)|_max ≤ tol` where `f` is [`riccati_map`].
/// Call with `(Aᵀ, Cᵀ, Q, R)` for the filter-form equation.
pub fn dare(a: &Mat, g: &Mat, qc: &Mat, rc: &Mat, tol: f64, max_iter: usize) -> Result<Mat> {
    let n = a.rows;
    if !a.is_square() || g.rows != n || qc.rows != n || !qc.is_square() || rc.rows != g.cols || !rc.is_square()
    {
        return Err(MatError::Dimension(format!(
            "dare with A {}x{}, G {}x{}, Qc {}x{}, Rc {}x{}",
            a.rows, a.cols, g.rows, g.cols, qc.rows, qc.cols, rc.rows, rc.cols
        )));
    }
    qc.require_symmetric()?;
    rc.require_symmetric()?;
    let mut p = qc.symmetrized();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = riccati_map(&p, a, g, qc, rc)?;
        residual = (&next - &p).max_abs();
        p = next;
        if residual <= tol {
            // Residual of the returned iterate itself.
            let check = (&riccati_map(&p, a, g, qc, rc)? - &p).max_abs();
            if check <= tol {
                return Ok(p);
            }
        }
        if !residual.is_finite() {
            break;
        }
    }
    Err(MatError::DareDiverged { iterations: max_iter, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = sym_eig(&Mat::identity(2)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        let e = sym_eig(&Mat::from_diag(&[1.0, 4.0])).unwrap();
        assert_eq!(e.values, vec![4.0, 1.0]);
        assert!(close(e.vectors[(1, 0)].abs(), 1.0, 1e-15));
        assert!(close(e.vectors[(0, 1)].abs(), 1.0, 1e-15));
    }

    #[test]
    fn eig_two_by_two() {
        // characteristic polynomial (2-l)^2 - 1 = 0 gives l = 3, 1
        let m = Mat::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = sym_eig(&m).unwrap();
        assert!(close(e.values[0], 3.0, 1e-14));
        assert!(close(e.values[1], 1.0, 1e-14));
        let v0 = e.vector(0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(v0[0].abs(), s, 1e-14) && close(v0[0], v0[1], 1e-14));
        let v1 = e.vector(1);
        assert!(close(v1[0], -v1[1], 1e-14));
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let m = Mat::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&m), Err(MatError::NotSymmetric { .. })));
    }

    #[test]
    fn psd_leq_examples() {
        let i = Mat::identity(2);
        assert!(psd_leq(&i, &i.scale(2.0), 1e-9).unwrap());
        assert!(!psd_leq(&i.scale(2.0), &i, 1e-9).unwrap());
        assert!(!psd_leq(&Mat::from_diag(&[1.0, 3.0]), &Mat::from_diag(&[3.0, 1.0]), 1e-9).unwrap());
        assert!(psd_leq(&Mat::identity(2), &Mat::identity(3), 1e-9).is_err());
    }

    #[test]
    fn dare_scalar_cases() {
        let one = Mat::scalar(1.0);
        let p = dare(&Mat::scalar(0.0), &one, &one, &one, 1e-12, 100_000).unwrap();
        assert!(close(p[(0, 0)], 1.0, 1e-12));
        // P^2 - 0.25 P - 1 = 0
        let expected = (0.25 + (0.0625_f64 + 4.0).sqrt()) / 2.0;
        let p = dare(&Mat::scalar(0.5), &one, &one, &one, 1e-12, 100_000).unwrap();
        assert!(close(p[(0, 0)], expected, 1e-11));
        assert!(close(expected, 1.13278, 1e-5));
    }

    #[test]
    fn dare_reports_divergence() {
        // unstable and uncontrollable: no stabilising solution
        let p = dare(&Mat::scalar(2.0), &Mat::scalar(0.0), &Mat::scalar(1.0), &Mat::scalar(1.0), 1e-12, 50);
        assert!(matches!(p, Err(MatError::DareDiverged { .. })));
    }

    #[test]
    fn chol_solve_examples() {
        let b = Mat::column(&[3.0, -1.0]);
        assert_eq!(chol_solve(&Mat::identity(2), &b).unwrap(), b);
        let x = chol_solve(&Mat::from_diag(&[2.0, 4.0]), &Mat::column(&[2.0, 4.0])).unwrap();
        assert!(close(x[(0, 0)], 1.0, 1e-15) && close(x[(1, 0)], 1.0, 1e-15));
        let spd = Mat::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]]).unwrap();
        let rhs = Mat::column(&[1.0, 2.0, 3.0]);
        let x = chol_solve(&spd, &rhs).unwrap();
        let back = &spd * &x;
        assert!((&back - &rhs).max_abs() < 1e-12);
        assert!(matches!(
            chol_solve(&Mat::from_diag(&[1.0, -1.0]), &rhs.clone()),
            Err(MatError::Dimension(_))
        ));
        assert!(matches!(
            chol_solve(&Mat::from_diag(&[1.0, -1.0]), &Mat::column(&[1.0, 1.0])),
            Err(MatError::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn psd_factor_handles_rank_deficiency() {
        let m = Mat::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let l = psd_factor(&m, 1e-12).unwrap();
        assert!((&(&l * &l.transpose()) - &m).max_abs() < 1e-14);
        assert!(psd_factor(&Mat::from_diag(&[1.0, -0.5]), 1e-12).is_err());
        assert_eq!(psd_factor(&Mat::zeros(2, 2), 1e-12).unwrap(), Mat::zeros(2, 2));
    }

    #[test]
    fn lu_det_inverse() {
        let m = Mat::from_rows(&[[0.0, 2.0], [1.0, 1.0]]).unwrap();
        assert!(close(det(&m).unwrap(), -2.0, 1e-15));
        let inv = inverse(&m).unwrap();
        assert!((&(&m * &inv) - &Mat::identity(2)).max_abs() < 1e-15);
        assert_eq!(det(&Mat::zeros(2, 2)).unwrap(), 0.0);
        assert!(matches!(inverse(&Mat::zeros(2, 2)), Err(MatError::Singular)));
    }

    #[test]
    fn spectral_radius_examples() {
        assert!(close(spectral_radius(&Mat::from_diag(&[0.5, -0.9])), 0.9, 1e-9));
        // Jordan block: norm grows polynomially but radius is exactly 0.5
        let j = Mat::from_rows(&[[0.5, 100.0], [0.0, 0.5]]).unwrap();
        assert!(close(spectral_radius(&j), 0.5, 1e-6));
        let nil = Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert_eq!(spectral_radius(&nil), 0.0);
    }

    #[test]
    fn rank_examples() {
        let m = Mat::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        assert_eq!(m.rank(1e-10), 1);
        assert_eq!(Mat::identity(3).rank(1e-10), 3);
        assert_eq!(Mat::zeros(2, 3).rank(1e-10), 0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(Mat::from_rows(&[[1.0, f64::NAN]]), Err(MatError::NonFinite { row: 0, col: 1 })));
        assert!(matches!(Mat::from_rows(&[vec![1.0, 2.0], vec![1.0]]), Err(MatError::Ragged { .. })));
    }
}
