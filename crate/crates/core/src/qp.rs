//! Dense convex quadratic programs `min ½xᵀHx + fᵀx  s.t.  G x ≤ b`.
//!
//! Feasibility is settled first by a phase-1 linear program that maximises
//! the uniform slack of the row-normalised constraints, so an infeasible
//! status always carries a certificate. The optimum is then found by a
//! primal active-set method started from the phase-1 point.

use thiserror::Error;

use crate::lp::{self, LpError, LpOutcome};
use crate::mat::{self, cholesky, Lu, Mat, MatError};

/// Phase-1 slack above which a problem is declared infeasible.
pub const INFEASIBILITY_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("QP dimension mismatch: {0}")]
    Dimension(String),
    #[error("QP Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("active-set method hit the iteration limit ({0})")]
    IterationLimit(usize),
}

#[derive(Debug, Clone)]
pub struct Qp {
    pub h: Mat,
    pub f: Vec<f64>,
    pub g: Mat,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub status: QpStatus,
    /// Minimizer when optimal, the phase-1 point otherwise.
    pub x: Vec<f64>,
    /// `½xᵀHx + fᵀx`.
    pub objective: f64,
    pub multipliers: Vec<f64>,
    /// Largest normalised row violation of the phase-1 optimum.
    pub phase1_violation: f64,
    /// Max of stationarity, primal, dual and complementarity residuals on the
    /// normalised problem.
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl Qp {
    pub fn new(h: Mat, f: Vec<f64>, g: Mat, b: Vec<f64>) -> Result<Self, QpError> {
        let n = f.len();
        if h.rows() != n || h.cols() != n {
            return Err(QpError::Dimension(format!("{}x{} Hessian for {n} variables", h.rows(), h.cols())));
        }
        if g.cols() != n && g.rows() > 0 {
            return Err(QpError::Dimension(format!("constraint matrix has {} columns for {n} variables", g.cols())));
        }
        if g.rows() != b.len() {
            return Err(QpError::Dimension(format!("{} constraint rows with {} bounds", g.rows(), b.len())));
        }
        Ok(Qp { h, f, g, b })
    }

    pub fn n_vars(&self) -> usize {
        self.f.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * mat::dot(x, &self.h.mul_vec(x)) + mat::dot(&self.f, x)
    }
}

/// Normalised copy: unit-norm constraint rows, objective scaled to unit Hessian magnitude.
struct Scaled {
    h: Mat,
    f: Vec<f64>,
    rows: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Scaled {
    fn new(qp: &Qp) -> Self {
        let s = qp.h.max_abs().max(1e-300);
        let h = qp.h.scale(1.0 / s);
        let f = mat::vscale(&qp.f, 1.0 / s);
        let mut rows = Vec::new();
        let mut b = Vec::new();
        for i in 0..qp.n_constraints() {
            let r = qp.g.row(i);
            let norm = mat::norm2(r);
            if norm == 0.0 {
                rows.push(r.to_vec());
                b.push(qp.b[i]);
            } else {
                rows.push(mat::vscale(r, 1.0 / norm));
                b.push(qp.b[i] / norm);
            }
        }
        Scaled { h, f, rows, b }
    }

    fn slack(&self, i: usize, x: &[f64]) -> f64 {
        self.b[i] - mat::dot(&self.rows[i], x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        mat::vadd(&self.h.mul_vec(x), &self.f)
    }
}

/// Point maximising the smallest slack; returns it with the normalised violation `max(0, −slack)`.
fn phase_one(s: &Scaled, n: usize) -> Result<(Vec<f64>, f64), QpError> {
    let m = s.rows.len();
    // variables (x, t): row_i·x + t ≤ b_i, t ≤ 1; maximise t
    let mut data = Vec::with_capacity((m + 1) * (n + 1));
    let mut rhs = Vec::with_capacity(m + 1);
    for i in 0..m {
        data.extend_from_slice(&s.rows[i]);
        data.push(1.0);
        rhs.push(s.b[i]);
    }
    data.extend(std::iter::repeat_n(0.0, n));
    data.push(1.0);
    rhs.push(1.0);
    let a = Mat::from_row_major(m + 1, n + 1, data)?;
    let mut cost = vec![0.0; n + 1];
    cost[n] = 1.0;
    match lp::maximize(&cost, &a, &rhs)? {
        LpOutcome::Optimal { mut x, value } => {
            x.truncate(n);
            let worst = (0..m).map(|i| -s.slack(i, &x)).fold(0.0_f64, f64::max);
            Ok((x, worst.max(-value).max(0.0)))
        }
        // Infeasible cannot occur (t is free); treat defensively as maximal violation.
        LpOutcome::Infeasible => Ok((vec![0.0; n], f64::INFINITY)),
        LpOutcome::Unbounded => unreachable!("t is bounded above"),
    }
}

fn kkt(s: &Scaled, x: &[f64], lambda: &[f64]) -> f64 {
    let mut stat = s.gradient(x);
    for (i, l) in lambda.iter().enumerate() {
        if *l != 0.0 {
            for (v, g) in stat.iter_mut().zip(&s.rows[i]) {
                *v += l * g;
            }
        }
    }
    let mut r = stat.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for (i, l) in lambda.iter().enumerate() {
        let slack = s.slack(i, x);
        r = r.max(-slack).max(-l).max((l * slack).abs());
    }
    r
}

/// Solves the equality-constrained step `min ½pᵀHp + gᵀp  s.t.  G_W p = 0`.
fn eqp(s: &Scaled, grad: &[f64], working: &[usize]) -> Result<(Vec<f64>, Vec<f64>), QpError> {
    let n = grad.len();
    let w = working.len();
    let mut k = Mat::zeros(n + w, n + w);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = s.h[(i, j)];
        }
    }
    for (a, &row) in working.iter().enumerate() {
        for j in 0..n {
            k[(n + a, j)] = s.rows[row][j];
            k[(j, n + a)] = s.rows[row][j];
        }
    }
    let mut rhs = vec![0.0; n + w];
    for i in 0..n {
        rhs[i] = -grad[i];
    }
    let sol = Lu::new(&k)?.solve_vec(&rhs)?;
    Ok((sol[..n].to_vec(), sol[n..].to_vec()))
}

pub fn qp_solve(qp: &Qp) -> Result<QpSolution, QpError> {
    let n = qp.n_vars();
    if cholesky(&qp.h.symmetrized()).is_err() {
        return Err(QpError::NotPositiveDefinite);
    }
    let s = Scaled::new(qp);
    let m = s.rows.len();

    if (0..m).any(|i| s.rows[i].iter().all(|v| *v == 0.0) && s.b[i] < -INFEASIBILITY_TOL) {
        return Ok(QpSolution {
            status: QpStatus::Infeasible,
            x: vec![0.0; n],
            objective: 0.0,
            multipliers: vec![0.0; m],
            phase1_violation: f64::INFINITY,
            kkt_residual: f64::NAN,
            iterations: 0,
        });
    }

    let (mut x, violation) = if m == 0 { (vec![0.0; n], 0.0) } else { phase_one(&s, n)? };
    if violation > INFEASIBILITY_TOL {
        return Ok(QpSolution {
            status: QpStatus::Infeasible,
            objective: qp.objective(&x),
            x,
            multipliers: vec![0.0; m],
            phase1_violation: violation,
            kkt_residual: f64::NAN,
            iterations: 0,
        });
    }

    let limit = 100 + 50 * (n + m);
    let mut working: Vec<usize> = Vec::new();
    for it in 1..=limit {
        let grad = s.gradient(&x);
        let (p, lambda) = eqp(&s, &grad, &working)?;
        let pnorm = p.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let xnorm = x.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        if pnorm <= 1e-12 * xnorm {
            // multipliers of the working set; drop the most negative
            let (pos, min) = lambda
                .iter()
                .enumerate()
                .fold((usize::MAX, 0.0), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
            if pos == usize::MAX || min >= -1e-12 {
                let mut multipliers = vec![0.0; m];
                for (a, &row) in working.iter().enumerate() {
                    multipliers[row] = lambda[a].max(0.0);
                }
                let kkt_residual = kkt(&s, &x, &multipliers);
                // report multipliers for the caller's unscaled problem
                let hs = qp.h.max_abs().max(1e-300);
                for (i, l) in multipliers.iter_mut().enumerate() {
                    let norm = mat::norm2(qp.g.row(i));
                    if norm > 0.0 {
                        *l *= hs / norm;
                    }
                }
                return Ok(QpSolution {
                    status: QpStatus::Optimal,
                    objective: qp.objective(&x),
                    x,
                    multipliers,
                    phase1_violation: violation,
                    kkt_residual,
                    iterations: it,
                });
            }
            working.remove(pos);
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if working.contains(&i) {
                continue;
            }
            let gp = mat::dot(&s.rows[i], &p);
            if gp > 1e-14 * pnorm {
                let ratio = s.slack(i, &x).max(0.0) / gp;
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(i);
                }
            }
        }
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    Err(QpError::IterationLimit(limit))
}
