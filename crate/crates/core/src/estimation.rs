//! Kalman filter schedules and uniform covariance bounds.
//!
//! For a finite task the filter gains and covariances do not depend on the
//! measurements, so the whole schedule is computed once up front. The
//! bounds produced here cover every posterior covariance `P_k` and every
//! estimator-disturbance covariance `Φ_k` of that schedule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat::{self, dare, inverse, psd_leq, spd_or_pinv_solve, sym_eig, Lu, Mat, MatError};

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("filter step {k} is outside the schedule (horizon {horizon})")]
    StepOutOfRange { k: usize, horizon: usize },
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("{which} bound fails at step {k} (min eigenvalue of gap {gap:e})")]
    BoundVerification { which: &'static str, k: usize, gap: f64 },
}

pub type Result<T> = std::result::Result<T, EstimationError>;

/// Linear Gaussian plant
/// `x_{k+1} = A x_k + B u_k + w_k`, `y_k = C x_k + v_k`,
/// `w ~ N(0, Qw)`, `v ~ N(0, Rv)`, `x_0 ~ N(mu0, Sigma0)`, over `horizon` steps.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub qw: Mat,
    pub rv: Mat,
    pub mu0: Vec<f64>,
    pub sigma0: Mat,
    pub horizon: usize,
}

fn require_psd(name: &str, m: &Mat) -> Result<()> {
    m.require_symmetric()
        .map_err(|e| EstimationError::InvalidModel(format!("{name}: {e}")))?;
    let min = sym_eig(m)?.min_value();
    if min < -1e-12 * (1.0 + m.max_abs()) {
        return Err(EstimationError::InvalidModel(format!("{name} is not positive semidefinite (min eigenvalue {min:e})")));
    }
    Ok(())
}

impl SystemModel {
    /// Validates dimensions, covariance definiteness, controllability and observability.
    ///
    /// `Rv` may be singular (the noiseless case); gains then use the pseudo-inverse
    /// of the innovation covariance.
    #[allow(clippy::too_many_arguments)]
    pub fn new(a: Mat, b: Mat, c: Mat, qw: Mat, rv: Mat, mu0: Vec<f64>, sigma0: Mat, horizon: usize) -> Result<Self> {
        let nx = a.rows();
        let dim = |what: &str, m: &Mat, r: usize, c: usize| {
            if m.rows() != r || m.cols() != c {
                Err(EstimationError::InvalidModel(format!(
                    "{what} is {}x{}, expected {r}x{c}",
                    m.rows(),
                    m.cols()
                )))
            } else {
                Ok(())
            }
        };
        if nx == 0 {
            return Err(EstimationError::InvalidModel("empty state".into()));
        }
        dim("A", &a, nx, nx)?;
        if b.rows() != nx || b.cols() == 0 {
            return Err(EstimationError::InvalidModel(format!("B is {}x{}, expected {nx}xn_u", b.rows(), b.cols())));
        }
        if c.cols() != nx || c.rows() == 0 {
            return Err(EstimationError::InvalidModel(format!("C is {}x{}, expected n_yx{nx}", c.rows(), c.cols())));
        }
        let ny = c.rows();
        dim("Q", &qw, nx, nx)?;
        dim("R", &rv, ny, ny)?;
        dim("Sigma0", &sigma0, nx, nx)?;
        if mu0.len() != nx {
            return Err(EstimationError::InvalidModel(format!("mu0 has {} entries, expected {nx}", mu0.len())));
        }
        if mu0.iter().any(|v| !v.is_finite()) {
            return Err(EstimationError::InvalidModel("mu0 must be finite".into()));
        }
        if horizon < 2 {
            return Err(EstimationError::InvalidModel("task horizon must be at least 2".into()));
        }
        require_psd("Q", &qw)?;
        require_psd("R", &rv)?;
        require_psd("Sigma0", &sigma0)?;

        let mut ctrb = b.clone();
        let mut block = b.clone();
        let mut obsv = c.clone();
        let mut oblock = c.clone();
        for _ in 1..nx {
            block = &a * &block;
            ctrb = ctrb.hstack(&block);
            oblock = &oblock * &a;
            obsv = obsv.vstack(&oblock);
        }
        if ctrb.rank(1e-10) < nx {
            return Err(EstimationError::InvalidModel("(A, B) is not controllable".into()));
        }
        if obsv.rank(1e-10) < nx {
            return Err(EstimationError::InvalidModel("(A, C) is not observable".into()));
        }
        Ok(SystemModel { a, b, c, qw, rv, mu0, sigma0, horizon })
    }

    pub fn nx(&self) -> usize {
        self.a.rows()
    }

    pub fn nu(&self) -> usize {
        self.b.cols()
    }

    pub fn ny(&self) -> usize {
        self.c.rows()
    }
}

/// Precomputed filter gains and covariances for steps `0..T`.
///
/// `noise_cov` has `T - 1` entries: `Φ_k` needs the gain `L_{k+1}`, which
/// does not exist for the final step.
#[derive(Debug, Clone)]
pub struct KalmanSchedule {
    pub gains: Vec<Mat>,
    pub prior_cov: Vec<Mat>,
    pub post_cov: Vec<Mat>,
    pub noise_cov: Vec<Mat>,
}

impl KalmanSchedule {
    pub fn horizon(&self) -> usize {
        self.gains.len()
    }
}

/// Gain and posterior for one measurement update; also returns the innovation covariance.
fn measurement_update(model: &SystemModel, prior: &Mat) -> Result<(Mat, Mat, Mat)> {
    let ct = model.c.transpose();
    let pct = prior * &ct;
    let innov = (&(&model.c * &pct) + &model.rv).symmetrized();
    // L = P⁻Cᵀ S⁻¹, computed as (S⁻¹ C P⁻)ᵀ
    let gain = spd_or_pinv_solve(&innov, &pct.transpose())?.transpose();
    let i_lc = &Mat::identity(model.nx()) - &(&gain * &model.c);
    let post = (&i_lc * prior).symmetrized();
    Ok((gain, post, innov))
}

pub fn kalman_schedule(model: &SystemModel) -> Result<KalmanSchedule> {
    let t = model.horizon;
    let mut gains = Vec::with_capacity(t);
    let mut prior_cov = Vec::with_capacity(t);
    let mut post_cov = Vec::with_capacity(t);
    let mut innovations = Vec::with_capacity(t);
    let mut prior = model.sigma0.symmetrized();
    for _ in 0..t {
        let (gain, post, innov) = measurement_update(model, &prior)?;
        gains.push(gain);
        innovations.push(innov);
        let next = (&model.a.congruence(&post) + &model.qw).symmetrized();
        prior_cov.push(std::mem::replace(&mut prior, next));
        post_cov.push(post);
    }
    // Φ_k = L_{k+1} (C (A P_k Aᵀ + Q) Cᵀ + R) L_{k+1}ᵀ, and the bracket is the
    // innovation covariance of step k + 1.
    let noise_cov = (0..t - 1).map(|k| gains[k + 1].congruence(&innovations[k + 1])).collect();
    Ok(KalmanSchedule { gains, prior_cov, post_cov, noise_cov })
}

/// Current estimate `x̂_k` at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub xhat: Vec<f64>,
    pub k: usize,
}

/// `x̂_0 = μ_0 + L_0 (y_0 − C μ_0)`.
pub fn filter_init(model: &SystemModel, y0: &[f64], schedule: &KalmanSchedule) -> Result<FilterState> {
    if y0.len() != model.ny() {
        return Err(EstimationError::InvalidModel(format!("y0 has {} entries, expected {}", y0.len(), model.ny())));
    }
    let innov = mat::vsub(y0, &model.c.mul_vec(&model.mu0));
    let xhat = mat::vadd(&model.mu0, &schedule.gains[0].mul_vec(&innov));
    Ok(FilterState { xhat, k: 0 })
}

impl FilterState {
    /// `x̂⁻ = A x̂ + B u`, then `x̂ = x̂⁻ + L_{k+1}(y − C x̂⁻)`.
    pub fn step(&self, u: &[f64], y_next: &[f64], model: &SystemModel, schedule: &KalmanSchedule) -> Result<FilterState> {
        let horizon = schedule.horizon();
        if self.k + 1 >= horizon {
            return Err(EstimationError::StepOutOfRange { k: self.k + 1, horizon });
        }
        if u.len() != model.nu() || y_next.len() != model.ny() {
            return Err(EstimationError::InvalidModel("input or measurement dimension mismatch".into()));
        }
        let prior = mat::vadd(&model.a.mul_vec(&self.xhat), &model.b.mul_vec(u));
        let innov = mat::vsub(y_next, &model.c.mul_vec(&prior));
        let xhat = mat::vadd(&prior, &schedule.gains[self.k + 1].mul_vec(&innov));
        Ok(FilterState { xhat, k: self.k + 1 })
    }
}

pub fn filter_step(
    state: &FilterState,
    u: &[f64],
    y_next: &[f64],
    model: &SystemModel,
    schedule: &KalmanSchedule,
) -> Result<FilterState> {
    state.step(u, y_next, model, schedule)
}

/// Steady-state prior covariance `P_∞`: the filter-form Riccati equation solved as
/// the control-form one with `(Aᵀ, Cᵀ)`.
pub fn steady_state_prior(model: &SystemModel, tol: f64, max_iter: usize) -> Result<Mat> {
    Ok(dare(&model.a.transpose(), &model.c.transpose(), &model.qw, &model.rv, tol, max_iter)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssumptionReport {
    /// `Σ_0 ⪯ P_∞`.
    pub initial_covariance: bool,
    /// `A` nonsingular.
    pub invertible_dynamics: bool,
}

impl AssumptionReport {
    pub fn all(&self) -> bool {
        self.initial_covariance && self.invertible_dynamics
    }
}

pub fn check_assumptions(model: &SystemModel, p_inf: &Mat, tol: f64) -> Result<AssumptionReport> {
    let initial_covariance = psd_leq(&model.sigma0, p_inf, tol)?;
    let invertible_dynamics = {
        let lu = Lu::new(&model.a)?;
        !lu.is_singular() && lu.det().abs() > 1e-12
    };
    Ok(AssumptionReport { initial_covariance, invertible_dynamics })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    AnalyticMd,
    ScaledReference,
}

/// Uniform upper bounds on the schedule's `P_k` and `Φ_k`.
#[derive(Debug, Clone)]
pub struct CovarianceBound {
    pub p_bar: Mat,
    pub phi_bar: Mat,
    pub method: BoundMethod,
    pub p_inf: Mat,
}

/// Checks `P_k ⪯ P̄` and `Φ_k ⪯ Φ̄` for every step of the schedule.
pub fn verify_bound(schedule: &KalmanSchedule, bound: &CovarianceBound, tol: f64) -> Result<()> {
    for (k, p) in schedule.post_cov.iter().enumerate() {
        let gap = sym_eig(&(&bound.p_bar - p).symmetrized())?.min_value();
        if gap < -tol {
            return Err(EstimationError::BoundVerification { which: "P", k, gap });
        }
    }
    for (k, phi) in schedule.noise_cov.iter().enumerate() {
        let gap = sym_eig(&(&bound.phi_bar - phi).symmetrized())?.min_value();
        if gap < -tol {
            return Err(EstimationError::BoundVerification { which: "Phi", k, gap });
        }
    }
    Ok(())
}

/// Closed-form bounds `P̄ = A⁻¹(P_∞ − Q)A⁻ᵀ`, `Φ̄ = P_∞`.
///
/// Valid only when `Σ_0 ⪯ P_∞` and `A` is invertible; both are checked.
pub fn bound_analytic_md(model: &SystemModel, schedule: &KalmanSchedule, p_inf: &Mat, tol: f64) -> Result<CovarianceBound> {
    let report = check_assumptions(model, p_inf, tol)?;
    if !report.initial_covariance {
        return Err(EstimationError::AssumptionViolated("Sigma0 is not bounded by the steady-state prior covariance".into()));
    }
    if !report.invertible_dynamics {
        return Err(EstimationError::AssumptionViolated("A is singular".into()));
    }
    let a_inv = inverse(&model.a)?;
    let p_bar = a_inv.congruence(&(p_inf - &model.qw));
    let bound = CovarianceBound { p_bar, phi_bar: p_inf.symmetrized(), method: BoundMethod::AnalyticMd, p_inf: p_inf.clone() };
    verify_bound(schedule, &bound, tol)?;
    Ok(bound)
}

/// Largest generalized eigenvalue of `(M, R)` for each `M`, i.e. the smallest
/// `α` with `M ⪯ α R` for all of them.
fn min_scale(mats: &[Mat], reference: &Mat) -> Result<f64> {
    let eig = sym_eig(reference)?;
    let inv_sqrt = eig.reconstruct_with(|l| 1.0 / l.sqrt());
    let mut alpha = 0.0_f64;
    for m in mats {
        let w = inv_sqrt.congruence(m);
        alpha = alpha.max(sym_eig(&w)?.max_value());
    }
    Ok(alpha)
}

/// Bounds shaped like `P_∞ + εI` and scaled just enough to cover the schedule.
pub fn bound_scaled_reference(schedule: &KalmanSchedule, p_inf: &Mat, eps: f64) -> Result<CovarianceBound> {
    let n = p_inf.rows();
    let reference = (p_inf + &Mat::identity(n).scale(eps)).symmetrized();
    let alpha_p = min_scale(&schedule.post_cov, &reference)?;
    let alpha_phi = min_scale(&schedule.noise_cov, &reference)?;
    Ok(CovarianceBound {
        p_bar: reference.scale(alpha_p),
        phi_bar: reference.scale(alpha_phi),
        method: BoundMethod::ScaledReference,
        p_inf: p_inf.clone(),
    })
}
