//! Closed-loop simulation and seeded Monte-Carlo campaigns.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::estimation::{filter_init, EstimationError, KalmanSchedule, SystemModel};
use crate::mat::{self, psd_factor, Mat, MatError};
use crate::sets::HPolytope;
use crate::smpc::{control_step, feasibility_probe, feasible_box, solve, MpcProblem, MpcStatus, SmpcError};
use crate::qp::QpError;

const FACTOR_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Smpc(#[from] SmpcError),
    #[error("invalid simulation request: {0}")]
    Invalid(String),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Per-run random stream: ChaCha8 keyed by the base seed, one stream per run.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_index);
        RngStream { seed, stream_index, rng, spare: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Box–Muller standard normal.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 ∈ (0, 1] keeps the logarithm finite
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// `N(mean, cov)` with a precomputed square-root factor.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: Vec<f64>,
    factor: Mat,
    zero: bool,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: &Mat) -> Result<Self> {
        if cov.rows() != mean.len() {
            return Err(SimError::Invalid(format!("{}x{} covariance for a mean of length {}", cov.rows(), cov.cols(), mean.len())));
        }
        let factor = psd_factor(cov, FACTOR_ZERO_TOL)?;
        let zero = factor.max_abs() == 0.0;
        Ok(Gaussian { mean, factor, zero })
    }

    pub fn sample(&self, stream: &mut RngStream) -> Vec<f64> {
        // draws are taken even for a zero covariance so streams stay aligned
        let z: Vec<f64> = (0..self.mean.len()).map(|_| stream.standard_normal()).collect();
        if self.zero {
            return self.mean.clone();
        }
        mat::vadd(&self.mean, &self.factor.mul_vec(&z))
    }
}

pub fn gaussian_draw(stream: &mut RngStream, mean: &[f64], cov: &Mat) -> Result<Vec<f64>> {
    Ok(Gaussian::new(mean.to_vec(), cov)?.sample(stream))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub xhat: Vec<f64>,
    /// Empty when the controller was infeasible.
    pub u: Vec<f64>,
    pub feasible: bool,
    pub violated: bool,
}

impl StepRecord {
    /// `e_k = x_k − x̂_k`.
    pub fn estimation_error(&self) -> Vec<f64> {
        mat::vsub(&self.x, &self.xhat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Success,
    InfeasibleAt(usize),
    SolverLimitAt(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub steps: Vec<StepRecord>,
    pub outcome: RunOutcome,
}

impl SimTrace {
    pub fn violations(&self) -> usize {
        self.steps.iter().filter(|s| s.violated).count()
    }

    /// `n_k = x̂_{k+1} − A x̂_k − B u_k` for every completed transition.
    pub fn estimator_disturbances(&self, model: &SystemModel) -> Vec<Vec<f64>> {
        self.steps
            .windows(2)
            .map(|w| {
                let pred = mat::vadd(&model.a.mul_vec(&w[0].xhat), &model.b.mul_vec(&w[0].u));
                mat::vsub(&w[1].xhat, &pred)
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let Some(first) = self.steps.first() else { return out };
        let mut header = vec!["k".to_string()];
        for (name, len) in [("x", first.x.len()), ("xhat", first.xhat.len()), ("y", first.y.len())] {
            header.extend((0..len).map(|i| format!("{name}{i}")));
        }
        let nu = self.steps.iter().map(|s| s.u.len()).max().unwrap_or(0);
        header.extend((0..nu).map(|i| format!("u{i}")));
        header.push("feasible".into());
        header.push("violated".into());
        out.push_str(&header.join(","));
        out.push('\n');
        for s in &self.steps {
            let mut row = vec![s.k.to_string()];
            row.extend(s.x.iter().chain(&s.xhat).chain(&s.y).map(|v| format!("{v:?}")));
            row.extend((0..nu).map(|i| s.u.get(i).map_or(String::new(), |v| format!("{v:?}"))));
            row.push(u8::from(s.feasible).to_string());
            row.push(u8::from(s.violated).to_string());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Everything one closed-loop run needs.
#[derive(Debug, Clone, Copy)]
pub struct ClosedLoop<'a> {
    pub model: &'a SystemModel,
    pub schedule: &'a KalmanSchedule,
    pub controller: &'a MpcProblem,
    /// The untightened state constraint `X`.
    pub state_constraint: &'a HPolytope,
}

struct Noise {
    x0: Gaussian,
    w: Gaussian,
    v: Gaussian,
}

impl Noise {
    fn new(model: &SystemModel) -> Result<Self> {
        Ok(Noise {
            x0: Gaussian::new(model.mu0.clone(), &model.sigma0)?,
            w: Gaussian::new(vec![0.0; model.nx()], &model.qw)?,
            v: Gaussian::new(vec![0.0; model.ny()], &model.rv)?,
        })
    }
}

fn run_with(sys: &ClosedLoop<'_>, noise: &Noise, stream: &mut RngStream) -> Result<SimTrace> {
    let model = sys.model;
    let horizon = model.horizon;
    let mut x = noise.x0.sample(stream);
    let mut y = mat::vadd(&model.c.mul_vec(&x), &noise.v.sample(stream));
    let mut filter = filter_init(model, &y, sys.schedule)?;
    let mut steps = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let violated = !sys.state_constraint.contains(&x, 0.0);
        let step = match control_step(sys.controller, &filter.xhat) {
            Ok(s) => s,
            Err(SmpcError::Qp(QpError::IterationLimit(_))) => {
                steps.push(StepRecord { k, x, y, xhat: filter.xhat, u: Vec::new(), feasible: false, violated });
                return Ok(SimTrace { steps, outcome: RunOutcome::SolverLimitAt(k) });
            }
            Err(e) => return Err(e.into()),
        };
        let Some(u) = step.u else {
            steps.push(StepRecord { k, x, y, xhat: filter.xhat, u: Vec::new(), feasible: false, violated });
            return Ok(SimTrace { steps, outcome: RunOutcome::InfeasibleAt(k) });
        };
        if k + 1 < horizon {
            let w = noise.w.sample(stream);
            let x_next = mat::vadd(&mat::vadd(&model.a.mul_vec(&x), &model.b.mul_vec(&u)), &w);
            let y_next = mat::vadd(&model.c.mul_vec(&x_next), &noise.v.sample(stream));
            let next = filter.step(&u, &y_next, model, sys.schedule)?;
            steps.push(StepRecord { k, x, y, xhat: filter.xhat, u, feasible: true, violated });
            x = x_next;
            y = y_next;
            filter = next;
        } else {
            steps.push(StepRecord { k, x: x.clone(), y: y.clone(), xhat: filter.xhat.clone(), u, feasible: true, violated });
        }
    }
    Ok(SimTrace { steps, outcome: RunOutcome::Success })
}

pub fn simulate_run(sys: &ClosedLoop<'_>, stream: &mut RngStream) -> Result<SimTrace> {
    run_with(sys, &Noise::new(sys.model)?, stream)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub runs_total: usize,
    pub runs_initially_infeasible: usize,
    pub runs_failed: usize,
    pub runs_solver_limit: usize,
    pub task_failure_rate: f64,
    pub violation_count: usize,
    pub successful_step_count: usize,
    pub violation_rate: f64,
    pub theoretical_failure_bound: f64,
}

/// `1 − (1 − p_f)^{T−1}`.
pub fn failure_bound(p_f: f64, horizon: usize) -> f64 {
    1.0 - (1.0 - p_f).powi(horizon as i32 - 1)
}

impl McReport {
    pub fn from_outcomes(outcomes: &[(RunOutcome, usize, usize)], p_f: f64, horizon: usize) -> Self {
        let mut r = McReport {
            runs_total: outcomes.len(),
            runs_initially_infeasible: 0,
            runs_failed: 0,
            runs_solver_limit: 0,
            task_failure_rate: 0.0,
            violation_count: 0,
            successful_step_count: 0,
            violation_rate: 0.0,
            theoretical_failure_bound: failure_bound(p_f, horizon),
        };
        for &(outcome, violations, steps) in outcomes {
            match outcome {
                RunOutcome::Success => {
                    r.violation_count += violations;
                    r.successful_step_count += steps;
                }
                RunOutcome::InfeasibleAt(0) => r.runs_initially_infeasible += 1,
                RunOutcome::InfeasibleAt(_) => r.runs_failed += 1,
                RunOutcome::SolverLimitAt(_) => r.runs_solver_limit += 1,
            }
        }
        let eligible = r.runs_total - r.runs_initially_infeasible - r.runs_solver_limit;
        r.task_failure_rate = if eligible == 0 { f64::NAN } else { r.runs_failed as f64 / eligible as f64 };
        r.violation_rate = if r.successful_step_count == 0 {
            f64::NAN
        } else {
            r.violation_count as f64 / r.successful_step_count as f64
        };
        r
    }

    pub fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("runs_total", self.runs_total.to_string()),
            ("runs_initially_infeasible", self.runs_initially_infeasible.to_string()),
            ("runs_failed", self.runs_failed.to_string()),
            ("runs_solver_limit", self.runs_solver_limit.to_string()),
            ("task_failure_rate", format!("{:?}", self.task_failure_rate)),
            ("violation_count", self.violation_count.to_string()),
            ("successful_step_count", self.successful_step_count.to_string()),
            ("violation_rate", format!("{:?}", self.violation_rate)),
            ("theoretical_failure_bound", format!("{:?}", self.theoretical_failure_bound)),
        ]
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn csv_header() -> String {
        let names: Vec<&str> = McReport::from_outcomes(&[], 0.5, 2).fields().into_iter().map(|(k, _)| k).collect();
        names.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        let vals: Vec<String> = self.fields().into_iter().map(|(_, v)| v).collect();
        vals.join(",")
    }
}

/// Runs streams `0..n_runs` of `base_seed` on `worker_count` threads and
/// folds the results in run order.
pub fn monte_carlo(sys: &ClosedLoop<'_>, n_runs: usize, base_seed: u64, worker_count: usize, p_f: f64) -> Result<McReport> {
    if n_runs == 0 {
        return Err(SimError::Invalid("at least one run is required".into()));
    }
    let noise = Noise::new(sys.model)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count.max(1))
        .build()
        .map_err(|e| SimError::Pool(e.to_string()))?;
    let outcomes: Vec<Result<(RunOutcome, usize, usize)>> = pool.install(|| {
        (0..n_runs)
            .into_par_iter()
            .map(|i| {
                let mut stream = RngStream::new(base_seed, i as u64);
                let trace = run_with(sys, &noise, &mut stream)?;
                Ok((trace.outcome, trace.violations(), trace.steps.len()))
            })
            .collect()
    });
    let outcomes: Vec<_> = outcomes.into_iter().collect::<Result<_>>()?;
    Ok(McReport::from_outcomes(&outcomes, p_f, sys.model.horizon))
}

/// Outcome of sampling feasible estimates and shifted-candidate checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub states: usize,
    pub attempts: usize,
    pub cases: usize,
    pub failures: usize,
}

/// Draws estimates uniformly from the feasible bounding box until `n_states`
/// feasible ones are found, then checks the shifted candidate for
/// `n_disturbances` disturbances in `E^n` each. Half of the disturbances are
/// vertices of `E^n`.
pub fn probe_campaign(
    problem: &MpcProblem,
    n_states: usize,
    n_disturbances: usize,
    seed: u64,
    max_attempts: usize,
) -> Result<ProbeReport> {
    let mut report = ProbeReport { states: 0, attempts: 0, cases: 0, failures: 0 };
    let Some((lo, hi)) = feasible_box(problem)? else { return Ok(report) };
    let gens = &problem.disturbance().zonotope.generators;
    let mut stream = RngStream::new(seed, 0);
    while report.states < n_states && report.attempts < max_attempts {
        report.attempts += 1;
        let x: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| l + (h - l) * stream.uniform()).collect();
        let sol = solve(problem, &x)?;
        if sol.status != MpcStatus::Optimal {
            continue;
        }
        report.states += 1;
        for j in 0..n_disturbances {
            let mut n = vec![0.0; x.len()];
            for g in gens {
                let alpha = if j % 2 == 0 {
                    2.0 * stream.uniform() - 1.0
                } else if stream.uniform() < 0.5 {
                    -1.0
                } else {
                    1.0
                };
                for (ni, gi) in n.iter_mut().zip(g) {
                    *ni += alpha * gi;
                }
            }
            report.cases += 1;
            if !feasibility_probe(problem, &sol, &n)? {
                report.failures += 1;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_covariance_returns_mean() {
        let mut s = RngStream::new(7, 0);
        assert_eq!(gaussian_draw(&mut s, &[1.0, -2.0], &Mat::zeros(2, 2)).unwrap(), vec![1.0, -2.0]);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |seed, idx| {
            let mut s = RngStream::new(seed, idx);
            (0..5).map(|_| s.standard_normal()).collect::<Vec<_>>()
        };
        assert_eq!(draw(3, 4), draw(3, 4));
        assert_ne!(draw(3, 4), draw(3, 5));
        assert_ne!(draw(3, 4), draw(4, 4));
    }

    #[test]
    fn standard_normal_moments() {
        let mut s = RngStream::new(11, 0);
        let n = 1_000_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.standard_normal();
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.005);
        assert!((var - 1.0).abs() < 0.01);
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let mut s = RngStream::new(1, 0);
        assert!(gaussian_draw(&mut s, &[0.0, 0.0], &Mat::from_diag(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn report_accounting() {
        let outcomes = [
            (RunOutcome::Success, 2, 10),
            (RunOutcome::Success, 0, 10),
            (RunOutcome::InfeasibleAt(0), 0, 1),
            (RunOutcome::InfeasibleAt(4), 1, 5),
            (RunOutcome::SolverLimitAt(3), 0, 4),
        ];
        let r = McReport::from_outcomes(&outcomes, 0.002035, 50);
        assert_eq!(r.runs_failed, 1);
        assert_eq!(r.runs_initially_infeasible, 1);
        assert_eq!(r.runs_solver_limit, 1);
        assert!((r.task_failure_rate - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((r.violation_count, r.successful_step_count), (2, 20));
        assert!((r.violation_rate - 0.1).abs() < 1e-15);
        assert!((r.theoretical_failure_bound - 0.095).abs() < 1e-4);
        assert_eq!(McReport::csv_header().split(',').count(), r.to_csv_row().split(',').count());
    }
}
