//! Scenario files and the synthesis pipeline they drive.
//!
//! A scenario is a TOML document with `[system]`, `[constraints]`, `[mpc]`,
//! `[mc]` and optional `[tolerances]` tables. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{
    bound_analytic_md, bound_scaled_reference, check_assumptions, kalman_schedule, steady_state_prior, BoundMethod,
    CovarianceBound, EstimationError, KalmanSchedule, SystemModel,
};
use crate::mat::{Mat, MatError};
use crate::sets::{ubcs, ConfidenceSet, HPolytope, ProbabilityBudget, SetError};
use crate::smpc::{baseline_problem, lqr_design, synthesize, ControllerGains, CostSpec, MpcProblem, SmpcError, Synthesis};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("synthesis failed: {0}")]
    Synthesis(String),
}

impl From<SetError> for ScenarioError {
    fn from(e: SetError) -> Self {
        match e {
            SetError::TighteningInfeasible { .. } | SetError::EmptyRpi(_) | SetError::Empty | SetError::RpiNonTermination { .. } => {
                ScenarioError::Synthesis(e.to_string())
            }
            other => ScenarioError::Invalid(other.to_string()),
        }
    }
}

impl From<SmpcError> for ScenarioError {
    fn from(e: SmpcError) -> Self {
        match e {
            SmpcError::Set(s) => s.into(),
            SmpcError::EmptySet(_) => ScenarioError::Synthesis(e.to_string()),
            other => ScenarioError::Invalid(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemBlock,
    pub constraints: ConstraintBlock,
    pub mpc: MpcBlock,
    pub mc: McBlock,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    /// Process-noise covariance.
    pub q_w: Vec<Vec<f64>>,
    /// Measurement-noise covariance.
    pub r_v: Vec<Vec<f64>>,
    pub mu0: Vec<f64>,
    pub sigma0: Vec<Vec<f64>>,
    /// Task length T.
    pub horizon: usize,
}

/// Either a box (`lower`, `upper`) or explicit rows `H x ≤ h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "H")]
    pub normals: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "h")]
    pub offsets: Option<Vec<f64>>,
}

impl PolytopeSpec {
    pub fn to_polytope(&self, what: &str) -> Result<HPolytope> {
        let invalid = |msg: String| ScenarioError::Invalid(format!("{what}: {msg}"));
        match (&self.lower, &self.upper, &self.normals, &self.offsets) {
            (Some(lo), Some(hi), None, None) => {
                if lo.iter().zip(hi).any(|(l, u)| l >= u) {
                    return Err(invalid("every lower bound must be below its upper bound".into()));
                }
                HPolytope::from_box(lo, hi).map_err(|e| invalid(e.to_string()))
            }
            (None, None, Some(h), Some(off)) => HPolytope::from_rows(h, off).map_err(|e| invalid(e.to_string())),
            _ => Err(invalid("give either lower/upper or H/h".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintBlock {
    pub x: PolytopeSpec,
    pub u: PolytopeSpec,
    pub p_x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_f: Option<f64>,
    /// Desired `(1 − p_f)^{T−1}`; used to derive `p_f` when it is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_task_success: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundChoice {
    /// Analytic bound when its assumptions hold, scaled reference otherwise.
    #[default]
    Auto,
    AnalyticMd,
    ScaledReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BudgetSplit {
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcBlock {
    /// Prediction horizon N.
    pub horizon: usize,
    pub q_lqr: Vec<Vec<f64>>,
    pub r_lqr: Vec<Vec<f64>>,
    #[serde(default)]
    pub bound_method: BoundChoice,
    #[serde(default)]
    pub budget_split: BudgetSplit,
    /// Replaces the estimator-disturbance set by `{0}`.
    #[serde(default)]
    pub disable_tube: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    pub n_runs: usize,
    pub base_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub psd: f64,
    pub dare: f64,
    pub dare_max_iter: usize,
    pub scaled_reference_eps: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { psd: 1e-9, dare: 1e-12, dare_max_iter: 100_000, scaled_reference_eps: 1e-10 }
    }
}

fn mat(rows: &[Vec<f64>], what: &str) -> Result<Mat> {
    if rows.is_empty() {
        return Err(ScenarioError::Invalid(format!("{what} is empty")));
    }
    Mat::from_rows(rows).map_err(|e| ScenarioError::Invalid(format!("{what}: {e}")))
}

fn sym(rows: &[Vec<f64>], what: &str) -> Result<Mat> {
    Mat::symmetric_from_rows(rows).map_err(|e| ScenarioError::Invalid(format!("{what}: {e}")))
}

fn in_unit(v: f64, what: &str) -> Result<f64> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(ScenarioError::Invalid(format!("{what} = {v} must lie in (0, 1)")))
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Scenario::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Checks everything that does not need the synthesis pipeline.
    pub fn validate(&self) -> Result<()> {
        self.model()?;
        in_unit(self.constraints.p_x, "p_x")?;
        self.p_f()?;
        let x = self.constraints.x.to_polytope("constraints.x")?;
        let u = self.constraints.u.to_polytope("constraints.u")?;
        let (nx, nu) = (self.system.a.len(), self.system.b.first().map_or(0, Vec::len));
        if x.dim() != nx || u.dim() != nu {
            return Err(ScenarioError::Invalid("constraint dimensions do not match the system".into()));
        }
        if self.mpc.horizon == 0 {
            return Err(ScenarioError::Invalid("mpc.horizon must be positive".into()));
        }
        let q = sym(&self.mpc.q_lqr, "mpc.q_lqr")?;
        let r = sym(&self.mpc.r_lqr, "mpc.r_lqr")?;
        if q.rows() != nx || r.rows() != nu {
            return Err(ScenarioError::Invalid("LQR weights do not match the system".into()));
        }
        if self.mc.n_runs == 0 || self.mc.workers == 0 {
            return Err(ScenarioError::Invalid("mc.n_runs and mc.workers must be positive".into()));
        }
        let t = &self.tolerances;
        if !(t.psd > 0.0 && t.dare > 0.0 && t.scaled_reference_eps > 0.0 && t.dare_max_iter > 0) {
            return Err(ScenarioError::Invalid("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<SystemModel> {
        let s = &self.system;
        Ok(SystemModel::new(
            mat(&s.a, "system.a")?,
            mat(&s.b, "system.b")?,
            mat(&s.c, "system.c")?,
            sym(&s.q_w, "system.q_w")?,
            sym(&s.r_v, "system.r_v")?,
            s.mu0.clone(),
            sym(&s.sigma0, "system.sigma0")?,
            s.horizon,
        )?)
    }

    /// `p_f`, given directly or as `1 − target^{1/(T−1)}`.
    pub fn p_f(&self) -> Result<f64> {
        match (self.constraints.p_f, self.constraints.target_task_success) {
            (Some(p), None) => in_unit(p, "p_f"),
            (None, Some(t)) => {
                let t = in_unit(t, "target_task_success")?;
                let steps = self.system.horizon.saturating_sub(1).max(1) as f64;
                in_unit(1.0 - t.powf(1.0 / steps), "derived p_f")
            }
            _ => Err(ScenarioError::Invalid("give exactly one of p_f and target_task_success".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Proposed,
    Baseline,
}

/// Model, filter schedule, bounds, gains and constraint sets of a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub model: SystemModel,
    pub schedule: KalmanSchedule,
    pub p_inf: Mat,
    pub bound: CovarianceBound,
    pub p_x: f64,
    pub p_f: f64,
    pub x: HPolytope,
    pub u: HPolytope,
    pub gains: ControllerGains,
    pub cost: CostSpec,
}

impl Prepared {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        Prepared::with_bound(scenario, scenario.mpc.bound_method)
    }

    pub fn with_bound(scenario: &Scenario, choice: BoundChoice) -> Result<Self> {
        scenario.validate()?;
        let tol = &scenario.tolerances;
        let model = scenario.model()?;
        let schedule = kalman_schedule(&model)?;
        let p_inf = steady_state_prior(&model, tol.dare, tol.dare_max_iter)?;
        let bound = match choice {
            BoundChoice::AnalyticMd => bound_analytic_md(&model, &schedule, &p_inf, tol.psd)?,
            BoundChoice::ScaledReference => bound_scaled_reference(&schedule, &p_inf, tol.scaled_reference_eps)?,
            BoundChoice::Auto => {
                if check_assumptions(&model, &p_inf, tol.psd)?.all() {
                    bound_analytic_md(&model, &schedule, &p_inf, tol.psd)?
                } else {
                    bound_scaled_reference(&schedule, &p_inf, tol.scaled_reference_eps)?
                }
            }
        };
        let (gains, cost) = lqr_design(&model, &sym(&scenario.mpc.q_lqr, "mpc.q_lqr")?, &sym(&scenario.mpc.r_lqr, "mpc.r_lqr")?)?;
        Ok(Prepared {
            p_x: scenario.constraints.p_x,
            p_f: scenario.p_f()?,
            x: scenario.constraints.x.to_polytope("constraints.x")?,
            u: scenario.constraints.u.to_polytope("constraints.u")?,
            scenario: scenario.clone(),
            model,
            schedule,
            p_inf,
            bound,
            gains,
            cost,
        })
    }

    pub fn horizon(&self) -> usize {
        self.scenario.mpc.horizon
    }

    /// `E^e_{1−p_x}`.
    pub fn estimation_set(&self) -> Result<ConfidenceSet> {
        let n = self.model.nx();
        Ok(ubcs(&self.bound.p_bar, &ProbabilityBudget::uniform(self.p_x, 2 * n)?)?)
    }

    /// `E^n_{1−p_f}`, or `{0}` when the tube is disabled.
    pub fn disturbance_set(&self) -> Result<ConfidenceSet> {
        let n = self.model.nx();
        if self.scenario.mpc.disable_tube {
            return Ok(ConfidenceSet::zero(n));
        }
        Ok(ubcs(&self.bound.phi_bar, &ProbabilityBudget::uniform(self.p_f, 2 * n)?)?)
    }

    pub fn synthesize(&self) -> Result<Synthesis> {
        Ok(synthesize(&self.x, &self.u, self.estimation_set()?, self.disturbance_set()?, &self.gains, self.horizon())?)
    }

    pub fn controller(&self, kind: ControllerKind) -> Result<MpcProblem> {
        match kind {
            ControllerKind::Proposed => {
                let syn = self.synthesize()?;
                Ok(MpcProblem::proposed(&self.model, &self.gains, &self.cost, &syn)?)
            }
            ControllerKind::Baseline => {
                Ok(baseline_problem(&self.model, &self.gains, &self.cost, &self.x, &self.u, self.horizon())?)
            }
        }
    }

    pub fn bound_method(&self) -> BoundMethod {
        self.bound.method
    }
}
