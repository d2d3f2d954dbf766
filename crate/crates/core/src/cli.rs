//! The `synth`, `simulate`, `montecarlo` and `verify` commands.
//!
//! Each command returns its printable text together with a process exit
//! code, so the binary stays a thin argument parser.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::estimation::{check_assumptions, EstimationError};
use crate::mat::{psd_leq, Mat};
use crate::scenario::{BoundChoice, ControllerKind, Prepared, Scenario, ScenarioError};
use crate::sets::{poly_includes, rpi_certificate, write_hpolytope, write_matrix, write_zonotope, HPolytope, INCLUSION_TOL};
use crate::sim::{monte_carlo, probe_campaign, simulate_run, ClosedLoop, Gaussian, McReport, RngStream, RunOutcome, SimError};
use crate::smpc::SmpcError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SYNTHESIS: i32 = 3;
pub const EXIT_PROPERTY: i32 = 4;
pub const EXIT_SOLVER_LIMIT: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Synthesis(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Simulation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Simulation(_) => EXIT_CONFIG,
            CliError::Synthesis(_) => EXIT_SYNTHESIS,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Synthesis(_) => CliError::Synthesis(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Smpc(SmpcError::Set(s)) => ScenarioError::from(s).into(),
            other => CliError::Simulation(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Text for stdout and the exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub text: String,
    pub code: i32,
}

/// Command-line values that override the scenario's `[mc]` table.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub workers: Option<usize>,
}

pub fn load_scenario(path: &Path, overrides: &Overrides) -> Result<Scenario> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = overrides.seed {
        s.mc.base_seed = seed;
    }
    if let Some(runs) = overrides.runs {
        s.mc.n_runs = runs;
    }
    if let Some(workers) = overrides.workers {
        s.mc.workers = workers;
    }
    s.validate()?;
    Ok(s)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    Ok(path)
}

fn controller_name(kind: ControllerKind) -> &'static str {
    match kind {
        ControllerKind::Proposed => "proposed",
        ControllerKind::Baseline => "baseline",
    }
}

/// H-representation dump of every synthesised set.
pub fn synth_dump(scenario: &Scenario) -> Result<String> {
    let prep = Prepared::new(scenario)?;
    let syn = prep.synthesize()?;
    let mut out = String::new();
    let _ = writeln!(out, "# bound_method = {:?}", prep.bound.method);
    let _ = writeln!(out, "# p_x = {:?}", prep.p_x);
    let _ = writeln!(out, "# p_f = {:?}", prep.p_f);
    write_matrix(&mut out, "P_inf", &prep.p_inf);
    write_matrix(&mut out, "P_bar", &prep.bound.p_bar);
    write_matrix(&mut out, "Phi_bar", &prep.bound.phi_bar);
    write_matrix(&mut out, "K", &prep.gains.k);
    write_matrix(&mut out, "P_terminal", &prep.cost.p_terminal);
    write_zonotope(&mut out, "E_e", &syn.ee.zonotope);
    write_hpolytope(&mut out, "E_e", &syn.ee.to_hpolytope());
    write_zonotope(&mut out, "E_n", &syn.en.zonotope);
    write_hpolytope(&mut out, "E_n", &syn.en.to_hpolytope());
    write_hpolytope(&mut out, "X_hat", &syn.xhat);
    for (i, s) in syn.state_tube.iter().enumerate() {
        write_hpolytope(&mut out, &format!("X_RF_{i}"), s);
    }
    for (i, s) in syn.input_tube.iter().enumerate() {
        write_hpolytope(&mut out, &format!("U_RF_{i}"), s);
    }
    write_hpolytope(&mut out, "Xf_hat", &syn.xf_hat);
    write_hpolytope(&mut out, "Xf_RF", &syn.terminal);
    Ok(out)
}

pub fn cmd_synth(scenario: &Scenario, out: Option<&Path>) -> Result<Outcome> {
    let dump = synth_dump(scenario)?;
    let mut text = dump.clone();
    if let Some(dir) = out {
        let path = write_file(dir, "synth.txt", &dump)?;
        let _ = writeln!(text, "# written to {}", path.display());
    }
    Ok(Outcome { text, code: EXIT_OK })
}

pub fn cmd_simulate(scenario: &Scenario, kind: ControllerKind, seed: u64, out: Option<&Path>) -> Result<Outcome> {
    let prep = Prepared::new(scenario)?;
    let controller = prep.controller(kind)?;
    let sys = ClosedLoop { model: &prep.model, schedule: &prep.schedule, controller: &controller, state_constraint: &prep.x };
    let trace = simulate_run(&sys, &mut RngStream::new(seed, 0))?;
    let dir = out.map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let path = write_file(&dir, &format!("trace_{}_seed{seed}.csv", controller_name(kind)), &trace.to_csv())?;
    let (summary, code) = match trace.outcome {
        RunOutcome::Success => (format!("outcome = success, steps = {}", trace.steps.len()), EXIT_OK),
        RunOutcome::InfeasibleAt(k) => (format!("outcome = infeasible at step {k}"), EXIT_OK),
        RunOutcome::SolverLimitAt(k) => (format!("outcome = solver iteration limit at step {k}"), EXIT_SOLVER_LIMIT),
    };
    let text = format!("{summary}, violations = {}\ntrace = {}\n", trace.violations(), path.display());
    Ok(Outcome { text, code })
}

/// Report text and CSV for a campaign; a pure function of the scenario and controller.
pub fn montecarlo_report(scenario: &Scenario, kind: ControllerKind) -> Result<(McReport, String, String)> {
    let prep = Prepared::new(scenario)?;
    let controller = prep.controller(kind)?;
    let sys = ClosedLoop { model: &prep.model, schedule: &prep.schedule, controller: &controller, state_constraint: &prep.x };
    let mc = &scenario.mc;
    let report = monte_carlo(&sys, mc.n_runs, mc.base_seed, mc.workers, prep.p_f)?;
    let mut text = String::new();
    let _ = writeln!(text, "controller = {}", controller_name(kind));
    let _ = writeln!(text, "bound_method = {:?}", prep.bound.method);
    let _ = writeln!(text, "base_seed = {}", mc.base_seed);
    let _ = writeln!(text, "p_x = {:?}", prep.p_x);
    let _ = writeln!(text, "p_f = {:?}", prep.p_f);
    text.push_str(&report.to_text());
    let csv = format!("controller,{}\n{},{}\n", McReport::csv_header(), controller_name(kind), report.to_csv_row());
    Ok((report, text, csv))
}

pub fn cmd_montecarlo(scenario: &Scenario, kind: ControllerKind, out: Option<&Path>) -> Result<Outcome> {
    let (report, mut text, csv) = montecarlo_report(scenario, kind)?;
    if let Some(dir) = out {
        let name = controller_name(kind);
        write_file(dir, &format!("report_{name}.txt"), &text)?;
        write_file(dir, &format!("report_{name}.csv"), &csv)?;
    }
    let code = if report.runs_solver_limit > 0 {
        let _ = writeln!(text, "error = {} runs hit the solver iteration limit", report.runs_solver_limit);
        EXIT_SOLVER_LIMIT
    } else {
        EXIT_OK
    };
    Ok(Outcome { text, code })
}

/// One named property check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.to_string(), passed, detail }
}

/// Fraction of `n` draws from `N(0, cov)` inside `set`.
pub fn coverage(cov: &Mat, set: &HPolytope, n: usize, seed: u64, stream: u64) -> Result<f64> {
    let g = Gaussian::new(vec![0.0; cov.rows()], cov)?;
    let mut rng = RngStream::new(seed, stream);
    let inside = (0..n).filter(|_| set.contains(&g.sample(&mut rng), 0.0)).count();
    Ok(inside as f64 / n as f64)
}

const COVERAGE_SAMPLES: usize = 100_000;

/// Runs the property suite; the first element names any step that could not run.
pub fn verify_checks(scenario: &Scenario) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let prep = match Prepared::new(scenario) {
        Ok(p) => p,
        Err(ScenarioError::Estimation(e @ EstimationError::AssumptionViolated(_))) => {
            checks.push(check("assumptions", false, e.to_string()));
            return Ok(checks);
        }
        Err(e) => return Err(e.into()),
    };
    let tol = scenario.tolerances.psd;
    let report = check_assumptions(&prep.model, &prep.p_inf, tol).map_err(ScenarioError::from)?;
    let needs = scenario.mpc.bound_method == BoundChoice::AnalyticMd;
    checks.push(check(
        "assumptions",
        report.all() || !needs,
        format!("initial_covariance = {}, invertible_dynamics = {}", report.initial_covariance, report.invertible_dynamics),
    ));

    let s = &prep.schedule;
    let mut p_ok = true;
    let mut phi_ok = true;
    for k in 0..s.horizon() {
        p_ok &= psd_leq(&s.post_cov[k], &prep.bound.p_bar, tol).map_err(ScenarioError::from)?;
    }
    for phi in &s.noise_cov {
        phi_ok &= psd_leq(phi, &prep.bound.phi_bar, tol).map_err(ScenarioError::from)?;
    }
    checks.push(check("bound_p", p_ok, format!("P_k ⪯ P_bar for k < {}", s.horizon())));
    checks.push(check("bound_phi", phi_ok, format!("Phi_k ⪯ Phi_bar for k < {}", s.noise_cov.len())));

    let ee = prep.estimation_set()?.to_hpolytope();
    let n = COVERAGE_SAMPLES;
    let slack = |p: f64| 3.0 * (p * (1.0 - p) / n as f64).sqrt();
    let last = s.horizon() - 1;
    let mut detail = String::new();
    let mut ok = true;
    for (i, k) in [0, last / 2, last].into_iter().enumerate() {
        let f = coverage(&s.post_cov[k], &ee, n, scenario.mc.base_seed, i as u64)?;
        ok &= f >= 1.0 - prep.p_x - slack(prep.p_x);
        let _ = write!(detail, "k={k}: {f:.5} ");
    }
    checks.push(check("coverage_estimation_error", ok, detail.trim_end().to_string()));

    let syn = match prep.synthesize() {
        Ok(syn) => syn,
        Err(e @ ScenarioError::Synthesis(_)) => {
            checks.push(check("synthesis", false, e.to_string()));
            return Ok(checks);
        }
        Err(e) => return Err(e.into()),
    };
    checks.push(check("synthesis", true, "all sets nonempty".into()));

    let en = syn.en.to_hpolytope();
    let mut detail = String::new();
    let mut ok = true;
    for (i, k) in [0, last / 2, last - 1].into_iter().enumerate() {
        let f = coverage(&s.noise_cov[k], &en, n, scenario.mc.base_seed, 100 + i as u64)?;
        ok &= f >= 1.0 - prep.p_f - slack(prep.p_f);
        let _ = write!(detail, "k={k}: {f:.6} ");
    }
    checks.push(check("coverage_estimator_disturbance", ok, detail.trim_end().to_string()));

    let monotone = |tube: &[HPolytope]| {
        tube.windows(2).all(|w| w[0].offsets().iter().zip(w[1].offsets()).all(|(a, b)| b <= a))
    };
    checks.push(check(
        "tube_monotone",
        monotone(&syn.state_tube) && monotone(&syn.input_tube),
        "offsets non-increasing along the horizon".into(),
    ));
    let last_tube = syn.state_tube.last().expect("nonempty tube");
    let inc = poly_includes(last_tube, &syn.terminal).map_err(ScenarioError::from)?;
    checks.push(check("terminal_inside_tube", inc, "Xf_RF ⊆ X_RF_{N-1}".into()));
    let cert = rpi_certificate(&prep.gains.acl, &syn.en.zonotope, &syn.xf_hat).map_err(ScenarioError::from)?;
    checks.push(check("rpi_certificate", cert <= INCLUSION_TOL, format!("max row excess {cert:.3e}")));

    let controller = prep.controller(ControllerKind::Proposed)?;
    let probe = probe_campaign(&controller, 200, 20, scenario.mc.base_seed, 200_000)?;
    checks.push(check(
        "recursive_feasibility_probe",
        probe.states > 0 && probe.failures == 0,
        format!("{} states, {} cases, {} failures", probe.states, probe.cases, probe.failures),
    ));
    Ok(checks)
}

pub fn cmd_verify(scenario: &Scenario) -> Result<Outcome> {
    let checks = verify_checks(scenario)?;
    let mut text = String::new();
    for c in &checks {
        let _ = writeln!(text, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let code = match checks.iter().find(|c| !c.passed) {
        None => EXIT_OK,
        Some(c) if c.name == "synthesis" => EXIT_SYNTHESIS,
        Some(_) => EXIT_PROPERTY,
    };
    Ok(Outcome { text, code })
}
