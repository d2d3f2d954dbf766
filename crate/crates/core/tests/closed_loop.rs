mod common;

use ofsmpc::scenario::{BoundChoice, ControllerKind, Prepared, Scenario};
use ofsmpc::sim::{monte_carlo, simulate_run, ClosedLoop, RngStream, RunOutcome, SimTrace};

fn low_noise() -> Scenario {
    Scenario::load(&common::scenario_path("double_integrator_low_noise.toml")).unwrap()
}

fn zero_noise() -> Scenario {
    let mut s = low_noise();
    s.system.q_w = vec![vec![0.0; 2]; 2];
    s.system.r_v = vec![vec![0.0]];
    s.system.sigma0 = vec![vec![0.0; 2]; 2];
    s.mpc.bound_method = BoundChoice::ScaledReference;
    s
}

fn runs(prep: &Prepared, kind: ControllerKind, n: u64, seed: u64) -> Vec<SimTrace> {
    let controller = prep.controller(kind).unwrap();
    let sys = ClosedLoop { model: &prep.model, schedule: &prep.schedule, controller: &controller, state_constraint: &prep.x };
    (0..n).map(|i| simulate_run(&sys, &mut RngStream::new(seed, i)).unwrap()).collect()
}

#[test]
fn zero_noise_runs_are_exact_and_deterministic() {
    let prep = Prepared::new(&zero_noise()).unwrap();
    let traces = runs(&prep, ControllerKind::Proposed, 3, 5);
    for t in &traces {
        assert_eq!(t.outcome, RunOutcome::Success);
        assert_eq!(t.violations(), 0);
        for s in &t.steps {
            assert_eq!(s.x, s.xhat);
        }
        assert_eq!(t.steps, traces[0].steps);
    }
    let controller = prep.controller(ControllerKind::Proposed).unwrap();
    let sys = ClosedLoop { model: &prep.model, schedule: &prep.schedule, controller: &controller, state_constraint: &prep.x };
    let report = monte_carlo(&sys, 4, 1, 2, prep.p_f).unwrap();
    assert_eq!(report.task_failure_rate, 0.0);
    assert_eq!(report.violation_rate, 0.0);
}

#[test]
fn single_run_campaign_matches_simulate_run() {
    let prep = Prepared::new(&low_noise()).unwrap();
    let controller = prep.controller(ControllerKind::Proposed).unwrap();
    let sys = ClosedLoop { model: &prep.model, schedule: &prep.schedule, controller: &controller, state_constraint: &prep.x };
    let trace = simulate_run(&sys, &mut RngStream::new(17, 0)).unwrap();
    let report = monte_carlo(&sys, 1, 17, 1, prep.p_f).unwrap();
    assert_eq!(report.runs_total, 1);
    assert_eq!(report.violation_count, trace.violations());
    assert_eq!(report.successful_step_count, trace.steps.len());
}

#[test]
fn trajectory_heads_toward_the_origin() {
    let prep = Prepared::new(&low_noise()).unwrap();
    let trace = &runs(&prep, ControllerKind::Proposed, 1, 1)[0];
    assert_eq!(trace.outcome, RunOutcome::Success);
    let pos: Vec<f64> = trace.steps.iter().map(|s| s.x[0]).collect();
    assert!(pos[..6].windows(2).all(|w| w[1] < w[0]), "{:?}", &pos[..6]);
    assert!(pos.last().unwrap().abs() < 1.0);
}

#[test]
fn failed_runs_stop_at_their_single_infeasible_step() {
    let s = Scenario::load(&common::scenario_path("double_integrator.toml")).unwrap();
    let prep = Prepared::new(&s).unwrap();
    let traces = runs(&prep, ControllerKind::Baseline, 40, 3);
    let mut failed = 0;
    for t in &traces {
        let infeasible: Vec<usize> = t.steps.iter().filter(|s| !s.feasible).map(|s| s.k).collect();
        match t.outcome {
            RunOutcome::InfeasibleAt(k) => {
                failed += 1;
                assert_eq!(infeasible, vec![k]);
                assert_eq!(t.steps.last().unwrap().k, k);
                assert!(t.steps.last().unwrap().u.is_empty());
            }
            RunOutcome::Success => assert!(infeasible.is_empty() && t.steps.len() == s.system.horizon),
            RunOutcome::SolverLimitAt(k) => panic!("solver limit at step {k}"),
        }
    }
    assert!(failed > 0, "the baseline is expected to fail on some runs");
}

#[test]
fn realized_errors_and_disturbances_fall_in_their_confidence_sets() {
    let prep = Prepared::new(&low_noise()).unwrap();
    let ee = prep.estimation_set().unwrap();
    let en = prep.disturbance_set().unwrap();
    let n = 400;
    let traces = runs(&prep, ControllerKind::Proposed, n, 8);
    assert!(traces.iter().all(|t| t.outcome == RunOutcome::Success));
    let slack = |p: f64| 3.0 * (p * (1.0 - p) / n as f64).sqrt();
    let horizon = prep.model.horizon;
    for k in 0..horizon {
        let inside = traces.iter().filter(|t| ee.contains(&t.steps[k].estimation_error(), 1e-12)).count();
        assert!(inside as f64 / n as f64 >= 1.0 - prep.p_x - slack(prep.p_x), "estimation error at k={k}");
    }
    let dist: Vec<Vec<Vec<f64>>> = traces.iter().map(|t| t.estimator_disturbances(&prep.model)).collect();
    for k in 0..horizon - 1 {
        let inside = dist.iter().filter(|d| en.contains(&d[k], 1e-12)).count();
        assert!(inside as f64 / n as f64 >= 1.0 - prep.p_f - slack(prep.p_f), "disturbance at k={k}");
    }
}
