//! Receding-horizon controllers over tightened constraint sets.
//!
//! Both the stochastic controller and the certainty-equivalent baseline are
//! [`MpcProblem`]s: a linear model, an LQR gain and terminal cost, and one
//! polytope per predicted state and input. The QP is condensed onto the
//! stacked inputs `c_0..c_{N−1}` so that the nominal states never appear as
//! decision variables.

use thiserror::Error;

use crate::estimation::SystemModel;
use crate::mat::{self, dare, spectral_radius, Lu, Mat, MatError};
use crate::qp::{qp_solve, Qp, QpError, QpStatus};
use crate::sets::{max_rpi, terminal_set, tighten_input, tighten_state, ConfidenceSet, HPolytope, SetError, Zonotope};

/// Slack allowed when checking constraint membership of candidate and optimal sequences.
pub const CONSTRAINT_TOL: f64 = 1e-7;

const DARE_TOL: f64 = 1e-12;
const DARE_MAX_ITER: usize = 100_000;
pub const RPI_MAX_ITER: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmpcError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("closed-loop matrix is not Schur (spectral radius {0})")]
    NotSchur(f64),
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, SmpcError>;

#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub q_stage: Mat,
    pub r_stage: Mat,
    pub p_terminal: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    pub k: Mat,
    pub acl: Mat,
}

/// Infinite-horizon LQR gain `K = −(R + BᵀPB)⁻¹BᵀPA` and its Riccati solution.
pub fn lqr_gains(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<(ControllerGains, CostSpec)> {
    let p = dare(a, b, q, r, DARE_TOL, DARE_MAX_ITER)?;
    let bt = b.transpose();
    let btp = &bt * &p;
    let k = -&Lu::new(&(r + &(&btp * b)))?.solve(&(&btp * a))?;
    let acl = a + &(b * &k);
    let rho = spectral_radius(&acl);
    if rho >= 1.0 {
        return Err(SmpcError::NotSchur(rho));
    }
    Ok((ControllerGains { k, acl }, CostSpec { q_stage: q.clone(), r_stage: r.clone(), p_terminal: p }))
}

pub fn lqr_design(model: &SystemModel, q: &Mat, r: &Mat) -> Result<(ControllerGains, CostSpec)> {
    lqr_gains(&model.a, &model.b, q, r)
}

/// The tightened sets of the stochastic controller.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub ee: ConfidenceSet,
    pub en: ConfidenceSet,
    /// `X ⊖ E^e`.
    pub xhat: HPolytope,
    pub state_tube: Vec<HPolytope>,
    pub input_tube: Vec<HPolytope>,
    /// Maximal RPI subset of `X̂ ∩ {x : Kx ∈ U}` under `x⁺ = A_cl x + n`, `n ∈ E^n`.
    pub xf_hat: HPolytope,
    pub terminal: HPolytope,
}

pub fn synthesize(
    x: &HPolytope,
    u: &HPolytope,
    ee: ConfidenceSet,
    en: ConfidenceSet,
    gains: &ControllerGains,
    horizon: usize,
) -> Result<Synthesis> {
    let xhat = x.pontryagin_diff(&ee.zonotope)?;
    if xhat.is_empty()? {
        return Err(SmpcError::EmptySet("estimate state"));
    }
    let state_tube = tighten_state(&xhat, &en.zonotope, &gains.acl, horizon)?;
    let input_tube = tighten_input(u, &en.zonotope, &gains.k, &gains.acl, horizon)?;
    let safe = xhat.intersect(&u.preimage(&gains.k)?)?;
    let xf_hat = max_rpi(&gains.acl, &en.zonotope, &safe, RPI_MAX_ITER)?;
    let terminal = terminal_set(&xf_hat, &en.zonotope, &gains.acl, horizon)?;
    Ok(Synthesis { ee, en, xhat, state_tube, input_tube, xf_hat, terminal })
}

/// Condensed data: `H`, `f = F x̂`, `G c ≤ h0 − E x̂`, constant `x̂ᵀ M x̂`.
#[derive(Debug, Clone)]
struct Condensed {
    h: Mat,
    f_map: Mat,
    g: Mat,
    h0: Vec<f64>,
    e: Mat,
    const_map: Mat,
}

#[derive(Debug, Clone)]
pub struct MpcProblem {
    a: Mat,
    b: Mat,
    gains: ControllerGains,
    cost: CostSpec,
    horizon: usize,
    state_sets: Vec<HPolytope>,
    input_sets: Vec<HPolytope>,
    terminal: HPolytope,
    /// Disturbance set the tube was built for; `{0}` for the baseline.
    disturbance: ConfidenceSet,
    condensed: Condensed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpcStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct MpcSolution {
    pub status: MpcStatus,
    pub c_seq: Vec<Vec<f64>>,
    pub xbar_seq: Vec<Vec<f64>>,
    pub objective: f64,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ControlStep {
    pub u: Option<Vec<f64>>,
    pub solution: MpcSolution,
}

impl MpcProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Mat,
        b: Mat,
        gains: ControllerGains,
        cost: CostSpec,
        state_sets: Vec<HPolytope>,
        input_sets: Vec<HPolytope>,
        terminal: HPolytope,
        disturbance: ConfidenceSet,
    ) -> Result<Self> {
        let n = state_sets.len();
        let nx = a.rows();
        let nu = b.cols();
        if n == 0 || input_sets.len() != n {
            return Err(SmpcError::Dimension(format!("{} state sets and {} input sets", n, input_sets.len())));
        }
        if a.cols() != nx || b.rows() != nx || gains.k.rows() != nu || gains.k.cols() != nx {
            return Err(SmpcError::Dimension("model and gain dimensions disagree".into()));
        }
        if state_sets.iter().chain(std::iter::once(&terminal)).any(|s| s.dim() != nx)
            || input_sets.iter().any(|s| s.dim() != nu)
        {
            return Err(SmpcError::Dimension("constraint set dimension disagrees with the model".into()));
        }
        for s in state_sets.iter().chain(&input_sets).chain(std::iter::once(&terminal)) {
            if s.is_empty()? {
                return Err(SmpcError::EmptySet("constraint"));
            }
        }
        let condensed = condense(&a, &b, &cost, &state_sets, &input_sets, &terminal)?;
        Ok(MpcProblem {
            a,
            b,
            gains,
            cost,
            horizon: n,
            state_sets,
            input_sets,
            terminal,
            disturbance,
            condensed,
        })
    }

    /// Stochastic controller over the synthesised tube.
    pub fn proposed(model: &SystemModel, gains: &ControllerGains, cost: &CostSpec, syn: &Synthesis) -> Result<Self> {
        MpcProblem::new(
            model.a.clone(),
            model.b.clone(),
            gains.clone(),
            cost.clone(),
            syn.state_tube.clone(),
            syn.input_tube.clone(),
            syn.terminal.clone(),
            syn.en.clone(),
        )
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }

    pub fn state_sets(&self) -> &[HPolytope] {
        &self.state_sets
    }

    pub fn input_sets(&self) -> &[HPolytope] {
        &self.input_sets
    }

    pub fn terminal(&self) -> &HPolytope {
        &self.terminal
    }

    pub fn disturbance(&self) -> &ConfidenceSet {
        &self.disturbance
    }

    /// `x̄_0 = x̂`, `x̄_{i+1} = A x̄_i + B c_i`.
    pub fn propagate(&self, xhat: &[f64], c_seq: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut xs = Vec::with_capacity(c_seq.len() + 1);
        xs.push(xhat.to_vec());
        for c in c_seq {
            let last = xs.last().expect("nonempty");
            xs.push(mat::vadd(&self.a.mul_vec(last), &self.b.mul_vec(c)));
        }
        xs
    }

    /// Largest constraint violation of an input sequence started at `x̂`.
    pub fn max_violation(&self, xhat: &[f64], c_seq: &[Vec<f64>]) -> f64 {
        let xs = self.propagate(xhat, c_seq);
        let mut worst = f64::NEG_INFINITY;
        for (set, x) in self.state_sets.iter().zip(&xs) {
            worst = worst.max(set.max_violation(x));
        }
        for (set, c) in self.input_sets.iter().zip(c_seq) {
            worst = worst.max(set.max_violation(c));
        }
        worst.max(self.terminal.max_violation(&xs[self.horizon]))
    }

    pub fn is_feasible_sequence(&self, xhat: &[f64], c_seq: &[Vec<f64>], tol: f64) -> bool {
        c_seq.len() == self.horizon && self.max_violation(xhat, c_seq) <= tol
    }

    /// `x̂ᵀ M x̂`, the part of the cost not influenced by the inputs.
    fn constant_cost(&self, xhat: &[f64]) -> f64 {
        mat::dot(xhat, &self.condensed.const_map.mul_vec(xhat))
    }

    /// `Σ x̄ᵀQx̄ + cᵀRc + x̄_NᵀPx̄_N`.
    pub fn cost_of(&self, xhat: &[f64], c_seq: &[Vec<f64>]) -> f64 {
        let xs = self.propagate(xhat, c_seq);
        let mut v = 0.0;
        for (x, c) in xs.iter().zip(c_seq) {
            v += mat::dot(x, &self.cost.q_stage.mul_vec(x)) + mat::dot(c, &self.cost.r_stage.mul_vec(c));
        }
        let xn = &xs[self.horizon];
        v + mat::dot(xn, &self.cost.p_terminal.mul_vec(xn))
    }
}

fn condense(
    a: &Mat,
    b: &Mat,
    cost: &CostSpec,
    state_sets: &[HPolytope],
    input_sets: &[HPolytope],
    terminal: &HPolytope,
) -> Result<Condensed> {
    let n = state_sets.len();
    let nx = a.rows();
    let nu = b.cols();
    let nc = n * nu;

    let mut a_pow = vec![Mat::identity(nx)];
    for i in 0..n {
        a_pow.push(&a_pow[i] * a);
    }
    let mut gamma = vec![Mat::zeros(nx, nc)];
    for i in 1..=n {
        let mut g = Mat::zeros(nx, nc);
        for j in 0..i {
            let blk = &a_pow[i - 1 - j] * b;
            for r in 0..nx {
                for s in 0..nu {
                    g[(r, j * nu + s)] = blk[(r, s)];
                }
            }
        }
        gamma.push(g);
    }

    let mut h = Mat::zeros(nc, nc);
    let mut f_map = Mat::zeros(nc, nx);
    let mut const_map = Mat::zeros(nx, nx);
    for i in 0..=n {
        let w = if i < n { &cost.q_stage } else { &cost.p_terminal };
        let gt = gamma[i].transpose();
        let gtw = &gt * w;
        h = &h + &(&gtw * &gamma[i]);
        f_map = &f_map + &(&gtw * &a_pow[i]);
        const_map = &const_map + &(&(&a_pow[i].transpose() * w) * &a_pow[i]);
    }
    for i in 0..n {
        for r in 0..nu {
            for s in 0..nu {
                h[(i * nu + r, i * nu + s)] += cost.r_stage[(r, s)];
            }
        }
    }
    let h = h.scale(2.0).symmetrized();
    let f_map = f_map.scale(2.0);

    let mut g_rows: Vec<Vec<f64>> = Vec::new();
    let mut h0 = Vec::new();
    let mut e_rows: Vec<Vec<f64>> = Vec::new();
    let mut push_state = |set: &HPolytope, i: usize| {
        let hg = set.normals() * &gamma[i];
        let ha = set.normals() * &a_pow[i];
        for r in 0..set.n_rows() {
            g_rows.push(hg.row(r).to_vec());
            h0.push(set.offsets()[r]);
            e_rows.push(ha.row(r).to_vec());
        }
    };
    for (i, set) in state_sets.iter().enumerate().skip(1) {
        push_state(set, i);
    }
    push_state(terminal, n);
    for (i, set) in input_sets.iter().enumerate() {
        for (row, off) in set.rows() {
            let mut g = vec![0.0; nc];
            g[i * nu..(i + 1) * nu].copy_from_slice(row);
            g_rows.push(g);
            h0.push(off);
            e_rows.push(vec![0.0; nx]);
        }
    }
    let m = g_rows.len();
    let flat = |rows: Vec<Vec<f64>>, cols: usize| Mat::from_row_major(m, cols, rows.into_iter().flatten().collect());
    Ok(Condensed { h, f_map, g: flat(g_rows, nc)?, h0, e: flat(e_rows, nx)?, const_map })
}

/// The condensed QP for the estimate `x̂`.
pub fn build_qp(problem: &MpcProblem, xhat: &[f64]) -> Result<Qp> {
    let c = &problem.condensed;
    if xhat.len() != problem.a.rows() {
        return Err(SmpcError::Dimension(format!("estimate of length {}", xhat.len())));
    }
    let f = c.f_map.mul_vec(xhat);
    let b = mat::vsub(&c.h0, &c.e.mul_vec(xhat));
    Ok(Qp::new(c.h.clone(), f, c.g.clone(), b)?)
}

fn infeasible() -> MpcSolution {
    MpcSolution {
        status: MpcStatus::Infeasible,
        c_seq: Vec::new(),
        xbar_seq: Vec::new(),
        objective: f64::INFINITY,
        kkt_residual: f64::NAN,
    }
}

pub fn solve(problem: &MpcProblem, xhat: &[f64]) -> Result<MpcSolution> {
    // x̄_0 = x̂ ∈ X_0 does not involve the inputs, so it is checked up front
    if !problem.state_sets[0].contains(xhat, CONSTRAINT_TOL) {
        return Ok(infeasible());
    }
    let qp = build_qp(problem, xhat)?;
    let sol = qp_solve(&qp)?;
    if sol.status == QpStatus::Infeasible {
        return Ok(infeasible());
    }
    let nu = problem.b.cols();
    let c_seq: Vec<Vec<f64>> = sol.x.chunks(nu).map(|c| c.to_vec()).collect();
    let xbar_seq = problem.propagate(xhat, &c_seq);
    Ok(MpcSolution {
        status: MpcStatus::Optimal,
        objective: sol.objective + problem.constant_cost(xhat),
        c_seq,
        xbar_seq,
        kkt_residual: sol.kkt_residual,
    })
}

/// Applies the first optimal input `c*_0`.
pub fn control_step(problem: &MpcProblem, xhat: &[f64]) -> Result<ControlStep> {
    let solution = solve(problem, xhat)?;
    let u = match solution.status {
        MpcStatus::Optimal => Some(solution.c_seq[0].clone()),
        MpcStatus::Infeasible => None,
    };
    Ok(ControlStep { u, solution })
}

/// Certainty-equivalent controller: `X` on every predicted state, `U` on every
/// input, and a disturbance-free invariant terminal set.
pub fn baseline_problem(
    model: &SystemModel,
    gains: &ControllerGains,
    cost: &CostSpec,
    x: &HPolytope,
    u: &HPolytope,
    horizon: usize,
) -> Result<MpcProblem> {
    let nx = model.nx();
    let safe = x.intersect(&u.preimage(&gains.k)?)?;
    let terminal = max_rpi(&gains.acl, &Zonotope::origin(nx), &safe, RPI_MAX_ITER)?;
    MpcProblem::new(
        model.a.clone(),
        model.b.clone(),
        gains.clone(),
        cost.clone(),
        vec![x.clone(); horizon],
        vec![u.clone(); horizon],
        terminal,
        ConfidenceSet::zero(nx),
    )
}

/// Bounding box of the estimates for which the problem is feasible,
/// from support LPs over the joint `(x̂, c)` constraint set. `None` if no
/// estimate is feasible.
pub fn feasible_box(problem: &MpcProblem) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let c = &problem.condensed;
    let nx = problem.a.rows();
    let nc = c.g.cols();
    let x0 = &problem.state_sets[0];
    let rows = c.g.rows() + x0.n_rows();
    let mut data = Vec::with_capacity(rows * (nx + nc));
    let mut rhs = Vec::with_capacity(rows);
    for i in 0..c.g.rows() {
        data.extend_from_slice(c.e.row(i));
        data.extend_from_slice(c.g.row(i));
        rhs.push(c.h0[i]);
    }
    for (n, h) in x0.rows() {
        data.extend_from_slice(n);
        data.extend(std::iter::repeat_n(0.0, nc));
        rhs.push(h);
    }
    let a = Mat::from_row_major(rows, nx + nc, data)?;
    let mut lower = vec![0.0; nx];
    let mut upper = vec![0.0; nx];
    for j in 0..nx {
        for (sign, out) in [(1.0, &mut upper), (-1.0, &mut lower)] {
            let mut d = vec![0.0; nx + nc];
            d[j] = sign;
            match crate::lp::maximize(&d, &a, &rhs).map_err(SetError::from)? {
                crate::lp::LpOutcome::Optimal { value, .. } => out[j] = sign * value,
                crate::lp::LpOutcome::Infeasible => return Ok(None),
                crate::lp::LpOutcome::Unbounded => return Err(SmpcError::Set(SetError::Unbounded)),
            }
        }
    }
    Ok(Some((lower, upper)))
}

/// Shifted candidate at the next step after disturbance `ñ`:
/// `c̃_i = c*_{i+1} + K A_cl^i ñ` and `c̃_{N−1} = K(x̄_N + A_cl^{N−1} ñ)`.
pub fn shifted_candidate(problem: &MpcProblem, solution: &MpcSolution, n_tilde: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = problem.horizon;
    let k = &problem.gains.k;
    let mut drift = n_tilde.to_vec();
    let mut cand = Vec::with_capacity(n);
    for i in 0..n - 1 {
        cand.push(mat::vadd(&solution.c_seq[i + 1], &k.mul_vec(&drift)));
        drift = problem.gains.acl.mul_vec(&drift);
    }
    cand.push(k.mul_vec(&mat::vadd(&solution.xbar_seq[n], &drift)));
    let x_next = mat::vadd(&solution.xbar_seq[1], n_tilde);
    (x_next, cand)
}

/// Checks that the shifted candidate is feasible at the next step.
pub fn feasibility_probe(problem: &MpcProblem, solution: &MpcSolution, n_tilde: &[f64]) -> Result<bool> {
    if solution.status != MpcStatus::Optimal {
        return Err(SmpcError::Precondition("solution is not optimal".into()));
    }
    if n_tilde.len() != problem.a.rows() {
        return Err(SmpcError::Dimension(format!("disturbance of length {}", n_tilde.len())));
    }
    let scale = problem.disturbance.half_widths.iter().fold(1.0_f64, |m, v| m.max(*v));
    if !problem.disturbance.contains(n_tilde, 1e-9 * scale) {
        return Err(SmpcError::Precondition("disturbance lies outside the confidence set".into()));
    }
    let (x_next, cand) = shifted_candidate(problem, solution, n_tilde);
    Ok(problem.is_feasible_sequence(&x_next, &cand, CONSTRAINT_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::{ubcs, ProbabilityBudget};

    fn scalar_problem(a: f64, x: (f64, f64), u: (f64, f64), n: usize) -> MpcProblem {
        let (gains, cost) = lqr_gains(&Mat::scalar(a), &Mat::scalar(1.0), &Mat::scalar(1.0), &Mat::scalar(1.0)).unwrap();
        let xs = HPolytope::from_box(&[x.0], &[x.1]).unwrap();
        let us = HPolytope::from_box(&[u.0], &[u.1]).unwrap();
        MpcProblem::new(
            Mat::scalar(a),
            Mat::scalar(1.0),
            gains,
            cost,
            vec![xs.clone(); n],
            vec![us; n],
            xs,
            ConfidenceSet::zero(1),
        )
        .unwrap()
    }

    #[test]
    fn lqr_examples() {
        let (g, c) = lqr_gains(&Mat::zeros(2, 2), &Mat::identity(2), &Mat::identity(2), &Mat::identity(2)).unwrap();
        assert!(g.k.max_abs() < 1e-15);
        assert_eq!(c.p_terminal, Mat::identity(2));

        let (g, c) = lqr_gains(&Mat::scalar(1.0), &Mat::scalar(1.0), &Mat::scalar(1.0), &Mat::scalar(1.0)).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((c.p_terminal[(0, 0)] - phi).abs() < 1e-10);
        assert!((g.k[(0, 0)] + phi / (1.0 + phi)).abs() < 1e-10);
    }

    #[test]
    fn one_step_lq() {
        // N = 1, loose sets: minimise x²+c²+P(ax+c)² → c = −P a x/(1+P)
        let p = scalar_problem(1.0, (-1e3, 1e3), (-1e3, 1e3), 1);
        let ph = p.cost().p_terminal[(0, 0)];
        let sol = solve(&p, &[2.0]).unwrap();
        assert!((sol.c_seq[0][0] + ph * 2.0 / (1.0 + ph)).abs() < 1e-9);
        assert!((sol.objective - p.cost_of(&[2.0], &sol.c_seq)).abs() < 1e-9);
    }

    #[test]
    fn origin_is_optimal_at_zero() {
        let p = scalar_problem(1.2, (-1.0, 1.0), (-1.0, 1.0), 4);
        let step = control_step(&p, &[0.0]).unwrap();
        assert_eq!(step.u.unwrap()[0].abs(), 0.0);
        assert!(step.solution.objective.abs() < 1e-15);
    }

    #[test]
    fn constraint_count() {
        let p = scalar_problem(1.2, (-1.0, 1.0), (-1.0, 1.0), 4);
        let qp = build_qp(&p, &[0.1]).unwrap();
        assert_eq!(qp.n_constraints(), 3 * 2 + 4 * 2 + 2);
        assert_eq!(qp.n_vars(), 4);
    }

    #[test]
    fn infeasible_far_state() {
        // a·x + U ∩ X_1 = ∅ for x = 0.9, a = 2, |u| ≤ 0.1
        let p = scalar_problem(2.0, (-1.0, 1.0), (-0.1, 0.1), 3);
        assert_eq!(solve(&p, &[0.9]).unwrap().status, MpcStatus::Infeasible);
        assert!(control_step(&p, &[0.9]).unwrap().u.is_none());
        assert_eq!(solve(&p, &[1.5]).unwrap().status, MpcStatus::Infeasible);
    }

    #[test]
    fn nominal_states_follow_model() {
        let p = scalar_problem(1.1, (-2.0, 2.0), (-0.5, 0.5), 5);
        let sol = solve(&p, &[1.3]).unwrap();
        assert_eq!(sol.status, MpcStatus::Optimal);
        for i in 0..5 {
            assert_eq!(sol.xbar_seq[i + 1][0], 1.1 * sol.xbar_seq[i][0] + sol.c_seq[i][0]);
        }
        assert!(p.max_violation(&[1.3], &sol.c_seq) <= 1e-9);
    }

    #[test]
    fn feasible_box_scalar() {
        // a = 2, |u| ≤ 0.1, |x| ≤ 1, N = 1: need |2x + u| ≤ 1 → |x| ≤ 0.55
        let p = scalar_problem(2.0, (-1.0, 1.0), (-0.1, 0.1), 1);
        let (lo, hi) = feasible_box(&p).unwrap().unwrap();
        assert!((hi[0] - 0.55).abs() < 1e-9 && (lo[0] + 0.55).abs() < 1e-9);
        assert_eq!(solve(&p, &[0.54]).unwrap().status, MpcStatus::Optimal);
        assert_eq!(solve(&p, &[0.56]).unwrap().status, MpcStatus::Infeasible);
    }

    #[test]
    fn baseline_scalar_terminal() {
        let model = SystemModel::new(
            Mat::scalar(0.5),
            Mat::scalar(1.0),
            Mat::scalar(1.0),
            Mat::scalar(0.1),
            Mat::scalar(0.1),
            vec![0.0],
            Mat::scalar(0.1),
            10,
        )
        .unwrap();
        let gains = ControllerGains { k: Mat::scalar(0.0), acl: Mat::scalar(0.5) };
        let cost = CostSpec { q_stage: Mat::scalar(1.0), r_stage: Mat::scalar(1.0), p_terminal: Mat::scalar(1.0) };
        let x = HPolytope::from_box(&[-1.0], &[1.0]).unwrap();
        let u = HPolytope::from_box(&[-3.0], &[3.0]).unwrap();
        let p = baseline_problem(&model, &gains, &cost, &x, &u, 3).unwrap();
        assert!(p.terminal().includes(&x).unwrap() && x.includes(p.terminal()).unwrap());
    }

    #[test]
    fn probe_scalar_tube() {
        let (gains, cost) = lqr_gains(&Mat::scalar(1.0), &Mat::scalar(1.0), &Mat::scalar(1.0), &Mat::scalar(1.0)).unwrap();
        let x = HPolytope::from_box(&[-10.0], &[10.0]).unwrap();
        let u = HPolytope::from_box(&[-2.0], &[2.0]).unwrap();
        let budget = ProbabilityBudget::uniform(0.05, 2).unwrap();
        let ee = ubcs(&Mat::scalar(0.01), &budget).unwrap();
        let en = ubcs(&Mat::scalar(0.01), &budget).unwrap();
        let syn = synthesize(&x, &u, ee, en.clone(), &gains, 4).unwrap();
        let model = SystemModel::new(
            Mat::scalar(1.0),
            Mat::scalar(1.0),
            Mat::scalar(1.0),
            Mat::scalar(0.1),
            Mat::scalar(0.1),
            vec![0.0],
            Mat::scalar(0.1),
            10,
        )
        .unwrap();
        let p = MpcProblem::proposed(&model, &gains, &cost, &syn).unwrap();
        let sol = solve(&p, &[3.0]).unwrap();
        assert_eq!(sol.status, MpcStatus::Optimal);
        let w = en.half_widths[0];
        for s in [-1.0, -0.5, 0.0, 0.3, 1.0] {
            assert!(feasibility_probe(&p, &sol, &[s * w]).unwrap());
        }
        assert!(matches!(feasibility_probe(&p, &sol, &[1.5 * w]), Err(SmpcError::Precondition(_))));
    }
}
