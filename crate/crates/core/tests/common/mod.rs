//! Reference implementations that share no code with the library.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub type M = Vec<Vec<f64>>;

pub fn mm(a: &M, b: &M) -> M {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..k {
            for j in 0..m {
                c[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    c
}

pub fn tr(a: &M) -> M {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn add(a: &M, b: &M, s: f64) -> M {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + s * q).collect()).collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inv(a: &M) -> M {
    let n = a.len();
    let mut w: M = a.iter().enumerate().map(|(i, r)| {
        let mut row = r.clone();
        row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
        row
    }).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| w[x][c].abs().total_cmp(&w[y][c].abs())).unwrap();
        w.swap(c, p);
        let d = w[c][c];
        for v in w[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = w[r][c];
                let pivot = w[c].clone();
                for (v, q) in w[r].iter_mut().zip(&pivot) {
                    *v -= f * q;
                }
            }
        }
    }
    w.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mv(a: &M, x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| dotv(r, x)).collect()
}

/// Vertices of a bounded 2-D polytope `{x : rows·x ≤ offsets}` by pairwise line intersection.
pub fn vertices(rows: &[[f64; 2]], offsets: &[f64]) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let (a, b) = (rows[i], rows[j]);
            let det = a[0] * b[1] - a[1] * b[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = [(offsets[i] * b[1] - offsets[j] * a[1]) / det, (a[0] * offsets[j] - b[0] * offsets[i]) / det];
            let scale = 1.0 + x[0].abs() + x[1].abs();
            if rows.iter().zip(offsets).all(|(r, h)| r[0] * x[0] + r[1] * x[1] <= h + 1e-10 * scale) {
                out.push(x);
            }
        }
    }
    out
}

/// All `Σ ±g` corner points of a zonotope.
pub fn zonotope_points(center: &[f64], gens: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = gens.len();
    (0..1usize << m)
        .map(|mask| {
            let mut p = center.to_vec();
            for (j, g) in gens.iter().enumerate() {
                let s = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
                for (pi, gi) in p.iter_mut().zip(g) {
                    *pi += s * gi;
                }
            }
            p
        })
        .collect()
}

pub fn max_dot(points: &[Vec<f64>], d: &[f64]) -> f64 {
    points.iter().map(|p| dotv(p, d)).fold(f64::NEG_INFINITY, f64::max)
}

/// Random bounded 2-D polytope containing the origin: normals at jittered
/// angles around the circle, offsets in `[1, 3]`.
pub fn random_polygon(r: &mut impl Rng) -> (Vec<[f64; 2]>, Vec<f64>) {
    let m = r.gen_range(4..9);
    let rows: Vec<[f64; 2]> = (0..m)
        .map(|i| {
            let t = (i as f64 + r.gen_range(-0.3..0.3)) * std::f64::consts::TAU / m as f64;
            let s = r.gen_range(0.5..2.0);
            [s * t.cos(), s * t.sin()]
        })
        .collect();
    let offsets = rows.iter().map(|row| r.gen_range(1.0..3.0) * (row[0].hypot(row[1]))).collect();
    (rows, offsets)
}

pub fn random_generators(r: &mut impl Rng, count: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..count).map(|_| vec![r.gen_range(-scale..scale), r.gen_range(-scale..scale)]).collect()
}

/// `min ½xᵀHx + fᵀx` over `lo ≤ x ≤ hi` by projected gradient with step `1/L`.
pub fn box_qp_projected_gradient(h: &M, f: &[f64], lo: &[f64], hi: &[f64], iters: usize) -> Vec<f64> {
    let l: f64 = h.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut x: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
    for _ in 0..iters {
        let g: Vec<f64> = mv(h, &x).iter().zip(f).map(|(a, b)| a + b).collect();
        for i in 0..x.len() {
            x[i] = (x[i] - g[i] / l).clamp(lo[i], hi[i]);
        }
    }
    x
}

/// `min ½xᵀHx + fᵀx` s.t. `Gx ≤ b` by accelerated projected gradient on the dual
/// (`λ ≥ 0`), returning the primal recovery `x = −H⁻¹(f + Gᵀλ)`.
pub fn dual_projected_gradient(h: &M, f: &[f64], g: &M, b: &[f64], iters: usize) -> Vec<f64> {
    let hi = inv(h);
    let gt = tr(g);
    let d = mm(&mm(g, &hi), &gt);
    let l: f64 = d.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(1e-12, f64::max);
    let primal = |lam: &[f64]| -> Vec<f64> {
        let rhs: Vec<f64> = f.iter().zip(mv(&gt, lam)).map(|(a, b)| a + b).collect();
        mv(&hi, &rhs).into_iter().map(|v| -v).collect()
    };
    let m = b.len();
    let mut lam = vec![0.0; m];
    let mut y = lam.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let x = primal(&y);
        let grad: Vec<f64> = mv(g, &x).iter().zip(b).map(|(gx, bi)| gx - bi).collect();
        let next: Vec<f64> = (0..m).map(|i| (y[i] + grad[i] / l).max(0.0)).collect();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = (0..m).map(|i| next[i] + (t - 1.0) / t_next * (next[i] - lam[i])).collect();
        lam = next;
        t = t_next;
    }
    primal(&lam)
}

pub fn qp_objective(h: &M, f: &[f64], x: &[f64]) -> f64 {
    0.5 * dotv(x, &mv(h, x)) + dotv(f, x)
}

/// Max-abs residual of `P = AᵀPA − AᵀPG(GᵀPG + R)⁻¹GᵀPA + Q`.
pub fn riccati_residual(p: &M, a: &M, g: &M, q: &M, r: &M) -> f64 {
    let at = tr(a);
    let pg = mm(p, g);
    let s = add(&mm(&tr(g), &pg), r, 1.0);
    let gtpa = mm(&tr(&pg), a);
    let corr = mm(&mm(&tr(&gtpa), &inv(&s)), &gtpa);
    let rhs = add(&add(&mm(&mm(&at, p), a), &corr, -1.0), q, 1.0);
    add(p, &rhs, -1.0).iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `Φ(x)` for `x ≤ 0` by composite Simpson quadrature of the density on `[−12, x]`.
fn lower_tail(x: f64) -> f64 {
    let a = -12.0;
    if x <= a {
        return 0.0;
    }
    let n = 40_000;
    let h = (x - a) / n as f64;
    let mut s = pdf(a) + pdf(x);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Standard normal quantile by bisection on the quadrature CDF.
pub fn quantile_oracle(q: f64) -> f64 {
    assert!(q > 0.0 && q < 1.0);
    if q > 0.5 {
        return -quantile_oracle(1.0 - q);
    }
    let (mut lo, mut hi) = (-12.0, 0.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if lower_tail(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn quantile_grid() -> Vec<f64> {
    let mut qs: Vec<f64> = (1..=40).map(|i| i as f64 / 41.0).collect();
    qs.extend([1e-6, 1e-4, 1e-3, 0.01, 1.0 - 0.05 / 4.0, 1.0 - 0.002_035 / 4.0, 0.999, 0.9999, 1.0 - 1e-6, 0.5]);
    qs
}

/// Oracle checks shared by the integration suite and the acceptance run.
pub mod suites {
    use super::*;
    use ofsmpc::mat::{dare, Mat};
    use ofsmpc::qp::{qp_solve, Qp, QpStatus};
    use ofsmpc::sets::{inv_norm_cdf, lp_support, minkowski_sum, pontryagin_diff, HPolytope, Zonotope};

    fn unit(r: &mut impl Rng) -> [f64; 2] {
        let t = r.gen_range(0.0..std::f64::consts::TAU);
        [t.cos(), t.sin()]
    }

    /// Worst discrepancy over `n` random instances of Minkowski sum, Pontryagin
    /// difference and LP support against vertex enumeration.
    pub fn set_support_discrepancy(n: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        let mut worst = 0.0f64;
        for _ in 0..n {
            let (rows, offsets) = random_polygon(&mut r);
            let c1 = vec![r.gen_range(-0.2..0.2), r.gen_range(-0.2..0.2)];
            let (m1, m2) = (r.gen_range(1..4), r.gen_range(1..4));
            let g1 = random_generators(&mut r, m1, 0.3);
            let g2 = random_generators(&mut r, m2, 0.3);
            let z1 = Zonotope::new(c1.clone(), g1.clone()).unwrap();
            let z2 = Zonotope::centered(2, g2.clone()).unwrap();
            let sum = minkowski_sum(&z1, &z2).unwrap();
            let pts1 = zonotope_points(&c1, &g1);
            let pts2 = zonotope_points(&[0.0, 0.0], &g2);
            let sum_pts: Vec<Vec<f64>> =
                pts1.iter().flat_map(|a| pts2.iter().map(move |b| vec![a[0] + b[0], a[1] + b[1]])).collect();

            let p = HPolytope::from_rows(&rows, &offsets).unwrap();
            let diff = pontryagin_diff(&p, &z1).unwrap();
            let diff_offsets: Vec<f64> =
                rows.iter().zip(&offsets).map(|(row, h)| h - max_dot(&pts1, row)).collect();
            let diff_vertices = vertices(&rows, &diff_offsets);
            let poly_vertices = vertices(&rows, &offsets);

            for _ in 0..8 {
                let d = unit(&mut r);
                worst = worst.max((sum.support(&d) - max_dot(&sum_pts, &d)).abs());
                let vp: Vec<Vec<f64>> = poly_vertices.iter().map(|v| v.to_vec()).collect();
                worst = worst.max((lp_support(&p, &d).unwrap().value - max_dot(&vp, &d)).abs());
                if diff_vertices.len() >= 3 {
                    let vd: Vec<Vec<f64>> = diff_vertices.iter().map(|v| v.to_vec()).collect();
                    worst = worst.max((lp_support(&diff, &d).unwrap().value - max_dot(&vd, &d)).abs());
                }
            }
        }
        worst
    }

    fn random_spd(r: &mut impl Rng, n: usize) -> M {
        let a: M = (0..n).map(|_| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let mut h = mm(&a, &tr(&a));
        for (i, row) in h.iter_mut().enumerate() {
            row[i] += 0.5;
        }
        h
    }

    /// Worst objective gap over `n` random feasible QPs against projected gradient.
    pub fn qp_objective_discrepancy(n: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        let mut worst = 0.0f64;
        for inst in 0..n {
            let dim = r.gen_range(1..5);
            let h = random_spd(&mut r, dim);
            let f: Vec<f64> = (0..dim).map(|_| r.gen_range(-5.0..5.0)).collect();
            let (g, b, oracle): (M, Vec<f64>, Vec<f64>) = if inst % 2 == 0 {
                let lo: Vec<f64> = (0..dim).map(|_| r.gen_range(-2.0..0.0)).collect();
                let hi: Vec<f64> = (0..dim).map(|_| r.gen_range(0.0..2.0)).collect();
                let mut g = Vec::new();
                let mut b = Vec::new();
                for i in 0..dim {
                    let mut e = vec![0.0; dim];
                    e[i] = 1.0;
                    g.push(e.clone());
                    b.push(hi[i]);
                    e[i] = -1.0;
                    g.push(e);
                    b.push(-lo[i]);
                }
                let x = box_qp_projected_gradient(&h, &f, &lo, &hi, 200_000);
                (g, b, x)
            } else {
                let m = r.gen_range(1..2 * dim + 3);
                let x0: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
                let g: M = (0..m).map(|_| (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
                let b: Vec<f64> = g.iter().map(|row| dotv(row, &x0) + r.gen_range(0.0..0.5)).collect();
                let x = dual_projected_gradient(&h, &f, &g, &b, 200_000);
                (g, b, x)
            };
            let qp = Qp::new(
                Mat::from_rows(&h).unwrap(),
                f.clone(),
                Mat::from_rows(&g).unwrap(),
                b.clone(),
            )
            .unwrap();
            let sol = qp_solve(&qp).unwrap();
            assert_eq!(sol.status, QpStatus::Optimal, "instance {inst} reported infeasible");
            let viol = g.iter().zip(&b).map(|(row, bi)| dotv(row, &oracle) - bi).fold(0.0, f64::max);
            assert!(viol < 1e-6, "oracle point violates constraints by {viol} on instance {inst}");
            worst = worst.max((qp_objective(&h, &f, &sol.x) - qp_objective(&h, &f, &oracle)).abs());
        }
        worst
    }

    fn to_m(m: &Mat) -> M {
        m.to_rows()
    }

    /// Riccati residuals of the double-integrator control and filter equations.
    pub fn dare_residuals() -> (f64, f64) {
        let a = Mat::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        let b = Mat::from_rows(&[[0.5], [1.0]]).unwrap();
        let c = Mat::from_rows(&[[1.0, 0.0]]).unwrap();
        let q_lqr = Mat::from_diag(&[100.0, 1.0]);
        let r_lqr = Mat::scalar(1.0);
        let qw = Mat::from_diag(&[0.1, 0.1]);
        let rv = Mat::scalar(0.1);
        let pc = dare(&a, &b, &q_lqr, &r_lqr, 1e-12, 100_000).unwrap();
        let pf = dare(&a.transpose(), &c.transpose(), &qw, &rv, 1e-12, 100_000).unwrap();
        let control = riccati_residual(&to_m(&pc), &to_m(&a), &to_m(&b), &to_m(&q_lqr), &to_m(&r_lqr));
        let filter =
            riccati_residual(&to_m(&pf), &to_m(&a.transpose()), &to_m(&c.transpose()), &to_m(&qw), &to_m(&rv));
        (control, filter)
    }

    pub fn quantile_discrepancy() -> f64 {
        quantile_grid().into_iter().map(|q| (inv_norm_cdf(q).unwrap() - quantile_oracle(q)).abs()).fold(0.0, f64::max)
    }
}
