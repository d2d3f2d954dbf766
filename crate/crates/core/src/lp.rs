//! Dense two-phase simplex for small linear programs.
//!
//! Problems are posed as `minimize cᵀx subject to A x ≤ b` with `x` free.
//! Free variables are split into positive and negative parts, each row gets
//! a slack, and rows with a negative right-hand side get an artificial
//! variable for phase 1. Pivoting follows Bland's rule, so the method
//! terminates on degenerate problems.

use thiserror::Error;

use crate::mat::Mat;

const PIVOT_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("LP dimension mismatch: {0}")]
    Dimension(String),
    #[error("simplex exceeded {0} pivots")]
    PivotLimit(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn is_optimal(&self) -> bool {
        matches!(self, LpOutcome::Optimal { .. })
    }
}

struct Tableau {
    /// `rows × (cols + 1)`, right-hand side in the last column.
    t: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
    pivots: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Loads cost vector `cost` (length `cols`) as reduced costs w.r.t. the current basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let mut obj = cost.to_vec();
        obj.push(0.0);
        for (i, row) in self.t.iter().enumerate() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(row) {
                    *o -= cb * v;
                }
            }
        }
        self.obj = obj;
    }

    /// Runs Bland-rule iterations over columns `< allowed`. `Ok(false)` means unbounded.
    fn optimize(&mut self, allowed: usize) -> Result<bool, LpError> {
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(LpError::PivotLimit(MAX_PIVOTS));
            }
            let entering = (0..allowed).find(|&j| self.obj[j] < -PIVOT_TOL);
            let Some(c) = entering else { return Ok(true) };
            let rhs = self.cols;
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.t.iter().enumerate() {
                let a = row[c];
                if a > PIVOT_TOL {
                    let ratio = row[rhs] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, c),
            }
        }
    }
}

/// Minimizes `cᵀx` subject to `A x ≤ b` over free `x`.
pub fn minimize(c: &[f64], a: &Mat, b: &[f64]) -> Result<LpOutcome, LpError> {
    let n = a.cols();
    if c.len() != n || b.len() != a.rows() {
        return Err(LpError::Dimension(format!(
            "cost {} / rhs {} for a {}x{} constraint matrix",
            c.len(),
            b.len(),
            a.rows(),
            n
        )));
    }

    // Normalise rows; drop vacuous zero rows and detect contradictory ones.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(a.rows());
    for (i, &bi) in b.iter().enumerate() {
        let row = a.row(i);
        let scale = row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale <= 1e-14 {
            if bi < -PIVOT_TOL {
                return Ok(LpOutcome::Infeasible);
            }
            continue;
        }
        rows.push((row.iter().map(|v| v / scale).collect(), bi / scale));
    }

    let m = rows.len();
    let n_art = rows.iter().filter(|(_, bi)| *bi < 0.0).count();
    let n_struct = 2 * n + m;
    let cols = n_struct + n_art;
    let mut t = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    let mut art = 0;
    for (i, (row, bi)) in rows.iter().enumerate() {
        let sign = if *bi < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * row[j];
            t[i][n + j] = -sign * row[j];
        }
        t[i][2 * n + i] = sign;
        t[i][cols] = sign * bi;
        if sign < 0.0 {
            t[i][n_struct + art] = 1.0;
            basis[i] = n_struct + art;
            art += 1;
        } else {
            basis[i] = 2 * n + i;
        }
    }
    let mut tab = Tableau { t, obj: Vec::new(), basis, cols, pivots: 0 };

    if n_art > 0 {
        let mut cost = vec![0.0; cols];
        for v in cost.iter_mut().skip(n_struct) {
            *v = 1.0;
        }
        tab.set_objective(&cost);
        tab.optimize(cols)?;
        let infeas: f64 = -tab.obj[cols];
        let bscale = 1.0 + rows.iter().fold(0.0_f64, |mx, (_, bi)| mx.max(bi.abs()));
        if infeas > 1e-9 * bscale {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive remaining artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < tab.t.len() {
            if tab.basis[r] >= n_struct {
                if let Some(c) = (0..n_struct).find(|&j| tab.t[r][j].abs() > PIVOT_TOL) {
                    tab.pivot(r, c);
                    r += 1;
                } else {
                    tab.t.remove(r);
                    tab.basis.remove(r);
                }
            } else {
                r += 1;
            }
        }
        for row in tab.t.iter_mut() {
            for v in row.iter_mut().take(cols).skip(n_struct) {
                *v = 0.0;
            }
        }
    }

    let mut cost = vec![0.0; cols];
    for j in 0..n {
        cost[j] = c[j];
        cost[n + j] = -c[j];
    }
    tab.set_objective(&cost);
    if !tab.optimize(n_struct)? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = vec![0.0; n];
    for (i, &bv) in tab.basis.iter().enumerate() {
        let v = tab.t[i][cols];
        if bv < n {
            x[bv] += v;
        } else if bv < 2 * n {
            x[bv - n] -= v;
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpOutcome::Optimal { x, value })
}

/// Maximizes `dᵀx` subject to `A x ≤ b`.
pub fn maximize(d: &[f64], a: &Mat, b: &[f64]) -> Result<LpOutcome, LpError> {
    let neg: Vec<f64> = d.iter().map(|v| -v).collect();
    Ok(match minimize(&neg, a, b)? {
        LpOutcome::Optimal { x, value } => LpOutcome::Optimal { x, value: -value },
        other => other,
    })
}

/// Any point of `{x : A x ≤ b}`, or `None` when it is empty.
pub fn feasible_point(a: &Mat, b: &[f64]) -> Result<Option<Vec<f64>>, LpError> {
    let zero = vec![0.0; a.cols()];
    Ok(match minimize(&zero, a, b)? {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> (Mat, Vec<f64>) {
        let a = Mat::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
        (a, vec![1.0; 4])
    }

    #[test]
    fn box_support() {
        let (a, b) = unit_box();
        match maximize(&[1.0, 1.0], &a, &b).unwrap() {
            LpOutcome::Optimal { x, value } => {
                assert!((value - 2.0).abs() < 1e-12);
                assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn negative_rhs_needs_phase_one() {
        // 2 <= x <= 3, 1 <= y <= 5, minimise x + y
        let a = Mat::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
        let b = [3.0, -2.0, 5.0, -1.0];
        match minimize(&[1.0, 1.0], &a, &b).unwrap() {
            LpOutcome::Optimal { value, .. } => assert!((value - 3.0).abs() < 1e-12),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = Mat::from_rows(&[[1.0], [-1.0]]).unwrap();
        assert_eq!(minimize(&[1.0], &a, &[0.0, -1.0]).unwrap(), LpOutcome::Infeasible);
        let a = Mat::from_rows(&[[1.0, 0.0]]).unwrap();
        assert_eq!(maximize(&[0.0, 1.0], &a, &[1.0]).unwrap(), LpOutcome::Unbounded);
        let z = Mat::from_rows(&[[0.0, 0.0]]).unwrap();
        assert_eq!(feasible_point(&z, &[-1.0]).unwrap(), None);
        assert!(feasible_point(&z, &[0.0]).unwrap().is_some());
    }

    #[test]
    fn degenerate_duplicate_rows() {
        let a = Mat::from_rows(&[[1.0, 1.0], [1.0, 1.0], [2.0, 2.0], [-1.0, 0.0], [0.0, -1.0]]).unwrap();
        let b = [1.0, 1.0, 2.0, 0.0, 0.0];
        match maximize(&[1.0, 2.0], &a, &b).unwrap() {
            LpOutcome::Optimal { value, .. } => assert!((value - 2.0).abs() < 1e-12),
            o => panic!("{o:?}"),
        }
    }
}
