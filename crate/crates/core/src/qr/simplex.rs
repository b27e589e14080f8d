//! Bounded-variable simplex for the quantile regression dual.
//!
//! The dual of `min sum rho_tau(y_i - x_i'b)` is
//!
//! ```text
//! max y'a   s.t.  X'a = (1 - tau) X'1,   0 <= a_i <= 1
//! ```
//!
//! which has only `p` equality rows, so the basis is a `p x p` matrix and each pivot costs
//! `O(n p)`. At the optimum the basic observations have zero residual and the coefficient
//! vector is recovered by interpolating them.

use crate::error::{Error, Result};
use crate::qr::linalg;

const PIVOT_EPS: f64 = 1e-9;
const DEGENERATE_RUN_BEFORE_BLAND: usize = 50;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

struct DualLp<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    n: usize,
    p: usize,
    rhs: Vec<f64>,
    /// Sign of each artificial column `sign_k * e_k`.
    art_sign: Vec<f64>,
    /// Nonbasic structural variables sitting at their upper bound of 1.
    at_upper: Vec<bool>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    cost_tol: f64,
}

impl<'a> DualLp<'a> {
    fn column(&self, j: usize, out: &mut [f64]) {
        if j < self.n {
            out.copy_from_slice(&self.x[j]);
        } else {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[j - self.n] = self.art_sign[j - self.n];
        }
    }

    fn upper(&self, j: usize) -> f64 {
        if j < self.n {
            1.0
        } else {
            f64::INFINITY
        }
    }

    fn cost(&self, j: usize, phase: Phase) -> f64 {
        match (phase, j < self.n) {
            (Phase::One, true) => 0.0,
            (Phase::One, false) => 1.0,
            (Phase::Two, true) => -self.y[j],
            (Phase::Two, false) => 0.0,
        }
    }

    fn basis_inverse(&self) -> Result<Vec<Vec<f64>>> {
        let p = self.p;
        let mut m = vec![vec![0.0; p]; p];
        let mut col = vec![0.0; p];
        for (k, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for r in 0..p {
                m[r][k] = col[r];
            }
        }
        linalg::invert(&m).ok_or_else(|| {
            Error::ModelPathology("singular simplex basis in quantile regression".into())
        })
    }

    fn basic_values(&self, binv: &[Vec<f64>]) -> Vec<f64> {
        let p = self.p;
        let mut r = self.rhs.clone();
        for j in 0..self.n {
            if !self.is_basic[j] && self.at_upper[j] {
                for (ri, xi) in r.iter_mut().zip(&self.x[j]) {
                    *ri -= xi;
                }
            }
        }
        (0..p)
            .map(|k| (0..p).map(|c| binv[k][c] * r[c]).sum())
            .collect()
    }

    /// Runs simplex iterations for one phase until no improving column remains.
    fn optimize(&mut self, phase: Phase, max_iter: usize) -> Result<()> {
        let p = self.p;
        let total = self.n + p;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut col = vec![0.0; p];

        for _ in 0..max_iter {
            let binv = self.basis_inverse()?;
            let xb = self.basic_values(&binv);
            let cb: Vec<f64> = self.basis.iter().map(|&j| self.cost(j, phase)).collect();
            let pi: Vec<f64> = (0..p)
                .map(|c| (0..p).map(|k| cb[k] * binv[k][c]).sum())
                .collect();

            // Entering column: increase from 0 when the reduced cost is negative, decrease
            // from 1 when it is positive.
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..total {
                if self.is_basic[j] || (phase == Phase::Two && j >= self.n) {
                    continue;
                }
                self.column(j, &mut col);
                let d = self.cost(j, phase) - dot(&pi, &col);
                let dir = if d < -self.cost_tol && !(j < self.n && self.at_upper[j]) {
                    1.0
                } else if d > self.cost_tol && j < self.n && self.at_upper[j] {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    entering = Some((j, dir, d.abs()));
                    break;
                }
                if entering.is_none_or(|(_, _, best)| d.abs() > best) {
                    entering = Some((j, dir, d.abs()));
                }
            }
            let Some((enter, dir, _)) = entering else {
                return Ok(());
            };

            self.column(enter, &mut col);
            let w: Vec<f64> = (0..p).map(|k| dot(&binv[k], &col)).collect();

            // Ratio test. `theta` is the step of the entering variable along `dir`.
            let mut theta = self.upper(enter);
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_mag = 0.0;
            for k in 0..p {
                let delta = -dir * w[k];
                let j = self.basis[k];
                let (limit, to_upper) = if delta < -PIVOT_EPS {
                    ((xb[k] / -delta).max(0.0), false)
                } else if delta > PIVOT_EPS && self.upper(j).is_finite() {
                    (((self.upper(j) - xb[k]) / delta).max(0.0), true)
                } else {
                    continue;
                };
                let better = if limit < theta - 1e-12 {
                    true
                } else if limit <= theta + 1e-12 {
                    match leave {
                        None => false,
                        Some((lk, _)) if bland => j < self.basis[lk],
                        Some(_) => delta.abs() > leave_mag,
                    }
                } else {
                    false
                };
                if better {
                    theta = limit;
                    leave = Some((k, to_upper));
                    leave_mag = delta.abs();
                }
            }

            if theta <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run >= DEGENERATE_RUN_BEFORE_BLAND {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }

            match leave {
                None => {
                    // Bound flip; the basis is unchanged.
                    if theta.is_infinite() {
                        return Err(Error::ModelPathology(
                            "unbounded quantile regression dual".into(),
                        ));
                    }
                    self.at_upper[enter] = !self.at_upper[enter];
                }
                Some((k, to_upper)) => {
                    let out = self.basis[k];
                    self.is_basic[out] = false;
                    if out < self.n {
                        self.at_upper[out] = to_upper;
                    }
                    self.basis[k] = enter;
                    self.is_basic[enter] = true;
                    if enter < self.n {
                        self.at_upper[enter] = false;
                    }
                }
            }
        }
        Err(Error::ModelPathology(
            "quantile regression simplex hit its iteration limit".into(),
        ))
    }

    /// Swaps artificial columns that are still basic (at zero) for structural ones.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let p = self.p;
        let mut col = vec![0.0; p];
        for k in 0..p {
            if self.basis[k] < self.n {
                continue;
            }
            let binv = self.basis_inverse()?;
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n {
                if self.is_basic[j] {
                    continue;
                }
                self.column(j, &mut col);
                let wk = dot(&binv[k], &col).abs();
                if wk > PIVOT_EPS && best.is_none_or(|(_, b)| wk > b) {
                    best = Some((j, wk));
                }
            }
            let (j, _) = best.ok_or(Error::RankDeficient)?;
            let out = self.basis[k];
            self.is_basic[out] = false;
            self.basis[k] = j;
            self.is_basic[j] = true;
            self.at_upper[j] = false;
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Returns coefficients minimizing the total pinball loss of `y` on the rows of `x`.
///
/// The caller guarantees `x` has full column rank and `0 < tau < 1`.
pub(crate) fn solve(x: &[Vec<f64>], y: &[f64], tau: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let p = x[0].len();

    let mut rhs = vec![0.0; p];
    for row in x {
        for (r, v) in rhs.iter_mut().zip(row) {
            *r += (1.0 - tau) * v;
        }
    }

    // Start the nonbasic weights from the sign pattern of a least-squares fit shifted to
    // the tau-quantile of its residuals.
    let start = linalg::least_squares(x, y).unwrap_or_else(|| vec![0.0; p]);
    let ls_resid: Vec<f64> = x.iter().zip(y).map(|(row, &yi)| yi - dot(row, &start)).collect();
    let mut sorted = ls_resid.clone();
    sorted.sort_by(f64::total_cmp);
    let shift = sorted[((tau * n as f64) as usize).min(n - 1)];
    let at_upper: Vec<bool> = ls_resid.iter().map(|&r| r > shift).collect();
    let mut residual = rhs.clone();
    for (row, &up) in x.iter().zip(&at_upper) {
        if up {
            for (r, v) in residual.iter_mut().zip(row) {
                *r -= v;
            }
        }
    }
    let art_sign: Vec<f64> = residual
        .iter()
        .map(|&r| if r < 0.0 { -1.0 } else { 1.0 })
        .collect();

    let y_scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut is_basic = vec![false; n + p];
    for k in 0..p {
        is_basic[n + k] = true;
    }
    let mut lp = DualLp {
        x,
        y,
        n,
        p,
        rhs,
        art_sign,
        at_upper,
        basis: (n..n + p).collect(),
        is_basic,
        cost_tol: 1e-11,
    };

    let max_iter = 100 * (n + p) + 10_000;
    lp.optimize(Phase::One, max_iter)?;
    let binv = lp.basis_inverse()?;
    let infeasibility: f64 = lp
        .basis
        .iter()
        .zip(lp.basic_values(&binv))
        .filter(|(&j, _)| j >= n)
        .map(|(_, v)| v.abs())
        .sum();
    let rhs_scale = lp.rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if infeasibility > 1e-8 * rhs_scale {
        return Err(Error::ModelPathology(
            "quantile regression dual has no feasible start".into(),
        ));
    }
    lp.drive_out_artificials()?;
    lp.cost_tol = 1e-11 * y_scale;
    lp.optimize(Phase::Two, max_iter)?;

    let rows: Vec<Vec<f64>> = lp.basis.iter().map(|&j| x[j].clone()).collect();
    let targets: Vec<f64> = lp.basis.iter().map(|&j| y[j]).collect();
    linalg::solve(&rows, &targets).ok_or(Error::RankDeficient)
}
