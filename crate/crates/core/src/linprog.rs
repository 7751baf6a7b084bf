//! Dense bounded-variable primal simplex.
//!
//! Solves `max cᵀx  s.t.  Ãx ≤ b̃,  l ≤ x ≤ u` for the tiny programs that
//! arise in the fluid problems (a few dozen variables and rows). The tableau
//! is kept explicitly. Phase 1 minimizes the sum of artificials for rows whose
//! rhs is violated at the starting vertex; phase 2 then fixes the artificials
//! at zero and optimizes the real objective.
//!
//! Pricing is Dantzig's rule (largest reduced cost, lowest index on ties). After
//! a run of degenerate pivots the solver switches to Bland's rule for the rest
//! of the phase, which rules out cycling. The whole procedure is deterministic.

use crate::error::{input_err, Error, Result};

pub const DEFAULT_FEAS_TOL: f64 = 1e-9;
pub const DEFAULT_OPT_TOL: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_STEP: f64 = 1e-12;

/// `max cᵀx` subject to `Ãx ≤ b̃` and box bounds.
///
/// Lower bounds must be finite; upper bounds may be `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    /// One row per constraint, each of length `n`.
    pub constraint_matrix: Vec<Vec<f64>>,
    pub constraint_rhs: Vec<f64>,
    pub lower_bounds: Vec<f64>,
    pub upper_bounds: Vec<f64>,
}

impl LinearProgram {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.constraint_rhs.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.lower_bounds.len() != n || self.upper_bounds.len() != n {
            return input_err("bound vectors must match the number of variables");
        }
        if self.constraint_matrix.len() != self.n_rows() {
            return input_err("constraint matrix row count differs from rhs length");
        }
        if let Some(i) = self.constraint_matrix.iter().position(|r| r.len() != n) {
            return input_err(format!("constraint row {i} has the wrong length"));
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.constraint_rhs.iter().all(|v| v.is_finite())
            && self.constraint_matrix.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return input_err("objective, matrix and rhs entries must be finite");
        }
        for (j, (l, u)) in self.lower_bounds.iter().zip(&self.upper_bounds).enumerate() {
            if !l.is_finite() || u.is_nan() || *u == f64::NEG_INFINITY {
                return input_err(format!("variable {j}: lower bound must be finite, upper not NaN"));
            }
            if l > u {
                return input_err(format!("variable {j}: lower bound {l} exceeds upper bound {u}"));
            }
        }
        Ok(())
    }

    /// `Ãx` for a candidate point.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        self.constraint_matrix
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, xi)| a * xi).sum())
            .collect()
    }

    /// Largest violation of rows or bounds at `x` (zero when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .row_activity(x)
            .iter()
            .zip(&self.constraint_rhs)
            .map(|(ax, b)| ax - b)
            .fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower_bounds.iter().zip(&self.upper_bounds))
            .map(|(xi, (l, u))| (l - xi).max(xi - u))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Lagrangian upper bound `yᵀb̃ + Σ_j max_{x_j ∈ [l_j, u_j]} (c − Ãᵀy)_j x_j`
    /// for any nonnegative row multipliers `y` (negative entries are treated as 0).
    pub fn dual_bound(&self, duals: &[f64]) -> f64 {
        let y: Vec<f64> = duals.iter().map(|d| d.max(0.0)).collect();
        let mut bound: f64 = y.iter().zip(&self.constraint_rhs).map(|(y, b)| y * b).sum();
        for j in 0..self.n_vars() {
            let reduced = self.objective[j]
                - self
                    .constraint_matrix
                    .iter()
                    .zip(&y)
                    .map(|(row, yi)| row[j] * yi)
                    .sum::<f64>();
            bound += if reduced > 0.0 {
                reduced * self.upper_bounds[j]
            } else if reduced < 0.0 {
                reduced * self.lower_bounds[j]
            } else {
                0.0
            };
        }
        bound
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Rows with slack at most `feas_tol`.
    pub active_constraints: Vec<usize>,
    /// Row multipliers `y ≥ 0` at the final basis (meaningful when optimal).
    pub duals: Vec<f64>,
    /// Total simplex iterations over both phases.
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
    pub stall_threshold: usize,
    /// `None` picks a cap proportional to the problem size.
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: DEFAULT_FEAS_TOL,
            opt_tol: DEFAULT_OPT_TOL,
            stall_threshold: 50,
            max_iterations: None,
        }
    }
}

pub fn solve_lp(lp: &LinearProgram, feas_tol: f64, opt_tol: f64) -> Result<LpSolution> {
    solve_lp_with(
        lp,
        &SolverOptions {
            feas_tol,
            opt_tol,
            ..SolverOptions::default()
        },
    )
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution> {
    lp.validate()?;
    if !(opts.feas_tol > 0.0 && opts.opt_tol > 0.0) {
        return input_err("tolerances must be positive");
    }
    let mut tab = Tableau::new(lp);
    let cap = opts
        .max_iterations
        .unwrap_or(1000 + 50 * (tab.m + tab.ncols));

    if tab.n_art > 0 {
        let phase1: Vec<f64> = (0..tab.ncols)
            .map(|j| if j >= tab.n + tab.m { -1.0 } else { 0.0 })
            .collect();
        tab.run(&phase1, opts, cap)?;
        let infeasibility: f64 = (tab.n + tab.m..tab.ncols).map(|j| tab.x[j]).sum();
        if infeasibility > opts.feas_tol {
            return Ok(tab.finish(lp, LpStatus::Infeasible, &phase1, opts));
        }
        for j in tab.n + tab.m..tab.ncols {
            tab.hi[j] = 0.0;
            if tab.row_of[j].is_none() {
                tab.x[j] = 0.0;
                tab.at_upper[j] = false;
            }
        }
    }

    let mut cost = vec![0.0; tab.ncols];
    cost[..tab.n].copy_from_slice(&lp.objective);
    let status = match tab.run(&cost, opts, cap)? {
        PhaseEnd::Optimal => LpStatus::Optimal,
        PhaseEnd::Unbounded => LpStatus::Unbounded,
    };
    Ok(tab.finish(lp, status, &cost, opts))
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Tableau {
    n: usize,
    m: usize,
    n_art: usize,
    ncols: usize,
    /// `B⁻¹A`, row-major `m × ncols`.
    t: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<Option<usize>>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    at_upper: Vec<bool>,
    /// Row each artificial column belongs to.
    art_row: Vec<usize>,
    iterations: usize,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.n_vars();
        let m = lp.n_rows();
        let mut x = vec![0.0; n + m];
        x[..n].copy_from_slice(&lp.lower_bounds);
        let activity = lp.row_activity(&x[..n]);
        let art_row: Vec<usize> = (0..m)
            .filter(|&i| lp.constraint_rhs[i] - activity[i] < 0.0)
            .collect();
        let n_art = art_row.len();
        let ncols = n + m + n_art;
        x.resize(ncols, 0.0);

        let mut lo = lp.lower_bounds.clone();
        lo.resize(ncols, 0.0);
        let mut hi = lp.upper_bounds.clone();
        hi.resize(ncols, f64::INFINITY);

        let mut t = vec![0.0; m * ncols];
        let mut basis = vec![0; m];
        let mut row_of = vec![None; ncols];
        let mut art_of_row = vec![None; m];
        for (k, &r) in art_row.iter().enumerate() {
            art_of_row[r] = Some(k);
        }
        for i in 0..m {
            let residual = lp.constraint_rhs[i] - activity[i];
            let row = &mut t[i * ncols..(i + 1) * ncols];
            row[..n].copy_from_slice(&lp.constraint_matrix[i]);
            row[n + i] = 1.0;
            if let Some(k) = art_of_row[i] {
                // −(a_i x + s_i) + art = −b_i, with the artificial basic
                for v in row[..n + m].iter_mut() {
                    *v = -*v;
                }
                let col = n + m + k;
                row[col] = 1.0;
                basis[i] = col;
                row_of[col] = Some(i);
                x[col] = -residual;
            } else {
                basis[i] = n + i;
                row_of[n + i] = Some(i);
                x[n + i] = residual;
            }
        }

        Tableau {
            n,
            m,
            n_art,
            ncols,
            t,
            basis,
            row_of,
            x,
            lo,
            hi,
            at_upper: vec![false; ncols],
            art_row,
            iterations: 0,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.ncols + j]
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
            for (dj, tij) in d.iter_mut().zip(row) {
                *dj -= cb * tij;
            }
        }
        d
    }

    fn run(&mut self, cost: &[f64], opts: &SolverOptions, cap: usize) -> Result<PhaseEnd> {
        let mut bland = false;
        let mut stall = 0usize;
        loop {
            if self.iterations >= cap {
                return Err(Error::Solver(format!(
                    "iteration cap {cap} reached ({} rows, {} columns, bland={bland}, stall={stall})",
                    self.m, self.ncols
                )));
            }
            let d = self.reduced_costs(cost);
            let Some((enter, dir)) = self.choose_entering(&d, opts.opt_tol, bland) else {
                return Ok(PhaseEnd::Optimal);
            };
            self.iterations += 1;

            let (step, leave) = self.ratio_test(enter, dir, bland);
            if step.is_infinite() {
                return Ok(PhaseEnd::Unbounded);
            }
            for i in 0..self.m {
                let b = self.basis[i];
                self.x[b] -= dir * step * self.at(i, enter);
            }
            self.x[enter] += dir * step;

            match leave {
                None => {
                    // bound flip
                    self.at_upper[enter] = dir > 0.0;
                    self.x[enter] = if dir > 0.0 { self.hi[enter] } else { self.lo[enter] };
                }
                Some((r, to_upper)) => {
                    let out = self.basis[r];
                    self.x[out] = if to_upper { self.hi[out] } else { self.lo[out] };
                    self.at_upper[out] = to_upper;
                    self.row_of[out] = None;
                    self.pivot(r, enter);
                    self.basis[r] = enter;
                    self.row_of[enter] = Some(r);
                    self.at_upper[enter] = false;
                }
            }

            if step <= DEGENERATE_STEP {
                stall += 1;
                if stall > opts.stall_threshold {
                    bland = true;
                }
            } else {
                stall = 0;
            }
        }
    }

    fn choose_entering(&self, d: &[f64], opt_tol: f64, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (j, &dj) in d.iter().enumerate().take(self.ncols) {
            if self.row_of[j].is_some() || self.lo[j] == self.hi[j] {
                continue;
            }
            let dir = if !self.at_upper[j] && dj > opt_tol {
                1.0
            } else if self.at_upper[j] && dj < -opt_tol {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            let score = dj.abs();
            if best.is_none_or(|(_, _, s)| score > s) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Returns the step length and the leaving row (with the bound it hits),
    /// or `None` for a bound flip of the entering variable.
    fn ratio_test(&self, enter: usize, dir: f64, bland: bool) -> (f64, Option<(usize, bool)>) {
        let mut step = self.hi[enter] - self.lo[enter];
        let mut leave: Option<(usize, bool)> = None;
        let mut leave_pivot = 0.0f64;
        for i in 0..self.m {
            let alpha = dir * self.at(i, enter);
            let b = self.basis[i];
            let (limit, to_upper) = if alpha > PIVOT_TOL {
                ((self.x[b] - self.lo[b]) / alpha, false)
            } else if alpha < -PIVOT_TOL && self.hi[b].is_finite() {
                ((self.hi[b] - self.x[b]) / -alpha, true)
            } else {
                continue;
            };
            let limit = limit.max(0.0);
            let better = match leave {
                _ if limit < step - DEGENERATE_STEP => true,
                Some((r, _)) if limit <= step + DEGENERATE_STEP => {
                    if bland {
                        b < self.basis[r]
                    } else {
                        alpha.abs() > leave_pivot
                    }
                }
                _ => false,
            };
            if better {
                step = limit;
                leave = Some((i, to_upper));
                leave_pivot = alpha.abs();
            }
        }
        (step, leave)
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let nc = self.ncols;
        let p = self.t[r * nc + col];
        for v in &mut self.t[r * nc..(r + 1) * nc] {
            *v /= p;
        }
        self.t[r * nc + col] = 1.0;
        let pivot_row: Vec<f64> = self.t[r * nc..(r + 1) * nc].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * nc + col];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * nc..(i + 1) * nc];
            for (v, pr) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            row[col] = 0.0;
        }
    }

    /// Recomputes basic values as `B⁻¹(b − N x_N)`; the slack columns of the
    /// tableau hold `B⁻¹`.
    fn refresh_basic_values(&mut self, lp: &LinearProgram) {
        let (n, m) = (self.n, self.m);
        let mut rhs = lp.constraint_rhs.clone();
        for j in 0..self.ncols {
            if self.row_of[j].is_some() || self.x[j] == 0.0 {
                continue;
            }
            let xj = self.x[j];
            if j < n {
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r -= lp.constraint_matrix[i][j] * xj;
                }
            } else if j < n + m {
                rhs[j - n] -= xj;
            } else {
                rhs[self.art_row[j - n - m]] += xj;
            }
        }
        for i in 0..m {
            let v: f64 = (0..m).map(|k| self.at(i, n + k) * rhs[k]).sum();
            self.x[self.basis[i]] = v;
        }
    }

    fn finish(
        mut self,
        lp: &LinearProgram,
        status: LpStatus,
        cost: &[f64],
        opts: &SolverOptions,
    ) -> LpSolution {
        if status == LpStatus::Optimal {
            self.refresh_basic_values(lp);
        }
        let x: Vec<f64> = (0..self.n)
            .map(|j| self.x[j].clamp(lp.lower_bounds[j], lp.upper_bounds[j]))
            .collect();
        let activity = lp.row_activity(&x);
        let active_constraints = activity
            .iter()
            .zip(&lp.constraint_rhs)
            .enumerate()
            .filter(|(_, (ax, b))| *b - *ax <= opts.feas_tol)
            .map(|(i, _)| i)
            .collect();
        let duals = (0..self.m)
            .map(|k| {
                (0..self.m)
                    .map(|i| cost[self.basis[i]] * self.at(i, self.n + k))
                    .sum::<f64>()
            })
            .collect();
        let objective_value = match status {
            LpStatus::Optimal => lp.objective.iter().zip(&x).map(|(c, xi)| c * xi).sum(),
            LpStatus::Unbounded => f64::INFINITY,
            LpStatus::Infeasible => f64::NAN,
        };
        LpSolution {
            status,
            x,
            objective_value,
            active_constraints,
            duals,
            iterations: self.iterations,
        }
    }
}
