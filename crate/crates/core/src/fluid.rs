//! Fluid relaxations of the dynamic problem.
//!
//! `Φ(γ)` maximizes the fractional revenue `R(x)` over `x ∈ [0,1]^N` with
//! `‖x‖₁ ≤ K` and expected consumption `Aᵀν(x) ≤ γ`. Its objective is a ratio
//! of affine functions, so it is solved by bisection on a revenue level `λ`:
//! `Φ(γ) ≥ λ` holds exactly when some feasible `x` has
//! `Σ (r_i − λ) v_i x_i ≥ λ`, and that is a single LP.
//!
//! `Ψ(γ, s)` moves the MNL denominator into a budget constraint
//! `1 + Σ v_i x_i ≤ s` and is an LP outright. When `s` is the denominator of
//! the `Φ` optimizer, `Ψ(γ, s)/s = Φ(γ)`.
//!
//! The resource constraint `Σ_i A_ij v_i x_i ≤ γ_j (1 + Σ_k v_k x_k)` is stored
//! linearized as `Σ_i (A_ij − γ_j) v_i x_i ≤ γ_j`.

use serde::Serialize;

use crate::error::{input_err, Error, Result};
use crate::linprog::{solve_lp, LinearProgram, LpSolution, LpStatus, DEFAULT_FEAS_TOL, DEFAULT_OPT_TOL};
use crate::model::ModelInstance;

/// Bisection tolerance used when computing the regret benchmark `T·Φ(γ₀)`.
pub const BENCHMARK_EPSILON: f64 = 1e-9;

/// Slack on the bisection acceptance test, absorbing LP round-off at the boundary.
const ACCEPT_SLACK: f64 = 1e-12;

/// A fractional assortment with its objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionalSolution {
    pub x: Vec<f64>,
    /// `R(x)` for `Φ`; the un-normalized `Σ r_i v_i x_i` for `Ψ`.
    pub objective: f64,
    /// `1 + Σ v_i x_i`
    pub denominator: f64,
    /// Final lower end of the bisection bracket (`Φ` only).
    pub lambda_final: Option<f64>,
    /// Final `(λ_L, λ_U)` (`Φ` only).
    pub bracket: Option<(f64, f64)>,
    /// Active rows of the LP that produced `x`: 0 is the cardinality row,
    /// `1..=M` the resources and, for `Ψ`, `M + 1` the denominator budget.
    pub active_constraints: Vec<usize>,
    /// Number of LPs solved to produce this solution.
    pub lp_solves: usize,
}

impl FractionalSolution {
    fn zero(n: usize) -> Self {
        FractionalSolution {
            x: vec![0.0; n],
            objective: 0.0,
            denominator: 1.0,
            lambda_final: None,
            bracket: None,
            active_constraints: Vec::new(),
            lp_solves: 0,
        }
    }
}

fn check_gamma(instance: &ModelInstance, gamma: &[f64]) -> Result<()> {
    if gamma.len() != instance.n_resources() {
        return input_err(format!(
            "gamma has {} entries, instance has {} resources",
            gamma.len(),
            instance.n_resources()
        ));
    }
    if gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return input_err("gamma entries must be finite and nonnegative");
    }
    Ok(())
}

/// Cardinality row followed by the `M` linearized resource rows.
fn base_rows(instance: &ModelInstance, gamma: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = instance.n_products();
    let v = instance.preferences();
    let mut rows = Vec::with_capacity(instance.n_resources() + 2);
    let mut rhs = Vec::with_capacity(instance.n_resources() + 2);
    rows.push(vec![1.0; n]);
    rhs.push(instance.cardinality_cap() as f64);
    for (j, &g) in gamma.iter().enumerate() {
        rows.push((0..n).map(|i| (instance.consumption(i, j) - g) * v[i]).collect());
        rhs.push(g);
    }
    (rows, rhs)
}

/// LP whose optimum decides whether `Φ(γ) ≥ λ`.
pub fn lambda_program(instance: &ModelInstance, gamma: &[f64], lambda: f64) -> LinearProgram {
    let n = instance.n_products();
    let (constraint_matrix, constraint_rhs) = base_rows(instance, gamma);
    LinearProgram {
        objective: (0..n)
            .map(|i| (instance.revenues()[i] - lambda) * instance.preferences()[i])
            .collect(),
        constraint_matrix,
        constraint_rhs,
        lower_bounds: vec![0.0; n],
        upper_bounds: vec![1.0; n],
    }
}

/// The `Ψ(γ, s)` linear program.
pub fn psi_program(instance: &ModelInstance, gamma: &[f64], s: f64) -> LinearProgram {
    let n = instance.n_products();
    let v = instance.preferences();
    let (mut constraint_matrix, mut constraint_rhs) = base_rows(instance, gamma);
    constraint_matrix.push(v.to_vec());
    constraint_rhs.push(s - 1.0);
    LinearProgram {
        objective: (0..n).map(|i| instance.revenues()[i] * v[i]).collect(),
        constraint_matrix,
        constraint_rhs,
        lower_bounds: vec![0.0; n],
        upper_bounds: vec![1.0; n],
    }
}

pub fn lambda_lp(instance: &ModelInstance, gamma: &[f64], lambda: f64) -> Result<LpSolution> {
    check_gamma(instance, gamma)?;
    if !(0.0..=1.0).contains(&lambda) {
        return input_err(format!("lambda {lambda} outside [0, 1]"));
    }
    let sol = solve_lp(
        &lambda_program(instance, gamma, lambda),
        DEFAULT_FEAS_TOL,
        DEFAULT_OPT_TOL,
    )?;
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        // x = 0 is always feasible and the box is bounded
        status => Err(Error::Internal(format!("lambda LP returned {status:?}"))),
    }
}

/// Bisection for `Φ(γ)`.
///
/// Starts from `(λ_L, λ_U) = (0, 1)` and loops while `λ_U − λ_L ≥ ε`. A midpoint
/// `λ` is accepted when the LP optimum satisfies `Σ (r_i − λ) v_i x_i ≥ λ`;
/// the returned `x` is the LP solution of the last accepted `λ` (zero if none
/// was accepted), so `R(x) ≥ Φ(γ) − ε`.
pub fn solve_phi(instance: &ModelInstance, gamma: &[f64], epsilon: f64) -> Result<FractionalSolution> {
    check_gamma(instance, gamma)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return input_err(format!("epsilon {epsilon} outside (0, 1)"));
    }
    let n = instance.n_products();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = FractionalSolution::zero(n);
    let mut solves = 0;
    while hi - lo >= epsilon {
        let lambda = 0.5 * (lo + hi);
        let sol = lambda_lp(instance, gamma, lambda)?;
        solves += 1;
        let value: f64 = (0..n)
            .map(|i| (instance.revenues()[i] - lambda) * instance.preferences()[i] * sol.x[i])
            .sum();
        if value >= lambda - ACCEPT_SLACK {
            lo = lambda;
            best.x = sol.x;
            best.active_constraints = sol.active_constraints;
        } else {
            hi = lambda;
        }
    }
    best.objective = instance.fractional_revenue_unchecked(&best.x);
    best.denominator = instance.denominator(&best.x);
    best.lambda_final = Some(lo);
    best.bracket = Some((lo, hi));
    best.lp_solves = solves;
    Ok(best)
}

/// Solves `Ψ(γ, s)`; `s` must be at least 1.
pub fn solve_psi(instance: &ModelInstance, gamma: &[f64], s: f64) -> Result<FractionalSolution> {
    check_gamma(instance, gamma)?;
    if !(s >= 1.0 && s.is_finite()) {
        return input_err(format!("denominator budget s = {s} must be finite and >= 1"));
    }
    let sol = solve_lp(&psi_program(instance, gamma, s), DEFAULT_FEAS_TOL, DEFAULT_OPT_TOL)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("Psi LP returned {:?}", sol.status)));
    }
    Ok(FractionalSolution {
        objective: sol.objective_value,
        denominator: instance.denominator(&sol.x),
        x: sol.x,
        lambda_final: None,
        bracket: None,
        active_constraints: sol.active_constraints,
        lp_solves: 1,
    })
}

/// `|Φ(γ) − Ψ(γ, s)/s|` with `s = 1 + Σ v_i x_i` at the `Φ` solution.
/// Zero up to the bisection error; used as a self-test.
pub fn phi_psi_discrepancy(instance: &ModelInstance, gamma: &[f64], epsilon: f64) -> Result<f64> {
    let phi = solve_phi(instance, gamma, epsilon)?;
    let s = phi.denominator;
    let psi = solve_psi(instance, gamma, s)?;
    Ok((phi.objective - psi.objective / s).abs())
}

/// Largest violation of the `Φ`/`Ψ` constraints (cardinality, linearized
/// resources, box) at `x`. `s` adds the denominator budget when given.
pub fn constraint_violation(instance: &ModelInstance, gamma: &[f64], x: &[f64], s: Option<f64>) -> f64 {
    let lp = match s {
        Some(s) => psi_program(instance, gamma, s),
        None => lambda_program(instance, gamma, 0.0),
    };
    lp.max_violation(x)
}
