//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use assort_knap::linprog::LinearProgram;
use assort_knap::ModelInstance;
use rand::Rng;

/// Optimum of a bounded LP by enumerating every vertex: all choices of `n`
/// tight hyperplanes among the rows and finite bounds. `None` when no vertex
/// is feasible.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.objective.len();
    let mut planes: Vec<(Vec<f64>, f64)> = lp
        .constraint_matrix
        .iter()
        .cloned()
        .zip(lp.constraint_rhs.iter().copied())
        .collect();
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        planes.push((e.clone(), lp.lower_bounds[k]));
        if lp.upper_bounds[k].is_finite() {
            planes.push((e, lp.upper_bounds[k]));
        }
    }
    let mut best: Option<f64> = None;
    let mut pick: Vec<usize> = (0..n).collect();
    if planes.len() < n {
        return None;
    }
    loop {
        let rows: Vec<&(Vec<f64>, f64)> = pick.iter().map(|&i| &planes[i]).collect();
        if let Some(x) = solve_square(&rows) {
            if feasible(lp, &x, 1e-9) {
                let v: f64 = lp.objective.iter().zip(&x).map(|(c, xi)| c * xi).sum();
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        if !next_combination(&mut pick, planes.len()) {
            break;
        }
    }
    best
}

fn next_combination(pick: &mut [usize], total: usize) -> bool {
    let k = pick.len();
    for i in (0..k).rev() {
        if pick[i] < total - k + i {
            pick[i] += 1;
            for j in i + 1..k {
                pick[j] = pick[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_square(rows: &[&(Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let n = rows.len();
    let mut a: Vec<Vec<f64>> = rows
        .iter()
        .map(|(r, b)| {
            let mut v = r.clone();
            v.push(*b);
            v
        })
        .collect();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, p);
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            if r != col && f != 0.0 {
                row.iter_mut().zip(&pivot_row).skip(col).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

pub fn feasible(lp: &LinearProgram, x: &[f64], tol: f64) -> bool {
    let bounds = x
        .iter()
        .zip(lp.lower_bounds.iter().zip(&lp.upper_bounds))
        .all(|(xi, (l, u))| *xi >= l - tol && *xi <= u + tol);
    bounds
        && lp
            .constraint_matrix
            .iter()
            .zip(&lp.constraint_rhs)
            .all(|(row, b)| row.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>() <= b + tol)
}

/// Random LP with finite box bounds.
pub fn random_lp<R: Rng>(rng: &mut R, n: usize, m: usize) -> LinearProgram {
    let objective = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let constraint_matrix = (0..m)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let constraint_rhs = (0..m).map(|_| rng.gen_range(-0.5..1.0)).collect();
    let lower_bounds: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..0.0)).collect();
    let upper_bounds = lower_bounds.iter().map(|l| l + rng.gen_range(0.1..2.0)).collect();
    LinearProgram { objective, constraint_matrix, constraint_rhs, lower_bounds, upper_bounds }
}

/// Fluid feasibility of `x`: cardinality and linearized consumption.
pub fn fluid_feasible(inst: &ModelInstance, gamma: &[f64], x: &[f64]) -> bool {
    let v = inst.preferences();
    if x.iter().sum::<f64>() > inst.cardinality_cap() as f64 + 1e-12 {
        return false;
    }
    let den = 1.0 + x.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    (0..inst.n_resources()).all(|j| {
        let used: f64 = (0..x.len()).map(|i| inst.consumption(i, j) * v[i] * x[i]).sum();
        used <= gamma[j] * den + 1e-12
    })
}

/// Best `R(x)` over the grid `{0, h, 2h, …, 1}²` for two-product instances.
pub fn grid_phi(inst: &ModelInstance, gamma: &[f64], h: f64) -> f64 {
    assert_eq!(inst.n_products(), 2);
    let steps = (1.0 / h).round() as usize;
    let mut best = 0.0f64;
    for a in 0..=steps {
        for b in 0..=steps {
            let x = [a as f64 * h, b as f64 * h];
            if fluid_feasible(inst, gamma, &x) {
                best = best.max(inst.fractional_revenue(&x).unwrap());
            }
        }
    }
    best
}

/// Random `x ∈ [0,1]^N` with `‖x‖₁ ≤ K`, including exact 0s and 1s and,
/// now and then, `‖x‖₁ = K`.
pub fn random_fractional<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<f64> {
    let ones = rng.gen_range(0..=k.min(n) / 2);
    let mut x: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen::<f64>() })
        .collect();
    for _ in 0..ones {
        let i = rng.gen_range(0..n);
        x[i] = 1.0;
    }
    let fixed = x.iter().filter(|&&v| v == 1.0).count();
    let frac: f64 = x.iter().filter(|&&v| v < 1.0).sum();
    let room = (k - fixed) as f64 * if rng.gen_bool(0.3) { 1.0 } else { rng.gen_range(0.3..1.0) };
    if frac > room {
        let f = room / frac;
        x.iter_mut().filter(|v| **v < 1.0).for_each(|v| *v = (*v * f).min(1.0));
    }
    x
}

/// Small instance whose consumption and inventory sit on the grid `1/4`, so
/// simulated inventories are exact and the DP applies.
pub fn toy_instance<R: Rng>(rng: &mut R) -> ModelInstance {
    let n = rng.gen_range(1..=3);
    let m = rng.gen_range(1..=2);
    let k = rng.gen_range(1..=n);
    let t = rng.gen_range(2..=10);
    let revenues = (0..n).map(|_| rng.gen::<f64>()).collect();
    let preferences = (0..n).map(|_| rng.gen_range(0.05..1.5)).collect();
    let consumption = (0..n * m).map(|_| rng.gen_range(0..=4) as f64 * 0.25).collect();
    let inventory = (0..m).map(|_| rng.gen_range(1..=12) as f64 * 0.25).collect();
    ModelInstance::new(n, m, k, t, revenues, preferences, consumption, inventory).unwrap()
}

pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
