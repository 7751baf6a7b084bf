//! Trajectory simulation, per-epoch traces and exact DP values for toy
//! instances.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{input_err, Error, Result};
use crate::fluid::{solve_phi, BENCHMARK_EPSILON};
use crate::model::{Assortment, InventoryState, ModelInstance};
use crate::policy::{Outcome, PolicyKind, PolicyState};

/// Tolerance of the pathwise epoch recursions.
pub const RECURSION_TOL: f64 = 1e-8;

/// Plays one period: draws the customer's choice and debits inventory.
///
/// Every offered product must be feasible for the current inventory.
pub fn simulate_period<R: Rng + ?Sized>(
    instance: &ModelInstance,
    assortment: &Assortment,
    inventory: &mut InventoryState,
    rng: &mut R,
) -> Result<Outcome> {
    if inventory.periods_elapsed >= instance.horizon() {
        return Err(Error::Simulation("horizon already exhausted".into()));
    }
    if assortment.len() > instance.cardinality_cap() {
        return Err(Error::Simulation(format!(
            "assortment of size {} exceeds the cap {}",
            assortment.len(),
            instance.cardinality_cap()
        )));
    }
    if let Some(i) = assortment
        .iter()
        .find(|&i| !instance.product_feasible(i, &inventory.remaining))
    {
        return Err(Error::Simulation(format!("product {i} offered without enough inventory")));
    }
    let v = instance.preferences();
    let denom = 1.0 + assortment.iter().map(|i| v[i]).sum::<f64>();
    let mut u = rng.gen::<f64>() * denom - 1.0;
    let mut outcome = Outcome::NoPurchase;
    if u >= 0.0 {
        // fall back to the last member if round-off leaves u slightly positive
        outcome = Outcome::Purchase(*assortment.members().last().expect("non-empty"));
        for i in assortment.iter() {
            u -= v[i];
            if u < 0.0 {
                outcome = Outcome::Purchase(i);
                break;
            }
        }
    }
    if let Outcome::Purchase(i) = outcome {
        for (c, a) in inventory.remaining.iter_mut().zip(instance.consumption_row(i)) {
            *c -= a;
        }
    }
    inventory.periods_elapsed += 1;
    Ok(outcome)
}

/// One re-solving epoch as it played out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochTrace {
    pub tau: usize,
    pub t_tau: usize,
    pub gamma_tau: Vec<f64>,
    /// `t^τ / τ` before clamping at 1.
    pub s_raw: f64,
    pub s_tau: f64,
    pub x_tau: Vec<f64>,
    pub support: Vec<usize>,
    /// Purchases of each product during the epoch.
    pub purchases: Vec<u32>,
    /// Periods spent in the epoch, `m^τ`.
    pub length: usize,
    pub revenue: f64,
    /// `n^τ(i) − v_i x^τ_i`.
    pub delta_i: Vec<f64>,
    /// `m^τ − s^τ`.
    pub delta: f64,
    /// Inventory drift term; only defined for complete epochs followed by at
    /// least one period.
    pub eps_j: Option<Vec<f64>>,
    /// The epoch ended with a no-purchase.
    pub complete: bool,
}

impl EpochTrace {
    /// `β^τ`: number of purchases in the epoch.
    pub fn purchase_total(&self) -> u32 {
        self.purchases.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Termination {
    HorizonReached,
    /// No product fit the remaining inventory before the horizon ended; the
    /// leftover periods earn nothing.
    InventoryDepleted,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryResult {
    pub policy: PolicyKind,
    pub seed: u64,
    pub total_revenue: f64,
    /// Always `T`: depleted trajectories idle until the horizon.
    pub periods_used: usize,
    pub termination: Termination,
    /// Period at which no product was feasible any more.
    pub depleted_at: Option<usize>,
    /// Number of no-purchase periods.
    pub epochs_completed: usize,
    pub resolve_count: usize,
    pub sales: Vec<u32>,
    pub final_inventory: Vec<f64>,
    /// Empty for the sampling baselines.
    pub epochs: Vec<EpochTrace>,
    /// `T · Φ(γ₀)`.
    pub fluid_benchmark: f64,
    pub regret: f64,
}

/// `T · Φ(γ₀)` computed to [`BENCHMARK_EPSILON`].
pub fn fluid_benchmark(instance: &ModelInstance) -> Result<f64> {
    let sol = solve_phi(instance, &instance.gamma0(), BENCHMARK_EPSILON)?;
    Ok(instance.horizon() as f64 * sol.objective)
}

/// Runs one trajectory seeded with `seed`.
pub fn run_trajectory(instance: &ModelInstance, kind: PolicyKind, seed: u64) -> Result<TrajectoryResult> {
    let benchmark = fluid_benchmark(instance)?;
    run_trajectory_with_benchmark(instance, kind, seed, benchmark)
}

/// Same as [`run_trajectory`] with a precomputed `T · Φ(γ₀)`.
pub fn run_trajectory_with_benchmark(
    instance: &ModelInstance,
    kind: PolicyKind,
    seed: u64,
    fluid_benchmark: f64,
) -> Result<TrajectoryResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inventory = InventoryState::initial(instance);
    let mut policy = PolicyState::initialize(instance, kind, &mut rng)?;
    let n = instance.n_products();
    let r = instance.revenues();

    let mut revenue = 0.0;
    let mut sales = vec![0u32; n];
    let mut no_purchases = 0;
    let mut depleted_at = None;
    let mut epochs = Vec::new();
    let mut open = policy.epoch().map(|p| EpochBuilder::new(p, n));

    while inventory.periods_elapsed < instance.horizon() {
        if !inventory.any_feasible(instance) {
            depleted_at = Some(inventory.periods_elapsed);
            break;
        }
        let offer = policy.select_assortment(&inventory, instance, &mut rng);
        let outcome = simulate_period(instance, &offer, &mut inventory, &mut rng)?;
        if let Some(b) = open.as_mut() {
            b.length += 1;
        }
        match outcome {
            Outcome::Purchase(i) => {
                revenue += r[i];
                sales[i] += 1;
                if let Some(b) = open.as_mut() {
                    b.purchases[i] += 1;
                    b.revenue += r[i];
                }
            }
            Outcome::NoPurchase => {
                no_purchases += 1;
                if let Some(b) = open.as_mut() {
                    b.complete = true;
                }
            }
        }
        let serial = policy.epoch_serial();
        policy.notify_outcome(outcome, &inventory, instance, &mut rng)?;
        if policy.epoch_serial() != serial {
            if let Some(b) = open.take() {
                epochs.push(b.finish(instance));
            }
            open = policy.epoch().map(|p| EpochBuilder::new(p, n));
        } else if let Some(b) = open.as_ref() {
            if b.complete {
                // no-purchase in the final period
                epochs.push(open.take().expect("open epoch").finish(instance));
            }
        }
    }
    if let Some(b) = open.take() {
        epochs.push(b.finish(instance));
    }

    Ok(TrajectoryResult {
        policy: kind,
        seed,
        total_revenue: revenue,
        periods_used: instance.horizon(),
        termination: if depleted_at.is_some() {
            Termination::InventoryDepleted
        } else {
            Termination::HorizonReached
        },
        depleted_at,
        epochs_completed: no_purchases,
        resolve_count: policy.resolve_count(),
        sales,
        final_inventory: inventory.remaining,
        epochs,
        fluid_benchmark,
        regret: fluid_benchmark - revenue,
    })
}

struct EpochBuilder {
    tau: usize,
    t_tau: usize,
    gamma_tau: Vec<f64>,
    s_raw: f64,
    s_tau: f64,
    x_tau: Vec<f64>,
    support: Vec<usize>,
    purchases: Vec<u32>,
    length: usize,
    revenue: f64,
    complete: bool,
}

impl EpochBuilder {
    fn new(plan: &crate::policy::EpochPlan, n: usize) -> Self {
        EpochBuilder {
            tau: plan.tau,
            t_tau: plan.t_tau,
            gamma_tau: plan.gamma_tau.clone(),
            s_raw: plan.s_raw,
            s_tau: plan.s_tau,
            x_tau: plan.x_tau.clone(),
            support: plan.support.members().to_vec(),
            purchases: vec![0; n],
            length: 0,
            revenue: 0.0,
            complete: false,
        }
    }

    fn finish(self, instance: &ModelInstance) -> EpochTrace {
        let v = instance.preferences();
        let delta_i: Vec<f64> = self
            .purchases
            .iter()
            .zip(v.iter().zip(&self.x_tau))
            .map(|(&n, (vi, xi))| n as f64 - vi * xi)
            .collect();
        let delta = self.length as f64 - self.s_tau;
        let t_next = self.t_tau - self.length;
        let eps_j = (self.complete && self.tau > 1 && t_next > 0).then(|| {
            let report = instance.validate_assumptions();
            let cap = report.a0_bound * report.b0_bound * instance.cardinality_cap() as f64;
            (0..instance.n_resources())
                .map(|j| {
                    let used: f64 = delta_i
                        .iter()
                        .enumerate()
                        .map(|(i, d)| instance.consumption(i, j) * d)
                        .sum();
                    (used - self.gamma_tau[j].min(cap) * delta) / t_next as f64
                })
                .collect()
        });
        EpochTrace {
            tau: self.tau,
            t_tau: self.t_tau,
            gamma_tau: self.gamma_tau,
            s_raw: self.s_raw,
            s_tau: self.s_tau,
            x_tau: self.x_tau,
            support: self.support,
            purchases: self.purchases,
            length: self.length,
            revenue: self.revenue,
            delta_i,
            delta,
            eps_j,
            complete: self.complete,
        }
    }
}

/// Outcome of [`check_epoch_recursion`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionCheck {
    pub pairs_checked: usize,
    /// Index of the earlier epoch of the first failing pair.
    pub first_violation: Option<usize>,
}

impl RecursionCheck {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks the pathwise recursions between consecutive epochs:
///
/// * `s^{τ−1} ≥ s^τ − Δ^τ / (τ−1)`
/// * `γ^{τ−1}_j ≥ γ^τ_j − ε^τ(j)`
///
/// A pair is checked when the earlier epoch is complete, has `τ > 1`, an
/// unclamped budget, and is followed by epoch `τ−1`. Budgets are compared
/// before clamping.
pub fn check_epoch_recursion(epochs: &[EpochTrace]) -> RecursionCheck {
    let mut pairs_checked = 0;
    for (idx, pair) in epochs.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if !(a.complete && a.tau > 1 && b.tau == a.tau - 1 && a.s_raw >= 1.0) {
            continue;
        }
        let Some(eps) = a.eps_j.as_ref() else { continue };
        pairs_checked += 1;
        let s_ok = b.s_raw >= a.s_tau - a.delta / (a.tau - 1) as f64 - RECURSION_TOL;
        let g_ok = b
            .gamma_tau
            .iter()
            .zip(&a.gamma_tau)
            .zip(eps)
            .all(|((gb, ga), e)| *gb >= ga - e - RECURSION_TOL);
        if !(s_ok && g_ok) {
            return RecursionCheck { pairs_checked, first_violation: Some(idx) };
        }
    }
    RecursionCheck { pairs_checked, first_violation: None }
}

/// Sample mean and standard error of a vector-valued quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanStats {
    pub count: usize,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

impl MeanStats {
    pub fn from_samples<'a>(dim: usize, samples: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut count = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for s in samples {
            count += 1;
            for ((a, b), x) in sum.iter_mut().zip(sq.iter_mut()).zip(s) {
                *a += x;
                *b += x * x;
            }
        }
        let nf = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| if count > 0 { s / nf } else { 0.0 }).collect();
        let std_error = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                if count < 2 {
                    0.0
                } else {
                    let var = ((q - nf * m * m) / (nf - 1.0)).max(0.0);
                    (var / nf).sqrt()
                }
            })
            .collect();
        MeanStats { count, mean, std_error }
    }

    /// Every coordinate of the mean lies within `k` standard errors of zero.
    pub fn centered_within(&self, k: f64) -> bool {
        self.mean.iter().zip(&self.std_error).all(|(m, se)| m.abs() <= k * se)
    }
}

/// `Δ^τ(i)` over complete epochs, grouped by `τ`.
pub fn delta_centering(results: &[TrajectoryResult]) -> BTreeMap<usize, MeanStats> {
    let mut groups: BTreeMap<usize, Vec<&[f64]>> = BTreeMap::new();
    let mut dim = 0;
    for e in results.iter().flat_map(|r| &r.epochs).filter(|e| e.complete) {
        dim = e.delta_i.len();
        groups.entry(e.tau).or_default().push(&e.delta_i);
    }
    groups
        .into_iter()
        .map(|(tau, s)| (tau, MeanStats::from_samples(dim, s)))
        .collect()
}

/// `Δ(i)` of the first epoch of each trajectory, when that epoch is complete.
pub fn first_epoch_delta(results: &[TrajectoryResult]) -> MeanStats {
    let dim = results
        .iter()
        .find_map(|r| r.epochs.first().map(|e| e.delta_i.len()))
        .unwrap_or(0);
    MeanStats::from_samples(
        dim,
        results
            .iter()
            .filter_map(|r| r.epochs.first())
            .filter(|e| e.complete)
            .map(|e| e.delta_i.as_slice()),
    )
}

/// Per-product purchase counts within epochs whose support contains the
/// product. In a complete epoch these are geometric with mean `v_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PurchaseCountStats {
    pub product: usize,
    pub count: usize,
    pub mean: f64,
    pub std_error: f64,
    pub expected: f64,
}

pub fn purchase_count_stats(
    instance: &ModelInstance,
    epochs: impl IntoIterator<Item = impl std::borrow::Borrow<EpochTrace>>,
) -> Vec<PurchaseCountStats> {
    let n = instance.n_products();
    let mut per: Vec<Vec<f64>> = vec![Vec::new(); n];
    for e in epochs {
        let e = e.borrow();
        for &i in &e.support {
            per[i].push(e.purchases[i] as f64);
        }
    }
    per.into_iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(i, s)| {
            let st = MeanStats::from_samples(1, s.iter().map(std::slice::from_ref));
            PurchaseCountStats {
                product: i,
                count: st.count,
                mean: st.mean[0],
                std_error: st.std_error[0],
                expected: instance.preferences()[i],
            }
        })
        .collect()
}

/// Cumulative drifts `Σ_{τ'≥τ} Δ^{τ'}/(τ'−1)` and `Σ_{τ'≥τ} ε^{τ'}` along the
/// leading run of complete, consecutive epochs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulativeDrift {
    pub tau: usize,
    pub delta: f64,
    pub eps: Vec<f64>,
}

pub fn cumulative_drifts(epochs: &[EpochTrace]) -> Vec<CumulativeDrift> {
    let mut out = Vec::new();
    let mut delta = 0.0;
    let mut eps: Vec<f64> = Vec::new();
    for (idx, e) in epochs.iter().enumerate() {
        let next_ok = epochs.get(idx + 1).is_some_and(|b| b.tau + 1 == e.tau);
        let Some(ej) = e.eps_j.as_ref().filter(|_| e.complete && next_ok) else { break };
        delta += e.delta / (e.tau - 1) as f64;
        if eps.is_empty() {
            eps = vec![0.0; ej.len()];
        }
        for (a, b) in eps.iter_mut().zip(ej) {
            *a += b;
        }
        out.push(CumulativeDrift { tau: e.tau, delta, eps: eps.clone() });
    }
    out
}

/// Largest gap between inventory consumed by recorded sales and the drop in
/// inventory.
pub fn conservation_error(instance: &ModelInstance, result: &TrajectoryResult) -> f64 {
    (0..instance.n_resources())
        .map(|j| {
            let used: f64 = result
                .sales
                .iter()
                .enumerate()
                .map(|(i, &n)| n as f64 * instance.consumption(i, j))
                .sum();
            (instance.initial_inventory()[j] - result.final_inventory[j] - used).abs()
        })
        .fold(0.0, f64::max)
}

/// Size limits of [`exact_dp_value`].
pub const DP_MAX_PRODUCTS: usize = 3;
pub const DP_MAX_RESOURCES: usize = 2;
pub const DP_MAX_HORIZON: usize = 10;
pub const DP_MAX_UNITS: usize = 20;

/// Optimal expected revenue of the dynamic program, by backward induction.
///
/// Consumption and inventory must lie on a common grid `1/q` with at most
/// [`DP_MAX_UNITS`] units of each resource.
pub fn exact_dp_value(instance: &ModelInstance) -> Result<f64> {
    let (n, m, k, horizon) = (
        instance.n_products(),
        instance.n_resources(),
        instance.cardinality_cap(),
        instance.horizon(),
    );
    if n > DP_MAX_PRODUCTS || m > DP_MAX_RESOURCES || horizon > DP_MAX_HORIZON {
        return input_err(format!(
            "DP limited to N ≤ {DP_MAX_PRODUCTS}, M ≤ {DP_MAX_RESOURCES}, T ≤ {DP_MAX_HORIZON}"
        ));
    }
    let on_grid = |val: f64, q: f64| (val * q - (val * q).round()).abs() < 1e-9;
    let q = (1..=64u32)
        .map(f64::from)
        .find(|&q| {
            instance.initial_inventory().iter().all(|&c| on_grid(c, q))
                && (0..n).all(|i| instance.consumption_row(i).iter().all(|&a| on_grid(a, q)))
        })
        .ok_or_else(|| Error::Input("inventory and consumption are not on a common grid".into()))?;
    let cap: Vec<usize> = instance
        .initial_inventory()
        .iter()
        .map(|c| (c * q).round() as usize)
        .collect();
    if cap.iter().any(|&u| u > DP_MAX_UNITS) {
        return input_err(format!("more than {DP_MAX_UNITS} inventory units on the grid 1/{q}"));
    }
    let units: Vec<Vec<usize>> = (0..n)
        .map(|i| instance.consumption_row(i).iter().map(|a| (a * q).round() as usize).collect())
        .collect();

    let mut strides = vec![1usize; m];
    for j in 1..m {
        strides[j] = strides[j - 1] * (cap[j - 1] + 1);
    }
    let n_states = strides[m - 1] * (cap[m - 1] + 1);
    let decode = |mut s: usize| -> Vec<usize> {
        let mut c = vec![0; m];
        for j in (0..m).rev() {
            c[j] = s / strides[j];
            s %= strides[j];
        }
        c
    };

    let (r, v) = (instance.revenues(), instance.preferences());
    let mut next = vec![0.0; n_states];
    for _ in 0..horizon {
        let mut cur = vec![0.0; n_states];
        for (state, slot) in cur.iter_mut().enumerate() {
            let c = decode(state);
            let feasible: Vec<usize> = (0..n)
                .filter(|&i| units[i].iter().zip(&c).all(|(a, ci)| a <= ci))
                .collect();
            let mut best = next[state];
            for mask in 1u32..(1 << feasible.len()) {
                if mask.count_ones() as usize > k {
                    continue;
                }
                let mut num = next[state];
                let mut den = 1.0;
                for (b, &i) in feasible.iter().enumerate() {
                    if mask & (1 << b) != 0 {
                        let after: usize = (0..m).map(|j| (c[j] - units[i][j]) * strides[j]).sum();
                        num += v[i] * (r[i] + next[after]);
                        den += v[i];
                    }
                }
                best = best.max(num / den);
            }
            *slot = best;
        }
        next = cur;
    }
    let start: usize = (0..m).map(|j| cap[j] * strides[j]).sum();
    Ok(next[start])
}
