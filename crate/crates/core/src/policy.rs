//! Admissible assortment policies.
//!
//! * [`PolicyKind::Resolving`]: epoch-based re-solving. The horizon is split
//!   into roughly `τ₀ = T / (1 + Σ v_i x^F_i)` epochs, each ending at the first
//!   no-purchase. At the start of every epoch the LP `Ψ(γ^τ, s^τ)` is solved
//!   with `γ^τ = C / t^τ` and `s^τ = t^τ / τ`, an assortment is sampled from its
//!   solution, and that assortment is offered until the epoch ends.
//! * [`PolicyKind::SamplingPerPeriod`]: a fresh sample from the initial fluid
//!   solution `x^F` every period.
//! * [`PolicyKind::SamplingPerEpoch`]: a fresh sample from `x^F` after every
//!   no-purchase.
//!
//! Every policy only offers products that are individually feasible for the
//! current inventory, so trajectories never oversell.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::fluid::{solve_phi, solve_psi, FractionalSolution};
use crate::model::{Assortment, InventoryState, ModelInstance};
use crate::sampler::{reduced_bvn_decompose, BvnDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "resolving")]
    Resolving,
    #[serde(rename = "per-period", alias = "sampling_per_period")]
    SamplingPerPeriod,
    #[serde(rename = "per-epoch", alias = "sampling_per_epoch")]
    SamplingPerEpoch,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [
        PolicyKind::Resolving,
        PolicyKind::SamplingPerPeriod,
        PolicyKind::SamplingPerEpoch,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PolicyKind::Resolving => "resolving",
            PolicyKind::SamplingPerPeriod => "per-period",
            PolicyKind::SamplingPerEpoch => "per-epoch",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resolving" => Ok(PolicyKind::Resolving),
            "per-period" | "sampling_per_period" => Ok(PolicyKind::SamplingPerPeriod),
            "per-epoch" | "sampling_per_epoch" => Ok(PolicyKind::SamplingPerEpoch),
            other => input_err(format!(
                "unknown policy '{other}' (expected resolving, per-period or per-epoch)"
            )),
        }
    }
}

/// Result of one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    NoPurchase,
    /// 0-based product index.
    Purchase(usize),
}

/// Quantities fixed at the start of a re-solving epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochPlan {
    /// Increments every time a new epoch starts.
    pub serial: usize,
    pub tau: usize,
    /// Periods remaining when the epoch starts.
    pub t_tau: usize,
    pub gamma_tau: Vec<f64>,
    /// `t^τ / τ` before clamping.
    pub s_raw: f64,
    /// `max(t^τ / τ, 1)`, the budget actually passed to `Ψ`.
    pub s_tau: f64,
    pub x_tau: Vec<f64>,
    pub support: Assortment,
}

#[derive(Debug, Clone)]
pub struct PolicyState {
    kind: PolicyKind,
    initial_fluid: FractionalSolution,
    initial_decomposition: BvnDecomposition,
    tau0: usize,
    epoch_index: usize,
    /// Sampled support; for the resolving policy already filtered for feasibility.
    current_support: Assortment,
    current_resolve: Option<FractionalSolution>,
    resolve_count: usize,
    epoch: Option<EpochPlan>,
    epoch_serial: usize,
}

impl PolicyState {
    /// Solves the fluid problem at `γ₀` with tolerance `1/T`, fixes `τ₀` and
    /// draws the first assortment.
    pub fn initialize<R: Rng + ?Sized>(
        instance: &ModelInstance,
        kind: PolicyKind,
        rng: &mut R,
    ) -> Result<Self> {
        let horizon = instance.horizon();
        let epsilon = (1.0 / horizon as f64).min(0.5);
        let initial_fluid = solve_phi(instance, &instance.gamma0(), epsilon)?;
        let tau0 = ((horizon as f64 / initial_fluid.denominator).round() as usize).max(1);
        let initial_decomposition =
            reduced_bvn_decompose(&fit_to_cap(&initial_fluid.x, instance.cardinality_cap()), instance.cardinality_cap())?;
        let mut state = PolicyState {
            kind,
            initial_fluid,
            initial_decomposition,
            tau0,
            epoch_index: tau0,
            current_support: Assortment::empty(),
            current_resolve: None,
            resolve_count: 0,
            epoch: None,
            epoch_serial: 0,
        };
        let inventory = InventoryState::initial(instance);
        match kind {
            PolicyKind::Resolving => state.start_epoch(instance, &inventory, rng)?,
            PolicyKind::SamplingPerEpoch => state.resample_initial(rng),
            PolicyKind::SamplingPerPeriod => {}
        }
        Ok(state)
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn initial_fluid(&self) -> &FractionalSolution {
        &self.initial_fluid
    }

    pub fn tau0(&self) -> usize {
        self.tau0
    }

    /// Current epoch counter `τ` (counts down, floored at 1).
    pub fn epoch_index(&self) -> usize {
        self.epoch_index
    }

    pub fn current_support(&self) -> &Assortment {
        &self.current_support
    }

    pub fn current_resolve(&self) -> Option<&FractionalSolution> {
        self.current_resolve.as_ref()
    }

    pub fn resolve_count(&self) -> usize {
        self.resolve_count
    }

    /// Plan of the running re-solving epoch.
    pub fn epoch(&self) -> Option<&EpochPlan> {
        self.epoch.as_ref()
    }

    pub fn epoch_serial(&self) -> usize {
        self.epoch_serial
    }

    /// Assortment to offer in the coming period.
    pub fn select_assortment<R: Rng + ?Sized>(
        &mut self,
        inventory: &InventoryState,
        instance: &ModelInstance,
        rng: &mut R,
    ) -> Assortment {
        match self.kind {
            PolicyKind::SamplingPerPeriod => {
                self.resample_initial(rng);
                self.current_support.feasible_part(instance, &inventory.remaining)
            }
            PolicyKind::SamplingPerEpoch | PolicyKind::Resolving => {
                self.current_support.feasible_part(instance, &inventory.remaining)
            }
        }
    }

    /// Feeds back the outcome of the period just played; `inventory` is the
    /// state after the sale (if any).
    pub fn notify_outcome<R: Rng + ?Sized>(
        &mut self,
        outcome: Outcome,
        inventory: &InventoryState,
        instance: &ModelInstance,
        rng: &mut R,
    ) -> Result<()> {
        let periods_left = inventory.periods_remaining(instance);
        match (self.kind, outcome) {
            (PolicyKind::Resolving, Outcome::NoPurchase) => {
                self.epoch_index = self.epoch_index.saturating_sub(1).max(1);
                if periods_left > 0 {
                    self.start_epoch(instance, inventory, rng)?;
                }
            }
            (PolicyKind::Resolving, Outcome::Purchase(_)) => {
                let broken = self
                    .current_support
                    .iter()
                    .any(|i| !instance.product_feasible(i, &inventory.remaining));
                if broken && periods_left > 0 {
                    // epoch ends early without a no-purchase; τ is kept
                    self.start_epoch(instance, inventory, rng)?;
                }
            }
            (PolicyKind::SamplingPerEpoch, Outcome::NoPurchase) => self.resample_initial(rng),
            _ => {}
        }
        Ok(())
    }

    fn resample_initial<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.current_support = Assortment::from_sorted(self.initial_decomposition.sample(rng).to_vec());
    }

    fn start_epoch<R: Rng + ?Sized>(
        &mut self,
        instance: &ModelInstance,
        inventory: &InventoryState,
        rng: &mut R,
    ) -> Result<()> {
        let t_tau = inventory.periods_remaining(instance);
        if t_tau == 0 {
            return Err(Error::Internal("cannot start an epoch with no periods left".into()));
        }
        let tau = self.epoch_index;
        let gamma_tau: Vec<f64> = inventory
            .remaining
            .iter()
            .map(|c| (c / t_tau as f64).max(0.0))
            .collect();
        let s_raw = t_tau as f64 / tau as f64;
        let s_tau = s_raw.max(1.0);
        let sol = solve_psi(instance, &gamma_tau, s_tau)?;
        let k = instance.cardinality_cap();
        let dec = reduced_bvn_decompose(&fit_to_cap(&sol.x, k), k)?;
        let support = Assortment::from_sorted(dec.sample(rng).to_vec())
            .feasible_part(instance, &inventory.remaining);

        self.epoch_serial += 1;
        self.resolve_count += 1;
        self.current_support = support.clone();
        self.epoch = Some(EpochPlan {
            serial: self.epoch_serial,
            tau,
            t_tau,
            gamma_tau,
            s_raw,
            s_tau,
            x_tau: sol.x.clone(),
            support,
        });
        self.current_resolve = Some(sol);
        Ok(())
    }
}

/// Scales `x` down if LP round-off pushed `‖x‖₁` above `K`.
fn fit_to_cap(x: &[f64], k: usize) -> Vec<f64> {
    let total: f64 = x.iter().sum();
    if total > k as f64 {
        let f = k as f64 / total;
        x.iter().map(|xi| xi * f).collect()
    } else {
        x.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(t: usize, c: f64) -> ModelInstance {
        ModelInstance::new(1, 1, 1, t, vec![1.0], vec![1.0], vec![0.1], vec![c]).unwrap()
    }

    #[test]
    fn parses_tags() {
        for k in PolicyKind::ALL {
            assert_eq!(k.tag().parse::<PolicyKind>().unwrap(), k);
        }
        assert_eq!("sampling_per_epoch".parse::<PolicyKind>().unwrap(), PolicyKind::SamplingPerEpoch);
        assert!("greedy".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn tau0_for_single_product() {
        let inst = single(100, 1e4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let st = PolicyState::initialize(&inst, PolicyKind::Resolving, &mut rng).unwrap();
        assert!((st.initial_fluid().x[0] - 1.0).abs() < 1e-6);
        assert_eq!(st.tau0(), 50);
        assert_eq!(st.epoch().unwrap().t_tau, 100);
        assert!((st.epoch().unwrap().s_tau - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_inventory_gives_empty_support() {
        // A = 0.1 but C₀ = 1e-6: the fluid solution is (numerically) zero
        let inst = single(100, 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let st = PolicyState::initialize(&inst, PolicyKind::Resolving, &mut rng).unwrap();
        assert!(st.initial_fluid().x[0] < 1e-3);
        assert_eq!(st.tau0(), 100);
        assert!(st.current_support().is_empty());
    }

    #[test]
    fn resolving_keeps_support_within_epoch() {
        let inst = single(100, 1e4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut st = PolicyState::initialize(&inst, PolicyKind::Resolving, &mut rng).unwrap();
        let mut inv = InventoryState::initial(&inst);
        let first = st.select_assortment(&inv, &inst, &mut rng);
        inv.remaining[0] -= 0.1;
        inv.periods_elapsed = 1;
        let serial = st.epoch_serial();
        st.notify_outcome(Outcome::Purchase(0), &inv, &inst, &mut rng).unwrap();
        assert_eq!(st.epoch_serial(), serial);
        assert_eq!(st.select_assortment(&inv, &inst, &mut rng), first);
    }

    #[test]
    fn no_purchase_resolves_with_expected_budget() {
        let inst = ModelInstance::new(
            2, 1, 1, 100,
            vec![0.8, 0.4],
            vec![0.5, 1.0],
            vec![0.2, 0.1],
            vec![10.0],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut st = PolicyState::initialize(&inst, PolicyKind::Resolving, &mut rng).unwrap();
        st.epoch_index = 6;
        let inv = InventoryState { remaining: vec![4.0], periods_elapsed: 60 };
        st.notify_outcome(Outcome::NoPurchase, &inv, &inst, &mut rng).unwrap();
        let plan = st.epoch().unwrap();
        assert_eq!(plan.tau, 5);
        assert_eq!(plan.t_tau, 40);
        assert!((plan.s_tau - 8.0).abs() < 1e-12);
        assert!((plan.gamma_tau[0] - 0.1).abs() < 1e-12);
        let direct = solve_psi(&inst, &[0.1], 8.0).unwrap();
        assert_eq!(plan.x_tau, direct.x);
    }

    #[test]
    fn clamped_budget_gives_empty_support() {
        let inst = single(100, 1e4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut st = PolicyState::initialize(&inst, PolicyKind::Resolving, &mut rng).unwrap();
        // τ = 10 with 7 periods left → s = 0.7 → clamped to 1
        st.epoch_index = 11;
        let inv = InventoryState { remaining: vec![1e4], periods_elapsed: 93 };
        st.notify_outcome(Outcome::NoPurchase, &inv, &inst, &mut rng).unwrap();
        let plan = st.epoch().unwrap();
        assert!((plan.s_raw - 0.7).abs() < 1e-12);
        assert_eq!(plan.s_tau, 1.0);
        assert!(plan.x_tau[0].abs() < 1e-12);
        assert!(plan.support.is_empty());
    }

    #[test]
    fn infeasible_products_are_never_offered() {
        let inst = single(100, 1e4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inv = InventoryState { remaining: vec![0.05], periods_elapsed: 10 };
        for kind in PolicyKind::ALL {
            let mut st = PolicyState::initialize(&inst, kind, &mut rng).unwrap();
            for _ in 0..20 {
                assert!(st.select_assortment(&inv, &inst, &mut rng).is_empty());
            }
        }
    }

    #[test]
    fn per_period_samples_independently() {
        let inst = ModelInstance::new(2, 1, 1, 1000, vec![1.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.0], vec![1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut st = PolicyState::initialize(&inst, PolicyKind::SamplingPerPeriod, &mut rng).unwrap();
        // symmetric instance: the fluid optimum puts mass only where R(x) is maximal
        let x = st.initial_fluid().x.clone();
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{x:?}");
        let inv = InventoryState::initial(&inst);
        let mut counts = [0usize; 2];
        for _ in 0..4000 {
            let s = st.select_assortment(&inv, &inst, &mut rng);
            assert!(s.len() <= 1);
            for i in s.iter() {
                counts[i] += 1;
            }
        }
        for (c, xi) in counts.iter().zip(&x) {
            assert!((*c as f64 / 4000.0 - xi).abs() < 0.04);
        }
    }

    #[test]
    fn per_epoch_resamples_only_on_no_purchase() {
        let inst = ModelInstance::new(3, 1, 1, 1000, vec![1.0, 0.9, 0.8], vec![1.0, 1.0, 1.0], vec![0.1; 3], vec![20.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut st = PolicyState::initialize(&inst, PolicyKind::SamplingPerEpoch, &mut rng).unwrap();
        let inv = InventoryState::initial(&inst);
        let before = st.select_assortment(&inv, &inst, &mut rng);
        for _ in 0..10 {
            st.notify_outcome(Outcome::Purchase(0), &inv, &inst, &mut rng).unwrap();
            assert_eq!(st.select_assortment(&inv, &inst, &mut rng), before);
        }
    }
}
