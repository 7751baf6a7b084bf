//! Problem instances and MNL choice-model arithmetic.
//!
//! Products are indexed `0..N` internally. External formats (instance files,
//! CLI output, trace CSVs) use 1-based product numbers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};

/// Values within this distance of a `[0, 1]` bound are clipped onto it.
pub const BOUND_TOL: f64 = 1e-12;

/// All parameters of one dynamic assortment problem.
///
/// Immutable after construction; share it freely across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct ModelInstance {
    n_products: usize,
    n_resources: usize,
    cardinality_cap: usize,
    horizon: usize,
    revenues: Vec<f64>,
    preferences: Vec<f64>,
    /// Row-major `N × M`.
    consumption: Vec<f64>,
    initial_inventory: Vec<f64>,
}

/// On-disk layout of an instance. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    n_products: usize,
    n_resources: usize,
    cardinality_cap: usize,
    horizon: usize,
    revenues: Vec<f64>,
    preferences: Vec<f64>,
    consumption: Vec<f64>,
    initial_inventory: Vec<f64>,
}

impl TryFrom<InstanceFile> for ModelInstance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        ModelInstance::new(
            f.n_products,
            f.n_resources,
            f.cardinality_cap,
            f.horizon,
            f.revenues,
            f.preferences,
            f.consumption,
            f.initial_inventory,
        )
    }
}

impl From<ModelInstance> for InstanceFile {
    fn from(m: ModelInstance) -> Self {
        InstanceFile {
            n_products: m.n_products,
            n_resources: m.n_resources,
            cardinality_cap: m.cardinality_cap,
            horizon: m.horizon,
            revenues: m.revenues,
            preferences: m.preferences,
            consumption: m.consumption,
            initial_inventory: m.initial_inventory,
        }
    }
}

impl ModelInstance {
    /// Validates and builds an instance. `consumption` is row-major `N × M`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_products: usize,
        n_resources: usize,
        cardinality_cap: usize,
        horizon: usize,
        revenues: Vec<f64>,
        preferences: Vec<f64>,
        consumption: Vec<f64>,
        initial_inventory: Vec<f64>,
    ) -> Result<Self> {
        if n_products == 0 || n_resources == 0 || cardinality_cap == 0 || horizon == 0 {
            return input_err("n_products, n_resources, cardinality_cap and horizon must be positive");
        }
        if cardinality_cap > n_products {
            return input_err(format!(
                "cardinality_cap {cardinality_cap} exceeds n_products {n_products}"
            ));
        }
        if revenues.len() != n_products || preferences.len() != n_products {
            return input_err("revenues and preferences must have n_products entries");
        }
        if consumption.len() != n_products * n_resources {
            return input_err(format!(
                "consumption must have n_products * n_resources = {} entries, got {}",
                n_products * n_resources,
                consumption.len()
            ));
        }
        if initial_inventory.len() != n_resources {
            return input_err("initial_inventory must have n_resources entries");
        }
        if let Some((i, r)) = revenues
            .iter()
            .enumerate()
            .find(|(_, r)| !(0.0..=1.0).contains(*r))
        {
            return input_err(format!("revenue of product {} is {r}, outside [0, 1]", i + 1));
        }
        if let Some((i, v)) = preferences
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return input_err(format!("preference of product {} is {v}, must be finite and >= 0", i + 1));
        }
        if consumption.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return input_err("consumption entries must be finite and >= 0");
        }
        if let Some((j, c)) = initial_inventory
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c > 0.0))
        {
            return input_err(format!("initial inventory of resource {} is {c}, must be > 0", j + 1));
        }
        Ok(ModelInstance {
            n_products,
            n_resources,
            cardinality_cap,
            horizon,
            revenues,
            preferences,
            consumption,
            initial_inventory,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()? + "\n")?;
        Ok(())
    }

    pub fn n_products(&self) -> usize {
        self.n_products
    }

    pub fn n_resources(&self) -> usize {
        self.n_resources
    }

    pub fn cardinality_cap(&self) -> usize {
        self.cardinality_cap
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn revenues(&self) -> &[f64] {
        &self.revenues
    }

    pub fn preferences(&self) -> &[f64] {
        &self.preferences
    }

    pub fn initial_inventory(&self) -> &[f64] {
        &self.initial_inventory
    }

    /// `A_ij`: units of resource `j` consumed by one sale of product `i`.
    #[inline]
    pub fn consumption(&self, product: usize, resource: usize) -> f64 {
        self.consumption[product * self.n_resources + resource]
    }

    /// Consumption row of one product (length `M`).
    #[inline]
    pub fn consumption_row(&self, product: usize) -> &[f64] {
        let m = self.n_resources;
        &self.consumption[product * m..(product + 1) * m]
    }

    /// Normalized initial inventory `γ₀ = C₀ / T`.
    pub fn gamma0(&self) -> Vec<f64> {
        let t = self.horizon as f64;
        self.initial_inventory.iter().map(|c| c / t).collect()
    }

    /// Same instance with a different horizon and initial inventory.
    pub fn with_inventory(&self, horizon: usize, initial_inventory: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_products,
            self.n_resources,
            self.cardinality_cap,
            horizon,
            self.revenues.clone(),
            self.preferences.clone(),
            self.consumption.clone(),
            initial_inventory,
        )
    }

    /// MNL purchase probabilities for an offered assortment.
    pub fn choice_probabilities(&self, assortment: &Assortment) -> ChoiceProbabilities {
        let denom = 1.0 + assortment.iter().map(|i| self.preferences[i]).sum::<f64>();
        ChoiceProbabilities {
            no_purchase: 1.0 / denom,
            products: assortment
                .iter()
                .map(|i| (i, self.preferences[i] / denom))
                .collect(),
        }
    }

    /// Expected single-period revenue `R(S)`.
    pub fn assortment_revenue(&self, assortment: &Assortment) -> f64 {
        let (num, den) = assortment.iter().fold((0.0, 1.0), |(n, d), i| {
            let v = self.preferences[i];
            (n + self.revenues[i] * v, d + v)
        });
        num / den
    }

    /// `R(x) = Σ r_i v_i x_i / (1 + Σ v_i x_i)` on the relaxed domain `[0,1]^N`.
    pub fn fractional_revenue(&self, x: &[f64]) -> Result<f64> {
        let x = clip_unit(x, self.n_products)?;
        Ok(self.fractional_revenue_unchecked(&x))
    }

    pub(crate) fn fractional_revenue_unchecked(&self, x: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 1.0;
        for ((r, v), xi) in self.revenues.iter().zip(&self.preferences).zip(x) {
            num += r * v * xi;
            den += v * xi;
        }
        num / den
    }

    /// `1 + Σ v_i x_i`.
    pub fn denominator(&self, x: &[f64]) -> f64 {
        1.0 + self.preferences.iter().zip(x).map(|(v, xi)| v * xi).sum::<f64>()
    }

    /// Expected per-period resource consumption `Aᵀν(x)` with
    /// `ν_i(x) = v_i x_i / (1 + Σ v_k x_k)`.
    pub fn consumption_rates(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x = clip_unit(x, self.n_products)?;
        let den = self.denominator(&x);
        let mut out = vec![0.0; self.n_resources];
        for (i, xi) in x.iter().enumerate() {
            let w = self.preferences[i] * xi / den;
            if w == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.consumption_row(i)) {
                *o += a * w;
            }
        }
        Ok(out)
    }

    /// Bounds from the boundedness and linear-scaling assumptions.
    pub fn validate_assumptions(&self) -> AssumptionReport {
        let a0 = self.consumption.iter().copied().fold(0.0, f64::max);
        let b0 = self.preferences.iter().copied().fold(0.0, f64::max);
        let gamma_min = self.gamma0().into_iter().fold(f64::INFINITY, f64::min);
        AssumptionReport {
            a0_bound: a0,
            b0_bound: b0,
            gamma_min,
            passes_a1: a0.is_finite() && b0.is_finite(),
            passes_a2: gamma_min > 0.0,
        }
    }

    /// True when every resource has at least `A_ij` units left.
    #[inline]
    pub fn product_feasible(&self, product: usize, remaining: &[f64]) -> bool {
        self.consumption_row(product)
            .iter()
            .zip(remaining)
            .all(|(a, c)| c >= a)
    }
}

/// Output of [`ModelInstance::choice_probabilities`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceProbabilities {
    pub no_purchase: f64,
    /// `(product, probability)` in assortment order.
    pub products: Vec<(usize, f64)>,
}

impl ChoiceProbabilities {
    pub fn total(&self) -> f64 {
        self.no_purchase + self.products.iter().map(|(_, p)| p).sum::<f64>()
    }

    pub fn of(&self, product: usize) -> f64 {
        self.products
            .iter()
            .find(|(i, _)| *i == product)
            .map_or(0.0, |(_, p)| *p)
    }
}

/// A set of offered products, stored sorted and deduplicated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assortment {
    members: Vec<usize>,
}

impl Assortment {
    /// Validates indices and the cardinality cap against `instance`.
    pub fn new(mut members: Vec<usize>, instance: &ModelInstance) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if let Some(&bad) = members.iter().find(|&&i| i >= instance.n_products()) {
            return input_err(format!(
                "product index {} out of range 1..={}",
                bad + 1,
                instance.n_products()
            ));
        }
        if members.len() > instance.cardinality_cap() {
            return input_err(format!(
                "assortment has {} products, cap is {}",
                members.len(),
                instance.cardinality_cap()
            ));
        }
        Ok(Assortment { members })
    }

    pub fn empty() -> Self {
        Assortment::default()
    }

    /// Builds from already-validated sorted indices.
    pub(crate) fn from_sorted(members: Vec<usize>) -> Self {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        Assortment { members }
    }

    pub fn from_indicator(z: &[bool]) -> Self {
        Assortment {
            members: z
                .iter()
                .enumerate()
                .filter_map(|(i, &b)| b.then_some(i))
                .collect(),
        }
    }

    pub fn indicator(&self, n_products: usize) -> Vec<f64> {
        let mut x = vec![0.0; n_products];
        for &i in &self.members {
            x[i] = 1.0;
        }
        x
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }

    pub fn contains(&self, product: usize) -> bool {
        self.members.binary_search(&product).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Keeps only the products that are individually feasible for `remaining`.
    pub fn feasible_part(&self, instance: &ModelInstance, remaining: &[f64]) -> Assortment {
        Assortment {
            members: self
                .members
                .iter()
                .copied()
                .filter(|&i| instance.product_feasible(i, remaining))
                .collect(),
        }
    }
}

/// Remaining inventory `C_t` and the number of periods already played.
#[derive(Debug, Clone, PartialEq)]
pub struct InventoryState {
    pub remaining: Vec<f64>,
    pub periods_elapsed: usize,
}

impl InventoryState {
    pub fn initial(instance: &ModelInstance) -> Self {
        InventoryState {
            remaining: instance.initial_inventory().to_vec(),
            periods_elapsed: 0,
        }
    }

    pub fn periods_remaining(&self, instance: &ModelInstance) -> usize {
        instance.horizon().saturating_sub(self.periods_elapsed)
    }

    /// Whether any single product can still be sold.
    pub fn any_feasible(&self, instance: &ModelInstance) -> bool {
        (0..instance.n_products()).any(|i| instance.product_feasible(i, &self.remaining))
    }
}

/// Diagnostics for the boundedness (A₀, B₀) and linear-scaling (γ_min) assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// `max A_ij`
    pub a0_bound: f64,
    /// `max v_i`
    pub b0_bound: f64,
    /// `min_j C_{0,j} / T`
    pub gamma_min: f64,
    pub passes_a1: bool,
    pub passes_a2: bool,
}

/// Clips values within [`BOUND_TOL`] of `[0, 1]` and rejects anything further out.
pub fn clip_unit(x: &[f64], n: usize) -> Result<Vec<f64>> {
    if x.len() != n {
        return input_err(format!("expected a vector of length {n}, got {}", x.len()));
    }
    x.iter()
        .enumerate()
        .map(|(i, &xi)| {
            if !(-BOUND_TOL..=1.0 + BOUND_TOL).contains(&xi) {
                input_err(format!("component {} = {xi} lies outside [0, 1]", i + 1))
            } else {
                Ok(xi.clamp(0.0, 1.0))
            }
        })
        .collect()
}
