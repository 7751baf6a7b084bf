//! Sampling size-`K` assortments whose inclusion probabilities equal a
//! fractional solution `x`.
//!
//! `x` is padded with `K` dummy products of weight `1 − ‖x‖₁/K` so the entries
//! sum to `K`. The `(N+K) × (N+K)` matrix whose first `K` rows are `x/K` and
//! whose remaining `N` rows are `(1 − x)/N` is doubly stochastic; any convex
//! combination of permutation matrices representing it yields a distribution
//! over supports (the columns matched to the first `K` rows) with marginals
//! exactly `x`.
//!
//! Two decompositions are provided. [`reduced_bvn_decompose`] exploits the
//! two-block structure and works directly on `x` with `O(N + K)` supports.
//! [`generic_bvn_decompose`] is the textbook Birkhoff algorithm (repeated
//! perfect matchings on the positive entries) and is kept for cross-checking.

use rand::Rng;
use serde::Serialize;

use crate::error::{input_err, Error, Result};
use crate::model::BOUND_TOL;

/// Inputs this close to 0 or 1 are snapped.
pub const SNAP_TOL: f64 = 1e-9;

/// Round-off below which the decomposition's running counters count as zero.
const COUNTER_TOL: f64 = 1e-12;

/// Convex combination of supports: support `ℓ` is drawn with probability `weights[ℓ]`.
///
/// Supports list real products only (0-based, sorted); dummy slots are implicit,
/// so a support may hold fewer than `K` products.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BvnDecomposition {
    pub weights: Vec<f64>,
    pub supports: Vec<Vec<usize>>,
}

impl BvnDecomposition {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `Σ_{ℓ : i ∈ Z_ℓ} α_ℓ` for every product.
    pub fn marginals(&self, n_products: usize) -> Vec<f64> {
        let mut m = vec![0.0; n_products];
        for (w, support) in self.weights.iter().zip(&self.supports) {
            for &i in support {
                m[i] += w;
            }
        }
        m
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Draws one support from the categorical distribution over `weights`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &[usize] {
        let u: f64 = rng.gen::<f64>() * self.total_weight();
        let mut acc = 0.0;
        for (w, support) in self.weights.iter().zip(&self.supports) {
            acc += w;
            if u < acc {
                return support;
            }
        }
        self.supports.last().map_or(&[], |s| s.as_slice())
    }
}

/// Dense doubly stochastic matrix built from a fractional solution.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublyStochasticMatrix {
    n_products: usize,
    k: usize,
    /// Row-major `(N+K)²`.
    entries: Vec<f64>,
}

impl DoublyStochasticMatrix {
    /// Wraps a square matrix, checking that rows and columns sum to 1.
    /// The first `k` rows are the selection rows; the first `n_products`
    /// columns are real products.
    pub fn from_entries(n_products: usize, k: usize, entries: Vec<f64>) -> Result<Self> {
        let dim = n_products + k;
        if entries.len() != dim * dim {
            return input_err(format!("expected {dim}x{dim} entries"));
        }
        if entries.iter().any(|e| !(e.is_finite() && *e >= -BOUND_TOL)) {
            return input_err("matrix entries must be finite and nonnegative");
        }
        let m = DoublyStochasticMatrix { n_products, k, entries };
        if m.max_margin_error() > SNAP_TOL {
            return input_err("matrix is not doubly stochastic");
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n_products + self.k
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim() + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Largest deviation of any row or column sum from 1.
    pub fn max_margin_error(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            let row: f64 = (0..d).map(|j| self.get(i, j)).sum();
            let col: f64 = (0..d).map(|j| self.get(j, i)).sum();
            worst = worst.max((row - 1.0).abs()).max((col - 1.0).abs());
        }
        worst
    }
}

/// Clips `x` into `[0,1]` and checks `‖x‖₁ ≤ K`.
fn checked_x(x: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return input_err("K must be positive");
    }
    let x = crate::model::clip_unit(x, x.len())?;
    let total: f64 = x.iter().sum();
    if total > k as f64 + SNAP_TOL {
        return input_err(format!("‖x‖₁ = {total} exceeds K = {k}"));
    }
    Ok(x)
}

fn dummy_weight(x: &[f64], k: usize) -> f64 {
    (1.0 - x.iter().sum::<f64>() / k as f64).clamp(0.0, 1.0)
}

/// Builds the `(N+K) × (N+K)` doubly stochastic matrix for `x`.
pub fn build_doubly_stochastic(x: &[f64], k: usize) -> Result<DoublyStochasticMatrix> {
    let x = checked_x(x, k)?;
    let n = x.len();
    if n == 0 {
        return input_err("x must be nonempty");
    }
    let dummy = dummy_weight(&x, k);
    let extended: Vec<f64> = x.iter().copied().chain(std::iter::repeat_n(dummy, k)).collect();
    let dim = n + k;
    let mut entries = Vec::with_capacity(dim * dim);
    for row in 0..dim {
        if row < k {
            entries.extend(extended.iter().map(|xj| xj / k as f64));
        } else {
            entries.extend(extended.iter().map(|xj| (1.0 - xj) / n as f64));
        }
    }
    Ok(DoublyStochasticMatrix { n_products: n, k, entries })
}

/// Structured decomposition working on the padded vector directly.
///
/// Entries equal to 1 are placed in every support and entries equal to 0 are
/// dropped. The remaining fractional items (including fractional dummies)
/// carry two counters, `y_i` (mass still to be spent with `i` selected) and
/// `ȳ_i` (mass still to be spent with `i` not selected). Each round selects the
/// `K'` items with the largest remaining `y_i` (lowest index on ties), takes
/// the step `α = min(y_i : i selected) ∧ min(ȳ_i > 0 : i not selected)`, and
/// charges it to the counters. Every round except the last zeroes at least one
/// counter of a fractional item for good, so at most `N + K` supports appear.
pub fn reduced_bvn_decompose(x: &[f64], k: usize) -> Result<BvnDecomposition> {
    let x = checked_x(x, k)?;
    let n = x.len();
    let dummy = dummy_weight(&x, k);

    let mut forced: Vec<usize> = Vec::new();
    // (product or None for a dummy, value)
    let mut items: Vec<(Option<usize>, f64)> = Vec::new();
    for (i, &xi) in x.iter().enumerate() {
        if xi >= 1.0 - SNAP_TOL {
            forced.push(i);
        } else if xi > SNAP_TOL {
            items.push((Some(i), xi));
        }
    }
    if dummy > SNAP_TOL && dummy < 1.0 - SNAP_TOL {
        items.extend(std::iter::repeat_n((None, dummy), k));
    }
    let select = (items.iter().map(|(_, v)| v).sum::<f64>()).round() as usize;
    if select > items.len() {
        return Err(Error::Internal(format!(
            "cannot select {select} of {} fractional items",
            items.len()
        )));
    }

    let mut y: Vec<f64> = items.iter().map(|(_, v)| *v).collect();
    let mut y_bar: Vec<f64> = items.iter().map(|(_, v)| 1.0 - v).collect();
    let mut remaining = 1.0f64;
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut weights = Vec::new();
    let mut supports = Vec::new();
    let max_rounds = n + k + 2;

    while remaining > COUNTER_TOL {
        if weights.len() >= max_rounds {
            return Err(Error::Internal(format!(
                "reduced decomposition did not terminate within {max_rounds} rounds"
            )));
        }
        order.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
        let (chosen, rest) = order.split_at(select);
        let alpha = chosen
            .iter()
            .map(|&i| y[i])
            .chain(rest.iter().map(|&i| y_bar[i]))
            .filter(|&v| v > 0.0)
            .fold(remaining, f64::min);
        if alpha <= 0.0 {
            return Err(Error::Internal("reduced decomposition stalled at a zero step".into()));
        }

        let mut support: Vec<usize> = forced.clone();
        support.extend(chosen.iter().filter(|&&i| y[i] > 0.0).filter_map(|&i| items[i].0));
        support.sort_unstable();

        for &i in chosen {
            if y[i] > 0.0 {
                y[i] = snap(y[i] - alpha);
            }
        }
        for &i in rest {
            if y_bar[i] > 0.0 {
                y_bar[i] = snap(y_bar[i] - alpha);
            }
        }
        remaining = snap(remaining - alpha);
        weights.push(alpha);
        supports.push(support);
    }

    if y.iter().chain(&y_bar).any(|&c| c > SNAP_TOL) {
        return Err(Error::Internal("reduced decomposition left nonzero counters".into()));
    }
    Ok(BvnDecomposition { weights, supports })
}

#[inline]
fn snap(v: f64) -> f64 {
    if v.abs() <= COUNTER_TOL {
        0.0
    } else {
        v
    }
}

/// Classical Birkhoff decomposition into `(weight, permutation)` pairs, where
/// `perm[row]` is the column matched to `row`.
pub fn birkhoff_permutations(m: &DoublyStochasticMatrix) -> Result<Vec<(f64, Vec<usize>)>> {
    const POSITIVE: f64 = 1e-12;
    let d = m.dim();
    let mut residual = m.entries.clone();
    let mut out = Vec::new();
    let cap = d * d + 1;
    loop {
        let mass: f64 = residual[..d].iter().sum();
        if mass <= SNAP_TOL {
            break;
        }
        if out.len() >= cap {
            return Err(Error::Internal(format!("Birkhoff decomposition exceeded {cap} terms")));
        }
        let Some(perm) = perfect_matching(d, |r, c| residual[r * d + c] > POSITIVE) else {
            return input_err(format!(
                "no perfect matching on the positive entries (residual mass {mass:e})"
            ));
        };
        let alpha = perm
            .iter()
            .enumerate()
            .map(|(r, &c)| residual[r * d + c])
            .fold(f64::INFINITY, f64::min);
        for (r, &c) in perm.iter().enumerate() {
            let e = &mut residual[r * d + c];
            *e -= alpha;
            if *e <= POSITIVE {
                *e = 0.0;
            }
        }
        out.push((alpha, perm));
    }
    Ok(out)
}

/// Birkhoff decomposition reduced to supports: the real-product columns
/// matched to the first `K` rows of each permutation. Permutations with the
/// same support are merged.
pub fn generic_bvn_decompose(m: &DoublyStochasticMatrix) -> Result<BvnDecomposition> {
    let perms = birkhoff_permutations(m)?;
    let mut weights = Vec::with_capacity(perms.len());
    let mut supports = Vec::with_capacity(perms.len());
    for (alpha, perm) in perms {
        let mut support: Vec<usize> = perm[..m.k]
            .iter()
            .copied()
            .filter(|&c| c < m.n_products)
            .collect();
        support.sort_unstable();
        match supports.iter().position(|s| *s == support) {
            Some(at) => weights[at] += alpha,
            None => {
                weights.push(alpha);
                supports.push(support);
            }
        }
    }
    Ok(BvnDecomposition { weights, supports })
}

/// Kuhn's augmenting-path matching, rows and columns scanned in index order.
fn perfect_matching(d: usize, edge: impl Fn(usize, usize) -> bool) -> Option<Vec<usize>> {
    let mut col_match: Vec<Option<usize>> = vec![None; d];
    fn augment(
        r: usize,
        d: usize,
        edge: &dyn Fn(usize, usize) -> bool,
        seen: &mut [bool],
        col_match: &mut [Option<usize>],
    ) -> bool {
        for c in 0..d {
            if seen[c] || !edge(r, c) {
                continue;
            }
            seen[c] = true;
            if col_match[c].is_none_or(|r2| augment(r2, d, edge, seen, col_match)) {
                col_match[c] = Some(r);
                return true;
            }
        }
        false
    }
    for r in 0..d {
        let mut seen = vec![false; d];
        if !augment(r, d, &edge, &mut seen, &mut col_match) {
            return None;
        }
    }
    let mut perm = vec![0; d];
    for (c, r) in col_match.iter().enumerate() {
        perm[r.expect("perfect matching covers every column")] = c;
    }
    Some(perm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecompositionMethod {
    #[default]
    Reduced,
    Generic,
}

impl std::str::FromStr for DecompositionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduced" => Ok(Self::Reduced),
            "generic" => Ok(Self::Generic),
            other => input_err(format!("unknown decomposition method '{other}'")),
        }
    }
}

pub fn decompose(x: &[f64], k: usize, method: DecompositionMethod) -> Result<BvnDecomposition> {
    match method {
        DecompositionMethod::Reduced => reduced_bvn_decompose(x, k),
        DecompositionMethod::Generic => generic_bvn_decompose(&build_doubly_stochastic(x, k)?),
    }
}

/// One draw `z ∈ {0,1}^N` with `‖z‖₁ ≤ K` and `E[z] = x`.
pub fn sample_assortment<R: Rng + ?Sized>(x: &[f64], k: usize, rng: &mut R) -> Result<Vec<bool>> {
    let dec = reduced_bvn_decompose(x, k)?;
    let mut z = vec![false; x.len()];
    for &i in dec.sample(rng) {
        z[i] = true;
    }
    Ok(z)
}
