//! Random instances, batched experiments and regret aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::model::ModelInstance;
use crate::policy::PolicyKind;
use crate::sim::{fluid_benchmark, run_trajectory_with_benchmark};

pub const CSV_HEADER: &str =
    "policy,N,M,K,T,trial,seed,revenue,fluid_value,regret,epochs_completed,status";

/// One experiment grid: every `(policy, T, trial)` combination is simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_products: usize,
    pub n_resources: usize,
    pub cardinality_cap: usize,
    pub horizons: Vec<usize>,
    pub n_trials: usize,
    #[serde(default = "all_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

fn all_policies() -> Vec<PolicyKind> {
    PolicyKind::ALL.to_vec()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_products == 0 || self.n_resources == 0 || self.cardinality_cap == 0 {
            return input_err("n_products, n_resources and cardinality_cap must be positive");
        }
        if self.cardinality_cap > self.n_products {
            return input_err("cardinality_cap exceeds n_products");
        }
        if self.n_trials == 0 {
            return input_err("n_trials must be at least 1");
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return input_err("horizons must be a non-empty list of positive integers");
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return input_err("horizons must be strictly increasing");
        }
        if self.policies.is_empty() {
            return input_err("at least one policy is required");
        }
        Ok(())
    }

    /// Reads either a single config object or an array of them.
    pub fn parse_many(text: &str) -> Result<Vec<ExperimentConfig>> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany {
            Many(Vec<ExperimentConfig>),
            One(ExperimentConfig),
        }
        let configs = match serde_json::from_str::<OneOrMany>(text) {
            Ok(OneOrMany::Many(v)) => v,
            Ok(OneOrMany::One(c)) => vec![c],
            // re-parse to surface the precise error
            Err(_) => match text.trim_start().starts_with('[') {
                true => serde_json::from_str::<Vec<ExperimentConfig>>(text)?,
                false => vec![serde_json::from_str::<ExperimentConfig>(text)?],
            },
        };
        if configs.is_empty() {
            return input_err("config file lists no experiments");
        }
        for c in &configs {
            c.validate()?;
        }
        Ok(configs)
    }

    pub fn load_many(path: impl AsRef<Path>) -> Result<Vec<ExperimentConfig>> {
        Self::parse_many(&fs::read_to_string(path)?)
    }
}

/// Preset experiment sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// 100 trials, `T = 2⁵ … 2¹³`.
    Desk,
    /// 500 trials, `T = 2⁵ … 2¹⁵`, all resource counts.
    Full,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => input_err(format!("unknown profile '{other}' (expected desk or full)")),
        }
    }
}

impl Profile {
    pub fn n_trials(self) -> usize {
        match self {
            Profile::Desk => 100,
            Profile::Full => 500,
        }
    }

    pub fn horizons(self) -> Vec<usize> {
        let top = match self {
            Profile::Desk => 13,
            Profile::Full => 15,
        };
        (5..=top).map(|e| 1usize << e).collect()
    }

    /// Built-in experiment list.
    pub fn configs(self) -> Vec<ExperimentConfig> {
        let shapes: &[(usize, usize, usize)] = match self {
            Profile::Desk => &[(10, 3, 5), (20, 5, 10)],
            Profile::Full => &[
                (10, 3, 5),
                (10, 3, 10),
                (10, 3, 15),
                (20, 5, 10),
                (20, 5, 20),
                (20, 5, 30),
            ],
        };
        shapes
            .iter()
            .map(|&(n, k, m)| ExperimentConfig {
                n_products: n,
                n_resources: m,
                cardinality_cap: k,
                horizons: self.horizons(),
                n_trials: self.n_trials(),
                policies: all_policies(),
                master_seed: 1,
                output_path: None,
            })
            .collect()
    }

    /// Overrides the trial count and horizons of `config`.
    pub fn apply(self, config: &mut ExperimentConfig) {
        config.n_trials = self.n_trials();
        config.horizons = self.horizons();
    }
}

/// Draws an instance: `v, r ~ U[0,1]`, `A ~ U[0, 1/K]`, `C₀/T ~ U(0, 0.1]`.
pub fn generate_instance<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    k: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<ModelInstance> {
    let preferences: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let revenues: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let consumption: Vec<f64> = (0..n * m).map(|_| rng.gen::<f64>() / k as f64).collect();
    let initial_inventory: Vec<f64> = (0..m)
        .map(|_| horizon as f64 * 0.1 * (1.0 - rng.gen::<f64>()))
        .collect();
    ModelInstance::new(n, m, k, horizon, revenues, preferences, consumption, initial_inventory)
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a tuple of integers into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |acc, &p| mix(acc ^ mix(p)))
}

/// Seed of the instance shared by all policies at `(T, trial)`.
pub fn instance_seed(config: &ExperimentConfig, horizon: usize, trial: usize) -> u64 {
    derive_seed(&[
        config.master_seed,
        config.n_products as u64,
        config.n_resources as u64,
        config.cardinality_cap as u64,
        0,
        horizon as u64,
        trial as u64,
    ])
}

/// Seed of the demand stream of `(policy, T, trial)`.
pub fn trajectory_seed(config: &ExperimentConfig, policy: PolicyKind, horizon: usize, trial: usize) -> u64 {
    let tag = 1 + PolicyKind::ALL.iter().position(|&p| p == policy).expect("known policy") as u64;
    derive_seed(&[
        config.master_seed,
        config.n_products as u64,
        config.n_resources as u64,
        config.cardinality_cap as u64,
        tag,
        horizon as u64,
        trial as u64,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowStatus {
    Ok,
    SolverFailure,
    SimulationFailure,
}

impl RowStatus {
    pub fn tag(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::SolverFailure => "solver_failure",
            RowStatus::SimulationFailure => "simulation_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub policy: PolicyKind,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub t: usize,
    pub trial: usize,
    pub seed: u64,
    pub revenue: f64,
    /// `Φ(γ₀)`.
    pub fluid_value: f64,
    pub regret: f64,
    pub epochs_completed: usize,
    pub status: RowStatus,
}

impl ExperimentRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.policy,
            self.n,
            self.m,
            self.k,
            self.t,
            self.trial,
            self.seed,
            self.revenue,
            self.fluid_value,
            self.regret,
            self.epochs_completed,
            self.status.tag()
        )
    }
}

fn failure_status(e: &Error) -> RowStatus {
    match e {
        Error::Simulation(_) => RowStatus::SimulationFailure,
        _ => RowStatus::SolverFailure,
    }
}

fn run_cell(config: &ExperimentConfig, horizon: usize, trial: usize) -> Vec<ExperimentRow> {
    let (n, m, k) = (config.n_products, config.n_resources, config.cardinality_cap);
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(config, horizon, trial));
    let prepared = generate_instance(n, m, k, horizon, &mut rng)
        .and_then(|inst| fluid_benchmark(&inst).map(|b| (inst, b)));
    config
        .policies
        .iter()
        .map(|&policy| {
            let seed = trajectory_seed(config, policy, horizon, trial);
            let row = |revenue: f64, fluid_value: f64, regret: f64, epochs: usize, status| ExperimentRow {
                policy,
                n,
                m,
                k,
                t: horizon,
                trial,
                seed,
                revenue,
                fluid_value,
                regret,
                epochs_completed: epochs,
                status,
            };
            let (inst, bench) = match &prepared {
                Ok(p) => p,
                Err(e) => return row(f64::NAN, f64::NAN, f64::NAN, 0, failure_status(e)),
            };
            let fluid_value = bench / horizon as f64;
            match run_trajectory_with_benchmark(inst, policy, seed, *bench) {
                Ok(res) => row(res.total_revenue, fluid_value, res.regret, res.epochs_completed, RowStatus::Ok),
                Err(e) => row(f64::NAN, fluid_value, f64::NAN, 0, failure_status(&e)),
            }
        })
        .collect()
}

/// Runs every `(policy, T, trial)` of `config` on `jobs` threads (0 = all
/// cores). Rows come back ordered by policy, then `T`, then trial,
/// independent of `jobs`.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<Vec<ExperimentRow>> {
    config.validate()?;
    let cells: Vec<(usize, usize)> = config
        .horizons
        .iter()
        .flat_map(|&t| (0..config.n_trials).map(move |trial| (t, trial)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let per_cell: Vec<Vec<ExperimentRow>> =
        pool.install(|| cells.par_iter().map(|&(t, trial)| run_cell(config, t, trial)).collect());

    let mut rows = Vec::with_capacity(per_cell.len() * config.policies.len());
    for p in 0..config.policies.len() {
        rows.extend(per_cell.iter().map(|cell| cell[p].clone()));
    }
    Ok(rows)
}

/// Runs several configs back to back.
pub fn run_experiments(configs: &[ExperimentConfig], jobs: usize) -> Result<Vec<ExperimentRow>> {
    let mut rows = Vec::new();
    for c in configs {
        rows.extend(run_experiment(c, jobs)?);
    }
    Ok(rows)
}

/// Share of rows whose status is not `ok`.
pub fn failure_fraction(rows: &[ExperimentRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|r| r.status != RowStatus::Ok).count() as f64 / rows.len() as f64
}

/// Serializes rows to CSV, spot-checking the regret identity on every 100th
/// successful row.
pub fn rows_to_csv(rows: &[ExperimentRow]) -> Result<String> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (idx, r) in rows.iter().enumerate() {
        if idx % 100 == 0 && r.status == RowStatus::Ok {
            let expected = r.t as f64 * r.fluid_value - r.revenue;
            if (expected - r.regret).abs() > 1e-9 * (1.0 + r.t as f64) {
                return Err(Error::Internal(format!(
                    "row {idx}: regret {} differs from T·Φ − revenue {expected}",
                    r.regret
                )));
            }
        }
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    Ok(out)
}

/// Mean and standard error per `(policy, N, M, K, T)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub policy: PolicyKind,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub t: usize,
    pub count: usize,
    pub mean_revenue: f64,
    pub se_revenue: f64,
    pub mean_regret: f64,
    pub se_regret: f64,
    /// Mean of `regret / T`, the per-period gap to `Φ(γ₀)`.
    pub mean_gap: f64,
    pub se_gap: f64,
    pub mean_fluid_value: f64,
}

/// Mean and standard error (`0` for a single sample).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Groups successful rows; groups come out sorted by policy, shape and `T`.
pub fn aggregate(rows: &[ExperimentRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(PolicyKind, usize, usize, usize, usize), Vec<&ExperimentRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == RowStatus::Ok) {
        groups.entry((r.policy, r.n, r.m, r.k, r.t)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((policy, n, m, k, t), g)| {
            let pick = |f: &dyn Fn(&ExperimentRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (mean_revenue, se_revenue) = mean_se(&pick(&|r| r.revenue));
            let (mean_regret, se_regret) = mean_se(&pick(&|r| r.regret));
            let (mean_gap, se_gap) = mean_se(&pick(&|r| r.regret / r.t as f64));
            let (mean_fluid_value, _) = mean_se(&pick(&|r| r.fluid_value));
            AggregateRow {
                policy,
                n,
                m,
                k,
                t,
                count: g.len(),
                mean_revenue,
                se_revenue,
                mean_regret,
                se_regret,
                mean_gap,
                se_gap,
                mean_fluid_value,
            }
        })
        .collect()
}

/// gnuplot data file: one block per `(policy, N, M, K)` separated by two
/// blank lines, so `index i` selects a curve.
pub fn summary_to_gnuplot(summary: &[AggregateRow]) -> String {
    let mut out = String::new();
    let mut current = None;
    for a in summary {
        let key = (a.policy, a.n, a.m, a.k);
        if current != Some(key) {
            if current.is_some() {
                out.push_str("\n\n");
            }
            let _ = writeln!(out, "# policy={} N={} M={} K={}", a.policy, a.n, a.m, a.k);
            out.push_str("# T count mean_revenue se_revenue mean_regret se_regret mean_gap se_gap fluid_value\n");
            current = Some(key);
        }
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            a.t, a.count, a.mean_revenue, a.se_revenue, a.mean_regret, a.se_regret, a.mean_gap, a.se_gap,
            a.mean_fluid_value
        );
    }
    out
}

/// Writes `rows.csv` and `summary.dat` into `dir`.
pub fn write_outputs(rows: &[ExperimentRow], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("rows.csv"), rows_to_csv(rows)?)?;
    fs::write(dir.join("summary.dat"), summary_to_gnuplot(&aggregate(rows)))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            n_products: 4,
            n_resources: 2,
            cardinality_cap: 2,
            horizons: vec![16, 32],
            n_trials: 3,
            policies: all_policies(),
            master_seed: 7,
            output_path: None,
        }
    }

    #[test]
    fn generated_instances_respect_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let inst = generate_instance(6, 3, 2, 128, &mut rng).unwrap();
            let rep = inst.validate_assumptions();
            assert!(rep.gamma_min > 0.0 && rep.gamma_min <= 0.1);
            assert!(rep.a0_bound <= 0.5);
            assert!(inst.gamma0().iter().all(|&g| g > 0.0 && g <= 0.1));
        }
        let full = generate_instance(3, 2, 3, 10, &mut rng).unwrap();
        assert!((0..3).all(|i| full.consumption_row(i).iter().all(|&a| a <= 1.0 / 3.0)));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_instance(5, 2, 2, 64, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = generate_instance(5, 2, 2, 64, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.to_json_string().unwrap(), b.to_json_string().unwrap());
    }

    #[test]
    fn one_trial_one_horizon_gives_one_row_per_policy() {
        let mut c = tiny_config();
        c.horizons = vec![16];
        c.n_trials = 1;
        let rows = run_experiment(&c, 1).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.status == RowStatus::Ok));
        for r in &rows {
            assert!((r.t as f64 * r.fluid_value - r.revenue - r.regret).abs() < 1e-9);
        }
    }

    #[test]
    fn instances_are_paired_across_policies() {
        let c = tiny_config();
        let rows = run_experiment(&c, 2).unwrap();
        assert_eq!(rows.len(), 3 * 2 * 3);
        for cell in 0..6 {
            let fv: Vec<f64> = (0..3).map(|p| rows[p * 6 + cell].fluid_value).collect();
            assert!(fv.iter().all(|&f| f == fv[0]));
            let seeds: Vec<u64> = (0..3).map(|p| rows[p * 6 + cell].seed).collect();
            assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2]);
        }
    }

    #[test]
    fn job_count_does_not_change_output() {
        let c = tiny_config();
        let a = rows_to_csv(&run_experiment(&c, 1).unwrap()).unwrap();
        let b = rows_to_csv(&run_experiment(&c, 4).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with(CSV_HEADER));
    }

    #[test]
    fn config_parsing() {
        let one = r#"{"n_products":4,"n_resources":2,"cardinality_cap":2,"horizons":[8,16],"n_trials":2}"#;
        let cs = ExperimentConfig::parse_many(one).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].policies, all_policies());
        let many = format!("[{one},{one}]");
        assert_eq!(ExperimentConfig::parse_many(&many).unwrap().len(), 2);
        let unknown = one.replace("\"n_trials\"", "\"trials\"");
        assert!(ExperimentConfig::parse_many(&unknown).is_err());
        let unsorted = one.replace("[8,16]", "[16,8]");
        assert!(ExperimentConfig::parse_many(&unsorted).is_err());
        let policies = one.replace("\"n_trials\":2", "\"n_trials\":2,\"policies\":[\"resolving\"]");
        assert_eq!(ExperimentConfig::parse_many(&policies).unwrap()[0].policies, vec![PolicyKind::Resolving]);
    }

    #[test]
    fn mean_se_conventions() {
        assert_eq!(mean_se(&[3.0]), (3.0, 0.0));
        assert_eq!(mean_se(&[2.0, 2.0]), (2.0, 0.0));
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample variance 5/3, SE = sqrt(5/12)
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn aggregate_groups_and_skips_failures() {
        let base = ExperimentRow {
            policy: PolicyKind::Resolving,
            n: 2,
            m: 1,
            k: 1,
            t: 10,
            trial: 0,
            seed: 0,
            revenue: 4.0,
            fluid_value: 0.5,
            regret: 1.0,
            epochs_completed: 3,
            status: RowStatus::Ok,
        };
        let mut b = base.clone();
        b.revenue = 2.0;
        b.regret = 3.0;
        let mut failed = base.clone();
        failed.status = RowStatus::SolverFailure;
        failed.revenue = f64::NAN;
        let agg = aggregate(&[base, b, failed.clone()]);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].count, 2);
        assert_eq!(agg[0].mean_revenue, 3.0);
        assert_eq!(agg[0].se_revenue, 1.0);
        assert!((agg[0].mean_gap - 0.2).abs() < 1e-15);
        assert!((failure_fraction(&[failed.clone(), failed]) - 1.0).abs() < 1e-15);
        let text = summary_to_gnuplot(&agg);
        assert!(text.starts_with("# policy=resolving N=2 M=1 K=1"));
    }

    #[test]
    fn profiles() {
        assert_eq!(Profile::Desk.horizons().first(), Some(&32));
        assert_eq!(Profile::Desk.horizons().last(), Some(&8192));
        assert_eq!(Profile::Full.configs().len(), 6);
        assert!("laptop".parse::<Profile>().is_err());
    }
}
