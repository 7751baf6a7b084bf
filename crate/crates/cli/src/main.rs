use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use assort_knap::fluid::{phi_psi_discrepancy, solve_phi};
use assort_knap::harness::{
    failure_fraction, generate_instance, run_experiments, write_outputs, ExperimentConfig, Profile,
};
use assort_knap::sampler::{decompose, DecompositionMethod};
use assort_knap::sim::{run_trajectory, TrajectoryResult};
use assort_knap::{Error, ModelInstance, PolicyKind};

#[derive(Parser)]
#[command(name = "assort-knap", version, about = "Dynamic MNL assortment optimization with knapsack constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of simulated trials and write rows.csv and summary.dat
    Experiment {
        /// JSON file with one config object or an array of them
        #[arg(long)]
        config: Option<PathBuf>,
        /// desk or full; overrides trials and horizons
        #[arg(long)]
        profile: Option<String>,
        /// Worker threads (default: all cores)
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a random instance
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the fluid relaxation at the initial inventory
    SolveFluid {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        epsilon: f64,
    },
    /// Simulate one trajectory
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        /// resolving, per-period or per-epoch
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-epoch trace CSV (resolving policy only)
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Decompose a fractional vector into weighted assortments
    Decompose {
        /// Comma-separated values in [0, 1]
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long)]
        k: usize,
        /// reduced or generic
        #[arg(long, default_value = "reduced")]
        method: String,
    },
}

enum Failure {
    Config(String),
    Solver(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Input(_) | Error::Json(_) => Failure::Config(e.to_string()),
            Error::Solver(_) => Failure::Solver(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Experiment { config, profile, jobs, out } => experiment(config, profile, jobs, out),
        Command::Gen { n, m, k, t, seed, out } => {
            if n == 0 || m == 0 || k == 0 || t == 0 || k > n {
                return Err(Failure::Config("need positive n, m, k, t with k ≤ n".into()));
            }
            let inst = generate_instance(n, m, k, t, &mut ChaCha8Rng::seed_from_u64(seed))?;
            match out {
                Some(path) => inst.save(path)?,
                None => println!("{}", inst.to_json_string()?),
            }
            Ok(())
        }
        Command::SolveFluid { instance, epsilon } => {
            let inst = ModelInstance::load(instance)?;
            let gamma = inst.gamma0();
            let sol = solve_phi(&inst, &gamma, epsilon)?;
            let gap = phi_psi_discrepancy(&inst, &gamma, epsilon)?;
            println!("phi: {}", sol.objective);
            println!("x: {}", join(&sol.x));
            println!("denominator: {}", sol.denominator);
            println!("lp_solves: {}", sol.lp_solves);
            println!("phi_psi_discrepancy: {gap}");
            Ok(())
        }
        Command::Simulate { instance, policy, seed, trace } => {
            let inst = ModelInstance::load(instance)?;
            let kind: PolicyKind = policy.parse()?;
            let res = run_trajectory(&inst, kind, seed)?;
            println!("{}", summary_line(&res));
            if let Some(path) = trace {
                fs::write(path, trace_csv(&inst, &res))?;
            }
            Ok(())
        }
        Command::Decompose { x, k, method } => {
            let method: DecompositionMethod = method.parse()?;
            let dec = decompose(&x, k, method)?;
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            for (weight, support) in dec.weights.iter().zip(&dec.supports) {
                let ids: Vec<String> = support.iter().map(|i| (i + 1).to_string()).collect();
                writeln!(w, "{weight} {{{}}}", ids.join(","))?;
            }
            let err = dec
                .marginals(x.len())
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            writeln!(w, "# supports: {}  reconstruction error: {err:e}", dec.len())?;
            if err > 1e-9 {
                return Err(Failure::Other(format!("reconstruction error {err:e} exceeds 1e-9")));
            }
            Ok(())
        }
    }
}

fn experiment(
    config: Option<PathBuf>,
    profile: Option<String>,
    jobs: usize,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let profile = profile.map(|p| p.parse::<Profile>()).transpose()?;
    let mut configs = match &config {
        Some(path) => ExperimentConfig::load_many(path).map_err(|e| match e {
            Error::Io(io) => Failure::Config(format!("{}: {io}", path.display())),
            other => Failure::Config(other.to_string()),
        })?,
        None => profile.unwrap_or(Profile::Desk).configs(),
    };
    if let (Some(p), Some(_)) = (profile, &config) {
        configs.iter_mut().for_each(|c| p.apply(c));
    }
    let out = out
        .or_else(|| configs[0].output_path.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let rows = run_experiments(&configs, jobs)?;
    write_outputs(&rows, &out)?;
    let failed = failure_fraction(&rows);
    eprintln!("{} rows written to {}", rows.len(), out.display());
    if failed > 0.01 {
        return Err(Failure::Solver(format!("{:.1}% of rows failed", 100.0 * failed)));
    }
    Ok(())
}

fn join(x: &[f64]) -> String {
    x.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn summary_line(res: &TrajectoryResult) -> String {
    serde_json::json!({
        "policy": res.policy,
        "seed": res.seed,
        "revenue": res.total_revenue,
        "fluid_benchmark": res.fluid_benchmark,
        "regret": res.regret,
        "periods_used": res.periods_used,
        "termination": res.termination,
        "epochs_completed": res.epochs_completed,
        "resolve_count": res.resolve_count,
        "sales": res.sales,
    })
    .to_string()
}

fn trace_csv(inst: &ModelInstance, res: &TrajectoryResult) -> String {
    let mut out = String::from("tau,t_tau,s_tau,m_tau,beta_tau,delta_tau");
    for j in 1..=inst.n_resources() {
        out.push_str(&format!(",gamma_tau_{j}"));
    }
    out.push('\n');
    for e in &res.epochs {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.tau,
            e.t_tau,
            e.s_tau,
            e.length,
            e.purchase_total(),
            e.delta,
            join(&e.gamma_tau)
        ));
    }
    out
}
