use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use robo_advisor::bounds::{self, BoundsError};
use robo_advisor::choice::{build_tables, InvestorProfile};
use robo_advisor::io::report::{self, BoundsRow, Meta};
use robo_advisor::io::{self as rio, IoError, LoadedConfig, SweepSpec};
use robo_advisor::sim::{self, PolicyKind, SimConfig, SimError, Simulator, SweepParameter, ThetaMode};

#[derive(Parser)]
#[command(name = "robo-advisor", version, about = "Robo-advisor simulator and bound calculator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config; calibrated defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    months: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Yearly rewards of omniscient, robo and investor-only policies
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Omit the timestamp comment
        #[arg(long)]
        no_meta: bool,
    },
    /// Repeat the experiment over values of C, r, kappa or xi
    Sweep {
        #[command(flatten)]
        common: Common,
        /// C, r, kappa or xi; defaults to the config's sweep section
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values; defaults to the config or built-in list
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        no_meta: bool,
    },
    /// Solicitation budgets from the concentration bounds and by simulation
    Bounds {
        #[command(flatten)]
        common: Common,
        /// Failure probability, as a decimal or a fraction like 0.1/3
        #[arg(long, default_value = "0.1/3")]
        delta: String,
        #[arg(long, default_value_t = 10_000)]
        replicates: usize,
        /// Risk aversion used in every state when the config samples θ
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        no_meta: bool,
    },
    /// Optimal weight per state and risk aversion
    Tables {
        #[command(flatten)]
        common: Common,
    },
    /// Month-by-month record of a single trial
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// omniscient, robo, investor_only or investor_only_exact
        #[arg(long, default_value = "robo")]
        policy: String,
        /// Output file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_meta: bool,
    },
    /// Print the effective config as canonical JSON
    Config {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(e) if e.is_io() => 2,
            _ => 1,
        }
    }
}

fn load(common: &Common) -> Result<LoadedConfig, CliError> {
    let mut loaded = match &common.config {
        Some(path) => rio::load_config_file(path)?,
        None => LoadedConfig {
            sim: SimConfig::calibrated(),
            sweep: None,
        },
    };
    let sim = &mut loaded.sim;
    if let Some(seed) = common.seed {
        sim.seed = seed;
    }
    if let Some(trials) = common.trials {
        sim.trials = trials;
    }
    if let Some(months) = common.months {
        sim.months = months;
    }
    sim.validate()?;
    Ok(loaded)
}

fn meta(sim: &SimConfig, sweep: Option<&SweepSpec>, no_meta: bool) -> Meta {
    Meta::new(rio::config_hash(sim, sweep), !no_meta)
}

fn parse_delta(text: &str) -> Result<f64, CliError> {
    let bad = || CliError::Usage(format!("cannot parse δ = {text:?}"));
    let value = match text.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            a / b
        }
        None => text.trim().parse().map_err(|_| bad())?,
    };
    Ok(value)
}

fn parse_policy(text: &str, budget: u32) -> Result<PolicyKind, CliError> {
    match text {
        "omniscient" => Ok(PolicyKind::Omniscient),
        "robo" => Ok(PolicyKind::Robo(budget)),
        "investor_only" => Ok(PolicyKind::InvestorOnly { with_mistakes: true }),
        "investor_only_exact" => Ok(PolicyKind::InvestorOnly { with_mistakes: false }),
        other => Err(CliError::Usage(format!("unknown policy {other:?}"))),
    }
}

fn simulate(common: &Common, out: &Path, no_meta: bool) -> Result<(), CliError> {
    let cfg = load(common)?.sim;
    let m = meta(&cfg, None, no_meta);
    let sim = Simulator::new(cfg)?;
    let result = sim.run_experiment(&sim::standard_policies(sim.config().budget));
    let path = out.join("experiment.csv");
    report::write_file(&path, &report::experiment_csv(&result.series, &m))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn sweep(
    common: &Common,
    param: Option<&str>,
    values: Option<Vec<f64>>,
    out: &Path,
    no_meta: bool,
) -> Result<(), CliError> {
    let loaded = load(common)?;
    let parameter: SweepParameter = match (param, &loaded.sweep) {
        (Some(p), _) => p.parse()?,
        (None, Some(s)) => s.parameter,
        (None, None) => return Err(CliError::Usage("--param is required".into())),
    };
    let values = values
        .or_else(|| {
            loaded
                .sweep
                .as_ref()
                .filter(|s| s.parameter == parameter)
                .map(|s| s.values.clone())
        })
        .unwrap_or_else(|| parameter.default_values());
    let spec = SweepSpec { parameter, values };
    let m = meta(&loaded.sim, Some(&spec), no_meta);
    let result = sim::sweep(&loaded.sim, spec.parameter, &spec.values)?;
    let path = out.join(format!("sweep_{}.csv", parameter.name()));
    report::write_file(&path, &report::sweep_csv(&result, &m))?;
    eprintln!("wrote {}", path.display());
    if parameter == SweepParameter::Kappa {
        let path = out.join("sweep_kappa_totals.csv");
        report::write_file(&path, &report::totals_csv(&result, &m))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn bounds_table(
    common: &Common,
    delta: &str,
    replicates: usize,
    theta: Option<f64>,
    no_meta: bool,
) -> Result<(), CliError> {
    let cfg = load(common)?.sim;
    let delta = parse_delta(delta)?;
    let n = cfg.model.num_states();
    let grid = cfg.grid;
    let theta_true = match (&cfg.investor.theta, theta) {
        (_, Some(t)) => vec![t; n],
        (ThetaMode::Fixed(v), None) => v.clone(),
        (ThetaMode::UniformGrid, None) => vec![grid.value(grid.center_index()); n],
    };
    let profile = InvestorProfile {
        theta_true,
        mistake_radius: cfg.investor.mistake_radius,
        cost: cfg.investor.cost,
    };
    profile.validate(&grid, n).map_err(SimError::from)?;
    let tables = build_tables(&cfg.model, &grid, &cfg.weights, cfg.kind).map_err(SimError::from)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::with_capacity(n);
    for s in 0..n {
        let support = profile.mistake_support(&grid, s).map_err(SimError::from)?;
        let sigma2 = support.variance(grid.xi());
        let range = support.range(grid.xi());
        let (stated, proof) = bounds::hoeffding_budget(range, grid.xi(), delta)?;
        let empirical =
            match bounds::empirical_sample_complexity(&profile, &grid, &tables, s, delta, replicates, &mut rng) {
                Ok(v) => Some(v),
                Err(BoundsError::NotReached { .. }) => None,
                Err(e) => return Err(e.into()),
            };
        rows.push(BoundsRow {
            state: s,
            sigma2,
            range,
            chebyshev: bounds::chebyshev_budget(sigma2, grid.xi(), delta)?,
            hoeffding_stated: stated,
            hoeffding_proof: proof,
            empirical,
        });
    }
    let theta_list: Vec<String> = profile.theta_true.iter().map(f64::to_string).collect();
    let m = meta(&cfg, None, no_meta)
        .with("theta", theta_list.join(" "))
        .with("delta", delta)
        .with("replicates", replicates);
    print!("{}", report::bounds_csv(&rows, &m));
    Ok(())
}

fn tables(common: &Common) -> Result<(), CliError> {
    let cfg = load(common)?.sim;
    let tables = build_tables(&cfg.model, &cfg.grid, &cfg.weights, cfg.kind).map_err(SimError::from)?;
    print!("{}", report::tables_csv(&tables));
    Ok(())
}

fn trace(
    common: &Common,
    trial: usize,
    policy: &str,
    out: Option<&Path>,
    no_meta: bool,
) -> Result<(), CliError> {
    let cfg = load(common)?.sim;
    let m = meta(&cfg, None, no_meta).with("trial", trial);
    let policy = parse_policy(policy, cfg.budget)?;
    let sim = Simulator::new(cfg)?;
    let csv = report::trace_csv(&sim.run_trial(policy, trial), &m.with("policy", policy));
    match out {
        Some(path) => report::write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, out, no_meta } => simulate(&common, &out, no_meta),
        Command::Sweep {
            common,
            param,
            values,
            out,
            no_meta,
        } => sweep(&common, param.as_deref(), values, &out, no_meta),
        Command::Bounds {
            common,
            delta,
            replicates,
            theta,
            no_meta,
        } => bounds_table(&common, &delta, replicates, theta, no_meta),
        Command::Tables { common } => tables(&common),
        Command::Trace {
            common,
            trial,
            policy,
            out,
            no_meta,
        } => trace(&common, trial, &policy, out.as_deref(), no_meta),
        Command::Config { common } => {
            let loaded = load(&common)?;
            print!("{}", rio::canonical_json(&loaded.sim, loaded.sweep.as_ref()));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
