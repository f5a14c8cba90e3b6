use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use edgecache::asp::{asp, compute_constants, optimal_placement, DEFAULT_QUAD_TOL};
use edgecache::data::{generate_iid_stream_with, generate_quasi_stream, read_profiles_csv, write_profiles_csv, IidOptions};
use edgecache::domain::ZipfSpec;
use edgecache::error::{Error, Result};
use edgecache::harness::{
    emit_outputs, emit_sweep_outputs, run_experiment, run_sweep, summary_text, ExperimentConfig, Scenario, SweepAxis,
};

#[derive(Parser)]
#[command(name = "edgecache", version, about = "Popularity prediction and cache placement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML config; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv, summary.txt and charts.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Repeat the experiment over values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// tau, n or s
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run the experiment on a ratings file.
    Movielens {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        slot_days: f64,
    },
    /// Print the optimal caching probabilities for each profile row.
    Placement {
        /// CSV with `slot,file_1..file_N` rows or bare probability rows.
        #[arg(long)]
        profile: PathBuf,
        /// Cache size.
        #[arg(long = "L")]
        cache_size: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a synthetic profile stream as CSV.
    Generate {
        #[arg(long, default_value = "time-varying")]
        scenario: String,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 1.5)]
        s: f64,
        #[arg(long, default_value_t = 100)]
        slots: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Shuffle Zipf ranks in every slot.
        #[arg(long)]
        permute: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(runs) = common.runs {
        cfg.runs = runs;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common } => {
            let cfg = load_config(&common)?;
            if cfg.sweep != SweepAxis::None {
                let result = run_sweep(&cfg, cfg.sweep, &cfg.sweep_values)?;
                report(&emit_sweep_outputs(&result, &cfg.out_dir)?);
                return Ok(());
            }
            let result = run_experiment(&cfg)?;
            print!("{}", summary_text(&result));
            report(&emit_outputs(&result, &cfg.out_dir)?);
        }
        Command::Sweep { common, axis, values } => {
            let cfg = load_config(&common)?;
            let result = run_sweep(&cfg, axis, &values)?;
            report(&emit_sweep_outputs(&result, &cfg.out_dir)?);
        }
        Command::Movielens { common, ratings, slot_days } => {
            let mut cfg = load_config(&common)?;
            cfg.scenario = Scenario::Movielens;
            cfg.ratings = Some(ratings);
            cfg.slot_days = slot_days;
            cfg.n_files = (cfg.id_hi - cfg.id_lo + 1) as usize;
            let result = run_experiment(&cfg)?;
            print!("{}", summary_text(&result));
            report(&emit_outputs(&result, &cfg.out_dir)?);
        }
        Command::Placement { profile, cache_size, config } => {
            let base = match config {
                Some(path) => ExperimentConfig::from_file(&path)?,
                None => ExperimentConfig::default(),
            };
            let profiles = read_profiles_csv(std::fs::File::open(&profile)?)?;
            let mut net = base.network();
            net.cache_size = cache_size;
            net.validate(profiles[0].len()).map_err(|e| Error::Config { field: "L".into(), message: e.to_string() })?;
            let k = compute_constants(&net, DEFAULT_QUAD_TOL)?;
            for (t, p) in profiles.iter().enumerate() {
                let policy = optimal_placement(p, cache_size, &k)?;
                let q: Vec<String> = policy.q.iter().map(|v| format!("{v:.9}")).collect();
                println!("slot {t}: q = [{}] asp = {:.9}", q.join(", "), asp(p, &policy.q, &k)?);
            }
        }
        Command::Generate { scenario, n, s, slots, seed, permute, out } => {
            let zipf = ZipfSpec::new(n, s)?;
            let profiles = match scenario.as_str() {
                "time-varying" => generate_iid_stream_with(zipf, slots, IidOptions { permute, ..IidOptions::default() }, seed)?,
                "quasi" => {
                    let d = 4;
                    let block_len = 200;
                    generate_quasi_stream(d, block_len, slots.div_ceil(block_len), zipf, seed)?.profiles
                }
                other => {
                    return Err(Error::Config { field: "scenario".into(), message: format!("unknown scenario {other:?}") })
                }
            };
            match out {
                Some(path) => write_profiles_csv(&profiles, std::fs::File::create(&path)?)?,
                None => write_profiles_csv(&profiles, std::io::stdout().lock())?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
