use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use snowgraph::harness::{
    export_report, load_runs, run_experiment, run_sweep, split_assignment, transfer_eval, Checkpoint, ExperimentConfig,
    ReportFormat, SweepAxis,
};
use snowgraph::{Error, Result};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "snowgraph", version, about = "Train and evaluate graph policies on chain locomotion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. `--set ppo.epsilon=0.2`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on other chain sizes with mean actions.
    Transfer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "6,8,10,12,14")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one experiment per value along an axis.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise every run record below a directory.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Defaults to the runs directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&PathBuf>, set: &[String], out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for s in set {
        let (k, v) = split_assignment(s)?;
        config.set(k, v)?;
    }
    if out.is_some() {
        config.output_dir = out;
    }
    if config.output_dir.is_none() {
        config.output_dir = Some(PathBuf::from("runs"));
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, set, seed, out } => {
            let mut config = load_config(config.as_ref(), &set, out)?;
            if let Some(s) = seed {
                config.seeds = vec![s];
            }
            let result = run_experiment(&config)?;
            println!("seed\tupdates\ttimesteps\tfinal_reward\tfinal_kl\tfinal_clip\tstatus");
            for o in &result.outcomes {
                let r = &o.record;
                println!(
                    "{}\t{}\t{}\t{:.4}\t{:.6}\t{:.4}\t{}",
                    r.seed,
                    r.rows().len(),
                    r.rows().last().map_or(0, |x| x.timesteps),
                    r.final_reward(),
                    r.final_kl(),
                    r.final_clip_fraction(),
                    r.error.as_deref().unwrap_or("ok")
                );
            }
            if result.outcomes.iter().all(|o| o.record.error.is_some()) {
                let first = result.outcomes[0].record.error.clone().unwrap_or_default();
                return Err(Error::Trainer(format!("every seed failed; first error: {first}")));
            }
            Ok(())
        }
        Command::Transfer {
            checkpoint,
            sizes,
            episodes,
            seed,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let rows = transfer_eval(&ckpt, &sizes, episodes, seed)?;
            println!("n_links\tepisodes\tmean_reward\tstderr");
            for r in rows {
                println!("{}\t{}\t{:.4}\t{:.4}", r.n_links, r.episodes, r.mean_reward, r.stderr);
            }
            Ok(())
        }
        Command::Sweep {
            config,
            set,
            axis,
            values,
            out,
        } => {
            let config = load_config(config.as_ref(), &set, out)?;
            let axis: SweepAxis = axis.parse()?;
            let result = run_sweep(&config, axis, &values)?;
            println!("{axis}\tseeds_ok\tfinal_reward\tfinal_kl\tfinal_clip\tstatus");
            for r in result.summary() {
                println!(
                    "{}\t{}\t{:.4}\t{:.6}\t{:.4}\t{}",
                    r.label,
                    r.seeds_ok,
                    r.final_reward,
                    r.final_kl,
                    r.final_clip_fraction,
                    r.error.as_deref().unwrap_or("ok")
                );
            }
            Ok(())
        }
        Command::Report { runs, format, out } => {
            let format: ReportFormat = format.parse()?;
            let series = load_runs(&runs)?;
            let path = export_report(&series, format, out.as_ref().unwrap_or(&runs))?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}
