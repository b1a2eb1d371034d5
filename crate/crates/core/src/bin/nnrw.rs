use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nnrw::costing::CostReport;
use nnrw::data::load_delimited;
use nnrw::format::{load_model, save_model};
use nnrw::harness::{self, DataSource, EmitOptions, ExperimentConfig, RunOptions, TauSelection};
use nnrw::pairing::{build_pairing_plan, pair_count};
use nnrw::solver::train;
use nnrw::{Delimiter, DesignSpec, LabelColumn, ModelConfig};

/// Neural networks with random weights: training, evaluation and benchmark sweeps.
#[derive(Parser)]
#[command(name = "nnrw", version)]
struct Cli {
    /// Worker threads for trials and linear algebra.
    #[arg(long, global = true, env = "NNRW_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataFormat {
    #[arg(long, default_value = "last")]
    label_col: LabelColumn,
    #[arg(long, default_value = "comma")]
    delim: Delimiter,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network from a model config and save it.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        format: DataFormat,
    },
    /// Report the test accuracy of a saved model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        format: DataFormat,
    },
    /// Run every grid entry of an experiment config and write the CSV report.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fill the train_seconds column (makes the report non-reproducible).
        #[arg(long)]
        timings: bool,
        #[arg(long)]
        quiet: bool,
    },
    /// Pick M from the config's baseline grid entries and derive tau and P.
    TauSelect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Count (and optionally list) the secondary units for P and tau.
    Pairs {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        tau: usize,
        #[arg(long)]
        list: bool,
    },
    /// Inference cost of both designs.
    Cost {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        p: u64,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        q: u64,
    },
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        bail!("thread count must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring thread pool")?;
    faer::set_global_parallelism(if n == 1 {
        faer::Par::Seq
    } else {
        faer::Par::rayon(n)
    });
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Train {
            config,
            data,
            out: model_path,
            format,
        } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let config = ModelConfig::from_toml(&text)?;
            let dataset = load_delimited(&data, format.label_col, format.delim)?;
            let started = Instant::now();
            let network = train(&config, &dataset)?;
            let seconds = started.elapsed().as_secs_f64();
            let output = network.output().expect("trained network has output weights");
            eprintln!("method={}", output.method);
            eprintln!("lambda={}", output.lambda_used);
            for kv in output.diagnostics.key_values() {
                eprintln!("{kv}");
            }
            eprintln!("hidden_width={}", network.hidden_width());
            eprintln!("train_seconds={seconds:.3}");
            let acc = network.accuracy(dataset.features(), dataset.labels())?;
            eprintln!("train_accuracy={acc:.4}");
            save_model(&network, &model_path)?;
        }
        Command::Eval { model, data, format } => {
            let network = load_model(&model)?;
            let dataset = load_delimited(&data, format.label_col, format.delim)?;
            let acc = network.accuracy(dataset.features(), dataset.labels())?;
            writeln!(out, "accuracy={acc:.4}")?;
        }
        Command::Sweep {
            config,
            out: report_path,
            timings,
            quiet,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let report = harness::sweep(&config, RunOptions { progress: !quiet })?;
            harness::emit_report(&report, &report_path, EmitOptions { timings })?;
        }
        Command::TauSelect { config, quiet } => {
            let config = ExperimentConfig::load(&config)?;
            let grid: Vec<usize> = config
                .grid
                .iter()
                .filter_map(|d| match *d {
                    DesignSpec::Baseline { m } => Some(m),
                    DesignSpec::Efficient { .. } => None,
                })
                .collect();
            if grid.is_empty() {
                bail!("config has no baseline grid entries");
            }
            let source = DataSource::load(&config.data)?;
            let TauSelection { m_star, tau, p_units, .. } = harness::tau_procedure(
                &source,
                &grid,
                &config.settings(),
                config.trials,
                config.base_seed,
                RunOptions { progress: !quiet },
            )?;
            writeln!(out, "M_star,tau,P,M")?;
            writeln!(out, "{m_star},{tau},{p_units},{}", pair_count(p_units, tau)?)?;
        }
        Command::Pairs { p, tau, list } => {
            let plan = build_pairing_plan(p, tau)?;
            writeln!(out, "{}", plan.len())?;
            if list {
                writeln!(out, "k,i,j")?;
                for (k, (i, j)) in plan.pairs().iter().enumerate() {
                    writeln!(out, "{k},{i},{j}")?;
                }
            }
        }
        Command::Cost { n, p, m, q } => {
            writeln!(out, "N,P,M,Q,efficient_macs,baseline_macs,reduction_percent")?;
            writeln!(out, "{}", CostReport::new(n, p, m, q)?.csv_line())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
