use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cfep::config::{GraphKind, RunConfig, UpdateMode};
use cfep::sim::{aggregate_and_emit, run_estimator_suite, to_csv, trace_job};
use cfep::trace::JsonLinesSink;

#[derive(Parser)]
#[command(name = "cfep", version, about = "Decentralized EP channel estimation for cell-free massive MIMO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// TOML run configuration; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<UpdateMode>,
    #[arg(long, value_enum)]
    graph: Option<GraphKind>,
    /// Overrides scenario.realizations
    #[arg(long)]
    realizations: Option<usize>,
}

impl Overrides {
    fn load(&self) -> cfep::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.algorithm.mode = m;
        }
        if let Some(g) = self.graph {
            cfg.algorithm.graph = g;
        }
        if let Some(r) = self.realizations {
            cfg.scenario.realizations = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every estimator over the power sweep and write the CSV summary
    Run {
        #[command(flatten)]
        opts: Overrides,
        /// CSV output; printed to stdout when neither this nor output.csv is set
        #[arg(long)]
        out: Option<PathBuf>,
        /// SVG plot of NMSE versus transmit power
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Parse and check a configuration file
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the proposed estimator on one realization and dump its messages
    Trace {
        #[command(flatten)]
        opts: Overrides,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        power: f64,
        #[arg(long, default_value_t = 0)]
        realization: usize,
        /// JSON-lines file for factor-to-variable messages
        #[arg(long)]
        messages: Option<PathBuf>,
        /// JSON-lines file for inter-AP envelopes
        #[arg(long)]
        envelopes: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> cfep::Result<()> {
    match cli.command {
        Command::Validate { config } => {
            RunConfig::from_file(&config)?;
            println!("{}: ok", config.display());
        }
        Command::Run { opts, out, plot } => {
            let cfg = opts.load()?;
            let suite = run_estimator_suite(&cfg)?;
            for f in &suite.failures {
                eprintln!(
                    "realization {} at {} dBm failed: {}",
                    f.realization, f.tx_power_dbm, f.message
                );
            }
            let jobs = cfg.sweep.tx_power_dbm.len() * cfg.scenario.realizations;
            eprintln!("{} of {} jobs completed", suite.completed_jobs(), jobs);
            let csv = out.or(cfg.output.csv.clone());
            let plot = plot.or(cfg.output.plot.clone());
            let summaries = aggregate_and_emit(&suite.records, csv.as_deref(), plot.as_deref())?;
            if csv.is_none() {
                print!("{}", to_csv(&summaries));
            }
            if cfg.output.message_trace.is_some() || cfg.output.envelope_trace.is_some() {
                let mut sink = JsonLinesSink::create(
                    cfg.output.message_trace.as_deref(),
                    cfg.output.envelope_trace.as_deref(),
                )?;
                trace_job(&cfg, cfg.sweep.tx_power_dbm[0], 0, &mut sink)?;
                flush(sink)?;
            }
        }
        Command::Trace {
            opts,
            power,
            realization,
            messages,
            envelopes,
        } => {
            let cfg = opts.load()?;
            let messages = messages.or(cfg.output.message_trace.clone());
            let envelopes = envelopes.or(cfg.output.envelope_trace.clone());
            let mut sink = JsonLinesSink::create(messages.as_deref(), envelopes.as_deref())?;
            let rec = trace_job(&cfg, power, realization, &mut sink)?;
            flush(sink)?;
            println!(
                "nmse={:.6e} ser={:.4} iterations={} clamps={}",
                rec.nmse,
                rec.ser.unwrap_or(f64::NAN),
                rec.iterations,
                rec.clamps
            );
        }
    }
    Ok(())
}

fn flush(sink: JsonLinesSink<std::io::BufWriter<std::fs::File>>) -> cfep::Result<()> {
    use std::io::Write;
    let (m, e) = sink.into_inner();
    for w in [m, e].into_iter().flatten() {
        w.into_inner()
            .map_err(|e| cfep::Error::InvalidArgument(e.to_string()))?
            .flush()
            .map_err(|e| cfep::Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
