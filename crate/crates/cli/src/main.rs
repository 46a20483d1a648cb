//! Command-line front end for prefix adder optimization.

mod config;
mod error;
mod jobs;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prefixopt::eval::{build_evaluator, EvalConfig, EvalMode};
use prefixopt::netlist::{emit_with, graph_json_from_header, Polarity};
use prefixopt::qfunc::ModelConfig;
use prefixopt::train::ENUMERATION_LIMIT;
use prefixopt::{PrefixGraph, ScalarWeight};

use config::{apply_evaluator_env, parse_mode, FileConfig};
use error::CliError;
use manifest::{Job, RunManifest};

#[derive(Parser)]
#[command(name = "prefixopt", version, about = "Search for area/delay-efficient parallel prefix adders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct EvalFlags {
    /// TOML file with [eval], [train], [model] and [anneal] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cost model: analytical or external.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<EvalMode>,
    /// Comma-separated delay targets for the external evaluator.
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<f64>>,
    /// Persistent evaluation cache file.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a Q-function with double DQN.
    Train {
        #[command(flatten)]
        eval: EvalFlags,
        #[arg(long)]
        n: Option<usize>,
        /// Total environment steps.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Scalarization weight as `area,delay`.
        #[arg(long, value_parser = parse_weight)]
        w: Option<ScalarWeight>,
        #[arg(long)]
        lr: Option<f64>,
        /// Use a lookup table with this step size instead of the network.
        #[arg(long)]
        tabular: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulated annealing baseline.
    Anneal {
        #[command(flatten)]
        eval: EvalFlags,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_weight)]
        w: Option<ScalarWeight>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate every legal graph of a small width.
    Enumerate {
        #[command(flatten)]
        eval: EvalFlags,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = ENUMERATION_LIMIT)]
        limit: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the regular structures.
    Baselines {
        #[command(flatten)]
        eval: EvalFlags,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge archives into one front, optionally comparing them.
    Pareto {
        #[arg(long = "archive", required = true, num_args = 1..)]
        archives: Vec<PathBuf>,
        #[arg(long)]
        compare: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the cost of one graph.
    Eval {
        #[command(flatten)]
        eval: EvalFlags,
        /// Graph JSON, or a netlist carrying one in its header.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_parser = parse_weight)]
        w: Option<ScalarWeight>,
    },
    /// Write the gate-level netlist of a graph.
    EmitNetlist {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_polarity, default_value = "monotone")]
        polarity: Polarity,
    },
    /// Repeat a recorded job.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        /// Write outputs here instead of the recorded directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_weight(s: &str) -> Result<ScalarWeight, String> {
    let (a, d) = s.split_once(',').ok_or("expected `area,delay`")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let d: f64 = d.trim().parse().map_err(|e| format!("{e}"))?;
    ScalarWeight::new(a, d).map_err(|e| e.to_string())
}

fn parse_polarity(s: &str) -> Result<Polarity, String> {
    match s {
        "monotone" => Ok(Polarity::Monotone),
        "inverting" => Ok(Polarity::Inverting),
        _ => Err(format!("unknown polarity `{s}`")),
    }
}

impl EvalFlags {
    fn file(&self) -> Result<FileConfig, CliError> {
        FileConfig::load(self.config.as_deref())
    }

    fn apply(&self, eval: &mut EvalConfig) {
        apply_evaluator_env(eval);
        if let Some(m) = self.mode {
            eval.mode = m;
        }
        if let Some(t) = &self.targets {
            eval.delay_targets = t.clone();
        }
        if let Some(c) = &self.cache {
            eval.cache_path = Some(c.clone());
        }
    }

    fn resolve(&self) -> Result<(FileConfig, EvalConfig), CliError> {
        let file = self.file()?;
        let mut eval = file.eval.clone();
        self.apply(&mut eval);
        eval.validate()?;
        Ok((file, eval))
    }
}

fn read_graph(path: &Path) -> Result<PrefixGraph, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let json = if text.trim_start().starts_with('{') {
        text.as_str()
    } else {
        graph_json_from_header(&text)
            .ok_or_else(|| CliError::Graph(format!("{}: no graph found in netlist header", path.display())))?
    };
    Ok(PrefixGraph::from_json(json)?)
}

fn run(cmd: Command) -> Result<(), CliError> {
    let job = match cmd {
        Command::Train { eval, n, steps, seed, w, lr, tabular, out } => {
            let (file, eval) = eval.resolve()?;
            let mut train = file.train;
            if let Some(n) = n {
                train.n = n;
            }
            if let Some(s) = steps {
                train.total_steps = s;
            }
            if let Some(s) = seed {
                train.seed = s;
            }
            if let Some(w) = w {
                train.w = w;
            }
            if let Some(lr) = lr {
                train.learning_rate = lr;
            }
            let model = tabular.map_or(file.model, |alpha| ModelConfig::Tabular { alpha });
            Job::Train { eval, train, model, out }
        }
        Command::Anneal { eval, n, steps, seed, w, out } => {
            let (file, eval) = eval.resolve()?;
            let mut anneal = file.anneal;
            if let Some(n) = n {
                anneal.n = n;
            }
            if let Some(s) = steps {
                anneal.total_steps = s;
            }
            if let Some(s) = seed {
                anneal.seed = s;
            }
            if let Some(w) = w {
                anneal.w = w;
            }
            Job::Anneal { eval, anneal, out }
        }
        Command::Enumerate { eval, n, limit, out } => Job::Enumerate { eval: eval.resolve()?.1, n, limit, out },
        Command::Baselines { eval, n, out } => Job::Baselines { eval: eval.resolve()?.1, n, out },
        Command::Pareto { archives, compare, out } => Job::Pareto { archives, compare, out },
        Command::Eval { eval, graph, w } => {
            let (_, cfg) = eval.resolve()?;
            let g = read_graph(&graph)?;
            let evaluator = build_evaluator(&cfg)?;
            let c = evaluator.cost(&g, w.unwrap_or_default())?;
            println!("area {} delay {}", c.area, c.delay);
            return Ok(());
        }
        Command::EmitNetlist { graph, out, polarity } => {
            let g = read_graph(&graph)?;
            std::fs::write(&out, emit_with(&g, polarity).to_verilog())?;
            return Ok(());
        }
        Command::Run { manifest, out } => {
            let mut job = RunManifest::read(&manifest)?.job;
            if let Some(dir) = out {
                job.set_out(dir);
            }
            job
        }
    };
    let job = job.canonical()?;
    log::info!("running {} into {}", job.name(), job.out().display());
    jobs::execute(job)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
