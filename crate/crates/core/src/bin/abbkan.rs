//! Command-line front end for the analog KAN experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use abbkan::abb::{BlockKind, OffsetReference};
use abbkan::experiment::{self, Command, ExperimentConfig, RunOutput, TargetName};
use abbkan::kan::BasisKind;
use abbkan::spline::{ControlPoints, Formulation, Scenario, SplineDomain};
use abbkan::{Error, Execution};

#[derive(Parser)]
#[command(
    name = "abbkan",
    version,
    about = "Behavioral simulation of analog KAN splines"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Full-spline error study for reference scenario A, B or C.
    Scenario {
        name: Option<Scenario>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Train a KAN layer with and without spline noise over many seeds.
    Kan {
        #[command(flatten)]
        kan: KanArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the analog pipeline with the 8-bit digital spline.
    Compare {
        #[command(flatten)]
        points: PointArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Relative area and power saving of the rewritten formulation.
    Cost {
        #[command(flatten)]
        weights: WeightArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the analog pipeline for arbitrary control points.
    Sweep {
        #[command(flatten)]
        points: PointArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Itemized block inventory of each formulation.
    Blocks {
        /// canonical or rewritten; both when omitted
        #[arg(long)]
        formulation: Option<Formulation>,
        #[command(flatten)]
        weights: WeightArgs,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sweep samples, or training samples for `kan`.
    #[arg(long)]
    grid: Option<usize>,
    /// Directory for every artifact; otherwise the main one goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML config file; flags win over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Zero every block error.
    #[arg(long)]
    ideal: bool,
    #[arg(long, allow_hyphen_values = true)]
    noise: Option<f64>,
    /// Input domain as lo:hi.
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<SplineDomain>,
    /// Run every task on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct PipelineArgs {
    /// Offset reference of the block errors: signal or span.
    #[arg(long)]
    reference: Option<OffsetReference>,
    /// Bias override as KIND=VALUE, repeatable.
    #[arg(long = "bias", value_parser = parse_bias, allow_hyphen_values = true)]
    bias: Vec<(BlockKind, f64)>,
}

#[derive(Args)]
struct PointArgs {
    /// Control points as p0,p1,p2.
    #[arg(long, allow_hyphen_values = true)]
    points: Option<ControlPoints>,
    #[arg(long)]
    scenario: Option<Scenario>,
}

#[derive(Args)]
struct KanArgs {
    /// square, exp or file
    #[arg(long)]
    target: Option<TargetName>,
    /// x,y samples for `--target file`.
    #[arg(long)]
    target_file: Option<PathBuf>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    splines: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// silu or identity
    #[arg(long)]
    basis: Option<BasisKind>,
}

#[derive(Args)]
struct WeightArgs {
    /// Block weight as KIND=AREA[:POWER], repeatable.
    #[arg(long = "weight", value_parser = parse_weight)]
    weights: Vec<(BlockKind, f64, f64)>,
}

fn parse_bias(s: &str) -> Result<(BlockKind, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected KIND=VALUE")?;
    let kind = k.parse::<BlockKind>().map_err(|e| e.to_string())?;
    let v = v.parse::<f64>().map_err(|e| e.to_string())?;
    Ok((kind, v))
}

fn parse_weight(s: &str) -> Result<(BlockKind, f64, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected KIND=AREA[:POWER]")?;
    let kind = k.parse::<BlockKind>().map_err(|e| e.to_string())?;
    let (a, p) = v.split_once(':').unwrap_or((v, v));
    let a = a.parse::<f64>().map_err(|e| e.to_string())?;
    let p = p.parse::<f64>().map_err(|e| e.to_string())?;
    Ok((kind, a, p))
}

impl Common {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.grid.is_some() {
            cfg.grid = self.grid;
        }
        if self.ideal {
            cfg.ideal = true;
        }
        if self.noise.is_some() {
            cfg.noise = self.noise;
        }
        if self.domain.is_some() {
            cfg.domain = self.domain;
        }
    }
}

impl PipelineArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(r) = self.reference {
            cfg.reference = r;
        }
        cfg.bias.extend(self.bias.iter().copied());
    }
}

impl PointArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if self.scenario.is_some() {
            cfg.scenario = self.scenario;
            cfg.points = None;
        }
        if self.points.is_some() {
            cfg.points = self.points;
        }
    }
}

impl KanArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let k = &mut cfg.kan;
        if let Some(t) = self.target {
            k.target = t;
        }
        if self.target_file.is_some() {
            k.target_file = self.target_file.clone();
        }
        if let Some(n) = self.seeds {
            k.seeds = n;
        }
        if let Some(n) = self.splines {
            k.splines = n;
        }
        if let Some(n) = self.max_iters {
            k.max_iters = n;
        }
        if let Some(lr) = self.learning_rate {
            k.learning_rate = lr;
        }
        if let Some(b) = self.basis {
            k.basis = b;
        }
    }
}

impl WeightArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        for &(kind, a, p) in &self.weights {
            cfg.cost = std::mem::take(&mut cfg.cost).with_weight(kind, a, p);
        }
    }
}

fn write_artifacts(out: &RunOutput, dir: Option<&Path>) -> Result<(), Error> {
    let io = |e: std::io::Error| Error::Config(e.to_string());
    match dir {
        None => print!("{}", out.primary().contents),
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io)?;
            for a in &out.artifacts {
                let path = dir.join(&a.name);
                std::fs::write(&path, &a.contents).map_err(io)?;
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    let (command, common) = match &cli.command {
        Cmd::Scenario { common, .. } => (Command::Scenario, common),
        Cmd::Kan { common, .. } => (Command::Kan, common),
        Cmd::Compare { common, .. } => (Command::Compare, common),
        Cmd::Cost { common, .. } => (Command::Cost, common),
        Cmd::Sweep { common, .. } => (Command::Sweep, common),
        Cmd::Blocks { common, .. } => (Command::Blocks, common),
    };
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    common.apply(&mut cfg);
    match &cli.command {
        Cmd::Scenario { name, pipeline, .. } => {
            if name.is_some() {
                cfg.scenario = *name;
            }
            pipeline.apply(&mut cfg);
        }
        Cmd::Kan { kan, .. } => kan.apply(&mut cfg),
        Cmd::Compare {
            points, pipeline, ..
        }
        | Cmd::Sweep {
            points, pipeline, ..
        } => {
            points.apply(&mut cfg);
            pipeline.apply(&mut cfg);
        }
        Cmd::Cost { weights, .. } => weights.apply(&mut cfg),
        Cmd::Blocks {
            formulation,
            weights,
            ..
        } => {
            if formulation.is_some() {
                cfg.formulation = *formulation;
            }
            weights.apply(&mut cfg);
        }
    }
    let exec = if common.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let out = experiment::run(command, cfg, exec)?;
    write_artifacts(&out, common.out.as_deref())
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
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(experiment::exit_code(&e) as u8)
        }
    }
}
