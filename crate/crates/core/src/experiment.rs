//! Experiment runners behind the `abbkan` command-line tool.
//!
//! A runner takes a resolved [`ExperimentConfig`] and returns its artifacts
//! as strings. Every CSV starts with `#` comment lines echoing the tool
//! version, command, seed and full config; every JSON summary carries the
//! same fields. Nothing here touches the filesystem except loading config
//! and target files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::abb::{block_specs, default_error_table, BlockKind, ErrorTable, OffsetReference};
use crate::cost::{
    relative_savings, spline_block_report, CostModel, REPORTED_AREA_SAVING, REPORTED_POWER_SAVING,
};
use crate::digital::compare_analog_digital;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kan::{train, BasisKind, Target, TrainConfig, TrainReport, DEFAULT_SPLINE_NOISE};
use crate::metrics::{self, median, Sweep, DEFAULT_GRID};
use crate::rng::derive_seed;
use crate::spline::{
    check_constraints, count_blocks, AnalogSplinePipeline, ControlPoints, Formulation, Scenario,
    SplineDomain,
};
use crate::VERSION;

/// Training grid used by `kan` when no grid is given.
pub const DEFAULT_TRAIN_GRID: usize = 256;
/// Seeds per `kan` run when none is given.
pub const DEFAULT_SEED_COUNT: usize = 20;

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Shape(_) | Error::Domain { .. } | Error::Arity { .. } => 1,
        Error::Infeasible(_) | Error::RangeViolation { .. } => 2,
        Error::DegenerateRange
        | Error::DegenerateCost(_)
        | Error::Projection(_)
        | Error::Divergence { .. } => 3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Scenario,
    Kan,
    Compare,
    Cost,
    Sweep,
    Blocks,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Scenario => "scenario",
            Command::Kan => "kan",
            Command::Compare => "compare",
            Command::Cost => "cost",
            Command::Sweep => "sweep",
            Command::Blocks => "blocks",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetName {
    #[default]
    Square,
    Exp,
    /// Samples read from `target_file`.
    File,
}

impl std::str::FromStr for TargetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "square" => Ok(TargetName::Square),
            "exp" => Ok(TargetName::Exp),
            "file" => Ok(TargetName::File),
            _ => Err(Error::Config(format!(
                "unknown target `{s}` (expected square, exp or file)"
            ))),
        }
    }
}

/// KAN training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KanSettings {
    pub target: TargetName,
    pub target_file: Option<PathBuf>,
    pub seeds: usize,
    pub splines: usize,
    pub max_iters: usize,
    pub learning_rate: f64,
    pub basis: BasisKind,
}

impl Default for KanSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            target: TargetName::Square,
            target_file: None,
            seeds: DEFAULT_SEED_COUNT,
            splines: t.n_splines,
            max_iters: t.max_iters,
            learning_rate: t.learning_rate,
            basis: t.basis,
        }
    }
}

/// Everything a run depends on. Loaded from TOML, then overridden by
/// command-line flags, then resolved so the echo holds concrete values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid: Option<usize>,
    /// Zero every block error.
    pub ideal: bool,
    /// Block noise factor for pipeline runs; spline noise factor for `kan`.
    pub noise: Option<f64>,
    pub domain: Option<SplineDomain>,
    pub reference: OffsetReference,
    pub scenario: Option<Scenario>,
    pub points: Option<ControlPoints>,
    /// `None` reports both formulations.
    pub formulation: Option<Formulation>,
    /// Per-kind bias overrides on top of the measured table.
    pub bias: BTreeMap<BlockKind, f64>,
    pub kan: KanSettings,
    pub cost: CostModel,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            grid: None,
            ideal: false,
            noise: None,
            domain: None,
            reference: OffsetReference::Signal,
            scenario: None,
            points: None,
            formulation: None,
            bias: BTreeMap::new(),
            kan: KanSettings::default(),
            cost: CostModel::uniform(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fill command-specific defaults.
    pub fn resolve(mut self, command: Command) -> Result<Self> {
        let kan = command == Command::Kan;
        self.grid.get_or_insert(if kan {
            DEFAULT_TRAIN_GRID
        } else {
            DEFAULT_GRID
        });
        self.noise
            .get_or_insert(if kan { DEFAULT_SPLINE_NOISE } else { 0.0 });
        self.domain.get_or_insert(SplineDomain::RAIL);
        match command {
            // a named scenario pins its points so the echo shows them
            Command::Scenario if self.scenario.is_some() => {
                self.points = self.scenario.map(Scenario::points);
            }
            Command::Compare | Command::Sweep if self.points.is_none() => {
                self.points = self.scenario.map(Scenario::points);
            }
            _ => {}
        }
        if self.grid < Some(2) {
            return Err(Error::Config("grid must be at least 2".into()));
        }
        if !self.noise.is_some_and(f64::is_finite) {
            return Err(Error::Config("noise must be finite".into()));
        }
        self.cost.validate()?;
        Ok(self)
    }

    fn grid_size(&self) -> usize {
        self.grid.unwrap_or(DEFAULT_GRID)
    }

    fn noise_factor(&self) -> f64 {
        self.noise.unwrap_or(0.0)
    }

    fn sweep_domain(&self) -> Result<SplineDomain> {
        let d = self.domain.unwrap_or(SplineDomain::RAIL);
        if d.lo() < SplineDomain::RAIL.lo() || d.hi() > SplineDomain::RAIL.hi() {
            return Err(Error::Config(format!(
                "pipeline domain {d} must lie within the rails {}",
                SplineDomain::RAIL
            )));
        }
        Ok(d)
    }

    /// Block error table implied by `ideal`, `bias`, `reference`, `noise`
    /// and `seed`.
    pub fn error_table(&self) -> Result<ErrorTable> {
        if self.ideal {
            return Ok(ErrorTable::IDEAL);
        }
        let mut table = default_error_table()
            .with_reference(self.reference)
            .with_noise(self.noise_factor())
            .with_seed(self.seed);
        for (&k, &b) in &self.bias {
            table.get_mut(k).nmpe_bias = b;
        }
        table.validate()?;
        Ok(table)
    }

    fn feasible_points(&self) -> Result<ControlPoints> {
        let p = self.points.ok_or_else(|| {
            Error::Config("control points required (--points or --scenario)".into())
        })?;
        let report = check_constraints(&p);
        if !report.is_empty() {
            return Err(Error::Infeasible(format!("{p}: {report}")));
        }
        Ok(p)
    }

    fn target(&self) -> Result<Target> {
        match self.kan.target {
            TargetName::Square => Ok(Target::Square),
            TargetName::Exp => Ok(Target::Exp),
            TargetName::File => {
                let path = self
                    .kan
                    .target_file
                    .as_ref()
                    .ok_or_else(|| Error::Config("target `file` needs target_file".into()))?;
                load_target(path)
            }
        }
    }
}

/// Read `x,y` samples. Blank lines, `#` comments and a non-numeric header
/// line are skipped.
pub fn load_target(path: &Path) -> Result<Target> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_target(&text)
}

pub fn parse_target(text: &str) -> Result<Target> {
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (Some(x), Some(y)) = (cols.next(), cols.next()) else {
            return Err(Error::Config(format!(
                "target line {}: expected x,y",
                i + 1
            )));
        };
        match (x.parse::<f64>(), y.parse::<f64>()) {
            (Ok(x), Ok(y)) => samples.push((x, y)),
            _ if samples.is_empty() && i == 0 => continue,
            _ => return Err(Error::Config(format!("target line {}: not numeric", i + 1))),
        }
    }
    Target::tabulated(samples)
}

/// One named output of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Artifacts of a run. The first is what the CLI prints when no output
/// directory is given.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
}

impl RunOutput {
    pub fn primary(&self) -> &Artifact {
        &self.artifacts[0]
    }

    pub fn get(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

/// CSV table preceded by `#` lines echoing version, command, seed and
/// config.
struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    fn new(command: Command, cfg: &ExperimentConfig, columns: &[&str]) -> Result<Self> {
        let config = serde_json::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
        let mut head = String::new();
        let _ = writeln!(head, "# abbkan {VERSION}");
        let _ = writeln!(head, "# command: {}", command.name());
        let _ = writeln!(head, "# seed: {}", cfg.seed);
        let _ = writeln!(head, "# config: {config}");
        let writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(head.into_bytes());
        let mut csv = Self { writer };
        csv.row(columns);
        Ok(csv)
    }

    fn row<S: AsRef<[u8]>>(&mut self, cells: &[S]) {
        // writes go to memory and cannot fail
        self.writer
            .write_record(cells)
            .expect("in-memory CSV write");
    }

    fn finish(self, name: String) -> Artifact {
        let bytes = self.writer.into_inner().expect("in-memory CSV flush");
        Artifact {
            name,
            contents: String::from_utf8(bytes).expect("CSV built from UTF-8"),
        }
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn summary(
    command: Command,
    cfg: &ExperimentConfig,
    results: Value,
    name: String,
) -> Result<Artifact> {
    let doc = json!({
        "artifact": "abbkan",
        "version": VERSION,
        "command": command.name(),
        "seed": cfg.seed,
        "config": cfg,
        "results": results,
    });
    let mut contents =
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))?;
    contents.push('\n');
    Ok(Artifact { name, contents })
}

fn formulation_name(f: Formulation) -> &'static str {
    match f {
        Formulation::Canonical => "canonical",
        Formulation::Rewritten => "rewritten",
    }
}

struct PipelineSweep {
    points: ControlPoints,
    sweep: Sweep,
    abs_err: Vec<f64>,
}

fn pipeline_sweep(cfg: &ExperimentConfig, points: ControlPoints) -> Result<PipelineSweep> {
    let xs = cfg.sweep_domain()?.grid(cfg.grid_size());
    let mut pipeline = AnalogSplinePipeline::new(points, cfg.error_table()?)?;
    let rows = pipeline.sweep(&xs)?;
    let abs_err = rows.iter().map(|r| r.abs_err).collect();
    let sweep = Sweep::new(
        xs,
        rows.iter().map(|r| r.ideal).collect(),
        rows.iter().map(|r| r.analog).collect(),
    )?;
    Ok(PipelineSweep {
        points,
        sweep,
        abs_err,
    })
}

fn sweep_csv(
    cmd: Command,
    cfg: &ExperimentConfig,
    s: &PipelineSweep,
    name: String,
) -> Result<Artifact> {
    let mut csv = Csv::new(cmd, cfg, &["x", "ideal", "analog", "abs_err"])?;
    for i in 0..s.sweep.len() {
        csv.row(&[
            num(s.sweep.xs()[i]),
            num(s.sweep.reference()[i]),
            num(s.sweep.approximation()[i]),
            num(s.abs_err[i]),
        ]);
    }
    Ok(csv.finish(name))
}

fn sweep_results(s: &PipelineSweep) -> Result<Value> {
    Ok(json!({
        "points": s.points,
        "nmpe": metrics::nmpe(&s.sweep)?,
        "max_abs_error": metrics::max_abs_error(&s.sweep),
        "rmse": metrics::rmse(&s.sweep),
        "samples": s.sweep.len(),
    }))
}

/// Full-spline error study for one reference scenario.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let cmd = Command::Scenario;
    let scenario = cfg
        .scenario
        .ok_or_else(|| Error::Config("scenario name required (A, B or C)".into()))?;
    let s = pipeline_sweep(cfg, scenario.points())?;
    let mut results = sweep_results(&s)?;
    results["scenario"] = json!(scenario.name());
    results["measured_nmpe"] = json!(scenario.measured_nmpe());
    let stem = format!("scenario_{}", scenario.name());
    Ok(RunOutput {
        artifacts: vec![
            summary(cmd, cfg, results, format!("{stem}.json"))?,
            sweep_csv(cmd, cfg, &s, format!("{stem}.csv"))?,
        ],
    })
}

/// Analog pipeline sweep for arbitrary feasible control points.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let cmd = Command::Sweep;
    let s = pipeline_sweep(cfg, cfg.feasible_points()?)?;
    Ok(RunOutput {
        artifacts: vec![
            sweep_csv(cmd, cfg, &s, "sweep.csv".into())?,
            summary(cmd, cfg, sweep_results(&s)?, "sweep.json".into())?,
        ],
    })
}

/// Analog pipeline against the 8-bit digital spline.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let cmd = Command::Compare;
    let points = cfg.feasible_points()?;
    let grid = cfg.sweep_domain()?.grid(cfg.grid_size());
    let report = compare_analog_digital(&points, &cfg.error_table()?, &grid)?;

    let mut csv = Csv::new(
        cmd,
        cfg,
        &[
            "x_code",
            "x_value",
            "oracle",
            "digital",
            "analog",
            "digital_err",
            "analog_err",
        ],
    )?;
    for r in &report.codes {
        csv.row(&[
            r.x_code.to_string(),
            num(r.x_value),
            num(r.oracle),
            num(r.digital),
            opt(r.analog),
            num(r.digital_error()),
            opt(r.analog_error()),
        ]);
    }
    let results = json!({
        "points": points,
        "nmpe_analog": report.nmpe_analog,
        "nmpe_digital": report.nmpe_digital,
        "max_abs_analog": report.max_abs_analog,
        "max_abs_digital": report.max_abs_digital,
        "max_abs_digital_all_codes": report.max_abs_digital_all_codes,
        "codes": report.codes.len(),
        "grid": grid.len(),
    });
    Ok(RunOutput {
        artifacts: vec![
            summary(cmd, cfg, results, "compare.json".into())?,
            csv.finish("compare.csv".into()),
        ],
    })
}

/// Relative area and power saving of the rewritten form.
pub fn run_cost(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let cmd = Command::Cost;
    let uniform = relative_savings(&CostModel::uniform())?;
    let weighted = relative_savings(&cfg.cost)?;
    let (ca, cp) = cfg.cost.cost(Formulation::Canonical);
    let (ra, rp) = cfg.cost.cost(Formulation::Rewritten);
    let results = json!({
        "blocks": {
            "canonical": count_blocks(Formulation::Canonical).total,
            "rewritten": count_blocks(Formulation::Rewritten).total,
        },
        "uniform_saving": uniform,
        "weighted_saving": weighted,
        "weighted_cost": {
            "canonical": { "area": ca, "power": cp },
            "rewritten": { "area": ra, "power": rp },
        },
        "reported_saving": { "area": REPORTED_AREA_SAVING, "power": REPORTED_POWER_SAVING },
        "gap_to_reported": {
            "area": REPORTED_AREA_SAVING - weighted.area,
            "power": REPORTED_POWER_SAVING - weighted.power,
        },
    });
    Ok(RunOutput {
        artifacts: vec![summary(cmd, cfg, results, "cost.json".into())?],
    })
}

/// Itemized block inventory of one or both formulations.
pub fn run_blocks(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let cmd = Command::Blocks;
    let forms = match cfg.formulation {
        Some(f) => vec![f],
        None => vec![Formulation::Canonical, Formulation::Rewritten],
    };
    let mut csv = Csv::new(
        cmd,
        cfg,
        &["formulation", "stage", "kind", "count", "area", "power"],
    )?;
    let mut totals = serde_json::Map::new();
    for f in forms {
        let report = spline_block_report(f, &cfg.cost)?;
        for r in &report.rows {
            csv.row(&[
                formulation_name(f).into(),
                r.stage.into(),
                r.kind.name().into(),
                r.count.to_string(),
                num(r.area),
                num(r.power),
            ]);
        }
        totals.insert(
            formulation_name(f).into(),
            json!({
                "blocks": report.rows.len(),
                "per_kind": count_blocks(f).per_kind,
                "area": report.total_area,
                "power": report.total_power,
            }),
        );
    }
    let results = json!({ "formulations": totals, "catalog": block_specs() });
    Ok(RunOutput {
        artifacts: vec![
            csv.finish("blocks.csv".into()),
            summary(cmd, cfg, results, "blocks.json".into())?,
        ],
    })
}

/// Per-seed outcome of the KAN noise study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KanSeedResult {
    pub seed: u64,
    pub nmpe_noisy: f64,
    pub nmpe_noiseless: f64,
    pub iterations_noisy: usize,
    pub iterations_noiseless: usize,
}

/// Trained layers of the KAN noise study.
#[derive(Debug, Clone, PartialEq)]
pub struct KanStudy {
    pub seeds: Vec<KanSeedResult>,
    pub median_abs_nmpe_noisy: f64,
    pub median_abs_nmpe_noiseless: f64,
    /// Noisy and noise-free reports of the first seed.
    pub first: (TrainReport, TrainReport),
}

/// Train with and without spline noise for every seed.
pub fn kan_study(cfg: &ExperimentConfig, exec: Execution) -> Result<KanStudy> {
    let n = cfg.kan.seeds;
    if n == 0 {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let base = TrainConfig {
        target: cfg.target()?,
        domain: cfg.domain.unwrap_or(SplineDomain::RAIL),
        n_splines: cfg.kan.splines,
        grid_size: cfg.grid.unwrap_or(DEFAULT_TRAIN_GRID),
        max_iters: cfg.kan.max_iters,
        learning_rate: cfg.kan.learning_rate,
        basis: cfg.kan.basis,
        ..TrainConfig::default()
    };
    base.validate()?;
    let noise = cfg.noise.unwrap_or(DEFAULT_SPLINE_NOISE);
    let seeds: Vec<u64> = (0..n as u64).map(|i| derive_seed(cfg.seed, i)).collect();
    // task 2i is seed i with noise, 2i+1 the same seed without
    let mut reports = exec.try_map_range(2 * n, |t| {
        train(&TrainConfig {
            seed: seeds[t / 2],
            noise_factor: if t % 2 == 0 { noise } else { 0.0 },
            ..base.clone()
        })
    })?;
    let results: Vec<KanSeedResult> = seeds
        .iter()
        .enumerate()
        .map(|(i, &seed)| KanSeedResult {
            seed,
            nmpe_noisy: reports[2 * i].nmpe_with_noise,
            nmpe_noiseless: reports[2 * i + 1].nmpe_vs_target,
            iterations_noisy: reports[2 * i].iterations,
            iterations_noiseless: reports[2 * i + 1].iterations,
        })
        .collect();
    let abs =
        |f: fn(&KanSeedResult) -> f64| -> Vec<f64> { results.iter().map(|r| f(r).abs()).collect() };
    let median_abs_nmpe_noisy = median(&abs(|r| r.nmpe_noisy));
    let median_abs_nmpe_noiseless = median(&abs(|r| r.nmpe_noiseless));
    reports.truncate(2);
    let clean = reports.pop().expect("two reports");
    let noisy = reports.pop().expect("two reports");
    Ok(KanStudy {
        seeds: results,
        median_abs_nmpe_noisy,
        median_abs_nmpe_noiseless,
        first: (noisy, clean),
    })
}

/// KAN noise study: four held-out curves of the first seed, per-iteration
/// losses, and the NMPE medians over all seeds.
pub fn run_kan(cfg: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    let cmd = Command::Kan;
    let study = kan_study(cfg, exec)?;
    let (noisy, clean) = &study.first;

    let mut curves = Csv::new(
        cmd,
        cfg,
        &["x", "target", "kan_noiseless", "kan_noisy", "error"],
    )?;
    for (n, c) in noisy.curve.iter().zip(&clean.curve) {
        curves.row(&[
            num(n.x),
            num(n.target),
            num(c.clean),
            num(n.noisy),
            num(n.noisy - n.target),
        ]);
    }
    let mut loss = Csv::new(cmd, cfg, &["run", "step", "loss"])?;
    for (run, report) in [("noisy", noisy), ("noiseless", clean)] {
        for (i, l) in report.loss_history.iter().enumerate() {
            loss.row(&[run.into(), i.to_string(), num(*l)]);
        }
    }
    let results = json!({
        "target": cfg.kan.target,
        "domain": cfg.domain,
        "noise": cfg.noise,
        "median_abs_nmpe_noisy": study.median_abs_nmpe_noisy,
        "median_abs_nmpe_noiseless": study.median_abs_nmpe_noiseless,
        "first_seed": {
            "nmpe_noisy": noisy.nmpe_with_noise,
            "nmpe_noiseless": clean.nmpe_vs_target,
            "seeds_used": noisy.seeds_used,
            "layer": noisy.layer,
        },
        "per_seed": study.seeds,
    });
    Ok(RunOutput {
        artifacts: vec![
            summary(cmd, cfg, results, "kan.json".into())?,
            curves.finish("kan_curves.csv".into()),
            loss.finish("kan_loss.csv".into()),
        ],
    })
}

/// Resolve `cfg` for `command` and run it.
pub fn run(command: Command, cfg: ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    let cfg = cfg.resolve(command)?;
    match command {
        Command::Scenario => run_scenario(&cfg),
        Command::Kan => run_kan(&cfg, exec),
        Command::Compare => run_compare(&cfg),
        Command::Cost => run_cost(&cfg),
        Command::Sweep => run_sweep(&cfg),
        Command::Blocks => run_blocks(&cfg),
    }
}
