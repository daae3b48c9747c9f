use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    run_replicas, standard_directions, CountSetup, CrossingSetup, DirectionalSetup, GenealogySetup, ReplicaExperiment,
    Tabulate, TailSetup, UNPRUNED_HORIZON_LIMIT,
};
use crate::engine::{Pruning, SimConfig, DEFAULT_GRID_STEP, DEFAULT_MAX_PARTICLES, DEFAULT_PRUNE_LAG};
use crate::error::{invalid, Error, Result};
use crate::report::{Summary, Table};

/// Replicas computed between checkpoint flushes.
pub const DEFAULT_BATCH: usize = 256;
/// Lookbacks used when none are given; those beyond the horizon are dropped.
const DEFAULT_LOOKBACKS: [f64; 5] = [0.0, 1.0, 2.0, 4.0, 8.0];
/// Pruning checks for horizon-only experiments run on a grid this fine.
const PRUNED_ENDPOINT_STEP: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Tail,
    Crossing,
    Directional,
    DirectionalCount,
    Genealogy,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Tail,
        ExperimentKind::Crossing,
        ExperimentKind::Directional,
        ExperimentKind::DirectionalCount,
        ExperimentKind::Genealogy,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Tail => "tail",
            ExperimentKind::Crossing => "crossing",
            ExperimentKind::Directional => "directional",
            ExperimentKind::DirectionalCount => "directional-count",
            ExperimentKind::Genealogy => "genealogy",
        }
    }

    /// Whether the experiment inspects whole paths rather than horizon positions.
    fn watches_paths(&self) -> bool {
        matches!(self, ExperimentKind::Crossing | ExperimentKind::DirectionalCount)
    }

    fn default_offsets(&self) -> Vec<f64> {
        match self {
            ExperimentKind::Tail => vec![1.0, 1.5, 2.0, 2.5, 3.0],
            ExperimentKind::Crossing => vec![1.0, 2.0, 3.0],
            _ => vec![1.0],
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

/// Everything a campaign needs; unset options take per-experiment defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct CampaignConfig {
    pub experiment: ExperimentKind,
    pub dim: usize,
    pub horizon: f64,
    pub grid_step: Option<f64>,
    pub pruning: Option<Pruning>,
    pub max_particles: usize,
    pub seed: u64,
    pub replicas: usize,
    pub y_grid: Option<Vec<f64>>,
    pub lookbacks: Option<Vec<f64>>,
    pub directions: Option<Vec<Vec<f64>>>,
    pub bridge: bool,
    pub out_dir: PathBuf,
    pub batch_size: usize,
}

/// Reproducibility record written next to every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub dim: usize,
    pub horizon: f64,
    pub grid_step: f64,
    pub pruning: Pruning,
    pub max_particles: usize,
    pub replicas: usize,
    pub y_grid: Vec<f64>,
    pub lookbacks: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub bridge: bool,
    pub code_version: String,
}

impl CampaignConfig {
    pub fn new(experiment: ExperimentKind, dim: usize, horizon: f64) -> Self {
        CampaignConfig {
            experiment,
            dim,
            horizon,
            grid_step: None,
            pruning: None,
            max_particles: DEFAULT_MAX_PARTICLES,
            seed: 0,
            replicas: 1000,
            y_grid: None,
            lookbacks: None,
            directions: None,
            bridge: true,
            out_dir: PathBuf::from("."),
            batch_size: DEFAULT_BATCH,
        }
    }

    /// Reconstructs the campaign a manifest describes, with every option
    /// pinned to its recorded value.
    pub fn from_manifest(m: &Manifest, out_dir: impl Into<PathBuf>) -> Self {
        CampaignConfig {
            experiment: m.experiment,
            dim: m.dim,
            horizon: m.horizon,
            grid_step: Some(m.grid_step),
            pruning: Some(m.pruning),
            max_particles: m.max_particles,
            seed: m.seed,
            replicas: m.replicas,
            y_grid: Some(m.y_grid.clone()),
            lookbacks: Some(m.lookbacks.clone()),
            directions: Some(m.directions.clone()),
            bridge: m.bridge,
            out_dir: out_dir.into(),
            batch_size: DEFAULT_BATCH,
        }
    }

    /// Sets one option from its config-file key and JSON value.
    pub fn set(&mut self, key: &str, value: &Value) -> Result<()> {
        let bad = || Error::Config(format!("bad value for '{key}': {value}"));
        let number = || value.as_f64().ok_or_else(bad);
        let count = || value.as_u64().ok_or_else(bad);
        let list = || -> Result<Vec<f64>> {
            match value {
                Value::Array(items) => items.iter().map(|v| v.as_f64().ok_or_else(bad)).collect(),
                Value::Number(n) => Ok(vec![n.as_f64().ok_or_else(bad)?]),
                _ => Err(bad()),
            }
        };
        match key {
            "experiment" => self.experiment = value.as_str().ok_or_else(bad)?.parse()?,
            "dim" => self.dim = count()? as usize,
            "horizon" => self.horizon = number()?,
            "grid_step" => self.grid_step = Some(number()?),
            "prune" => {
                self.pruning = Some(match value {
                    Value::String(s) if s == "none" => Pruning::None,
                    Value::Bool(false) => Pruning::None,
                    Value::Bool(true) => Pruning::Barrier { lag: DEFAULT_PRUNE_LAG },
                    Value::Number(n) => Pruning::Barrier { lag: n.as_f64().ok_or_else(bad)? },
                    _ => return Err(bad()),
                })
            }
            "max_particles" => self.max_particles = count()? as usize,
            "seed" => self.seed = count()?,
            "replicas" => self.replicas = count()? as usize,
            "y_grid" | "y" => self.y_grid = Some(list()?),
            "lookbacks" => self.lookbacks = Some(list()?),
            "directions" => {
                let rows = value.as_array().ok_or_else(bad)?;
                let dirs = rows
                    .iter()
                    .map(|row| {
                        row.as_array()
                            .ok_or_else(bad)?
                            .iter()
                            .map(|c| c.as_f64().ok_or_else(bad))
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<_>>()?;
                self.directions = Some(dirs);
            }
            "bridge" => self.bridge = value.as_bool().ok_or_else(bad)?,
            "out_dir" => self.out_dir = PathBuf::from(value.as_str().ok_or_else(bad)?),
            "batch_size" => self.batch_size = count()? as usize,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn resolved_pruning(&self) -> Pruning {
        self.pruning.unwrap_or(if self.experiment.watches_paths() || self.horizon > UNPRUNED_HORIZON_LIMIT {
            Pruning::Barrier { lag: DEFAULT_PRUNE_LAG }
        } else {
            Pruning::None
        })
    }

    /// Path experiments need a fine grid. Horizon-only experiments sample
    /// the exact horizon law on any grid, so without pruning one step to the
    /// horizon suffices.
    pub fn resolved_grid_step(&self) -> f64 {
        if let Some(step) = self.grid_step {
            return step;
        }
        if self.experiment.watches_paths() {
            return DEFAULT_GRID_STEP;
        }
        match self.resolved_pruning() {
            Pruning::None if self.horizon > 0.0 => self.horizon,
            Pruning::None => DEFAULT_GRID_STEP,
            Pruning::Barrier { .. } => self.horizon / (self.horizon / PRUNED_ENDPOINT_STEP).ceil().max(1.0),
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig::new(self.dim, self.horizon)
            .with_seed(self.seed)
            .with_grid_step(self.resolved_grid_step())
            .with_pruning(self.resolved_pruning())
            .with_max_particles(self.max_particles)
            .with_checkpoints(false)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            experiment: self.experiment,
            seed: self.seed,
            dim: self.dim,
            horizon: self.horizon,
            grid_step: self.resolved_grid_step(),
            pruning: self.resolved_pruning(),
            max_particles: self.max_particles,
            replicas: self.replicas,
            y_grid: self.y_grid.clone().unwrap_or_else(|| self.experiment.default_offsets()),
            lookbacks: self.lookbacks.clone().unwrap_or_else(|| {
                DEFAULT_LOOKBACKS.iter().copied().filter(|&r| r <= self.horizon).collect()
            }),
            directions: self.directions.clone().unwrap_or_else(|| standard_directions(self.dim.max(1))),
            bridge: self.bridge,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Parses flat `key = value` text into ordered pairs. Values are JSON;
/// bare words are read as strings. Blank lines and lines starting with `#`
/// are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, Value)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let value = value.trim();
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        pairs.push((key.trim().to_string(), parsed));
    }
    Ok(pairs)
}

/// Builds a campaign from config text; the `experiment` key is required.
pub fn parse_config(text: &str) -> Result<CampaignConfig> {
    let pairs = parse_pairs(text)?;
    let kind = pairs
        .iter()
        .find(|(k, _)| k == "experiment")
        .and_then(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Config("missing 'experiment'".into()))?
        .parse()?;
    let mut cfg = CampaignConfig::new(kind, 2, 10.0);
    for (k, v) in &pairs {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

/// What a finished campaign produced.
#[derive(Clone, Debug)]
pub struct CampaignOutput {
    pub summary: Summary,
    pub table: Table,
    pub files: Vec<PathBuf>,
}

/// Runs (or resumes) a campaign and writes `<id>.csv`, `<id>_summary.json`
/// and `<id>_manifest.json` into the output directory. Per-replica records
/// are checkpointed in `<id>.replicas`; rerunning resumes after the last
/// complete record.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignOutput> {
    if cfg.replicas == 0 {
        return Err(invalid("replicas must be at least 1"));
    }
    if cfg.batch_size == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    let m = cfg.manifest();
    let sim = cfg.sim_config();
    match cfg.experiment {
        ExperimentKind::Tail => execute(cfg, &m, &TailSetup::new(sim, &m.y_grid)?),
        ExperimentKind::Crossing => execute(cfg, &m, &CrossingSetup::new(sim, &m.y_grid, m.bridge)?),
        ExperimentKind::Directional => execute(cfg, &m, &DirectionalSetup::new(sim, m.directions.clone())?),
        ExperimentKind::DirectionalCount => {
            execute(cfg, &m, &CountSetup::new(sim, &m.y_grid, m.directions.clone(), m.bridge)?)
        }
        ExperimentKind::Genealogy => execute(cfg, &m, &GenealogySetup::new(sim, &m.lookbacks)?),
    }
}

/// Identity of the random streams behind a checkpoint; the replica count
/// is left out so a campaign can be extended.
fn fingerprint(m: &Manifest) -> Result<String> {
    let mut key = m.clone();
    key.replicas = 0;
    Ok(serde_json::to_string(&key)?)
}

fn format_record(index: usize, record: &[f64]) -> String {
    let mut line = index.to_string();
    for x in record {
        // Display prints the shortest representation that parses back exactly.
        let _ = write!(line, ",{x}");
    }
    line.push('\n');
    line
}

fn load_checkpoint(path: &Path, header: &str, record_len: usize, limit: usize) -> Result<Vec<Vec<f64>>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut lines = text.split_inclusive('\n');
    match lines.next() {
        None => return Ok(Vec::new()),
        Some(first) if first.trim_end() == header => {}
        Some(_) => {
            return Err(Error::Config(format!(
                "{} belongs to a different campaign; remove it or choose another output directory",
                path.display()
            )))
        }
    }
    let mut records = Vec::new();
    for line in lines {
        // A line without its newline was cut short by an interruption.
        if !line.ends_with('\n') || records.len() == limit {
            break;
        }
        let mut fields = line.trim_end().split(',');
        let index: Option<usize> = fields.next().and_then(|f| f.parse().ok());
        let values: std::result::Result<Vec<f64>, _> = fields.map(str::parse).collect();
        match (index, values) {
            (Some(i), Ok(v)) if i == records.len() && v.len() == record_len => records.push(v),
            _ => return Err(Error::Config(format!("corrupt record {} in {}", records.len(), path.display()))),
        }
    }
    Ok(records)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn execute<E: ReplicaExperiment>(cfg: &CampaignConfig, manifest: &Manifest, exp: &E) -> Result<CampaignOutput> {
    let id = manifest.experiment.as_str();
    fs::create_dir_all(&cfg.out_dir)?;
    let ckpt = cfg.out_dir.join(format!("{id}.replicas"));
    let header = format!("campaign {}", fingerprint(manifest)?);
    let mut records = load_checkpoint(&ckpt, &header, exp.record_len(), cfg.replicas)?;

    // Rewrite what survived so appends start on a clean line boundary.
    let tmp = cfg.out_dir.join(format!("{id}.replicas.tmp"));
    {
        let mut f = File::create(&tmp)?;
        writeln!(f, "{header}")?;
        for (i, r) in records.iter().enumerate() {
            f.write_all(format_record(i, r).as_bytes())?;
        }
        f.sync_all()?;
    }
    fs::rename(&tmp, &ckpt)?;

    let mut file = OpenOptions::new().append(true).open(&ckpt)?;
    while records.len() < cfg.replicas {
        let start = records.len();
        let end = (start + cfg.batch_size).min(cfg.replicas);
        let batch = run_replicas(exp, start as u64..end as u64)?;
        let mut text = String::new();
        for (k, r) in batch.iter().enumerate() {
            text.push_str(&format_record(start + k, r));
        }
        file.write_all(text.as_bytes())?;
        file.flush()?;
        records.extend(batch);
    }
    drop(file);

    let report = exp.aggregate(&records);
    let table = report.table();
    let summary = Summary {
        experiment: id.to_string(),
        params: report.params(),
        estimates: report.estimates(),
        fitted: report.fitted(),
        manifest: serde_json::to_value(manifest)?,
    };
    let csv_path = cfg.out_dir.join(format!("{id}.csv"));
    table.write_csv(File::create(&csv_path)?)?;
    let summary_path = cfg.out_dir.join(format!("{id}_summary.json"));
    write_json(&summary_path, &summary)?;
    let manifest_path = cfg.out_dir.join(format!("{id}_manifest.json"));
    write_json(&manifest_path, manifest)?;
    Ok(CampaignOutput { summary, table, files: vec![csv_path, summary_path, manifest_path, ckpt] })
}
