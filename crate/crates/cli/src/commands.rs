use std::fs;
use std::path::PathBuf;

use bbm_core::covering::{build_covering, verify_covering};
use bbm_core::engine::{
    max_displacement, write_genealogy_csv, GenealogyTree, Path, SimConfig, DEFAULT_GRID_STEP,
    DEFAULT_MAX_PARTICLES,
};
use bbm_core::estimators::{
    excursion_oracle_flat, many_to_one_check, many_to_two_check, BallotEstimate, BarrierEstimator, EndNormAtLeast,
    EndProjectionAtLeast, EstimateWithCI, PathFunctional,
};
use bbm_core::experiments::{run_campaign, CampaignConfig, ExperimentKind, Manifest};
use bbm_core::frontier::{holder_bound, predicted_radius, FrontierParams};
use bbm_core::kernel::RngStream;
use bbm_core::report::{Cell, PointEstimate, Summary, Table};
use bbm_core::{Error, Result};
use serde_json::{json, Value};

use crate::settings::{parse_pruning, Settings};
use crate::Format;

const COMMON_KEYS: [&str; 2] = ["out_dir", "format"];

/// A finished command: CSV text, JSON summary and where to put them.
pub struct Output {
    name: String,
    csv: String,
    summary: Summary,
    format: Format,
    /// Files still to be written; campaigns write their own.
    out_dir: Option<PathBuf>,
}

impl Output {
    /// Writes any pending files and returns the text for standard output.
    pub fn emit(self) -> Result<String> {
        let json = serde_json::to_string_pretty(&self.summary)? + "\n";
        if let Some(dir) = &self.out_dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{}.csv", self.name)), &self.csv)?;
            fs::write(dir.join(format!("{}_summary.json", self.name)), &json)?;
        }
        Ok(match self.format {
            Format::Csv => self.csv,
            Format::Json => json,
        })
    }
}

/// Stream label derived from a short ASCII tag.
fn stream_label(tag: &str) -> u64 {
    let mut bytes = [0u8; 8];
    for (b, c) in bytes.iter_mut().zip(tag.bytes()) {
        *b = c;
    }
    u64::from_le_bytes(bytes)
}

fn output_format(s: &Settings) -> Result<Format> {
    match s.str_or("format", "csv")? {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        other => Err(Error::Config(format!("format must be csv or json, got '{other}'"))),
    }
}

fn out_dir(s: &Settings) -> Result<Option<PathBuf>> {
    match s.str_or("out_dir", "")? {
        "" => Ok(None),
        dir => Ok(Some(PathBuf::from(dir))),
    }
}

fn check_keys(s: &Settings, own: &[&str], command: &str) -> Result<()> {
    let allowed: Vec<&str> = own.iter().chain(COMMON_KEYS.iter()).copied().collect();
    s.only(&allowed, command)
}

fn finish(name: &str, s: &Settings, table: Table, params: Value, estimates: Vec<PointEstimate>, fitted: Value) -> Result<Output> {
    let summary = Summary {
        experiment: name.to_string(),
        manifest: json!({
            "command": name,
            "params": params,
            "code_version": env!("CARGO_PKG_VERSION"),
        }),
        params,
        estimates,
        fitted,
    };
    Ok(Output {
        name: name.to_string(),
        csv: table.to_csv_string()?,
        summary,
        format: output_format(s)?,
        out_dir: out_dir(s)?,
    })
}

fn estimate_point(x: Value, e: &EstimateWithCI) -> PointEstimate {
    PointEstimate { x, point: e.point, se: e.std_error, n: e.n }
}

pub fn simulate(s: Settings) -> Result<Output> {
    check_keys(&s, &["dim", "horizon", "seed", "replica", "grid_step", "prune", "max_particles"], "simulate")?;
    let dim = s.usize_or("dim", 2)?;
    let horizon = s.f64_or("horizon", 5.0)?;
    let grid_step = s.f64_or("grid_step", if horizon > 0.0 { horizon } else { DEFAULT_GRID_STEP })?;
    let seed = s.u64_or("seed", 0)?;
    let replica = s.u64_or("replica", 0)?;
    let pruning = s.pruning()?;
    let cfg = SimConfig::new(dim, horizon)
        .with_seed(seed)
        .with_replica(replica)
        .with_grid_step(grid_step)
        .with_pruning(pruning)
        .with_max_particles(s.usize_or("max_particles", DEFAULT_MAX_PARTICLES)?);
    let tree = GenealogyTree::simulate(&cfg)?;
    let mut csv = Vec::new();
    write_genealogy_csv(&tree, &mut csv)?;
    let params = json!({
        "dim": dim, "horizon": horizon, "seed": seed, "replica": replica,
        "grid_step": grid_step, "pruning": pruning, "max_particles": cfg.max_particles,
    });
    let fitted = json!({
        "particles": tree.len(),
        "alive_at_horizon": tree.alive_at_horizon().len(),
        "max_displacement": max_displacement(&tree),
    });
    let mut out = finish("simulate", &s, Table::new::<&str>(&[]), params, Vec::new(), fitted)?;
    out.csv = String::from_utf8(csv).expect("csv output is utf-8");
    Ok(out)
}

pub fn frontier(s: Settings) -> Result<Output> {
    check_keys(&s, &["dim", "horizon", "y", "grid_step", "alpha"], "frontier")?;
    let dim = s.usize_or("dim", 2)?;
    let horizon = s.f64_or("horizon", 10.0)?;
    let offsets = s.list_or("y", &[1.0])?;
    let step = s.f64_or("grid_step", horizon / 100.0)?;
    let alpha = s.f64_or("alpha", 0.4)?;
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("grid step must be > 0, got {step}")));
    }
    let curves: Vec<FrontierParams> =
        offsets.iter().map(|&y| FrontierParams::new(dim, horizon, y)).collect::<Result<_>>()?;
    let n = (horizon / step - 1e-9).ceil() as usize;
    let mut table = Table::new(&["y", "s", "f", "f_tilde"]);
    let mut holder = Vec::new();
    for p in &curves {
        for i in 0..=n {
            let s = (i as f64 * step).min(horizon);
            table.push(vec![p.offset().into(), s.into(), p.eval(s).into(), p.eval_tilde(s).into()]);
        }
        holder.push(holder_bound(p, alpha, 10_000)?);
    }
    let estimates = curves
        .iter()
        .map(|p| PointEstimate { x: json!(p.offset()), point: p.eval(horizon), se: None, n: 1 })
        .collect();
    let params = json!({ "dim": dim, "horizon": horizon, "y_grid": offsets, "grid_step": step, "alpha": alpha });
    let fitted = json!({ "predicted_radius": predicted_radius(dim, horizon)?, "holder_bound": holder });
    finish("frontier", &s, table, params, estimates, fitted)
}

pub fn covering(s: Settings) -> Result<Output> {
    check_keys(&s, &["dim", "radius", "samples", "seed"], "covering")?;
    let dim = s.usize_or("dim", 3)?;
    let radius = s.f64_or("radius", 10.0)?;
    let samples = s.usize_or("samples", 100_000)?;
    let seed = s.u64_or("seed", 0)?;
    let ds = build_covering(radius, dim)?;
    let violations = verify_covering(&ds, radius, samples, &RngStream::derive(seed, &[stream_label("covering")]));
    let header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    let mut table = Table::new(&header);
    for v in ds.dirs() {
        table.push(v.iter().map(|&x| Cell::from(x)).collect());
    }
    let params = json!({ "dim": dim, "radius": radius, "samples": samples, "seed": seed });
    let rate = if samples > 0 { violations as f64 / samples as f64 } else { 0.0 };
    let estimates = vec![PointEstimate { x: json!(radius), point: rate, se: None, n: samples }];
    let fitted = json!({
        "size": ds.len(),
        "violations": violations,
        "measured_K": ds.measured_constant(),
        "construction": ds.construction(),
    });
    finish("covering", &s, table, params, estimates, fitted)
}

/// Barrier options shared by `ballot` and `excursion`.
struct Barrier {
    offsets: Vec<f64>,
    horizon: f64,
    replicas: usize,
    seed: u64,
    sampler: BarrierEstimator,
    bend: f64,
    alpha: f64,
}

impl Barrier {
    const KEYS: [&'static str; 8] = ["y", "horizon", "replicas", "seed", "grid_step", "bridge", "bend", "alpha"];

    fn read(s: &Settings, default_horizon: f64) -> Result<Self> {
        let defaults = BarrierEstimator::default();
        Ok(Barrier {
            offsets: s.list_or("y", &[1.0])?,
            horizon: s.f64_or("horizon", default_horizon)?,
            replicas: s.usize_or("replicas", 100_000)?,
            seed: s.u64_or("seed", 0)?,
            sampler: defaults.with_step(s.f64_or("grid_step", defaults.step)?).with_bridge(s.bool_or("bridge", true)?),
            bend: s.f64_or("bend", 0.0)?,
            alpha: s.f64_or("alpha", 0.4)?,
        })
    }

    fn params(&self) -> Value {
        json!({
            "y_grid": self.offsets, "horizon": self.horizon, "replicas": self.replicas, "seed": self.seed,
            "grid_step": self.sampler.step, "bridge": self.sampler.bridge, "bend": self.bend, "alpha": self.alpha,
        })
    }
}

fn barrier_output(name: &str, s: &Settings, params: Value, rows: Vec<(f64, BallotEstimate)>, extra: &[(&str, Cell)]) -> Result<Output> {
    let mut header = vec!["y"];
    header.extend(extra.iter().map(|e| e.0));
    header.extend(["point", "se", "n", "oracle"]);
    let mut table = Table::new(&header);
    for (y, r) in &rows {
        let mut row = vec![Cell::from(*y)];
        row.extend(extra.iter().map(|e| e.1.clone()));
        row.extend([r.estimate.point.into(), r.estimate.std_error.into(), r.estimate.n.into(), r.oracle.into()]);
        table.push(row);
    }
    let estimates = rows.iter().map(|(y, r)| estimate_point(json!(y), &r.estimate)).collect();
    let fitted = json!({ "oracle": rows.iter().map(|r| r.1.oracle).collect::<Vec<_>>() });
    finish(name, s, table, params, estimates, fitted)
}

pub fn ballot(s: Settings) -> Result<Output> {
    check_keys(&s, &Barrier::KEYS, "ballot")?;
    let b = Barrier::read(&s, 1.0)?;
    let base = RngStream::derive(b.seed, &[stream_label("ballot")]);
    let rows = b
        .offsets
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let stream = base.split(i as u64);
            let r = if b.bend == 0.0 {
                b.sampler.ballot(y, b.horizon, b.replicas, &stream)
            } else {
                b.sampler.bent_ballot(y, b.horizon, b.bend, b.alpha, b.replicas, &stream)
            };
            r.map(|r| (y, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let extra = [("horizon", Cell::from(b.horizon))];
    barrier_output("ballot", &s, b.params(), rows, &extra)
}

pub fn excursion(s: Settings) -> Result<Output> {
    let mut keys = Barrier::KEYS.to_vec();
    keys.extend(["z", "tilted"]);
    check_keys(&s, &keys, "excursion")?;
    let b = Barrier::read(&s, 4.0)?;
    let z = s.f64_or("z", 0.0)?;
    let tilted = s.bool_or("tilted", false)?;
    let t = b.horizon;
    let (amp, alpha) = (b.bend, b.alpha);
    let curve = move |u: f64| if amp == 0.0 { 0.0 } else { amp * u.min(t - u).max(0.0).powf(alpha) };
    let base = RngStream::derive(b.seed, &[stream_label("excurs")]);
    let rows = b
        .offsets
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let mut r = b.sampler.excursion(y, z, t, curve, tilted, b.replicas, &base.split(i as u64))?;
            if amp == 0.0 {
                r.oracle = Some(excursion_oracle_flat(y, z, t));
            }
            Ok((y, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut params = b.params();
    params["z"] = json!(z);
    params["tilted"] = json!(tilted);
    let method = if tilted { "girsanov-tilted" } else { "plain" };
    let extra = [("z", Cell::from(z)), ("horizon", Cell::from(t)), ("method", Cell::from(method))];
    barrier_output("excursion", &s, params, rows, &extra)
}

/// Endpoint functionals selectable from the command line.
enum Functional {
    Unit,
    Tail(EndNormAtLeast),
    HalfPlane(EndProjectionAtLeast),
}

impl PathFunctional for Functional {
    fn eval(&self, path: &Path) -> f64 {
        match self {
            Functional::Unit => 1.0,
            Functional::Tail(f) => f.eval(path),
            Functional::HalfPlane(f) => f.eval(path),
        }
    }

    fn needs_path(&self) -> bool {
        false
    }
}

pub fn identity_check(s: Settings) -> Result<Output> {
    let keys = ["identity", "functional", "level", "dim", "horizon", "replicas", "bm_replicas", "seed", "grid_step"];
    check_keys(&s, &keys, "identity-check")?;
    let identity = s.str_or("identity", "many-to-one")?;
    let second = match identity {
        "many-to-one" => false,
        "many-to-two" => true,
        other => return Err(Error::InvalidArgument(format!("identity must be many-to-one or many-to-two, got '{other}'"))),
    };
    let dim = s.usize_or("dim", 2)?;
    let horizon = s.f64_or("horizon", if second { 1.0 } else { 4.0 })?;
    let replicas = s.usize_or("replicas", 10_000)?;
    let bm_replicas = s.usize_or("bm_replicas", replicas.saturating_mul(100))?;
    let seed = s.u64_or("seed", 0)?;
    let grid_step = s.f64_or("grid_step", if horizon > 0.0 { horizon } else { DEFAULT_GRID_STEP })?;
    let name = s.str_or("functional", if second { "unit" } else { "tail" })?;
    let level = s.f64_or("level", (2.0 * horizon).sqrt())?;
    if dim == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let functional = match name {
        "unit" => Functional::Unit,
        "tail" => Functional::Tail(EndNormAtLeast(level)),
        "half-plane" => {
            let mut e1 = vec![0.0; dim];
            e1[0] = 1.0;
            Functional::HalfPlane(EndProjectionAtLeast { direction: e1, level: 0.0 })
        }
        other => return Err(Error::InvalidArgument(format!("functional must be unit, tail or half-plane, got '{other}'"))),
    };
    let stream = RngStream::derive(seed, &[stream_label("identity")]);
    let terms: Vec<(&str, EstimateWithCI)> = if second {
        let r = many_to_two_check(&functional, &functional, dim, horizon, grid_step, replicas, bm_replicas, &stream)?;
        vec![("lhs", r.lhs), ("diagonal", r.diagonal), ("integral", r.integral), ("rhs", r.rhs())]
    } else {
        let r = many_to_one_check(&functional, dim, horizon, grid_step, replicas, bm_replicas, &stream)?;
        vec![("lhs", r.bbm_side), ("rhs", r.bm_side)]
    };
    let (lhs, rhs) = (terms[0].1, terms[terms.len() - 1].1);
    let mut table = Table::new(&["term", "point", "se", "n"]);
    for (term, e) in &terms {
        table.push(vec![Cell::from(*term), e.point.into(), e.std_error.into(), e.n.into()]);
    }
    let estimates = terms.iter().map(|(term, e)| estimate_point(json!(term), e)).collect();
    let params = json!({
        "identity": identity, "functional": name, "level": level, "dim": dim, "horizon": horizon,
        "replicas": replicas, "bm_replicas": bm_replicas, "seed": seed, "grid_step": grid_step,
    });
    let fitted = json!({ "z_distance": lhs.z_distance(&rhs) });
    finish("identity-check", &s, table, params, estimates, fitted)
}

pub fn campaign(kind: ExperimentKind, mut s: Settings) -> Result<Output> {
    let format = output_format(&s)?;
    s.take("format");
    let mut kind = kind;
    if let Some(v) = s.take("experiment") {
        let named: ExperimentKind = v.as_str().ok_or_else(|| Error::Config(format!("bad experiment {v}")))?.parse()?;
        match (kind, named) {
            (a, b) if a == b => {}
            (ExperimentKind::Directional, ExperimentKind::DirectionalCount) => kind = named,
            _ => {
                return Err(Error::Config(format!(
                    "config names experiment '{}' but the command is '{}'",
                    named.as_str(),
                    kind.as_str()
                )))
            }
        }
    }
    let mut cfg = match s.take("manifest") {
        Some(path) => {
            let path = path.as_str().ok_or_else(|| Error::Config(format!("bad manifest path {path}")))?.to_string();
            let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read {path}: {e}")))?;
            let manifest: Manifest = serde_json::from_str(&text)?;
            CampaignConfig::from_manifest(&manifest, ".")
        }
        None => CampaignConfig::new(kind, 2, 10.0),
    };
    if cfg.experiment != kind {
        match (kind, cfg.experiment) {
            (ExperimentKind::Directional, ExperimentKind::DirectionalCount) => kind = cfg.experiment,
            _ => {
                return Err(Error::Config(format!(
                    "manifest is for '{}' but the command is '{}'",
                    cfg.experiment.as_str(),
                    kind.as_str()
                )))
            }
        }
    }
    if let Some(v) = s.take("prune") {
        cfg.pruning = Some(parse_pruning(&v).ok_or_else(|| Error::Config(format!("bad value for 'prune': {v}")))?);
    }
    for (key, value) in s.entries() {
        cfg.set(key, value)?;
    }
    let out = run_campaign(&cfg)?;
    Ok(Output {
        name: kind.as_str().to_string(),
        csv: out.table.to_csv_string()?,
        summary: out.summary,
        format,
        out_dir: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_labels_differ() {
        assert_ne!(stream_label("ballot"), stream_label("excurs"));
        assert_eq!(stream_label("ab"), u64::from_le_bytes(*b"ab\0\0\0\0\0\0"));
    }

    #[test]
    fn frontier_table_covers_the_horizon() {
        let mut s = Settings::default();
        s.flag("horizon", Some(4.0));
        s.flag("grid_step", Some(1.0));
        let out = frontier(s).unwrap();
        let lines: Vec<&str> = out.csv.lines().collect();
        assert_eq!(lines[0], "y,s,f,f_tilde");
        assert_eq!(lines.len(), 6);
        assert!(lines[5].starts_with("1,4,"));
    }
}
