use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError, RunRecord};

pub const SEED_HEADER: [&str; 4] = ["episode", "train_return", "eval_return", "loss"];
pub const AGGREGATE_HEADER: [&str; 5] = [
    "episode",
    "eval_mean",
    "eval_std",
    "smoothed_mean",
    "smoothed_std",
];
pub const MANIFEST_FORMAT: &str = "bdq-manifest v1";

/// Trailing moving average; the first `window - 1` points average over the
/// values seen so far.
pub fn smooth(series: &[f64], window: usize) -> Result<Vec<f64>, HarnessError> {
    if series.is_empty() {
        return Err(HarnessError::InvalidConfig("cannot smooth an empty series".into()));
    }
    if window == 0 {
        return Err(HarnessError::InvalidConfig("smoothing window must be at least 1".into()));
    }
    Ok((0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &series[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect())
}

/// Evaluation returns of one seed, indexed by episode.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedCurve {
    pub seed: u64,
    pub episodes: Vec<u32>,
    pub eval_returns: Vec<f64>,
}

impl From<&RunRecord> for SeedCurve {
    fn from(r: &RunRecord) -> Self {
        Self {
            seed: r.seed,
            episodes: r.evals.iter().map(|e| e.episode).collect(),
            eval_returns: r.eval_returns(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatePoint {
    pub episode: u32,
    pub eval_mean: f64,
    pub eval_std: f64,
    pub smoothed_mean: f64,
    pub smoothed_std: f64,
}

/// Mean and population standard deviation, independent of input order.
fn mean_std(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / n).sqrt())
}

/// Pointwise statistics across seeds of the raw and smoothed evaluation
/// curves.
pub fn aggregate_seeds(curves: &[SeedCurve], window: usize) -> Result<Vec<AggregatePoint>, HarnessError> {
    let first = curves
        .first()
        .ok_or_else(|| HarnessError::InvalidConfig("no runs to aggregate".into()))?;
    for c in curves {
        if c.episodes != first.episodes || c.eval_returns.len() != c.episodes.len() {
            return Err(HarnessError::InvalidConfig(format!(
                "seed {} has a different evaluation grid than seed {}",
                c.seed, first.seed
            )));
        }
    }
    if first.episodes.is_empty() {
        return Ok(Vec::new());
    }
    let smoothed = curves
        .iter()
        .map(|c| smooth(&c.eval_returns, window))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(first
        .episodes
        .iter()
        .enumerate()
        .map(|(i, &episode)| {
            let (eval_mean, eval_std) =
                mean_std(&mut curves.iter().map(|c| c.eval_returns[i]).collect::<Vec<_>>());
            let (smoothed_mean, smoothed_std) =
                mean_std(&mut smoothed.iter().map(|s| s[i]).collect::<Vec<_>>());
            AggregatePoint {
                episode,
                eval_mean,
                eval_std,
                smoothed_mean,
                smoothed_std,
            }
        })
        .collect())
}

/// Resolved configuration and its hash, written next to the CSV files. The
/// output directory is not stored; loading restores it as the directory
/// holding the manifest, so runs written to different places stay
/// byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        Ok(Self {
            format: MANIFEST_FORMAT.into(),
            config_hash: config.config_hash()?,
            config: config.resolved()?,
        })
    }

    pub fn to_toml_string(&self) -> String {
        let mut stored = self.clone();
        stored.config.output_dir = PathBuf::new();
        toml::to_string(&stored).expect("manifests always serialize")
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut manifest: Self = toml::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(HarnessError::Parse {
                path: path.to_path_buf(),
                message: format!("unsupported manifest format `{}`", manifest.format),
            });
        }
        manifest.config.output_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn seed_csv_name(seed: u64) -> String {
    format!("seed_{seed}.csv")
}

fn write_seed_csv(path: &Path, record: &RunRecord) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(SEED_HEADER).map_err(|e| csv_err(path, e))?;
    let mut evals = record.evals.iter().peekable();
    for ep in &record.episodes {
        let eval = match evals.peek() {
            Some(e) if e.episode == ep.episode => {
                let v = num(e.summary.mean_return);
                evals.next();
                v
            }
            _ => String::new(),
        };
        let loss = ep.loss.map(num).unwrap_or_default();
        w.write_record([ep.episode.to_string(), num(ep.train_return), eval, loss])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_aggregate_csv(path: &Path, points: &[AggregatePoint]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(AGGREGATE_HEADER).map_err(|e| csv_err(path, e))?;
    for p in points {
        w.write_record([
            p.episode.to_string(),
            num(p.eval_mean),
            num(p.eval_std),
            num(p.smoothed_mean),
            num(p.smoothed_std),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads the evaluation curve back from a per-seed CSV.
pub fn read_seed_csv(path: &Path, seed: u64) -> Result<SeedCurve, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(SEED_HEADER) {
        return Err(HarnessError::Parse {
            path: path.to_path_buf(),
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let bad = |m: String| HarnessError::Parse {
        path: path.to_path_buf(),
        message: m,
    };
    let mut curve = SeedCurve {
        seed,
        episodes: Vec::new(),
        eval_returns: Vec::new(),
    };
    for row in r.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let eval = &row[2];
        if eval.is_empty() {
            continue;
        }
        curve
            .episodes
            .push(row[0].parse().map_err(|_| bad(format!("bad episode `{}`", &row[0])))?);
        curve
            .eval_returns
            .push(eval.parse().map_err(|_| bad(format!("bad return `{eval}`")))?);
    }
    Ok(curve)
}

/// Writes one CSV per seed, the aggregated curve and the manifest into
/// `dir`, returning the written paths.
pub fn emit(
    records: &[RunRecord],
    config: &ExperimentConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    for r in records {
        let path = dir.join(seed_csv_name(r.seed));
        write_seed_csv(&path, r)?;
        written.push(path);
    }
    let curves: Vec<SeedCurve> = records.iter().map(SeedCurve::from).collect();
    let points = aggregate_seeds(&curves, config.smoothing_window)?;
    let path = dir.join("aggregate.csv");
    write_aggregate_csv(&path, &points)?;
    written.push(path);
    let manifest = Manifest::new(config)?;
    let path = dir.join("manifest.toml");
    fs::write(&path, manifest.to_toml_string()).map_err(|e| HarnessError::io(&path, e))?;
    written.push(path);
    Ok(written)
}
