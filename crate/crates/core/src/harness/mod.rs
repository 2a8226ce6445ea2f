//! Experiment runner: configuration, deterministic seeding, incremental
//! JSONL persistence, and summaries of Monte Carlo campaigns.

mod experiments;
mod report;

pub use experiments::run_trial;
pub use report::{
    summarize, write_summary_csv, write_summary_json, PointSummary, ReportSummary, StatSummary,
};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundConstants};
use crate::ensembles::{EnsembleSpec, MomentOracle};
use crate::error::{Error, Result};
use crate::seeding;

/// The named experiments the runner understands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentId {
    #[serde(rename = "covariance-approximation")]
    CovarianceApproximation,
    #[serde(rename = "gaussian-baseline")]
    GaussianBaseline,
    #[serde(rename = "two-sided-band")]
    TwoSidedBand,
    #[serde(rename = "mp-distance")]
    MpDistance,
    #[serde(rename = "restricted-norm-sweep")]
    RestrictedNormSweep,
    #[serde(rename = "max-column-tail")]
    MaxColumnTail,
    #[serde(rename = "exp-lower-tail")]
    ExpLowerTail,
    #[serde(rename = "hG-growth")]
    HgGrowth,
    #[serde(rename = "p-moment-process")]
    PMomentProcess,
    #[serde(rename = "subset-sum")]
    SubsetSum,
    #[serde(rename = "chaining-tail-spotcheck")]
    ChainingTailSpotcheck,
}

impl ExperimentId {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentId::CovarianceApproximation => "covariance-approximation",
            ExperimentId::GaussianBaseline => "gaussian-baseline",
            ExperimentId::TwoSidedBand => "two-sided-band",
            ExperimentId::MpDistance => "mp-distance",
            ExperimentId::RestrictedNormSweep => "restricted-norm-sweep",
            ExperimentId::MaxColumnTail => "max-column-tail",
            ExperimentId::ExpLowerTail => "exp-lower-tail",
            ExperimentId::HgGrowth => "hG-growth",
            ExperimentId::PMomentProcess => "p-moment-process",
            ExperimentId::SubsetSum => "subset-sum",
            ExperimentId::ChainingTailSpotcheck => "chaining-tail-spotcheck",
        }
    }

    /// The statistic a report keys its primary columns on.
    pub fn primary_stat(&self) -> &'static str {
        match self {
            ExperimentId::CovarianceApproximation | ExperimentId::GaussianBaseline => "deviation",
            ExperimentId::TwoSidedBand => "band_constant_required",
            ExperimentId::MpDistance => "esd_distance",
            ExperimentId::RestrictedNormSweep => "a_m",
            ExperimentId::MaxColumnTail => "max_column_norm",
            ExperimentId::ExpLowerTail => "a_full",
            ExperimentId::HgGrowth => "deviation",
            ExperimentId::PMomentProcess => "deviation_p",
            ExperimentId::SubsetSum => "subset_ratio",
            ExperimentId::ChainingTailSpotcheck => "statistic_sup",
        }
    }
}

/// One grid point of an experiment. `N` may be derived from the other fields
/// where the experiment defines a sample-size recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

impl GridPoint {
    pub fn with_n_samples(n: usize, n_samples: usize) -> Self {
        GridPoint {
            n,
            n_samples: Some(n_samples),
            m: None,
            p: None,
            eps: None,
            t: None,
        }
    }

    pub fn count(&self) -> usize {
        self.n_samples.unwrap_or(0)
    }

    fn fingerprint(&self) -> u64 {
        let json = serde_json::to_string(self).expect("grid point serializes");
        seeding::hash_bytes(json.as_bytes())
    }
}

fn default_trials() -> usize {
    1
}

fn default_moment_reference() -> usize {
    200_000
}

/// A full campaign description; serializes to/from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub ensemble: EnsembleSpec,
    pub grid: Vec<GridPoint>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub constants: BoundConstants,
    /// Reference-sample size for Monte Carlo moment oracles.
    #[serde(default = "default_moment_reference")]
    pub moment_reference_size: usize,
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let config: ExperimentConfig = serde_json::from_reader(BufReader::new(file))?;
        Ok(config)
    }

    /// Validates and resolves derived sample sizes for every grid point.
    pub fn resolved_grid(&self) -> Result<Vec<GridPoint>> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("grid must be nonempty".into()));
        }
        self.ensemble.validate()?;
        self.constants.validate()?;
        self.grid
            .iter()
            .map(|gp| resolve_grid_point(self.experiment, gp, &self.constants, &self.ensemble))
            .collect()
    }
}

fn resolve_grid_point(
    id: ExperimentId,
    gp: &GridPoint,
    consts: &BoundConstants,
    ensemble: &EnsembleSpec,
) -> Result<GridPoint> {
    let mut out = gp.clone();
    if out.n == 0 {
        return Err(Error::Config("grid point has n = 0".into()));
    }
    if out.n != ensemble.dim() {
        return Err(Error::Config(format!(
            "grid point dimension {} does not match ensemble dimension {}",
            out.n,
            ensemble.dim()
        )));
    }
    match id {
        ExperimentId::CovarianceApproximation => {
            if out.n_samples.is_none() {
                let eps = out
                    .eps
                    .ok_or_else(|| Error::Config("covariance-approximation needs eps".into()))?;
                let t = out.t.unwrap_or(1.0);
                let sc = bounds::sample_complexity(eps, t, 2.0, consts)?;
                out.n_samples = Some(sc.threshold(out.n).ceil() as usize);
            }
        }
        ExperimentId::GaussianBaseline if out.n_samples.is_none() => {
            let eps = out
                .eps
                .ok_or_else(|| Error::Config("gaussian-baseline needs eps".into()))?;
            out.n_samples = Some((4.0 * out.n as f64 / (eps * eps)).ceil() as usize);
        }
        _ => {}
    }
    let count = out
        .n_samples
        .ok_or_else(|| Error::Config(format!("experiment {} needs N", id.name())))?;
    if count == 0 {
        return Err(Error::Config("grid point has N = 0".into()));
    }
    match id {
        ExperimentId::TwoSidedBand | ExperimentId::MpDistance => {
            if out.n > count {
                return Err(Error::Config(format!(
                    "{} requires n <= N, got n = {}, N = {count}",
                    id.name(),
                    out.n
                )));
            }
        }
        ExperimentId::RestrictedNormSweep => {
            let m = out
                .m
                .ok_or_else(|| Error::Config("restricted-norm-sweep needs m".into()))?;
            if m == 0 || m > count {
                return Err(Error::Config(format!(
                    "restricted-norm-sweep needs 1 <= m <= N, got m = {m}, N = {count}"
                )));
            }
        }
        ExperimentId::PMomentProcess => {
            let p = out
                .p
                .ok_or_else(|| Error::Config("p-moment-process needs p".into()))?;
            if p < 1.0 {
                return Err(Error::Config(format!("p must be >= 1, got {p}")));
            }
        }
        ExperimentId::ChainingTailSpotcheck => {
            let m = out
                .m
                .ok_or_else(|| Error::Config("chaining-tail-spotcheck needs m".into()))?;
            if m == 0 || m > count {
                return Err(Error::Config(format!(
                    "chaining-tail-spotcheck needs 1 <= m <= N, got m = {m}, N = {count}"
                )));
            }
            let eps = out.eps.unwrap_or(1.0);
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(Error::Config(format!(
                    "net eps must lie in (0, 1], got {eps}"
                )));
            }
            out.eps = Some(eps);
        }
        ExperimentId::ExpLowerTail | ExperimentId::MaxColumnTail if out.t.is_none() => {
            out.t = Some(1.0);
        }
        _ => {}
    }
    Ok(out)
}

/// One finished trial: resolved inputs, derived seed, measured statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: ExperimentId,
    pub grid_index: usize,
    pub grid: GridPoint,
    pub trial: usize,
    pub seed: u64,
    pub stats: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_ms: f64,
}

impl TrialRecord {
    /// The canonical ordering of records within a campaign.
    pub fn sort_key(&self) -> (usize, usize) {
        (self.grid_index, self.trial)
    }

    /// Equality of everything except the wall-clock measurement.
    pub fn same_measurement(&self, other: &TrialRecord) -> bool {
        self.experiment == other.experiment
            && self.grid_index == other.grid_index
            && self.grid == other.grid
            && self.trial == other.trial
            && self.seed == other.seed
            && self.stats == other.stats
            && self.error == other.error
    }
}

/// The per-trial seed: a deterministic hash of the master seed, the resolved
/// grid point, and the trial index.
pub fn derive_trial_seed(master_seed: u64, grid: &GridPoint, trial: usize) -> u64 {
    seeding::derive_seed(master_seed, &[grid.fingerprint(), trial as u64])
}

/// Shared per-campaign state built once: the moment oracle for processes.
pub struct CampaignContext {
    pub constants: BoundConstants,
    pub oracle: Option<MomentOracle>,
}

impl CampaignContext {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        let oracle = match config.experiment {
            ExperimentId::PMomentProcess => Some(MomentOracle::new(
                &config.ensemble,
                config.moment_reference_size,
                seeding::derive_seed(config.master_seed, &[0x0e_ac1e]),
            )?),
            _ => None,
        };
        Ok(CampaignContext {
            constants: config.constants,
            oracle,
        })
    }
}

/// Executes the whole campaign: trials run in parallel, records stream to the
/// JSONL sink as they complete, and the returned set is canonically sorted.
/// Per-trial failures are recorded, never fatal.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    let grid = config.resolved_grid()?;
    let ctx = CampaignContext::prepare(config)?;

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..config.trials).map(move |t| (g, t)))
        .collect();

    let (tx, rx) = std::sync::mpsc::channel::<TrialRecord>();
    let writer = config.output.clone().map(|path| {
        std::thread::spawn(move || -> Result<()> {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            let mut out = BufWriter::new(File::create(&path)?);
            for record in rx {
                serde_json::to_writer(&mut out, &record)?;
                out.write_all(b"\n")?;
                // Completed records survive a mid-campaign kill.
                out.flush()?;
            }
            Ok(())
        })
    });

    let mut records: Vec<TrialRecord> = jobs
        .into_par_iter()
        .map(|(grid_index, trial)| {
            let point = &grid[grid_index];
            let seed = derive_trial_seed(config.master_seed, point, trial);
            let started = Instant::now();
            let outcome = run_trial(config.experiment, &config.ensemble, point, seed, &ctx);
            let wall_ms = started.elapsed().as_secs_f64() * 1e3;
            let record = match outcome {
                Ok(stats) => TrialRecord {
                    experiment: config.experiment,
                    grid_index,
                    grid: point.clone(),
                    trial,
                    seed,
                    stats,
                    error: None,
                    wall_ms,
                },
                Err(err) => TrialRecord {
                    experiment: config.experiment,
                    grid_index,
                    grid: point.clone(),
                    trial,
                    seed,
                    stats: BTreeMap::new(),
                    error: Some(err.to_string()),
                    wall_ms,
                },
            };
            let _ = tx.send(record.clone());
            record
        })
        .collect();
    drop(tx);
    if let Some(handle) = writer {
        handle
            .join()
            .map_err(|_| Error::Config("record writer panicked".into()))??;
    }
    records.sort_by_key(|r| r.sort_key());
    Ok(records)
}

/// Loads records back from a JSONL file.
pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = File::open(path)?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
