use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concentration::compute_mmc;
use crate::error::{Error, Result};
use crate::estimator::{
    exact_norm, one_pass_symmetric_norm, tradeoff_estimate, EstimatorConfig, MmcInput, TradeoffConfig,
};
use crate::levels::LabTargets;
use crate::norms::{NormSpec, SymmetricNorm};
use crate::seed::derive_named;
use crate::stream::{generate_stream, read_stream, FrequencyVector, StreamSpec, StreamUpdate};
use crate::BoxedNorm;

/// Largest dimension the brute-force oracle will materialize.
pub const ORACLE_CAP: usize = 1 << 20;

/// Samples per dimension when the config leaves the concentration constant open.
pub const PROFILE_SAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    OnePass(EstimatorConfig),
    Tradeoff(TradeoffConfig),
}

/// Accepted range of `estimate / exact`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low: f64,
    pub high: f64,
}

impl Band {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.low && x <= self.high
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub trials: usize,
    pub norm: NormSpec,
    /// Generated stream; each trial draws its own seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<StreamSpec>,
    /// Fixed stream read from disk; only the sketch seed varies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_file: Option<PathBuf>,
    /// Dimension for a stream file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub estimator: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lab_targets: Option<LabTargets>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accept: Option<Band>,
    #[serde(default = "yes")]
    pub oracle: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn dimension(&self) -> Result<usize> {
        match (&self.stream, &self.stream_file, self.n) {
            (Some(s), None, _) => Ok(s.n()),
            (None, Some(_), Some(n)) => Ok(n),
            (None, Some(_), None) => Err(Error::Config("a stream file needs the dimension `n`".into())),
            (Some(_), Some(_), _) => Err(Error::Config("give either `stream` or `stream_file`, not both".into())),
            (None, None, _) => Err(Error::Config("missing `stream` or `stream_file`".into())),
        }
    }

    /// Band used when the config gives none.
    pub fn default_band(&self) -> Band {
        match &self.estimator {
            EstimatorKind::OnePass(c) => Band {
                low: 1.0 - 1.25 * c.eps,
                high: 1.0 + 0.25 * c.eps,
            },
            EstimatorKind::Tradeoff(c) => Band {
                low: 1.0 / c.d,
                high: c.d,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub stream_seed: Option<u64>,
    pub sketch_seed: u64,
    pub estimate: f64,
    /// Sandwiched value before recentring; equals `estimate` for one-pass runs.
    pub raw: f64,
    pub exact: Option<f64>,
    pub ratio: Option<f64>,
    pub pass: Option<bool>,
    pub counters: usize,
    pub discarded_maps: usize,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    /// Trials with an exact value.
    pub evaluated: usize,
    pub successes: usize,
    pub success_rate: Option<f64>,
    pub geomean_ratio: Option<f64>,
    pub counters: usize,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub band: Band,
    /// Concentration constant handed to the estimator, before the safety factor.
    pub mmc: Option<f64>,
    pub records: Vec<TrialRecord>,
    pub aggregate: Aggregate,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// RFC-4180 rows, one per trial; no timing, so reruns are byte-identical.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_records_csv(&self.records, w)
    }
}

pub fn write_records_csv<W: Write>(records: &[TrialRecord], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub const CSV_COLUMNS: [&str; 11] = [
    "trial",
    "stream_seed",
    "sketch_seed",
    "estimate",
    "raw",
    "exact",
    "ratio",
    "pass",
    "counters",
    "discarded_maps",
    "truncated",
];

/// Fills in a missing concentration constant by profiling the norm.
fn calibrated(
    estimator: &EstimatorKind,
    l: &dyn SymmetricNorm<f64>,
    n: usize,
    seed: u64,
) -> Result<(EstimatorKind, f64)> {
    let mmc_of = |m: &MmcInput| -> Result<MmcInput> {
        if m.profiled.is_some() || m.bound.is_some() {
            return Ok(m.clone());
        }
        let prof = compute_mmc(l, n, None, PROFILE_SAMPLES, derive_named(seed, "experiment", "profile", 0))?;
        Ok(MmcInput::from_profile(&prof))
    };
    Ok(match estimator {
        EstimatorKind::OnePass(c) => {
            let mut c = c.clone();
            c.mmc = mmc_of(&c.mmc)?;
            let raw = c.mmc.raw()?;
            (EstimatorKind::OnePass(c), raw)
        }
        EstimatorKind::Tradeoff(c) => {
            let mut c = c.clone();
            c.mmc = mmc_of(&c.mmc)?;
            let raw = c.mmc.raw()?;
            (EstimatorKind::Tradeoff(c), raw)
        }
    })
}

fn with_targets(estimator: EstimatorKind, n: usize, targets: Option<&LabTargets>) -> Result<EstimatorKind> {
    let Some(targets) = targets else {
        return Ok(estimator);
    };
    Ok(match estimator {
        EstimatorKind::OnePass(c) => EstimatorKind::OnePass(c.with_lab_targets(n, targets)?),
        EstimatorKind::Tradeoff(c) => EstimatorKind::Tradeoff(c.with_lab_targets(n, targets)?),
    })
}

struct Outcome {
    estimate: f64,
    raw: f64,
    counters: usize,
    discarded_maps: usize,
    truncated: bool,
}

fn estimate_once(
    estimator: &EstimatorKind,
    updates: &[StreamUpdate],
    l: &dyn SymmetricNorm<f64>,
    seed: u64,
) -> Result<Outcome> {
    Ok(match estimator {
        EstimatorKind::OnePass(c) => {
            let e = one_pass_symmetric_norm(updates, l, c, seed)?;
            Outcome {
                estimate: e.estimate,
                raw: e.estimate,
                counters: e.levels.counters,
                discarded_maps: e.levels.discarded_maps,
                truncated: e.truncated,
            }
        }
        EstimatorKind::Tradeoff(c) => {
            let e = tradeoff_estimate(updates, l, c, seed)?;
            Outcome {
                estimate: e.recentred,
                raw: e.raw,
                counters: e.counters,
                discarded_maps: e.levels.discarded_maps,
                truncated: e.truncated,
            }
        }
    })
}

/// Runs `config.trials` seeded trials in parallel; records come back in trial order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let started = Instant::now();
    let n = config.dimension()?;
    if config.oracle && n > ORACLE_CAP {
        return Err(Error::Config(format!(
            "the exact oracle caps at n ≤ {ORACLE_CAP}; set `oracle` to false"
        )));
    }
    let band = config.accept.unwrap_or_else(|| config.default_band());
    let l: BoxedNorm<f64> = config.norm.build(n)?;
    let fixed: Option<Vec<StreamUpdate>> = match &config.stream_file {
        Some(path) => Some(read_stream(std::io::BufReader::new(std::fs::File::open(path)?))?),
        None => None,
    };
    if config.trials == 0 {
        return Ok(ExperimentReport {
            config: config.clone(),
            band,
            mmc: None,
            records: Vec::new(),
            aggregate: aggregate(&[], started),
        });
    }
    let (estimator, mmc) = calibrated(&config.estimator, l.as_ref(), n, config.seed)?;
    let estimator = with_targets(estimator, n, config.lab_targets.as_ref())?;
    let records = (0..config.trials)
        .into_par_iter()
        .map(|trial| -> Result<TrialRecord> {
            let sketch_seed = derive_named(config.seed, "experiment", "sketch", trial as u64);
            let (updates, stream_seed, bound) = match (&fixed, &config.stream) {
                (Some(ups), _) => (ups.clone(), None, crate::stream::default_bound(n)),
                (None, Some(spec)) => {
                    let s = derive_named(config.seed, "experiment", "stream", trial as u64);
                    let spec = spec.clone().with_seed(s);
                    (generate_stream(&spec)?, Some(s), spec.bound())
                }
                (None, None) => unreachable!("dimension() checked the stream source"),
            };
            let out = estimate_once(&estimator, &updates, l.as_ref(), sketch_seed)?;
            let exact = if config.oracle {
                let mut v = FrequencyVector::with_bound(n, bound);
                v.apply_all(&updates)?;
                Some(exact_norm(&v, l.as_ref()))
            } else {
                None
            };
            let ratio = exact.map(|x| if x > 0.0 { out.estimate / x } else if out.estimate == 0.0 { 1.0 } else { f64::INFINITY });
            Ok(TrialRecord {
                trial,
                stream_seed,
                sketch_seed,
                estimate: out.estimate,
                raw: out.raw,
                exact,
                ratio,
                pass: ratio.map(|r| band.contains(r)),
                counters: out.counters,
                discarded_maps: out.discarded_maps,
                truncated: out.truncated,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&records, started);
    Ok(ExperimentReport {
        config: config.clone(),
        band,
        mmc: Some(mmc),
        records,
        aggregate,
    })
}

fn aggregate(records: &[TrialRecord], started: Instant) -> Aggregate {
    let ratios: Vec<f64> = records.iter().filter_map(|r| r.ratio).collect();
    let successes = records.iter().filter(|r| r.pass == Some(true)).count();
    let positive: Vec<f64> = ratios.iter().copied().filter(|r| *r > 0.0 && r.is_finite()).collect();
    Aggregate {
        trials: records.len(),
        evaluated: ratios.len(),
        successes,
        success_rate: (!ratios.is_empty()).then(|| successes as f64 / ratios.len() as f64),
        geomean_ratio: (!positive.is_empty())
            .then(|| (positive.iter().map(|r| r.ln()).sum::<f64>() / positive.len() as f64).exp()),
        counters: records.iter().map(|r| r.counters).max().unwrap_or(0),
        wall_time_s: started.elapsed().as_secs_f64(),
    }
}
