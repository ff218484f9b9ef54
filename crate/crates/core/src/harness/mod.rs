//! Reproducible Monte Carlo experiments.
//!
//! An experiment first draws raw [`Series`] (one task per replicate, each on
//! its own RNG stream) and then evaluates them into estimates, tests and
//! verdicts. Evaluation is a pure function of the configuration and the
//! series, so [`recompute`] reproduces every verdict from emitted raw data.

mod emit;
mod experiments;
pub mod stats;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::offspring::{DistSpec, OffspringDistribution};
use crate::walk::DEFAULT_DRAW_BUDGET;

pub use emit::{emit, to_csv, to_svgs};

/// SplitMix64 output for the given state (increment `0x9E3779B97F4A7C15`,
/// multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`).
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha8 generator for replicate `index`: the 256-bit key is four
/// successive SplitMix64 outputs from `master_seed`, and `index` selects
/// the 64-bit ChaCha stream, so distinct indices never share keystream.
pub fn rng_stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = master_seed;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(state).to_le_bytes());
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Stream index for replicate `rep` of role `role` at the `n_index`-th size.
pub fn stream_index(n_index: usize, role: u8, rep: usize) -> u64 {
    ((n_index as u64) << 40) | ((role as u64) << 32) | rep as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Condensation,
    Fluctuation,
    Hdelta,
    Height,
    Bigjump,
    Forests,
    Prop4,
}

/// How conditioned trees are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerChoice {
    /// Plain rejection; exact but slow for heavy tails.
    Exact,
    /// Exact on `{max X ≥ t}` with `P(max X < t | bridge) ≤ tv_bound`.
    BigJump { tv_bound: f64 },
    /// Uncertified planted bridge.
    Planted,
}

impl Default for SamplerChoice {
    fn default() -> Self {
        SamplerChoice::BigJump { tv_bound: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmitFormat {
    Json,
    Csv,
    Svg,
}

/// Pass/fail thresholds. Limit theorems are judged at the largest `n` of
/// the configuration; smaller sizes enter through trend comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Significance level of every KS and χ² test.
    pub alpha: f64,
    /// Accepted range of the median of `Δ/(n(1-m))`.
    pub condensation_band: [f64; 2],
    /// Upper bound on the median of `Δ₂/n`.
    pub second_max_ratio: f64,
    /// Relative error allowed for the median of `H/log n`.
    pub height_relative: f64,
    /// Fraction of heights required inside the threshold band.
    pub band_fraction: f64,
    /// Relative error allowed for the normalized `log u_n`.
    pub prop4_relative: f64,
    /// Largest relative change of `u_n` over the last decade counted as flat.
    pub tight_change: f64,
    /// Smallest relative drop of `u_n` over the last decade counted as drift.
    pub drift_change: f64,
    /// Last separate bin of the `H_Δ` histogram; chosen from the expected
    /// counts when absent.
    pub hdelta_max_bin: Option<usize>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            condensation_band: [0.7, 1.05],
            second_max_ratio: 0.05,
            height_relative: 0.25,
            band_fraction: 0.9,
            prop4_relative: 0.25,
            tight_change: 0.01,
            drift_change: 0.10,
            hdelta_max_bin: None,
        }
    }
}

fn default_replicates() -> usize {
    1
}

fn default_max_draws() -> u64 {
    DEFAULT_DRAW_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub dist: DistSpec,
    pub n_values: Vec<u64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub sampler: SamplerChoice,
    pub master_seed: u64,
    #[serde(default)]
    pub emit: Vec<EmitFormat>,
    /// Include raw series in the result.
    #[serde(default)]
    pub emit_raw: bool,
    /// Fraction `δ` of the star's children forming the forest; defaults to
    /// `(1-m)/2`.
    #[serde(default)]
    pub forest_fraction: Option<f64>,
    /// Elementary draw budget per conditioned sample.
    #[serde(default = "default_max_draws")]
    pub max_draws: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentId, dist: DistSpec, n_values: Vec<u64>, replicates: usize, master_seed: u64) -> Self {
        Self {
            experiment,
            dist,
            n_values,
            replicates,
            sampler: SamplerChoice::default(),
            master_seed,
            emit: vec![EmitFormat::Json],
            emit_raw: false,
            forest_fraction: None,
            max_draws: DEFAULT_DRAW_BUDGET,
            tolerances: Tolerances::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Checks the configuration against the distribution it names.
    pub fn validate(&self, dist: &OffspringDistribution) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Parameter("replicates must be at least 1".into()));
        }
        if self.n_values.is_empty() {
            return Err(Error::Parameter("n_values must be nonempty".into()));
        }
        if self.n_values.contains(&0) {
            return Err(Error::Parameter("every n must be positive".into()));
        }
        let t = &self.tolerances;
        if !(t.alpha > 0.0 && t.alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha {} outside (0,1)", t.alpha)));
        }
        if let SamplerChoice::BigJump { tv_bound } = self.sampler {
            if !(0.0..1.0).contains(&tv_bound) {
                return Err(Error::Parameter(format!("tv bound {tv_bound} outside [0,1)")));
            }
        }
        if let Some(delta) = self.forest_fraction {
            let limit = 1.0 - dist.mean();
            if !(delta > 0.0 && delta < limit) {
                return Err(Error::Parameter(format!("forest fraction {delta} must lie in (0, 1-m) = (0, {limit})")));
            }
        }
        Ok(())
    }
}

/// Raw per-replicate values of one statistic at one size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub n: u64,
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub n: u64,
    pub name: String,
    pub value: f64,
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub n: u64,
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tolerance {
    PValueAtLeast { alpha: f64 },
    Within { lo: f64, hi: f64 },
    AtMost { bound: f64 },
    AtLeast { bound: f64 },
    /// Strictly below a reference value from the same result.
    Below { reference: f64 },
}

impl Tolerance {
    pub fn admits(&self, observed: f64) -> bool {
        match *self {
            Tolerance::PValueAtLeast { alpha } => observed >= alpha,
            Tolerance::Within { lo, hi } => (lo..=hi).contains(&observed),
            Tolerance::AtMost { bound } => observed <= bound,
            Tolerance::AtLeast { bound } => observed >= bound,
            Tolerance::Below { reference } => observed < reference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub n: Option<u64>,
    pub observed: f64,
    pub tolerance: Tolerance,
    pub passed: bool,
}

impl Verdict {
    pub fn new(name: impl Into<String>, n: Option<u64>, observed: f64, tolerance: Tolerance) -> Self {
        let passed = tolerance.admits(observed);
        Self { name: name.into(), n, observed, tolerance, passed }
    }
}

/// Conditioned-sample cost at one size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerReport {
    pub n: u64,
    pub sampler: SamplerChoice,
    pub samples: u64,
    pub tries: u64,
    pub draws: u64,
    pub acceptance_rate: f64,
    /// Certified TV distance of each sample to the exact law, if any.
    pub tv_bound: Option<f64>,
    pub threshold: Option<i64>,
}

/// Binned counts for histogram plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub n: u64,
    pub name: String,
    /// Lower edge of each bin; the last bin collects everything above.
    pub bins: Vec<i64>,
    pub observed: Vec<u64>,
    pub expected: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Evaluation {
    pub estimates: Vec<Estimate>,
    pub tests: Vec<TestRecord>,
    pub verdicts: Vec<Verdict>,
    pub histograms: Vec<Histogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: ExperimentId,
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub estimates: Vec<Estimate>,
    pub tests: Vec<TestRecord>,
    pub verdicts: Vec<Verdict>,
    pub samplers: Vec<SamplerReport>,
    pub histograms: Vec<Histogram>,
    /// Raw series, present when `emit_raw` is set.
    pub raw: Vec<Series>,
    pub runtime_seconds: f64,
}

impl ExperimentResult {
    /// Result with no data.
    pub fn skeleton(config: ExperimentConfig) -> Self {
        Self {
            experiment: config.experiment,
            master_seed: config.master_seed,
            config,
            estimates: Vec::new(),
            tests: Vec::new(),
            verdicts: Vec::new(),
            samplers: Vec::new(),
            histograms: Vec::new(),
            raw: Vec::new(),
            runtime_seconds: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// JSON with the runtime field zeroed, for reproducibility comparisons.
    pub fn canonical_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.runtime_seconds = 0.0;
        copy.to_json()
    }

    pub fn estimate(&self, n: u64, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.n == n && e.name == name)
    }

    pub fn test(&self, n: u64, name: &str) -> Option<&TestRecord> {
        self.tests.iter().find(|t| t.n == n && t.name == name)
    }
}

/// Runs an experiment on a pool of `workers` threads. The result does not
/// depend on `workers`.
pub fn run(config: &ExperimentConfig, workers: usize) -> Result<ExperimentResult> {
    let start = Instant::now();
    let dist = config.dist.build()?;
    config.validate(&dist)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    let (series, samplers, evaluation) = pool.install(|| -> Result<_> {
        let (series, samplers) = experiments::sample(config, &dist)?;
        let evaluation = experiments::evaluate(config, &dist, &series)?;
        Ok((series, samplers, evaluation))
    })?;
    let mut result = ExperimentResult::skeleton(config.clone());
    result.estimates = evaluation.estimates;
    result.tests = evaluation.tests;
    result.verdicts = evaluation.verdicts;
    result.histograms = evaluation.histograms;
    result.samplers = samplers;
    if config.emit_raw {
        result.raw = series;
    }
    result.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Re-evaluates a result from its raw series.
pub fn recompute(result: &ExperimentResult) -> Result<Evaluation> {
    if !result.config.emit_raw {
        return Err(Error::Parameter("result carries no raw series".into()));
    }
    let dist = result.config.dist.build()?;
    experiments::evaluate(&result.config, &dist, &result.raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cauchy() -> DistSpec {
        DistSpec::Cauchy { beta: 1.0, c: 1.0, m: 0.5 }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |s, i| {
            let mut r = rng_stream(s, i);
            (0..64).map(|_| r.gen::<u64>()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7, 3), draw(7, 3));
        assert_ne!(draw(7, 3), draw(7, 4));
        assert_ne!(draw(7, 3), draw(8, 3));
        assert_ne!(stream_index(1, 0, 0), stream_index(0, 1, 0));
    }

    #[test]
    fn splitmix_reference() {
        // first output of the reference generator seeded with 0
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn config_validation() {
        let dist = cauchy().build().unwrap();
        let mut cfg = ExperimentConfig::new(ExperimentId::Forests, cauchy(), vec![100], 10, 1);
        assert!(cfg.validate(&dist).is_ok());
        cfg.forest_fraction = Some(0.5);
        assert!(cfg.validate(&dist).is_err());
        cfg.forest_fraction = Some(0.49);
        assert!(cfg.validate(&dist).is_ok());
        cfg.replicates = 0;
        assert!(cfg.validate(&dist).is_err());
        cfg.replicates = 1;
        cfg.n_values.clear();
        assert!(cfg.validate(&dist).is_err());
        let bad = r#"{"experiment":"nope","dist":{"family":"table","pmf":[1.0]},"n_values":[1],"master_seed":1}"#;
        assert!(ExperimentConfig::from_json(bad).is_err());
    }

    #[test]
    fn skeleton_round_trips() {
        let cfg = ExperimentConfig::new(ExperimentId::Prop4, cauchy(), vec![10], 1, 0);
        let empty = ExperimentResult::skeleton(cfg);
        let back = ExperimentResult::from_json(&empty.to_json().unwrap()).unwrap();
        assert_eq!(back, empty);
        assert!(empty.passed());
    }

    #[test]
    fn tolerance_semantics() {
        assert!(Tolerance::PValueAtLeast { alpha: 1e-3 }.admits(0.5));
        assert!(!Tolerance::PValueAtLeast { alpha: 1e-3 }.admits(1e-4));
        assert!(Tolerance::Within { lo: 0.7, hi: 1.05 }.admits(1.05));
        assert!(!Tolerance::Below { reference: 0.3 }.admits(0.3));
    }
}
