use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::stats::{chi_square_gof, ks_one_sample, ks_two_sample, median, median_std_error, merge_sparse_bins};
use super::{
    rng_stream, stream_index, Estimate, Evaluation, ExperimentConfig, ExperimentId, Histogram, SamplerChoice,
    SamplerReport, Series, TestRecord, Tolerance, Verdict,
};
use crate::asymptotics::{centering_b, scaling_a};
use crate::error::{Error, Result};
use crate::heights::{height_prediction, log_u_slope, q_table};
use crate::offspring::{OffspringDistribution, OffspringSampler};
use crate::oracle::demax_sum_tv;
use crate::tree::{decode, forest_height, graft_forest, sample_bienayme, PlaneTree};
use crate::walk::{
    big_jump_split, sample_bridge_exact, sample_bridge_planted, sample_iid_jumps, vervaat, BigJumpSampler, DrawCost,
    JumpVector,
};

const ROLE_CONDITIONED: u8 = 0;
const ROLE_IID: u8 = 1;

/// Sizes up to which the bigjump experiment uses the exact oracle.
const ORACLE_MAX_N: u64 = 8;
const ORACLE_CAP: u64 = 8;
/// Largest offspring total kept in exact iid-sum laws.
const IID_SUM_RANGE: u64 = 100_000;
/// Node budget of an unconditioned tree, in multiples of `n`.
const FOREST_BUDGET_FACTOR: u64 = 10;

enum BridgeSource {
    Exact,
    BigJump(BigJumpSampler),
    Planted,
}

impl BridgeSource {
    fn new(choice: SamplerChoice, dist: &OffspringDistribution, n: usize) -> Result<Self> {
        Ok(match choice {
            SamplerChoice::Exact => BridgeSource::Exact,
            SamplerChoice::BigJump { tv_bound } => BridgeSource::BigJump(BigJumpSampler::new(dist, n, tv_bound)?),
            SamplerChoice::Planted => BridgeSource::Planted,
        })
    }

    fn draw(
        &self,
        sampler: &mut OffspringSampler<'_>,
        n: usize,
        rng: &mut ChaCha8Rng,
        max_draws: u64,
    ) -> Result<(JumpVector, DrawCost)> {
        match self {
            BridgeSource::Exact => sample_bridge_exact(sampler, n, rng, max_draws),
            BridgeSource::BigJump(bj) => bj.sample(sampler, rng, max_draws),
            BridgeSource::Planted => sample_bridge_planted(sampler, n, rng),
        }
    }

    fn tv_bound(&self) -> Option<f64> {
        match self {
            BridgeSource::Exact => Some(0.0),
            BridgeSource::BigJump(bj) => Some(bj.residual()),
            BridgeSource::Planted => None,
        }
    }

    fn threshold(&self) -> Option<i64> {
        match self {
            BridgeSource::BigJump(bj) => Some(bj.threshold()),
            _ => None,
        }
    }
}

/// One conditioned bridge per replicate, mapped through `f`.
fn sample_bridges<T, F>(
    config: &ExperimentConfig,
    dist: &OffspringDistribution,
    n_index: usize,
    n: u64,
    f: F,
) -> Result<(Vec<T>, SamplerReport)>
where
    T: Send,
    F: Fn(JumpVector) -> Result<T> + Sync,
{
    let source = BridgeSource::new(config.sampler, dist, n as usize)?;
    let draws: Vec<(T, DrawCost)> = (0..config.replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_stream(config.master_seed, stream_index(n_index, ROLE_CONDITIONED, rep));
            let mut sampler = dist.sampler();
            let (bridge, cost) = source.draw(&mut sampler, n as usize, &mut rng, config.max_draws)?;
            Ok((f(bridge)?, cost))
        })
        .collect::<Result<_>>()?;
    let mut total = DrawCost::default();
    let values = draws
        .into_iter()
        .map(|(v, c)| {
            total.add(c);
            v
        })
        .collect();
    let report = SamplerReport {
        n,
        sampler: config.sampler,
        samples: config.replicates as u64,
        tries: total.tries,
        draws: total.draws,
        acceptance_rate: config.replicates as f64 / total.tries.max(1) as f64,
        tv_bound: source.tv_bound(),
        threshold: source.threshold(),
    };
    Ok((values, report))
}

fn sample_trees<T, F>(
    config: &ExperimentConfig,
    dist: &OffspringDistribution,
    n_index: usize,
    n: u64,
    f: F,
) -> Result<(Vec<T>, SamplerReport)>
where
    T: Send,
    F: Fn(&PlaneTree) -> T + Sync,
{
    sample_bridges(config, dist, n_index, n, |bridge| Ok(f(&decode(&vervaat(&bridge)?)?)))
}

/// One unconditioned draw per replicate on the iid streams.
fn sample_iid<T, F>(config: &ExperimentConfig, dist: &OffspringDistribution, n_index: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut OffspringSampler<'_>, &mut ChaCha8Rng) -> T + Sync,
{
    (0..config.replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_stream(config.master_seed, stream_index(n_index, ROLE_IID, rep));
            let mut sampler = dist.sampler();
            f(&mut sampler, &mut rng)
        })
        .collect()
}

fn push_columns(out: &mut Vec<Series>, n: u64, names: &[&str], rows: Vec<Vec<f64>>) {
    for (i, name) in names.iter().enumerate() {
        out.push(Series { n, name: (*name).to_string(), values: rows.iter().map(|r| r[i]).collect() });
    }
}

/// Draws the raw series of an experiment.
pub(super) fn sample(config: &ExperimentConfig, dist: &OffspringDistribution) -> Result<(Vec<Series>, Vec<SamplerReport>)> {
    let mut series = Vec::new();
    let mut reports = Vec::new();
    for (idx, &n) in config.n_values.iter().enumerate() {
        match config.experiment {
            ExperimentId::Condensation => {
                let (rows, rep) = sample_trees(config, dist, idx, n, |t| {
                    let s = t.stats();
                    vec![s.delta as f64, s.delta2 as f64]
                })?;
                push_columns(&mut series, n, &["delta", "delta2"], rows);
                reports.push(rep);
            }
            ExperimentId::Fluctuation => {
                let (rows, rep) = sample_trees(config, dist, idx, n, |t| {
                    let s = t.stats();
                    vec![s.delta as f64, s.delta2 as f64]
                })?;
                push_columns(&mut series, n, &["delta", "delta2"], rows);
                reports.push(rep);
                let sums = sample_iid(config, dist, idx, |s, rng| -(sample_iid_jumps(s, n as usize - 1, rng).sum() as f64));
                series.push(Series { n, name: "iid_negated_sum".into(), values: sums });
            }
            ExperimentId::Hdelta => {
                let (rows, rep) = sample_trees(config, dist, idx, n, |t| vec![t.stats().h_delta as f64])?;
                push_columns(&mut series, n, &["h_delta"], rows);
                reports.push(rep);
            }
            ExperimentId::Height => {
                let (rows, rep) = sample_trees(config, dist, idx, n, |t| vec![t.stats().height as f64])?;
                push_columns(&mut series, n, &["height"], rows);
                reports.push(rep);
            }
            ExperimentId::Bigjump => {
                if n <= ORACLE_MAX_N {
                    continue;
                }
                let (rows, rep) = sample_bridges(config, dist, idx, n, |bridge| {
                    let split = big_jump_split(&bridge)?;
                    let rest = &split.rest;
                    Ok(vec![rest.sum() as f64, rest.max().unwrap_or(-1) as f64])
                })?;
                push_columns(&mut series, n, &["rest_sum", "rest_max"], rows);
                reports.push(rep);
                let iid = sample_iid(config, dist, idx, |s, rng| {
                    let v = sample_iid_jumps(s, n as usize - 1, rng);
                    vec![v.sum() as f64, v.max().unwrap_or(-1) as f64]
                });
                push_columns(&mut series, n, &["iid_sum", "iid_max"], iid);
            }
            ExperimentId::Forests => {
                let k = forest_size(config, dist, n);
                let (rows, rep) = sample_trees(config, dist, idx, n, |t| {
                    let forest = graft_forest(t, 1, k.max(1)).expect("k >= 1");
                    let first = forest[0].as_ref().map_or(0, PlaneTree::len);
                    vec![forest_height(&forest) as f64, first as f64]
                })?;
                push_columns(&mut series, n, &["forest_height", "first_size"], rows);
                reports.push(rep);
                let budget = FOREST_BUDGET_FACTOR * n;
                let iid = sample_iid(config, dist, idx, |s, rng| {
                    // an exceeded budget counts as height n and size budget
                    let mut max_height = 0usize;
                    let mut first = 0u64;
                    for i in 0..k.max(1) {
                        let (h, size) = match sample_bienayme(s, rng, budget) {
                            Some(t) => (t.height, t.size),
                            None => (n as usize, budget),
                        };
                        max_height = max_height.max(h);
                        if i == 0 {
                            first = size;
                        }
                    }
                    vec![max_height as f64, first as f64]
                });
                push_columns(&mut series, n, &["iid_forest_height", "iid_first_size"], iid);
            }
            ExperimentId::Prop4 => {}
        }
    }
    Ok((series, reports))
}

fn forest_size(config: &ExperimentConfig, dist: &OffspringDistribution, n: u64) -> usize {
    let delta = config.forest_fraction.unwrap_or(0.5 * (1.0 - dist.mean()));
    (delta * n as f64).floor() as usize
}

fn find<'a>(series: &'a [Series], n: u64, name: &str) -> Result<&'a [f64]> {
    series
        .iter()
        .find(|s| s.n == n && s.name == name)
        .map(|s| s.values.as_slice())
        .ok_or_else(|| Error::Parameter(format!("missing series {name} at n={n}")))
}

fn frechet_cdf(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

#[derive(Default)]
struct Collector {
    eval: Evaluation,
}

impl Collector {
    fn estimate(&mut self, n: u64, name: &str, value: f64, std_error: Option<f64>) {
        self.eval.estimates.push(Estimate { n, name: name.into(), value, std_error });
    }

    fn median(&mut self, n: u64, name: &str, values: &[f64]) -> f64 {
        let m = median(values).unwrap_or(f64::NAN);
        self.estimate(n, name, m, median_std_error(values));
        m
    }

    fn test(&mut self, n: u64, name: &str, outcome: super::stats::TestOutcome) {
        self.eval.tests.push(TestRecord { n, name: name.into(), statistic: outcome.statistic, p_value: outcome.p_value });
    }

    fn verdict(&mut self, name: &str, n: Option<u64>, observed: f64, tolerance: Tolerance) {
        self.eval.verdicts.push(Verdict::new(name, n, observed, tolerance));
    }

    fn p_verdict(&mut self, config: &ExperimentConfig, name: &str, n: u64) {
        let p = self.eval.tests.iter().find(|t| t.n == n && t.name == name).map(|t| t.p_value).unwrap_or(0.0);
        self.verdict(name, Some(n), p, Tolerance::PValueAtLeast { alpha: config.tolerances.alpha });
    }

    fn statistic(&self, n: u64, name: &str) -> f64 {
        self.eval.tests.iter().find(|t| t.n == n && t.name == name).map(|t| t.statistic).unwrap_or(f64::NAN)
    }

    fn value(&self, n: u64, name: &str) -> f64 {
        self.eval.estimates.iter().find(|e| e.n == n && e.name == name).map(|e| e.value).unwrap_or(f64::NAN)
    }

    /// Requires `name` to strictly decrease along consecutive sizes.
    fn decreasing(&mut self, sizes: &[u64], name: &str, from_tests: bool) {
        for pair in sizes.windows(2) {
            let get = |n| if from_tests { self.statistic(n, name) } else { self.value(n, name) };
            let (prev, next) = (get(pair[0]), get(pair[1]));
            self.verdict(&format!("{name}_decreasing"), Some(pair[1]), next, Tolerance::Below { reference: prev });
        }
    }
}

/// Evaluates raw series into estimates, tests and verdicts.
pub(super) fn evaluate(config: &ExperimentConfig, dist: &OffspringDistribution, series: &[Series]) -> Result<Evaluation> {
    let mut sizes = config.n_values.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let largest = *sizes.last().expect("validated nonempty");
    let m = dist.mean();
    let tol = &config.tolerances;
    let mut c = Collector::default();
    match config.experiment {
        ExperimentId::Condensation => {
            for &n in &sizes {
                let a_n = scaling_a(dist, n) as f64;
                let delta: Vec<f64> = find(series, n, "delta")?.iter().map(|d| d / (n as f64 * (1.0 - m))).collect();
                let second = find(series, n, "delta2")?;
                let over_n: Vec<f64> = second.iter().map(|d| d / n as f64).collect();
                let over_a: Vec<f64> = second.iter().map(|d| d / a_n).collect();
                c.median(n, "median_delta_ratio", &delta);
                c.median(n, "median_second_ratio", &over_n);
                c.estimate(n, "a_n", a_n, None);
                // Δ ≈ -b_n, so the finite-n center of the ratio is -b_n/(n(1-m))
                c.estimate(n, "predicted_delta_ratio", -centering_b(dist, n) / (n as f64 * (1.0 - m)), None);
                c.test(n, "second_max_frechet", ks_one_sample(&over_a, frechet_cdf)?);
            }
            let [lo, hi] = tol.condensation_band;
            c.verdict("median_delta_ratio", Some(largest), c.value(largest, "median_delta_ratio"), Tolerance::Within { lo, hi });
            c.verdict(
                "median_second_ratio",
                Some(largest),
                c.value(largest, "median_second_ratio"),
                Tolerance::AtMost { bound: tol.second_max_ratio },
            );
            c.p_verdict(config, "second_max_frechet", largest);
        }
        ExperimentId::Fluctuation => {
            for &n in &sizes {
                let a_n = scaling_a(dist, n) as f64;
                let delta = find(series, n, "delta")?;
                let iid = find(series, n, "iid_negated_sum")?;
                c.median(n, "median_delta", delta);
                c.median(n, "median_iid_negated_sum", iid);
                c.test(n, "delta_vs_iid", ks_two_sample(delta, iid)?);
                let over_a: Vec<f64> = find(series, n, "delta2")?.iter().map(|d| d / a_n).collect();
                c.test(n, "second_max_frechet", ks_one_sample(&over_a, frechet_cdf)?);
            }
            c.p_verdict(config, "delta_vs_iid", largest);
            c.p_verdict(config, "second_max_frechet", largest);
            if sizes.len() > 1 {
                let first = c.statistic(sizes[0], "delta_vs_iid");
                c.verdict(
                    "delta_vs_iid_statistic_shrinks",
                    Some(largest),
                    c.statistic(largest, "delta_vs_iid"),
                    Tolerance::Below { reference: first },
                );
            }
        }
        ExperimentId::Hdelta => {
            for &n in &sizes {
                let values = find(series, n, "h_delta")?;
                let total = values.len() as f64;
                let geometric = |j: usize| (1.0 - m) * m.powi(j as i32);
                let last = tol.hdelta_max_bin.unwrap_or_else(|| {
                    let mut j = 0;
                    while total * geometric(j + 1) >= 5.0 && total * m.powi(j as i32 + 2) >= 5.0 {
                        j += 1;
                    }
                    j
                });
                let mut observed = vec![0u64; last + 2];
                for &h in values {
                    observed[(h as usize).min(last + 1)] += 1;
                }
                let mut expected: Vec<f64> = (0..=last).map(|j| total * geometric(j)).collect();
                expected.push(total * m.powi(last as i32 + 1));
                c.eval.histograms.push(Histogram {
                    n,
                    name: "h_delta".into(),
                    bins: (0..=last as i64 + 1).collect(),
                    observed: observed.clone(),
                    expected: Some(expected.clone()),
                });
                let (obs, exp) = merge_sparse_bins(&observed, &expected, 5.0);
                c.test(n, "h_delta_geometric", chi_square_gof(&obs, &exp)?);
                c.estimate(n, "last_bin", last as f64, None);
                c.estimate(n, "p_zero", observed[0] as f64 / total, Some((m * (1.0 - m) / total).sqrt()));
            }
            c.p_verdict(config, "h_delta_geometric", largest);
        }
        ExperimentId::Height => {
            let target = 1.0 / (1.0 / m).ln();
            let center = (largest as f64).ln() * target;
            let table = q_table(dist, (3.0 * center).ceil() as usize + 1)?;
            for &n in &sizes {
                let heights = find(series, n, "height")?;
                let log_n = (n as f64).ln();
                let ratios: Vec<f64> = heights.iter().map(|h| h / log_n).collect();
                let med = c.median(n, "median_height_ratio", &ratios);
                c.estimate(n, "relative_error", (med - target).abs() / target, None);
                let pred = height_prediction(dist, &table, n)?;
                let (lo, hi) = pred.threshold_band;
                let inside = heights.iter().filter(|&&h| h >= lo as f64 && h <= hi as f64).count();
                c.estimate(n, "band_low", lo as f64, None);
                c.estimate(n, "band_high", hi as f64, None);
                c.estimate(n, "band_fraction", inside as f64 / heights.len() as f64, None);
                c.estimate(n, "first_order_center", pred.center, None);
                if let Some(second) = pred.second_order {
                    c.estimate(n, "second_order_center", second, None);
                }
                c.estimate(n, "median_height", median(heights).unwrap_or(f64::NAN), None);
            }
            c.verdict(
                "height_ratio_relative_error",
                Some(largest),
                c.value(largest, "relative_error"),
                Tolerance::AtMost { bound: tol.height_relative },
            );
            c.decreasing(&sizes, "relative_error", false);
            for &n in &sizes {
                c.verdict("band_fraction", Some(n), c.value(n, "band_fraction"), Tolerance::AtLeast { bound: tol.band_fraction });
            }
        }
        ExperimentId::Bigjump => {
            let small: Vec<u64> = sizes.iter().copied().filter(|&n| (2..=ORACLE_MAX_N).contains(&n)).collect();
            for &n in &small {
                let range = if dist.is_finite_support() { (n - 1) * dist.head_len() as u64 } else { IID_SUM_RANGE };
                let tv = demax_sum_tv(dist, n as usize, ORACLE_CAP, range)?;
                c.estimate(n, "demax_sum_tv", tv.value, Some(tv.error));
            }
            c.decreasing(&small, "demax_sum_tv", false);
            let large: Vec<u64> = sizes.iter().copied().filter(|&n| n > ORACLE_MAX_N).collect();
            for &n in &large {
                c.test(n, "rest_sum_vs_iid", ks_two_sample(find(series, n, "rest_sum")?, find(series, n, "iid_sum")?)?);
                c.test(n, "rest_max_vs_iid", ks_two_sample(find(series, n, "rest_max")?, find(series, n, "iid_max")?)?);
            }
            if let Some(&n) = large.last() {
                c.p_verdict(config, "rest_sum_vs_iid", n);
                c.p_verdict(config, "rest_max_vs_iid", n);
            }
        }
        ExperimentId::Forests => {
            for &n in &sizes {
                let k = forest_size(config, dist, n);
                c.estimate(n, "forest_size", k as f64, None);
                let iid_heights = find(series, n, "iid_forest_height")?;
                let exceeded = iid_heights.iter().filter(|&&h| h >= n as f64).count();
                c.estimate(n, "budget_exceedances", exceeded as f64, None);
                c.test(
                    n,
                    "forest_height_vs_iid",
                    ks_two_sample(find(series, n, "forest_height")?, iid_heights)?,
                );
                c.test(
                    n,
                    "first_size_vs_iid",
                    ks_two_sample(find(series, n, "first_size")?, find(series, n, "iid_first_size")?)?,
                );
            }
            c.p_verdict(config, "forest_height_vs_iid", largest);
            c.p_verdict(config, "first_size_vs_iid", largest);
        }
        ExperimentId::Prop4 => evaluate_prop4(config, dist, &sizes, &mut c)?,
    }
    Ok(c.eval)
}

fn evaluate_prop4(config: &ExperimentConfig, dist: &OffspringDistribution, sizes: &[u64], c: &mut Collector) -> Result<()> {
    let meta = dist
        .family_meta()
        .ok_or_else(|| Error::Parameter("prop4 needs a Cauchy-family distribution".into()))?;
    let tol = &config.tolerances;
    let m = dist.mean();
    let largest = *sizes.last().expect("nonempty");
    let table = q_table(dist, largest as usize)?;
    if let Some(overlap) = table.overlap {
        c.estimate(overlap.start as u64, "overlap_max_rel_diff", overlap.max_rel_diff, None);
    }
    let slope = log_u_slope(meta.beta, meta.c_eff(), m);
    for &n in sizes {
        let log_u = table.log_u[n as usize];
        c.estimate(n, "log_u", log_u, None);
        if meta.beta <= 1.0 && n >= 2 {
            let scale = if meta.beta == 1.0 { (n as f64).ln() } else { (n as f64).powf(1.0 - meta.beta) };
            let ratio = log_u / scale / slope;
            c.estimate(n, "slope_ratio", ratio, None);
            c.estimate(n, "relative_error", (ratio - 1.0).abs(), None);
        }
    }
    if meta.beta <= 1.0 && largest >= 2 {
        c.verdict(
            "log_u_relative_error",
            Some(largest),
            c.value(largest, "relative_error"),
            Tolerance::AtMost { bound: tol.prop4_relative },
        );
        let first = sizes.iter().copied().find(|&n| n >= 2).expect("largest >= 2");
        if first < largest {
            c.verdict(
                "log_u_relative_error_shrinks",
                Some(largest),
                c.value(largest, "relative_error"),
                Tolerance::Below { reference: c.value(first, "relative_error") },
            );
        }
    }
    if largest >= 10 {
        let change = (table.log_u[largest as usize] - table.log_u[largest as usize / 10]).exp_m1();
        c.estimate(largest, "u_decade_change", change, None);
        if meta.beta > 1.0 {
            c.verdict("u_flat_over_last_decade", Some(largest), change.abs(), Tolerance::AtMost { bound: tol.tight_change });
        } else {
            c.verdict("u_drops_over_last_decade", Some(largest), -change, Tolerance::AtLeast { bound: tol.drift_change });
        }
    }
    Ok(())
}
