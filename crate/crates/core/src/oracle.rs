//! Exact laws for small instances: every plane tree of a given size with
//! its weight `Π_v μ_{k_v}`, bridge laws by enumeration or convolution, and
//! total variation distances between them.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{convolution_power, csum};
use crate::offspring::OffspringDistribution;
use crate::tree::{PlaneTree, TreeStats};
use crate::walk::{big_jump_split, JumpVector};

/// Largest tree size accepted by [`enumerate_trees`].
pub const MAX_TREE_SIZE: usize = 12;

/// Largest raw state count `(cap+1)^n` accepted by bridge enumeration.
pub const MAX_BRIDGE_STATES: f64 = 1e8;

/// A finite law over integer-vector keys, sorted by key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactLaw {
    pub support: Vec<(Vec<i64>, f64)>,
    pub total: f64,
    /// Mass lost to the degree cap, when known.
    pub truncation_error: f64,
}

impl ExactLaw {
    fn from_map(map: BTreeMap<Vec<i64>, f64>, truncation_error: f64) -> Self {
        let support: Vec<(Vec<i64>, f64)> = map.into_iter().collect();
        let total = csum(support.iter().map(|(_, p)| *p));
        Self { support, total, truncation_error }
    }

    pub fn point_mass(key: Vec<i64>) -> Self {
        Self { support: vec![(key, 1.0)], total: 1.0, truncation_error: 0.0 }
    }

    /// Builds a law from `(key, probability)` pairs, merging repeated keys.
    pub fn from_pairs<I: IntoIterator<Item = (Vec<i64>, f64)>>(pairs: I) -> Self {
        let mut map = BTreeMap::new();
        for (k, p) in pairs {
            *map.entry(k).or_insert(0.0) += p;
        }
        Self::from_map(map, 0.0)
    }

    /// Scales to total mass one.
    pub fn normalized(&self) -> Result<Self> {
        if !(self.total > 0.0) {
            return Err(Error::Parameter("cannot normalize a law of zero mass".into()));
        }
        let support = self.support.iter().map(|(k, p)| (k.clone(), p / self.total)).collect();
        Ok(Self { support, total: 1.0, truncation_error: self.truncation_error / self.total })
    }

    /// Image under `f`, keeping masses.
    pub fn pushforward<F: Fn(&[i64]) -> Vec<i64>>(&self, f: F) -> Self {
        let mut map = BTreeMap::new();
        for (k, p) in &self.support {
            *map.entry(f(k)).or_insert(0.0) += p;
        }
        let mut law = Self::from_map(map, self.truncation_error);
        law.total = self.total;
        law
    }

    pub fn prob(&self, key: &[i64]) -> f64 {
        self.support
            .binary_search_by(|(k, _)| k.as_slice().cmp(key))
            .map(|i| self.support[i].1)
            .unwrap_or(0.0)
    }

    /// Errors when the truncation error exceeds `bound`.
    pub fn require_truncation_below(self, bound: f64) -> Result<Self> {
        if self.truncation_error > bound {
            return Err(Error::Parameter(format!(
                "degree cap loses mass {:e}, above the requested {bound:e}",
                self.truncation_error
            )));
        }
        Ok(self)
    }
}

/// Tree statistic selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Delta,
    Delta2,
    HDelta,
    Height,
    StarIndex,
}

impl Statistic {
    pub fn eval(self, stats: &TreeStats) -> i64 {
        match self {
            Statistic::Delta => stats.delta as i64,
            Statistic::Delta2 => stats.delta2 as i64,
            Statistic::HDelta => stats.h_delta as i64,
            Statistic::Height => stats.height as i64,
            Statistic::StarIndex => stats.star_index as i64,
        }
    }
}

impl std::str::FromStr for Statistic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "delta" => Statistic::Delta,
            "delta2" => Statistic::Delta2,
            "h_delta" | "hdelta" => Statistic::HDelta,
            "height" => Statistic::Height,
            "star_index" => Statistic::StarIndex,
            other => return Err(Error::Parameter(format!("unknown statistic {other}"))),
        })
    }
}

/// `P(W_n = -1)` for the walk with steps `ξ - 1`; exact since bridge
/// increments never exceed `n - 2`.
pub fn bridge_probability(dist: &OffspringDistribution, n: usize) -> f64 {
    let pmf: Vec<f64> = (0..n as u64).map(|k| dist.pmf(k)).collect();
    convolution_power(&pmf, n as u64, n)[n - 1]
}

/// All trees with `n` vertices and outdegrees `≤ cap`, keyed by outdegree
/// sequence, weighted by `Π_v μ_{k_v}` (unnormalized).
pub fn enumerate_trees(dist: &OffspringDistribution, n: usize, cap: u64) -> Result<ExactLaw> {
    if n == 0 || n > MAX_TREE_SIZE {
        return Err(Error::TooLarge(format!("tree size {n} outside 1..={MAX_TREE_SIZE}")));
    }
    let cap = cap.min(n as u64 - 1);
    let pmf: Vec<f64> = (0..=cap).map(|k| dist.pmf(k)).collect();
    // partition by root outdegree; each part is enumerated in lexicographic order
    let parts: Vec<Vec<(Vec<i64>, f64)>> = (0..=cap)
        .into_par_iter()
        .filter(|&root| pmf[root as usize] > 0.0)
        .map(|root| {
            let mut out = Vec::new();
            let mut seq = vec![root as i64];
            extend_trees(&pmf, n, root as i64 - 1, pmf[root as usize], &mut seq, &mut out);
            out
        })
        .collect();
    let support: Vec<(Vec<i64>, f64)> = parts.into_iter().flatten().collect();
    let total = csum(support.iter().map(|(_, p)| *p));
    let exact_total = bridge_probability(dist, n) / n as f64;
    let truncation_error = (exact_total - total).max(0.0);
    Ok(ExactLaw { support, total, truncation_error })
}

fn extend_trees(pmf: &[f64], n: usize, w: i64, weight: f64, seq: &mut Vec<i64>, out: &mut Vec<(Vec<i64>, f64)>) {
    let i = seq.len();
    if i == n {
        if w == -1 {
            out.push((seq.clone(), weight));
        }
        return;
    }
    if w < 0 {
        return;
    }
    for (k, &p) in pmf.iter().enumerate() {
        let next = w + k as i64 - 1;
        if p == 0.0 {
            continue;
        }
        // the remaining n - i - 1 steps must be able to come down to -1
        if next > (n - i - 1) as i64 - 1 {
            break;
        }
        seq.push(k as i64);
        extend_trees(pmf, n, next, weight * p, seq, out);
        seq.pop();
    }
}

/// Law of a tree statistic under the size-`n` conditioned law.
pub fn conditioned_law<F: Fn(&PlaneTree) -> Vec<i64>>(
    dist: &OffspringDistribution,
    n: usize,
    cap: u64,
    statistic: F,
) -> Result<ExactLaw> {
    let trees = enumerate_trees(dist, n, cap)?;
    if !(trees.total > 0.0) {
        return Err(Error::Parameter(format!("no tree of size {n} has positive weight")));
    }
    let law = trees.pushforward(|seq| {
        let tree = PlaneTree::from_trusted(seq.iter().map(|&k| k as u64).collect());
        statistic(&tree)
    });
    law.normalized()
}

/// Law of a named statistic.
pub fn conditioned_stat_law(dist: &OffspringDistribution, n: usize, cap: u64, stat: Statistic) -> Result<ExactLaw> {
    conditioned_law(dist, n, cap, |t| vec![stat.eval(&t.stats())])
}

/// `μ` restricted to `0..=cap` and renormalized.
fn capped_pmf(dist: &OffspringDistribution, cap: u64) -> Vec<f64> {
    let pmf: Vec<f64> = (0..=cap).map(|k| dist.pmf(k)).collect();
    let mass = csum(pmf.iter().copied());
    pmf.into_iter().map(|p| p / mass).collect()
}

/// Law of `statistic` applied to bridges `X ∈ [-1, cap-1]^n` with
/// `Σ X = -1`, where `X + 1` follows `μ` capped at `cap`. For `cap ≥ n - 1`
/// this is the exact bridge law.
pub fn bridge_law<F: Fn(&[i64]) -> Vec<i64>>(
    dist: &OffspringDistribution,
    n: usize,
    cap: u64,
    statistic: F,
) -> Result<ExactLaw> {
    if n == 0 {
        return Err(Error::Parameter("bridge length must be at least 1".into()));
    }
    let states = (cap as f64 + 1.0).powi(n as i32);
    if states > MAX_BRIDGE_STATES {
        return Err(Error::TooLarge(format!("{states:e} raw states exceed {MAX_BRIDGE_STATES:e}")));
    }
    let pmf = capped_pmf(dist, cap);
    let mut map = BTreeMap::new();
    let mut seq = Vec::with_capacity(n);
    extend_bridges(&pmf, n, 0, 1.0, &mut seq, &mut |v, w| {
        *map.entry(statistic(v)).or_insert(0.0) += w;
    });
    let law = ExactLaw::from_map(map, 0.0);
    if !(law.total > 0.0) {
        return Err(Error::Parameter(format!("no bridge of length {n} under cap {cap}")));
    }
    law.normalized()
}

fn extend_bridges<G: FnMut(&[i64], f64)>(pmf: &[f64], n: usize, w: i64, weight: f64, seq: &mut Vec<i64>, emit: &mut G) {
    let i = seq.len();
    if i == n {
        if w == -1 {
            emit(seq, weight);
        }
        return;
    }
    let remaining = (n - i - 1) as i64;
    for (k, &p) in pmf.iter().enumerate() {
        let next = w + k as i64 - 1;
        if next - remaining > -1 {
            break;
        }
        // even the largest remaining jumps cannot lift the walk back to -1
        if next + remaining * (pmf.len() as i64 - 2) < -1 {
            continue;
        }
        if p == 0.0 {
            continue;
        }
        seq.push(k as i64 - 1);
        extend_bridges(pmf, n, next, weight * p, seq, emit);
        seq.pop();
    }
}

/// Law of `statistic` applied to the bridge with its first maximal jump
/// removed.
pub fn demax_law<F: Fn(&[i64]) -> Vec<i64>>(
    dist: &OffspringDistribution,
    n: usize,
    cap: u64,
    statistic: F,
) -> Result<ExactLaw> {
    bridge_law(dist, n, cap, |v| {
        let split = big_jump_split(&JumpVector::from_trusted(v.to_vec())).expect("bridges are nonempty");
        statistic(split.rest.increments())
    })
}

/// Law of `X_1 + ... + X_count` for iid jumps, restricted to sums with
/// `Σ ξ ≤ max_total`; the excluded mass is the truncation error.
pub fn iid_sum_law(dist: &OffspringDistribution, count: usize, max_total: u64) -> ExactLaw {
    if count == 0 {
        return ExactLaw::point_mass(vec![0]);
    }
    let keep = max_total as usize + 1;
    let pmf: Vec<f64> = (0..keep as u64).map(|k| dist.pmf(k)).collect();
    let power = convolution_power(&pmf, count as u64, keep);
    // Σ ξ = s  <=>  Σ X = s - count
    let mut law = ExactLaw::from_pairs(
        power
            .into_iter()
            .enumerate()
            .filter(|(_, p)| *p > 0.0)
            .map(|(s, p)| (vec![s as i64 - count as i64], p)),
    );
    law.truncation_error = (1.0 - law.total).max(0.0);
    law
}

/// A distance together with a bound on its numerical error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedValue {
    pub value: f64,
    pub error: f64,
}

/// Exact TV between the sum of the de-maximized length-`n` bridge and the
/// sum of `n - 1` iid jumps. The iid law is computed up to `max_total`.
pub fn demax_sum_tv(dist: &OffspringDistribution, n: usize, cap: u64, max_total: u64) -> Result<BoundedValue> {
    if n < 2 {
        return Err(Error::Parameter("need n >= 2 for a nonempty rest vector".into()));
    }
    let demax = demax_law(dist, n, cap, |v| vec![v.iter().sum()])?;
    let iid = iid_sum_law(dist, n - 1, max_total);
    let missing = iid.truncation_error;
    // the missing iid mass adds between 0 and `missing` to Σ|p - q|
    Ok(BoundedValue { value: exact_tv(&demax, &iid) + 0.25 * missing, error: 0.25 * missing })
}

/// Exact law of the maximal jump of a length-`n` bridge, by convolution.
pub fn bridge_max_law(dist: &OffspringDistribution, n: usize) -> Result<ExactLaw> {
    if n == 0 {
        return Err(Error::Parameter("bridge length must be at least 1".into()));
    }
    let pmf: Vec<f64> = (0..n as u64).map(|k| dist.pmf(k)).collect();
    let total = convolution_power(&pmf, n as u64, n)[n - 1];
    if !(total > 0.0) {
        return Err(Error::Parameter(format!("P(W_{n} = -1) vanishes")));
    }
    // P(max X ≤ s, W_n = -1) with ξ ≤ s + 1
    let mut below = 0.0;
    let mut pairs = Vec::new();
    for s in -1..=(n as i64 - 2) {
        let at_most = convolution_power(&pmf[..(s + 2) as usize], n as u64, n)[n - 1];
        let p = (at_most - below).max(0.0);
        if p > 0.0 {
            pairs.push((vec![s], p / total));
        }
        below = at_most;
    }
    Ok(ExactLaw::from_pairs(pairs))
}

/// `½ Σ |p - q|` over the union of supports.
pub fn exact_tv(a: &ExactLaw, b: &ExactLaw) -> f64 {
    let mut map: BTreeMap<&[i64], f64> = BTreeMap::new();
    for (k, p) in &a.support {
        *map.entry(k.as_slice()).or_insert(0.0) += p;
    }
    for (k, q) in &b.support {
        *map.entry(k.as_slice()).or_insert(0.0) -= q;
    }
    (0.5 * csum(map.values().map(|d| d.abs()))).min(1.0)
}

/// `C_k = binom(2k, k) / (k+1)`.
pub fn catalan(k: u64) -> u64 {
    (0..k).fold(1u64, |c, i| c * 2 * (2 * i + 1) / (i + 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offspring::make_cauchy_family;

    fn three_point() -> OffspringDistribution {
        OffspringDistribution::from_table(vec![0.6, 0.2, 0.2]).unwrap()
    }

    #[test]
    fn small_enumerations() {
        let d = three_point();
        let one = enumerate_trees(&d, 1, 5).unwrap();
        assert_eq!(one.support, vec![(vec![0], 0.6)]);
        let three = enumerate_trees(&d, 3, 2).unwrap();
        assert_eq!(three.support.len(), 2);
        assert!((three.prob(&[1, 1, 0]) - 0.2 * 0.2 * 0.6).abs() < 1e-17);
        assert!((three.prob(&[2, 0, 0]) - 0.2 * 0.6 * 0.6).abs() < 1e-17);
        let c = make_cauchy_family(1.0, 1.0, 0.5).unwrap();
        assert_eq!(enumerate_trees(&c, 5, 4).unwrap().support.len(), 14);
        assert!(enumerate_trees(&c, 13, 4).is_err());
    }

    #[test]
    fn catalan_counts_and_truncation() {
        let c = make_cauchy_family(1.0, 1.0, 0.5).unwrap();
        for n in 1..=10usize {
            let law = enumerate_trees(&c, n, n as u64).unwrap();
            assert_eq!(law.support.len() as u64, catalan(n as u64 - 1));
        }
        let mut last = f64::INFINITY;
        for cap in 1..=7u64 {
            let err = enumerate_trees(&c, 8, cap).unwrap().truncation_error;
            assert!(err <= last);
            last = err;
        }
        assert!(last < 1e-15);
        assert!(enumerate_trees(&c, 8, 1).unwrap().require_truncation_below(1e-3).is_err());
    }

    #[test]
    fn cycle_lemma_normalizer() {
        for d in [three_point(), make_cauchy_family(1.0, 1.0, 0.5).unwrap()] {
            for n in 1..=8usize {
                let total = enumerate_trees(&d, n, n as u64).unwrap().total;
                let bridge = bridge_probability(&d, n);
                assert!((total - bridge / n as f64).abs() <= 1e-12 * total.max(1e-300), "n={n}");
            }
        }
    }

    #[test]
    fn chain_height_is_degenerate() {
        let d = OffspringDistribution::binary(0.5).unwrap();
        for n in 1..=7 {
            let law = conditioned_stat_law(&d, n, 3, Statistic::Height).unwrap();
            assert_eq!(law.support, vec![(vec![n as i64 - 1], 1.0)]);
        }
    }

    #[test]
    fn table_delta_law() {
        let law = conditioned_stat_law(&three_point(), 5, 4, Statistic::Delta).unwrap();
        let keys: Vec<i64> = law.support.iter().map(|(k, _)| k[0]).collect();
        assert_eq!(keys, vec![1, 2]);
        assert!((law.total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tilt_leaves_conditioned_law_unchanged() {
        let c = make_cauchy_family(1.0, 1.0, 0.5).unwrap();
        let tilted = c.tilt(0.9).unwrap();
        let a = conditioned_law(&c, 6, 10, |t| t.outdegrees().iter().map(|&k| k as i64).collect()).unwrap();
        let b = conditioned_law(&tilted, 6, 10, |t| t.outdegrees().iter().map(|&k| k as i64).collect()).unwrap();
        assert!(exact_tv(&a, &b) <= 1e-12);
    }

    #[test]
    fn binary_bridges_of_length_three() {
        let d = OffspringDistribution::binary(0.5).unwrap();
        let law = bridge_law(&d, 3, 1, |v| v.to_vec()).unwrap();
        assert_eq!(law.support.len(), 3);
        for (_, p) in &law.support {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let one = bridge_law(&d, 1, 1, |v| v.to_vec()).unwrap();
        assert_eq!(one.support, vec![(vec![-1], 1.0)]);
    }

    #[test]
    fn demax_sum_tv_values() {
        // frozen from this oracle; not monotone at these sizes
        let c = make_cauchy_family(1.0, 1.0, 0.5).unwrap();
        let expected = [(4usize, 0.305_144_773_8), (6, 0.327_804_023_3), (8, 0.321_362_113_6)];
        for (n, want) in expected {
            let tv = demax_sum_tv(&c, n, 8, 100_000).unwrap();
            assert!((tv.value - want).abs() < 1e-9 + tv.error, "n={n} tv={:?}", tv);
            assert!(tv.error < 1e-6);
        }
        let d = three_point();
        assert!((demax_sum_tv(&d, 4, 8, 6).unwrap().value - 0.684).abs() < 1e-12);
    }

    #[test]
    fn iid_sum_law_is_a_convolution() {
        let d = three_point();
        let law = iid_sum_law(&d, 2, 4);
        assert!((law.prob(&[-2]) - 0.36).abs() < 1e-15);
        assert!((law.prob(&[0]) - (0.04 + 2.0 * 0.6 * 0.2)).abs() < 1e-15);
        assert_eq!(law.truncation_error, 0.0);
        let c = make_cauchy_family(1.0, 1.0, 0.5).unwrap();
        let law = iid_sum_law(&c, 3, 1000);
        assert!((law.total + law.truncation_error - 1.0).abs() < 1e-12);
        assert!(law.truncation_error > 0.0);
    }

    #[test]
    fn bridge_max_law_matches_enumeration() {
        let c = make_cauchy_family(1.0, 1.0, 0.5).unwrap();
        for n in [2usize, 5, 7] {
            let conv = bridge_max_law(&c, n).unwrap();
            let enumd = bridge_law(&c, n, n as u64 - 1, |v| vec![*v.iter().max().unwrap()]).unwrap();
            assert!(exact_tv(&conv, &enumd) < 1e-13, "n={n}");
        }
    }

    #[test]
    fn reversal_preserves_bridge_probabilities() {
        let d = three_point();
        for n in 1..=6 {
            let law = bridge_law(&d, n, 2, |v| v.to_vec()).unwrap();
            for (k, p) in &law.support {
                let rev: Vec<i64> = k.iter().rev().copied().collect();
                assert!((law.prob(&rev) - p).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn tv_examples() {
        let a = ExactLaw::point_mass(vec![1]);
        let b = ExactLaw::point_mass(vec![2]);
        assert_eq!(exact_tv(&a, &a), 0.0);
        assert_eq!(exact_tv(&a, &b), 1.0);
        let p = ExactLaw::from_pairs([(vec![0], 0.5), (vec![1], 0.3), (vec![2], 0.2)]);
        let q = ExactLaw::from_pairs([(vec![0], 0.2), (vec![1], 0.3), (vec![2], 0.5)]);
        assert!((exact_tv(&p, &q) - 0.3).abs() < 1e-15);
    }
}
