//! Goodness-of-fit statistics with asymptotic p-values.
//!
//! Kolmogorov–Smirnov p-values use `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} e^{-2k²λ²}`
//! at `λ = (√N + 0.12 + 0.11/√N)·D`, with `N` the sample size (one sample)
//! or `nm/(n+m)` (two samples). χ² p-values are upper tails of the χ²
//! distribution with `bins - 1` degrees of freedom.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Smallest sample accepted by the KS tests.
pub const MIN_KS_SAMPLE: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p(effective_n: f64, d: f64) -> f64 {
    let root = effective_n.sqrt();
    kolmogorov_sf((root + 0.12 + 0.11 / root) * d)
}

fn sorted(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Parameter("sample contains NaN".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    Ok(v)
}

/// Two-sample KS test; ties are handled by stepping through equal values
/// together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    if a.len() < MIN_KS_SAMPLE || b.len() < MIN_KS_SAMPLE {
        return Err(Error::Parameter(format!(
            "KS needs at least {MIN_KS_SAMPLE} values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(TestOutcome { statistic: d, p_value: ks_p(na * nb / (na + nb), d) })
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(values: &[f64], cdf: F) -> Result<TestOutcome> {
    if values.len() < MIN_KS_SAMPLE {
        return Err(Error::Parameter(format!("KS needs at least {MIN_KS_SAMPLE} values, got {}", values.len())));
    }
    let v = sorted(values)?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < v.len() {
        let x = v[i];
        let below = i as f64 / n;
        while i < v.len() && v[i] == x {
            i += 1;
        }
        let f = cdf(x);
        d = d.max((f - below).abs()).max((i as f64 / n - f).abs());
    }
    Ok(TestOutcome { statistic: d, p_value: ks_p(n, d) })
}

/// Pearson χ² goodness of fit; `expected` holds expected counts.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<TestOutcome> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(Error::Parameter(format!(
            "χ² needs matching bin counts (at least 2), got {} and {}",
            observed.len(),
            expected.len()
        )));
    }
    if expected.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Parameter("χ² expected counts must be positive".into()));
    }
    let statistic: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let diff = o as f64 - e;
            diff * diff / e
        })
        .sum();
    let dof = (observed.len() - 1) as f64;
    let dist = ChiSquared::new(dof).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(TestOutcome { statistic, p_value: dist.sf(statistic) })
}

/// Merges adjacent bins (from the right) until every expected count is at
/// least `min_expected`. Returns the merged `(observed, expected)`.
pub fn merge_sparse_bins(observed: &[u64], expected: &[f64], min_expected: f64) -> (Vec<u64>, Vec<f64>) {
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_acc, mut e_acc) = (0u64, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        o_acc += o;
        e_acc += e;
        if e_acc >= min_expected {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0 {
        match (obs.last_mut(), exp.last_mut()) {
            (Some(o), Some(e)) => {
                *o += o_acc;
                *e += e_acc;
            }
            _ => {
                obs.push(o_acc);
                exp.push(e_acc);
            }
        }
    }
    (obs, exp)
}

/// Sample median (mean of the two middle values for even sizes).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let v = sorted(values).ok()?;
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

/// Standard error of the median from the order-statistic interval
/// `x_(n/2 ± √n/2)`, divided by two.
pub fn median_std_error(values: &[f64]) -> Option<f64> {
    if values.len() < 4 {
        return None;
    }
    let v = sorted(values).ok()?;
    let n = v.len() as f64;
    let half = 0.5 * n.sqrt();
    let lo = ((0.5 * n - half).floor().max(0.0)) as usize;
    let hi = ((0.5 * n + half).ceil() as usize).min(v.len() - 1);
    Some(0.5 * (v[hi] - v[lo]))
}

pub fn mean_and_error(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::rng_stream;
    use rand::Rng;

    #[test]
    fn identical_samples_have_zero_statistic() {
        let a: Vec<f64> = (0..100).map(|i| (i % 17) as f64).collect();
        let mut b = a.clone();
        b.reverse();
        let out = ks_two_sample(&a, &b).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert_eq!(out.p_value, 1.0);
    }

    #[test]
    fn disjoint_samples() {
        let a: Vec<f64> = (0..50).map(f64::from).collect();
        let b: Vec<f64> = (100..150).map(f64::from).collect();
        let out = ks_two_sample(&a, &b).unwrap();
        assert_eq!(out.statistic, 1.0);
        assert!(out.p_value < 1e-10);
    }

    #[test]
    fn small_samples_are_rejected() {
        assert!(ks_two_sample(&[1.0; 10], &[1.0; 40]).is_err());
        assert!(ks_one_sample(&[0.5; 29], |x| x).is_err());
    }

    #[test]
    fn kolmogorov_reference_values() {
        // Q(1.36) ≈ 0.0495, Q(1.95) ≈ 0.00100
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_sf(1.9495) - 0.001).abs() < 2e-5);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn uniform_self_consistency() {
        let mut pass = 0;
        for trial in 0..100u64 {
            let mut r1 = rng_stream(99, 2 * trial);
            let mut r2 = rng_stream(99, 2 * trial + 1);
            let a: Vec<f64> = (0..10_000).map(|_| r1.gen()).collect();
            let b: Vec<f64> = (0..10_000).map(|_| r2.gen()).collect();
            if ks_two_sample(&a, &b).unwrap().p_value > 1e-3 {
                pass += 1;
            }
        }
        assert!(pass >= 99, "pass={pass}");
    }

    #[test]
    fn one_sample_uniform() {
        let mut rng = rng_stream(5, 0);
        let a: Vec<f64> = (0..5000).map(|_| rng.gen()).collect();
        let out = ks_one_sample(&a, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(out.p_value > 1e-3);
        let shifted: Vec<f64> = a.iter().map(|x| x * 0.8).collect();
        assert!(ks_one_sample(&shifted, |x| x.clamp(0.0, 1.0)).unwrap().p_value < 1e-6);
    }

    #[test]
    fn hand_chi_square() {
        // (10-20)²/20 + (30-20)²/20 + (20-20)²/20 + (20-20)²/20 = 10
        let out = chi_square_gof(&[10, 30, 20, 20], &[20.0; 4]).unwrap();
        assert!((out.statistic - 10.0).abs() < 1e-12);
        // P(χ²_3 > 10) = 0.018566
        assert!((out.p_value - 0.018_566).abs() < 1e-5);
        assert!(chi_square_gof(&[1], &[1.0]).is_err());
        assert!(chi_square_gof(&[1, 2], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn sparse_bins_merge() {
        let (o, e) = merge_sparse_bins(&[10, 3, 1, 1], &[10.0, 3.0, 1.5, 0.5], 5.0);
        assert_eq!(o, vec![10, 5]);
        assert_eq!(e, vec![10.0, 5.0]);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
