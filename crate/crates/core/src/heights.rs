//! Survival probabilities `Q_n = P(H(T) ≥ n)` of the unconditioned tree,
//! the companion `ℓ(s) = m - Σ_k μ([k+1,∞)) (1-s)^k`, the normalized
//! sequence `u_n = Q_n / m^n`, and height predictions built on them.

use serde::{Deserialize, Serialize};

use crate::asymptotics::ell_star_real;
use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;

/// Below this survival probability the table switches to the log-domain
/// recursion for `u_n`.
pub const HYBRID_SWITCH: f64 = 1e-6;

/// Indices on which both evaluation modes run side by side.
pub const OVERLAP: usize = 100;

/// Relative tolerance between the two modes on the overlap.
pub const OVERLAP_TOLERANCE: f64 = 1e-6;

/// `n Q_h` thresholds delimiting the height band.
pub const BAND_HIGH: f64 = 1e2;
pub const BAND_LOW: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    ExactSum,
    HybridTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    /// First index computed by both modes.
    pub start: usize,
    pub len: usize,
    /// Largest `|Q_exact / Q_hybrid - 1|` on the overlap.
    pub max_rel_diff: f64,
}

/// Table of `log Q_n` and `log u_n` for `n = 0 ..= n_max`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QTable {
    pub mean: f64,
    pub log_q: Vec<f64>,
    pub log_u: Vec<f64>,
    pub mode: Vec<EvalMode>,
    /// `ℓ(Q_n)` for `n < n_max`.
    pub ell: Vec<f64>,
    pub overlap: Option<OverlapReport>,
}

impl QTable {
    pub fn n_max(&self) -> usize {
        self.log_q.len() - 1
    }

    pub fn q(&self, n: usize) -> f64 {
        self.log_q[n].exp()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(48 * self.log_q.len());
        out.push_str("n,log_q,log_u,mode\n");
        for (n, ((lq, lu), mode)) in self.log_q.iter().zip(&self.log_u).zip(&self.mode).enumerate() {
            let mode = match mode {
                EvalMode::ExactSum => "exact-sum",
                EvalMode::HybridTail => "hybrid-tail",
            };
            out.push_str(&format!("{n},{lq:.17e},{lu:.17e},{mode}\n"));
        }
        out
    }
}

/// `ℓ(q)` for `q ∈ (0,1]`.
pub fn ell_small(dist: &OffspringDistribution, q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain { value: q, domain: "(0, 1]" });
    }
    Ok(ell_at(dist, q.ln()))
}

/// `ℓ(e^{log_q})`, usable when `q` underflows.
pub fn ell_from_log_q(dist: &OffspringDistribution, log_q: f64) -> f64 {
    ell_at(dist, log_q)
}

fn ell_at(dist: &OffspringDistribution, log_q: f64) -> f64 {
    if log_q >= 0.0 {
        // only the k = 0 term survives (1-q)^k at q = 1
        return dist.mean() - dist.tail(1);
    }
    dist.tail_weighted_complement(log_rate(log_q))
}

/// `log(-log(1-q))` from `log q`.
fn log_rate(log_q: f64) -> f64 {
    let q = log_q.exp();
    if q < 1e-5 {
        // -log(1-q)/q = 1 + q/2 + q^2/3 + ...
        log_q + q / 2.0 + q * q * (1.0 / 3.0 - 1.0 / 8.0)
    } else {
        (-(-q).ln_1p()).ln()
    }
}

/// Asymptotic surrogate `ℓ*(⌈1/q⌉)`, kept as a diagnostic.
pub fn ell_surrogate(dist: &OffspringDistribution, q: f64) -> f64 {
    ell_star_real(dist, 1.0 / q)
}

/// Builds `Q_0 ..= Q_{n_max}` from `Q_{n+1} = 1 - G(1 - Q_n)`, switching to
/// `log u_{n+1} = log u_n + log(1 - ℓ(Q_n)/m)` below [`HYBRID_SWITCH`].
pub fn q_table(dist: &OffspringDistribution, n_max: usize) -> Result<QTable> {
    if n_max < 1 {
        return Err(Error::Parameter("n_max must be at least 1".into()));
    }
    let m = dist.mean();
    let log_m = m.ln();
    let mut log_q = Vec::with_capacity(n_max + 1);
    let mut mode = Vec::with_capacity(n_max + 1);
    let mut ell = Vec::with_capacity(n_max);
    log_q.push(0.0);
    mode.push(EvalMode::ExactSum);
    let mut q = 1.0f64;
    let mut n = 0usize;
    while n < n_max && q > HYBRID_SWITCH {
        ell.push(ell_at(dist, q.ln()));
        q = dist.pgf_complement(q)?;
        if !(q > 0.0) {
            return Err(Error::Numerical(format!("Q_{} underflowed in exact mode", n + 1)));
        }
        n += 1;
        log_q.push(q.ln());
        mode.push(EvalMode::ExactSum);
    }
    let mut overlap = None;
    let mut log_u = Vec::with_capacity(n_max + 1);
    if n < n_max {
        let start = n;
        let len = OVERLAP.min(n_max - n);
        let mut exact_q = q;
        let mut hybrid_log_q = log_q[start];
        let mut max_rel_diff = 0.0f64;
        for step in 0..len {
            let l = ell_at(dist, hybrid_log_q);
            hybrid_log_q += (-l / m).ln_1p() + log_m;
            exact_q = dist.pgf_complement(exact_q)?;
            let diff = (exact_q.ln() - hybrid_log_q).exp_m1().abs();
            max_rel_diff = max_rel_diff.max(diff);
            if !(diff <= OVERLAP_TOLERANCE) {
                return Err(Error::Numerical(format!(
                    "exact and hybrid modes disagree at n={}: log Q {} vs {} (relative {diff:e})",
                    start + step + 1,
                    exact_q.ln(),
                    hybrid_log_q
                )));
            }
        }
        overlap = Some(OverlapReport { start: start + 1, len, max_rel_diff });
        log_u.extend(log_q.iter().enumerate().map(|(n, lq)| lq - n as f64 * log_m));
        let mut lu = log_q[start] - start as f64 * log_m;
        while n < n_max {
            let l = ell_at(dist, lu + n as f64 * log_m);
            ell.push(l);
            lu += (-l / m).ln_1p();
            n += 1;
            log_u.push(lu);
            log_q.push(lu + n as f64 * log_m);
            mode.push(EvalMode::HybridTail);
        }
    }
    if log_u.is_empty() {
        log_u.extend(log_q.iter().enumerate().map(|(n, lq)| lq - n as f64 * log_m));
    }
    Ok(QTable { mean: m, log_q, log_u, mode, ell, overlap })
}

/// Outcome of the `Q_{n+1} = Q_n (m - ℓ(Q_n))` cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `0 < ℓ(Q_n) < m` held throughout.
    pub ell_in_range: bool,
}

/// Checks `|Q_{n+1} - Q_n (m - ℓ(Q_n))| ≤ 1e-12 Q_n` for `n < n_end` in
/// exact-sum mode.
pub fn q_step_identity_check(dist: &OffspringDistribution, n_end: usize) -> Result<IdentityReport> {
    let m = dist.mean();
    let mut q = 1.0f64;
    let mut max_rel_error = 0.0f64;
    let mut ell_in_range = true;
    for n in 0..n_end {
        let next = dist.pgf_complement(q)?;
        let l = ell_at(dist, q.ln());
        let predicted = q * (m - l);
        let rel = (next - predicted).abs() / q;
        max_rel_error = max_rel_error.max(rel);
        ell_in_range &= l >= 0.0 && l < m && (l > 0.0 || dist.is_finite_support());
        if rel > 1e-12 {
            return Err(Error::Numerical(format!("identity fails at n={n}: relative error {rel:e}")));
        }
        q = next;
    }
    Ok(IdentityReport { checked: n_end, max_rel_error, ell_in_range })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightPrediction {
    /// `log n / log(1/m)`.
    pub center: f64,
    pub second_order: Option<f64>,
    /// `(max{h : n Q_h ≥ 1e2}, min{h : n Q_h ≤ 1e-2})`.
    pub threshold_band: (usize, usize),
}

/// First- and second-order height centers with the threshold band.
pub fn height_prediction(dist: &OffspringDistribution, table: &QTable, n: u64) -> Result<HeightPrediction> {
    let m = dist.mean();
    let log_n = (n as f64).ln();
    let center = log_n / (1.0 / m).ln();
    let need = (3.0 * center).ceil() as usize;
    if table.n_max() < need {
        return Err(Error::TableTooShort(format!("need depth {need}, table has {}", table.n_max())));
    }
    let log_hi = BAND_HIGH.ln() - log_n;
    let log_lo = BAND_LOW.ln() - log_n;
    let h_lo = table.log_q.iter().rposition(|&lq| lq >= log_hi).unwrap_or(0);
    let h_hi = table
        .log_q
        .iter()
        .position(|&lq| lq <= log_lo)
        .ok_or_else(|| Error::TableTooShort("n Q_h never drops below the low threshold".into()))?;
    let second_order = match dist.family_meta() {
        Some(meta) if meta.beta <= 1.0 => Some(prop4_center(meta.beta, meta.c_eff(), m, n as f64)?),
        _ => None,
    };
    Ok(HeightPrediction { center, second_order, threshold_band: (h_lo, h_hi) })
}

/// Second-order height center for tail exponent `β ∈ (0,1]`.
pub fn prop4_center(beta: f64, c_eff: f64, m: f64, n: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain { value: beta, domain: "(0, 1]" });
    }
    let log_n = n.ln();
    let log_inv_m = (1.0 / m).ln();
    let first = log_n / log_inv_m;
    let correction = if beta == 1.0 {
        c_eff * log_n.ln() / (m * log_inv_m * log_inv_m)
    } else {
        c_eff * log_n.powf(1.0 - beta) / ((1.0 - beta) * beta * m * log_inv_m.powf(1.0 + beta))
    };
    Ok(first - correction)
}

/// Limit slope of `log u_n`: against `log n` for `β = 1`, against
/// `n^{1-β}` for `β < 1`.
pub fn log_u_slope(beta: f64, c_eff: f64, m: f64) -> f64 {
    let log_inv_m = (1.0 / m).ln();
    if beta == 1.0 {
        -c_eff / (m * log_inv_m)
    } else {
        -c_eff / ((1.0 - beta) * beta * m * log_inv_m.powf(beta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    /// First index with `ℓ(Q_n) ≤ η/2`.
    pub n0: usize,
    /// Index from which `(m-η)^n ≤ Q_n` is guaranteed by the certificate.
    pub rank: usize,
    pub checked_to: usize,
}

/// Certificate for `(m-η)^n ≤ Q_n ≤ m^n`, checked in the log domain.
pub fn qn_bounds_check(table: &QTable, eta: f64) -> Result<BoundsReport> {
    let m = table.mean;
    if !(eta > 0.0 && eta < m) {
        return Err(Error::Domain { value: eta, domain: "(0, m)" });
    }
    let n0 = table
        .ell
        .iter()
        .position(|&l| l <= eta / 2.0)
        .ok_or_else(|| Error::TableTooShort(format!("ℓ(Q_n) stays above {}", eta / 2.0)))?;
    let log_m = m.ln();
    let slow = (m - eta / 2.0).ln();
    let fast = (m - eta).ln();
    // log Q_n ≥ log Q_{n0} + (n - n0) slow ≥ n fast once n (slow - fast) ≥ n0 slow - log Q_{n0}
    let need = n0 as f64 * slow - table.log_q[n0];
    let rank = ((need / (slow - fast)).ceil().max(0.0) as usize).max(n0);
    for (n, &lq) in table.log_q.iter().enumerate() {
        let upper = n as f64 * log_m;
        if lq > upper + 1e-12 * upper.abs().max(1.0) {
            return Err(Error::Numerical(format!("Q_{n} exceeds m^n")));
        }
        if n >= rank && lq < n as f64 * fast {
            return Err(Error::Numerical(format!("Q_{n} is below (m-η)^n")));
        }
    }
    Ok(BoundsReport { n0, rank, checked_to: table.n_max() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::csum;
    use crate::offspring::make_cauchy_family;

    fn cauchy() -> OffspringDistribution {
        make_cauchy_family(1.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn binary_closed_form() {
        let d = OffspringDistribution::binary(0.5).unwrap();
        let t = q_table(&d, 5000).unwrap();
        for (n, lu) in t.log_u.iter().enumerate() {
            assert!(lu.abs() <= 1e-12, "n={n} log_u={lu}");
        }
        assert!(t.ell.iter().all(|&l| l == 0.0));
        for q in [1.0, 0.3, 1e-9] {
            assert_eq!(ell_small(&d, q).unwrap(), 0.0);
        }
        let r = q_step_identity_check(&d, 50).unwrap();
        assert!(r.max_rel_error < 1e-15);
        let b = qn_bounds_check(&t, 0.1).unwrap();
        assert_eq!(b.n0, 0);
    }

    #[test]
    fn first_step_and_ell_at_one() {
        let d = cauchy();
        let t = q_table(&d, 3).unwrap();
        assert!((t.q(1) - (1.0 - d.pmf(0))).abs() < 1e-15);
        let l1 = ell_small(&d, 1.0).unwrap();
        assert!((l1 - (d.mean() - 1.0 + d.pmf(0))).abs() < 1e-15);
        assert!(l1 < d.mean());
        assert!(ell_small(&d, 0.0).is_err());
        assert!(ell_small(&d, 1.5).is_err());
    }

    #[test]
    fn ell_matches_direct_summation() {
        let d = cauchy();
        let q: f64 = 1e-4;
        let k_max = 400_000usize;
        let tails = d.tail_block(0, k_max + 2);
        let head = csum((0..=k_max).rev().map(|k| tails[k + 1] * -((k as f64) * (-q).ln_1p()).exp_m1()));
        // beyond k_max the factor 1 - (1-q)^k is 1 - O(e^{-40})
        let rest = d.mean_tail(k_max as u64 + 2) - (k_max as f64 + 1.0) * d.tail(k_max as u64 + 2);
        let direct = head + rest;
        let got = ell_small(&d, q).unwrap();
        assert!((got - direct).abs() < 1e-12, "got={got} direct={direct}");
    }

    #[test]
    fn ell_is_increasing() {
        for d in [cauchy(), make_cauchy_family(0.5, 2.0, 0.5).unwrap(), OffspringDistribution::from_table(vec![0.6, 0.2, 0.2]).unwrap()] {
            let mut last = 0.0;
            let mut log_q = -2000.0;
            while log_q <= 0.0 {
                let l = ell_from_log_q(&d, log_q);
                assert!(l >= last, "log_q={log_q}");
                last = l;
                log_q += 7.3;
            }
            assert!(ell_from_log_q(&d, -1e5) < 0.1 * ell_from_log_q(&d, -10.0));
        }
    }

    #[test]
    fn identity_on_families() {
        let r = q_step_identity_check(&cauchy(), 100).unwrap();
        assert!(r.ell_in_range);
        let t = OffspringDistribution::from_table(vec![0.6, 0.2, 0.2]).unwrap();
        let r = q_step_identity_check(&t, 100).unwrap();
        assert!(r.ell_in_range);
    }

    #[test]
    fn table_overlap_and_monotonicity() {
        let d = cauchy();
        let t = q_table(&d, 3000).unwrap();
        let o = t.overlap.unwrap();
        assert_eq!(o.len, OVERLAP);
        assert!(o.max_rel_diff <= OVERLAP_TOLERANCE);
        assert!(t.mode.contains(&EvalMode::HybridTail));
        let m = d.mean();
        for w in t.log_q.windows(2) {
            assert!(w[1] < w[0]);
            assert!(w[1] - w[0] <= m.ln() + 1e-12);
        }
        for n in 0..t.ell.len().min(500) {
            let ratio = (t.log_q[n + 1] - t.log_q[n]).exp();
            assert!(ratio >= m - ell_small(&d, 1.0).unwrap() - 1e-12);
        }
    }

    #[test]
    fn height_prediction_binary() {
        let d = OffspringDistribution::binary(0.5).unwrap();
        let t = q_table(&d, 200).unwrap();
        let p = height_prediction(&d, &t, 1024).unwrap();
        assert!((p.center - 10.0).abs() < 1e-12);
        // n Q_h = 2^{10-h}: ≥ 100 up to h = 3, ≤ 0.01 from h = 17
        assert_eq!(p.threshold_band, (3, 17));
        assert_eq!(p.second_order, None);
        let short = q_table(&d, 10).unwrap();
        assert!(matches!(height_prediction(&d, &short, 1024), Err(Error::TableTooShort(_))));
    }

    #[test]
    fn prop4_center_examples() {
        let c = 0.4;
        let n = std::f64::consts::E.exp();
        let got = prop4_center(1.0, c, 0.5, n).unwrap();
        let expected = n.ln() / 2f64.ln() - c / (0.5 * 2f64.ln().powi(2));
        assert!((got - expected).abs() < 1e-12);
        assert!(prop4_center(1.5, c, 0.5, 10.0).is_err());
        assert!(prop4_center(0.0, c, 0.5, 10.0).is_err());
    }

    #[test]
    fn bounds_certificates() {
        let d = cauchy();
        let t = q_table(&d, 2000).unwrap();
        let b = qn_bounds_check(&t, 0.1).unwrap();
        assert!(b.rank >= b.n0 && b.checked_to == 2000);
        let d = make_cauchy_family(0.5, 1.0, 0.5).unwrap();
        let t = q_table(&d, 2000).unwrap();
        qn_bounds_check(&t, 0.05).unwrap();
    }
}
