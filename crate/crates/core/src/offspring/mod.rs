//! Offspring distributions: finite tables and the Cauchy-type family
//! `μ_k = θ c / (k^2 log(k+e)^{1+β})`, with exact pmf/tail access, the
//! generating function, exponential tilting and sampling.
//!
//! Every distribution stores a head table of `μ_k`, `μ([k,∞))` and
//! `Σ_{j≥k} j μ_j` up to an index `K`; beyond `K` the Cauchy family is
//! evaluated from its closed form and Euler–Maclaurin far sums. Values are
//! immutable after construction. Sampling goes through an
//! [`OffspringSampler`], which owns its own lazily grown table and is meant
//! to be created once per worker.

mod cauchy;
mod sampler;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{csum, CompensatedSum};

pub(crate) use cauchy::{CauchyShape, EllKernel, FarSum, MassKernel, MeanKernel, PgfKernel};
pub use sampler::OffspringSampler;

/// Head-table length for the Cauchy family: pmf entries `0..=HEAD_MAX`.
pub const HEAD_MAX: usize = 1 << 16;

/// Number of moment terms kept for small-`q` series expansions.
const MOMENTS: usize = 8;

/// Serializable description of a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum DistSpec {
    Cauchy { beta: f64, c: f64, m: f64 },
    Table { pmf: Vec<f64> },
}

impl DistSpec {
    pub fn build(&self) -> Result<OffspringDistribution> {
        match self {
            DistSpec::Cauchy { beta, c, m } => make_cauchy_family(*beta, *c, *m),
            DistSpec::Table { pmf } => OffspringDistribution::from_table(pmf.clone()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Tail-regularity metadata of the Cauchy family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyMeta {
    pub beta: f64,
    pub c: f64,
    /// Mean-normalizing scale.
    pub theta: f64,
}

impl FamilyMeta {
    /// Effective tail constant `θ c`: `k^2 μ_k log(k)^{1+β} → θ c`.
    pub fn c_eff(&self) -> f64 {
        self.theta * self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NlognVerdict {
    Convergent,
    Divergent,
    Unknown,
}

/// Outcome of the `Σ (n log n) μ_n < ∞` classification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NlognReport {
    pub verdict: NlognVerdict,
    /// `(N, Σ_{k≤N} k log(k) μ_k)` at N = 10^2 .. 10^6.
    pub partial_sums: Vec<(u64, f64)>,
}

#[derive(Debug, Clone)]
pub struct OffspringDistribution {
    spec: DistSpec,
    meta: Option<FamilyMeta>,
    shape: Option<CauchyShape>,
    /// `μ_0 ..= μ_K`.
    pmf: Vec<f64>,
    /// `μ([k,∞))` for `k = 0 ..= K+1`.
    tail: Vec<f64>,
    /// `Σ_{j≥k} j μ_j` for `k = 0 ..= K+1`.
    mean_tail: Vec<f64>,
    /// `Σ_{j=k}^{K-1} μ([j+1,∞))` for `k = 0 ..= K`.
    tail_cum: Vec<f64>,
    /// `Σ_{k≤K} k^p μ_k`.
    pmf_moments: [f64; MOMENTS],
    /// `Σ_{k<K} k^p μ([k+1,∞))`.
    tail_moments: [f64; MOMENTS],
    mean: f64,
}

/// Builds `μ_k = θ c / (k^2 log(k+e)^{1+β})` for `k ≥ 1` with θ chosen so the
/// mean equals `m_target`, and `μ_0 = 1 - Σ_{k≥1} μ_k`.
pub fn make_cauchy_family(beta: f64, c: f64, m_target: f64) -> Result<OffspringDistribution> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Parameter(format!("beta must be positive, got {beta}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Parameter(format!("c must be positive, got {c}")));
    }
    if !(m_target > 0.0 && m_target < 1.0) {
        return Err(Error::Parameter(format!("mean must lie in (0,1), got {m_target}")));
    }
    let shape = CauchyShape { beta, c };
    let (mass, mean) = shape.normalizers();
    let theta = m_target / mean;
    if theta * mass > 1.0 {
        return Err(Error::InfeasibleMean { requested: m_target, max_feasible: mean / mass });
    }
    let k_max = HEAD_MAX;
    let mut pmf = vec![0.0; k_max + 1];
    for (k, p) in pmf.iter_mut().enumerate().skip(1) {
        *p = theta * shape.base(k as f64);
    }
    let far_mass = theta * shape.far_sum(k_max as u64 + 1, &MassKernel).value;
    let far_mean = theta * shape.far_sum(k_max as u64 + 1, &MeanKernel).value;
    let meta = FamilyMeta { beta, c, theta };
    OffspringDistribution::assemble(
        DistSpec::Cauchy { beta, c, m: m_target },
        Some(meta),
        Some(shape),
        pmf,
        far_mass,
        far_mean,
    )
}

impl OffspringDistribution {
    /// Finite-support law from a probability vector (renormalized if it
    /// sums to 1 within 1e-9).
    pub fn from_table(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::Parameter("empty pmf".into()));
        }
        if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Parameter("pmf entries must be finite and nonnegative".into()));
        }
        let total = csum(pmf.iter().copied());
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("pmf sums to {total}, not 1")));
        }
        let mut pmf: Vec<f64> = pmf.into_iter().map(|p| p / total).collect();
        while pmf.len() > 1 && *pmf.last().unwrap() == 0.0 {
            pmf.pop();
        }
        if pmf[0] == 0.0 {
            return Err(Error::Parameter("μ_0 must be positive".into()));
        }
        let mean = csum(pmf.iter().enumerate().map(|(k, p)| k as f64 * p));
        if mean >= 1.0 {
            return Err(Error::Parameter(format!("mean {mean} is not subcritical")));
        }
        Self::assemble(DistSpec::Table { pmf: pmf.clone() }, None, None, pmf, 0.0, 0.0)
    }

    /// Shorthand for the two-point law `(1-p, p)` on `{0, 1}`.
    pub fn binary(p: f64) -> Result<Self> {
        Self::from_table(vec![1.0 - p, p])
    }

    fn assemble(
        spec: DistSpec,
        meta: Option<FamilyMeta>,
        shape: Option<CauchyShape>,
        mut pmf: Vec<f64>,
        far_mass: f64,
        far_mean: f64,
    ) -> Result<Self> {
        let k_max = pmf.len() - 1;
        let mut tail = vec![0.0; k_max + 2];
        let mut mean_tail = vec![0.0; k_max + 2];
        tail[k_max + 1] = far_mass;
        mean_tail[k_max + 1] = far_mean;
        let mut mass_acc = CompensatedSum::new();
        mass_acc.add(far_mass);
        let mut mean_acc = CompensatedSum::new();
        mean_acc.add(far_mean);
        for k in (1..=k_max).rev() {
            mass_acc.add(pmf[k]);
            mean_acc.add(k as f64 * pmf[k]);
            tail[k] = mass_acc.value();
            mean_tail[k] = mean_acc.value();
        }
        if shape.is_some() {
            pmf[0] = 1.0 - tail[1];
        }
        if !(pmf[0] > 0.0) {
            return Err(Error::Parameter("μ_0 must be positive".into()));
        }
        tail[0] = 1.0;
        mean_tail[0] = mean_tail[1];
        let mean = mean_tail[1];

        let mut tail_cum = vec![0.0; k_max + 1];
        let mut acc = CompensatedSum::new();
        for k in (0..k_max).rev() {
            acc.add(tail[k + 1]);
            tail_cum[k] = acc.value();
        }
        let mut pmf_moments = [0.0; MOMENTS];
        let mut tail_moments = [0.0; MOMENTS];
        for (p, slot) in pmf_moments.iter_mut().enumerate() {
            *slot = csum((0..=k_max).rev().map(|k| (k as f64).powi(p as i32) * pmf[k]));
        }
        for (p, slot) in tail_moments.iter_mut().enumerate() {
            *slot = csum((0..k_max).rev().map(|k| (k as f64).powi(p as i32) * tail[k + 1]));
        }
        Ok(Self { spec, meta, shape, pmf, tail, mean_tail, tail_cum, pmf_moments, tail_moments, mean })
    }

    pub fn spec(&self) -> &DistSpec {
        &self.spec
    }

    pub fn family_meta(&self) -> Option<&FamilyMeta> {
        self.meta.as_ref()
    }

    pub fn is_finite_support(&self) -> bool {
        self.shape.is_none()
    }

    /// Largest index held in the head table.
    pub fn head_len(&self) -> usize {
        self.pmf.len()
    }

    /// `m = Σ k μ_k`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Exact `μ_k`.
    pub fn pmf(&self, k: u64) -> f64 {
        match self.pmf.get(k as usize) {
            Some(p) => *p,
            None => match (&self.shape, &self.meta) {
                (Some(shape), Some(meta)) => meta.theta * shape.base(k as f64),
                _ => 0.0,
            },
        }
    }

    /// `L(k) = k^2 μ_k`.
    pub fn slowly_varying(&self, k: u64) -> f64 {
        let kf = k as f64;
        kf * kf * self.pmf(k)
    }

    /// `μ([k,∞))`.
    pub fn tail(&self, k: u64) -> f64 {
        match self.tail.get(k as usize) {
            Some(t) => *t,
            None => match (&self.shape, &self.meta) {
                (Some(shape), Some(meta)) => meta.theta * shape.far_sum(k, &MassKernel).value,
                _ => 0.0,
            },
        }
    }

    /// `Σ_{j≥k} j μ_j`.
    pub fn mean_tail(&self, k: u64) -> f64 {
        match self.mean_tail.get(k as usize) {
            Some(t) => *t,
            None => match (&self.shape, &self.meta) {
                (Some(shape), Some(meta)) => meta.theta * shape.far_sum(k, &MeanKernel).value,
                _ => 0.0,
            },
        }
    }

    /// Quadrature error bound attached to `mean_tail(k)` beyond the head.
    pub fn mean_tail_error(&self, k: u64) -> f64 {
        match (&self.shape, &self.meta) {
            (Some(shape), Some(meta)) if k as usize >= self.mean_tail.len() => {
                let FarSum { error, .. } = shape.far_sum(k, &MeanKernel);
                meta.theta * error
            }
            _ => 0.0,
        }
    }

    /// Tail values `μ([k,∞))` for `k in from..to`, extending past the head
    /// by backward accumulation from an analytic far sum.
    pub(crate) fn tail_block(&self, from: usize, to: usize) -> Vec<f64> {
        if to <= self.tail.len() {
            return self.tail[from..to].to_vec();
        }
        let mut out = vec![0.0; to - from];
        if self.shape.is_none() {
            for k in from..to.min(self.tail.len()) {
                out[k - from] = self.tail[k];
            }
            return out;
        }
        let mut acc = CompensatedSum::new();
        acc.add(self.tail(to as u64));
        for k in (from..to).rev() {
            if k < self.tail.len() {
                out[k - from] = self.tail[k];
            } else {
                acc.add(self.pmf(k as u64));
                out[k - from] = acc.value();
            }
        }
        out
    }

    /// `G_μ(s) = Σ μ_k s^k` for `s ∈ [0,1]`.
    pub fn gen_fn(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain { value: s, domain: "[0, 1]" });
        }
        if s == 1.0 {
            return Ok(1.0);
        }
        Ok(1.0 - self.pgf_complement(1.0 - s)?)
    }

    /// `1 - G_μ(1-q) = Σ_k μ_k (1 - (1-q)^k)` without cancellation.
    pub fn pgf_complement(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain { value: q, domain: "[0, 1]" });
        }
        if q == 0.0 {
            return Ok(0.0);
        }
        if q == 1.0 {
            return Ok(1.0 - self.pmf[0]);
        }
        let log_a = (-(-q).ln_1p()).ln();
        let k_max = self.pmf.len() - 1;
        let a = log_a.exp();
        let head = if a * k_max as f64 <= 1e-3 {
            series(a, &self.pmf_moments)
        } else {
            let mut acc = CompensatedSum::new();
            let mut k = 1;
            while k <= k_max {
                let ak = a * k as f64;
                if ak > 41.0 {
                    acc.add(self.tail[k] - self.tail[k_max + 1]);
                    break;
                }
                acc.add(self.pmf[k] * -(-ak).exp_m1());
                k += 1;
            }
            acc.value()
        };
        let far = match (&self.shape, &self.meta) {
            (Some(shape), Some(meta)) => meta.theta * shape.far_sum(k_max as u64 + 1, &PgfKernel { log_a }).value,
            _ => 0.0,
        };
        Ok(head + far)
    }

    /// `Σ_{k≥0} μ([k+1,∞)) (1 - e^{-a k})` for `a = e^{log_a}`; with
    /// `a = -log(1-q)` this is `m - Σ_k μ([k+1,∞))(1-q)^k`.
    pub(crate) fn tail_weighted_complement(&self, log_a: f64) -> f64 {
        let k_max = self.pmf.len() - 1;
        let a = log_a.exp();
        let head = if a * k_max as f64 <= 1e-3 {
            series(a, &self.tail_moments)
        } else {
            let mut acc = CompensatedSum::new();
            let mut k = 1;
            while k < k_max {
                let ak = a * k as f64;
                if ak > 41.0 {
                    acc.add(self.tail_cum[k]);
                    break;
                }
                acc.add(self.tail[k + 1] * -(-ak).exp_m1());
                k += 1;
            }
            acc.value()
        };
        let far = match (&self.shape, &self.meta) {
            (Some(shape), Some(meta)) => {
                let kernel = EllKernel::new(log_a, k_max as f64);
                meta.theta * shape.far_sum(k_max as u64 + 1, &kernel).value
            }
            _ => 0.0,
        };
        head + far
    }

    /// Exponential tilt `μ_k λ^k / G_μ(λ)`. For the Cauchy family the
    /// tilted law has a geometric tail and is returned as a table truncated
    /// where the remaining mass is below 1e-18.
    pub fn tilt(&self, lambda: f64) -> Result<OffspringDistribution> {
        let radius_ok = if self.is_finite_support() { lambda > 0.0 && lambda.is_finite() } else { lambda > 0.0 && lambda <= 1.0 };
        if !radius_ok {
            return Err(Error::Domain {
                value: lambda,
                domain: if self.is_finite_support() { "(0, ∞)" } else { "(0, 1]" },
            });
        }
        if lambda == 1.0 {
            return Ok(self.clone());
        }
        let mut weights = Vec::new();
        if self.is_finite_support() {
            weights.extend(self.pmf.iter().enumerate().map(|(k, p)| p * lambda.powi(k as i32)));
        } else {
            let log_lambda = lambda.ln();
            let mut k = 0u64;
            loop {
                let w = self.pmf(k) * (k as f64 * log_lambda).exp();
                weights.push(w);
                // μ is decreasing beyond k=1, so the rest is below w λ/(1-λ)
                if k >= 2 && w * lambda / (1.0 - lambda) < 1e-18 {
                    break;
                }
                k += 1;
            }
        }
        let norm = csum(weights.iter().copied());
        let pmf: Vec<f64> = weights.iter().map(|w| w / norm).collect();
        Self::from_table(pmf)
    }

    /// Per-worker sampler.
    pub fn sampler(&self) -> OffspringSampler<'_> {
        OffspringSampler::new(self)
    }

    /// Classifies `Σ (n log n) μ_n` as finite or infinite.
    pub fn nlogn_classification(&self) -> NlognReport {
        let mut partial_sums = Vec::new();
        let mut acc = CompensatedSum::new();
        let mut next = 100u64;
        for k in 2..=1_000_000u64 {
            let kf = k as f64;
            acc.add(kf * kf.ln() * self.pmf(k));
            if k == next {
                partial_sums.push((k, acc.value()));
                next *= 10;
            }
        }
        let verdict = match (&self.meta, self.is_finite_support()) {
            (_, true) => NlognVerdict::Convergent,
            (Some(meta), false) if meta.beta > 1.0 => NlognVerdict::Convergent,
            (Some(_), false) => NlognVerdict::Divergent,
            (None, false) => NlognVerdict::Unknown,
        };
        NlognReport { verdict, partial_sums }
    }
}

/// `Σ_{p≥1} (-1)^{p+1} a^p M_p / p!`, the expansion of `Σ w_k (1 - e^{-ak})`.
fn series(a: f64, moments: &[f64; MOMENTS]) -> f64 {
    let mut acc = 0.0;
    let mut coef = 1.0;
    for (p, m) in moments.iter().enumerate().skip(1) {
        coef *= a / p as f64;
        let term = coef * m;
        acc += if p % 2 == 1 { term } else { -term };
    }
    acc
}
