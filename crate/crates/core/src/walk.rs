//! Jump walks `W_k = X_1 + ... + X_k` with `X = ξ - 1`, their bridges
//! `{W_n = -1}`, the Vervaat transform to excursions, and the split at the
//! first maximal jump.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::convolution_power;
use crate::offspring::{OffspringDistribution, OffspringSampler};

/// Default elementary-draw budget for rejection samplers.
pub const DEFAULT_DRAW_BUDGET: u64 = 1_000_000_000;

/// Integer increments, each `≥ -1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JumpVector {
    increments: Vec<i64>,
}

impl JumpVector {
    pub fn new(increments: Vec<i64>) -> Result<Self> {
        if let Some(bad) = increments.iter().find(|&&x| x < -1) {
            return Err(Error::Contract(format!("increment {bad} is below -1")));
        }
        Ok(Self { increments })
    }

    pub(crate) fn from_trusted(increments: Vec<i64>) -> Self {
        debug_assert!(increments.iter().all(|&x| x >= -1));
        Self { increments }
    }

    pub fn increments(&self) -> &[i64] {
        &self.increments
    }

    pub fn into_increments(self) -> Vec<i64> {
        self.increments
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn sum(&self) -> i64 {
        self.increments.iter().sum()
    }

    /// `Σ X_i = -1`.
    pub fn is_bridge(&self) -> bool {
        !self.is_empty() && self.sum() == -1
    }

    /// Bridge whose strict prefix sums are all `≥ 0`.
    pub fn is_excursion(&self) -> bool {
        let mut w = 0i64;
        let last = self.increments.len().saturating_sub(1);
        for (i, &x) in self.increments.iter().enumerate() {
            w += x;
            if i < last && w < 0 {
                return false;
            }
        }
        self.is_bridge()
    }

    pub fn max(&self) -> Option<i64> {
        self.increments.iter().copied().max()
    }
}

/// The jump vector split at its first maximal increment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BigJumpSplit {
    /// 1-based index of the first maximum.
    pub v_n: usize,
    pub max_jump: i64,
    pub rest: JumpVector,
}

/// Bridge sampling diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DrawCost {
    pub tries: u64,
    pub draws: u64,
}

impl DrawCost {
    pub fn add(&mut self, other: DrawCost) {
        self.tries += other.tries;
        self.draws += other.draws;
    }
}

/// `n` independent copies of `X = ξ - 1`.
pub fn sample_iid_jumps<R: Rng + ?Sized>(sampler: &mut OffspringSampler<'_>, n: usize, rng: &mut R) -> JumpVector {
    let increments = (0..n).map(|_| sampler.sample(rng) as i64 - 1).collect();
    JumpVector::from_trusted(increments)
}

/// Exact bridge by rejection: draws `X_1, X_2, ...` and restarts as soon as
/// `W_k ≥ n - k`, since the remaining steps can then no longer reach -1.
pub fn sample_bridge_exact<R: Rng + ?Sized>(
    sampler: &mut OffspringSampler<'_>,
    n: usize,
    rng: &mut R,
    max_draws: u64,
) -> Result<(JumpVector, DrawCost)> {
    if n == 0 {
        return Err(Error::Parameter("bridge length must be at least 1".into()));
    }
    let mut cost = DrawCost::default();
    let mut buf = Vec::with_capacity(n);
    loop {
        cost.tries += 1;
        buf.clear();
        let mut w = 0i64;
        let mut alive = true;
        for k in 1..=n {
            let x = sampler.sample(rng) as i64 - 1;
            cost.draws += 1;
            w += x;
            buf.push(x);
            if w >= (n - k) as i64 {
                alive = false;
                break;
            }
        }
        if alive && w == -1 {
            return Ok((JumpVector::from_trusted(buf), cost));
        }
        if cost.draws >= max_draws {
            return Err(Error::BudgetExhausted { tries: cost.tries, draws: cost.draws });
        }
    }
}

/// APPROXIMATE bridge: `n - 1` iid jumps with the balancing jump
/// `-1 - Σ` inserted at a uniform position, redrawing while it is below -1.
pub fn sample_bridge_planted<R: Rng + ?Sized>(
    sampler: &mut OffspringSampler<'_>,
    n: usize,
    rng: &mut R,
) -> Result<(JumpVector, DrawCost)> {
    if n < 2 {
        return Err(Error::Parameter("planted bridges need n >= 2".into()));
    }
    let mut cost = DrawCost::default();
    loop {
        cost.tries += 1;
        let mut inc = Vec::with_capacity(n);
        let mut sum = 0i64;
        for _ in 0..n - 1 {
            let x = sampler.sample(rng) as i64 - 1;
            sum += x;
            inc.push(x);
        }
        cost.draws += n as u64 - 1;
        let balance = -1 - sum;
        if balance < -1 {
            continue;
        }
        let pos = rng.gen_range(0..n);
        inc.insert(pos, balance);
        return Ok((JumpVector::from_trusted(inc), cost));
    }
}

/// Sampler for the bridge law restricted to `{max X ≥ t}`, exact on that
/// event.
///
/// A proposal draws `n - 1` iid jumps `Y`, plants `J = -1 - ΣY` at a uniform
/// position and requires `J ≥ t` and `J ≥ max Y`. It is accepted with
/// probability `P(X = J) / (r · sup_{k≥t} P(X = k))`, where `r` counts the
/// entries equal to `J`, which cancels the proposal's bias towards vectors
/// with a large maximum. The total variation distance to the unrestricted
/// bridge law is exactly `P(max X < t | W_n = -1)`, reported as
/// [`residual`](Self::residual) and kept below the requested bound.
#[derive(Debug, Clone)]
pub struct BigJumpSampler {
    n: usize,
    threshold: i64,
    residual: f64,
    /// `P(X = k)` for `k = -1 ..= n - 2`, at index `k + 1`.
    jump_pmf: Vec<f64>,
    /// `sup_{k ≥ t} P(X = k)`.
    ceiling: f64,
    bridge_probability: f64,
}

impl BigJumpSampler {
    /// Chooses the largest threshold whose residual is at most `tv_bound`.
    pub fn new(dist: &OffspringDistribution, n: usize, tv_bound: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("bridge length must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&tv_bound) {
            return Err(Error::Parameter(format!("tv bound {tv_bound} outside [0,1)")));
        }
        // bridge increments never exceed n - 2, so ξ ≤ n - 1 loses nothing
        let xi_pmf: Vec<f64> = (0..n as u64).map(|k| dist.pmf(k)).collect();
        let bridge_probability = convolution_power(&xi_pmf, n as u64, n)[n - 1];
        if !(bridge_probability > 0.0) {
            return Err(Error::Parameter(format!("P(W_{n} = -1) vanishes")));
        }
        // FFT rounding: about ε·log2(size) per product on unit-mass inputs,
        // accumulated over the squarings
        let steps = 2.0 * (n as f64).log2().ceil() + 2.0;
        let noise = 5e-16 * (2.0 * n as f64).log2().ceil() * steps;
        let residual_at = |t: i64| -> f64 {
            if t <= -1 {
                return 0.0;
            }
            // max X < t  <=>  ξ ≤ t
            let truncated = &xi_pmf[..(t as usize + 1).min(n)];
            let p = convolution_power(truncated, n as u64, n)[n - 1];
            ((p + noise) / bridge_probability).min(1.0)
        };
        let mut lo = -1i64;
        let mut hi = n as i64 - 1;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if residual_at(mid) <= tv_bound {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let threshold = lo;
        let jump_pmf: Vec<f64> = xi_pmf.clone();
        let ceiling = jump_pmf[(threshold + 1) as usize..].iter().copied().fold(0.0, f64::max);
        Ok(Self { n, threshold, residual: residual_at(threshold), jump_pmf, ceiling, bridge_probability })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Smallest admissible maximal jump `t`.
    pub fn threshold(&self) -> i64 {
        self.threshold
    }

    /// Total variation distance to the exact bridge law.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `P(W_n = -1)`.
    pub fn bridge_probability(&self) -> f64 {
        self.bridge_probability
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        sampler: &mut OffspringSampler<'_>,
        rng: &mut R,
        max_draws: u64,
    ) -> Result<(JumpVector, DrawCost)> {
        let n = self.n;
        if n == 1 {
            return Ok((JumpVector::from_trusted(vec![-1]), DrawCost { tries: 1, draws: 0 }));
        }
        let mut cost = DrawCost::default();
        let mut inc = Vec::with_capacity(n);
        loop {
            if cost.draws >= max_draws {
                return Err(Error::BudgetExhausted { tries: cost.tries, draws: cost.draws });
            }
            cost.tries += 1;
            inc.clear();
            let mut sum = 0i64;
            let mut max = i64::MIN;
            let mut feasible = true;
            for _ in 0..n - 1 {
                let x = sampler.sample(rng) as i64 - 1;
                cost.draws += 1;
                sum += x;
                max = max.max(x);
                inc.push(x);
                // J = -1 - Σ only shrinks as more jumps arrive (up to +1 per step)
                let remaining = (n - 1 - inc.len()) as i64;
                let best_j = -1 - sum + remaining;
                if best_j < self.threshold || best_j < max {
                    feasible = false;
                    break;
                }
            }
            if !feasible {
                continue;
            }
            let j = -1 - sum;
            if j < self.threshold || j < max {
                continue;
            }
            let ties = 1 + inc.iter().filter(|&&x| x == j).count();
            let accept = self.jump_pmf[(j + 1) as usize] / (ties as f64 * self.ceiling);
            if rng.gen::<f64>() >= accept {
                continue;
            }
            let pos = rng.gen_range(0..n);
            let mut out = Vec::with_capacity(n);
            out.extend_from_slice(&inc[..pos]);
            out.push(j);
            out.extend_from_slice(&inc[pos..]);
            return Ok((JumpVector::from_trusted(out), cost));
        }
    }
}

/// Cyclic rotation of a bridge just after the first index where its prefix
/// sum is minimal; the result is an excursion.
pub fn vervaat(bridge: &JumpVector) -> Result<JumpVector> {
    if !bridge.is_bridge() {
        return Err(Error::Contract(format!("vervaat needs a bridge to -1, got sum {}", bridge.sum())));
    }
    let inc = bridge.increments();
    let mut w = 0i64;
    let mut min = i64::MAX;
    let mut at = 0usize;
    for (i, &x) in inc.iter().enumerate() {
        w += x;
        if w < min {
            min = w;
            at = i + 1;
        }
    }
    let mut out = Vec::with_capacity(inc.len());
    out.extend_from_slice(&inc[at..]);
    out.extend_from_slice(&inc[..at]);
    let exc = JumpVector::from_trusted(out);
    debug_assert!(exc.is_excursion());
    Ok(exc)
}

/// Splits at the first maximal increment.
pub fn big_jump_split(jumps: &JumpVector) -> Result<BigJumpSplit> {
    let inc = jumps.increments();
    let Some(max_jump) = jumps.max() else {
        return Err(Error::Parameter("empty jump vector".into()));
    };
    let pos = inc.iter().position(|&x| x == max_jump).expect("maximum is attained");
    let mut rest = Vec::with_capacity(inc.len() - 1);
    rest.extend_from_slice(&inc[..pos]);
    rest.extend_from_slice(&inc[pos + 1..]);
    Ok(BigJumpSplit { v_n: pos + 1, max_jump, rest: JumpVector::from_trusted(rest) })
}
