use rand::Rng;

use super::OffspringDistribution;

/// Tail-table length beyond which samples are located by bisection on the
/// analytic tail instead of by table lookup.
const TABLE_CAP: usize = 1 << 24;

/// Inverse-CDF sampler over `μ([k,∞))`.
///
/// The sampler owns a tail table that starts as a copy of the
/// distribution's head and doubles whenever a uniform draw falls below the
/// covered range. It is not shared: clone it (or call
/// [`OffspringDistribution::sampler`]) once per worker thread.
#[derive(Debug, Clone)]
pub struct OffspringSampler<'a> {
    dist: &'a OffspringDistribution,
    /// `tails[k] = μ([k,∞))`, nonincreasing, `tails[0] = 1`.
    tails: Vec<f64>,
}

impl<'a> OffspringSampler<'a> {
    pub(super) fn new(dist: &'a OffspringDistribution) -> Self {
        Self { dist, tails: dist.tail.clone() }
    }

    pub fn distribution(&self) -> &'a OffspringDistribution {
        self.dist
    }

    /// Number of tail values currently tabulated.
    pub fn table_len(&self) -> usize {
        self.tails.len()
    }

    /// Draws `k` with probability `μ_k`.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> u64 {
        let u = uniform_open_closed(rng);
        self.quantile(u)
    }

    /// Largest `k` with `μ([k,∞)) ≥ u`, for `u ∈ (0,1]`.
    pub fn quantile(&mut self, u: f64) -> u64 {
        // most of the mass sits on the first few values
        for k in 1..8.min(self.tails.len()) {
            if self.tails[k] < u {
                return k as u64 - 1;
            }
        }
        loop {
            let last = *self.tails.last().expect("tail table is never empty");
            if last < u || self.dist.is_finite_support() {
                let idx = self.tails.partition_point(|&t| t >= u);
                return idx as u64 - 1;
            }
            if self.tails.len() >= TABLE_CAP {
                return self.bisect_far(u);
            }
            self.grow();
        }
    }

    fn grow(&mut self) {
        let from = self.tails.len();
        let to = (2 * from).min(TABLE_CAP);
        let block = self.dist.tail_block(from, to);
        self.tails.extend(block);
    }

    fn bisect_far(&self, u: f64) -> u64 {
        // tail(lo) >= u > tail(hi)
        let mut lo = self.tails.len() as u64 - 1;
        let mut hi = lo.saturating_mul(2);
        while self.dist.tail(hi) >= u {
            lo = hi;
            hi = hi.saturating_mul(2);
            if hi == u64::MAX {
                return lo;
            }
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.dist.tail(mid) >= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Uniform draw in `(0, 1]` with 64 random bits.
#[inline]
pub(crate) fn uniform_open_closed<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (rng.gen::<u64>() as f64 + 1.0) * (1.0 / 18_446_744_073_709_551_616.0)
}
