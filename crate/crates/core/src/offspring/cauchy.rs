//! Analytic shape `c / (k^2 log(k+e)^{1+β})` of the Cauchy-type family and
//! Euler–Maclaurin evaluation of weighted sums over its far tail.

use std::collections::HashMap;
use std::f64::consts::E;
use std::sync::{Mutex, OnceLock};

use crate::numeric::{csum, exp_remainder_over, geometric_breaks, integrate, log1p_exp, one_minus_exp_over};

/// Terms summed literally when normalizing the family; the remainder comes
/// from the Euler–Maclaurin far sum.
pub(crate) const NORMALIZATION_TERMS: u64 = 10_000_000;

/// A weight `g(x) = x · h(log x)` multiplying the family shape in a far sum
/// `Σ_{j ≥ N} base(j) g(j)`.
pub(crate) trait FarKernel {
    /// `h(t) = g(e^t) e^{-t}`.
    fn h(&self, t: f64) -> f64;
    /// `lim_{t→∞} h(t)`.
    fn h_inf(&self) -> f64;
    /// Abscissa beyond which `h` equals `h_inf` to ~1e-19 relative.
    fn settle(&self, t0: f64) -> f64;
    /// Points where `h` changes character.
    fn breaks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `g(x) = 1`: tail mass.
pub(crate) struct MassKernel;

impl FarKernel for MassKernel {
    fn h(&self, t: f64) -> f64 {
        (-t).exp()
    }
    fn h_inf(&self) -> f64 {
        0.0
    }
    fn settle(&self, t0: f64) -> f64 {
        t0 + 45.0
    }
}

/// `g(x) = x`: tail mean.
pub(crate) struct MeanKernel;

impl FarKernel for MeanKernel {
    fn h(&self, _t: f64) -> f64 {
        1.0
    }
    fn h_inf(&self) -> f64 {
        1.0
    }
    fn settle(&self, t0: f64) -> f64 {
        t0
    }
}

/// `g(x) = 1 - e^{-a x}` with `a = -log(1-q)` given as `log a`.
pub(crate) struct PgfKernel {
    pub log_a: f64,
}

impl FarKernel for PgfKernel {
    fn h(&self, t: f64) -> f64 {
        let y = (self.log_a + t).exp();
        if y > 1.0 {
            (-t).exp() * -(-y).exp_m1()
        } else {
            self.log_a.exp() * one_minus_exp_over(y)
        }
    }
    fn h_inf(&self) -> f64 {
        0.0
    }
    fn settle(&self, t0: f64) -> f64 {
        t0.max(-self.log_a) + 45.0
    }
    fn breaks(&self) -> Vec<f64> {
        transition_breaks(-self.log_a)
    }
}

/// `g(j) = Σ_{k=K}^{j-1} (1 - e^{-a k})`, the swapped form of
/// `Σ_{k ≥ K} μ([k+1,∞)) (1 - e^{-a k})`.
pub(crate) struct EllKernel {
    log_a: f64,
    ln_start: f64,
    /// `1 - e^{-aK}`.
    e0: f64,
    /// `e^{-aK}`.
    eak: f64,
    /// `(1 - r, r)` with `r = a / (1 - e^{-a})`.
    ratio: (f64, f64),
}

impl EllKernel {
    pub fn new(log_a: f64, start: f64) -> Self {
        let a = log_a.exp();
        let ratio = if a < 1e-4 {
            (-a / 2.0 - a * a / 12.0, 1.0 + a / 2.0 + a * a / 12.0)
        } else {
            let r = a / -(-a).exp_m1();
            (1.0 - r, r)
        };
        let a_k = (log_a + start.ln()).exp();
        Self { log_a, ln_start: start.ln(), e0: -(-a_k).exp_m1(), eak: (-a_k).exp(), ratio }
    }
}

impl FarKernel for EllKernel {
    fn h(&self, t: f64) -> f64 {
        // analytic in d = x - K, so x slightly below K (finite differences) is fine
        let d_over_x = -(self.ln_start - t).exp_m1();
        let mut bracket = self.e0;
        if self.eak > 0.0 {
            let y = (self.log_a + t).exp() * d_over_x;
            let (one_minus_r, r) = self.ratio;
            bracket += self.eak * (one_minus_r + r * exp_remainder_over(y));
        }
        d_over_x * bracket
    }
    fn h_inf(&self) -> f64 {
        1.0
    }
    fn settle(&self, t0: f64) -> f64 {
        t0.max(-self.log_a) + 45.0
    }
    fn breaks(&self) -> Vec<f64> {
        transition_breaks(-self.log_a)
    }
}

fn transition_breaks(center: f64) -> Vec<f64> {
    [-40.0, -20.0, -8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0, 20.0]
        .iter()
        .map(|d| center + d)
        .collect()
}

/// Value of a far sum with its quadrature error bound.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FarSum {
    pub value: f64,
    pub error: f64,
}

/// `base(k) = c / (k^2 log(k+e)^{1+β})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CauchyShape {
    pub beta: f64,
    pub c: f64,
}

impl CauchyShape {
    #[inline]
    pub fn base(&self, x: f64) -> f64 {
        self.c / (x * x * (x + E).ln().powf(1.0 + self.beta))
    }

    /// `log(e^t + e)^{-(1+β)}`.
    #[inline]
    fn log_factor(&self, t: f64) -> f64 {
        (t + log1p_exp(1.0 - t)).powf(-(1.0 + self.beta))
    }

    /// `Σ_{j ≥ start} base(j) · g(j)` for the kernel's `g`, by
    /// Euler–Maclaurin: integral + f(N)/2 − f'(N)/12.
    pub fn far_sum<K: FarKernel>(&self, start: u64, kernel: &K) -> FarSum {
        debug_assert!(start >= 1000, "far sums need a large starting index");
        let n = start as f64;
        let t0 = n.ln();
        let settle = kernel.settle(t0);
        let h_inf = kernel.h_inf();
        let t_big = if h_inf == 0.0 { settle } else { settle.max(60.0) };
        let breaks = geometric_breaks(t0, t_big, &kernel.breaks());
        let quad = integrate(|t| self.c * self.log_factor(t) * kernel.h(t), &breaks, 1e-13, 0.0);
        let remainder = if h_inf == 0.0 {
            0.0
        } else {
            self.c * h_inf * t_big.powf(-self.beta) / self.beta
        };
        let f = |x: f64| self.base(x) * x * kernel.h(x.ln());
        let step = 1e-3 * n;
        let f0 = f(n);
        let deriv = (f(n + step) - f(n - step)) / (2.0 * step);
        let value = quad.value + remainder + 0.5 * f0 - deriv / 12.0;
        // next Euler–Maclaurin term is O(f / N^3)
        let error = quad.error + f0.abs() / (n * n * n);
        FarSum { value, error }
    }

    /// `(Σ_{k≥1} base(k), Σ_{k≥1} k base(k))`, cached per shape.
    pub fn normalizers(&self) -> (f64, f64) {
        static CACHE: OnceLock<Mutex<HashMap<(u64, u64), (f64, f64)>>> = OnceLock::new();
        let key = (self.beta.to_bits(), self.c.to_bits());
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(v) = cache.lock().expect("normalizer cache poisoned").get(&key) {
            return *v;
        }
        let terms = NORMALIZATION_TERMS;
        let head_mass = csum((1..=terms).rev().map(|k| self.base(k as f64)));
        let head_mean = csum((1..=terms).rev().map(|k| k as f64 * self.base(k as f64)));
        let mass = head_mass + self.far_sum(terms + 1, &MassKernel).value;
        let mean = head_mean + self.far_sum(terms + 1, &MeanKernel).value;
        cache.lock().expect("normalizer cache poisoned").insert(key, (mass, mean));
        (mass, mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(shape: &CauchyShape, from: u64, to: u64, g: impl Fn(f64) -> f64) -> f64 {
        csum((from..=to).rev().map(|k| shape.base(k as f64) * g(k as f64)))
    }

    #[test]
    fn far_mass_matches_long_brute_sum() {
        let shape = CauchyShape { beta: 1.0, c: 1.0 };
        // Σ_{k ≥ 10^4} over 10^4..10^8 plus far(10^8+1)
        let direct = brute(&shape, 10_000, 100_000_000, |_| 1.0) + shape.far_sum(100_000_001, &MassKernel).value;
        let em = shape.far_sum(10_000, &MassKernel).value;
        assert!((direct - em).abs() < 1e-16, "direct={direct} em={em}");
    }

    #[test]
    fn far_mean_matches_long_brute_sum() {
        let shape = CauchyShape { beta: 0.5, c: 2.0 };
        let direct = brute(&shape, 5_000, 20_000_000, |x| x) + shape.far_sum(20_000_001, &MeanKernel).value;
        let em = shape.far_sum(5_000, &MeanKernel).value;
        assert!((direct - em).abs() < 1e-13, "direct={direct} em={em}");
    }

    #[test]
    fn far_pgf_matches_brute_sum() {
        let shape = CauchyShape { beta: 1.0, c: 1.0 };
        for &q in &[1e-2, 1e-4, 1e-6] {
            let a = -(-(q as f64)).ln_1p();
            let g = |x: f64| -(-a * x).exp_m1();
            let direct = brute(&shape, 2_000, 60_000_000, g)
                + shape.far_sum(60_000_001, &PgfKernel { log_a: a.ln() }).value;
            let em = shape.far_sum(2_000, &PgfKernel { log_a: a.ln() }).value;
            assert!((direct - em).abs() < 1e-15 * direct.abs().max(1e-3), "q={q} direct={direct} em={em}");
        }
    }

    #[test]
    fn ell_kernel_matches_swapped_brute_sum() {
        let shape = CauchyShape { beta: 1.0, c: 1.0 };
        let start = 2_000u64;
        let q: f64 = 1e-5;
        let a = -(-q).ln_1p();
        let big = 40_000_000u64;
        // Σ_{j>K} base(j) Σ_{k=K}^{j-1} (1 - e^{-ak}), with the inner sum as a running total
        let mut inner = crate::numeric::CompensatedSum::new();
        let mut acc = crate::numeric::CompensatedSum::new();
        for j in (start + 1)..=big {
            inner.add(-(-a * (j - 1) as f64).exp_m1());
            acc.add(shape.base(j as f64) * inner.value());
        }
        let head = acc.value();
        // beyond `big`, the kernel is within 1e-150 of (j - K) - (e^{-aK} - 0)/q
        let tail_mean = shape.far_sum(big + 1, &MeanKernel).value;
        let tail_mass = shape.far_sum(big + 1, &MassKernel).value;
        let offset = start as f64 + (-a * start as f64).exp() / q;
        let direct = head + tail_mean - offset * tail_mass;
        let em = shape
            .far_sum(start + 1, &EllKernel::new(a.ln(), start as f64))
            .value;
        assert!((direct - em).abs() < 1e-13 * direct, "direct={direct} em={em}");
    }
}
