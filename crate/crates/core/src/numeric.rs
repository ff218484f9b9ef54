//! Small numerical kernels shared by the offspring and height code:
//! compensated summation, adaptive Gauss–Kronrod quadrature and
//! cancellation-free forms of `1 - e^{-y}`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Neumaier (improved Kahan–Babuška) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn csum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// `(1 - e^{-y}) / y`, equal to 1 at `y = 0`.
#[inline]
pub fn one_minus_exp_over(y: f64) -> f64 {
    if y == 0.0 {
        1.0
    } else if y.is_infinite() {
        0.0
    } else {
        -(-y).exp_m1() / y
    }
}

/// `(e^{-y} - 1 + y) / y` for `y >= 0`, accurate to a few ulps everywhere.
#[inline]
pub fn exp_remainder_over(y: f64) -> f64 {
    if y < 0.5 {
        // y/2! - y^2/3! + y^3/4! - ...
        let mut term = 0.5 * y;
        let mut acc: f64 = 0.0;
        let mut k = 2.0;
        while term.abs() > 1e-18 * acc.abs().max(f64::MIN_POSITIVE) {
            acc += term;
            k += 1.0;
            term *= -y / k;
            if k > 40.0 {
                break;
            }
        }
        acc
    } else if y.is_infinite() {
        1.0
    } else {
        1.0 - one_minus_exp_over(y)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn log1p_exp(x: f64) -> f64 {
    if x > 36.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(e^a - e^b)` for `a >= b`.
#[inline]
pub fn log_diff_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + (-(b - a).exp_m1()).ln()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut samples = [(0.0, 0.0); 7];
    for j in 0..7 {
        let x = h * XGK[j];
        let (f1, f2) = (f(c - x), f(c + x));
        samples[j] = (f1, f2);
        let s = f1 + f2;
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    // QUADPACK error scaling against the spread of f around its mean
    let mean = 0.5 * kron;
    let mut spread = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        spread += WGK[j] * ((samples[j].0 - mean).abs() + (samples[j].1 - mean).abs());
    }
    let spread = spread * h.abs();
    let raw = ((kron - gauss) * h).abs();
    let err = if spread > 0.0 && raw > 0.0 { spread * (200.0 * raw / spread).powf(1.5).min(1.0) } else { raw };
    (kron * h, err.max(50.0 * f64::EPSILON * (kron * h).abs()))
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    /// Summed QUADPACK-style panel error estimates.
    pub error: f64,
}

/// Globally adaptive Gauss–Kronrod (7/15) integration over the sorted
/// `breaks`, refining the worst panel until the summed error estimate is
/// below `max(abs_tol, rel_tol * |value|)` or 4000 bisections are spent.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breaks: &[f64], rel_tol: f64, abs_tol: f64) -> Quadrature {
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut err = 0.0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (v, e) = gk15(&f, w[0], w[1]);
            value += v;
            err += e;
            heap.push(Panel { a: w[0], b: w[1], value: v, err: e });
        }
    }
    let mut iterations = 0;
    while err > abs_tol.max(rel_tol * value.abs()) && iterations < 4000 {
        let Some(worst) = heap.pop() else {
            break;
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        value += v1 + v2 - worst.value;
        err += e1 + e2 - worst.err;
        heap.push(Panel { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, err: e2 });
        iterations += 1;
    }
    let value = csum(heap.iter().map(|p| p.value));
    let error = heap.iter().map(|p| p.err).sum();
    Quadrature { value, error }
}

/// Geometric breakpoints `lo, lo+1, lo+2, lo+4, ...` up to `hi`, merged with
/// any extra points inside `(lo, hi)`.
pub fn geometric_breaks(lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let mut pts = vec![lo];
    let mut step = 1.0;
    while lo + step < hi {
        pts.push(lo + step);
        step *= 2.0;
    }
    pts.push(hi);
    pts.extend(extra.iter().copied().filter(|&x| x > lo && x < hi));
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    pts
}

/// Linear convolution of two nonnegative sequences, truncated to `keep`
/// terms. Uses an FFT above a small size.
pub fn convolve(a: &[f64], b: &[f64], keep: usize) -> Vec<f64> {
    let full = (a.len() + b.len()).saturating_sub(1).min(keep);
    if a.is_empty() || b.is_empty() || full == 0 {
        return Vec::new();
    }
    if a.len().min(b.len()) <= 64 {
        let mut out = vec![0.0; full];
        for (i, &x) in a.iter().enumerate().take(full) {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate().take(full - i) {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let size = (a.len() + b.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let lift = |v: &[f64]| {
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for (slot, &x) in buf.iter_mut().zip(v) {
            slot.re = x;
        }
        buf
    };
    let mut fa = lift(a);
    let mut fb = lift(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa.iter().take(full).map(|c| (c.re * scale).max(0.0)).collect()
}

/// `n`-fold convolution power of `base`, truncated to `keep` terms, by
/// repeated squaring.
pub fn convolution_power(base: &[f64], n: u64, keep: usize) -> Vec<f64> {
    let mut result = vec![1.0];
    let mut square: Vec<f64> = base.iter().copied().take(keep).collect();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = convolve(&result, &square, keep);
        }
        e >>= 1;
        if e > 0 {
            square = convolve(&square, &square, keep);
        }
    }
    result.resize(keep, 0.0);
    result
}
