//! Scaling and centering sequences of the jump walk `X = ξ - 1`, and the
//! integrated tail `ℓ*(n) = Σ_{k≥n} L(k)/k` with `L(k) = k^2 μ_k`.

use serde::{Deserialize, Serialize};

use crate::offspring::OffspringDistribution;

/// `ℓ*(n) = Σ_{k≥n} k μ_k`.
pub fn ell_star(dist: &OffspringDistribution, n: u64) -> f64 {
    dist.mean_tail(n.max(1))
}

/// `ℓ*(⌈x⌉)` for real `x ≥ 1`.
pub fn ell_star_real(dist: &OffspringDistribution, x: f64) -> f64 {
    ell_star(dist, x.max(1.0).ceil() as u64)
}

/// `a_n = min{a ≥ 1 : n P(X ≥ a) ≤ 1}` with `P(X ≥ a) = μ([a+1,∞))`.
pub fn scaling_a(dist: &OffspringDistribution, n: u64) -> u64 {
    let n = n.max(1) as f64;
    let ok = |a: u64| n * dist.tail(a + 1) <= 1.0;
    if ok(1) {
        return 1;
    }
    let mut lo = 1u64;
    let mut hi = 2u64;
    while !ok(hi) {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `b_n = n E[X; |X| ≤ a_n] = n Σ_{k=0}^{a_n+1} (k-1) μ_k`.
pub fn centering_b(dist: &OffspringDistribution, n: u64) -> f64 {
    let a = scaling_a(dist, n);
    centering_b_at(dist, n, a)
}

fn centering_b_at(dist: &OffspringDistribution, n: u64, a: u64) -> f64 {
    let cut = a + 2;
    let first_moment = dist.mean() - dist.mean_tail(cut);
    let mass = 1.0 - dist.tail(cut);
    n as f64 * (first_moment - mass)
}

/// `L(n) = n^2 μ_n`.
pub fn slowly_varying(dist: &OffspringDistribution, n: u64) -> f64 {
    dist.slowly_varying(n)
}

/// One row of a [`SequenceTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRow {
    pub n: u64,
    pub a_n: u64,
    pub b_n: f64,
    pub ell_star_n: f64,
    pub ell_star_a_n: f64,
    /// `L(n) / ℓ*(n)`; NaN when `ℓ*(n) = 0`.
    pub l_over_ell_star: f64,
    pub a_over_n: f64,
    /// Quadrature bound on `ℓ*(n)` when it comes from the analytic tail.
    pub ell_star_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendFlags {
    pub l_over_ell_star_decreasing: bool,
    pub ell_star_decreasing: bool,
    pub a_over_n_decreasing: bool,
    /// `ℓ*` vanishes inside the table: the trends are degenerate.
    pub finite_support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceTable {
    pub rows: Vec<SequenceRow>,
    /// `γ = 1 - m`.
    pub gamma: f64,
    pub trends: TrendFlags,
}

impl SequenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,a_n,b_n,ell_star_n,ell_star_a_n,L_over_ellstar,a_over_n\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e},{:e}\n",
                r.n, r.a_n, r.b_n, r.ell_star_n, r.ell_star_a_n, r.l_over_ell_star, r.a_over_n
            ));
        }
        out
    }
}

/// Tabulates `a_n`, `b_n` and `ℓ*` over `n_values` with trend diagnostics.
pub fn lemma1_report(dist: &OffspringDistribution, n_values: &[u64]) -> SequenceTable {
    let mut n_sorted = n_values.to_vec();
    n_sorted.sort_unstable();
    n_sorted.dedup();
    let rows: Vec<SequenceRow> = n_sorted
        .iter()
        .map(|&n| {
            let a_n = scaling_a(dist, n);
            let ell_star_n = ell_star(dist, n);
            SequenceRow {
                n,
                a_n,
                b_n: centering_b_at(dist, n, a_n),
                ell_star_n,
                ell_star_a_n: ell_star(dist, a_n),
                l_over_ell_star: if ell_star_n > 0.0 { dist.slowly_varying(n) / ell_star_n } else { f64::NAN },
                a_over_n: a_n as f64 / n as f64,
                ell_star_error: dist.mean_tail_error(n),
            }
        })
        .collect();
    let finite_support = rows.iter().any(|r| r.ell_star_n == 0.0);
    let strictly_down = |f: &dyn Fn(&SequenceRow) -> f64| rows.windows(2).all(|w| f(&w[1]) < f(&w[0]));
    let trends = TrendFlags {
        l_over_ell_star_decreasing: !finite_support && strictly_down(&|r| r.l_over_ell_star),
        ell_star_decreasing: !finite_support && strictly_down(&|r| r.ell_star_n),
        a_over_n_decreasing: strictly_down(&|r| r.a_over_n),
        finite_support,
    };
    SequenceTable { rows, gamma: 1.0 - dist.mean(), trends }
}
