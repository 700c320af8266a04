//! Paired comparison statistics. The grid produces matched per-seed metric
//! pairs, so method orderings are judged with an exact one-sided sign test:
//! no distributional assumptions, exact p-values even for small n.

/// Outcome of a paired one-sided sign test for "first < second".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    /// Pairs where the first sample was strictly smaller.
    pub wins: usize,
    /// Pairs where the first sample was strictly larger.
    pub losses: usize,
    /// Pairs remaining after dropping exact ties.
    pub n_effective: usize,
    /// P[Binomial(n_effective, 1/2) >= wins]: probability of at least this
    /// many wins under the null of no systematic ordering.
    pub p_value: f64,
}

impl SignTest {
    pub fn significant(&self, alpha: f64) -> bool {
        self.n_effective > 0 && self.p_value < alpha
    }
}

/// Exact upper tail of Binomial(n, 1/2): P[X >= k].
pub fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    // pmf(0) = 0.5^n, pmf(i+1) = pmf(i) * (n - i) / (i + 1).
    let mut pmf = 0.5f64.powi(n as i32);
    let mut tail = 0.0;
    for i in 0..=n {
        if i >= k {
            tail += pmf;
        }
        if i < n {
            pmf *= (n - i) as f64 / (i + 1) as f64;
        }
    }
    tail.min(1.0)
}

/// Tests whether the paired differences are systematically negative,
/// i.e. whether the first member of each pair is smaller. Ties drop out.
pub fn sign_test_less(deltas: &[f64]) -> SignTest {
    let wins = deltas.iter().filter(|d| **d < 0.0).count();
    let losses = deltas.iter().filter(|d| **d > 0.0).count();
    let n_effective = wins + losses;
    let p_value = if n_effective == 0 {
        1.0
    } else {
        binomial_upper_tail(n_effective, wins)
    };
    SignTest {
        wins,
        losses,
        n_effective,
        p_value,
    }
}

/// Mean of a slice; NaN when empty.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}
