//! Small numeric helpers: compensated summation, log-sum-exp, vector ops.

/// Kahan–Neumaier compensated accumulator.
///
/// Keeps a running correction term so that sums of many terms with widely
/// varying magnitudes (counts scaled down from log space, tiny inclusion
/// probabilities) do not lose low-order bits.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// log(Σ exp(terms)) with the usual max-scaling; terms of `-inf` are skipped.
///
/// The rescaled exponentials are accumulated with compensated summation.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut acc = KahanSum::new();
    for &t in terms {
        if t > f64::NEG_INFINITY {
            acc.add((t - max).exp());
        }
    }
    max + acc.value().ln()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = KahanSum::new();
    for (x, y) in a.iter().zip(b) {
        acc.add(x * y);
    }
    acc.value()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Clamp `x` to [-1, 1] when it lies within `margin` of the interval;
/// `None` when it violates the bound by more than `margin`.
#[inline]
pub fn clamp_unit(x: f64, margin: f64) -> Option<f64> {
    if x.abs() <= 1.0 {
        Some(x)
    } else if x.abs() <= 1.0 + margin {
        Some(x.signum())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_cancelled_bits() {
        let mut acc = KahanSum::new();
        acc.add(1.0);
        for _ in 0..10 {
            acc.add(1e-16);
        }
        acc.add(-1.0);
        assert!((acc.value() - 1e-15).abs() < 1e-30);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let terms = [0.0, (2.0f64).ln(), (3.0f64).ln()];
        assert!((log_sum_exp(&terms) - (6.0f64).ln()).abs() < 1e-14);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn clamp_unit_margins() {
        assert_eq!(clamp_unit(1.0 + 1e-12, 1e-9), Some(1.0));
        assert_eq!(clamp_unit(-1.0 - 1e-12, 1e-9), Some(-1.0));
        assert_eq!(clamp_unit(0.25, 1e-9), Some(0.25));
        assert_eq!(clamp_unit(1.1, 1e-9), None);
    }
}
