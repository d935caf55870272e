//! Log-space combinatorics over the permutation orbit of a binary label
//! vector: swap distances, the inner product u(r), orbit sizes, and the
//! pair-configuration counts that drive the second-moment formulas.
//!
//! Orbit sizes reach 1.8e18 at the sample sizes of interest and pair counts
//! reach N², so every count is carried as a log value; exact integers are
//! exposed where they fit in 64 bits.

use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, KahanSum};
use crate::special::ln_gamma;

/// Group sizes (m0 controls, m1 cases) with a precomputed ln-factorial
/// table. Immutable after construction, cheap to share across threads.
#[derive(Clone, Debug)]
pub struct GroupSizes {
    m0: usize,
    m1: usize,
    ln_fact: Vec<f64>,
}

impl GroupSizes {
    pub fn new(m0: usize, m1: usize) -> Result<Self> {
        if m0 < 1 || m1 < 1 {
            return Err(Error::Invalid(format!(
                "both groups must be non-empty (m0 = {m0}, m1 = {m1})"
            )));
        }
        let n = m0 + m1;
        if n < 4 {
            return Err(Error::Invalid(format!(
                "need m0 + m1 >= 4 so the effective sphere dimension is >= 2 (got n = {n})"
            )));
        }
        let ln_fact = (0..=n).map(|k| ln_gamma(k as f64 + 1.0)).collect();
        Ok(Self { m0, m1, ln_fact })
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn n(&self) -> usize {
        self.m0 + self.m1
    }

    /// min(m0, m1); the cost-determining size.
    pub fn m_bar(&self) -> usize {
        self.m0.min(self.m1)
    }

    /// Effective sphere dimension d = n - 2 for centered unit vectors.
    pub fn dim(&self) -> usize {
        self.n() - 2
    }

    /// ln C(n, k); `NEG_INFINITY` outside 0 <= k <= n.
    pub fn ln_choose(&self, n: usize, k: isize) -> f64 {
        if k < 0 || k as usize > n {
            return f64::NEG_INFINITY;
        }
        let k = k as usize;
        debug_assert!(n < self.ln_fact.len());
        self.ln_fact[n] - self.ln_fact[k] - self.ln_fact[n - k]
    }

    /// Inner product u(r) = 1 - r(1/m0 + 1/m1) of two standardized label
    /// vectors at swap distance r.
    ///
    /// Evaluated as an exact integer ratio so that the boundary values
    /// u(0) = 1 and u(m̄) = -1 (when m0 = m1) are hit exactly; the branch
    /// dispatch in the inclusion probabilities relies on that.
    pub fn inner_product_at_swap(&self, r: usize) -> Result<f64> {
        if r > self.m_bar() {
            return Err(Error::Invalid(format!(
                "swap distance {r} exceeds min(m0, m1) = {}",
                self.m_bar()
            )));
        }
        let num = (self.m0 * self.m1) as i64 - (r * (self.m0 + self.m1)) as i64;
        Ok(num as f64 / (self.m0 * self.m1) as f64)
    }

    /// ln N where N = C(m0 + m1, m1) is the orbit size.
    pub fn log_orbit_size(&self) -> f64 {
        self.ln_choose(self.n(), self.m1 as isize)
    }

    /// Exact orbit size when it fits in 64 bits.
    pub fn orbit_size_exact(&self) -> Option<u64> {
        choose_exact(self.n() as u64, self.m1 as u64)
    }

    /// ln[C(m0, r) C(m1, r)]: permutations at swap distance r from a fixed
    /// orbit point.
    pub fn log_count_at_distance(&self, r: usize) -> Result<f64> {
        if r > self.m_bar() {
            return Err(Error::Invalid(format!(
                "swap distance {r} exceeds min(m0, m1) = {}",
                self.m_bar()
            )));
        }
        Ok(self.ln_choose(self.m0, r as isize) + self.ln_choose(self.m1, r as isize))
    }

    /// ln c(r, δ): ordered pairs at swap distances (r1, r2) from the center
    /// whose flipped sets overlap in δ1 positions on the m0 side and δ2 on
    /// the m1 side. Out-of-range δ yield a zero count (`NEG_INFINITY`), not
    /// an error.
    pub fn log_pair_config_count(&self, r1: usize, r2: usize, d1: usize, d2: usize) -> f64 {
        let (m0, m1) = (self.m0 as isize, self.m1 as isize);
        let (r1i, r2i) = (r1 as isize, r2 as isize);
        let (d1i, d2i) = (d1 as isize, d2 as isize);
        self.ln_choose(self.m0, d1i)
            + self.ln_choose(self.m1, d2i)
            + self.ln_choose((m0 - d1i).max(0) as usize, r1i - d1i)
            + self.ln_choose((m1 - d2i).max(0) as usize, r1i - d2i)
            + self.ln_choose((m0 - r1i).max(0) as usize, r2i - d1i)
            + self.ln_choose((m1 - r1i).max(0) as usize, r2i - d2i)
    }

    /// Admissible swap distances between the two non-center points given
    /// their distances (r1, r2) from the center. Empty when the lower bound
    /// exceeds the upper.
    pub fn r3_range(&self, r1: usize, r2: usize) -> std::ops::RangeInclusive<usize> {
        let lo = 1.max(r1.abs_diff(r2));
        let hi = (r1 + r2)
            .min(self.m_bar())
            .min(self.n().saturating_sub(r1 + r2));
        lo..=hi
    }

    /// ln c(r1, r2, r3): configurations summed over the admissible overlap
    /// splits, accumulated in linear space after scaling by the largest log
    /// term.
    pub fn log_triple_config_count(&self, triple: &SwapTriple) -> f64 {
        let (r1, r2, r3) = (triple.r1, triple.r2, triple.r3);
        let overlap = (r1 + r2) as isize - r3 as isize;
        if overlap < 0 {
            return f64::NEG_INFINITY;
        }
        let r_min = r1.min(r2);
        let mut terms = Vec::with_capacity(r_min + 1);
        for d1 in 0..=r_min {
            let d2 = overlap - d1 as isize;
            if d2 < 0 || d2 as usize > r_min {
                continue;
            }
            terms.push(self.log_pair_config_count(r1, r2, d1, d2 as usize));
        }
        log_sum_exp(&terms)
    }

    /// Iterate over all admissible (r1, r2, r3) triples with r1, r2, r3 >= 1.
    pub fn swap_triples(&self) -> impl Iterator<Item = SwapTriple> + '_ {
        let m_bar = self.m_bar();
        (1..=m_bar).flat_map(move |r1| {
            (1..=m_bar).flat_map(move |r2| {
                self.r3_range(r1, r2)
                    .map(move |r3| SwapTriple { r1, r2, r3 })
            })
        })
    }

    /// The census of all N² ordered pairs of orbit points relative to a
    /// fixed center, as (class, ln count) entries. The four classes
    /// partition N² exactly; the estimator layer maps each class to its
    /// inclusion probability without re-deriving any counting.
    pub fn pair_census(&self) -> impl Iterator<Item = (PairClass, f64)> + '_ {
        let m_bar = self.m_bar();
        let both_center = std::iter::once((PairClass::BothCenter, 0.0));
        let singles = (1..=m_bar).flat_map(move |r| {
            let lc = self
                .log_count_at_distance(r)
                .expect("r <= m_bar by construction");
            [
                // (center, other) and (other, center) orderings
                (PairClass::OneCenter { r }, std::f64::consts::LN_2 + lc),
                (PairClass::Repeated { r }, lc),
            ]
        });
        let distinct = self.swap_triples().filter_map(move |t| {
            let lc = self.log_triple_config_count(&t);
            (lc > f64::NEG_INFINITY).then_some((PairClass::Distinct(t), lc))
        });
        both_center.chain(singles).chain(distinct)
    }
}

/// Pairwise swap distances among two orbit points and the census center.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SwapTriple {
    pub r1: usize,
    pub r2: usize,
    pub r3: usize,
}

impl SwapTriple {
    pub fn new(r1: usize, r2: usize, r3: usize, g: &GroupSizes) -> Result<Self> {
        let m_bar = g.m_bar();
        if r1 < 1 || r1 > m_bar || r2 < 1 || r2 > m_bar {
            return Err(Error::Invalid(format!(
                "swap distances r1 = {r1}, r2 = {r2} must lie in 1..={m_bar}"
            )));
        }
        if !g.r3_range(r1, r2).contains(&r3) {
            return Err(Error::Invalid(format!(
                "r3 = {r3} outside the admissible range {:?} for (r1, r2) = ({r1}, {r2})",
                g.r3_range(r1, r2)
            )));
        }
        Ok(Self { r1, r2, r3 })
    }
}

/// Classification of an ordered pair of orbit points relative to the center.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PairClass {
    /// Both points are the center itself.
    BothCenter,
    /// Exactly one point is the center; the other sits at swap distance r
    /// (count already includes both orderings).
    OneCenter { r: usize },
    /// The two points coincide with each other but not the center.
    Repeated { r: usize },
    /// Three distinct points.
    Distinct(SwapTriple),
}

/// Exact C(n, k) via the multiplicative formula, `None` on u64 overflow.
pub fn choose_exact(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc.checked_mul((n - k + i) as u128)?;
        acc /= i as u128; // exact: acc is C(n-k+i, i) at each step
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Swap distance between two binary vectors with equal length and equal
/// numbers of ones: the count of positions where `a` is one and `b` is zero.
pub fn swap_distance(a: &[bool], b: &[bool]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let ones_a = a.iter().filter(|&&x| x).count();
    let ones_b = b.iter().filter(|&&x| x).count();
    if ones_a != ones_b {
        return Err(Error::Invalid(format!(
            "vectors carry different numbers of ones: {ones_a} vs {ones_b}"
        )));
    }
    Ok(a.iter().zip(b).filter(|(&x, &y)| x && !y).count())
}

/// exp(ln_count - ln_scale) with a compensated running sum; shared helper
/// for the estimator accumulations.
pub(crate) fn accumulate_scaled(acc: &mut KahanSum, ln_count: f64, ln_scale: f64, weight: f64) {
    if ln_count == f64::NEG_INFINITY || weight == 0.0 {
        return;
    }
    acc.add((ln_count - ln_scale).exp() * weight);
}
