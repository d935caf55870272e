//! Ground-truth machinery: exact permutation p-values by enumeration,
//! add-one Monte Carlo p-values, and uniform samplers on the sphere and on
//! conditioned subspheres.
//!
//! Everything here is deliberately independent of the closed-form modules:
//! these are the oracles the formulas are checked against.
//!
//! RNG: ChaCha8 seeded from a caller-supplied 64-bit value (`rand_chacha`,
//! version pinned by the lockfile), so every sampler and Monte Carlo run is
//! reproducible bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimators::{label_values, Sided, StandardizedPair};
use crate::numeric::dot;

/// Limits and seeding for the oracle runs.
#[derive(Clone, Copy, Debug)]
pub struct OracleConfig {
    /// Refuse exact enumeration above this orbit size.
    pub max_exact_orbit: u64,
    pub mc_draws: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_exact_orbit: 2_000_000,
            mc_draws: 100_000,
            seed: 0x7065_726d,
        }
    }
}

/// Visit the sum of every k-subset of `values`, in lexicographic order of
/// the index sets.
///
/// Sums are built by value-passing descent, so each leaf receives the
/// ascending-index sum of exactly its elements: the observed allocation
/// reproduces the threshold bit for bit, which keeps tie comparisons exact
/// and guarantees p >= 1/N.
fn for_each_subset_sum<F: FnMut(f64)>(values: &[f64], k: usize, visit: &mut F) {
    fn descend<F: FnMut(f64)>(values: &[f64], start: usize, left: usize, sum: f64, visit: &mut F) {
        if left == 0 {
            visit(sum);
            return;
        }
        for i in start..=(values.len() - left) {
            descend(values, i + 1, left - 1, sum + values[i], visit);
        }
    }
    descend(values, 0, k, 0.0, visit);
}

fn ensure_enumerable(sp: &StandardizedPair, cfg: &OracleConfig) -> Result<u64> {
    let g = sp.group_sizes();
    match g.orbit_size_exact() {
        Some(n) if n <= cfg.max_exact_orbit => Ok(n),
        _ => Err(Error::OrbitTooLarge {
            log10_orbit: g.log_orbit_size() / std::f64::consts::LN_10,
            cap: cfg.max_exact_orbit,
        }),
    }
}

/// Ascending-index sum of the response over the observed case positions;
/// the enumeration threshold.
fn observed_case_sum(sp: &StandardizedPair) -> f64 {
    sp.labels()
        .iter()
        .zip(sp.y0())
        .filter_map(|(&b, &y)| b.then_some(y))
        .fold(0.0, |acc, y| acc + y)
}

/// Exact permutation p-value by full orbit enumeration.
///
/// The statistic for case set S is (α-β) Σ_{i∈S} y0_i with α-β > 0, so the
/// count compares raw subset sums against the observed one.
pub fn exact_p(sp: &StandardizedPair, sided: Sided, cfg: &OracleConfig) -> Result<f64> {
    let n_orbit = ensure_enumerable(sp, cfg)?;
    let threshold = observed_case_sum(sp);
    let mut count: u64 = 0;
    match sided {
        Sided::One => for_each_subset_sum(sp.y0(), sp.group_sizes().m1(), &mut |s| {
            if s >= threshold {
                count += 1;
            }
        }),
        Sided::Two => {
            let t_abs = threshold.abs();
            for_each_subset_sum(sp.y0(), sp.group_sizes().m1(), &mut |s| {
                if s.abs() >= t_abs {
                    count += 1;
                }
            })
        }
    }
    Ok(count as f64 / n_orbit as f64)
}

/// Exact orbit cap fraction p(y, ρ̂) for an arbitrary sum-zero unit center
/// y: the fraction of orbit points x_k with ⟨x_k, y⟩ >= ρ̂ (two-sided:
/// |⟨x_k, y⟩| >= |ρ̂|).
pub fn exact_p_at_center(
    center: &[f64],
    g: &crate::combinatorics::GroupSizes,
    rho_hat: f64,
    sided: Sided,
    cfg: &OracleConfig,
) -> Result<f64> {
    let n_orbit = match g.orbit_size_exact() {
        Some(n) if n <= cfg.max_exact_orbit => n,
        _ => {
            return Err(Error::OrbitTooLarge {
                log10_orbit: g.log_orbit_size() / std::f64::consts::LN_10,
                cap: cfg.max_exact_orbit,
            })
        }
    };
    if center.len() != g.n() {
        return Err(Error::Invalid(format!(
            "center length {} does not match n = {}",
            center.len(),
            g.n()
        )));
    }
    let (positive, negative) = label_values(g.m0(), g.m1());
    let gap = positive - negative;
    let threshold = rho_hat / gap;
    let mut count: u64 = 0;
    match sided {
        Sided::One => for_each_subset_sum(center, g.m1(), &mut |s| {
            if s >= threshold {
                count += 1;
            }
        }),
        Sided::Two => {
            let t_abs = threshold.abs();
            for_each_subset_sum(center, g.m1(), &mut |s| {
                if s.abs() >= t_abs {
                    count += 1;
                }
            })
        }
    }
    Ok(count as f64 / n_orbit as f64)
}

/// As [`exact_p_at_center`], for centers drawn on the subsphere
/// {y : ⟨y, x_c⟩ = ρ̃} around the allocation `case_mask`.
///
/// The conditioning makes the inner product of two allocations with the
/// center deterministic: the conditioning allocation itself (inner product
/// exactly ρ̃) and, when m0 = m1, its complement (exactly -ρ̃). The sampler
/// reproduces the constraint only to rounding, which would turn those sure
/// indicators into coin flips; they are therefore replaced by their exact
/// values and the enumeration settles the remaining allocations.
pub fn exact_p_at_center_conditioned(
    center: &[f64],
    g: &crate::combinatorics::GroupSizes,
    rho_hat: f64,
    sided: Sided,
    case_mask: &[bool],
    rho_tilde: f64,
    cfg: &OracleConfig,
) -> Result<f64> {
    if case_mask.len() != center.len() {
        return Err(Error::Invalid("case mask and center lengths differ".into()));
    }
    let raw = exact_p_at_center(center, g, rho_hat, sided, cfg)?;
    let (positive, negative) = label_values(g.m0(), g.m1());
    let threshold = rho_hat / (positive - negative);
    let n_orbit = g.orbit_size_exact().expect("checked by exact_p_at_center") as f64;
    // ascending-index sums, bit-identical to the enumeration's visits
    let mask_sum = |mask: &dyn Fn(bool) -> bool| {
        case_mask
            .iter()
            .zip(center)
            .filter_map(|(&b, &y)| mask(b).then_some(y))
            .fold(0.0, |acc, y| acc + y)
    };
    let replace = |sum: f64, exact: bool| -> f64 {
        let counted = match sided {
            Sided::One => sum >= threshold,
            Sided::Two => sum.abs() >= threshold.abs(),
        };
        (exact as i64 - counted as i64) as f64 / n_orbit
    };
    let mut p = raw;
    let exact_self = match sided {
        Sided::One => rho_tilde >= rho_hat,
        Sided::Two => rho_tilde.abs() >= rho_hat.abs(),
    };
    p += replace(mask_sum(&|b| b), exact_self);
    if g.m0() == g.m1() {
        let exact_complement = match sided {
            Sided::One => -rho_tilde >= rho_hat,
            Sided::Two => rho_tilde.abs() >= rho_hat.abs(),
        };
        p += replace(mask_sum(&|b| !b), exact_complement);
    }
    Ok(p)
}

/// A Monte Carlo p-value with its binomial standard error.
#[derive(Clone, Copy, Debug)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Monte Carlo permutation p-value over `mc_draws` allocations.
///
/// The observed allocation is always included in the numerator and the
/// denominator, so the estimate can never be zero: its floor is
/// 1/mc_draws, the Monte Carlo granularity limit.
pub fn mc_p(sp: &StandardizedPair, sided: Sided, cfg: &OracleConfig) -> Result<McEstimate> {
    if cfg.mc_draws < 1 {
        return Err(Error::Invalid("mc_draws must be at least 1".into()));
    }
    let g = sp.group_sizes();
    let (n, m1) = (g.n(), g.m1());
    let threshold = observed_case_sum(sp);
    let t_abs = threshold.abs();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut count: u64 = 1; // the observed allocation
    for _ in 1..cfg.mc_draws {
        // partial Fisher-Yates: the first m1 entries are the case set
        for j in 0..m1 {
            let k = rng.random_range(j..n);
            indices.swap(j, k);
        }
        let s: f64 = indices[..m1].iter().map(|&i| sp.y0()[i]).sum();
        let hit = match sided {
            Sided::One => s >= threshold,
            Sided::Two => s.abs() >= t_abs,
        };
        if hit {
            count += 1;
        }
    }
    let m = cfg.mc_draws as f64;
    let estimate = count as f64 / m;
    Ok(McEstimate {
        estimate,
        std_error: (estimate * (1.0 - estimate) / m).sqrt(),
    })
}

fn standard_normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = crate::numeric::norm(v);
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Uniform points on S^d (unit vectors in R^{d+1}): normalized standard
/// normal draws.
pub fn sample_uniform_sphere(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let mut v = standard_normal_vec(&mut rng, d + 1);
            if normalize(&mut v) > 1e-12 {
                return v;
            }
        })
        .collect()
}

/// Uniform points on the centered sphere {y ∈ R^n : Σy = 0, ‖y‖ = 1},
/// the ambient home of reference distribution 1 for permutation geometry
/// (dimension n-2, no explicit rotation needed).
pub fn sample_centered_sphere(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let mut v = standard_normal_vec(&mut rng, n);
            let mean = v.iter().sum::<f64>() / n as f64;
            for x in v.iter_mut() {
                *x -= mean;
            }
            if normalize(&mut v) > 1e-12 {
                return v;
            }
        })
        .collect()
}

/// Uniform points on the subsphere {y : ⟨y, xc⟩ = ρ̃, ‖y‖ = 1}; when xc
/// sums to zero (a standardized label vector) the samples additionally obey
/// Σy = 0, staying inside the permutation geometry.
///
/// ρ̃ = ±1 is degenerate and returns copies of ±xc.
pub fn sample_subsphere(
    xc: &[f64],
    rho_tilde: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let n = xc.len();
    if n < 3 {
        return Err(Error::Invalid("subsphere sampling needs n >= 3".into()));
    }
    let norm_xc = crate::numeric::norm(xc);
    if (norm_xc - 1.0).abs() > 1e-8 {
        return Err(Error::Invalid(format!(
            "conditioning point must be a unit vector (norm = {norm_xc})"
        )));
    }
    let rho_tilde = crate::numeric::clamp_unit(rho_tilde, crate::sphere::UNIT_MARGIN)
        .ok_or_else(|| Error::Domain(format!("rho_tilde {rho_tilde} outside [-1, 1]")))?;
    if rho_tilde.abs() == 1.0 {
        let point: Vec<f64> = xc.iter().map(|&x| rho_tilde * x).collect();
        return Ok(vec![point; count]);
    }

    let sum_zero = xc.iter().sum::<f64>().abs() <= 1e-9 * (n as f64).sqrt();
    // orthonormal pair spanning {1_n, xc}; xc is re-orthogonalized against
    // the ones direction to absorb rounding in its construction
    let ones_unit: Vec<f64> = vec![1.0 / (n as f64).sqrt(); n];
    let mut xc_orth = xc.to_vec();
    if sum_zero {
        let c = dot(&xc_orth, &ones_unit);
        for (x, o) in xc_orth.iter_mut().zip(&ones_unit) {
            *x -= c * o;
        }
    }
    normalize(&mut xc_orth);

    let radial = ((1.0 - rho_tilde) * (1.0 + rho_tilde)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut v = standard_normal_vec(&mut rng, n);
        if sum_zero {
            let c = dot(&v, &ones_unit);
            for (x, o) in v.iter_mut().zip(&ones_unit) {
                *x -= c * o;
            }
        }
        let c = dot(&v, &xc_orth);
        for (x, b) in v.iter_mut().zip(&xc_orth) {
            *x -= c * b;
        }
        if normalize(&mut v) <= 1e-12 {
            continue;
        }
        let y: Vec<f64> = xc
            .iter()
            .zip(&v)
            .map(|(&x, &w)| rho_tilde * x + radial * w)
            .collect();
        out.push(y);
    }
    Ok(out)
}
