//! The three p-value approximations and their exact moments.
//!
//! * `p1`: plain cap volume at the observed correlation, with its variance
//!   over uniformly random cap centers.
//! * `p2`: mean of the orbit cap fraction over centers conditioned on the
//!   observed correlation with the data labels; its second moment combines
//!   the pair census with double inclusion probabilities.
//! * `p3`: as `p2`, conditioning instead on the orbit point closest to the
//!   response.
//!
//! Everything downstream of the orbit counts runs in linear space on terms
//! of the form exp(ln count - ln scale) · probability, accumulated with
//! compensated summation, so estimates remain meaningful down to the
//! granularity limit 1/N even when N ~ 1e18.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::combinatorics::{accumulate_scaled, swap_distance, GroupSizes, PairClass};
use crate::error::{Error, Result};
use crate::inclusion::{
    double_inclusion, single_inclusion, two_sided_double, two_sided_single, EqualityClass,
    SubsphereContext,
};
use crate::numeric::{dot, KahanSum};
use crate::quad::QuadratureConfig;
use crate::sphere::{cap_intersection_volume, cap_volume, two_sided_cap_intersection};

/// One- or two-sided testing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sided {
    One,
    Two,
}

impl std::fmt::Display for Sided {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sided::One => "one",
            Sided::Two => "two",
        })
    }
}

impl std::str::FromStr for Sided {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(Sided::One),
            "two" => Ok(Sided::Two),
            other => Err(Error::Invalid(format!("unknown sidedness '{other}'"))),
        }
    }
}

/// Which estimator a report refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    P1,
    P2,
    P3,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::P1 => "p1",
            EstimatorKind::P2 => "p2",
            EstimatorKind::P3 => "p3",
        })
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p1" => Ok(EstimatorKind::P1),
            "p2" => Ok(EstimatorKind::P2),
            "p3" => Ok(EstimatorKind::P3),
            other => Err(Error::Invalid(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Centered, unit-normalized label and response vectors.
///
/// The label vector has exactly m0 components equal to -sqrt(m1/(n m0)) and
/// m1 equal to +sqrt(m0/(n m1)); both vectors sum to zero, so they live on
/// the (n-2)-sphere inside the sum-zero hyperplane.
#[derive(Clone, Debug)]
pub struct StandardizedPair {
    x0: Vec<f64>,
    y0: Vec<f64>,
    labels: Vec<bool>,
    g: GroupSizes,
    rho_hat: f64,
}

impl StandardizedPair {
    pub fn new(labels: &[bool], response: &[f64]) -> Result<Self> {
        if labels.len() != response.len() {
            return Err(Error::Invalid(format!(
                "labels ({}) and response ({}) lengths differ",
                labels.len(),
                response.len()
            )));
        }
        let n = labels.len();
        let m1 = labels.iter().filter(|&&b| b).count();
        let m0 = n - m1;
        if m0 == 0 || m1 == 0 {
            return Err(Error::Degenerate(
                "both label classes must be present".into(),
            ));
        }
        let g = GroupSizes::new(m0, m1)?;

        let mean = response.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = response.iter().map(|v| v - mean).collect();
        let scale = crate::numeric::norm(&centered);
        let spread = response
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
            .max(1.0);
        if scale <= 1e-12 * spread {
            return Err(Error::Degenerate(
                "response has zero variance; correlation is undefined".into(),
            ));
        }
        let y0: Vec<f64> = centered.iter().map(|v| v / scale).collect();
        let x0 = standardized_labels(labels, m0, m1);
        let rho_hat = dot(&x0, &y0);

        debug_assert!((crate::numeric::norm(&x0) - 1.0).abs() < 1e-10);
        debug_assert!(x0.iter().sum::<f64>().abs() < 1e-10);
        debug_assert!(y0.iter().sum::<f64>().abs() < 1e-10);

        Ok(Self {
            x0,
            y0,
            labels: labels.to_vec(),
            g,
            rho_hat,
        })
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn group_sizes(&self) -> &GroupSizes {
        &self.g
    }

    pub fn rho_hat(&self) -> f64 {
        self.rho_hat
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }
}

/// The ± values of a standardized binary label vector.
pub(crate) fn label_values(m0: usize, m1: usize) -> (f64, f64) {
    let n = (m0 + m1) as f64;
    let positive = (m0 as f64 / (n * m1 as f64)).sqrt();
    let negative = -(m1 as f64 / (n * m0 as f64)).sqrt();
    (positive, negative)
}

pub(crate) fn standardized_labels(labels: &[bool], m0: usize, m1: usize) -> Vec<f64> {
    let (positive, negative) = label_values(m0, m1);
    labels
        .iter()
        .map(|&b| if b { positive } else { negative })
        .collect()
}

/// A point estimate with its exact second moment under the matching
/// reference distribution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentReport {
    pub estimator: EstimatorKind,
    pub sided: Sided,
    pub estimate: f64,
    pub second_moment: f64,
    pub variance: f64,
    pub rmse: f64,
    /// rmse / estimate; infinite when the estimate underflows to zero.
    pub cv: f64,
    pub log10_estimate: f64,
    /// log10(1/N); the smallest attainable permutation p-value, log scale.
    pub log10_granularity: f64,
    /// Set when second_moment - estimate² fell below the roundoff allowance
    /// and was clamped to zero.
    pub variance_clamped: bool,
}

/// The conditioning point for `p2`/`p3`: the vector, its correlation with
/// the response, and its swap distance from the data labels.
#[derive(Clone, Debug)]
pub struct ConditioningPoint {
    pub xc: Vec<f64>,
    pub rho_tilde: f64,
    pub swap_from_data: usize,
}

/// Cap-volume point estimate p̂1.
pub fn p1_estimate(d: usize, rho_hat: f64, sided: Sided) -> Result<f64> {
    match sided {
        Sided::One => cap_volume(d, rho_hat),
        Sided::Two => Ok(2.0 * cap_volume(d, rho_hat.abs())?),
    }
}

/// Variance of the orbit cap fraction p(y, t) over uniformly random cap
/// centers: (1/N) Σ_r C(m0,r) C(m1,r) V2(u(r); t, d) - p̂1(t)².
pub fn var_ref1(g: &GroupSizes, t: f64, sided: Sided, q: &QuadratureConfig) -> Result<f64> {
    let d = g.dim();
    if t <= -1.0 {
        return Ok(0.0); // every cap is the whole sphere, p ≡ 1
    }
    let ln_n = g.log_orbit_size();
    let mut acc = KahanSum::new();
    for r in 0..=g.m_bar() {
        let u = g.inner_product_at_swap(r)?;
        let v2 = match sided {
            Sided::One => cap_intersection_volume(u, t, d, q),
            Sided::Two => two_sided_cap_intersection(u, t, d, q),
        }
        .map_err(|e| with_cell_context(e, &format!("var_ref1 at r = {r}")))?;
        accumulate_scaled(&mut acc, g.log_count_at_distance(r)?, ln_n, v2);
    }
    let mean = p1_estimate(d, t, sided)?;
    Ok((acc.value() - mean * mean).max(0.0))
}

/// Conditional mean of the orbit cap fraction given ⟨y, x_c⟩ = ρ̃:
/// (1/N) Σ_r C(m0,r) C(m1,r) P1(u(r), ρ̃, ρ̂). O(m̄) special-function calls.
pub fn tilde_p_c(g: &GroupSizes, rho_tilde: f64, rho_hat: f64, sided: Sided) -> Result<f64> {
    let ctx = SubsphereContext::new(g.dim(), rho_tilde, rho_hat)?;
    let ln_n = g.log_orbit_size();
    let mut acc = KahanSum::new();
    for r in 0..=g.m_bar() {
        let u = g.inner_product_at_swap(r)?;
        let p1 = match sided {
            Sided::One => single_inclusion(u, &ctx)?,
            Sided::Two => two_sided_single(u, &ctx)?,
        };
        accumulate_scaled(&mut acc, g.log_count_at_distance(r)?, ln_n, p1);
    }
    Ok(acc.value())
}

/// Conditional second moment of the orbit cap fraction given ⟨y, x_c⟩ = ρ̃,
/// via the four-way pair census. The double inclusion for distinct triples
/// is memoized on (r1, r2, r3) — with (u1, u2) symmetry — so the O(m̄³)
/// quadratures dominate the cost.
pub fn second_moment_ref2(
    g: &GroupSizes,
    rho_tilde: f64,
    rho_hat: f64,
    sided: Sided,
    q: &QuadratureConfig,
) -> Result<f64> {
    let ctx = SubsphereContext::new(g.dim(), rho_tilde, rho_hat)?;
    let ln_n2 = 2.0 * g.log_orbit_size();
    let u = |r: usize| g.inner_product_at_swap(r);

    let p2_dispatch = |u1: f64, u2: f64, u3: f64, class: EqualityClass| -> Result<f64> {
        match sided {
            Sided::One => double_inclusion(u1, u2, u3, class, &ctx, q),
            Sided::Two => two_sided_double(u1, u2, u3, class, &ctx, q),
        }
    };

    let mut memo: HashMap<(usize, usize, usize), f64> = HashMap::new();
    let mut acc = KahanSum::new();
    for (class, ln_count) in g.pair_census() {
        let p = match class {
            PairClass::BothCenter => p2_dispatch(1.0, 1.0, 1.0, EqualityClass::AllCoincide)?,
            PairClass::OneCenter { r } => {
                let ur = u(r)?;
                p2_dispatch(1.0, ur, ur, EqualityClass::FirstIsCenter).map_err(|e| {
                    with_cell_context(e, &format!("second moment, center pair r = {r}"))
                })?
            }
            PairClass::Repeated { r } => {
                let ur = u(r)?;
                p2_dispatch(ur, ur, 1.0, EqualityClass::PairCoincides)?
            }
            PairClass::Distinct(t) => {
                let key = (t.r1.min(t.r2), t.r1.max(t.r2), t.r3);
                match memo.get(&key) {
                    Some(&v) => v,
                    None => {
                        let v = p2_dispatch(u(t.r1)?, u(t.r2)?, u(t.r3)?, EqualityClass::Distinct)
                            .map_err(|e| {
                                with_cell_context(
                                    e,
                                    &format!(
                                        "second moment cell (r1, r2, r3) = ({}, {}, {})",
                                        t.r1, t.r2, t.r3
                                    ),
                                )
                            })?;
                        memo.insert(key, v);
                        v
                    }
                }
            }
        };
        accumulate_scaled(&mut acc, ln_count, ln_n2, p);
    }
    Ok(acc.value())
}

fn with_cell_context(e: Error, site: &str) -> Error {
    match e {
        Error::Quadrature {
            context,
            subdivisions,
            error,
        } => Error::Quadrature {
            context: format!("{site}: {context}"),
            subdivisions,
            error,
        },
        other => other,
    }
}

/// Select the conditioning point x_c for the requested estimator.
///
/// `p2` conditions on the data labels themselves. `p3` conditions on the
/// orbit point with the largest inner product with the response (largest
/// absolute inner product for two-sided tests); for a two-valued vector
/// that maximum is attained by placing the positive label value on the m1
/// largest response coordinates, so no orbit enumeration is needed. Ties
/// between equal response coordinates go to the lower index.
pub fn choose_conditioning_point(
    sp: &StandardizedPair,
    estimator: EstimatorKind,
    sided: Sided,
) -> Result<ConditioningPoint> {
    let g = sp.group_sizes();
    match estimator {
        EstimatorKind::P1 => Err(Error::Invalid(
            "p1 uses no conditioning point; request p2 or p3".into(),
        )),
        EstimatorKind::P2 => Ok(ConditioningPoint {
            xc: sp.x0().to_vec(),
            rho_tilde: sp.rho_hat(),
            swap_from_data: 0,
        }),
        EstimatorKind::P3 => {
            let maximizer = extreme_assignment(sp.y0(), g.m1(), true);
            let best = match sided {
                Sided::One => maximizer,
                Sided::Two => {
                    let minimizer = extreme_assignment(sp.y0(), g.m1(), false);
                    let rho_max = assignment_rho(sp.y0(), &maximizer, g);
                    let rho_min = assignment_rho(sp.y0(), &minimizer, g);
                    if rho_min.abs() > rho_max.abs() {
                        minimizer
                    } else {
                        maximizer
                    }
                }
            };
            let xc = standardized_labels(&best, g.m0(), g.m1());
            let rho_tilde = dot(&xc, sp.y0());
            let swap_from_data = swap_distance(&best, sp.labels())?;
            Ok(ConditioningPoint {
                xc,
                rho_tilde,
                swap_from_data,
            })
        }
    }
}

/// Label mask placing the positive group on the m1 largest (or smallest)
/// coordinates of `y`, ties broken by lowest index.
fn extreme_assignment(y: &[f64], m1: usize, largest: bool) -> Vec<bool> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&i, &j| {
        let by_value = if largest {
            y[j].total_cmp(&y[i])
        } else {
            y[i].total_cmp(&y[j])
        };
        by_value.then(i.cmp(&j))
    });
    let mut mask = vec![false; y.len()];
    for &i in order.iter().take(m1) {
        mask[i] = true;
    }
    mask
}

fn assignment_rho(y: &[f64], mask: &[bool], g: &GroupSizes) -> f64 {
    let xc = standardized_labels(mask, g.m0(), g.m1());
    dot(&xc, y)
}

/// RMSE of the plain cap-volume estimate measured against the conditioned
/// reference distribution (ρ̃ = ρ̂): sqrt(E₂p² - 2 p̂1 E₂p + p̂1²).
pub fn p1_rmse_ref2(
    g: &GroupSizes,
    rho_hat: f64,
    sided: Sided,
    q: &QuadratureConfig,
) -> Result<f64> {
    let p1 = p1_estimate(g.dim(), rho_hat, sided)?;
    let mean = tilde_p_c(g, rho_hat, rho_hat, sided)?;
    let second = second_moment_ref2(g, rho_hat, rho_hat, sided, q)?;
    Ok((second - 2.0 * p1 * mean + p1 * p1).max(0.0).sqrt())
}

/// Relative allowance below which a negative variance is treated as
/// cancellation roundoff rather than an inconsistency.
const VARIANCE_ROUNDOFF: f64 = 1e-10;

fn finalize_report(
    estimator: EstimatorKind,
    sided: Sided,
    estimate: f64,
    second_moment: f64,
    g: &GroupSizes,
) -> MomentReport {
    let raw_var = second_moment - estimate * estimate;
    let variance_clamped = raw_var < -VARIANCE_ROUNDOFF * estimate * estimate;
    let variance = raw_var.max(0.0);
    let rmse = variance.sqrt();
    let cv = if estimate > 0.0 {
        rmse / estimate
    } else if rmse == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    MomentReport {
        estimator,
        sided,
        estimate,
        second_moment,
        variance,
        rmse,
        cv,
        log10_estimate: estimate.log10(),
        log10_granularity: -g.log_orbit_size() / std::f64::consts::LN_10,
        variance_clamped,
    }
}

/// Full report for one estimator: point estimate, exact second moment and
/// variance under the estimator's reference distribution, RMSE and CV.
pub fn report(
    sp: &StandardizedPair,
    estimator: EstimatorKind,
    sided: Sided,
    q: &QuadratureConfig,
) -> Result<MomentReport> {
    let g = sp.group_sizes();
    match estimator {
        EstimatorKind::P1 => {
            let estimate = p1_estimate(g.dim(), sp.rho_hat(), sided)?;
            let variance = var_ref1(g, sp.rho_hat(), sided, q)?;
            Ok(finalize_report(
                estimator,
                sided,
                estimate,
                variance + estimate * estimate,
                g,
            ))
        }
        EstimatorKind::P2 | EstimatorKind::P3 => {
            let cp = choose_conditioning_point(sp, estimator, sided)?;
            let estimate = tilde_p_c(g, cp.rho_tilde, sp.rho_hat(), sided)?;
            let second = second_moment_ref2(g, cp.rho_tilde, sp.rho_hat(), sided, q)?;
            Ok(finalize_report(estimator, sided, estimate, second, g))
        }
    }
}

/// Conservative Chebychev p-value from a reference mean and standard
/// deviation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChebychevBound {
    /// μ + λσ + 1/(1+λ²) at the numerically optimal λ.
    pub p_star: f64,
    pub lambda: f64,
    /// μ + (2^{1/3} + 2^{-2/3}) σ^{2/3}, the large-λ closed form.
    pub p_star_closed_form: f64,
}

/// Pr(p ≥ μ + λσ) ≤ 1/(1+λ²) makes p* = μ + λσ + 1/(1+λ²) a conservative
/// p-value; the optimal λ solves 2λ = σ(1+λ²)².
pub fn chebychev_bound(mu: f64, sigma: f64) -> Result<ChebychevBound> {
    if !(mu >= 0.0 && sigma >= 0.0) {
        return Err(Error::Invalid(format!(
            "chebychev_bound needs mu, sigma >= 0 (got {mu}, {sigma})"
        )));
    }
    let closed_form = mu + (2f64.powf(1.0 / 3.0) + 2f64.powf(-2.0 / 3.0)) * sigma.powf(2.0 / 3.0);
    if sigma == 0.0 {
        return Ok(ChebychevBound {
            p_star: mu,
            lambda: f64::INFINITY,
            p_star_closed_form: closed_form,
        });
    }

    // f(λ) = 2λ - σ(1+λ²)² rises from -σ, peaks where f' = 0, then falls;
    // the larger root minimizes p*. Locate the peak, then bisect on
    // [peak, hi].
    let peak = {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while 4.0 * sigma * hi * (1.0 + hi * hi) < 2.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 4.0 * sigma * mid * (1.0 + mid * mid) < 2.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let f = |l: f64| 2.0 * l - sigma * (1.0 + l * l) * (1.0 + l * l);
    if f(peak) <= 0.0 {
        // σ too large for a stationary point: p* is increasing in λ and its
        // infimum μ + 1 is approached as λ -> 0
        return Ok(ChebychevBound {
            p_star: (mu + 1.0).min(1.0),
            lambda: 0.0,
            p_star_closed_form: closed_form,
        });
    }
    let mut lo = peak;
    let mut hi = peak.max(1.0);
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..500 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-14 * hi {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);
    Ok(ChebychevBound {
        p_star: mu + lambda * sigma + 1.0 / (1.0 + lambda * lambda),
        lambda,
        p_star_closed_form: closed_form,
    })
}

/// Standardized deviation of an estimate from a known p-value.
pub fn z_score(p_true: f64, estimate: f64, rmse: f64) -> Result<f64> {
    if rmse > 0.0 {
        Ok((p_true - estimate) / rmse)
    } else if p_true == estimate {
        Ok(0.0)
    } else {
        Err(Error::InfiniteZScore {
            p: p_true,
            estimate,
        })
    }
}

/// One row of the accuracy sweep over the correlation grid: both
/// estimators, their RMSEs under each reference distribution, and the
/// coefficient of variation of p̂2.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub m0: usize,
    pub m1: usize,
    pub rho: f64,
    pub sided: Sided,
    pub p1: f64,
    pub p2: f64,
    pub rmse1_p1: f64,
    pub rmse2_p1: f64,
    pub rmse2_p2: f64,
    pub cv_p2: f64,
    pub log10_p2: f64,
    pub log10_granularity: f64,
}

/// Evaluate every estimator quantity at one (group sizes, ρ) grid point.
/// Data-free: all quantities depend only on the sizes and the correlation.
pub fn sweep_row(g: &GroupSizes, rho: f64, sided: Sided, q: &QuadratureConfig) -> Result<SweepRow> {
    let d = g.dim();
    let p1 = p1_estimate(d, rho, sided)?;
    let p2 = tilde_p_c(g, rho, rho, sided)?;
    let var1 = var_ref1(g, rho, sided, q)?;
    let second = second_moment_ref2(g, rho, rho, sided, q)?;
    let rmse2_p1 = (second - 2.0 * p1 * p2 + p1 * p1).max(0.0).sqrt();
    let rmse2_p2 = (second - p2 * p2).max(0.0).sqrt();
    Ok(SweepRow {
        m0: g.m0(),
        m1: g.m1(),
        rho,
        sided,
        p1,
        p2,
        rmse1_p1: var1.sqrt(),
        rmse2_p1,
        rmse2_p2,
        cv_p2: rmse2_p2 / p2,
        log10_p2: p2.log10(),
        log10_granularity: -g.log_orbit_size() / std::f64::consts::LN_10,
    })
}
