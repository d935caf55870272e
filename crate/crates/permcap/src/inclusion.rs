//! Single and double point inclusion probabilities for a random cap center
//! confined to the subsphere {y : ⟨y, x_c⟩ = ρ̃}.
//!
//! `single_inclusion` is the probability that one fixed orbit point lands in
//! the random cap C(y; ρ̂); `double_inclusion` is the joint probability for
//! two points. Together with the pair census these give the exact first and
//! second moments of the permutation p-value under the conditioned reference
//! distribution.

use crate::error::{Error, Result};
use crate::numeric::clamp_unit;
use crate::quad::QuadratureConfig;
use crate::sphere::{cap_volume_clamped, projected_weight_integral, UNIT_MARGIN};

/// The conditioned geometry: ambient sphere dimension d, the conditioning
/// inner product ρ̃ = ⟨y, x_c⟩, and the cap height ρ̂.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubsphereContext {
    pub d: usize,
    pub rho_tilde: f64,
    pub rho_hat: f64,
}

impl SubsphereContext {
    pub fn new(d: usize, rho_tilde: f64, rho_hat: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::Domain(format!(
                "subsphere geometry requires d >= 2 (got {d})"
            )));
        }
        let rho_tilde = clamp_unit(rho_tilde, UNIT_MARGIN)
            .ok_or_else(|| Error::Domain(format!("rho_tilde {rho_tilde} outside [-1, 1]")))?;
        let rho_hat = clamp_unit(rho_hat, UNIT_MARGIN)
            .ok_or_else(|| Error::Domain(format!("rho_hat {rho_hat} outside [-1, 1]")))?;
        Ok(Self {
            d,
            rho_tilde,
            rho_hat,
        })
    }
}

/// Which coincidences hold among (x_1, x_2, x_c).
///
/// Passed explicitly by the caller, who knows the swap distances exactly;
/// inferring equality from floating-point u-values near ±1 would be fragile.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EqualityClass {
    /// x_1 = x_2 = x_c
    AllCoincide,
    /// x_1 = x_c ≠ x_2
    FirstIsCenter,
    /// x_2 = x_c ≠ x_1
    SecondIsCenter,
    /// x_1 = x_2 ≠ x_c
    PairCoincides,
    /// three distinct points
    Distinct,
}

#[inline]
fn indicator(cond: bool) -> f64 {
    if cond {
        1.0
    } else {
        0.0
    }
}

/// Cap volume on S^m for computed heights, extended to m = 0 (S^0 is the
/// two-point set {±1}, so a cap holds neither, one, or both points).
fn cap_volume_any(m: usize, t: f64) -> f64 {
    if m == 0 {
        if t > 1.0 {
            0.0
        } else if t <= -1.0 {
            1.0
        } else {
            0.5
        }
    } else {
        cap_volume_clamped(m, t)
    }
}

/// P1(u1, ρ̃, ρ̂): probability that a fixed point at inner product u1 from
/// the conditioning point lies in the random cap.
pub fn single_inclusion(u1: f64, ctx: &SubsphereContext) -> Result<f64> {
    let u1 = clamp_unit(u1, UNIT_MARGIN)
        .ok_or_else(|| Error::Domain(format!("u1 = {u1} outside [-1, 1]")))?;
    Ok(single_inclusion_raw(u1, ctx.rho_tilde, ctx.rho_hat, ctx.d))
}

fn single_inclusion_raw(u1: f64, rho_tilde: f64, rho_hat: f64, d: usize) -> f64 {
    if u1.abs() == 1.0 || rho_tilde.abs() == 1.0 {
        return indicator(rho_tilde * u1 >= rho_hat);
    }
    let denom = ((1.0 - rho_tilde) * (1.0 + rho_tilde) * (1.0 - u1) * (1.0 + u1)).sqrt();
    let rho_star = (rho_hat - rho_tilde * u1) / denom;
    cap_volume_any(d - 1, rho_star)
}

/// Two-sided variant P̃1 = P1(u1, ρ̃, |ρ̂|) + P1(-u1, ρ̃, |ρ̂|).
///
/// ρ̂ = 0 short-circuits to 1: the two-sided event |⟨y, x⟩| ≥ 0 is certain,
/// while the expansion would double-count the boundary atom.
pub fn two_sided_single(u1: f64, ctx: &SubsphereContext) -> Result<f64> {
    let u1 = clamp_unit(u1, UNIT_MARGIN)
        .ok_or_else(|| Error::Domain(format!("u1 = {u1} outside [-1, 1]")))?;
    if ctx.rho_hat == 0.0 {
        return Ok(1.0);
    }
    let rho_abs = ctx.rho_hat.abs();
    Ok(single_inclusion_raw(u1, ctx.rho_tilde, rho_abs, ctx.d)
        + single_inclusion_raw(-u1, ctx.rho_tilde, rho_abs, ctx.d))
}

/// P2(u1, u2, u3, ρ̃, ρ̂): joint inclusion probability of two points.
///
/// The u arguments must be consistent with `class`; within the distinct
/// class, u_j = ±1 coincidences are detected by exact comparison (the
/// orbit-derived u(r) values are exact integer ratios).
pub fn double_inclusion(
    u1: f64,
    u2: f64,
    u3: f64,
    class: EqualityClass,
    ctx: &SubsphereContext,
    q: &QuadratureConfig,
) -> Result<f64> {
    let (u1, u2, u3) = check_class(u1, u2, u3, class)?;
    double_inclusion_raw(u1, u2, u3, ctx.rho_tilde, ctx.rho_hat, ctx.d, q)
}

/// Two-sided variant P̃2: the four-term expansion over sign flips of
/// (u1, u2) with ρ̂ replaced by |ρ̂|; ρ̂ = 0 short-circuits to 1.
pub fn two_sided_double(
    u1: f64,
    u2: f64,
    u3: f64,
    class: EqualityClass,
    ctx: &SubsphereContext,
    q: &QuadratureConfig,
) -> Result<f64> {
    let (u1, u2, u3) = check_class(u1, u2, u3, class)?;
    if ctx.rho_hat == 0.0 {
        return Ok(1.0);
    }
    let rho_abs = ctx.rho_hat.abs();
    let rt = ctx.rho_tilde;
    let d = ctx.d;
    let total = double_inclusion_raw(u1, u2, u3, rt, rho_abs, d, q)?
        + double_inclusion_raw(-u1, u2, -u3, rt, rho_abs, d, q)?
        + double_inclusion_raw(u1, -u2, -u3, rt, rho_abs, d, q)?
        + double_inclusion_raw(-u1, -u2, u3, rt, rho_abs, d, q)?;
    Ok(total.clamp(0.0, 1.0))
}

fn check_class(u1: f64, u2: f64, u3: f64, class: EqualityClass) -> Result<(f64, f64, f64)> {
    let u1 = clamp_unit(u1, UNIT_MARGIN)
        .ok_or_else(|| Error::Domain(format!("u1 = {u1} outside [-1, 1]")))?;
    let u2 = clamp_unit(u2, UNIT_MARGIN)
        .ok_or_else(|| Error::Domain(format!("u2 = {u2} outside [-1, 1]")))?;
    let u3 = clamp_unit(u3, UNIT_MARGIN)
        .ok_or_else(|| Error::Domain(format!("u3 = {u3} outside [-1, 1]")))?;
    let consistent = match class {
        EqualityClass::AllCoincide => u1 == 1.0 && u2 == 1.0 && u3 == 1.0,
        EqualityClass::FirstIsCenter => u1 == 1.0 && u2 < 1.0 && u3 == u2,
        EqualityClass::SecondIsCenter => u2 == 1.0 && u1 < 1.0 && u3 == u1,
        EqualityClass::PairCoincides => u3 == 1.0 && u1 < 1.0 && u1 == u2,
        EqualityClass::Distinct => u1 < 1.0 && u2 < 1.0 && u3 < 1.0 && !(u1 == -1.0 && u2 == -1.0),
    };
    if !consistent {
        return Err(Error::Invalid(format!(
            "equality class {class:?} inconsistent with (u1, u2, u3) = ({u1}, {u2}, {u3})"
        )));
    }
    Ok((u1, u2, u3))
}

/// Branch dispatch on exact u-values. Sign-flipped calls from the two-sided
/// expansion land here with ±x_j in place of x_j, so coincidences are read
/// off the (exact) u-values rather than the caller's class.
fn double_inclusion_raw(
    u1: f64,
    u2: f64,
    u3: f64,
    rho_tilde: f64,
    rho_hat: f64,
    d: usize,
    q: &QuadratureConfig,
) -> Result<f64> {
    let p1 = |u: f64| single_inclusion_raw(u, rho_tilde, rho_hat, d);

    if u1 == 1.0 && u2 == 1.0 {
        return Ok(indicator(rho_tilde >= rho_hat));
    }
    if u1 == 1.0 {
        return Ok(indicator(rho_tilde >= rho_hat) * p1(u2));
    }
    if u2 == 1.0 {
        return Ok(indicator(rho_tilde >= rho_hat) * p1(u1));
    }
    if u3 == 1.0 {
        // the two points coincide
        debug_assert_eq!(u1, u2);
        return Ok(p1(u1));
    }
    if u1 == -1.0 && u2 == -1.0 {
        // both antipodal to the center forces x_1 = x_2, which u3 == 1
        // already captured
        return Err(Error::Invalid(
            "u1 = u2 = -1 with distinct points is geometrically unreachable".into(),
        ));
    }
    if u1 == -1.0 {
        return Ok(indicator(-rho_tilde >= rho_hat) * p1(u2));
    }
    if u2 == -1.0 {
        return Ok(indicator(-rho_tilde >= rho_hat) * p1(u1));
    }
    if rho_tilde.abs() == 1.0 {
        return Ok(indicator(rho_tilde * u1 >= rho_hat) * indicator(rho_tilde * u2 >= rho_hat));
    }

    // all of u1, u2, rho_tilde interior now
    let rt_sq = (1.0 - rho_tilde) * (1.0 + rho_tilde);
    let rho_1 = (rho_hat - rho_tilde * u1) / (rt_sq * (1.0 - u1) * (1.0 + u1)).sqrt();
    let rho_2 = (rho_hat - rho_tilde * u2) / (rt_sq * (1.0 - u2) * (1.0 + u2)).sqrt();
    let u3_star = (u3 - u1 * u2) / ((1.0 - u1) * (1.0 + u1) * (1.0 - u2) * (1.0 + u2)).sqrt();
    let u3_star = clamp_unit(u3_star, UNIT_MARGIN).ok_or_else(|| {
        Error::Domain(format!(
            "residual inner product u3* = {u3_star} outside [-1, 1]; \
             (u1, u2, u3) = ({u1}, {u2}, {u3}) is not a realizable configuration"
        ))
    })?;

    // near-degenerate residual direction: the inner cap condition becomes a
    // half-line in t, so the latitude integral collapses to cap volumes
    if u3_star.abs() >= 1.0 - UNIT_MARGIN {
        let value = if u3_star > 0.0 {
            cap_volume_any(d - 1, rho_1.max(rho_2))
        } else if rho_1 > -rho_2 {
            0.0
        } else {
            // mass of the latitude band [rho_1, -rho_2]
            (cap_volume_any(d - 1, rho_1) - cap_volume_any(d - 1, -rho_2)).max(0.0)
        };
        return Ok(value);
    }

    let inv_denom = 1.0 / ((1.0 - u3_star) * (1.0 + u3_star)).sqrt();
    let value = projected_weight_integral(
        d - 1,
        rho_1,
        |t| {
            let ts = (1.0 - t) * (1.0 + t);
            if ts <= 0.0 {
                return 0.0;
            }
            let h = (rho_2 - t * u3_star) / ts.sqrt() * inv_denom;
            cap_volume_any(d - 2, h)
        },
        q,
        &format!("double inclusion P2(u1={u1}, u2={u2}, u3={u3}, rho_tilde={rho_tilde}, rho_hat={rho_hat}, d={d})"),
    )?;
    Ok(value.clamp(0.0, 1.0))
}
