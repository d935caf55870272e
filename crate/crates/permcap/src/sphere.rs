//! Sphere surface volumes, spherical cap volumes, and equal-height two-cap
//! intersection volumes.
//!
//! Conventions: `S^d` is the unit sphere in `R^{d+1}`; `σ_d` is its surface
//! measure normalized to 1; a cap of center y and height t is
//! `{z : ⟨y, z⟩ ≥ t}`. Cap volumes are tail probabilities, so they must stay
//! accurate far into the small-volume regime (1e-30 and below occurs at the
//! sample sizes this crate targets).

use crate::error::{Error, Result};
use crate::numeric::clamp_unit;
use crate::quad::{integrate, QuadratureConfig};
use crate::special;

/// Margin inside which inputs slightly outside [-1, 1] are snapped to the
/// boundary; larger violations are caller bugs and raise a domain error.
pub(crate) const UNIT_MARGIN: f64 = 1e-9;

/// A spherical cap: ambient sphere dimension and height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapSpec {
    pub d: usize,
    pub t: f64,
}

impl CapSpec {
    pub fn new(d: usize, t: f64) -> Result<Self> {
        if d < 1 {
            return Err(Error::Domain("cap requires sphere dimension d >= 1".into()));
        }
        let t = checked_height(t)?;
        Ok(Self { d, t })
    }

    pub fn volume(&self) -> Result<f64> {
        cap_volume(self.d, self.t)
    }

    pub fn log_volume(&self) -> Result<f64> {
        log_cap_volume(self.d, self.t)
    }
}

fn checked_height(t: f64) -> Result<f64> {
    // cap heights admit the looser 1e-12 snap from the volume contract
    if t.abs() <= 1.0 {
        Ok(t)
    } else if t.abs() <= 1.0 + 1e-12 {
        Ok(t.signum())
    } else {
        Err(Error::Domain(format!("cap height {t} outside [-1, 1]")))
    }
}

/// Surface volume ω_d = 2 π^{(d+1)/2} / Γ((d+1)/2) of S^d.
pub fn surface_volume(d: usize) -> f64 {
    log_surface_volume(d).exp()
}

/// ln ω_d, usable for dimensions where ω_d itself under- or overflows.
pub fn log_surface_volume(d: usize) -> f64 {
    let half = (d as f64 + 1.0) / 2.0;
    std::f64::consts::LN_2 + half * std::f64::consts::PI.ln() - special::ln_gamma(half)
}

/// ln(ω_{d-1} / ω_d): the normalizing constant of the latitude density.
fn log_omega_ratio(d: usize) -> f64 {
    debug_assert!(d >= 1);
    log_surface_volume(d - 1) - log_surface_volume(d)
}

/// Normalized volume σ_d(C(·; t)) of a spherical cap of height t on S^d.
///
/// ½ I_{1-t²}(d/2, ½) for t ≥ 0 and the complement for t < 0; the argument
/// 1-t² is formed as (1-t)(1+t) so heights near ±1 lose nothing.
pub fn cap_volume(d: usize, t: f64) -> Result<f64> {
    if d < 1 {
        return Err(Error::Domain(
            "cap_volume requires sphere dimension d >= 1".into(),
        ));
    }
    let t = checked_height(t)?;
    let x = (1.0 - t) * (1.0 + t);
    let xc = t * t;
    let half_tail = 0.5 * special::reg_inc_beta_with_complement(d as f64 / 2.0, 0.5, x, xc)?;
    Ok(if t >= 0.0 { half_tail } else { 1.0 - half_tail })
}

/// ln σ_d(C(·; t)); finite down to far below the f64 underflow threshold.
pub fn log_cap_volume(d: usize, t: f64) -> Result<f64> {
    if d < 1 {
        return Err(Error::Domain(
            "log_cap_volume requires sphere dimension d >= 1".into(),
        ));
    }
    let t = checked_height(t)?;
    let x = (1.0 - t) * (1.0 + t);
    let xc = t * t;
    if t >= 0.0 {
        let ln_i = special::ln_reg_inc_beta_with_complement(d as f64 / 2.0, 0.5, x, xc)?;
        Ok(ln_i - std::f64::consts::LN_2)
    } else {
        // the complement is >= 1/2; no precision concern in linear space
        Ok(cap_volume(d, t)?.ln())
    }
}

/// Cap volume for *computed* heights, which legitimately land outside
/// [-1, 1] when a cap misses (or swallows) the slice under consideration.
pub(crate) fn cap_volume_clamped(d: usize, t: f64) -> f64 {
    if t >= 1.0 {
        0.0
    } else if t <= -1.0 {
        1.0
    } else {
        cap_volume(d, t).expect("height within [-1, 1]")
    }
}

/// ∫_{lo}^{1} (ω_{d-1}/ω_d) (1-s²)^{d/2-1} g(s) ds for d ≥ 1.
///
/// Evaluated after the substitution s = cos θ, which removes the endpoint
/// singularity at d ≤ 3 (for d = 1 the weight itself is singular and the
/// substituted integrand is constant) and flattens the latitude weight
/// that otherwise concentrates near s = 0 for large d.
pub(crate) fn projected_weight_integral<G: Fn(f64) -> f64>(
    d: usize,
    lo: f64,
    g: G,
    q: &QuadratureConfig,
    context: &str,
) -> Result<f64> {
    debug_assert!(d >= 1);
    if lo >= 1.0 {
        return Ok(0.0);
    }
    let lo = lo.max(-1.0);
    let ratio = log_omega_ratio(d).exp();
    let theta_hi = lo.acos();
    let power = (d - 1) as i32;
    integrate(
        |theta| {
            let (sin_t, cos_t) = theta.sin_cos();
            if sin_t <= 0.0 {
                return 0.0;
            }
            ratio * sin_t.powi(power) * g(cos_t)
        },
        0.0,
        theta_hi,
        q,
        context,
    )
}

/// V2(u; t, d): normalized volume of the intersection of two caps of common
/// height t whose centers have inner product u.
pub fn cap_intersection_volume(u: f64, t: f64, d: usize, q: &QuadratureConfig) -> Result<f64> {
    if d < 2 {
        return Err(Error::Domain(
            "cap intersection requires sphere dimension d >= 2".into(),
        ));
    }
    let u = clamp_unit(u, UNIT_MARGIN)
        .ok_or_else(|| Error::Domain(format!("center inner product {u} outside [-1, 1]")))?;
    let t = checked_height(t)?;

    if u == 1.0 {
        return cap_volume(d, t);
    }
    if u == -1.0 {
        // antipodal centers: the intersection is the band |s| < |t| (empty
        // for t >= 0)
        return if t >= 0.0 {
            Ok(0.0)
        } else {
            Ok(1.0 - 2.0 * cap_volume(d, -t)?)
        };
    }
    if t <= -1.0 {
        return Ok(1.0); // both caps are the whole sphere
    }
    if t >= 1.0 {
        return Ok(0.0);
    }

    let inv_denom_u = 1.0 / ((1.0 - u) * (1.0 + u)).sqrt();
    let value = projected_weight_integral(
        d,
        t,
        |s| {
            let ds = (1.0 - s) * (1.0 + s);
            if ds <= 0.0 {
                return 0.0;
            }
            let rho = (t - s * u) / ds.sqrt() * inv_denom_u;
            cap_volume_clamped(d - 1, rho)
        },
        q,
        &format!("cap intersection V2(u={u}, t={t}, d={d})"),
    )?;
    Ok(value.clamp(0.0, 1.0))
}

/// Two-sided analogue of [`cap_intersection_volume`]:
/// the volume where |⟨z, x⟩| ≥ |t| and |⟨z, y⟩| ≥ |t| simultaneously,
/// expanded as 2 V2(u; |t|, d) + 2 V2(-u; |t|, d).
pub fn two_sided_cap_intersection(u: f64, t: f64, d: usize, q: &QuadratureConfig) -> Result<f64> {
    let ta = t.abs();
    let v =
        2.0 * cap_intersection_volume(u, ta, d, q)? + 2.0 * cap_intersection_volume(-u, ta, d, q)?;
    Ok(v.clamp(0.0, 1.0))
}

#[cfg(test)]
#[allow(clippy::excessive_precision)] // frozen oracle digits
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn surface_volumes_low_dimensions() {
        assert!((surface_volume(1) - 2.0 * PI).abs() < 1e-12);
        assert!((surface_volume(2) - 4.0 * PI).abs() < 1e-12);
        // Γ(2) = 1 in the closed form gives ω_3 = 2π²
        assert!((surface_volume(3) - 2.0 * PI * PI).abs() < 1e-11);
        // S^0 is two points
        assert!((surface_volume(0) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn cap_volume_trivial_heights() {
        assert!((cap_volume(5, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(cap_volume(5, 1.0).unwrap(), 0.0);
        assert_eq!(cap_volume(5, -1.0).unwrap(), 1.0);
        // circle: arc length arccos(t)/π
        assert!((cap_volume(1, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        for t in [-0.9f64, -0.4, 0.2, 0.7] {
            let arc = t.acos() / PI;
            assert!((cap_volume(1, t).unwrap() - arc).abs() < 1e-13);
        }
    }

    #[test]
    fn cap_volume_reference_values() {
        // Reference: mpmath betainc, 40 digits.
        let cases = [
            (2usize, 0.3, 0.350_000_000_000_000_006),
            (3, -0.4, 0.747_684_212_265_654_54),
            (10, 0.7, 0.005_628_663_105_468_753_7),
            (27, 0.56, 7.914_768_983_524_519_19e-4),
            (18, 0.95, 7.731_160_473_011_603_46e-11),
            (58, 0.9, 7.002_513_171_498_214_6e-23),
            (138, 0.9, 6.444_883_024_135_487_31e-52),
            (138, 0.99, 1.430_038_991_054_359_28e-119),
            (398, 0.5, 5.441_498_708_077_985_01e-27),
            (27, -0.8, 0.999_999_904_472_908_568),
            (4, 0.25, 0.316_406_25),
            (70, 0.6, 1.272_950_447_366_487_81e-8),
        ];
        for (d, t, expected) in cases {
            let got = cap_volume(d, t).unwrap();
            let rel = ((got - expected) / expected).abs();
            assert!(
                rel < 1e-12,
                "cap_volume({d}, {t}): got {got:e} want {expected:e}"
            );
        }
    }

    #[test]
    fn log_cap_volume_reference_values() {
        // Reference: mpmath log(cap volume).
        let cases = [
            (138usize, 0.99, -273.649_924_355_919_764),
            (138, 0.999, -432.225_858_179_474_785),
            (398, 0.9, -334.293_527_885_340_969),
            (70, 0.9999, -301.150_171_977_852_469),
        ];
        for (d, t, expected) in cases {
            let got = log_cap_volume(d, t).unwrap();
            assert!(
                (got - expected).abs() < 1e-10 * expected.abs(),
                "log_cap_volume({d}, {t}): got {got} want {expected}"
            );
        }
        // agreement with the linear scale where both exist
        for (d, t) in [(10usize, 0.7), (27, -0.8), (70, 0.6)] {
            let lin = cap_volume(d, t).unwrap().ln();
            let log = log_cap_volume(d, t).unwrap();
            assert!((lin - log).abs() < 1e-11 * log.abs().max(1.0));
        }
    }

    #[test]
    fn antipodal_complement_identity() {
        for d in [1usize, 2, 3, 5, 10, 27, 138] {
            for t in [-0.95, -0.5, -0.1, 0.0, 0.3, 0.77, 0.999] {
                let s = cap_volume(d, t).unwrap() + cap_volume(d, -t).unwrap();
                assert!((s - 1.0).abs() < 1e-12, "d={d}, t={t}: {s}");
            }
        }
    }

    #[test]
    fn cap_volume_monotone_in_height() {
        for d in [2usize, 6, 27] {
            let mut prev = f64::INFINITY;
            for i in 0..=40 {
                let t = -1.0 + 2.0 * (i as f64) / 40.0;
                let v = cap_volume(d, t).unwrap();
                assert!(v <= prev + 1e-15, "d={d} t={t}");
                prev = v;
            }
        }
    }

    #[test]
    fn v2_u_one_branch_is_cap_volume() {
        let q = QuadratureConfig::default();
        let v = cap_intersection_volume(1.0, 0.3, 10, &q).unwrap();
        assert!((v - cap_volume(10, 0.3).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn v2_antipodal_branch() {
        let q = QuadratureConfig::default();
        assert_eq!(cap_intersection_volume(-1.0, 0.2, 10, &q).unwrap(), 0.0);
        // for t < 0 the band formula applies
        let v = cap_intersection_volume(-1.0, -0.4, 6, &q).unwrap();
        let band = 1.0 - 2.0 * cap_volume(6, 0.4).unwrap();
        assert!((v - band).abs() < 1e-13);
    }

    #[test]
    fn v2_reference_values() {
        // Reference: mpmath quadrature of the latitude integral (40 digits,
        // split at the height crossings of the inner cap).
        let q = QuadratureConfig::default();
        let cases = [
            (0.5, 0.4, 6usize, 0.060_422_188_724_811_885_4),
            (0.0, 0.0, 5, 0.25),
            (0.3, 0.6, 6, 0.004_821_230_302_936_553_57),
            (-0.5, 0.2, 10, 0.019_646_056_842_290_445_9),
            (0.9, 0.3, 3, 0.246_707_962_478_523_187),
            (0.5, -0.3, 2, 0.491_821_148_603_521_909),
            (0.0, 0.3, 27, 0.002_627_110_450_479_181_3),
            (0.8, 0.7, 10, 0.001_370_665_928_717_403_06),
        ];
        for (u, t, d, expected) in cases {
            let got = cap_intersection_volume(u, t, d, &q).unwrap();
            assert!(
                (got - expected).abs() < 1e-9 * expected.max(1e-3),
                "V2({u},{t},{d}): got {got:e} want {expected:e}"
            );
        }
    }

    #[test]
    fn v2_full_sphere_height() {
        let q = QuadratureConfig::default();
        for u in [-0.9, 0.0, 0.5, 0.9] {
            let v = cap_intersection_volume(u, -1.0, 7, &q).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "u={u}: {v}");
        }
    }

    #[test]
    fn v2_bounded_by_single_cap_and_monotone_in_u() {
        let q = QuadratureConfig::default();
        for d in [2usize, 5, 10] {
            for t in [0.2, 0.5] {
                let cap = cap_volume(d, t).unwrap();
                let mut prev = -1.0;
                for u in [-0.9, -0.5, 0.0, 0.4, 0.8, 0.95] {
                    let v = cap_intersection_volume(u, t, d, &q).unwrap();
                    assert!(v <= cap + 1e-12, "d={d} t={t} u={u}");
                    assert!(v >= prev - 1e-10, "monotonicity d={d} t={t} u={u}");
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn projection_density_normalizes() {
        let q = QuadratureConfig::default();
        for d in [1usize, 2, 3, 6, 27, 138] {
            let total = projected_weight_integral(d, -1.0, |_| 1.0, &q, "norm").unwrap();
            assert!((total - 1.0).abs() < 1e-10, "d={d}: {total}");
        }
    }

    #[test]
    fn two_sided_trivial_cases() {
        let q = QuadratureConfig::default();
        // second term V2(-1; 0.5, 8) vanishes
        let v = two_sided_cap_intersection(1.0, 0.5, 8, &q).unwrap();
        assert!((v - 2.0 * cap_volume(8, 0.5).unwrap()).abs() < 1e-13);
        // |⟨z,x⟩| >= 0 always holds for both centers
        let v = two_sided_cap_intersection(0.0, 0.0, 8, &q).unwrap();
        assert!((v - 1.0).abs() < 1e-11);
    }

    #[test]
    fn height_domain_errors() {
        let q = QuadratureConfig::default();
        assert!(cap_volume(5, 1.1).is_err());
        assert!(cap_intersection_volume(1.5, 0.0, 5, &q).is_err());
        // within snapping distance is fine
        assert!(cap_volume(5, 1.0 + 5e-13).is_ok());
        assert!(cap_intersection_volume(1.0 + 1e-10, 0.3, 5, &q).is_ok());
    }

    proptest! {
        #[test]
        fn antipodal_identity_prop(d in 1usize..200, t in -1.0f64..1.0) {
            let s = cap_volume(d, t).unwrap() + cap_volume(d, -t).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
