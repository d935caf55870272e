//! Formula-vs-oracle check suites: every closed form in the crate compared
//! against Monte Carlo or exact enumeration, with standard-error margins.
//!
//! These back the `validate` CLI command and the acceptance tests.

use serde::{Deserialize, Serialize};

use crate::combinatorics::{swap_distance, GroupSizes};
use crate::error::Result;
use crate::estimators::{
    p1_estimate, second_moment_ref2, standardized_labels, tilde_p_c, var_ref1, Sided,
    StandardizedPair,
};
use crate::inclusion::{
    double_inclusion, single_inclusion, two_sided_double, two_sided_single, EqualityClass,
    SubsphereContext,
};
use crate::numeric::dot;
use crate::oracle::{
    exact_p_at_center, exact_p_at_center_conditioned, sample_centered_sphere, sample_subsphere,
    sample_uniform_sphere, OracleConfig,
};
use crate::quad::QuadratureConfig;
use crate::sphere::{
    cap_intersection_volume, projected_weight_integral, two_sided_cap_intersection,
};

/// Agreement threshold: |formula - oracle| within this many standard errors.
pub const SE_MARGIN: f64 = 4.0;

/// One formula-vs-oracle comparison.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub formula: f64,
    pub oracle: f64,
    pub std_error: f64,
    /// |formula - oracle| / std_error.
    pub margin_se: f64,
    pub pass: bool,
}

impl CheckResult {
    fn compare(name: String, formula: f64, oracle: f64, std_error: f64) -> Self {
        let margin_se = (formula - oracle).abs() / std_error;
        Self {
            name,
            formula,
            oracle,
            std_error,
            margin_se,
            pass: margin_se <= SE_MARGIN,
        }
    }
}

/// Binomial standard error with a granularity floor: a proportion observed
/// as exactly 0 or 1 still gets a 1/draws allowance.
fn proportion_se(p: f64, draws: usize) -> f64 {
    ((p * (1.0 - p) / draws as f64).sqrt()).max(1.0 / draws as f64)
}

/// Two-cap intersection volumes against uniform-sphere Monte Carlo over a
/// (dims × u × t) grid. One site per grid cell, one-sided and two-sided.
pub fn v2_grid_checks(
    dims: &[usize],
    us: &[f64],
    ts: &[f64],
    draws: usize,
    seed: u64,
    q: &QuadratureConfig,
) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (i, &d) in dims.iter().enumerate() {
        let samples = sample_uniform_sphere(d, draws, seed.wrapping_add(i as u64));
        for &u in us {
            // centers e1 and u·e1 + sqrt(1-u²)·e2
            let su = ((1.0 - u) * (1.0 + u)).max(0.0).sqrt();
            for &t in ts {
                let mut hits_one = 0usize;
                let mut hits_two = 0usize;
                for z in &samples {
                    let a = z[0];
                    let b = u * z[0] + su * z[1];
                    if a >= t && b >= t {
                        hits_one += 1;
                    }
                    if a.abs() >= t.abs() && b.abs() >= t.abs() {
                        hits_two += 1;
                    }
                }
                let mc_one = hits_one as f64 / draws as f64;
                let mc_two = hits_two as f64 / draws as f64;
                let formula_one = cap_intersection_volume(u, t, d, q)?;
                let formula_two = two_sided_cap_intersection(u, t, d, q)?;
                out.push(CheckResult::compare(
                    format!("V2(u={u}, t={t}, d={d})"),
                    formula_one,
                    mc_one,
                    proportion_se(mc_one, draws),
                ));
                out.push(CheckResult::compare(
                    format!("V2~(u={u}, t={t}, d={d})"),
                    formula_two,
                    mc_two,
                    proportion_se(mc_two, draws),
                ));
            }
        }
    }
    Ok(out)
}

/// The latitude density must integrate to one; deterministic tolerance
/// expressed as a tiny pseudo-standard-error so corrupted quadrature
/// settings show up as failed checks.
pub fn density_normalization_checks(
    dims: &[usize],
    q: &QuadratureConfig,
) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for &d in dims {
        let total = projected_weight_integral(d, -1.0, |_| 1.0, q, "density normalization")?;
        out.push(CheckResult::compare(
            format!("latitude density normalization d={d}"),
            total,
            1.0,
            0.25e-8, // pass iff |total - 1| <= 1e-8
        ));
    }
    Ok(out)
}

/// Build label masks realizing the swap-distance triple (r1, r2, r3) from
/// the canonical center (cases first). Panics in debug builds if the
/// construction misses the target distances.
#[allow(clippy::needless_range_loop)]
pub fn masks_at_distances(
    g: &GroupSizes,
    r1: usize,
    r2: usize,
    r3: usize,
) -> Option<(Vec<bool>, Vec<bool>, Vec<bool>)> {
    let (m0, m1, n) = (g.m0(), g.m1(), g.n());
    if !g.r3_range(r1, r2).contains(&r3) {
        return None;
    }
    // overlap split: a swaps shared on the case side, b on the control side
    let need = (r1 + r2).checked_sub(r3)?;
    let r_min = r1.min(r2);
    let mut a = need.min(r_min);
    loop {
        let b = need - a;
        if b <= r_min && r2 - a <= m1 - r1 && r2 - b <= m0 - r1 {
            let center: Vec<bool> = (0..n).map(|i| i < m1).collect();
            let mut x1 = center.clone();
            for i in 0..r1 {
                x1[i] = false; // case positions flipped out
                x1[m1 + i] = true; // control positions flipped in
            }
            let mut x2 = center.clone();
            for i in 0..a {
                x2[i] = false; // shared case-side swaps
            }
            for i in 0..(r2 - a) {
                x2[r1 + i] = false; // fresh case-side swaps
            }
            for i in 0..b {
                x2[m1 + i] = true; // shared control-side swaps
            }
            for i in 0..(r2 - b) {
                x2[m1 + r1 + i] = true; // fresh control-side swaps
            }
            debug_assert_eq!(swap_distance(&center, &x1).unwrap(), r1);
            debug_assert_eq!(swap_distance(&center, &x2).unwrap(), r2);
            debug_assert_eq!(swap_distance(&x1, &x2).unwrap(), r3);
            return Some((center, x1, x2));
        }
        if a == 0 {
            return None;
        }
        a -= 1;
    }
}

/// Single and double inclusion probabilities (one- and two-sided) against
/// subsphere Monte Carlo, at swap-realizable inner products.
pub fn inclusion_checks(
    m0: usize,
    m1: usize,
    cases: &[(usize, usize, usize, f64, f64)], // (r1, r2, r3, rho_tilde, rho_hat)
    draws: usize,
    seed: u64,
    q: &QuadratureConfig,
) -> Result<Vec<CheckResult>> {
    let g = GroupSizes::new(m0, m1)?;
    let d = g.dim();
    let mut out = Vec::new();
    for (ci, &(r1, r2, r3, rho_tilde, rho_hat)) in cases.iter().enumerate() {
        let Some((center, mask1, mask2)) = masks_at_distances(&g, r1, r2, r3) else {
            continue;
        };
        let xc = standardized_labels(&center, m0, m1);
        let x1 = standardized_labels(&mask1, m0, m1);
        let x2 = standardized_labels(&mask2, m0, m1);
        let samples = sample_subsphere(&xc, rho_tilde, draws, seed.wrapping_add(ci as u64))?;

        let mut hit_p1 = 0usize;
        let mut hit_p1_two = 0usize;
        let mut hit_p2 = 0usize;
        let mut hit_p2_two = 0usize;
        for y in &samples {
            let a = dot(y, &x1);
            let b = dot(y, &x2);
            if a >= rho_hat {
                hit_p1 += 1;
                if b >= rho_hat {
                    hit_p2 += 1;
                }
            }
            if a.abs() >= rho_hat.abs() {
                hit_p1_two += 1;
                if b.abs() >= rho_hat.abs() {
                    hit_p2_two += 1;
                }
            }
        }
        let ctx = SubsphereContext::new(d, rho_tilde, rho_hat)?;
        let u1 = g.inner_product_at_swap(r1)?;
        let u2 = g.inner_product_at_swap(r2)?;
        let u3 = g.inner_product_at_swap(r3)?;
        let tag = format!("m0={m0} m1={m1} r=({r1},{r2},{r3}) rt={rho_tilde} rh={rho_hat}");

        let mc = hit_p1 as f64 / draws as f64;
        out.push(CheckResult::compare(
            format!("P1 {tag}"),
            single_inclusion(u1, &ctx)?,
            mc,
            proportion_se(mc, draws),
        ));
        let mc = hit_p1_two as f64 / draws as f64;
        out.push(CheckResult::compare(
            format!("P1~ {tag}"),
            two_sided_single(u1, &ctx)?,
            mc,
            proportion_se(mc, draws),
        ));
        let mc = hit_p2 as f64 / draws as f64;
        out.push(CheckResult::compare(
            format!("P2 {tag}"),
            double_inclusion(u1, u2, u3, EqualityClass::Distinct, &ctx, q)?,
            mc,
            proportion_se(mc, draws),
        ));
        let mc = hit_p2_two as f64 / draws as f64;
        out.push(CheckResult::compare(
            format!("P2~ {tag}"),
            two_sided_double(u1, u2, u3, EqualityClass::Distinct, &ctx, q)?,
            mc,
            proportion_se(mc, draws),
        ));
    }
    Ok(out)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    // relative floor: degenerate samples (every draw identical, as in fully
    // separated fixtures) would otherwise scale rounding noise into huge
    // margins
    let se = (var / n)
        .sqrt()
        .max(1e-12 * mean.abs())
        .max(f64::MIN_POSITIVE);
    (mean, se)
}

/// First and second moments of the estimators against full simulation
/// oracles (exact orbit p-values at sampled cap centers), for one
/// standardized fixture.
pub fn moment_checks(
    sp: &StandardizedPair,
    tag: &str,
    draws: usize,
    seed: u64,
    q: &QuadratureConfig,
) -> Result<Vec<CheckResult>> {
    let g = sp.group_sizes();
    let rho_hat = sp.rho_hat();
    let oracle_cfg = OracleConfig::default();
    let mut out = Vec::new();

    for (si, sided) in [Sided::One, Sided::Two].into_iter().enumerate() {
        // reference distribution 2: centers on the conditioned subsphere
        let samples =
            sample_subsphere(sp.x0(), rho_hat, draws, seed.wrapping_add(1000 + si as u64))?;
        let ps: Vec<f64> = samples
            .iter()
            .map(|y| {
                exact_p_at_center_conditioned(
                    y,
                    g,
                    rho_hat,
                    sided,
                    sp.labels(),
                    rho_hat,
                    &oracle_cfg,
                )
            })
            .collect::<Result<_>>()?;
        let (mc_mean, se_mean) = mean_and_se(&ps);
        out.push(CheckResult::compare(
            format!("tilde_p_c {tag} {sided}"),
            tilde_p_c(g, rho_hat, rho_hat, sided)?,
            mc_mean,
            se_mean,
        ));
        let sq: Vec<f64> = ps.iter().map(|p| p * p).collect();
        let (mc_second, se_second) = mean_and_se(&sq);
        out.push(CheckResult::compare(
            format!("second_moment_ref2 {tag} {sided}"),
            second_moment_ref2(g, rho_hat, rho_hat, sided, q)?,
            mc_second,
            se_second,
        ));

        // reference distribution 1: centers uniform on the centered sphere;
        // compare the centered second moment about the known mean p̂1
        let samples = sample_centered_sphere(g.n(), draws, seed.wrapping_add(2000 + si as u64));
        let p1 = p1_estimate(g.dim(), rho_hat, sided)?;
        let devs: Vec<f64> = samples
            .iter()
            .map(|y| {
                exact_p_at_center(y, g, rho_hat, sided, &oracle_cfg).map(|p| {
                    let d = p - p1;
                    d * d
                })
            })
            .collect::<Result<_>>()?;
        let (mc_var, se_var) = mean_and_se(&devs);
        out.push(CheckResult::compare(
            format!("var_ref1 {tag} {sided}"),
            var_ref1(g, rho_hat, sided, q)?,
            mc_var,
            se_var,
        ));
    }
    Ok(out)
}

/// The standard battery: V2 grid, density normalization, inclusion
/// probabilities, and moment oracles for one (m0, m1) configuration.
pub fn standard_battery(
    m0: usize,
    m1: usize,
    draws: usize,
    seed: u64,
    grid_full: bool,
    q: &QuadratureConfig,
) -> Result<Vec<CheckResult>> {
    let mut results = Vec::new();
    let (dims, us, ts): (&[usize], &[f64], &[f64]) = if grid_full {
        (&[2, 3, 5], &[-0.9, 0.0, 0.5, 0.9], &[-0.5, 0.0, 0.3, 0.7])
    } else {
        (&[2, 5], &[-0.9, 0.5], &[0.0, 0.3])
    };
    results.extend(v2_grid_checks(dims, us, ts, draws, seed, q)?);
    results.extend(density_normalization_checks(&[2, 6, 27, 138], q)?);

    let g = GroupSizes::new(m0, m1)?;
    let m_bar = g.m_bar();
    let mut cases: Vec<(usize, usize, usize, f64, f64)> = vec![(1, 1, 2, 0.3, 0.4)];
    if m_bar >= 3 {
        cases.push((1, 2, 3, 0.4, 0.3));
        cases.push((2, 3, 3, 0.2, 0.45));
        cases.push((3, 3, 2, 0.0, 0.35));
    }
    results.extend(inclusion_checks(m0, m1, &cases, draws, seed ^ 0xA5, q)?);

    // three deterministic response fixtures per size
    for fixture in 0..3u64 {
        let sp = synthetic_fixture(m0, m1, seed ^ (fixture + 1));
        results.extend(moment_checks(
            &sp,
            &format!("m0={m0} m1={m1} fixture={fixture}"),
            draws.min(100_000),
            seed ^ (0xF0 + fixture),
            q,
        )?);
    }
    Ok(results)
}

/// Deterministic synthetic response with a moderate group shift.
pub fn synthetic_fixture(m0: usize, m1: usize, seed: u64) -> StandardizedPair {
    let n = m0 + m1;
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let response: Vec<f64> = (0..n)
        .map(|i| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 100_000) as f64 / 100_000.0 + if i >= m0 { 0.6 } else { 0.0 }
        })
        .collect();
    let labels: Vec<bool> = (0..n).map(|i| i >= m0).collect();
    StandardizedPair::new(&labels, &response).expect("fixture is nondegenerate")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_reach_requested_distances() {
        let g = GroupSizes::new(5, 7).unwrap();
        for r1 in 1..=5usize {
            for r2 in 1..=5usize {
                for r3 in g.r3_range(r1, r2) {
                    if let Some((c, a, b)) = masks_at_distances(&g, r1, r2, r3) {
                        assert_eq!(swap_distance(&c, &a).unwrap(), r1);
                        assert_eq!(swap_distance(&c, &b).unwrap(), r2);
                        assert_eq!(swap_distance(&a, &b).unwrap(), r3);
                    }
                }
            }
        }
    }

    #[test]
    fn small_battery_passes() {
        let q = QuadratureConfig::default();
        let results = standard_battery(3, 3, 20_000, 7, false, &q).unwrap();
        assert!(!results.is_empty());
        let failures: Vec<_> = results.iter().filter(|r| !r.pass).collect();
        assert!(
            failures.is_empty(),
            "failed checks: {:#?}",
            failures
                .iter()
                .map(|f| format!("{} margin {:.2} se", f.name, f.margin_se))
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn p3_conditioning_moments_match_oracle() {
        // conditioning on the closest orbit point (ρ̃ != ρ̂, x_c != x_0)
        // must reproduce subsphere Monte Carlo moments just as the
        // data-label conditioning does
        use crate::estimators::{choose_conditioning_point, EstimatorKind};
        use crate::oracle::OracleConfig;

        let q = QuadratureConfig::default();
        let sp = synthetic_fixture(4, 4, 9);
        let g = sp.group_sizes();
        let cfg = OracleConfig::default();
        for (si, sided) in [Sided::One, Sided::Two].into_iter().enumerate() {
            let cp = choose_conditioning_point(&sp, EstimatorKind::P3, sided).unwrap();
            assert!(cp.swap_from_data > 0, "fixture should not be pre-sorted");
            let mask: Vec<bool> = cp.xc.iter().map(|&v| v > 0.0).collect();
            let samples =
                sample_subsphere(&cp.xc, cp.rho_tilde, 40_000, 77 + si as u64).unwrap();
            let ps: Vec<f64> = samples
                .iter()
                .map(|y| {
                    exact_p_at_center_conditioned(
                        y,
                        g,
                        sp.rho_hat(),
                        sided,
                        &mask,
                        cp.rho_tilde,
                        &cfg,
                    )
                    .unwrap()
                })
                .collect();
            let (mc_mean, se_mean) = mean_and_se(&ps);
            let formula_mean = tilde_p_c(g, cp.rho_tilde, sp.rho_hat(), sided).unwrap();
            assert!(
                (formula_mean - mc_mean).abs() <= SE_MARGIN * se_mean,
                "{sided}: mean {formula_mean} vs {mc_mean} (se {se_mean:.2e})"
            );
            let sq: Vec<f64> = ps.iter().map(|p| p * p).collect();
            let (mc_second, se_second) = mean_and_se(&sq);
            let formula_second =
                second_moment_ref2(g, cp.rho_tilde, sp.rho_hat(), sided, &q).unwrap();
            assert!(
                (formula_second - mc_second).abs() <= SE_MARGIN * se_second,
                "{sided}: second {formula_second} vs {mc_second} (se {se_second:.2e})"
            );
        }
    }

    #[test]
    fn smallest_geometry_moments_match_oracle() {
        // m0 = m1 = 2 (d = 2): the double inclusion integrates a cap on
        // the two-point sphere S^0
        let q = QuadratureConfig::default();
        let labels = [false, false, true, true];
        let response = [0.4, -0.9, 1.3, 0.8];
        let sp = StandardizedPair::new(&labels, &response).unwrap();
        let results = moment_checks(&sp, "m0=2 m1=2", 40_000, 31, &q).unwrap();
        let failures: Vec<_> = results.iter().filter(|r| !r.pass).collect();
        assert!(failures.is_empty(), "{failures:#?}");
    }

    #[test]
    fn corrupted_tolerance_is_detected() {
        // a useless relative tolerance collapses the adaptive quadrature to
        // one Kronrod pass, which cannot represent the spiked latitude
        // density at high dimension
        let q = QuadratureConfig {
            rel_tol: 1.0,
            abs_tol: 1.0,
            max_subdivisions: 256,
        };
        let results = density_normalization_checks(&[2, 6, 27, 138], &q).unwrap();
        assert!(results.iter().any(|r| !r.pass));
    }
}
