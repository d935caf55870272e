//! Fast, closed-form approximations to two-sample permutation p-values for
//! linear statistics, together with their exact means and variances under
//! two geometric reference distributions.
//!
//! The permutation orbit of a standardized binary label vector lives on a
//! sphere; the observed statistic is the inner product of two unit vectors,
//! and the permutation p-value is the fraction of orbit points inside a
//! spherical cap. Replacing the discrete fraction by conditional cap-volume
//! expectations gives three estimators:
//!
//! * `p1` — the plain cap volume;
//! * `p2` — the mean of the cap fraction over centers conditioned on the
//!   observed correlation with the data labels (never below the granularity
//!   limit 1/N);
//! * `p3` — the same conditioned on the closest orbit point to the response.
//!
//! Exact second moments under both reference distributions come from
//! equal-height cap intersection volumes and pair-configuration counts over
//! the orbit, at O(m̄)–O(m̄³) cost instead of the O(n/ε) cost of sampling
//! enough permutations to resolve a p-value of size ε.
//!
//! Module layout:
//!
//! * [`sphere`] — surface/cap volumes and two-cap intersections;
//! * [`combinatorics`] — swap distances, orbit counts, pair census;
//! * [`inclusion`] — single/double point inclusion probabilities;
//! * [`estimators`] — the three estimators, moments, Chebychev bound;
//! * [`oracle`] — exact enumeration, Monte Carlo, sphere samplers;
//! * [`pipeline`] — expression-matrix ingestion and gene-set records;
//! * [`simulation`] — the two-sample simulation harness;
//! * [`validation`] — formula-vs-oracle check suites.

pub mod combinatorics;
pub mod error;
pub mod estimators;
pub mod inclusion;
pub mod numeric;
pub mod oracle;
pub mod pipeline;
pub mod quad;
pub mod simulation;
pub mod special;
pub mod sphere;
pub mod validation;

pub use error::{Error, Result};
pub use quad::QuadratureConfig;
