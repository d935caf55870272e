//! Data ingestion and the per-gene-set estimation pipeline.
//!
//! File formats follow genomics conventions: a TSV expression matrix with a
//! header row of sample ids and gene ids in the first column; a two-column
//! CSV of (sample id, 0/1) labels reconciled by id rather than position;
//! and GMT gene-set collections (name, description, member genes,
//! tab-separated).

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    chebychev_bound, p1_rmse_ref2, report, EstimatorKind, Sided, StandardizedPair,
};
use crate::quad::QuadratureConfig;

/// Dense genes × samples expression matrix.
#[derive(Clone, Debug)]
pub struct ExpressionMatrix {
    genes: Vec<String>,
    samples: Vec<String>,
    values: Vec<f64>, // row-major, one row per gene
    gene_index: HashMap<String, usize>,
}

impl ExpressionMatrix {
    pub fn from_parts(genes: Vec<String>, samples: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if genes.len() * samples.len() != values.len() {
            return Err(Error::Invalid(format!(
                "matrix shape mismatch: {} genes x {} samples != {} values",
                genes.len(),
                samples.len(),
                values.len()
            )));
        }
        let gene_index = genes
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i))
            .collect();
        Ok(Self {
            genes,
            samples,
            values,
            gene_index,
        })
    }

    /// Parse a TSV matrix: header `<anything>\t<sample>...`, then one line
    /// per gene. Missing or non-numeric cells are hard errors.
    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::parse_tsv(BufReader::new(file), &path.display().to_string())
    }

    pub fn parse_tsv<R: Read>(reader: BufReader<R>, path: &str) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: 1,
                    message: "empty matrix file".into(),
                })
            }
        };
        let samples: Vec<String> = header
            .trim_end_matches(['\r', '\n'])
            .split('\t')
            .skip(1)
            .map(str::to_string)
            .collect();
        if samples.is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                message: "header has no sample columns".into(),
            });
        }
        let mut genes = Vec::new();
        let mut values = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let gene = fields.next().unwrap_or_default().to_string();
            if gene.is_empty() {
                return Err(Error::Parse {
                    path: path.into(),
                    line: idx + 1,
                    message: "missing gene id".into(),
                });
            }
            let row: Vec<f64> = fields
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| Error::Parse {
                        path: path.into(),
                        line: idx + 1,
                        message: format!("non-numeric expression value '{f}'"),
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != samples.len() {
                return Err(Error::Parse {
                    path: path.into(),
                    line: idx + 1,
                    message: format!(
                        "expected {} values for gene '{gene}', found {}",
                        samples.len(),
                        row.len()
                    ),
                });
            }
            genes.push(gene);
            values.extend(row);
        }
        if genes.is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                line: 2,
                message: "matrix has no gene rows".into(),
            });
        }
        Self::from_parts(genes, samples, values)
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn samples(&self) -> &[String] {
        &self.samples
    }

    pub fn row(&self, gene_idx: usize) -> &[f64] {
        let w = self.samples.len();
        &self.values[gene_idx * w..(gene_idx + 1) * w]
    }

    pub fn gene_row(&self, gene: &str) -> Option<&[f64]> {
        self.gene_index.get(gene).map(|&i| self.row(i))
    }
}

/// A named gene set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneSet {
    pub name: String,
    pub description: String,
    pub genes: Vec<String>,
}

/// An ordered collection of gene sets.
#[derive(Clone, Debug, Default)]
pub struct GeneSetCollection {
    pub sets: Vec<GeneSet>,
}

impl GeneSetCollection {
    /// Parse GMT: one set per line, `name\tdescription\tgene...`.
    pub fn read_gmt(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::parse_gmt(BufReader::new(file), &path.display().to_string())
    }

    pub fn parse_gmt<R: Read>(reader: BufReader<R>, path: &str) -> Result<Self> {
        let mut sets = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let name = fields.next().unwrap_or_default().to_string();
            let description = fields.next().map(str::to_string).ok_or(Error::Parse {
                path: path.into(),
                line: idx + 1,
                message: "GMT line needs at least name and description".into(),
            })?;
            let genes: Vec<String> = fields
                .filter(|f| !f.is_empty())
                .map(str::to_string)
                .collect();
            if genes.is_empty() {
                return Err(Error::Parse {
                    path: path.into(),
                    line: idx + 1,
                    message: format!("gene set '{name}' lists no genes"),
                });
            }
            sets.push(GeneSet {
                name,
                description,
                genes,
            });
        }
        Ok(Self { sets })
    }
}

/// Per-sample binary condition labels, reconciled against the matrix sample
/// order by id.
#[derive(Clone, Debug)]
pub struct LabelVector {
    by_sample: HashMap<String, bool>,
}

impl LabelVector {
    /// Parse a two-column CSV `sample_id,0|1` (a `sample,label`-style
    /// header row is skipped if present).
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::parse_csv(BufReader::new(file), &path.display().to_string())
    }

    pub fn parse_csv<R: Read>(reader: BufReader<R>, path: &str) -> Result<Self> {
        let mut by_sample = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() {
                continue;
            }
            let (id, value) = line.split_once(',').ok_or(Error::Parse {
                path: path.into(),
                line: idx + 1,
                message: "expected 'sample_id,label'".into(),
            })?;
            let value = value.trim();
            let label = match value {
                "0" => false,
                "1" => true,
                _ if idx == 0 => continue, // header row
                _ => {
                    return Err(Error::Parse {
                        path: path.into(),
                        line: idx + 1,
                        message: format!("label for '{id}' must be 0 or 1, got '{value}'"),
                    })
                }
            };
            if by_sample.insert(id.trim().to_string(), label).is_some() {
                return Err(Error::Parse {
                    path: path.into(),
                    line: idx + 1,
                    message: format!("duplicate sample id '{id}'"),
                });
            }
        }
        if by_sample.is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                message: "no labels found".into(),
            });
        }
        Ok(Self { by_sample })
    }

    /// Align to the matrix sample order; every matrix sample must be
    /// labeled and both classes must be present.
    pub fn reconcile(&self, samples: &[String]) -> Result<Vec<bool>> {
        let mut out = Vec::with_capacity(samples.len());
        for s in samples {
            match self.by_sample.get(s) {
                Some(&b) => out.push(b),
                None => {
                    return Err(Error::Invalid(format!(
                        "sample '{s}' from the matrix has no label"
                    )))
                }
            }
        }
        if !out.iter().any(|&b| b) || out.iter().all(|&b| b) {
            return Err(Error::Degenerate("labels must contain both classes".into()));
        }
        Ok(out)
    }
}

/// The per-sample composite response of a gene set, plus ingestion notes.
#[derive(Clone, Debug)]
pub struct CompositeResponse {
    pub values: Vec<f64>,
    pub genes_used: usize,
    pub genes_missing: usize,
    /// Genes excluded because their expression is constant across samples.
    pub skipped_zero_variance: Vec<String>,
}

/// Sum of per-gene standardized expression across the set:
/// Y_i = Σ_g Y_{gi} / s_g, with s_g the population standard deviation of
/// gene g over all samples. Genes missing from the matrix are counted;
/// zero-variance genes are skipped with a warning entry. An empty
/// intersection is an error.
pub fn composite_response(matrix: &ExpressionMatrix, set: &GeneSet) -> Result<CompositeResponse> {
    let width = matrix.samples().len();
    let mut values = vec![0.0f64; width];
    let mut genes_used = 0;
    let mut genes_missing = 0;
    let mut skipped = Vec::new();
    for gene in &set.genes {
        let Some(row) = matrix.gene_row(gene) else {
            genes_missing += 1;
            continue;
        };
        let mean = row.iter().sum::<f64>() / width as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
        let scale = row.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        let sd = var.sqrt();
        if sd <= 1e-12 * scale {
            skipped.push(gene.clone());
            continue;
        }
        for (acc, v) in values.iter_mut().zip(row) {
            *acc += v / sd;
        }
        genes_used += 1;
    }
    if genes_used == 0 {
        return Err(Error::Degenerate(format!(
            "gene set '{}' has no usable genes in the matrix ({} missing, {} zero-variance)",
            set.name,
            genes_missing,
            skipped.len()
        )));
    }
    Ok(CompositeResponse {
        values,
        genes_used,
        genes_missing,
        skipped_zero_variance: skipped,
    })
}

/// Center and scale the response against the labels.
pub fn standardize(response: &[f64], labels: &[bool]) -> Result<StandardizedPair> {
    StandardizedPair::new(labels, response)
}

/// Options for the per-gene-set estimation run.
#[derive(Clone, Debug)]
pub struct EstimateOptions {
    pub estimators: Vec<EstimatorKind>,
    pub sided: Sided,
    /// Compute exact second moments (O(m̄³) quadratures per set); enables
    /// the RMSE, CV and Chebychev columns.
    pub with_rmse: bool,
    pub quad: QuadratureConfig,
    /// Attach wall-clock timings (off by default: timing values vary run to
    /// run, and default reports are byte-identical across reruns).
    pub timings: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            estimators: vec![EstimatorKind::P1, EstimatorKind::P2, EstimatorKind::P3],
            sided: Sided::Two,
            with_rmse: false,
            quad: QuadratureConfig::default(),
            timings: false,
        }
    }
}

/// One output record: a gene set × estimator row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneSetRecord {
    pub gene_set: String,
    pub set_size: usize,
    pub genes_used: usize,
    pub genes_missing: usize,
    pub genes_zero_variance: usize,
    pub m0: usize,
    pub m1: usize,
    pub rho_hat: f64,
    pub estimator: EstimatorKind,
    pub sided: Sided,
    pub estimate: f64,
    pub log10_estimate: Option<f64>,
    pub rmse: Option<f64>,
    pub cv: Option<f64>,
    pub log10_granularity: f64,
    pub chebychev_p_star: Option<f64>,
    pub timing_ms: Option<f64>,
}

/// Outcome for one gene set: either records (one per estimator) or a
/// reported failure. Failures stay in the output stream so callers can see
/// every set that was dropped and why.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SetOutcome {
    Records { records: Vec<GeneSetRecord> },
    Failed { gene_set: String, reason: String },
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn estimate_one_set(
    matrix: &ExpressionMatrix,
    labels: &[bool],
    set: &GeneSet,
    opts: &EstimateOptions,
) -> Result<Vec<GeneSetRecord>> {
    let started = Instant::now();
    let composite = composite_response(matrix, set)?;
    let sp = standardize(&composite.values, labels)?;
    let g = sp.group_sizes();
    let mut records = Vec::with_capacity(opts.estimators.len());
    for &kind in &opts.estimators {
        let (estimate, log10_estimate, log10_granularity, rmse, cv) = if opts.with_rmse {
            let rep = report(&sp, kind, opts.sided, &opts.quad)?;
            // the informative accuracy measure for p1 is its RMSE against
            // the conditioned reference distribution
            let rmse = match kind {
                EstimatorKind::P1 => p1_rmse_ref2(g, sp.rho_hat(), opts.sided, &opts.quad)?,
                _ => rep.rmse,
            };
            let cv = if rep.estimate > 0.0 {
                rmse / rep.estimate
            } else {
                f64::INFINITY
            };
            (
                rep.estimate,
                rep.log10_estimate,
                rep.log10_granularity,
                Some(rmse),
                Some(cv),
            )
        } else {
            let estimate = match kind {
                EstimatorKind::P1 => {
                    crate::estimators::p1_estimate(sp.dim(), sp.rho_hat(), opts.sided)?
                }
                _ => {
                    let cp = crate::estimators::choose_conditioning_point(&sp, kind, opts.sided)?;
                    crate::estimators::tilde_p_c(g, cp.rho_tilde, sp.rho_hat(), opts.sided)?
                }
            };
            let log10_gran = -g.log_orbit_size() / std::f64::consts::LN_10;
            (estimate, estimate.log10(), log10_gran, None, None)
        };
        // conservative Chebychev bound from the estimator's own central
        // moment pair (p1 pairs with its uniform-reference deviation)
        let chebychev_p_star = match (opts.with_rmse, kind) {
            (true, EstimatorKind::P1) => {
                let var1 = crate::estimators::var_ref1(g, sp.rho_hat(), opts.sided, &opts.quad)?;
                Some(chebychev_bound(estimate, var1.sqrt())?.p_star)
            }
            (true, _) => Some(chebychev_bound(estimate, rmse.unwrap_or(0.0))?.p_star),
            (false, _) => None,
        };
        records.push(GeneSetRecord {
            gene_set: set.name.clone(),
            set_size: set.genes.len(),
            genes_used: composite.genes_used,
            genes_missing: composite.genes_missing,
            genes_zero_variance: composite.skipped_zero_variance.len(),
            m0: g.m0(),
            m1: g.m1(),
            rho_hat: sp.rho_hat(),
            estimator: kind,
            sided: opts.sided,
            estimate,
            log10_estimate: finite_or_none(log10_estimate),
            rmse,
            cv: cv.and_then(finite_or_none),
            log10_granularity,
            chebychev_p_star,
            timing_ms: None,
        });
    }
    if opts.timings {
        let elapsed = started.elapsed().as_secs_f64() * 1e3;
        for r in &mut records {
            r.timing_ms = Some(elapsed);
        }
    }
    Ok(records)
}

/// Run every gene set through the pipeline. Per-set work is dispatched to
/// the rayon pool; output order follows input order regardless of thread
/// count.
pub fn run_estimates(
    matrix: &ExpressionMatrix,
    labels: &[bool],
    collection: &GeneSetCollection,
    opts: &EstimateOptions,
) -> Vec<SetOutcome> {
    collection
        .sets
        .par_iter()
        .map(|set| match estimate_one_set(matrix, labels, set, opts) {
            Ok(records) => SetOutcome::Records { records },
            Err(e) => SetOutcome::Failed {
                gene_set: set.name.clone(),
                reason: e.to_string(),
            },
        })
        .collect()
}

/// Serialize records as JSON Lines.
pub fn write_records_json<W: std::io::Write>(out: &mut W, outcomes: &[SetOutcome]) -> Result<()> {
    for outcome in outcomes {
        match outcome {
            SetOutcome::Records { records } => {
                for r in records {
                    serde_json::to_writer(&mut *out, r)
                        .map_err(|e| Error::Invalid(format!("json serialization: {e}")))?;
                    out.write_all(b"\n")?;
                }
            }
            SetOutcome::Failed { .. } => {
                serde_json::to_writer(&mut *out, outcome)
                    .map_err(|e| Error::Invalid(format!("json serialization: {e}")))?;
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

/// Parse records back from JSON Lines (failure records are skipped).
pub fn read_records_json<R: Read>(reader: BufReader<R>) -> Result<Vec<GeneSetRecord>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(record) = serde_json::from_str::<GeneSetRecord>(&line) {
            out.push(record);
        }
    }
    Ok(out)
}

/// Serialize records as CSV with a fixed column order; failures are
/// reported on a parallel channel by the caller.
pub fn write_records_csv<W: std::io::Write>(out: W, outcomes: &[SetOutcome]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for outcome in outcomes {
        if let SetOutcome::Records { records } = outcome {
            for r in records {
                writer
                    .serialize(r)
                    .map_err(|e| Error::Invalid(format!("csv serialization: {e}")))?;
            }
        }
    }
    writer
        .flush()
        .map_err(|e| Error::Invalid(format!("csv flush: {e}")))?;
    Ok(())
}

/// Read records back from CSV.
pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<GeneSetRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::Invalid(format!("csv parse: {e}"))))
        .collect()
}
