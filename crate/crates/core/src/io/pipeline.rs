// SPDX-License-Identifier: MIT OR Apache-2.0

//! Batch drivers behind the CLI subcommands.
//!
//! Entries are processed in parallel but reports are assembled in manifest
//! order, so output bytes depend only on inputs and options.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalmetrics::{
    aggregate_heads, auroc, bootstrap_ci, flipped_auroc, lc_auroc, lc_auroc_fixed, DiagnosticsRecord,
    EvalSample, DEFAULT_RESAMPLES,
};
use crate::io::manifest::{Manifest, ManifestEntry};
use crate::io::matrix_file::{read_matrix, write_matrix, Dtype};
use crate::landscape::{
    closed_form_landscape, floor_fraction, generate, temporal_sweep, CanonicalKind, CanonicalSpec,
    LandscapeCurve, UNIFORM_CAUSAL_FLOOR,
};
use crate::spectral::{dilation, exact_conductance, svd_summary, sweep_on, sweep_conductance, DEFAULT_DENSE_LIMIT};
use crate::transport::{asymmetry_g, drop_zero_degrees, normalize, validate, AttentionMatrix, MaskKind};

pub const REPORT_VERSION: u32 = 1;
pub const DEFAULT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnoseOptions {
    pub eps: f64,
    pub dense_limit: usize,
    /// Drop zero-degree rows/columns instead of reporting an error.
    pub drop_zero_degrees: bool,
    pub seed: u64,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        DiagnoseOptions {
            eps: DEFAULT_EPS,
            dense_limit: DEFAULT_DENSE_LIMIT,
            drop_zero_degrees: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSummary {
    pub d_bar: f64,
    pub kappa: f64,
    pub d_k_min: f64,
    pub d_k_max: f64,
}

/// Diagnostics for one manifest entry. Failed entries keep `error` and null features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDiagnostics {
    pub sample_id: String,
    pub layer: i64,
    pub head: i64,
    pub path: String,
    pub n_q: Option<usize>,
    pub n_k: Option<usize>,
    pub row_stochastic: Option<bool>,
    pub phi_hat: Option<f64>,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub gap: Option<f64>,
    pub g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_note: Option<String>,
    pub cut_size: Option<usize>,
    pub degrees: Option<DegreeSummary>,
    /// Temporal-cut landscape of square entries.
    pub landscape: Option<LandscapeBrief>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped: Option<crate::transport::DroppedIndices>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<u32>,
}

impl EntryDiagnostics {
    fn empty(entry: &ManifestEntry) -> Self {
        EntryDiagnostics {
            sample_id: entry.sample_id.clone(),
            layer: entry.layer,
            head: entry.head,
            path: entry.path.clone(),
            n_q: None,
            n_k: None,
            row_stochastic: None,
            phi_hat: None,
            sigma1: None,
            sigma2: None,
            gap: None,
            g: None,
            g_note: None,
            cut_size: None,
            degrees: None,
            landscape: None,
            dropped: None,
            error: None,
            label: entry.label,
            length: entry.length,
        }
    }

    pub fn record(&self) -> DiagnosticsRecord {
        DiagnosticsRecord {
            sample_id: self.sample_id.clone(),
            layer: self.layer,
            head: self.head,
            phi_hat: self.phi_hat,
            sigma2: self.sigma2,
            gap: self.gap,
            g: self.g,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeBrief {
    pub t_star_over_n: f64,
    pub phi_min: f64,
    pub floor_pierced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub report_version: u32,
    pub kind: String,
    pub options: BTreeMap<String, serde_json::Value>,
    pub records: Vec<EntryDiagnostics>,
    /// Per-sample aggregates over its heads.
    pub aggregates: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalReport>,
}

/// Diagnose one attention matrix.
pub fn diagnose_matrix(a: &AttentionMatrix, opts: &DiagnoseOptions, out: &mut EntryDiagnostics) -> Result<()> {
    out.n_q = Some(a.n_queries());
    out.n_k = Some(a.n_keys());
    out.row_stochastic = Some(a.is_row_stochastic());
    let dropped;
    let a = if opts.drop_zero_degrees {
        let (kept, d) = drop_zero_degrees(a)?;
        dropped = kept;
        if !d.is_empty() {
            out.dropped = Some(d);
        }
        &dropped
    } else {
        a
    };
    let m = normalize(a)?;
    let d = m.degrees();
    out.degrees = Some(DegreeSummary {
        d_bar: d.d_bar,
        kappa: d.kappa,
        d_k_min: d.d_k.iter().copied().fold(f64::INFINITY, f64::min),
        d_k_max: d.d_k.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    let spectrum = svd_summary(&m, 2, opts.dense_limit)?;
    out.sigma1 = Some(spectrum.sigma1());
    out.sigma2 = Some(spectrum.sigma2);
    out.gap = Some(spectrum.gap);
    if a.n_queries() + a.n_keys() >= 2 {
        let (phi, cut) = sweep_on(&dilation(a), &m, &spectrum, true)?;
        out.phi_hat = Some(phi);
        out.cut_size = Some(cut.size());
    }
    if m.is_square() {
        out.g = Some(asymmetry_g(&m, opts.eps)?);
        if let Ok(curve) = temporal_sweep(a) {
            out.landscape = Some(LandscapeBrief {
                t_star_over_n: curve.t_star_over_n(),
                phi_min: curve.phi_min,
                floor_pierced: curve.floor_pierced,
            });
        }
    } else {
        out.g_note = Some("cross-attention matrices are rectangular; G undefined".into());
    }
    Ok(())
}

fn diagnose_entry(manifest: &Manifest, entry: &ManifestEntry, opts: &DiagnoseOptions) -> EntryDiagnostics {
    let mut out = EntryDiagnostics::empty(entry);
    let result = (|| -> Result<()> {
        let mask: MaskKind = entry.mask.parse()?;
        let values = read_matrix(manifest.resolve(entry))?;
        let a = validate(values, mask)?;
        diagnose_matrix(&a, opts, &mut out)
    })();
    if let Err(e) = result {
        out.error = Some(format!("{}: {e}", error_kind(&e)));
    }
    out
}

/// Stable variant name for report notes.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::EmptyMatrix => "EmptyMatrix",
        Error::NegativeEntry { .. } => "NegativeEntry",
        Error::NonFiniteEntry { .. } => "NonFiniteEntry",
        Error::MaskViolation { .. } => "MaskViolation",
        Error::RaggedRows { .. } => "RaggedRows",
        Error::ZeroRowDegree(_) => "ZeroRowDegree",
        Error::ZeroColumnDegree(_) => "ZeroColumnDegree",
        Error::NotSquare { .. } => "NotSquare",
        Error::DegenerateNorm => "DegenerateNorm",
        Error::ConvergenceFailure { .. } => "ConvergenceFailure",
        Error::InvalidArgument(_) => "InvalidArgument",
        Error::TrivialCut => "TrivialCut",
        Error::ZeroVolumeSide => "ZeroVolumeSide",
        Error::TooLarge { .. } => "TooLarge",
        Error::TooSmall => "TooSmall",
        Error::OutOfRange(_) => "OutOfRange",
        Error::AllSkipped => "AllSkipped",
        Error::EmptyList => "EmptyList",
        Error::OneClassOnly => "OneClassOnly",
        Error::LengthMismatch { .. } => "LengthMismatch",
        Error::MetricUndefined { .. } => "MetricUndefined",
        Error::BadMagic => "BadMagic",
        Error::TruncatedPayload { .. } => "TruncatedPayload",
        Error::NonFiniteValue(_) => "NonFiniteValue",
        Error::UnknownDtype(_) => "UnknownDtype",
        Error::MissingColumn(_) => "MissingColumn",
        Error::ManifestUnreadable(_) => "ManifestUnreadable",
        Error::DuplicateEntry(_) => "DuplicateEntry",
        Error::Parse(_) => "Parse",
        Error::Io { .. } => "Io",
        Error::Json(_) => "Json",
        Error::Csv(_) => "Csv",
    }
}

pub fn run_diagnose(manifest: &Manifest, opts: &DiagnoseOptions) -> Result<DiagnoseReport> {
    let records: Vec<EntryDiagnostics> = manifest
        .entries
        .par_iter()
        .map(|e| diagnose_entry(manifest, e, opts))
        .collect();

    let mut by_sample: BTreeMap<String, Vec<DiagnosticsRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.error.is_none()) {
        by_sample.entry(r.sample_id.clone()).or_default().push(r.record());
    }
    let aggregates = by_sample
        .iter()
        .map(|(k, v)| Ok((k.clone(), aggregate_heads(v)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;

    let eval = eval_from_records(&records, &aggregates, opts.seed);

    let mut options = BTreeMap::new();
    options.insert("eps".into(), serde_json::json!(opts.eps));
    options.insert("dense_limit".into(), serde_json::json!(opts.dense_limit));
    options.insert("drop_zero_degrees".into(), serde_json::json!(opts.drop_zero_degrees));
    Ok(DiagnoseReport {
        report_version: REPORT_VERSION,
        kind: "diagnose".into(),
        options,
        records,
        aggregates,
        eval,
    })
}

// Evaluation is attached only when every aggregated sample carries label and length.
fn eval_from_records(
    records: &[EntryDiagnostics],
    aggregates: &BTreeMap<String, BTreeMap<String, f64>>,
    seed: u64,
) -> Option<EvalReport> {
    let mut meta: BTreeMap<&str, (u8, u32)> = BTreeMap::new();
    for r in records {
        if let (Some(l), Some(n)) = (r.label, r.length) {
            meta.entry(r.sample_id.as_str()).or_insert((l, n));
        }
    }
    if aggregates.is_empty() || aggregates.keys().any(|k| !meta.contains_key(k.as_str())) {
        return None;
    }
    let rows: Vec<SampleFeatures> = aggregates
        .iter()
        .map(|(id, feats)| {
            let (label, length) = meta[id.as_str()];
            SampleFeatures {
                sample_id: id.clone(),
                label,
                length,
                features: feats.clone(),
            }
        })
        .collect();
    evaluate_features(
        &rows,
        &EvalOptions {
            bins: BinsOption::Auto,
            seed,
            resamples: DEFAULT_RESAMPLES,
        },
    )
    .ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinsOption {
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for BinsOption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(BinsOption::Auto);
        }
        match s.parse::<usize>() {
            Ok(b) if b >= 1 => Ok(BinsOption::Fixed(b)),
            _ => Err(Error::Parse(format!("--bins expects `auto` or a positive integer, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub bins: BinsOption,
    pub seed: u64,
    pub resamples: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            bins: BinsOption::Auto,
            seed: 0,
            resamples: DEFAULT_RESAMPLES,
        }
    }
}

/// Aggregated features of one sample with its label and length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFeatures {
    pub sample_id: String,
    pub label: u8,
    pub length: u32,
    pub features: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEval {
    pub n_samples: usize,
    pub raw_auroc: f64,
    pub raw_flipped: f64,
    /// Pair-weighted length-controlled AUROC before flipping.
    pub lc_auroc: f64,
    pub lc_flipped: f64,
    pub lc_was_flipped: bool,
    pub lc_bins: usize,
    pub lc_fallback: bool,
    /// 95% percentile bootstrap interval of `lc_auroc`.
    pub lc_ci: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub report_version: u32,
    pub kind: String,
    pub n_samples: usize,
    pub n_positive: usize,
    pub bins: String,
    pub seed: u64,
    pub resamples: usize,
    pub features: BTreeMap<String, FeatureEval>,
}

/// Raw, flipped and length-controlled AUROC for every feature column.
///
/// The bootstrap keeps the bin count chosen on the full sample.
pub fn evaluate_features(rows: &[SampleFeatures], opts: &EvalOptions) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::EmptyList);
    }
    let n_positive = rows.iter().filter(|r| r.label == 1).count();
    if n_positive == 0 || n_positive == rows.len() {
        return Err(Error::OneClassOnly);
    }
    let mut names: Vec<String> = rows
        .iter()
        .flat_map(|r| r.features.keys().cloned())
        .collect();
    names.sort();
    names.dedup();

    let evals: Vec<(String, FeatureEval)> = names
        .par_iter()
        .map(|name| {
            let samples: Vec<EvalSample> = rows
                .iter()
                .filter_map(|r| {
                    let v = *r.features.get(name)?;
                    EvalSample::new(v, r.label, r.length.max(1)).ok()
                })
                .collect();
            (name.clone(), evaluate_one(&samples, opts))
        })
        .collect();

    Ok(EvalReport {
        report_version: REPORT_VERSION,
        kind: "eval".into(),
        n_samples: rows.len(),
        n_positive,
        bins: match opts.bins {
            BinsOption::Auto => "auto".into(),
            BinsOption::Fixed(b) => b.to_string(),
        },
        seed: opts.seed,
        resamples: opts.resamples,
        features: evals.into_iter().collect(),
    })
}

fn evaluate_one(samples: &[EvalSample], opts: &EvalOptions) -> FeatureEval {
    let mut fe = FeatureEval {
        n_samples: samples.len(),
        raw_auroc: f64::NAN,
        raw_flipped: f64::NAN,
        lc_auroc: f64::NAN,
        lc_flipped: f64::NAN,
        lc_was_flipped: false,
        lc_bins: 0,
        lc_fallback: false,
        lc_ci: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        let raw = auroc(samples)?;
        fe.raw_auroc = raw;
        fe.raw_flipped = flipped_auroc(raw);
        let lc = match opts.bins {
            BinsOption::Auto => lc_auroc(samples)?,
            BinsOption::Fixed(b) => lc_auroc_fixed(samples, b)?,
        };
        fe.lc_auroc = lc.value;
        fe.lc_flipped = lc.reported();
        fe.lc_was_flipped = lc.flipped;
        fe.lc_bins = lc.bins;
        fe.lc_fallback = lc.fallback;
        if opts.resamples > 0 {
            let bins = lc.bins;
            fe.lc_ci = Some(bootstrap_ci(
                |s| lc_auroc_fixed(s, bins).map(|r| r.value),
                samples,
                opts.resamples,
                opts.seed,
            )?);
        }
        Ok(())
    })();
    if let Err(e) = result {
        fe.error = Some(format!("{}: {e}", error_kind(&e)));
    }
    fe
}

/// Reads the per-head feature CSV and aggregates heads per sample.
///
/// Required columns: `sample_id`, `label`, `length`, and at least one of
/// `phi_hat`, `sigma2`, `g`. Empty cells are missing values.
pub fn load_feature_csv(path: impl AsRef<Path>) -> Result<Vec<SampleFeatures>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feature_csv(&text)
}

pub fn parse_feature_csv(text: &str) -> Result<Vec<SampleFeatures>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("sample_id").ok_or_else(|| Error::MissingColumn("sample_id".into()))?;
    let label_col = col("label").ok_or_else(|| Error::MissingColumn("label".into()))?;
    let length_col = col("length").ok_or_else(|| Error::MissingColumn("length".into()))?;
    let layer_col = col("layer");
    let head_col = col("head");
    let feature_cols: Vec<(&str, usize)> = [("phi_hat", "phi_hat"), ("sigma2", "sigma2"), ("g", "g")]
        .iter()
        .filter_map(|(key, name)| col(name).map(|c| (*key, c)))
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::MissingColumn("phi_hat".into()));
    }

    let parse_opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("null") {
            Ok(None)
        } else {
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| Error::Parse(format!("not a number: `{s}`")))
        }
    };

    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, (u8, u32, Vec<DiagnosticsRecord>)> = BTreeMap::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let id = field(id_col).to_string();
        let label: u8 = field(label_col)
            .parse()
            .ok()
            .filter(|l| *l <= 1)
            .ok_or_else(|| Error::Parse(format!("row {}: label must be 0 or 1", line + 2)))?;
        let length: u32 = field(length_col)
            .parse()
            .ok()
            .filter(|l| *l >= 1)
            .ok_or_else(|| Error::Parse(format!("row {}: length must be a positive integer", line + 2)))?;
        let mut r = DiagnosticsRecord {
            sample_id: id.clone(),
            layer: layer_col.and_then(|c| field(c).parse().ok()).unwrap_or(0),
            head: head_col.and_then(|c| field(c).parse().ok()).unwrap_or(0),
            ..Default::default()
        };
        for (key, c) in &feature_cols {
            let v = parse_opt(field(*c))?;
            match *key {
                "phi_hat" => r.phi_hat = v,
                "sigma2" => r.sigma2 = v,
                _ => r.g = v,
            }
        }
        let slot = grouped.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (label, length, Vec::new())
        });
        slot.2.push(r);
    }
    order
        .into_iter()
        .map(|id| {
            let (label, length, recs) = grouped.remove(&id).expect("grouped by id");
            Ok(SampleFeatures {
                sample_id: id,
                label,
                length,
                features: aggregate_heads(&recs)?,
            })
        })
        .collect()
}

pub fn run_eval(feature_csv: impl AsRef<Path>, opts: &EvalOptions) -> Result<EvalReport> {
    let rows = load_feature_csv(feature_csv)?;
    evaluate_features(&rows, opts)
}

/// Where landscape heads come from.
#[derive(Debug, Clone, PartialEq)]
pub enum LandscapeSource {
    Specs(Vec<CanonicalSpec>),
    Manifest(Manifest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadLandscape {
    pub id: String,
    pub layer: i64,
    pub head: i64,
    pub n: Option<usize>,
    pub method: String,
    pub t_star: Option<usize>,
    pub t_star_over_n: Option<f64>,
    pub phi_min: Option<f64>,
    pub floor_pierced: Option<bool>,
    pub disconnected: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSummary {
    pub heads: usize,
    pub t_star_over_n: MeanStd,
    pub phi_min: MeanStd,
    pub floor: f64,
    pub floor_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeReport {
    pub report_version: u32,
    pub kind: String,
    pub heads: Vec<HeadLandscape>,
    pub summary: LandscapeSummary,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LandscapeOptions {
    pub floor: f64,
    /// When set, each head's curve is written there as `<id>_L<layer>_H<head>.csv`.
    pub curve_dir: Option<PathBuf>,
}

impl LandscapeOptions {
    pub fn with_floor(floor: f64) -> Self {
        LandscapeOptions { floor, curve_dir: None }
    }
}

fn spec_curve(spec: &CanonicalSpec) -> Result<(LandscapeCurve, &'static str)> {
    match spec.kind {
        CanonicalKind::UniformCausal => Ok((closed_form_landscape(spec.n)?, "closed_form")),
        _ => Ok((temporal_sweep(&generate(spec)?)?, "temporal_sweep")),
    }
}

pub fn run_landscape(source: &LandscapeSource, opts: &LandscapeOptions) -> Result<LandscapeReport> {
    struct Job {
        id: String,
        layer: i64,
        head: i64,
        work: Box<dyn Fn() -> Result<(LandscapeCurve, &'static str)> + Send + Sync>,
    }
    let jobs: Vec<Job> = match source {
        LandscapeSource::Specs(specs) => specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let s = *s;
                Job {
                    id: s.label(),
                    layer: 0,
                    head: i as i64,
                    work: Box::new(move || spec_curve(&s)),
                }
            })
            .collect(),
        LandscapeSource::Manifest(m) => m
            .entries
            .iter()
            .map(|e| {
                let path = m.resolve(e);
                let mask = e.mask.clone();
                Job {
                    id: e.sample_id.clone(),
                    layer: e.layer,
                    head: e.head,
                    work: Box::new(move || {
                        let a = validate(read_matrix(&path)?, mask.parse()?)?;
                        Ok((temporal_sweep(&a)?, "temporal_sweep"))
                    }),
                }
            })
            .collect(),
    };
    if jobs.is_empty() {
        return Err(Error::EmptyList);
    }
    if let Some(dir) = &opts.curve_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let heads: Vec<HeadLandscape> = jobs
        .par_iter()
        .map(|job| {
            let mut h = HeadLandscape {
                id: job.id.clone(),
                layer: job.layer,
                head: job.head,
                n: None,
                method: String::new(),
                t_star: None,
                t_star_over_n: None,
                phi_min: None,
                floor_pierced: None,
                disconnected: None,
                error: None,
            };
            let result = (job.work)().and_then(|(curve, method)| {
                h.n = Some(curve.n);
                h.method = method.to_string();
                h.t_star = Some(curve.t_star);
                h.t_star_over_n = Some(curve.t_star_over_n());
                h.phi_min = Some(curve.phi_min);
                h.floor_pierced = Some(curve.phi_min < opts.floor);
                h.disconnected = Some(curve.any_disconnected());
                if let Some(dir) = &opts.curve_dir {
                    let file = dir.join(format!("{}_L{}_H{}.csv", sanitize(&job.id), job.layer, job.head));
                    let f = fs::File::create(&file).map_err(|e| Error::io(&file, e))?;
                    curve.write_csv(f)?;
                }
                Ok(())
            });
            if let Err(e) = result {
                h.error = Some(format!("{}: {e}", error_kind(&e)));
            }
            h
        })
        .collect();

    let ok: Vec<&HeadLandscape> = heads.iter().filter(|h| h.error.is_none()).collect();
    if ok.is_empty() {
        return Err(Error::AllSkipped);
    }
    let ratios: Vec<f64> = ok.iter().filter_map(|h| h.t_star_over_n).collect();
    let minima: Vec<f64> = ok.iter().filter_map(|h| h.phi_min).collect();
    let summary = LandscapeSummary {
        heads: ok.len(),
        t_star_over_n: MeanStd::of(&ratios),
        phi_min: MeanStd::of(&minima),
        floor: opts.floor,
        floor_fraction: floor_fraction(&minima, opts.floor)?,
    };
    Ok(LandscapeReport {
        report_version: REPORT_VERSION,
        kind: "landscape".into(),
        heads,
        summary,
    })
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub report_version: u32,
    pub kind: String,
    pub n_q: usize,
    pub n_k: usize,
    pub phi_exact: f64,
    pub phi_hat: f64,
    /// `phi_hat / phi_exact`; null when `phi_exact = 0`.
    pub ratio: Option<f64>,
}

pub fn oracle_matrix(a: &AttentionMatrix) -> Result<OracleReport> {
    let (phi_exact, _) = exact_conductance(a)?;
    let (phi_hat, _) = sweep_conductance(a)?;
    Ok(OracleReport {
        report_version: REPORT_VERSION,
        kind: "oracle".into(),
        n_q: a.n_queries(),
        n_k: a.n_keys(),
        phi_exact,
        phi_hat,
        ratio: (phi_exact > 0.0).then(|| phi_hat / phi_exact),
    })
}

pub fn run_oracle(path: impl AsRef<Path>, mask: MaskKind) -> Result<OracleReport> {
    let a = validate(read_matrix(path)?, mask)?;
    oracle_matrix(&a)
}

/// Writes each canonical matrix as `<label>.atm` plus `manifest.json` into `out_dir`.
pub fn run_gen(specs: &[CanonicalSpec], out_dir: impl AsRef<Path>, dtype: Dtype) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let a = generate(spec)?;
        let file = format!("{}.atm", spec.label());
        write_matrix(out_dir.join(&file), a.values(), dtype)?;
        entries.push(ManifestEntry {
            sample_id: spec.label(),
            layer: 0,
            head: i as i64,
            path: file,
            mask: a.mask().to_string(),
            label: None,
            length: None,
        });
    }
    let manifest = Manifest::new(entries, out_dir)?;
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Default Cheeger floor for landscape reports.
pub const DEFAULT_FLOOR: f64 = UNIFORM_CAUSAL_FLOOR;
