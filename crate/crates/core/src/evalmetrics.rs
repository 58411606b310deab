// SPDX-License-Identifier: MIT OR Apache-2.0

//! Evaluation of diagnostic features: AUROC, length-controlled AUROC,
//! bootstrap intervals, and tail aggregates across heads.
//!
//! Length-controlled AUROC partitions samples into equal-frequency response
//! length bins, residualizes scores against length inside each bin with OLS,
//! and pair-weights the per-bin AUROCs by `n_pos * n_neg`. A score that only
//! tracks length collapses to about 0.5.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum positive-negative pairs per bin.
pub const MIN_PAIRS_PER_BIN: usize = 25;
/// Within-bin |Spearman(score, length)| must stay below this.
pub const MAX_WITHIN_BIN_RHO: f64 = 0.10;
/// Upper bound on bin count is `N / SAMPLES_PER_BIN_CAP`.
pub const SAMPLES_PER_BIN_CAP: usize = 50;
pub const DEFAULT_RESAMPLES: usize = 1000;

/// One scored response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub score: f64,
    /// `true` for the positive (hallucinated) class.
    pub label: bool,
    /// Response length in tokens, at least 1.
    pub length: u32,
}

impl EvalSample {
    pub fn new(score: f64, label: u8, length: u32) -> Result<Self> {
        if label > 1 {
            return Err(Error::InvalidArgument(format!("label must be 0 or 1, got {label}")));
        }
        if length == 0 {
            return Err(Error::InvalidArgument("length must be >= 1".into()));
        }
        Ok(EvalSample {
            score,
            label: label == 1,
            length,
        })
    }
}

/// Mid-ranks (1-based) of `values`; ties share the average rank.
fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn auroc_of(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::OneClassOnly);
    }
    let ranks = mid_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Probability that a random positive outscores a random negative, ties counted 1/2.
pub fn auroc(samples: &[EvalSample]) -> Result<f64> {
    let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
    auroc_of(&scores, &labels)
}

pub fn flipped_auroc(a: f64) -> f64 {
    a.max(1.0 - a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// One of the inputs was constant; `rho` is reported as 0.
    pub constant_input: bool,
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs at least 2 points".into()));
    }
    let rx = mid_ranks(x);
    let ry = mid_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Spearman {
            rho: 0.0,
            constant_input: true,
        });
    }
    Ok(Spearman {
        rho: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        constant_input: false,
    })
}

/// Which of the three bin-count criteria hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinCriteria {
    /// Every bin has at least 25 positive-negative pairs.
    pub enough_pairs: bool,
    /// Every bin holds both classes.
    pub non_degenerate: bool,
    /// Every bin has |Spearman(score, length)| < 0.10.
    pub low_correlation: bool,
}

impl BinCriteria {
    pub fn all(&self) -> bool {
        self.enough_pairs && self.non_degenerate && self.low_correlation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningResult {
    pub bins: usize,
    /// Bin index per sample, in input order.
    pub assignment: Vec<usize>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    pub max_abs_spearman: f64,
    pub criteria: BinCriteria,
    /// No bin count met all three criteria.
    pub fallback: bool,
}

/// Equal-frequency bins on length; ties keep their input order.
pub fn assign_bins(samples: &[EvalSample], bins: usize) -> Result<BinningResult> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bin count must be >= 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::EmptyList);
    }
    let n = samples.len();
    if bins > n {
        return Err(Error::InvalidArgument(format!("{bins} bins for {n} samples")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| samples[i].length);
    let mut assignment = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        assignment[i] = rank * bins / n;
    }
    let mut positives = vec![0; bins];
    let mut negatives = vec![0; bins];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (i, s) in samples.iter().enumerate() {
        let b = assignment[i];
        members[b].push(i);
        if s.label {
            positives[b] += 1;
        } else {
            negatives[b] += 1;
        }
    }
    let mut max_abs_spearman: f64 = 0.0;
    for m in &members {
        if m.len() < 2 {
            continue;
        }
        let x: Vec<f64> = m.iter().map(|&i| samples[i].score).collect();
        let y: Vec<f64> = m.iter().map(|&i| samples[i].length as f64).collect();
        max_abs_spearman = max_abs_spearman.max(spearman(&x, &y)?.rho.abs());
    }
    let criteria = BinCriteria {
        enough_pairs: positives
            .iter()
            .zip(&negatives)
            .all(|(p, q)| p * q >= MIN_PAIRS_PER_BIN),
        non_degenerate: positives.iter().zip(&negatives).all(|(&p, &q)| p > 0 && q > 0),
        low_correlation: max_abs_spearman < MAX_WITHIN_BIN_RHO,
    };
    Ok(BinningResult {
        bins,
        assignment,
        positives,
        negatives,
        max_abs_spearman,
        criteria,
        fallback: false,
    })
}

/// Smallest bin count meeting all criteria, searched up to `max(1, N / 50)`.
///
/// When none qualifies, falls back to the largest count meeting the pair and
/// degeneracy criteria (or a single bin) and sets `fallback`.
pub fn select_bins(samples: &[EvalSample]) -> Result<BinningResult> {
    let max_bins = (samples.len() / SAMPLES_PER_BIN_CAP).max(1);
    let mut best_partial: Option<BinningResult> = None;
    for b in 1..=max_bins.min(samples.len()) {
        let r = assign_bins(samples, b)?;
        if r.criteria.all() {
            return Ok(r);
        }
        if r.criteria.enough_pairs && r.criteria.non_degenerate {
            best_partial = Some(r);
        }
    }
    let mut r = match best_partial {
        Some(r) => r,
        None => assign_bins(samples, 1)?,
    };
    r.fallback = true;
    Ok(r)
}

/// OLS residuals of `y` on `(1, x)`; a constant `x` gives centered `y`.
pub fn ols_residuals(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    if x.is_empty() {
        return Vec::new();
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let raw: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my) - slope * (a - mx))
        .collect();
    // Residuals of an exact linear fit are rounding noise; treat them as ties.
    let scale = y.iter().map(|b| (b - my).abs()).fold(0.0, f64::max);
    let noise = 1e-12 * scale;
    raw.into_iter().map(|r| if r.abs() <= noise { 0.0 } else { r }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcAurocResult {
    /// Pair-weighted mean of per-bin AUROC, before any flip.
    pub value: f64,
    /// `None` for bins without both classes.
    pub per_bin_auroc: Vec<Option<f64>>,
    pub weights: Vec<f64>,
    /// `value < 0.5`, so the reported value is `1 - value`.
    pub flipped: bool,
    pub fallback: bool,
    pub bins: usize,
}

impl LcAurocResult {
    pub fn reported(&self) -> f64 {
        flipped_auroc(self.value)
    }
}

/// Length-controlled AUROC with automatic bin selection.
pub fn lc_auroc(samples: &[EvalSample]) -> Result<LcAurocResult> {
    check_both_classes(samples)?;
    let binning = select_bins(samples)?;
    lc_auroc_with(samples, &binning)
}

/// Length-controlled AUROC with a fixed bin count.
pub fn lc_auroc_fixed(samples: &[EvalSample], bins: usize) -> Result<LcAurocResult> {
    check_both_classes(samples)?;
    let binning = assign_bins(samples, bins)?;
    lc_auroc_with(samples, &binning)
}

fn check_both_classes(samples: &[EvalSample]) -> Result<()> {
    let pos = samples.iter().filter(|s| s.label).count();
    if pos == 0 || pos == samples.len() {
        return Err(Error::OneClassOnly);
    }
    Ok(())
}

pub fn lc_auroc_with(samples: &[EvalSample], binning: &BinningResult) -> Result<LcAurocResult> {
    let bins = binning.bins;
    let mut per_bin = Vec::with_capacity(bins);
    let mut raw_weights = Vec::with_capacity(bins);
    for b in 0..bins {
        let members: Vec<&EvalSample> = samples
            .iter()
            .zip(&binning.assignment)
            .filter(|(_, &a)| a == b)
            .map(|(s, _)| s)
            .collect();
        let pos = members.iter().filter(|s| s.label).count();
        let neg = members.len() - pos;
        if pos == 0 || neg == 0 {
            per_bin.push(None);
            raw_weights.push(0.0);
            continue;
        }
        let x: Vec<f64> = members.iter().map(|s| s.length as f64).collect();
        let y: Vec<f64> = members.iter().map(|s| s.score).collect();
        let labels: Vec<bool> = members.iter().map(|s| s.label).collect();
        let resid = ols_residuals(&x, &y);
        per_bin.push(Some(auroc_of(&resid, &labels)?));
        raw_weights.push((pos * neg) as f64);
    }
    let total: f64 = raw_weights.iter().sum();
    if total == 0.0 {
        return Err(Error::InvalidArgument("no length bin contains both classes".into()));
    }
    let weights: Vec<f64> = raw_weights.iter().map(|w| w / total).collect();
    let value = per_bin
        .iter()
        .zip(&weights)
        .map(|(a, w)| a.unwrap_or(0.0) * w)
        .sum::<f64>();
    Ok(LcAurocResult {
        value,
        per_bin_auroc: per_bin,
        weights,
        flipped: value < 0.5,
        fallback: binning.fallback,
        bins,
    })
}

/// Linear-interpolation percentile on sorted data, `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    Bottom25,
    Top25,
}

/// Mean of the bottom or top quartile.
pub fn cvar(values: &[f64], tail: Tail) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyList);
    }
    let s = sorted_copy(values);
    Ok(cvar_sorted(&s, tail))
}

fn cvar_sorted(s: &[f64], tail: Tail) -> f64 {
    if s.len() < 4 {
        return match tail {
            Tail::Bottom25 => s[0],
            Tail::Top25 => s[s.len() - 1],
        };
    }
    let picked: Vec<f64> = match tail {
        Tail::Bottom25 => {
            let q = percentile_sorted(s, 0.25);
            s.iter().copied().filter(|&v| v <= q).collect()
        }
        Tail::Top25 => {
            let q = percentile_sorted(s, 0.75);
            s.iter().copied().filter(|&v| v >= q).collect()
        }
    };
    picked.iter().sum::<f64>() / picked.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureAggregate {
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    pub iqr: f64,
    pub range: f64,
    pub cvar_bottom25: f64,
    pub cvar_top25: f64,
}

impl FeatureAggregate {
    /// `(name, value)` pairs in a fixed order.
    pub fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("mean", self.mean),
            ("median", self.median),
            ("std", self.std),
            ("iqr", self.iqr),
            ("range", self.range),
            ("cvar_bottom25", self.cvar_bottom25),
            ("cvar_top25", self.cvar_top25),
        ]
    }
}

pub fn robust_stats(values: &[f64]) -> Result<FeatureAggregate> {
    if values.is_empty() {
        return Err(Error::EmptyList);
    }
    let s = sorted_copy(values);
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(FeatureAggregate {
        mean,
        median: percentile_sorted(&s, 0.5),
        std: var.sqrt(),
        iqr: percentile_sorted(&s, 0.75) - percentile_sorted(&s, 0.25),
        range: s[s.len() - 1] - s[0],
        cvar_bottom25: cvar_sorted(&s, Tail::Bottom25),
        cvar_top25: cvar_sorted(&s, Tail::Top25),
    })
}

/// Percentile bootstrap interval at 95%.
///
/// Resample `i` draws from its own ChaCha stream `(seed, i)`. A resample on which
/// the metric fails (for instance a single-class draw) is redrawn from the same
/// stream; after `10 * resamples` total attempts the call gives up.
pub fn bootstrap_ci<F>(metric: F, samples: &[EvalSample], resamples: usize, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&[EvalSample]) -> Result<f64>,
{
    if samples.is_empty() {
        return Err(Error::EmptyList);
    }
    if resamples == 0 {
        return Err(Error::InvalidArgument("resamples must be >= 1".into()));
    }
    let n = samples.len();
    let budget = 10 * resamples;
    let mut attempts = 0;
    let mut stats = Vec::with_capacity(resamples);
    let mut draw = Vec::with_capacity(n);
    for i in 0..resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        loop {
            attempts += 1;
            if attempts > budget {
                return Err(Error::MetricUndefined { attempts: budget });
            }
            draw.clear();
            draw.extend((0..n).map(|_| samples[rng.random_range(0..n)]));
            if let Ok(v) = metric(&draw) {
                if v.is_finite() {
                    stats.push(v);
                    break;
                }
            }
        }
    }
    stats.sort_by(f64::total_cmp);
    Ok((percentile_sorted(&stats, 0.025), percentile_sorted(&stats, 0.975)))
}

/// Spectral features of one (sample, layer, head).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub sample_id: String,
    pub layer: i64,
    pub head: i64,
    pub phi_hat: Option<f64>,
    pub sigma2: Option<f64>,
    pub gap: Option<f64>,
    pub g: Option<f64>,
}

/// Feature prefixes used in aggregate keys.
pub const FEATURE_NAMES: [&str; 4] = ["phi", "sigma2", "gap", "g"];

impl DiagnosticsRecord {
    fn feature(&self, name: &str) -> Option<f64> {
        match name {
            "phi" => self.phi_hat,
            "sigma2" => self.sigma2,
            "gap" => self.gap.or(self.sigma2.map(|s| 1.0 - s)),
            "g" => self.g,
            _ => None,
        }
        .filter(|v| v.is_finite())
    }
}

/// Seven aggregates per feature, keyed `<feature>_<stat>` (e.g. `phi_cvar_top25`).
///
/// Features missing on every record (such as `g` for cross-attention) are omitted.
pub fn aggregate_heads(records: &[DiagnosticsRecord]) -> Result<BTreeMap<String, f64>> {
    if records.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut out = BTreeMap::new();
    for name in FEATURE_NAMES {
        let values: Vec<f64> = records.iter().filter_map(|r| r.feature(name)).collect();
        if values.is_empty() {
            continue;
        }
        let agg = robust_stats(&values)?;
        for (stat, v) in agg.entries() {
            out.insert(format!("{name}_{stat}"), v);
        }
    }
    Ok(out)
}
