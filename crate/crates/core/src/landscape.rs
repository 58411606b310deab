// SPDX-License-Identifier: MIT OR Apache-2.0

//! Canonical causal attention families and their temporal-cut conductance landscapes.
//!
//! The temporal cut `S_t = {Q_0..Q_{t-1}, K_0..K_{t-1}}` splits the dilation by
//! position. For uniform causal attention the cut weight and volume have closed
//! forms in harmonic numbers, which gives a conductance floor of 1/5 for every
//! `n >= 2`. Window attention instead collapses as `w / (n - t)`.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transport::{validate, AttentionMatrix, MaskKind};

/// The Cheeger floor for uniform causal attention.
pub const UNIFORM_CAUSAL_FLOOR: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CanonicalKind {
    UniformCausal,
    Window { w: usize },
    Diagonal,
    ExpDecay { alpha: f64 },
}

/// A canonical attention family at a given sequence length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalSpec {
    #[serde(flatten)]
    pub kind: CanonicalKind,
    pub n: usize,
}

impl CanonicalSpec {
    pub fn uniform_causal(n: usize) -> Self {
        CanonicalSpec {
            kind: CanonicalKind::UniformCausal,
            n,
        }
    }

    pub fn window(n: usize, w: usize) -> Self {
        CanonicalSpec {
            kind: CanonicalKind::Window { w },
            n,
        }
    }

    pub fn diagonal(n: usize) -> Self {
        CanonicalSpec {
            kind: CanonicalKind::Diagonal,
            n,
        }
    }

    pub fn exp_decay(n: usize, alpha: f64) -> Self {
        CanonicalSpec {
            kind: CanonicalKind::ExpDecay { alpha },
            n,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be >= 1".into()));
        }
        match self.kind {
            CanonicalKind::Window { w: 0 } => {
                Err(Error::InvalidArgument("window width must be >= 1".into()))
            }
            CanonicalKind::ExpDecay { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(Error::InvalidArgument(format!("alpha must be > 0, got {alpha}")))
            }
            _ => Ok(()),
        }
    }

    /// Short label such as `uniform_causal_n100` or `window5_n100`.
    pub fn label(&self) -> String {
        match self.kind {
            CanonicalKind::UniformCausal => format!("uniform_causal_n{}", self.n),
            CanonicalKind::Window { w } => format!("window{w}_n{}", self.n),
            CanonicalKind::Diagonal => format!("diagonal_n{}", self.n),
            CanonicalKind::ExpDecay { alpha } => format!("exp_decay{alpha}_n{}", self.n),
        }
    }

    pub fn mask(&self) -> MaskKind {
        match self.kind {
            CanonicalKind::Window { w } => MaskKind::Window(w),
            _ => MaskKind::Causal,
        }
    }
}

impl std::str::FromStr for CanonicalSpec {
    type Err = Error;

    /// Parses `uniform:N`, `window:W:N`, `diagonal:N`, `exp:ALPHA:N`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::Parse(format!("bad canonical spec `{s}`"));
        let num = |x: &str| x.parse::<usize>().map_err(|_| bad());
        let spec = match parts.as_slice() {
            [k, n] if matches!(*k, "uniform" | "uniform_causal" | "uc") => {
                CanonicalSpec::uniform_causal(num(n)?)
            }
            [k, n] if matches!(*k, "diagonal" | "diag") => CanonicalSpec::diagonal(num(n)?),
            [k, w, n] if matches!(*k, "window" | "win") => CanonicalSpec::window(num(n)?, num(w)?),
            [k, a, n] if matches!(*k, "exp" | "exp_decay") => {
                CanonicalSpec::exp_decay(num(n)?, a.parse().map_err(|_| bad())?)
            }
            _ => return Err(bad()),
        };
        spec.check()?;
        Ok(spec)
    }
}

pub fn generate(spec: &CanonicalSpec) -> Result<AttentionMatrix> {
    spec.check()?;
    let n = spec.n;
    let b = match spec.kind {
        CanonicalKind::UniformCausal => {
            DMatrix::from_fn(n, n, |i, j| if j <= i { 1.0 / (i + 1) as f64 } else { 0.0 })
        }
        CanonicalKind::Window { w } => DMatrix::from_fn(n, n, |i, j| {
            if j <= i && j + w > i {
                1.0 / w.min(i + 1) as f64
            } else {
                0.0
            }
        }),
        CanonicalKind::Diagonal => DMatrix::identity(n, n),
        CanonicalKind::ExpDecay { alpha } => {
            let mut b = DMatrix::from_fn(n, n, |i, j| {
                if j <= i {
                    (-alpha * (i - j) as f64).exp()
                } else {
                    0.0
                }
            });
            for mut row in b.row_iter_mut() {
                let s = row.sum();
                row /= s;
            }
            b
        }
    };
    validate(b, spec.mask())
}

/// `H_n = sum_{k=1..n} 1/k`, accumulated smallest terms first.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).rev().map(|k| 1.0 / k as f64).sum()
}

/// All of `H_0..=H_n`; used where a whole landscape needs them.
fn harmonic_table(n: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(n + 1);
    h.push(0.0);
    // Running prefix sums carry at most ~n ulps of error, well under 1e-10 here.
    let mut acc = 0.0;
    for k in 1..=n {
        acc += 1.0 / k as f64;
        h.push(acc);
    }
    h
}

/// `(cut(S_t), vol(S_t)) = (t (H_n - H_t), t (2 + H_n - H_t))` for uniform causal attention.
pub fn closed_form_cut_vol(n: usize, t: usize) -> Result<(f64, f64)> {
    if t > n {
        return Err(Error::OutOfRange(format!("t = {t} exceeds n = {n}")));
    }
    let u = tail_harmonic(n, t);
    let t = t as f64;
    Ok((t * u, t * (2.0 + u)))
}

// H_n - H_t summed directly, without cancellation.
fn tail_harmonic(n: usize, t: usize) -> f64 {
    ((t + 1)..=n).rev().map(|k| 1.0 / k as f64).sum()
}

/// Conductance of the temporal cut `S_t` of uniform causal attention, `0 < t < n`.
pub fn closed_form_phi_uc(n: usize, t: usize) -> Result<f64> {
    if t == 0 || t >= n {
        return Err(Error::OutOfRange(format!("need 0 < t < n, got t = {t}, n = {n}")));
    }
    let (cut, vol) = closed_form_cut_vol(n, t)?;
    let total = 2.0 * n as f64;
    Ok(cut / vol.min(total - vol))
}

/// The whole closed-form landscape `t = 1..n-1`, in O(n).
pub fn closed_form_landscape(n: usize) -> Result<LandscapeCurve> {
    if n < 2 {
        return Err(Error::OutOfRange(format!("need n >= 2, got {n}")));
    }
    let h = harmonic_table(n);
    let total = 2.0 * n as f64;
    let points = (1..n)
        .map(|t| {
            let u = h[n] - h[t];
            let tf = t as f64;
            let (cut, vol) = (tf * u, tf * (2.0 + u));
            CurvePoint {
                t,
                phi: Some(cut / vol.min(total - vol)),
                disconnected: false,
            }
        })
        .collect();
    LandscapeCurve::from_points(n, points)
}

/// Lower bound `u / (2 + u)` with `u = H_n - H_t`.
pub fn functional_lower_bound(n: usize, t: usize) -> f64 {
    let u = tail_harmonic(n, t);
    u / (2.0 + u)
}

/// `1 / (2 ln n + 2)`.
pub fn asymptotic_lower_bound(n: usize) -> f64 {
    1.0 / (2.0 * (n as f64).ln() + 2.0)
}

/// `w / (n - t)`, the window-attention ceiling on `phi(S_t)`.
pub fn window_bound(n: usize, w: usize, t: usize) -> Result<f64> {
    if t == 0 || t >= n || w == 0 {
        return Err(Error::OutOfRange(format!(
            "need 0 < t < n and w >= 1, got n = {n}, w = {w}, t = {t}"
        )));
    }
    Ok(w as f64 / (n - t) as f64)
}

/// Conductance of one temporal cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: usize,
    /// `None` when one side of the cut has zero volume.
    pub phi: Option<f64>,
    /// The cut severs no edge: the two sides are disconnected.
    pub disconnected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeCurve {
    pub n: usize,
    pub points: Vec<CurvePoint>,
    pub t_star: usize,
    pub phi_min: f64,
    pub floor_pierced: bool,
}

impl LandscapeCurve {
    fn from_points(n: usize, points: Vec<CurvePoint>) -> Result<Self> {
        let mut best: Option<(usize, f64)> = None;
        for p in &points {
            if let Some(phi) = p.phi {
                // Strict `<` keeps the smallest t on ties.
                if best.is_none_or(|(_, b)| phi < b) {
                    best = Some((p.t, phi));
                }
            }
        }
        let (t_star, phi_min) = best.ok_or(Error::AllSkipped)?;
        Ok(LandscapeCurve {
            n,
            points,
            t_star,
            phi_min,
            floor_pierced: phi_min < UNIFORM_CAUSAL_FLOOR,
        })
    }

    pub fn t_values(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.t).collect()
    }

    /// Conductances with skipped cuts as NaN.
    pub fn phi_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.phi.unwrap_or(f64::NAN)).collect()
    }

    pub fn t_star_over_n(&self) -> f64 {
        self.t_star as f64 / self.n as f64
    }

    pub fn any_disconnected(&self) -> bool {
        self.points.iter().any(|p| p.disconnected)
    }

    /// Writes `t,t_over_n,phi`; skipped cuts get an empty `phi` field.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "t_over_n", "phi"])?;
        for p in &self.points {
            let phi = p.phi.map(|v| format!("{v:.17e}")).unwrap_or_default();
            w.write_record([
                p.t.to_string(),
                format!("{:.17e}", p.t as f64 / self.n as f64),
                phi,
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Exact conductance of every temporal cut `S_t`, `t = 1..n-1`.
///
/// Block sums come from a 2-D prefix table, so the whole curve costs O(n^2).
pub fn temporal_sweep(a: &AttentionMatrix) -> Result<LandscapeCurve> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.n_queries(),
            cols: a.n_keys(),
        });
    }
    let n = a.n_queries();
    if n < 2 {
        return Err(Error::OutOfRange(format!("need n >= 2, got {n}")));
    }
    let b = a.values();
    // prefix[(i, j)] = sum of B over rows < i and columns < j.
    let mut prefix = DMatrix::<f64>::zeros(n + 1, n + 1);
    // Same layout, counting nonzero entries; exact, so disconnection is never a rounding call.
    let mut support = DMatrix::<u32>::zeros(n + 1, n + 1);
    for i in 0..n {
        let mut row_acc = 0.0;
        let mut row_nnz = 0u32;
        for j in 0..n {
            row_acc += b[(i, j)];
            row_nnz += u32::from(b[(i, j)] != 0.0);
            prefix[(i + 1, j + 1)] = prefix[(i, j + 1)] + row_acc;
            support[(i + 1, j + 1)] = support[(i, j + 1)] + row_nnz;
        }
    }
    let d_q: Vec<f64> = b.row_iter().map(|r| r.sum()).collect();
    let d_k: Vec<f64> = b.column_iter().map(|c| c.sum()).collect();
    let total = 2.0 * prefix[(n, n)];

    let mut vol = 0.0;
    let mut points = Vec::with_capacity(n - 1);
    for t in 1..n {
        vol += d_q[t - 1] + d_k[t - 1];
        let inner = prefix[(t, t)];
        // Q_{<t} to K_{>=t} plus Q_{>=t} to K_{<t}.
        let upper = prefix[(t, n)] - inner;
        let lower = prefix[(n, t)] - inner;
        let crossing = support[(t, n)] + support[(n, t)] - 2 * support[(t, t)];
        let cut = if crossing == 0 { 0.0 } else { (upper + lower).max(0.0) };
        let denom = vol.min(total - vol);
        let point = if denom > 0.0 {
            CurvePoint {
                t,
                phi: Some(cut / denom),
                disconnected: crossing == 0,
            }
        } else {
            CurvePoint {
                t,
                phi: None,
                disconnected: false,
            }
        };
        points.push(point);
    }
    LandscapeCurve::from_points(n, points)
}

/// Fraction of values strictly below `floor`.
pub fn floor_fraction(minima: &[f64], floor: f64) -> Result<f64> {
    if minima.is_empty() {
        return Err(Error::EmptyList);
    }
    let below = minima.iter().filter(|&&m| m < floor).count();
    Ok(below as f64 / minima.len() as f64)
}
