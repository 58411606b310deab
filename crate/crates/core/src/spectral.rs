// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bipartite dilation graph, singular spectrum, sweep conductance and the
//! exhaustive conductance oracle.
//!
//! The dilation of an `n_q x n_k` attention matrix `B` is the bipartite graph on
//! `Q_0..Q_{n_q-1}, K_0..K_{n_k-1}` whose edge `Q_i - K_j` carries `B_ij`. Its
//! degree-normalized adjacency is the block matrix `[[0, M], [M^T, 0]]`, so the
//! eigenvalues are `±sigma_i(M)` and the Cheeger inequality ties the conductance
//! of this graph to `1 - sigma_2(M)`.
//!
//! Vertices are indexed queries first: `Q_i -> i`, `K_j -> n_q + j`.

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transport::{normalize, AttentionMatrix, TransportOperator};

/// Above this dimension the iterative solver replaces the dense SVD.
pub const DEFAULT_DENSE_LIMIT: usize = 2048;

/// Largest `n_q + n_k` accepted by [`exact_conductance`].
pub const EXACT_VERTEX_LIMIT: usize = 22;

/// Relative residual target of the iterative solver.
pub const ITERATIVE_TOL: f64 = 1e-8;

/// Weighted bipartite graph built from an attention matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DilationGraph {
    block: DMatrix<f64>,
    vertex_degrees: Vec<f64>,
    total_volume: f64,
}

impl DilationGraph {
    pub fn n_queries(&self) -> usize {
        self.block.nrows()
    }

    pub fn n_keys(&self) -> usize {
        self.block.ncols()
    }

    pub fn n_vertices(&self) -> usize {
        self.block.nrows() + self.block.ncols()
    }

    /// The off-diagonal block `B`; edge `Q_i - K_j` has weight `block[(i, j)]`.
    pub fn block(&self) -> &DMatrix<f64> {
        &self.block
    }

    pub fn vertex_degrees(&self) -> &[f64] {
        &self.vertex_degrees
    }

    pub fn total_volume(&self) -> f64 {
        self.total_volume
    }

    /// Weight between two vertices in the global numbering.
    pub fn weight(&self, a: usize, b: usize) -> f64 {
        let nq = self.n_queries();
        match (a < nq, b < nq) {
            (true, false) => self.block[(a, b - nq)],
            (false, true) => self.block[(b, a - nq)],
            _ => 0.0,
        }
    }

    /// Full symmetric `(n_q + n_k)^2` weight matrix.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        hermitian_dilation(&self.block)
    }

    fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let nq = self.n_queries();
        let nk = self.n_keys();
        let mut adj = vec![Vec::new(); nq + nk];
        for i in 0..nq {
            for j in 0..nk {
                let w = self.block[(i, j)];
                if w != 0.0 {
                    adj[i].push((nq + j, w));
                    adj[nq + j].push((i, w));
                }
            }
        }
        adj
    }
}

pub fn dilation(a: &AttentionMatrix) -> DilationGraph {
    let block = a.values().clone();
    let mut vertex_degrees: Vec<f64> = block.row_iter().map(|r| r.sum()).collect();
    vertex_degrees.extend(block.column_iter().map(|c| c.sum()));
    let total_volume = 2.0 * block.iter().sum::<f64>();
    DilationGraph {
        block,
        vertex_degrees,
        total_volume,
    }
}

/// The symmetric block embedding `[[0, X], [X^T, 0]]`.
pub fn hermitian_dilation(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = x.shape();
    let mut h = DMatrix::zeros(r + c, r + c);
    h.view_mut((0, r), (r, c)).copy_from(x);
    h.view_mut((r, 0), (c, r)).copy_from(&x.transpose());
    h
}

/// Which solver produced a [`SpectralSummary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvdMethod {
    Dense,
    Lanczos,
}

/// Leading singular values of `M` and the second singular vector pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    /// Descending, length `min(k, n_q, n_k)`.
    pub singular_values: Vec<f64>,
    pub sigma2: f64,
    /// `1 - sigma2`, clamped at 0 against rounding above 1.
    pub gap: f64,
    /// Left second singular vector (length `n_q`).
    pub left2: Vec<f64>,
    /// Right second singular vector (length `n_k`).
    pub right2: Vec<f64>,
    pub method: SvdMethod,
    /// Lanczos steps taken; 0 for the dense path.
    pub iterations: usize,
}

impl SpectralSummary {
    pub fn sigma1(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }
}

/// All singular values of a dense matrix, descending.
pub fn dense_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Top-`k` singular triplets of `M`, dense below `dense_limit`, Lanczos above.
pub fn svd_summary(m: &TransportOperator, k: usize, dense_limit: usize) -> Result<SpectralSummary> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be >= 2, got {k}")));
    }
    let v = m.values();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("operator has non-finite entries".into()));
    }
    let (r, c) = v.shape();
    if r.max(c) <= dense_limit {
        Ok(dense_summary(v, k))
    } else {
        lanczos_summary(m, k)
    }
}

fn dense_summary(m: &DMatrix<f64>, k: usize) -> SpectralSummary {
    let (r, c) = m.shape();
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("left vectors requested");
    let vt = svd.v_t.expect("right vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order
        .iter()
        .take(k)
        .map(|&i| svd.singular_values[i])
        .collect();
    let (sigma2, left2, right2) = match order.get(1) {
        Some(&i) => (
            svd.singular_values[i],
            u.column(i).iter().copied().collect(),
            vt.row(i).iter().copied().collect(),
        ),
        None => (0.0, vec![0.0; r], vec![0.0; c]),
    };
    SpectralSummary {
        singular_values,
        sigma2,
        gap: (1.0 - sigma2).max(0.0),
        left2,
        right2,
        method: SvdMethod::Dense,
        iterations: 0,
    }
}

/// Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization.
///
/// When `M` came out of [`normalize`], its top pair is known in closed form
/// (`sqrt(d_q)`, `sqrt(d_k)` with `sigma_1 = 1`); the recurrence then runs on the
/// orthogonal complement so a repeated unit singular value is still resolved.
fn lanczos_summary(op: &TransportOperator, k: usize) -> Result<SpectralSummary> {
    let m = op.values();
    let (r, c) = m.shape();
    let rank_cap = r.min(c);
    let k_eff = k.min(rank_cap);
    let mt = m.transpose();
    let fwd = RowOperator::new(m);
    let bwd = RowOperator::new(&mt);

    let deflated = known_top_pair(op);
    let mut locked_u: Vec<DVector<f64>> = Vec::new();
    let mut locked_v: Vec<DVector<f64>> = Vec::new();
    if let Some((u1, v1)) = &deflated {
        locked_u.push(u1.clone());
        locked_v.push(v1.clone());
    }
    let wanted = k_eff - locked_u.len();
    let space = rank_cap - locked_u.len();
    let max_steps = space.min(10 * r.max(c));

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut us = Basis::new(r);
    let mut vs = Basis::new(c);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let scale = m.norm().max(f64::MIN_POSITIVE);

    let mut v = fresh_vector(c, &mut rng, &locked_v, &vs);
    let mut u_prev: Option<DVector<f64>> = None;
    let mut beta_prev = 0.0;
    let mut steps = 0;
    let mut next_check = wanted.max(8);
    let mut result = None;

    while steps < max_steps {
        let mut u = fwd.apply(&v);
        if let Some(up) = &u_prev {
            u.axpy(-beta_prev, up, 1.0);
        }
        orthogonalize(&mut u, &locked_u);
        us.orthogonalize(&mut u);
        let alpha = u.norm();
        if alpha > 1e-14 * scale {
            u /= alpha;
        } else {
            u = fresh_vector(r, &mut rng, &locked_u, &us);
        }
        let mut v_next = bwd.apply(&u);
        v_next.axpy(-alpha, &v, 1.0);
        orthogonalize(&mut v_next, &locked_v);
        vs.push(&v);
        vs.orthogonalize(&mut v_next);
        let mut beta = v_next.norm();
        us.push(&u);
        alphas.push(alpha);
        steps += 1;

        let exhausted = steps >= max_steps;
        if beta <= 1e-14 * scale {
            // Invariant subspace: restart the recurrence from a fresh direction.
            beta = 0.0;
            if !exhausted {
                v_next = fresh_vector(c, &mut rng, &locked_v, &vs);
            }
        } else {
            v_next /= beta;
        }
        betas.push(beta);

        if steps >= next_check || exhausted || (beta == 0.0 && steps >= wanted) {
            next_check = steps + (steps / 4).max(8);
            let ritz = ritz_triplets(m, &mt, &us, &vs, &alphas, &betas, wanted.max(1));
            let sigma_ref = deflated.as_ref().map_or(ritz.values[0], |_| 1.0).max(scale * 1e-300);
            let worst = ritz.residuals.iter().take(wanted).copied().fold(0.0, f64::max);
            if worst / sigma_ref <= ITERATIVE_TOL || exhausted {
                if worst / sigma_ref > ITERATIVE_TOL {
                    return Err(Error::ConvergenceFailure { iterations: steps });
                }
                result = Some(ritz);
                break;
            }
        }
        u_prev = Some(u);
        beta_prev = beta;
        v = v_next;
    }

    let ritz = match result {
        Some(r) => r,
        None if wanted == 0 => RitzSet::default(),
        None => return Err(Error::ConvergenceFailure { iterations: steps }),
    };

    let mut values: Vec<f64> = Vec::with_capacity(k_eff);
    let mut lefts: Vec<DVector<f64>> = Vec::new();
    let mut rights: Vec<DVector<f64>> = Vec::new();
    if deflated.is_some() {
        values.push(1.0);
        lefts.push(locked_u[0].clone());
        rights.push(locked_v[0].clone());
    }
    for i in 0..wanted.min(ritz.values.len()) {
        values.push(ritz.values[i]);
        lefts.push(ritz.left[i].clone());
        rights.push(ritz.right[i].clone());
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let (sigma2, left2, right2) = match order.get(1) {
        Some(&i) => (
            values[i],
            lefts[i].iter().copied().collect(),
            rights[i].iter().copied().collect(),
        ),
        None => (0.0, vec![0.0; r], vec![0.0; c]),
    };
    Ok(SpectralSummary {
        singular_values,
        sigma2,
        gap: (1.0 - sigma2).max(0.0),
        left2,
        right2,
        method: SvdMethod::Lanczos,
        iterations: steps,
    })
}

/// Matrix-vector product over the normal-range entries.
///
/// Subnormal entries (far tails of decaying heads) are dropped: their share of any
/// product is below 1e-300 and arithmetic on them is very slow.
enum RowOperator<'a> {
    Dense(&'a DMatrix<f64>),
    Sparse {
        offsets: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
    },
}

impl<'a> RowOperator<'a> {
    fn new(m: &'a DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        let nnz = m.iter().filter(|x| x.is_normal()).count();
        if nnz == r * c {
            return RowOperator::Dense(m);
        }
        let mut offsets = Vec::with_capacity(r + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        offsets.push(0);
        for i in 0..r {
            for j in 0..c {
                let x = m[(i, j)];
                if x.is_normal() {
                    cols.push(j);
                    vals.push(x);
                }
            }
            offsets.push(cols.len());
        }
        RowOperator::Sparse { offsets, cols, vals }
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            RowOperator::Dense(m) => *m * x,
            RowOperator::Sparse { offsets, cols, vals } => DVector::from_iterator(
                offsets.len() - 1,
                offsets.windows(2).map(|w| {
                    cols[w[0]..w[1]]
                        .iter()
                        .zip(&vals[w[0]..w[1]])
                        .map(|(&j, &a)| a * x[j])
                        .sum()
                }),
            ),
        }
    }
}

#[derive(Default)]
struct RitzSet {
    values: Vec<f64>,
    left: Vec<DVector<f64>>,
    right: Vec<DVector<f64>>,
    residuals: Vec<f64>,
}

fn ritz_triplets(
    m: &DMatrix<f64>,
    mt: &DMatrix<f64>,
    us: &Basis,
    vs: &Basis,
    alphas: &[f64],
    betas: &[f64],
    wanted: usize,
) -> RitzSet {
    let steps = alphas.len();
    let mut bidiag = DMatrix::zeros(steps, steps);
    for i in 0..steps {
        bidiag[(i, i)] = alphas[i];
        if i + 1 < steps {
            bidiag[(i, i + 1)] = betas[i];
        }
    }
    let svd = bidiag.svd(true, true);
    let p = svd.u.expect("requested");
    let qt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..steps).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut set = RitzSet::default();
    for &idx in order.iter().take(wanted) {
        let sigma = svd.singular_values[idx];
        let mut left = us.view() * p.column(idx);
        let mut right = vs.view() * qt.row(idx).transpose();
        let ln = left.norm();
        let rn = right.norm();
        if ln > 0.0 {
            left /= ln;
        }
        if rn > 0.0 {
            right /= rn;
        }
        let res_a = (m * &right - &left * sigma).norm();
        let res_b = (mt * &left - &right * sigma).norm();
        set.values.push(sigma);
        set.left.push(left);
        set.right.push(right);
        set.residuals.push(res_a.max(res_b));
    }
    set
}

fn known_top_pair(op: &TransportOperator) -> Option<(DVector<f64>, DVector<f64>)> {
    let d = op.degrees();
    let (r, c) = op.shape();
    if d.d_q.len() != r || d.d_k.len() != c {
        return None;
    }
    let mut u = DVector::from_iterator(r, d.d_q.iter().map(|x| x.max(0.0).sqrt()));
    let mut v = DVector::from_iterator(c, d.d_k.iter().map(|x| x.max(0.0).sqrt()));
    let (un, vn) = (u.norm(), v.norm());
    if un == 0.0 || vn == 0.0 {
        return None;
    }
    u /= un;
    v /= vn;
    let m = op.values();
    let fwd = (m * &v - &u).norm();
    let bwd = (m.transpose() * &u - &v).norm();
    (fwd.max(bwd) <= 1e-10).then_some((u, v))
}

fn orthogonalize(x: &mut DVector<f64>, basis: &[DVector<f64>]) {
    // Two passes keep the basis orthogonal to working precision.
    for _ in 0..2 {
        for b in basis {
            let coef = b.dot(x);
            x.axpy(-coef, b, 1.0);
        }
    }
}

/// Lanczos vectors stored column-major in one buffer, so projections are two matrix-vector products.
struct Basis {
    dim: usize,
    data: Vec<f64>,
}

impl Basis {
    fn new(dim: usize) -> Self {
        Basis { dim, data: Vec::new() }
    }

    fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    fn push(&mut self, x: &DVector<f64>) {
        self.data.extend_from_slice(x.as_slice());
    }

    fn view(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.dim, self.len())
    }

    fn orthogonalize(&self, x: &mut DVector<f64>) {
        if self.len() == 0 {
            return;
        }
        let b = self.view();
        for _ in 0..2 {
            let coef = b.tr_mul(x);
            x.gemv(-1.0, &b, &coef, 1.0);
        }
    }
}

fn fresh_vector(n: usize, rng: &mut ChaCha8Rng, locked: &[DVector<f64>], basis: &Basis) -> DVector<f64> {
    for _ in 0..16 {
        let mut x = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        orthogonalize(&mut x, locked);
        basis.orthogonalize(&mut x);
        let nx = x.norm();
        if nx > 1e-8 {
            return x / nx;
        }
    }
    DVector::zeros(n)
}

/// A vertex subset of the dilation with its cut statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutResult {
    pub members: Vec<bool>,
    pub cut_weight: f64,
    pub vol_s: f64,
    pub vol_comp: f64,
    pub phi: f64,
}

impl CutResult {
    /// Number of vertices on the member side.
    pub fn size(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }
}

pub fn evaluate_cut(g: &DilationGraph, members: &[bool]) -> Result<CutResult> {
    let n = g.n_vertices();
    if members.len() != n {
        return Err(Error::LengthMismatch {
            left: members.len(),
            right: n,
        });
    }
    let inside = members.iter().filter(|&&m| m).count();
    if inside == 0 || inside == n {
        return Err(Error::TrivialCut);
    }
    let nq = g.n_queries();
    let mut cut_weight = 0.0;
    for i in 0..nq {
        for j in 0..g.n_keys() {
            if members[i] != members[nq + j] {
                cut_weight += g.block[(i, j)];
            }
        }
    }
    let mut vol_s = 0.0;
    let mut vol_comp = 0.0;
    for (d, &m) in g.vertex_degrees.iter().zip(members) {
        if m {
            vol_s += d;
        } else {
            vol_comp += d;
        }
    }
    let denom = vol_s.min(vol_comp);
    if denom <= 0.0 {
        return Err(Error::ZeroVolumeSide);
    }
    Ok(CutResult {
        members: members.to_vec(),
        cut_weight,
        vol_s,
        vol_comp,
        phi: cut_weight / denom,
    })
}

/// Options for [`sweep_conductance_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Divide singular-vector entries by `sqrt(degree)` before sorting.
    pub degree_scaled: bool,
    pub dense_limit: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            degree_scaled: true,
            dense_limit: DEFAULT_DENSE_LIMIT,
        }
    }
}

/// Sweep estimate together with the spectrum it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub phi_hat: f64,
    pub cut: CutResult,
    pub spectrum: SpectralSummary,
}

pub fn sweep_conductance(a: &AttentionMatrix) -> Result<(f64, CutResult)> {
    let r = sweep_conductance_with(a, SweepOptions::default())?;
    Ok((r.phi_hat, r.cut))
}

pub fn sweep_conductance_with(a: &AttentionMatrix, opts: SweepOptions) -> Result<SweepResult> {
    let m = normalize(a)?;
    let spectrum = svd_summary(&m, 2, opts.dense_limit)?;
    let graph = dilation(a);
    let (phi_hat, cut) = sweep_on(&graph, &m, &spectrum, opts.degree_scaled)?;
    Ok(SweepResult {
        phi_hat,
        cut,
        spectrum,
    })
}

/// Threshold sweep along a precomputed second singular pair.
pub fn sweep_on(
    graph: &DilationGraph,
    m: &TransportOperator,
    spectrum: &SpectralSummary,
    degree_scaled: bool,
) -> Result<(f64, CutResult)> {
    let n = graph.n_vertices();
    if n < 2 {
        return Err(Error::TrivialCut);
    }
    let d = m.degrees();
    let mut keys: Vec<f64> = Vec::with_capacity(n);
    for (i, &x) in spectrum.left2.iter().enumerate() {
        keys.push(if degree_scaled { x / d.d_q[i].sqrt() } else { x });
    }
    for (j, &x) in spectrum.right2.iter().enumerate() {
        keys.push(if degree_scaled { x / d.d_k[j].sqrt() } else { x });
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Stable on the vertex index: queries before keys on equal values.
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));

    let adj = graph.adjacency();
    let degrees = graph.vertex_degrees();
    let total = graph.total_volume();
    let mut in_s = vec![false; n];
    let mut cut = 0.0;
    let mut vol = 0.0;
    let mut best: Option<(f64, usize)> = None;
    for (pos, &x) in order.iter().take(n - 1).enumerate() {
        for &(y, w) in &adj[x] {
            if in_s[y] {
                cut -= w;
            } else {
                cut += w;
            }
        }
        in_s[x] = true;
        vol += degrees[x];
        let denom = vol.min(total - vol);
        if denom <= 0.0 {
            continue;
        }
        let phi = cut.max(0.0) / denom;
        if best.is_none_or(|(b, _)| phi < b) {
            best = Some((phi, pos));
        }
    }
    let (_, pos) = best.ok_or(Error::ZeroVolumeSide)?;
    let mut members = vec![false; n];
    for &x in order.iter().take(pos + 1) {
        members[x] = true;
    }
    let exact = evaluate_cut(graph, &members)?;
    Ok((exact.phi, exact))
}

/// Exhaustive minimum conductance over all non-trivial bipartitions.
pub fn exact_conductance(a: &AttentionMatrix) -> Result<(f64, CutResult)> {
    let g = dilation(a);
    let n = g.n_vertices();
    if n > EXACT_VERTEX_LIMIT {
        return Err(Error::TooLarge {
            vertices: n,
            limit: EXACT_VERTEX_LIMIT,
        });
    }
    if n < 2 {
        return Err(Error::TooSmall);
    }
    let adj = g.adjacency();
    let degrees = g.vertex_degrees();
    let total = g.total_volume();
    // The last vertex always stays outside S, so each bipartition is visited once.
    // Gray-code order flips exactly one vertex per step.
    let free = n - 1;
    let mut mask: u64 = 0;
    let mut cut = 0.0;
    let mut vol = 0.0;
    let mut best: Option<(f64, u64)> = None;
    for step in 1u64..(1u64 << free) {
        let x = step.trailing_zeros() as usize;
        let adding = mask & (1 << x) == 0;
        for &(y, w) in &adj[x] {
            let y_in = mask & (1 << y) != 0;
            if adding == y_in {
                cut -= w;
            } else {
                cut += w;
            }
        }
        mask ^= 1 << x;
        if adding {
            vol += degrees[x];
        } else {
            vol -= degrees[x];
        }
        let denom = vol.min(total - vol);
        if denom <= 1e-300 {
            continue;
        }
        let phi = cut.max(0.0) / denom;
        if best.is_none_or(|(b, _)| phi < b) {
            best = Some((phi, mask));
        }
    }
    let (_, mask) = best.ok_or(Error::TooSmall)?;
    let members: Vec<bool> = (0..n).map(|v| mask & (1 << v) != 0).collect();
    let exact = evaluate_cut(&g, &members)?;
    Ok((exact.phi, exact))
}

/// Which sides of `phi^2 / 2 <= 1 - sigma_2 <= 2 phi` hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheegerCheck {
    pub lower_ok: bool,
    pub upper_ok: bool,
}

pub fn cheeger_check(phi: f64, sigma2: f64) -> CheegerCheck {
    let gap = 1.0 - sigma2;
    CheegerCheck {
        lower_ok: phi * phi / 2.0 <= gap + 1e-9,
        upper_ok: gap <= 2.0 * phi + 1e-9,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{validate, MaskKind};

    fn att(rows: &[&[f64]]) -> AttentionMatrix {
        let v: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        crate::transport::validate_rows(&v, MaskKind::None).unwrap()
    }

    fn uniform_causal(n: usize) -> AttentionMatrix {
        let b = DMatrix::from_fn(n, n, |i, j| if j <= i { 1.0 / (i + 1) as f64 } else { 0.0 });
        validate(b, MaskKind::Causal).unwrap()
    }

    #[test]
    fn dilation_uniform_causal_two() {
        let g = dilation(&uniform_causal(2));
        assert_eq!(g.n_vertices(), 4);
        assert_eq!(g.weight(0, 2), 1.0);
        assert_eq!(g.weight(1, 2), 0.5);
        assert_eq!(g.weight(1, 3), 0.5);
        assert_eq!(g.weight(0, 3), 0.0);
        assert_eq!(g.weight(2, 1), 0.5);
        assert_eq!(g.total_volume(), 4.0);
        let w = g.weight_matrix();
        assert_eq!(w, w.transpose());
        assert_eq!(w[(0, 1)], 0.0);
    }

    #[test]
    fn dilation_rectangular_shape() {
        let g = dilation(&att(&[&[0.2, 0.3, 0.5], &[1.0, 0.0, 0.0]]));
        assert_eq!(g.n_vertices(), 5);
        assert_eq!(g.vertex_degrees(), &[1.0, 1.0, 1.2, 0.3, 0.5]);
    }

    #[test]
    fn summary_identity() {
        let m = normalize(&att(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
        ]))
        .unwrap();
        let s = svd_summary(&m, 4, DEFAULT_DENSE_LIMIT).unwrap();
        for v in &s.singular_values {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(s.gap.abs() < 1e-14);
    }

    #[test]
    fn summary_two_by_two() {
        let m = normalize(&att(&[&[0.5, 0.5], &[1.0, 0.0]])).unwrap();
        let s = svd_summary(&m, 2, DEFAULT_DENSE_LIMIT).unwrap();
        assert!((s.singular_values[0] - 1.0).abs() < 1e-12);
        assert!((s.sigma2 - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!(matches!(svd_summary(&m, 1, 10), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn lanczos_matches_dense_on_small_operator() {
        let a = uniform_causal(40);
        let m = normalize(&a).unwrap();
        let dense = svd_summary(&m, 5, DEFAULT_DENSE_LIMIT).unwrap();
        let iter = svd_summary(&m, 5, 10).unwrap();
        assert_eq!(iter.method, SvdMethod::Lanczos);
        for (x, y) in dense.singular_values.iter().zip(&iter.singular_values) {
            assert!((x - y).abs() < 1e-7, "{x} vs {y}");
        }
    }

    #[test]
    fn lanczos_matches_dense_without_zeros() {
        let b = DMatrix::from_fn(30, 24, |i, j| 1.0 + ((i * 7 + j * 3) % 11) as f64);
        let m = normalize(&validate(b, MaskKind::None).unwrap()).unwrap();
        let dense = svd_summary(&m, 4, DEFAULT_DENSE_LIMIT).unwrap();
        let iter = svd_summary(&m, 4, 10).unwrap();
        for (x, y) in dense.singular_values.iter().zip(&iter.singular_values) {
            assert!((x - y).abs() < 1e-7, "{x} vs {y}");
        }
    }

    #[test]
    fn lanczos_resolves_repeated_unit_value() {
        // Two disconnected blocks: sigma_1 = sigma_2 = 1.
        let mut b = DMatrix::zeros(6, 6);
        for i in 0..3 {
            for j in 0..3 {
                b[(i, j)] = 1.0 / 3.0;
                b[(i + 3, j + 3)] = 1.0 / 3.0;
            }
        }
        let m = normalize(&validate(b, MaskKind::None).unwrap()).unwrap();
        let s = svd_summary(&m, 2, 1).unwrap();
        assert!((s.sigma2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cut_examples() {
        let g = dilation(&uniform_causal(2));
        let c = evaluate_cut(&g, &[true, false, true, false]).unwrap();
        assert_eq!(c.cut_weight, 0.5);
        assert_eq!(c.vol_s, 2.5);
        assert_eq!(c.vol_comp, 1.5);
        assert!((c.phi - 1.0 / 3.0).abs() < 1e-15);

        let g3 = dilation(&uniform_causal(3));
        let c = evaluate_cut(&g3, &[true, false, false, true, false, false]).unwrap();
        assert!((c.cut_weight - 5.0 / 6.0).abs() < 1e-15);
        assert!((c.vol_s - 17.0 / 6.0).abs() < 1e-15);
        assert!((c.phi - 5.0 / 17.0).abs() < 1e-15);

        assert!(matches!(evaluate_cut(&g, &[true; 4]), Err(Error::TrivialCut)));
        assert!(matches!(evaluate_cut(&g, &[false; 4]), Err(Error::TrivialCut)));
    }

    #[test]
    fn cut_zero_volume_side() {
        let a = validate(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), MaskKind::None).unwrap();
        let g = dilation(&a);
        assert!(matches!(
            evaluate_cut(&g, &[true, true, false]),
            Err(Error::ZeroVolumeSide)
        ));
    }

    #[test]
    fn sweep_uniform_causal_two() {
        let (phi, cut) = sweep_conductance(&uniform_causal(2)).unwrap();
        assert!((phi - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(cut.phi, phi);
    }

    #[test]
    fn sweep_diagonal_finds_a_component() {
        // Each Q_i - K_i pair is its own component, so sigma_2 = 1 and the
        // sweep must land on a zero-weight cut.
        let a = validate(DMatrix::identity(5, 5), MaskKind::Causal).unwrap();
        let r = sweep_conductance_with(&a, SweepOptions::default()).unwrap();
        assert!((r.spectrum.sigma2 - 1.0).abs() < 1e-12);
        assert_eq!(r.phi_hat, 0.0);
        let (exact, _) = exact_conductance(&a).unwrap();
        assert_eq!(exact, 0.0);
    }

    #[test]
    fn single_component_pair_has_unit_conductance() {
        let (phi, _) = sweep_conductance(&att(&[&[1.0]])).unwrap();
        assert_eq!(phi, 1.0);
    }

    #[test]
    fn exact_goldens() {
        // At n = 4 the optimum {Q0, Q1, K0} is not a temporal prefix.
        for (n, want) in [(2usize, 1.0 / 3.0), (3, 5.0 / 17.0), (4, 13.0 / 47.0)] {
            let (phi, cut) = exact_conductance(&uniform_causal(n)).unwrap();
            assert!((phi - want).abs() < 1e-12, "n={n}: {phi}");
            assert!((cut.phi - want).abs() < 1e-12);
        }
        let (_, cut) = exact_conductance(&uniform_causal(4)).unwrap();
        assert_eq!(cut.members, vec![true, true, false, false, true, false, false, false]);
    }

    #[test]
    fn exact_degenerate_inputs() {
        let one = att(&[&[1.0]]);
        let (phi, _) = exact_conductance(&one).unwrap();
        assert_eq!(phi, 1.0);
        let zero = validate(DMatrix::zeros(2, 2), MaskKind::None).unwrap();
        assert!(matches!(exact_conductance(&zero), Err(Error::TooSmall)));
        let big = validate(DMatrix::from_element(12, 12, 1.0 / 12.0), MaskKind::None).unwrap();
        assert!(matches!(exact_conductance(&big), Err(Error::TooLarge { vertices: 24, .. })));
    }

    #[test]
    fn cheeger_examples() {
        let m = normalize(&uniform_causal(2)).unwrap();
        let s = svd_summary(&m, 2, DEFAULT_DENSE_LIMIT).unwrap();
        let c = cheeger_check(1.0 / 3.0, s.sigma2);
        assert!(c.lower_ok && c.upper_ok);
        assert_eq!(
            cheeger_check(0.0, 1.0),
            CheegerCheck {
                lower_ok: true,
                upper_ok: true
            }
        );
        assert!(!cheeger_check(1.0, 1.0).lower_ok);
    }

    #[test]
    fn hermitian_dilation_spectrum() {
        let x = DMatrix::from_row_slice(2, 3, &[0.3, 0.1, 0.7, 0.2, 0.9, 0.4]);
        let sv = dense_singular_values(&x);
        let mut eig: Vec<f64> = hermitian_dilation(&x).symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        assert!((eig[0] - sv[0]).abs() < 1e-12);
        assert!((eig[1] - sv[1]).abs() < 1e-12);
        assert!(eig[2].abs() < 1e-12);
        assert!((eig[3] + sv[1]).abs() < 1e-12);
        assert!((eig[4] + sv[0]).abs() < 1e-12);
    }
}
