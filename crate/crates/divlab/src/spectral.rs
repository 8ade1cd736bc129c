//! Eigenvalues and traces of symmetric operators.
//!
//! Three trace routes are provided and cross-checked against each other:
//! dense repeated squaring, an exact sum over closed signed prime walks,
//! and a Rademacher-probe (Hutchinson) estimate. Extreme eigenvalues come
//! from a Lanczos recurrence with full reorthogonalization.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::divgraph::{apply_into, edge_weight, OperatorSpec, SupportMask, DENSE_CAPACITY};
use crate::error::{capacity, param, DivlabError, Result};

/// Iteration cap of the Lanczos recurrence.
pub const MAX_KRYLOV_ITERATIONS: usize = 500;

/// Enumeration budget `|𝐏|^{2k}·2^{2k}` for [`trace_walk_sum`].
pub const WALK_SUM_BUDGET: f64 = 1e8;

/// A real symmetric linear operator given by its action on vectors.
pub trait SymOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymOp for OperatorSpec {
    fn dim(&self) -> usize {
        OperatorSpec::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        apply_into(self, x, y);
    }
}

impl SymOp for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            // Column-major storage: the matrix is symmetric, so column i is row i.
            let col = self.column(i);
            let mut acc = 0.0;
            for j in 0..n {
                acc += col[j] * x[j];
            }
            *yi = acc;
        });
    }
}

/// A diagonal operator.
#[derive(Clone, Debug)]
pub struct DiagonalOp(pub Vec<f64>);

impl SymOp for DiagonalOp {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), d) in y.iter_mut().zip(x).zip(&self.0) {
            *yi = d * xi;
        }
    }
}

/// Output of [`extreme_eigenvalues`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralResult {
    /// Eigenvalue estimates sorted by decreasing absolute value.
    pub eigenvalues: Vec<f64>,
    /// Residual norms `‖Av − λv‖₂` of the Ritz pairs.
    pub residuals: Vec<f64>,
    /// Which entries satisfy the residual tolerance.
    pub converged: Vec<bool>,
    pub iterations: usize,
    pub seed: u64,
    /// False when the iteration cap was hit before every requested pair converged.
    pub complete: bool,
}

impl SpectralResult {
    /// Largest absolute eigenvalue estimate, or 0 for an empty operator.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.first().map_or(0.0, |l| l.abs())
    }

    /// Tab-separated table with header `index	eigenvalue	residual	converged`.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("index\teigenvalue\tresidual\tconverged\n");
        for (i, ((l, r), c)) in self.eigenvalues.iter().zip(&self.residuals).zip(&self.converged).enumerate() {
            let _ = writeln!(s, "{i}\t{l:.17e}\t{r:.3e}\t{c}");
        }
        s
    }
}

/// How a trace value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceMethod {
    DensePower,
    WalkSum,
    Stochastic,
}

impl TraceMethod {
    pub fn tag(self) -> &'static str {
        match self {
            TraceMethod::DensePower => "dense-power",
            TraceMethod::WalkSum => "walk-sum",
            TraceMethod::Stochastic => "stochastic",
        }
    }
}

/// A value of `Tr A^{2k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceResult {
    pub k: usize,
    pub value: f64,
    pub method: TraceMethod,
    /// Sample standard error, stochastic route only.
    pub std_error: Option<f64>,
}

/// Tab-separated table with header `k	method	value	std_error`.
pub fn traces_to_tsv(rows: &[TraceResult]) -> String {
    let mut s = String::from("k\tmethod\tvalue\tstd_error\n");
    for r in rows {
        let se = r.std_error.map_or_else(|| "-".to_string(), |e| format!("{e:.6e}"));
        let _ = writeln!(s, "{}\t{}\t{:.17e}\t{se}", r.k, r.method.tag(), r.value);
    }
    s
}

/// Relative agreement with tolerance `rel` and absolute floor `1e−12`.
pub fn close_rel(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-12
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// The `count` eigenvalues of largest magnitude of `op`.
///
/// The start vector is drawn from a ChaCha8 stream seeded by `seed`, so
/// repeated calls give identical results. Convergence of a Ritz pair is
/// measured by the residual `|β_m s_m|`, which equals `‖Av − λv‖₂` in
/// exact arithmetic; reported residuals are recomputed explicitly.
pub fn extreme_eigenvalues<O: SymOp + ?Sized>(op: &O, count: usize, seed: u64) -> Result<SpectralResult> {
    if count < 1 {
        return param("count must be at least 1");
    }
    let n = op.dim();
    if n == 0 {
        return Ok(SpectralResult {
            eigenvalues: vec![],
            residuals: vec![],
            converged: vec![],
            iterations: 0,
            seed,
            complete: true,
        });
    }
    let count = count.min(n);
    let max_iter = MAX_KRYLOV_ITERATIONS.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let nq = norm(&q);
    q.iter_mut().for_each(|x| *x /= nq);

    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut last: Option<(Vec<f64>, DMatrix<f64>)> = None;
    let mut done = false;

    for m in 0..max_iter {
        op.apply(&basis[m], &mut w);
        let a = dot(&w, &basis[m]);
        alphas.push(a);
        // Two passes of classical Gram–Schmidt against the whole basis.
        for _ in 0..2 {
            let coeffs: Vec<f64> = basis.par_iter().map(|v| dot(&w, v)).collect();
            for (c, v) in coeffs.iter().zip(&basis) {
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        let b = norm(&w);
        let steps = m + 1;
        let invariant = b <= 1e-12 * (1.0 + alphas.iter().map(|x| x.abs()).fold(0.0, f64::max));
        if steps >= count && (steps % 10 == 0 || invariant || steps == max_iter) {
            let (vals, vecs) = tridiagonal_eigen(&alphas, &betas);
            let order = order_by_magnitude(&vals);
            let ok = order.iter().take(count).all(|&j| {
                let ritz_res = (b * vecs[(steps - 1, j)]).abs();
                ritz_res <= 1e-10 * vals[j].abs().max(1.0)
            });
            last = Some((vals.as_slice().to_vec(), vecs));
            if ok || invariant {
                done = true;
                break;
            }
        }
        if invariant {
            done = true;
            break;
        }
        betas.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }

    let (vals, vecs) = match last {
        Some(x) => x,
        None => {
            let (v, s) = tridiagonal_eigen(&alphas, &betas);
            (v.as_slice().to_vec(), s)
        }
    };
    let steps = alphas.len();
    let order = order_by_magnitude(&DVector::from_vec(vals.clone()));
    let mut eigenvalues = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    let mut converged = Vec::with_capacity(count);
    let mut av = vec![0.0; n];
    for &j in order.iter().take(count) {
        let lambda = vals[j];
        let mut v = vec![0.0; n];
        for (i, bv) in basis.iter().take(steps).enumerate() {
            let c = vecs[(i, j)];
            for (vi, bi) in v.iter_mut().zip(bv) {
                *vi += c * bi;
            }
        }
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        op.apply(&v, &mut av);
        let res = av.iter().zip(&v).map(|(a, x)| (a - lambda * x).powi(2)).sum::<f64>().sqrt();
        eigenvalues.push(lambda);
        residuals.push(res);
        converged.push(res <= 1e-8 * lambda.abs().max(1.0));
    }
    let complete = done && converged.iter().all(|&c| c);
    Ok(SpectralResult { eigenvalues, residuals, converged, iterations: steps, seed, complete })
}

fn tridiagonal_eigen(alphas: &[f64], betas: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let e = SymmetricEigen::new(t);
    (e.eigenvalues, e.eigenvectors)
}

fn order_by_magnitude(vals: &DVector<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[b].abs().total_cmp(&vals[a].abs()).then(vals[b].total_cmp(&vals[a])));
    idx
}

fn check_dense(matrix: &DMatrix<f64>) -> Result<()> {
    if matrix.nrows() != matrix.ncols() {
        return param("matrix is not square");
    }
    if matrix.nrows() > DENSE_CAPACITY {
        return capacity(format!("dimension {} exceeds dense capacity {DENSE_CAPACITY}", matrix.nrows()));
    }
    Ok(())
}

/// All eigenvalues of a symmetric matrix in ascending order.
///
/// The decomposition is checked by reconstruction:
/// `‖QΛQᵀ − A‖_F ≤ 1e−8 ‖A‖_F`.
pub fn dense_spectrum(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_dense(matrix)?;
    if matrix.nrows() == 0 {
        return Ok(vec![]);
    }
    let e = SymmetricEigen::new(matrix.clone());
    let recon = &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues) * e.eigenvectors.transpose();
    let err = (recon - matrix).norm();
    let scale = matrix.norm();
    if err > 1e-8 * scale.max(f64::MIN_POSITIVE) && err > 1e-300 {
        return Err(DivlabError::Verification {
            message: format!("eigendecomposition reconstruction error {err:.3e} vs norm {scale:.3e}"),
            witness: vec![],
        });
    }
    let mut vals = e.eigenvalues.as_slice().to_vec();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Eigenvalues only, ascending, without the reconstruction check.
pub fn symmetric_eigenvalues(matrix: &DMatrix<f64>) -> Vec<f64> {
    if matrix.nrows() == 0 {
        return vec![];
    }
    let mut vals = matrix.clone().symmetric_eigenvalues().as_slice().to_vec();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Largest `|λ|` of a symmetric matrix.
pub fn spectral_radius_dense(matrix: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(matrix).iter().fold(0.0, |m, l| m.max(l.abs()))
}

/// `Tr A^{2k}` by repeated squaring of `A²`.
pub fn trace_dense_power(matrix: &DMatrix<f64>, k: usize) -> Result<TraceResult> {
    check_dense(matrix)?;
    if k < 1 {
        return param("k must be at least 1");
    }
    let sq = matrix * matrix;
    let mut result: Option<DMatrix<f64>> = None;
    let mut base = sq;
    let mut e = k;
    loop {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => &r * &base,
            });
        }
        e >>= 1;
        if e == 0 {
            break;
        }
        base = &base * &base;
    }
    let value = result.map_or(0.0, |r| r.trace());
    Ok(TraceResult { k, value, method: TraceMethod::DensePower, std_error: None })
}

/// `Tr A^{2k}` as the sum over closed walks `n → n+σ₁p₁ → …` of length
/// `2k` that stay inside the window and support, each weighted by
/// `Π f_{p_i}(n + β_{i−1})` with `f_p(m) = 1_{p|m} − 1/p`.
pub fn trace_walk_sum(spec: &OperatorSpec, k: usize) -> Result<TraceResult> {
    if k < 1 {
        return param("k must be at least 1");
    }
    let primes = spec.prime_window().primes();
    let steps = 2 * k;
    let budget = (primes.len() as f64 * 2.0).powi(steps as i32);
    if budget > WALK_SUM_BUDGET {
        return capacity(format!("walk enumeration size {budget:.3e} exceeds {WALK_SUM_BUDGET:.0e}"));
    }
    let len = spec.dim() as i64;
    let support = spec.support();
    let table = spec.table();
    let h = primes.iter().copied().max().unwrap_or(0) as i64;

    struct Ctx<'a> {
        primes: &'a [u64],
        support: &'a SupportMask,
        start: u64,
        len: i64,
        h: i64,
    }

    fn walk(ctx: &Ctx<'_>, origin: i64, pos: i64, remaining: usize) -> f64 {
        if remaining == 0 {
            return if pos == origin { 1.0 } else { 0.0 };
        }
        if (pos - origin).abs() > remaining as i64 * ctx.h {
            return 0.0;
        }
        let n = ctx.start + 1 + pos as u64;
        let mut acc = 0.0;
        for &p in ctx.primes {
            for s in [1i64, -1] {
                let next = pos + s * p as i64;
                if next < 0 || next >= ctx.len || !ctx.support.get(next as usize) {
                    continue;
                }
                acc += edge_weight(n, p) * walk(ctx, origin, next, remaining - 1);
            }
        }
        acc
    }

    let ctx = Ctx { primes, support, start: table.window_start(), len, h };
    let value: f64 = (0..spec.dim())
        .into_par_iter()
        .filter(|&i| support.get(i))
        .map(|i| walk(&ctx, i as i64, i as i64, steps))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(TraceResult { k, value, method: TraceMethod::WalkSum, std_error: None })
}

/// Hutchinson estimate of `Tr A^{2k}`: the mean of `‖A^k z‖²` over
/// Rademacher probes `z`.
pub fn trace_stochastic<O: SymOp + ?Sized>(op: &O, k: usize, samples: usize, seed: u64) -> Result<TraceResult> {
    if samples < 8 {
        return param("at least 8 samples are required");
    }
    if k < 1 {
        return param("k must be at least 1");
    }
    let n = op.dim();
    let vals: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let mut z: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let mut y = vec![0.0; n];
            for _ in 0..k {
                op.apply(&z, &mut y);
                std::mem::swap(&mut z, &mut y);
            }
            dot(&z, &z)
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / samples as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples as f64 - 1.0);
    Ok(TraceResult {
        k,
        value: mean,
        method: TraceMethod::Stochastic,
        std_error: Some((var / samples as f64).sqrt()),
    })
}

/// `⟨v, A^{j} v⟩`.
pub fn quadratic_power<O: SymOp + ?Sized>(op: &O, v: &[f64], j: usize) -> f64 {
    let n = op.dim();
    let mut x = v.to_vec();
    let mut y = vec![0.0; n];
    for _ in 0..j {
        op.apply(&x, &mut y);
        std::mem::swap(&mut x, &mut y);
    }
    dot(v, &x)
}

/// Principal submatrix on the index range `lo..hi`.
fn principal(matrix: &DMatrix<f64>, lo: usize, hi: usize) -> DMatrix<f64> {
    matrix.view((lo, lo), (hi - lo, hi - lo)).into_owned()
}

/// Restriction `A|_X` of a dense matrix to a mask (rows and columns
/// outside the mask are zeroed, the dimension is unchanged).
pub fn restrict_dense(matrix: &DMatrix<f64>, mask: &SupportMask) -> Result<DMatrix<f64>> {
    if mask.len() != matrix.nrows() {
        return param("mask length differs from matrix dimension");
    }
    let mut m = matrix.clone();
    for i in 0..mask.len() {
        if !mask.get(i) {
            m.row_mut(i).fill(0.0);
            m.column_mut(i).fill(0.0);
        }
    }
    Ok(m)
}

/// Maximum absolute row sum and bandwidth of a matrix.
pub fn row_sum_and_bandwidth(matrix: &DMatrix<f64>) -> (f64, usize) {
    let n = matrix.nrows();
    let mut max_row = 0.0f64;
    let mut band = 0usize;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            let a = matrix[(i, j)];
            if a != 0.0 {
                s += a.abs();
                band = band.max(i.abs_diff(j));
            }
        }
        max_row = max_row.max(s);
    }
    (max_row, band)
}

/// Removes short intervals carrying large eigenvalues.
///
/// Every interval of length `4⌈L/α⌉H` on a grid of stride half that
/// length is scanned; an interval whose principal submatrix has an
/// eigenvalue of magnitude at least `α/2` joins the exceptional set ℰ.
/// The complement of ℰ is returned after checking that the restriction to
/// it has every eigenvalue in `[−α − 1e−6, α + 1e−6]`.
pub fn extract_exceptional_intervals(matrix: &DMatrix<f64>, alpha: f64, h: usize, l: f64) -> Result<SupportMask> {
    check_dense(matrix)?;
    if !(alpha > 0.0) {
        return param("alpha must be positive");
    }
    let n = matrix.nrows();
    let (row_sum, band) = row_sum_and_bandwidth(matrix);
    if band > h {
        return param(format!("matrix bandwidth {band} exceeds H = {h}"));
    }
    if row_sum > l * (1.0 + 1e-12) + 1e-12 {
        return param(format!("row absolute sum {row_sum} exceeds L = {l}"));
    }
    let mut exceptional = vec![false; n];
    if n > 0 && alpha <= l {
        let width = (4.0 * (l / alpha).ceil() * h.max(1) as f64) as usize;
        let width = width.clamp(1, n);
        let stride = (width / 2).max(1);
        let mut starts: Vec<usize> = (0..).map(|j| j * stride).take_while(|&s| s + width <= n).collect();
        if starts.last().is_none_or(|&s| s + width < n) {
            starts.push(n - width);
        }
        let hits: Vec<usize> = starts
            .par_iter()
            .copied()
            .filter(|&s| spectral_radius_dense(&principal(matrix, s, s + width)) >= alpha / 2.0)
            .collect();
        for s in hits {
            exceptional[s..s + width].iter_mut().for_each(|e| *e = true);
        }
    }
    let mask = SupportMask::from_fn(0, n, |i| !exceptional[i]);
    let restricted = restrict_dense(matrix, &mask)?;
    let worst = symmetric_eigenvalues(&restricted).iter().fold(0.0f64, |m, l| m.max(l.abs()));
    if worst > alpha + 1e-6 {
        let e = SymmetricEigen::new(restricted);
        let j = (0..e.eigenvalues.len())
            .max_by(|&a, &b| e.eigenvalues[a].abs().total_cmp(&e.eigenvalues[b].abs()))
            .unwrap_or(0);
        return Err(DivlabError::Verification {
            message: format!("restricted eigenvalue {} exceeds alpha = {alpha}", e.eigenvalues[j]),
            witness: e.eigenvectors.column(j).iter().copied().collect(),
        });
    }
    Ok(mask)
}
