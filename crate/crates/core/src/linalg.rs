//! Windowed second-moment matrices and leading-eigenvector extraction.
//!
//! The matrices here are symmetric positive semi-definite, so the leading
//! singular vector coincides with the leading eigenvector and plain power
//! iteration is enough. Every returned vector satisfies
//! `‖Σû − (ûᵀΣû)û‖ ≤ tol·‖Σ‖_F` and is sign-canonicalized.

use crate::error::{Error, Result};
use crate::stream::MultiSensorFrame;

/// Unnormalized second-moment accumulation `Σ_t = Σ_j x_j x_jᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceWindow {
    k: usize,
    w: usize,
    matrix: Vec<f64>,
}

impl CovarianceWindow {
    /// Accumulates `w` row-major samples of dimension `k` held in `rows`.
    pub fn from_rows(k: usize, rows: &[f64]) -> Result<Self> {
        if k == 0 || rows.is_empty() {
            return Err(Error::EmptyWindow);
        }
        if rows.len() % k != 0 {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: rows.len() % k,
            });
        }
        let w = rows.len() / k;
        let mut matrix = vec![0.0; k * k];
        for x in rows.chunks_exact(k) {
            for i in 0..k {
                let xi = x[i];
                if xi == 0.0 {
                    continue;
                }
                let row = &mut matrix[i * k..i * k + i + 1];
                for (m, xj) in row.iter_mut().zip(&x[..=i]) {
                    *m += xi * xj;
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                matrix[j * k + i] = matrix[i * k + j];
            }
        }
        Ok(Self { k, w, matrix })
    }

    /// Builds a window from an explicit symmetric matrix (row-major).
    pub fn from_matrix(k: usize, w: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != k * k {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                got: matrix.len(),
            });
        }
        for i in 0..k {
            for j in 0..i {
                let (a, b) = (matrix[i * k + j], matrix[j * k + i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::invalid(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { k, w, matrix })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.k + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.matrix.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            k: self.k,
            w: self.w,
            matrix: self.matrix.iter().map(|v| v * c).collect(),
        }
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.matrix.chunks_exact(self.k)) {
            *o = dot(row, v);
        }
    }
}

/// `Σ_{j} x_j x_jᵀ` over the given frames (no `1/w` factor).
pub fn sample_covariance(frames: &[MultiSensorFrame]) -> Result<CovarianceWindow> {
    let first = frames.first().ok_or(Error::EmptyWindow)?;
    let k = first.k();
    let mut rows = Vec::with_capacity(frames.len() * k);
    for f in frames {
        if f.k() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: f.k(),
            });
        }
        rows.extend_from_slice(f.values());
    }
    CovarianceWindow::from_rows(k, &rows)
}

/// Power-iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenConfig {
    pub tol: f64,
    /// `None` uses `⌈10·k·ln(1/tol)⌉`.
    pub max_iter: Option<usize>,
    /// Estimate the second Ritz value to flag a degenerate spectral gap.
    pub probe_gap: bool,
    /// Return the last iterate (flagged unconverged) instead of failing when
    /// the budget runs out.
    pub best_effort: bool,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            probe_gap: true,
            best_effort: false,
        }
    }
}

impl EigenConfig {
    pub fn max_iter_for(&self, k: usize) -> usize {
        self.max_iter
            .unwrap_or_else(|| default_max_iter(k, self.tol))
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::invalid(format!("tolerance must be in (0, 1), got {}", self.tol)));
        }
        Ok(())
    }
}

pub fn default_max_iter(k: usize, tol: f64) -> usize {
    (10.0 * k as f64 * (1.0 / tol).ln()).ceil().max(1.0) as usize
}

/// Leading unit eigenvector with convergence metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TopVector {
    pub vector: Vec<f64>,
    /// Rayleigh quotient `ûᵀΣû`.
    pub value: f64,
    /// `‖Σû − (ûᵀΣû)û‖`.
    pub residual: f64,
    /// `‖Σ‖_F`.
    pub frobenius: f64,
    pub iterations: usize,
    /// Top two Ritz values agree to within `tol·‖Σ‖_F`.
    pub gap_degenerate: bool,
    /// Residual bound met; only `false` under `best_effort`.
    pub converged: bool,
}

impl TopVector {
    pub fn relative_residual(&self) -> f64 {
        self.residual / self.frobenius
    }
}

/// Normalized all-ones vector with index 0 nudged by `1e-3`.
pub fn default_start(k: usize) -> Vec<f64> {
    let mut v = vec![1.0; k];
    v[0] += 1e-3;
    normalize(&mut v);
    v
}

/// Leading eigenvector of `cov` by power iteration from [`default_start`].
pub fn top_singular_vector(cov: &CovarianceWindow, tol: f64, max_iter: usize) -> Result<TopVector> {
    let cfg = EigenConfig {
        tol,
        max_iter: Some(max_iter),
        ..EigenConfig::default()
    };
    top_singular_vector_with(cov, &cfg, None)
}

/// As [`top_singular_vector`] with explicit settings and an optional start vector.
pub fn top_singular_vector_with(
    cov: &CovarianceWindow,
    cfg: &EigenConfig,
    start: Option<&[f64]>,
) -> Result<TopVector> {
    cfg.validate()?;
    let k = cov.k;
    let fro = cov.frobenius();
    if fro == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let start = start_vector(k, start)?;
    let max_iter = cfg.max_iter_for(k);
    let apply = |v: &[f64], out: &mut [f64]| cov.apply(v, out);
    let diag: Vec<f64> = (0..k).map(|i| cov.get(i, i)).collect();
    let it = power_iterate(k, &apply, start, &diag, fro, cfg, max_iter)?;
    finish(k, &apply, it, fro, cfg)
}

/// Leading eigenvector of `Σ = XᵀX` for the `w × k` row-major sample block `rows`,
/// without forming `Σ` when `w < k` (iterates on the `w × w` Gram matrix instead,
/// which produces the same iterate sequence).
pub fn window_top_vector(
    k: usize,
    rows: &[f64],
    cfg: &EigenConfig,
    start: Option<&[f64]>,
) -> Result<TopVector> {
    cfg.validate()?;
    if k == 0 || rows.is_empty() {
        return Err(Error::EmptyWindow);
    }
    if rows.len() % k != 0 {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: rows.len() % k,
        });
    }
    let w = rows.len() / k;
    if w >= k {
        let cov = CovarianceWindow::from_rows(k, rows)?;
        return top_singular_vector_with(&cov, cfg, start);
    }

    // Gram side: G = X Xᵀ, with ‖G‖_F = ‖Σ‖_F.
    let mut gram = vec![0.0; w * w];
    for i in 0..w {
        let xi = &rows[i * k..(i + 1) * k];
        for j in 0..=i {
            let g = dot(xi, &rows[j * k..(j + 1) * k]);
            gram[i * w + j] = g;
            gram[j * w + i] = g;
        }
    }
    let fro = gram.iter().map(|v| v * v).sum::<f64>().sqrt();
    if fro == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let start_k = start_vector(k, start)?;
    let mut start_w = vec![0.0; w];
    mul_rows(rows, k, &start_k, &mut start_w);
    let max_iter = cfg.max_iter_for(k);
    let gram_apply = |v: &[f64], out: &mut [f64]| {
        for (o, row) in out.iter_mut().zip(gram.chunks_exact(w)) {
            *o = dot(row, v);
        }
    };
    let gram_diag: Vec<f64> = (0..w).map(|i| gram[i * w + i]).collect();
    let inner = if norm(&start_w) == 0.0 {
        // Start vector orthogonal to every sample; fall back to the strongest sample.
        let mut e = vec![0.0; w];
        e[argmax(&gram_diag)] = 1.0;
        power_iterate(w, &gram_apply, e, &gram_diag, fro, cfg, max_iter)?
    } else {
        power_iterate(w, &gram_apply, start_w, &gram_diag, fro, cfg, max_iter)?
    };

    let mut u = vec![0.0; k];
    mul_rows_t(rows, k, &inner.vector, &mut u);
    normalize(&mut u);
    let cov_apply = |v: &[f64], out: &mut [f64]| {
        let mut s = vec![0.0; w];
        mul_rows(rows, k, v, &mut s);
        mul_rows_t(rows, k, &s, out);
    };
    let cov_diag: Vec<f64> = (0..k)
        .map(|j| rows.chunks_exact(k).map(|x| x[j] * x[j]).sum())
        .collect();
    // The mapped vector satisfies the Gram-side bound; confirm (and if needed
    // polish) against Σ itself so the contract is checked on the stated matrix.
    let budget = max_iter.saturating_sub(inner.iterations);
    let mut it = power_iterate(k, &cov_apply, u, &cov_diag, fro, cfg, budget)?;
    it.iterations += inner.iterations + 1;
    it.converged &= inner.converged;
    finish(k, &cov_apply, it, fro, cfg)
}

struct Iterate {
    vector: Vec<f64>,
    value: f64,
    residual: f64,
    iterations: usize,
    converged: bool,
}

fn start_vector(k: usize, start: Option<&[f64]>) -> Result<Vec<f64>> {
    match start {
        None => Ok(default_start(k)),
        Some(s) if s.len() != k => Err(Error::DimensionMismatch {
            expected: k,
            got: s.len(),
        }),
        Some(s) => {
            let mut v = s.to_vec();
            if normalize(&mut v) == 0.0 {
                Ok(default_start(k))
            } else {
                Ok(v)
            }
        }
    }
}

fn power_iterate<F: Fn(&[f64], &mut [f64])>(
    dim: usize,
    apply: &F,
    start: Vec<f64>,
    diag: &[f64],
    fro: f64,
    cfg: &EigenConfig,
    max_iter: usize,
) -> Result<Iterate> {
    let (tol, best_effort) = (cfg.tol, cfg.best_effort);
    let mut v = start;
    normalize(&mut v);
    let mut y = vec![0.0; dim];
    let mut restarted = false;
    let mut iterations = 0;
    loop {
        apply(&v, &mut y);
        let value = dot(&v, &y);
        let residual = y
            .iter()
            .zip(&v)
            .map(|(yi, vi)| (yi - value * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        let ynorm = norm(&y);
        if ynorm == 0.0 && !restarted {
            // v lies in the null space of a nonzero PSD matrix.
            v.iter_mut().for_each(|x| *x = 0.0);
            v[argmax(diag)] = 1.0;
            restarted = true;
            continue;
        }
        let converged = residual <= tol * fro;
        if converged || (best_effort && iterations >= max_iter) {
            return Ok(Iterate {
                vector: v,
                value,
                residual,
                iterations,
                converged,
            });
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                iterations,
                residual: residual / fro,
            });
        }
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = yi / ynorm;
        }
        iterations += 1;
    }
}

fn finish<F: Fn(&[f64], &mut [f64])>(
    k: usize,
    apply: &F,
    it: Iterate,
    fro: f64,
    cfg: &EigenConfig,
) -> Result<TopVector> {
    let mut vector = it.vector;
    canonicalize_sign(&mut vector);
    let gap_degenerate = cfg.probe_gap && probe_gap(k, apply, &vector, it.value, fro, cfg.tol);
    Ok(TopVector {
        vector,
        value: it.value,
        residual: it.residual,
        frobenius: fro,
        iterations: it.iterations,
        gap_degenerate,
        converged: it.converged,
    })
}

/// Runs a short power iteration on `Σ − λ ûûᵀ`; its Rayleigh quotient bounds the
/// second eigenvalue from below, so reaching `λ` within tolerance means a
/// degenerate gap.
fn probe_gap<F: Fn(&[f64], &mut [f64])>(
    k: usize,
    apply: &F,
    u: &[f64],
    lambda: f64,
    fro: f64,
    tol: f64,
) -> bool {
    if k < 2 {
        return false;
    }
    let project = |v: &mut [f64]| {
        let c = dot(v, u);
        v.iter_mut().zip(u).for_each(|(x, ui)| *x -= c * ui);
    };
    let mut v: Vec<f64> = (0..k).map(|i| if i % 2 == 0 { 1.0 } else { -0.7 }).collect();
    project(&mut v);
    if normalize(&mut v) < 1e-8 {
        v.iter_mut().for_each(|x| *x = 0.0);
        let j = u
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map_or(0, |(j, _)| j);
        v[j] = 1.0;
        project(&mut v);
        normalize(&mut v);
    }
    let mut y = vec![0.0; k];
    let mut second = f64::NEG_INFINITY;
    for _ in 0..50 {
        apply(&v, &mut y);
        project(&mut y);
        second = second.max(dot(&v, &y));
        if lambda - second <= tol * fro {
            return true;
        }
        if normalize(&mut y) == 0.0 {
            break;
        }
        std::mem::swap(&mut v, &mut y);
    }
    lambda - second <= tol * fro
}

/// Flips `v` so its largest-magnitude component is positive (first index on ties).
pub fn canonicalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scales `v` to unit length in place and returns its previous norm.
pub(crate) fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// `out = X v` for row-major `X` with row length `k`.
fn mul_rows(rows: &[f64], k: usize, v: &[f64], out: &mut [f64]) {
    for (o, x) in out.iter_mut().zip(rows.chunks_exact(k)) {
        *o = dot(x, v);
    }
}

/// `out = Xᵀ g`.
fn mul_rows_t(rows: &[f64], k: usize, g: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (gi, x) in g.iter().zip(rows.chunks_exact(k)) {
        for (o, xj) in out.iter_mut().zip(x) {
            *o += gi * xj;
        }
    }
}
