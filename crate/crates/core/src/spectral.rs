//! Spectral substrate features.
//!
//! The per-node attribute matrix (residual CPU, degree, adjacent residual
//! bandwidth, closeness) is smoothed once over the self-looped normalized
//! adjacency and turned into a node-similarity matrix `S = H H^T`. Its
//! leading eigenpairs are the spectral node features; between requests they
//! are carried forward with a first-order perturbation update instead of a
//! fresh eigensolve whenever the change is small relative to the spectral
//! gap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VneError};
use crate::learn::{axpy, dot, norm, DenseMatrix};
use crate::net::SubstrateNetwork;

pub const ATTRIBUTE_COLUMNS: usize = 4;
pub const DEFAULT_K: usize = 4;
const MAX_ITERATIONS: usize = 10_000;
const CONVERGENCE_TOL: f64 = 1e-10;
/// Gaps below this are treated as degenerate.
const DEGENERATE_GAP: f64 = 1e-8;
/// Perturbations larger than this fraction of the smallest gap fall back to
/// a full eigensolve.
const PERTURBATION_LIMIT: f64 = 0.1;

/// Per-node attributes, each column min-max normalized to `[0, 1]`.
/// Columns: residual CPU, degree, adjacent residual bandwidth,
/// `1 / (1 + mean hop distance)`. Rows follow node ids.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeMatrix(pub DenseMatrix);

/// Symmetric positive semidefinite node-similarity matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FullAttributeMatrix(pub DenseMatrix);

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEmbedding {
    /// Top-k eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `n x k`, orthonormal columns; the largest-magnitude entry of each
    /// column is positive.
    pub eigenvectors: DenseMatrix,
    /// The (k+1)-th eigenpair, kept to measure the gap to the untracked
    /// spectrum. `None` when `k == n`.
    pub guard: Option<(f64, Vec<f64>)>,
    /// Some tracked gap is below the degeneracy threshold; the individual
    /// eigenvectors are then not unique.
    pub degenerate: bool,
}

impl SpectralEmbedding {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Smallest gap between consecutive tracked eigenvalues, including the
    /// gap to the guard eigenvalue. Infinite when there is nothing to
    /// compare.
    pub fn min_gap(&self) -> f64 {
        let mut values = self.eigenvalues.clone();
        if let Some((g, _)) = &self.guard {
            values.push(*g);
        }
        values
            .windows(2)
            .map(|w| (w[0] - w[1]).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Node feature rows `v_i * sqrt(max(lambda_i, 0))`, `n x k`.
    pub fn node_features(&self) -> DenseMatrix {
        let mut f = self.eigenvectors.clone();
        for i in 0..f.rows() {
            for (j, &l) in self.eigenvalues.iter().enumerate() {
                f[(i, j)] *= l.max(0.0).sqrt();
            }
        }
        f
    }
}

fn min_max_normalize(column: &mut [f64]) {
    let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for x in column.iter_mut() {
        *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
    }
}

pub fn build_attribute_matrix(net: &SubstrateNetwork) -> AttributeMatrix {
    let n = net.node_count();
    let mut cols: Vec<Vec<f64>> = (0..ATTRIBUTE_COLUMNS).map(|_| Vec::with_capacity(n)).collect();
    for u in 0..n {
        cols[0].push(net.nodes()[u].cpu_available);
        cols[1].push(net.degree(u) as f64);
        cols[2].push(net.adjacent_bw(u));
        let dist = net.hop_distances(u);
        let total: usize = dist
            .iter()
            .enumerate()
            .filter(|&(v, _)| v != u)
            .map(|(_, d)| d.unwrap_or(n))
            .sum();
        let mean = if n > 1 { total as f64 / (n - 1) as f64 } else { 0.0 };
        cols[3].push(1.0 / (1.0 + mean));
    }
    for c in &mut cols {
        min_max_normalize(c);
    }
    let mut m = DenseMatrix::zeros(n.max(1), ATTRIBUTE_COLUMNS);
    for (j, c) in cols.iter().enumerate() {
        for (i, &x) in c.iter().enumerate() {
            m[(i, j)] = x;
        }
    }
    AttributeMatrix(m)
}

/// `D^-1/2 (A + I) D^-1/2` with `D` the degree matrix of `A + I`.
pub fn normalized_adjacency(net: &SubstrateNetwork) -> DenseMatrix {
    let n = net.node_count();
    let mut a = DenseMatrix::identity(n);
    for l in net.links() {
        a[(l.endpoints.0, l.endpoints.1)] = 1.0;
        a[(l.endpoints.1, l.endpoints.0)] = 1.0;
    }
    let d: Vec<f64> = (0..n).map(|u| (net.degree(u) as f64 + 1.0).sqrt().recip()).collect();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= d[i] * d[j];
        }
    }
    a
}

/// Fuses attributes with topology: `H = A_hat X`, `S = H H^T`.
pub fn fuse(attr: &AttributeMatrix, net: &SubstrateNetwork) -> Result<FullAttributeMatrix> {
    if attr.0.rows() != net.node_count() {
        return Err(VneError::Shape(format!(
            "{} attribute rows for {} nodes",
            attr.0.rows(),
            net.node_count()
        )));
    }
    let h = normalized_adjacency(net).matmul(&attr.0)?;
    let s = h.matmul(&h.transpose())?;
    // symmetrize away rounding asymmetry
    let n = s.rows();
    let mut sym = s;
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (sym[(i, j)] + sym[(j, i)]);
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
    }
    Ok(FullAttributeMatrix(sym))
}

/// Attribute matrix and fusion in one step.
pub fn full_attribute_matrix(net: &SubstrateNetwork) -> Result<FullAttributeMatrix> {
    fuse(&build_attribute_matrix(net), net)
}

fn normalize(v: &mut [f64]) -> f64 {
    let len = norm(v);
    if len > 0.0 {
        for x in v.iter_mut() {
            *x /= len;
        }
    }
    len
}

/// Makes the largest-magnitude entry positive (first one on ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        axpy(v, -c, b);
    }
}

fn rayleigh(s: &DenseMatrix, v: &[f64]) -> f64 {
    dot(v, &s.matvec(v))
}

fn residual_norm(s: &DenseMatrix, v: &[f64], lambda: f64) -> f64 {
    let mut r = s.matvec(v);
    axpy(&mut r, -lambda, v);
    norm(&r)
}

/// Gershgorin interval enclosing the spectrum.
fn gershgorin(s: &DenseMatrix) -> (f64, f64) {
    let n = s.rows();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| s[(i, j)].abs()).sum();
        lo = lo.min(s[(i, i)] - off);
        hi = hi.max(s[(i, i)] + off);
    }
    (lo, hi)
}

fn start_vector(n: usize, salt: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + salt);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut v);
    v
}

/// Shift that makes every eigenvalue of `S + shift I` non-negative, so
/// power iteration finds eigenvalues in descending algebraic order.
/// The smallest eigenvalue is estimated by power iteration on `hi I - S`;
/// no shift for matrices that are (numerically) positive semidefinite.
fn spectrum_shift(s: &DenseMatrix) -> (f64, usize) {
    let (lo, hi) = gershgorin(s);
    if lo >= 0.0 {
        return (0.0, 0);
    }
    let n = s.rows();
    let scale = hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE);
    let mut v = start_vector(n, 999);
    let mut estimate = lo;
    let mut matvecs = 0;
    for _ in 0..500 {
        matvecs += 2;
        let mut w = s.matvec(&v);
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi = hi * vi - *wi;
        }
        let len = normalize(&mut w);
        if len <= 1e-14 * scale {
            break;
        }
        let next = rayleigh(s, &w);
        let done = (next - estimate).abs() <= 1e-6 * scale;
        estimate = next;
        v = w;
        if done {
            break;
        }
    }
    // margin covers an estimate that has not fully converged downward
    let margin = 1e-2 * scale;
    let shift = if estimate >= -1e-9 * scale {
        0.0
    } else {
        margin - estimate
    };
    (shift, matvecs)
}

/// Leading `k` eigenpairs of a symmetric matrix by shifted power iteration
/// with Hotelling deflation. Each pair stops when successive unit iterates
/// differ by less than `1e-10`.
pub fn top_k_eigen(s: &DenseMatrix, k: usize) -> Result<SpectralEmbedding> {
    top_k_eigen_counted(s, k).map(|(e, _)| e)
}

/// [`top_k_eigen`] that also reports the number of matrix-vector products.
pub fn top_k_eigen_counted(s: &DenseMatrix, k: usize) -> Result<(SpectralEmbedding, usize)> {
    let n = s.rows();
    if s.cols() != n {
        return Err(VneError::Shape(format!("{}x{} is not square", n, s.cols())));
    }
    if k == 0 || k > n {
        return Err(VneError::Shape(format!("k = {k} outside 1..={n}")));
    }
    if !s.is_finite() {
        return Err(VneError::Shape("matrix has non-finite entries".into()));
    }
    let scale = s.frobenius_norm().max(f64::MIN_POSITIVE);
    if !s.is_symmetric(1e-12 * scale) {
        return Err(VneError::Shape("matrix is not symmetric".into()));
    }
    let (shift, mut matvecs) = spectrum_shift(s);
    let mut shifted = s.clone();
    for i in 0..n {
        shifted[(i, i)] += shift;
    }
    let wanted = (k + 1).min(n);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(wanted);
    let mut values: Vec<f64> = Vec::with_capacity(wanted);
    let shifted_scale = shifted.frobenius_norm().max(f64::MIN_POSITIVE);
    for idx in 0..wanted {
        let mut v = start_vector(n, idx as u64);
        orthogonalize(&mut v, &vectors);
        if normalize(&mut v) == 0.0 {
            v = (0..n).map(|i| if i == idx { 1.0 } else { 0.0 }).collect();
            orthogonalize(&mut v, &vectors);
            normalize(&mut v);
        }
        let mut converged = false;
        for _ in 0..MAX_ITERATIONS {
            matvecs += 1;
            let mut w = shifted.matvec(&v);
            // Hotelling deflation of the pairs already found
            for (u, &mu) in vectors.iter().zip(&values) {
                let c = (mu + shift) * dot(u, &v);
                axpy(&mut w, -c, u);
            }
            orthogonalize(&mut w, &vectors);
            if normalize(&mut w) <= 1e-12 * shifted_scale {
                // remaining shifted spectrum is numerically zero
                converged = true;
                break;
            }
            if dot(&w, &v) < 0.0 {
                w.iter_mut().for_each(|x| *x = -*x);
            }
            let change = w
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            v = w;
            if change < CONVERGENCE_TOL {
                converged = true;
                break;
            }
        }
        let lambda = rayleigh(s, &v);
        if !converged {
            return Err(VneError::NoConvergence {
                iterations: MAX_ITERATIONS,
                residual: residual_norm(s, &v, lambda),
            });
        }
        fix_sign(&mut v);
        values.push(lambda);
        vectors.push(v);
    }
    Ok((assemble(n, k, values, vectors), matvecs))
}

/// Sorts pairs by descending eigenvalue and packs the first `k` as the
/// tracked set, the next one as the guard.
fn assemble(n: usize, k: usize, values: Vec<f64>, vectors: Vec<Vec<f64>>) -> SpectralEmbedding {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut eigenvectors = DenseMatrix::zeros(n, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        eigenvalues.push(values[idx]);
        for i in 0..n {
            eigenvectors[(i, col)] = vectors[idx][i];
        }
    }
    let guard = order.get(k).map(|&idx| (values[idx], vectors[idx].clone()));
    let mut emb = SpectralEmbedding {
        eigenvalues,
        eigenvectors,
        guard,
        degenerate: false,
    };
    emb.degenerate = emb.min_gap() < DEGENERATE_GAP;
    emb
}

#[derive(Clone, Debug, PartialEq)]
pub enum Fallback {
    /// `||dS||_F` exceeded the allowed fraction of the spectral gap.
    LargePerturbation { delta_norm: f64, gap: f64 },
    /// Tracked eigenvalues are (nearly) repeated; first-order terms blow up.
    NearDegenerate { gap: f64 },
}

#[derive(Clone, Debug)]
pub struct PerturbOutcome {
    pub embedding: SpectralEmbedding,
    /// Set when the update was done by a full eigensolve instead.
    pub fallback: Option<Fallback>,
}

/// First-order update of the tracked eigenpairs of `s_old` (given as `emb`)
/// to those of `s_new`.
///
/// With `dS = s_new - s_old`: `lambda_i += v_i^T dS v_i` and `v_i` gains
/// `sum_{j != i} (v_j^T dS v_i) / (lambda_i - lambda_j) v_j` over the
/// tracked pairs, plus the same first-order term for the untracked part of
/// the spectrum, obtained without its eigenvectors by solving
/// `(lambda_i I - S_old) x = (I - P) dS v_i` on the complement of the
/// tracked span. The vectors are then re-orthonormalized.
///
/// Falls back to [`top_k_eigen`] when `||dS||_F > 0.1 * gap` or when the
/// gap is below `1e-8`.
pub fn perturb_update(
    emb: &SpectralEmbedding,
    s_old: &DenseMatrix,
    s_new: &DenseMatrix,
) -> Result<PerturbOutcome> {
    check_perturbation_shapes(emb, s_old, s_new)?;
    let delta_norm = s_new.sub(s_old).frobenius_norm();
    if delta_norm == 0.0 {
        return Ok(PerturbOutcome {
            embedding: emb.clone(),
            fallback: None,
        });
    }
    if let Some(reason) = perturbation_fallback(emb, delta_norm) {
        return Ok(PerturbOutcome {
            embedding: top_k_eigen(s_new, emb.k())?,
            fallback: Some(reason),
        });
    }
    Ok(PerturbOutcome {
        embedding: first_order_update(emb, s_old, s_new)?,
        fallback: None,
    })
}

fn check_perturbation_shapes(emb: &SpectralEmbedding, s_old: &DenseMatrix, s_new: &DenseMatrix) -> Result<()> {
    let n = s_old.rows();
    if s_new.shape() != s_old.shape() || emb.eigenvectors.rows() != n {
        return Err(VneError::Shape(format!(
            "perturbation of {:?} by {:?} with {} tracked rows",
            s_old.shape(),
            s_new.shape(),
            emb.eigenvectors.rows()
        )));
    }
    Ok(())
}

/// Whether a perturbation of Frobenius norm `delta_norm` is too large for a
/// first-order update of `emb`.
pub fn perturbation_fallback(emb: &SpectralEmbedding, delta_norm: f64) -> Option<Fallback> {
    let gap = emb.min_gap();
    if gap < DEGENERATE_GAP {
        Some(Fallback::NearDegenerate { gap })
    } else if delta_norm > PERTURBATION_LIMIT * gap {
        Some(Fallback::LargePerturbation { delta_norm, gap })
    } else {
        None
    }
}

/// The first-order update of [`perturb_update`] without the size check.
pub fn first_order_update(
    emb: &SpectralEmbedding,
    s_old: &DenseMatrix,
    s_new: &DenseMatrix,
) -> Result<SpectralEmbedding> {
    check_perturbation_shapes(emb, s_old, s_new)?;
    let n = s_old.rows();
    let k = emb.k();
    let delta = s_new.sub(s_old);
    let tracked: Vec<Vec<f64>> = (0..k).map(|j| emb.eigenvectors.column(j)).collect();
    let mut pairs: Vec<(f64, Vec<f64>)> = tracked
        .iter()
        .cloned()
        .zip(emb.eigenvalues.iter().copied())
        .map(|(v, l)| (l, v))
        .collect();
    if let Some(g) = &emb.guard {
        pairs.push(g.clone());
    }
    let basis: Vec<Vec<f64>> = pairs.iter().map(|(_, v)| v.clone()).collect();
    // dS v_j for every known pair
    let dv: Vec<Vec<f64>> = basis.iter().map(|v| delta.matvec(v)).collect();

    let mut values = Vec::with_capacity(pairs.len());
    let mut vectors = Vec::with_capacity(pairs.len());
    for (i, (lambda_i, v_i)) in pairs.iter().enumerate() {
        let mut v = v_i.clone();
        for (j, (lambda_j, v_j)) in pairs.iter().enumerate() {
            if j != i {
                let c = dot(v_j, &dv[i]) / (lambda_i - lambda_j);
                axpy(&mut v, c, v_j);
            }
        }
        let mut rhs = dv[i].clone();
        orthogonalize(&mut rhs, &basis);
        if norm(&rhs) > 0.0 {
            let x = complement_solve(s_old, &pairs, *lambda_i, &rhs)?;
            axpy(&mut v, 1.0, &x);
        }
        values.push(lambda_i + dot(v_i, &dv[i]));
        vectors.push(v);
    }
    // Gram-Schmidt in eigenvalue order
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors {
        orthogonalize(&mut v, &ortho);
        orthogonalize(&mut v, &ortho);
        normalize(&mut v);
        fix_sign(&mut v);
        ortho.push(v);
    }
    Ok(assemble(n, k, values, ortho))
}

/// Solves `(lambda I - S) x = rhs` for `rhs` orthogonal to the known
/// eigenvectors. The known directions are replaced by identity rows so the
/// system stays regular; the solution then lies in their complement.
fn complement_solve(
    s: &DenseMatrix,
    pairs: &[(f64, Vec<f64>)],
    lambda: f64,
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = s.rows();
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = -s[(i, j)];
        }
        m[(i, i)] += lambda;
    }
    for (mu, v) in pairs {
        m.add_outer(1.0 - (lambda - mu), v, v);
    }
    solve_dense(m, rhs.to_vec())
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: DenseMatrix, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.rows();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[(x, col)].abs().total_cmp(&a[(y, col)].abs()))
            .unwrap_or(col);
        if a[(pivot, col)].abs() < 1e-300 {
            return Err(VneError::Shape("singular system in perturbation update".into()));
        }
        if pivot != col {
            for j in 0..n {
                let tmp = a[(col, j)];
                a[(col, j)] = a[(pivot, j)];
                a[(pivot, j)] = tmp;
            }
            b.swap(col, pivot);
        }
        for r in col + 1..n {
            let f = a[(r, col)] / a[(col, col)];
            if f != 0.0 {
                for j in col..n {
                    a[(r, j)] -= f * a[(col, j)];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|j| a[(r, j)] * x[j]).sum();
        x[r] = (b[r] - tail) / a[(r, r)];
    }
    Ok(x)
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Returns eigenvalues (descending) and the matching
/// eigenvectors as columns.
fn jacobi_eigen(a: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = a.rows();
    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= 1e-30 * m.frobenius_norm().powi(2).max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[(y, y)].total_cmp(&m[(x, x)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, col)] = v[(r, i)];
        }
    }
    (values, vectors)
}

/// Largest residual `||S v - lambda v||` accepted from a warm refinement,
/// relative to `||S||_F`.
const REFINE_TOL: f64 = 1e-11;
const REFINE_ITERATIONS: usize = 25;

/// Warm-started block Rayleigh-Ritz refinement. Each round projects `S`
/// onto `span[V, S V]` for the current block `V` (tracked vectors plus the
/// guard) and keeps the leading Ritz pairs. Stops once every tracked pair
/// has a small residual; `None` when the budget runs out. The second value
/// counts matrix-vector products.
pub fn refine_eigenpairs(s: &DenseMatrix, warm: &SpectralEmbedding) -> (Option<SpectralEmbedding>, usize) {
    let n = s.rows();
    let k = warm.k();
    let wanted = (k + 1).min(n);
    let mut block: Vec<Vec<f64>> = (0..k).map(|j| warm.eigenvectors.column(j)).collect();
    if let Some((_, g)) = &warm.guard {
        block.push(g.clone());
    }
    block.truncate(wanted);
    let tol = REFINE_TOL * s.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut matvecs = 0;
    let mut images: Vec<Vec<f64>> = block.iter().map(|v| s.matvec(v)).collect();
    matvecs += block.len();
    for _ in 0..REFINE_ITERATIONS {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(2 * wanted);
        for cand in block.iter().chain(&images) {
            let mut c = cand.clone();
            let len0 = norm(&c);
            orthogonalize(&mut c, &basis);
            orthogonalize(&mut c, &basis);
            if len0 > 0.0 && normalize(&mut c) > 1e-8 * len0 {
                basis.push(c);
            }
        }
        if basis.len() < wanted {
            return (None, matvecs);
        }
        let sb: Vec<Vec<f64>> = basis.iter().map(|b| s.matvec(b)).collect();
        matvecs += basis.len();
        let m = basis.len();
        let mut t = DenseMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let x = 0.5 * (dot(&basis[i], &sb[j]) + dot(&basis[j], &sb[i]));
                t[(i, j)] = x;
                t[(j, i)] = x;
            }
        }
        let (theta, y) = jacobi_eigen(&t);
        let mut values = Vec::with_capacity(wanted);
        let mut next_block = Vec::with_capacity(wanted);
        let mut next_images = Vec::with_capacity(wanted);
        let mut worst: f64 = 0.0;
        for j in 0..wanted {
            let mut v = vec![0.0; n];
            let mut sv = vec![0.0; n];
            for i in 0..m {
                axpy(&mut v, y[(i, j)], &basis[i]);
                axpy(&mut sv, y[(i, j)], &sb[i]);
            }
            if j < k {
                let mut r = sv.clone();
                axpy(&mut r, -theta[j], &v);
                worst = worst.max(norm(&r));
            }
            values.push(theta[j]);
            next_block.push(v);
            next_images.push(sv);
        }
        block = next_block;
        images = next_images;
        if worst <= tol {
            for v in &mut block {
                fix_sign(v);
            }
            return (Some(assemble(n, k, values, block)), matvecs);
        }
    }
    (None, matvecs)
}

/// How a [`SpectralTracker`] refreshes its eigenpairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateMode {
    /// Full eigensolve on every update.
    Rebuild,
    /// First-order perturbation updates chained from the last
    /// decomposition, each checked and refined against the new matrix.
    Perturb,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrackerStats {
    /// Cold-start eigensolves ([`top_k_eigen`]).
    pub full_eigensolves: usize,
    /// First-order updates within the perturbation limit.
    pub perturb_updates: usize,
    /// Changes beyond the perturbation limit (or near-degenerate gaps).
    pub fallbacks: usize,
    /// Warm-started refinements that converged.
    pub refinements: usize,
    pub unchanged: usize,
    /// Matrix-vector products spent on eigenpairs.
    pub matvecs: usize,
}

/// Keeps the spectral features of an evolving substrate.
///
/// In `Perturb` mode each change of `S` is first absorbed by a first-order
/// update. When the change is beyond the perturbation limit the previous
/// eigenvectors are used as they are. Either way the estimate then seeds
/// [`refine_eigenpairs`]; only if that does not converge does the tracker
/// pay for a cold [`top_k_eigen`].
#[derive(Clone, Debug)]
pub struct SpectralTracker {
    k: usize,
    mode: UpdateMode,
    state: Option<(DenseMatrix, SpectralEmbedding)>,
    pub stats: TrackerStats,
}

impl SpectralTracker {
    pub fn new(k: usize, mode: UpdateMode) -> Self {
        SpectralTracker {
            k,
            mode,
            state: None,
            stats: TrackerStats::default(),
        }
    }

    pub fn mode(&self) -> UpdateMode {
        self.mode
    }

    pub fn reset(&mut self) {
        self.state = None;
    }

    pub fn current(&self) -> Option<&SpectralEmbedding> {
        self.state.as_ref().map(|(_, e)| e)
    }

    fn cold(&mut self, s: &DenseMatrix, k: usize) -> Result<SpectralEmbedding> {
        let (e, mv) = top_k_eigen_counted(s, k)?;
        self.stats.full_eigensolves += 1;
        self.stats.matvecs += mv;
        Ok(e)
    }

    /// Brings the tracked eigenpairs in line with the current substrate.
    pub fn update(&mut self, net: &SubstrateNetwork) -> Result<&SpectralEmbedding> {
        let s_new = full_attribute_matrix(net)?.0;
        let k = self.k.min(s_new.rows());
        let previous = match self.mode {
            UpdateMode::Rebuild => None,
            UpdateMode::Perturb => self.state.take().filter(|(s, e)| s.shape() == s_new.shape() && e.k() == k),
        };
        let next = match previous {
            None => self.cold(&s_new, k)?,
            Some((s_old, emb)) if s_old == s_new => {
                self.stats.unchanged += 1;
                emb
            }
            Some((s_old, emb)) => {
                let delta_norm = s_new.sub(&s_old).frobenius_norm();
                let warm = if perturbation_fallback(&emb, delta_norm).is_some() {
                    self.stats.fallbacks += 1;
                    emb
                } else {
                    self.stats.perturb_updates += 1;
                    first_order_update(&emb, &s_old, &s_new)?
                };
                let (refined, mv) = refine_eigenpairs(&s_new, &warm);
                self.stats.matvecs += mv;
                match refined {
                    Some(e) => {
                        self.stats.refinements += 1;
                        e
                    }
                    None => self.cold(&s_new, k)?,
                }
            }
        };
        self.state = Some((s_new, next));
        Ok(&self.state.as_ref().expect("state just set").1)
    }
}
