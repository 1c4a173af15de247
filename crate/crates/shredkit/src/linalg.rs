//! Dense real linear algebra: thin SVD (one-sided Jacobi with a
//! method-of-snapshots path for tall matrices), Householder QR with column
//! pivoting, and QR-based linear solves.

use crate::error::{Error, Result};

/// Relative threshold below which a singular value or R diagonal is treated
/// as zero.
pub const SINGULARITY_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 60;
const JACOBI_TOL: f64 = 1e-12;

/// Dense row-major matrix of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries, rejecting non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let n = cols.len();
        if n == 0 {
            return Err(Error::InvalidArgument("no columns".into()));
        }
        let m = cols[0].len();
        if cols.iter().any(|c| c.len() != m) {
            return Err(Error::InvalidArgument("ragged columns".into()));
        }
        let mut data = vec![0.0; m * n];
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                data[i * n + j] = v;
            }
        }
        Self::new(m, n, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Row-major matrix product, k-inner loop order for cache locality.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                lhs: vec![self.rows, self.cols],
                rhs: vec![other.rows, other.cols],
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix {
            rows: m,
            cols: n,
            data: out,
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Shape {
                op: "matvec",
                lhs: vec![self.rows, self.cols],
                rhs: vec![x.len()],
            });
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    /// Selects rows by index, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::InvalidArgument(format!(
                    "row index {} out of bounds for {} rows",
                    i, self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Matrix::new(indices.len(), self.cols, data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            Err(Error::InvalidInput("non-finite matrix entry".into()))
        } else {
            Ok(())
        }
    }
}

/// Thin SVD: `u` is m x p, `v` is n x p, p = min(m, n).
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

/// Column-pivoted QR: `q * r` equals the input with columns permuted by
/// `pivots` (pivots[j] is the original index of permuted column j).
#[derive(Debug, Clone)]
pub struct PivotedQrResult {
    pub q: Matrix,
    pub r: Matrix,
    pub pivots: Vec<usize>,
}

impl SvdResult {
    /// Rank-`r` reconstruction u_r * diag(s_r) * v_r^T.
    pub fn reconstruct(&self) -> Matrix {
        let m = self.u.rows();
        let n = self.v.rows();
        let p = self.singular_values.len();
        let mut out = Matrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..p {
                    acc += self.u.get(i, k) * self.singular_values[k] * self.v.get(j, k);
                }
                out.set(i, j, acc);
            }
        }
        out
    }
}

/// Thin singular value decomposition.
///
/// Wide matrices are handled by factoring the transpose; tall matrices
/// (rows >= 4 * cols) go through the Gram matrix of the columns, everything
/// else through one-sided Jacobi rotations.
pub fn svd_thin(a: &Matrix) -> Result<SvdResult> {
    a.check_finite()?;
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if a.rows() < a.cols() {
        let t = svd_thin(&a.transpose())?;
        return Ok(SvdResult {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    if a.rows() >= 4 * a.cols() {
        svd_snapshots(a)
    } else {
        svd_jacobi(a)
    }
}

/// One-sided Jacobi on the columns of `a` (requires rows >= cols).
fn svd_jacobi(a: &Matrix) -> Result<SvdResult> {
    let m = a.rows();
    let n = a.cols();
    // column-major working copy
    let mut work: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v = Matrix::identity(n);

    let mut converged = false;
    let mut worst_off = 0.0;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        worst_off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    alpha += work[p][i] * work[p][i];
                    beta += work[q][i] * work[q][i];
                    gamma += work[p][i] * work[q][i];
                }
                let scale = (alpha * beta).sqrt();
                if scale == 0.0 {
                    continue;
                }
                let off = gamma.abs() / scale;
                if off > worst_off {
                    worst_off = off;
                }
                if off <= JACOBI_TOL {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let wp = work[p][i];
                    let wq = work[q][i];
                    work[p][i] = c * wp - s * wq;
                    work[q][i] = s * wp + c * wq;
                }
                for i in 0..n {
                    let vp = v.get(i, p);
                    let vq = v.get(i, q);
                    v.set(i, p, c * vp - s * vq);
                    v.set(i, q, s * vp + c * vq);
                }
            }
        }
        if worst_off <= JACOBI_TOL {
            converged = true;
            break;
        }
    }
    if !converged && worst_off > 1e-9 {
        return Err(Error::Convergence {
            sweeps: JACOBI_MAX_SWEEPS,
            off: worst_off,
        });
    }

    let norms: Vec<f64> = work
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    finish_svd(m, n, work, v, norms)
}

/// Method of snapshots: eigen-decompose a^T a and recover U = a V / sigma.
fn svd_snapshots(a: &Matrix) -> Result<SvdResult> {
    let m = a.rows();
    let n = a.cols();
    let gram = a.transpose().matmul(a)?;
    let (eigvals, eigvecs) = symmetric_eig_jacobi(&gram)?;
    let sigma: Vec<f64> = eigvals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        if sigma[j] > SINGULARITY_TOL * smax && sigma[j] > 0.0 {
            let vj = eigvecs.column(j);
            // unnormalized; finish_svd divides by the singular value
            u_cols.push(a.matvec(&vj)?);
        } else {
            u_cols.push(vec![0.0; m]);
        }
    }
    let mut norms = sigma.clone();
    for j in 0..n {
        if !(sigma[j] > SINGULARITY_TOL * smax && sigma[j] > 0.0) {
            norms[j] = 0.0;
        }
    }
    finish_svd(m, n, u_cols, eigvecs, norms)
}

/// Sorts singular triples, normalizes U columns, and fills zero-sigma columns
/// with an orthonormal completion.
fn finish_svd(
    m: usize,
    n: usize,
    u_cols: Vec<Vec<f64>>,
    v: Matrix,
    norms: Vec<f64>,
) -> Result<SvdResult> {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let smax = norms.iter().cloned().fold(0.0, f64::max);
    let mut singular_values = Vec::with_capacity(n);
    let mut u_sorted: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut v_sorted = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        if s > SINGULARITY_TOL * smax && s > 0.0 {
            singular_values.push(s);
            u_sorted.push(u_cols[j].iter().map(|x| x / s).collect());
        } else {
            singular_values.push(0.0);
            u_sorted.push(vec![0.0; m]); // filled below
        }
        for i in 0..n {
            v_sorted.set(i, k, v.get(i, j));
        }
    }

    // Orthonormal completion for zero singular values: Gram-Schmidt canonical
    // basis vectors against the accepted columns.
    let mut next_basis = 0usize;
    for k in 0..n {
        if singular_values[k] > 0.0 {
            continue;
        }
        loop {
            if next_basis >= m {
                return Err(Error::Convergence {
                    sweeps: 0,
                    off: 0.0,
                });
            }
            let mut cand = vec![0.0; m];
            cand[next_basis] = 1.0;
            next_basis += 1;
            for col in u_sorted.iter().take(n) {
                let d: f64 = col.iter().zip(&cand).map(|(a, b)| a * b).sum();
                for (c, &u) in cand.iter_mut().zip(col) {
                    *c -= d * u;
                }
            }
            let nrm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm > 0.5 {
                for c in cand.iter_mut() {
                    *c /= nrm;
                }
                u_sorted[k] = cand;
                break;
            }
        }
    }

    Ok(SvdResult {
        u: Matrix::from_columns(&u_sorted)?,
        singular_values,
        v: v_sorted,
    })
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
/// Returns eigenvalues in nonincreasing order with matching eigenvector
/// columns.
fn symmetric_eig_jacobi(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    let mut w = a.clone();
    let mut v = Matrix::identity(n);
    let scale = (0..n).map(|i| w.get(i, i).abs()).fold(0.0, f64::max).max(1.0);
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(w.get(p, q).abs());
            }
        }
        if off <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = w.get(p, p);
                let aqq = w.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let wip = w.get(i, p);
                    let wiq = w.get(i, q);
                    w.set(i, p, c * wip - s * wiq);
                    w.set(i, q, s * wip + c * wiq);
                }
                for j in 0..n {
                    let wpj = w.get(p, j);
                    let wqj = w.get(q, j);
                    w.set(p, j, c * wpj - s * wqj);
                    w.set(q, j, s * wpj + c * wqj);
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (w.get(i, i), i)).collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let eigvals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (k, &(_, j)) in pairs.iter().enumerate() {
        for i in 0..n {
            vecs.set(i, k, v.get(i, j));
        }
    }
    Ok((eigvals, vecs))
}

/// Keeps the leading `r` singular triples.
pub fn truncate(svd: &SvdResult, r: usize) -> Result<SvdResult> {
    let p = svd.singular_values.len();
    if r < 1 || r > p {
        return Err(Error::InvalidArgument(format!(
            "truncation rank {} out of range 1..={}",
            r, p
        )));
    }
    let mut u = Matrix::zeros(svd.u.rows(), r);
    let mut v = Matrix::zeros(svd.v.rows(), r);
    for k in 0..r {
        for i in 0..svd.u.rows() {
            u.set(i, k, svd.u.get(i, k));
        }
        for i in 0..svd.v.rows() {
            v.set(i, k, svd.v.get(i, k));
        }
    }
    Ok(SvdResult {
        u,
        singular_values: svd.singular_values[..r].to_vec(),
        v,
    })
}

/// Householder QR with column pivoting. At every elimination step the column
/// with maximal residual norm is selected (ties to the lowest index).
pub fn qr_pivoted(a: &Matrix) -> Result<PivotedQrResult> {
    a.check_finite()?;
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let m = a.rows();
    let n = a.cols();
    let p = m.min(n);
    let mut work = a.clone();
    let mut pivots: Vec<usize> = (0..n).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(p);

    for k in 0..p {
        // residual norms recomputed exactly each step
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..n {
            let nrm: f64 = (k..m).map(|i| work.get(i, j).powi(2)).sum::<f64>().sqrt();
            if nrm > best_norm {
                best_norm = nrm;
                best = j;
            }
        }
        if best != k {
            for i in 0..m {
                let tmp = work.get(i, k);
                work.set(i, k, work.get(i, best));
                work.set(i, best, tmp);
            }
            pivots.swap(k, best);
        }

        // Householder reflector zeroing work[k+1.., k]
        let normx: f64 = (k..m).map(|i| work.get(i, k).powi(2)).sum::<f64>().sqrt();
        let mut v = vec![0.0; m - k];
        if normx > 0.0 {
            let x0 = work.get(k, k);
            let sign = if x0 >= 0.0 { 1.0 } else { -1.0 };
            for (idx, i) in (k..m).enumerate() {
                v[idx] = work.get(i, k);
            }
            v[0] += sign * normx;
            let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if vnorm > 0.0 {
                for x in v.iter_mut() {
                    *x /= vnorm;
                }
                for j in k..n {
                    let dot: f64 = (k..m).map(|i| v[i - k] * work.get(i, j)).sum();
                    for i in k..m {
                        let w = work.get(i, j) - 2.0 * v[i - k] * dot;
                        work.set(i, j, w);
                    }
                }
            }
        }
        reflectors.push(v);
        // force a nonnegative diagonal
        if work.get(k, k) < 0.0 {
            for j in k..n {
                work.set(k, j, -work.get(k, j));
            }
            // mark the sign flip by negating the reflector's effect on Q col k:
            // handled below via the sign vector
            reflectors.last_mut().unwrap().push(f64::NAN); // sentinel replaced below
        }
    }

    // Separate sign bookkeeping: a trailing NaN sentinel marks a flipped row.
    let mut flips = vec![false; p];
    let mut clean: Vec<Vec<f64>> = Vec::with_capacity(p);
    for (k, mut v) in reflectors.into_iter().enumerate() {
        if v.last().is_some_and(|x| x.is_nan()) {
            v.pop();
            flips[k] = true;
        }
        clean.push(v);
    }

    // R = leading p rows of the transformed matrix
    let mut r = Matrix::zeros(p, n);
    for i in 0..p {
        for j in 0..n {
            r.set(i, j, if j < i { 0.0 } else { work.get(i, j) });
        }
    }

    // Q: apply reflectors in reverse to the m x p identity block, then apply
    // column sign flips matching the R row flips.
    let mut q = Matrix::zeros(m, p);
    for j in 0..p {
        q.set(j, j, 1.0);
    }
    for k in (0..p).rev() {
        let v = &clean[k];
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        for j in 0..p {
            let dot: f64 = (k..m).map(|i| v[i - k] * q.get(i, j)).sum();
            if dot != 0.0 {
                for i in k..m {
                    let w = q.get(i, j) - 2.0 * v[i - k] * dot;
                    q.set(i, j, w);
                }
            }
        }
    }
    for k in 0..p {
        if flips[k] {
            for i in 0..m {
                q.set(i, k, -q.get(i, k));
            }
        }
    }

    Ok(PivotedQrResult { q, r, pivots })
}

/// Minimum-residual solve of `a x = b` via Householder QR (exact inverse when
/// `a` is square and nonsingular). Requires rows >= cols.
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    a.check_finite()?;
    let n = a.rows();
    let r = a.cols();
    if n < r {
        return Err(Error::InvalidArgument(format!(
            "underdetermined system: {} rows < {} cols",
            n, r
        )));
    }
    if b.len() != n {
        return Err(Error::Shape {
            op: "solve_linear",
            lhs: vec![n, r],
            rhs: vec![b.len()],
        });
    }
    let mut work = a.clone();
    let mut rhs = b.to_vec();
    for k in 0..r {
        let normx: f64 = (k..n).map(|i| work.get(i, k).powi(2)).sum::<f64>().sqrt();
        if normx == 0.0 {
            continue;
        }
        let x0 = work.get(k, k);
        let sign = if x0 >= 0.0 { 1.0 } else { -1.0 };
        let mut v = vec![0.0; n - k];
        for (idx, i) in (k..n).enumerate() {
            v[idx] = work.get(i, k);
        }
        v[0] += sign * normx;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for x in v.iter_mut() {
            *x /= vnorm;
        }
        for j in k..r {
            let dot: f64 = (k..n).map(|i| v[i - k] * work.get(i, j)).sum();
            for i in k..n {
                let w = work.get(i, j) - 2.0 * v[i - k] * dot;
                work.set(i, j, w);
            }
        }
        let dot: f64 = (k..n).map(|i| v[i - k] * rhs[i]).sum();
        for i in k..n {
            rhs[i] -= 2.0 * v[i - k] * dot;
        }
    }

    let diag_max = (0..r).map(|i| work.get(i, i).abs()).fold(0.0, f64::max);
    let diag_min = (0..r)
        .map(|i| work.get(i, i).abs())
        .fold(f64::INFINITY, f64::min);
    if diag_max == 0.0 || diag_min < SINGULARITY_TOL * diag_max {
        let cond = if diag_min > 0.0 {
            diag_max / diag_min
        } else {
            f64::INFINITY
        };
        return Err(Error::IllConditioned { cond });
    }

    let mut x = vec![0.0; r];
    for i in (0..r).rev() {
        let mut acc = rhs[i];
        for j in (i + 1)..r {
            acc -= work.get(i, j) * x[j];
        }
        x[i] = acc / work.get(i, i);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Matrix {
        let data: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::new(m, n, data).unwrap()
    }

    fn assert_orthonormal_cols(m: &Matrix, tol: f64) {
        for i in 0..m.cols() {
            for j in 0..m.cols() {
                let dot: f64 = (0..m.rows()).map(|k| m.get(k, i) * m.get(k, j)).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (dot - expect).abs() < tol,
                    "column gram ({},{}) = {}",
                    i,
                    j,
                    dot
                );
            }
        }
    }

    #[test]
    fn svd_diagonal() {
        let a = Matrix::new(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let s = svd_thin(&a).unwrap();
        assert!((s.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((s.singular_values[1] - 1.0).abs() < 1e-12);
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s.u.get(i, j).abs() - expect).abs() < 1e-12);
                assert!((s.v.get(i, j).abs() - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn svd_reconstruction_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let m = rng.gen_range(1..=20);
            let n = rng.gen_range(1..=20);
            let a = random_matrix(&mut rng, m, n);
            let s = svd_thin(&a).unwrap();
            assert_orthonormal_cols(&s.u, 1e-10);
            assert_orthonormal_cols(&s.v, 1e-10);
            let rec = s.reconstruct();
            let mut diff = 0.0;
            for i in 0..m {
                for j in 0..n {
                    diff += (rec.get(i, j) - a.get(i, j)).powi(2);
                }
            }
            let rel = diff.sqrt() / a.frobenius_norm().max(1e-300);
            assert!(rel < 1e-10, "relative error {}", rel);
            for w in s.singular_values.windows(2) {
                assert!(w[0] >= w[1]);
            }
            assert!(s.singular_values.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn svd_rank_deficient() {
        // two identical columns
        let a = Matrix::new(3, 2, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap();
        let s = svd_thin(&a).unwrap();
        assert!(s.singular_values[1].abs() < 1e-10);
        assert_orthonormal_cols(&s.u, 1e-10);
    }

    #[test]
    fn svd_tall_snapshot_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(&mut rng, 40, 5);
        let s = svd_thin(&a).unwrap();
        assert_orthonormal_cols(&s.u, 1e-10);
        let rec = s.reconstruct();
        let mut diff = 0.0;
        for i in 0..40 {
            for j in 0..5 {
                diff += (rec.get(i, j) - a.get(i, j)).powi(2);
            }
        }
        assert!(diff.sqrt() / a.frobenius_norm() < 1e-10);
    }

    #[test]
    fn svd_rejects_nonfinite() {
        let err = Matrix::new(1, 1, vec![f64::NAN]);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn truncate_full_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 5, 4);
        let s = svd_thin(&a).unwrap();
        let t = truncate(&s, 4).unwrap();
        assert_eq!(t.singular_values, s.singular_values);
    }

    #[test]
    fn truncate_diagonal() {
        let a = Matrix::new(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let s = svd_thin(&a).unwrap();
        let t = truncate(&s, 1).unwrap();
        assert_eq!(t.singular_values.len(), 1);
        assert!((t.singular_values[0] - 3.0).abs() < 1e-12);
        let rec = t.reconstruct();
        assert!((rec.get(0, 0) - 3.0).abs() < 1e-12);
        assert!(rec.get(1, 1).abs() < 1e-12);
    }

    #[test]
    fn truncate_error_matches_discarded_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a = random_matrix(&mut rng, 8, 8);
        let s = svd_thin(&a).unwrap();
        let t = truncate(&s, 3).unwrap();
        let rec = t.reconstruct();
        let mut diff = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                diff += (rec.get(i, j) - a.get(i, j)).powi(2);
            }
        }
        let expected: f64 = s.singular_values[3..].iter().map(|x| x * x).sum();
        assert!((diff.sqrt() - expected.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn truncate_out_of_range() {
        let a = Matrix::identity(3);
        let s = svd_thin(&a).unwrap();
        assert!(truncate(&s, 0).is_err());
        assert!(truncate(&s, 4).is_err());
    }

    #[test]
    fn qr_identity() {
        let a = Matrix::identity(3);
        let f = qr_pivoted(&a).unwrap();
        assert_eq!(f.pivots, vec![0, 1, 2]);
        for i in 0..3 {
            assert!((f.r.get(i, i).abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn qr_hand_example() {
        // column 0 has norm 2 > 1, so pivot order is (0, 1)
        let a = Matrix::new(2, 2, vec![0.0, 1.0, 2.0, 0.0]).unwrap();
        let f = qr_pivoted(&a).unwrap();
        assert_eq!(f.pivots, vec![0, 1]);
        assert!((f.r.get(0, 0).abs() - 2.0).abs() < 1e-12);
        assert!((f.r.get(1, 1).abs() - 1.0).abs() < 1e-12);
    }

    /// Greedy oracle: recompute residual column norms by explicit projection
    /// onto the orthogonal complement of the already-selected columns.
    fn greedy_pivot_oracle(a: &Matrix) -> Vec<usize> {
        let m = a.rows();
        let n = a.cols();
        let p = m.min(n);
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut remaining: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::new();
        for _ in 0..p {
            let mut best = remaining[0];
            let mut best_norm = -1.0;
            for &j in &remaining {
                let mut col = a.column(j);
                for b in &basis {
                    let d: f64 = col.iter().zip(b).map(|(x, y)| x * y).sum();
                    for (c, &bb) in col.iter_mut().zip(b) {
                        *c -= d * bb;
                    }
                }
                let nrm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nrm > best_norm + 1e-12 {
                    best_norm = nrm;
                    best = j;
                }
            }
            pivots.push(best);
            remaining.retain(|&j| j != best);
            let mut col = a.column(best);
            for b in &basis {
                let d: f64 = col.iter().zip(b).map(|(x, y)| x * y).sum();
                for (c, &bb) in col.iter_mut().zip(b) {
                    *c -= d * bb;
                }
            }
            let nrm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm > 0.0 {
                for c in col.iter_mut() {
                    *c /= nrm;
                }
                basis.push(col);
            }
        }
        pivots
    }

    #[test]
    fn qr_pivots_match_projection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..30 {
            let m = rng.gen_range(4..=12);
            let n = rng.gen_range(1..=m);
            let a = random_matrix(&mut rng, m, n);
            let f = qr_pivoted(&a).unwrap();
            let oracle = greedy_pivot_oracle(&a);
            assert_eq!(&f.pivots[..oracle.len()], &oracle[..]);
        }
    }

    #[test]
    fn qr_factorization_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m = rng.gen_range(2..=10);
            let n = rng.gen_range(1..=10);
            let a = random_matrix(&mut rng, m, n);
            let f = qr_pivoted(&a).unwrap();
            assert_orthonormal_cols(&f.q, 1e-10);
            let qr = f.q.matmul(&f.r).unwrap();
            for (jp, &jorig) in f.pivots.iter().enumerate() {
                for i in 0..m {
                    assert!(
                        (qr.get(i, jp) - a.get(i, jorig)).abs()
                            < 1e-10 * a.frobenius_norm().max(1.0)
                    );
                }
            }
            // nonincreasing nonnegative diagonal
            let p = m.min(n);
            for i in 0..p {
                assert!(f.r.get(i, i) >= 0.0);
            }
            for i in 1..p {
                assert!(f.r.get(i, i) <= f.r.get(i - 1, i - 1) + 1e-12);
            }
        }
    }

    #[test]
    fn solve_identity() {
        let a = Matrix::identity(2);
        let x = solve_linear(&a, &[5.0, 7.0]).unwrap();
        assert!((x[0] - 5.0).abs() < 1e-12 && (x[1] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn solve_diagonal() {
        let a = Matrix::new(2, 2, vec![2.0, 0.0, 0.0, 4.0]).unwrap();
        let x = solve_linear(&a, &[2.0, 8.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn solve_least_squares_mean() {
        let a = Matrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let x = solve_linear(&a, &[1.0, 3.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn solve_singular_reports_condition() {
        let a = Matrix::new(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        match solve_linear(&a, &[1.0, 1.0]) {
            Err(Error::IllConditioned { cond }) => assert!(cond > 1e10),
            other => panic!("expected ill-conditioned, got {:?}", other),
        }
    }

    #[test]
    fn eckart_young_rank_one_spot_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let a = random_matrix(&mut rng, 5, 5);
        let s = svd_thin(&a).unwrap();
        let best = truncate(&s, 1).unwrap().reconstruct();
        let mut best_err = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                best_err += (best.get(i, j) - a.get(i, j)).powi(2);
            }
        }
        for _ in 0..10_000 {
            let u: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut err = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    err += (u[i] * v[j] - a.get(i, j)).powi(2);
                }
            }
            assert!(err + 1e-12 >= best_err);
        }
    }
}
