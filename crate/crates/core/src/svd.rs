//! Truncated SVD for snapshot matrices.
//!
//! Tall inputs go straight to one-sided (Hestenes) Jacobi. Wide inputs, the
//! usual shape of a snapshot matrix, are first compressed by a Householder QR
//! of `S^T`, so the Jacobi sweeps only ever touch a `rows x rows` factor.

use crate::error::{check_len, Error, Result};
use crate::matrix::DenseMatrix;
use crate::scalar::{axpy, canonical_sign, dot, norm2, Scalar};

const MAX_SWEEPS: usize = 80;

#[derive(Clone, Debug)]
pub struct SvdResult<T> {
    /// Non-increasing, non-negative.
    pub singular_values: Vec<T>,
    /// `rows x k`, orthonormal columns.
    pub left: DenseMatrix<T>,
    /// `cols x k`, orthonormal columns.
    pub right: DenseMatrix<T>,
}

impl<T: Scalar> SvdResult<T> {
    /// `Σ σ_i u_i v_i^T`
    pub fn reconstruct(&self) -> DenseMatrix<T> {
        let mut us = self.left.clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            us.col_mut(j).iter_mut().for_each(|x| *x *= s);
        }
        us.matmul(&self.right.transpose()).expect("compatible factors")
    }
}

/// Top-`k` singular triplets of `s`.
pub fn truncated_svd<T: Scalar>(s: &DenseMatrix<T>, k: usize) -> Result<SvdResult<T>> {
    let (m, n) = s.shape();
    if k > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "requested {k} singular triplets from a {m}x{n} matrix"
        )));
    }
    if !s.is_finite() {
        return Err(Error::NonFinite("truncated_svd input"));
    }
    let mut full = if m >= n { jacobi_tall(s) } else { svd_wide(s, k) };
    truncate(&mut full, k);
    Ok(full)
}

fn truncate<T: Scalar>(r: &mut SvdResult<T>, k: usize) {
    r.singular_values.truncate(k);
    r.left = r.left.column_block(0, k);
    r.right = r.right.column_block(0, k);
}

/// One-sided Jacobi for `m >= n`; returns all `n` triplets.
fn jacobi_tall<T: Scalar>(s: &DenseMatrix<T>) -> SvdResult<T> {
    let (m, n) = s.shape();
    let mut b = s.clone();
    let mut v = DenseMatrix::<T>::identity(n);
    let tol = T::epsilon() * T::from_count(m.max(1));
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = dot(b.col(i), b.col(i));
                let beta = dot(b.col(j), b.col(j));
                let gamma = dot(b.col(i), b.col(j));
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let sn = c * t;
                rotate_columns(&mut b, i, j, c, sn);
                rotate_columns(&mut v, i, j, c, sn);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(usize, T)> = (0..n).map(|j| (j, norm2(b.col(j)))).collect();
    // Stable sort keeps ties in column order, which keeps results deterministic.
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let scale = order.first().map_or(T::zero(), |o| o.1);
    let mut left = DenseMatrix::zeros(m, n);
    let mut right = DenseMatrix::zeros(n, n);
    let mut sv = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (dst, &(src, sigma)) in order.iter().enumerate() {
        right.col_mut(dst).copy_from_slice(v.col(src));
        if sigma > T::epsilon() * scale * T::from_count(m.max(n)) && sigma > T::zero() {
            let u: Vec<T> = b.col(src).iter().map(|&x| x / sigma).collect();
            left.col_mut(dst).copy_from_slice(&u);
            sv.push(sigma);
        } else {
            sv.push(sigma);
            missing.push(dst);
        }
    }
    complete_orthonormal(&mut left, &missing);
    let mut out = SvdResult {
        singular_values: sv,
        left,
        right,
    };
    fix_signs(&mut out);
    out
}

fn rotate_columns<T: Scalar>(m: &mut DenseMatrix<T>, i: usize, j: usize, c: T, s: T) {
    let (ci, cj) = m.col_pair_mut(i, j);
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills the listed columns with unit vectors orthogonal to every other column.
fn complete_orthonormal<T: Scalar>(u: &mut DenseMatrix<T>, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let rows = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|j| !missing.contains(j)).collect();
    for &dst in missing {
        // the canonical vector with the largest residual, 1 - sum_j u_ij^2 >= 1 - filled/rows
        let leverage = |i: usize| filled.iter().map(|&j| u[(i, j)] * u[(i, j)]).sum::<T>();
        let pick = (0..rows)
            .min_by(|&a, &b| leverage(a).partial_cmp(&leverage(b)).unwrap_or(std::cmp::Ordering::Equal))
            .expect("at least one row");
        let mut e = vec![T::zero(); rows];
        e[pick] = T::one();
        for _ in 0..2 {
            for &j in &filled {
                let c = dot(u.col(j), &e);
                axpy(-c, u.col(j), &mut e);
            }
        }
        let nrm = norm2(&e);
        assert!(nrm > T::zero(), "cannot complete an orthonormal set");
        e.iter_mut().for_each(|x| *x /= nrm);
        u.col_mut(dst).copy_from_slice(&e);
        filled.push(dst);
    }
}

fn fix_signs<T: Scalar>(r: &mut SvdResult<T>) {
    for j in 0..r.left.cols() {
        let before = r.left.col(j).to_vec();
        let col = r.left.col_mut(j);
        canonical_sign(col);
        if col.iter().zip(&before).any(|(a, b)| *a != *b) {
            r.right.col_mut(j).iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Top-`k` singular values and left singular vectors of `s`, without the right vectors.
///
/// Wide inputs are reduced to the triangular factor of `S^T`, accumulated one
/// cache-sized block of columns at a time, so `s` is streamed only once.
pub fn left_singular_vectors<T: Scalar>(s: &DenseMatrix<T>, k: usize) -> Result<(Vec<T>, DenseMatrix<T>)> {
    let (m, n) = s.shape();
    if k > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "requested {k} singular vectors from a {m}x{n} matrix"
        )));
    }
    if !s.is_finite() {
        return Err(Error::NonFinite("left_singular_vectors input"));
    }
    if n < m {
        let r = truncated_svd(s, k)?;
        return Ok((r.singular_values, r.left));
    }
    let mut small = jacobi_tall(&gram_factor(s).transpose());
    truncate(&mut small, k);
    Ok((small.singular_values, small.left))
}

/// Upper-triangular `R` (`rows x rows`) with `R^T R = S S^T`: the R factor of
/// `S^T`, built by Householder updates of `[R; B]` for successive row blocks `B` of `S^T`.
fn gram_factor<T: Scalar>(s: &DenseMatrix<T>) -> DenseMatrix<T> {
    let (m, n) = s.shape();
    let block = 64;
    let mut r = DenseMatrix::<T>::zeros(m, m);
    let mut b = vec![T::zero(); block * m];
    let mut v = vec![T::zero(); block];
    for start in (0..n).step_by(block) {
        let len = block.min(n - start);
        // b is len x m, column-major: b[j * len + i] = S[j, start + i]
        for i in 0..len {
            for (j, &x) in s.col(start + i).iter().enumerate() {
                b[j * len + i] = x;
            }
        }
        for kk in 0..m {
            let rkk = r[(kk, kk)];
            let col = &b[kk * len..(kk + 1) * len];
            let mx = col.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
            if mx == T::zero() {
                continue;
            }
            // work with the reflector scaled to O(1) entries
            let mx = mx.max(rkk.abs());
            for (vi, &x) in v.iter_mut().zip(col) {
                *vi = x / mx;
            }
            let u0 = rkk / mx;
            let tail = dot(&v[..len], &v[..len]);
            let nrm = (u0 * u0 + tail).sqrt();
            let alpha = if u0 > T::zero() { -nrm } else { nrm };
            let v0 = u0 - alpha;
            let scale = T::lit(2.0) / (v0 * v0 + tail);
            for j in kk + 1..m {
                let col = &mut b[j * len..(j + 1) * len];
                let f = scale * (v0 * r[(kk, j)] + dot(&v[..len], col));
                r[(kk, j)] -= f * v0;
                axpy(-f, &v[..len], col);
            }
            r[(kk, kk)] = alpha * mx;
            b[kk * len..(kk + 1) * len].iter_mut().for_each(|x| *x = T::zero());
        }
    }
    r
}

/// `S = R^T Q^T` with `S^T = Q R`; the SVD of the square `R^T` carries the left vectors.
fn svd_wide<T: Scalar>(s: &DenseMatrix<T>, k: usize) -> SvdResult<T> {
    let (m, n) = s.shape();
    let qr = HouseholderQr::factor(s.transpose());
    let rt = qr.r().transpose();
    let small = jacobi_tall(&rt);
    // Right vectors of S are Q W, W the right vectors of R^T (m x m).
    let mut padded = DenseMatrix::zeros(n, k);
    for j in 0..k {
        padded.col_mut(j)[..m].copy_from_slice(small.right.col(j));
    }
    let right = qr.apply_q(padded);
    SvdResult {
        singular_values: small.singular_values,
        left: small.left,
        right,
    }
}

/// Householder QR of a tall matrix, reflectors kept in compact form.
struct HouseholderQr<T> {
    a: DenseMatrix<T>,
    vs: Vec<Vec<T>>,
}

impl<T: Scalar> HouseholderQr<T> {
    fn factor(mut a: DenseMatrix<T>) -> Self {
        let (m, n) = a.shape();
        let mut vs = Vec::with_capacity(n);
        for k in 0..n.min(m) {
            let x: Vec<T> = a.col(k)[k..].to_vec();
            let nrm = norm2(&x);
            let mut v = x;
            if nrm == T::zero() {
                vs.push(v.iter().map(|_| T::zero()).collect());
                continue;
            }
            let alpha = if v[0] > T::zero() { -nrm } else { nrm };
            v[0] -= alpha;
            let vn = norm2(&v);
            v.iter_mut().for_each(|x| *x /= vn);
            for j in k..n {
                let c = &mut a.col_mut(j)[k..];
                let f = T::lit(2.0) * dot(&v, c);
                axpy(-f, &v, c);
            }
            vs.push(v);
        }
        Self { a, vs }
    }

    fn r(&self) -> DenseMatrix<T> {
        let n = self.a.cols();
        DenseMatrix::from_fn(n, n, |i, j| if i <= j { self.a[(i, j)] } else { T::zero() })
    }

    /// `Q x` for every column of `x`.
    fn apply_q(&self, mut x: DenseMatrix<T>) -> DenseMatrix<T> {
        for (k, v) in self.vs.iter().enumerate().rev() {
            for j in 0..x.cols() {
                let c = &mut x.col_mut(j)[k..];
                let f = T::lit(2.0) * dot(v, c);
                axpy(-f, v, c);
            }
        }
        x
    }
}

/// Truncated SVD of the complex matrix `re + i·im`.
#[derive(Clone, Debug)]
pub struct ComplexSvd<T> {
    /// Real parts of the left singular vectors (`Φ`).
    pub real: DenseMatrix<T>,
    /// Imaginary parts of the left singular vectors (`Ψ`).
    pub imag: DenseMatrix<T>,
    pub singular_values: Vec<T>,
}

/// Top-`k` left singular vectors of `re + i·im`, split into real and imaginary parts.
///
/// Computed through the real embedding `[A, J^T A]` with `A = [re; im]`, whose
/// singular values come in equal pairs; one representative per complex direction
/// is kept. When `A` is wide it is first replaced by `R^T`, `R` the triangular
/// factor of `A^T`, which leaves `A A^T` and hence the left vectors unchanged.
pub fn complex_truncated_svd<T: Scalar>(
    re: &DenseMatrix<T>,
    im: &DenseMatrix<T>,
    k: usize,
) -> Result<ComplexSvd<T>> {
    check_len("complex_truncated_svd (rows)", re.rows(), im.rows())?;
    check_len("complex_truncated_svd (cols)", re.cols(), im.cols())?;
    let (m, n) = re.shape();
    if k > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "requested {k} complex singular vectors from a {m}x{n} matrix"
        )));
    }
    let stacked = re.vcat(im)?;
    let a = if n >= 2 * m {
        gram_factor(&stacked).transpose()
    } else {
        stacked
    };
    let companion = crate::symplectic::apply_j_columns(&a, true)?;
    let embedded = a.hcat(&companion)?;
    let (real_sv, real_left) = left_singular_vectors(&embedded, (2 * k).min(2 * m.min(n)))?;

    let mut selected: Vec<Vec<T>> = Vec::with_capacity(k);
    let mut sigmas = Vec::with_capacity(k);
    for (j, &sigma) in real_sv.iter().enumerate() {
        if selected.len() == k {
            break;
        }
        let mut w = real_left.col(j).to_vec();
        for _ in 0..2 {
            complex_orthogonalize(&mut w, &selected, m);
        }
        let nrm = norm2(&w);
        if nrm > T::lit(0.5) {
            w.iter_mut().for_each(|x| *x /= nrm);
            selected.push(w);
            sigmas.push(sigma);
        }
    }
    // Rank-deficient inputs: the embedded SVD already completed the orthonormal
    // set, but the companion direction of a zero singular value may be needed.
    let mut probe = 0;
    while selected.len() < k {
        let mut w = vec![T::zero(); 2 * m];
        w[probe % (2 * m)] = T::one();
        probe += 1;
        for _ in 0..2 {
            complex_orthogonalize(&mut w, &selected, m);
        }
        let nrm = norm2(&w);
        if nrm > T::lit(0.5) {
            w.iter_mut().for_each(|x| *x /= nrm);
            selected.push(w);
            sigmas.push(T::zero());
        }
    }
    for w in selected.iter_mut() {
        normalize_phase(w, m);
    }
    let real = DenseMatrix::from_fn(m, k, |i, j| selected[j][i]);
    let imag = DenseMatrix::from_fn(m, k, |i, j| selected[j][m + i]);
    Ok(ComplexSvd {
        real,
        imag,
        singular_values: sigmas,
    })
}

/// Multiplies the complex vector `(r; s)` by a unit phase so that its
/// largest-modulus entry (first one among near-ties) is real and positive.
fn normalize_phase<T: Scalar>(w: &mut [T], m: usize) {
    let moduli: Vec<T> = (0..m).map(|i| w[i].hypot(w[m + i])).collect();
    let max = moduli.iter().fold(T::zero(), |a, &b| a.max(b));
    if max == T::zero() {
        return;
    }
    let cutoff = max * (T::one() - T::lit(1e-10));
    let j = moduli.iter().position(|&x| x >= cutoff).unwrap_or(0);
    let (c, s) = (w[j] / moduli[j], w[m + j] / moduli[j]);
    for i in 0..m {
        let (r, im) = (w[i], w[m + i]);
        w[i] = r * c + im * s;
        w[m + i] = im * c - r * s;
    }
    w[m + j] = T::zero();
}

/// Removes from `w = (r; s)` its components along every selected complex
/// direction `u = (a; b)`, i.e. along both `(a; b)` and `(-b; a)`.
fn complex_orthogonalize<T: Scalar>(w: &mut [T], selected: &[Vec<T>], m: usize) {
    let mut partner = vec![T::zero(); 2 * m];
    for u in selected {
        let c = dot(u, w);
        axpy(-c, u, w);
        for i in 0..m {
            partner[i] = -u[m + i];
            partner[m + i] = u[i];
        }
        let c = dot(&partner, w);
        axpy(-c, &partner, w);
    }
}

/// Condition number `σ_max / σ_min` of a square matrix.
pub fn condition_number<T: Scalar>(a: &DenseMatrix<T>) -> Result<T> {
    let k = a.rows().min(a.cols());
    let svd = truncated_svd(a, k)?;
    let max = svd.singular_values.first().copied().unwrap_or(T::zero());
    let min = svd.singular_values.last().copied().unwrap_or(T::zero());
    Ok(if min == T::zero() { T::infinity() } else { max / min })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let s = DenseMatrix::<f64>::from_rows(&[&[2.0, 0.0], &[0.0, 1.0]]);
        let r = truncated_svd(&s, 1).unwrap();
        assert_eq!(r.singular_values, vec![2.0]);
        assert_eq!(r.left.col(0), &[1.0, 0.0]);
    }

    #[test]
    fn three_four_five() {
        let s = DenseMatrix::<f64>::from_rows(&[&[3.0, 0.0], &[4.0, 0.0]]);
        let r = truncated_svd(&s, 1).unwrap();
        assert!((r.singular_values[0] - 5.0).abs() < 1e-14);
        assert!((r.left[(0, 0)] - 0.6).abs() < 1e-14);
        assert!((r.left[(1, 0)] - 0.8).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_keeps_orthonormal_factors() {
        let s = DenseMatrix::<f64>::zeros(3, 5);
        let r = truncated_svd(&s, 3).unwrap();
        assert!(r.singular_values.iter().all(|&x| x == 0.0));
        assert!(r.left.orthonormality_residual() < 1e-14);
    }

    #[test]
    fn rejects_bad_requests() {
        let s = DenseMatrix::<f64>::zeros(3, 2);
        assert!(truncated_svd(&s, 3).is_err());
        let mut bad = DenseMatrix::<f64>::zeros(2, 2);
        bad[(0, 1)] = f64::NAN;
        assert!(matches!(truncated_svd(&bad, 1), Err(Error::NonFinite(_))));
    }

    #[test]
    fn wide_matrix_goes_through_qr() {
        let s = DenseMatrix::<f64>::from_rows(&[&[1.0, 2.0, 0.0, 1.0], &[0.0, 1.0, 3.0, -1.0]]);
        let r = truncated_svd(&s, 2).unwrap();
        let err = r.reconstruct().sub(&s).unwrap().frobenius_norm();
        assert!(err < 1e-13, "{err}");
        assert!(r.right.orthonormality_residual() < 1e-13);
    }

    #[test]
    fn complex_single_column() {
        let re = DenseMatrix::<f64>::from_rows(&[&[1.0], &[0.0]]);
        let im = DenseMatrix::<f64>::from_rows(&[&[0.0], &[1.0]]);
        let c = complex_truncated_svd(&re, &im, 1).unwrap();
        let h = 0.5f64.sqrt();
        let (r, s) = (c.real.col(0), c.imag.col(0));
        assert!((r[0] - h).abs() < 1e-14 && r[1].abs() < 1e-14);
        assert!(s[0].abs() < 1e-14 && (s[1] - h).abs() < 1e-14);
        assert!((dot(r, r) + dot(s, s) - 1.0).abs() < 1e-14);
        assert!((c.singular_values[0] - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn complex_with_zero_imaginary_part_is_real() {
        let re = DenseMatrix::<f64>::from_rows(&[&[3.0, 1.0], &[4.0, 0.0], &[0.0, 2.0]]);
        let im = DenseMatrix::<f64>::zeros(3, 2);
        let c = complex_truncated_svd(&re, &im, 2).unwrap();
        let real = truncated_svd(&re, 2).unwrap();
        for j in 0..2 {
            assert!((c.singular_values[j] - real.singular_values[j]).abs() < 1e-12);
            assert!(c.imag.col(j).iter().all(|x| x.abs() < 1e-12));
            let rr = dot(c.real.col(j), real.left.col(j));
            assert!((rr - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_rank_deficient_input_completes_left_basis() {
        // rank 3, 40 rows, 300 columns
        let s = DenseMatrix::<f64>::from_fn(40, 300, |i, j| {
            let (x, t) = (i as f64 / 40.0, j as f64 / 300.0);
            x.sin() * t + (2.0 * x).cos() * t * t + x * x * (3.0 * t).sin()
        });
        let r = truncated_svd(&s, 40).unwrap();
        assert!(r.left.orthonormality_residual() < 1e-12);
        assert!(r.singular_values[3] < 1e-10 * r.singular_values[0]);
    }

    #[test]
    fn left_only_path_matches_full_svd() {
        let s = DenseMatrix::<f64>::from_fn(30, 500, |i, j| ((i * 7 + j * 3) % 11) as f64 + (i as f64 * 0.3 + j as f64 * 0.01).sin());
        let full = truncated_svd(&s, 12).unwrap();
        let (sv, left) = left_singular_vectors(&s, 12).unwrap();
        for (a, b) in sv.iter().zip(&full.singular_values) {
            assert!((a - b).abs() <= 1e-12 * full.singular_values[0]);
        }
        // compare spans through the projector difference
        let p1 = left.matmul(&left.transpose()).unwrap();
        let p2 = full.left.matmul(&full.left.transpose()).unwrap();
        assert!(p1.sub(&p2).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn gram_factor_reproduces_gram_matrix() {
        let s = DenseMatrix::<f64>::from_fn(90, 1000, |i, j| ((i + 1) as f64 * (j as f64 * 0.07).cos()).tanh());
        let r = gram_factor(&s);
        let g1 = r.transpose().matmul(&r).unwrap();
        let g2 = s.matmul(&s.transpose()).unwrap();
        assert!(g1.sub(&g2).unwrap().max_abs() < 1e-10 * g2.max_abs());
        for j in 0..90 {
            for i in j + 1..90 {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn gram_factor_handles_tiny_columns() {
        let s = DenseMatrix::<f64>::from_fn(4, 70, |i, j| if j < 3 { (i + j) as f64 } else { 1e-170 * (i * j) as f64 });
        let r = gram_factor(&s);
        assert!(r.is_finite());
        let g = r.transpose().matmul(&r).unwrap();
        assert!(g.sub(&s.matmul(&s.transpose()).unwrap()).unwrap().max_abs() < 1e-12);
    }
}
