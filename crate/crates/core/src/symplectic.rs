//! Canonical symplectic linear algebra on `R^{2n}` with states ordered `(q, p)`.
//!
//! The structure matrix `J_{2n} = [[0, I], [-I, 0]]` is never materialized:
//! every product with it is an index swap with a sign flip.

use crate::error::{check_even, check_len, Error, Result};
use crate::matrix::DenseMatrix;
use crate::scalar::{axpy, canonical_sign, dot, norm2, Scalar};

/// Tolerance used when validating the orthosymplectic invariants of a basis.
pub const BASIS_TOLERANCE: f64 = 1e-10;

/// `J v` (or `J^T v`) for `v = (q, p)`: `J v = (p, -q)`, `J^T v = (-p, q)`.
pub fn apply_j<T: Scalar>(v: &[T], transpose: bool) -> Result<Vec<T>> {
    check_even("apply_j", v.len())?;
    let mut out = vec![T::zero(); v.len()];
    apply_j_into(v, transpose, &mut out);
    Ok(out)
}

pub(crate) fn apply_j_into<T: Scalar>(v: &[T], transpose: bool, out: &mut [T]) {
    let n = v.len() / 2;
    let (q, p) = v.split_at(n);
    let (oq, op) = out.split_at_mut(n);
    if transpose {
        for i in 0..n {
            oq[i] = -p[i];
            op[i] = q[i];
        }
    } else {
        for i in 0..n {
            oq[i] = p[i];
            op[i] = -q[i];
        }
    }
}

/// Applies `J` (or `J^T`) to every column of `m`.
pub fn apply_j_columns<T: Scalar>(m: &DenseMatrix<T>, transpose: bool) -> Result<DenseMatrix<T>> {
    check_even("apply_j_columns", m.rows())?;
    let mut out = DenseMatrix::zeros(m.rows(), m.cols());
    for j in 0..m.cols() {
        apply_j_into(m.col(j), transpose, out.col_mut(j));
    }
    Ok(out)
}

/// The symplectic form `Ω(u, v) = u^T J v = <u_q, v_p> - <u_p, v_q>`.
pub fn omega<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    check_len("omega", u.len(), v.len())?;
    check_even("omega", u.len())?;
    Ok(omega_unchecked(u, v))
}

#[inline]
pub(crate) fn omega_unchecked<T: Scalar>(u: &[T], v: &[T]) -> T {
    let n = u.len() / 2;
    dot(&u[..n], &v[n..]) - dot(&u[n..], &v[..n])
}

/// `A^+ = J_{2k}^T A^T J_{2n}` for a `2n x 2k` matrix.
pub fn symplectic_inverse<T: Scalar>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    check_even("symplectic_inverse (rows)", a.rows())?;
    check_even("symplectic_inverse (cols)", a.cols())?;
    // A^T J = (J^T A)^T
    let at_j = apply_j_columns(a, true)?.transpose();
    apply_j_columns(&at_j, true)
}

/// `‖A^T J_{2n} A − J_{2k}‖_F`.
pub fn check_symplectic<T: Scalar>(a: &DenseMatrix<T>) -> Result<T> {
    check_even("check_symplectic (rows)", a.rows())?;
    check_even("check_symplectic (cols)", a.cols())?;
    let ja = apply_j_columns(a, false)?;
    let form = a.tr_matmul(&ja)?;
    let k = a.cols() / 2;
    let mut s = T::zero();
    for j in 0..a.cols() {
        for i in 0..a.cols() {
            let target = if j == i + k {
                T::one()
            } else if i == j + k {
                -T::one()
            } else {
                T::zero()
            };
            let d = form[(i, j)] - target;
            s += d * d;
        }
    }
    Ok(s.sqrt())
}

/// Knobs of the symplectic Gram-Schmidt step.
#[derive(Clone, Copy, Debug)]
pub struct GramSchmidtOptions {
    /// A candidate whose orthogonalized norm falls below `degenerate_rel_tol * ‖z‖`
    /// counts as lying in the span of the basis.
    pub degenerate_rel_tol: f64,
    /// Further orthogonalization passes (at most two) run while `‖A^T ẑ‖` exceeds this
    /// after normalization.
    pub reorth_tol: f64,
}

impl Default for GramSchmidtOptions {
    fn default() -> Self {
        Self {
            degenerate_rel_tol: 1e-12,
            reorth_tol: 1e-13,
        }
    }
}

/// Orthosymplectic basis `A = [E, J^T E]` of a `2k`-dimensional symplectic
/// subspace of `R^{2n}`. Only `E` is stored; `F = J^T E` is derived.
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticBasis<T> {
    n: usize,
    e: DenseMatrix<T>,
}

impl<T: Scalar> SymplecticBasis<T> {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            e: DenseMatrix::zeros(2 * n, 0),
        }
    }

    /// Wraps an `E` block, validating both invariants at [`BASIS_TOLERANCE`].
    pub fn from_e_block(e: DenseMatrix<T>) -> Result<Self> {
        check_even("SymplecticBasis rows", e.rows())?;
        let basis = Self { n: e.rows() / 2, e };
        if basis.k() > basis.n {
            return Err(Error::InvalidArgument(format!(
                "basis half-dimension {} exceeds state half-dimension {}",
                basis.k(),
                basis.n
            )));
        }
        basis.validate(BASIS_TOLERANCE)?;
        Ok(basis)
    }

    /// Half-dimension of the full space.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Half-dimension of the reduced space.
    pub fn k(&self) -> usize {
        self.e.cols()
    }

    pub fn e_block(&self) -> &DenseMatrix<T> {
        &self.e
    }

    pub fn f_block(&self) -> DenseMatrix<T> {
        apply_j_columns(&self.e, true).expect("even row count")
    }

    /// Assembled `2n x 2k` matrix `[E, F]`.
    pub fn matrix(&self) -> DenseMatrix<T> {
        self.e.hcat(&self.f_block()).expect("equal row counts")
    }

    pub fn symplectic_residual(&self) -> T {
        check_symplectic(&self.matrix()).expect("even dimensions")
    }

    pub fn orthonormality_residual(&self) -> T {
        self.matrix().orthonormality_residual()
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let tol_t = T::lit(tol);
        let s = self.symplectic_residual();
        if !(s <= tol_t) {
            return Err(Error::NotSymplectic {
                residual: s.to_f64_lossy(),
                tolerance: tol,
            });
        }
        let o = self.orthonormality_residual();
        if !(o <= tol_t) {
            return Err(Error::NotOrthonormal {
                residual: o.to_f64_lossy(),
                tolerance: tol,
            });
        }
        Ok(())
    }

    /// Sub-basis made of the first `k` pairs. Greedy bases are nested, so this is
    /// the basis the greedy held after `k` iterations.
    pub fn prefix(&self, k: usize) -> Self {
        Self {
            n: self.n,
            e: self.e.column_block(0, k.min(self.k())),
        }
    }

    /// Reduced coordinates `A^+ z`.
    pub fn reduce(&self, z: &[T]) -> Result<Vec<T>> {
        check_len("SymplecticBasis::reduce", 2 * self.n, z.len())?;
        // A^+ z = J_2k^T A^T J z, and A^T J z = (E^T J z, F^T J z) = (E^T J z, -E^T z).
        let jz = apply_j(z, false)?;
        let mut c = self.e.tr_matvec(&jz)?;
        c.extend(self.e.tr_matvec(z)?.into_iter().map(|x| -x));
        apply_j(&c, true)
    }

    /// `A y`
    pub fn lift(&self, y: &[T]) -> Result<Vec<T>> {
        let k = self.k();
        check_len("SymplecticBasis::lift", 2 * k, y.len())?;
        let mut z = self.e.matvec(&y[..k])?;
        let fy = self.e.matvec(&y[k..])?;
        // F y_p = J^T (E y_p)
        let jt = apply_j(&fy, true)?;
        axpy(T::one(), &jt, &mut z);
        Ok(z)
    }

    /// Symplectic projection `A A^+ z`.
    pub fn project(&self, z: &[T]) -> Result<Vec<T>> {
        self.lift(&self.reduce(z)?)
    }

    /// `‖z − A A^+ z‖₂`
    pub fn projection_error(&self, z: &[T]) -> Result<T> {
        let p = self.project(z)?;
        Ok(norm2(&crate::scalar::sub(z, &p)))
    }

    /// Symplectic Gram-Schmidt: returns the normalized component of `z` that is
    /// Ω-orthogonal (and Euclid-orthogonal) to every column of the basis.
    pub fn gram_schmidt(&self, z: &[T], opts: &GramSchmidtOptions) -> Result<Vec<T>> {
        check_len("symplectic_gram_schmidt", 2 * self.n, z.len())?;
        if !crate::scalar::all_finite(z) {
            return Err(Error::NonFinite("symplectic_gram_schmidt input"));
        }
        let z_norm = norm2(z);
        let threshold = T::lit(opts.degenerate_rel_tol) * z_norm;
        let mut v = z.to_vec();
        self.orthogonalize_once(&mut v);
        let r = norm2(&v);
        if !(r > threshold) || r == T::zero() {
            return Err(Error::DegenerateVector {
                residual: r.to_f64_lossy(),
                threshold: threshold.to_f64_lossy(),
            });
        }
        v.iter_mut().for_each(|x| *x /= r);
        let mut passes = 1;
        while self.k() > 0 && passes < 3 && self.coupling(&v) > T::lit(opts.reorth_tol) {
            self.orthogonalize_once(&mut v);
            let r2 = norm2(&v);
            if r2 == T::zero() {
                return Err(Error::DegenerateVector {
                    residual: 0.0,
                    threshold: threshold.to_f64_lossy(),
                });
            }
            v.iter_mut().for_each(|x| *x /= r2);
            passes += 1;
        }
        canonical_sign(&mut v);
        Ok(v)
    }

    /// `z ← z − Σ Ω(z, f_i) e_i + Σ Ω(z, e_i) f_i`
    fn orthogonalize_once(&self, z: &mut [T]) {
        let mut f = vec![T::zero(); 2 * self.n];
        let mut coeffs = Vec::with_capacity(self.k());
        for i in 0..self.k() {
            let e = self.e.col(i);
            apply_j_into(e, true, &mut f);
            coeffs.push((omega_unchecked(z, &f), omega_unchecked(z, e)));
        }
        for i in 0..self.k() {
            let e = self.e.col(i);
            apply_j_into(e, true, &mut f);
            let (a, b) = coeffs[i];
            axpy(-a, e, z);
            axpy(b, &f, z);
        }
    }

    /// `‖A^T v‖₂`; zero exactly when `v` is orthogonal to the basis.
    fn coupling(&self, v: &[T]) -> T {
        let a = self.e.tr_matvec(v).expect("matching length");
        let jv = apply_j(v, false).expect("even length");
        // F^T v = E^T J v
        let b = self.e.tr_matvec(&jv).expect("matching length");
        (dot(&a, &a) + dot(&b, &b)).sqrt()
    }

    /// Appends the pair `(ẽ, J^T ẽ)` where `ẽ` is the Gram-Schmidt image of `z`.
    pub fn enrich(&self, z: &[T], opts: &GramSchmidtOptions) -> Result<Self> {
        let mut out = self.clone();
        out.enrich_in_place(z, opts)?;
        Ok(out)
    }

    pub fn enrich_in_place(&mut self, z: &[T], opts: &GramSchmidtOptions) -> Result<()> {
        if self.k() >= self.n {
            return Err(Error::InvalidArgument(format!(
                "basis already spans the full space (k = n = {})",
                self.n
            )));
        }
        let e = self.gram_schmidt(z, opts)?;
        self.e.push_column(&e)
    }
}

/// Factors of a symplectic QR decomposition `M = A R`.
#[derive(Clone, Debug)]
pub struct SqrFactors<T> {
    /// Symplectic (not necessarily orthogonal) `2n x 2k` factor.
    pub a: DenseMatrix<T>,
    /// `2k x 2k` factor with blocks `[[S, T], [U, V]]`, all upper triangular,
    /// `T` and `U` strictly so.
    pub r: DenseMatrix<T>,
}

impl<T: Scalar> SqrFactors<T> {
    fn block(&self, bi: usize, bj: usize) -> DenseMatrix<T> {
        let k = self.r.rows() / 2;
        DenseMatrix::from_fn(k, k, |i, j| self.r[(bi * k + i, bj * k + j)])
    }

    pub fn s(&self) -> DenseMatrix<T> {
        self.block(0, 0)
    }

    pub fn t(&self) -> DenseMatrix<T> {
        self.block(0, 1)
    }

    pub fn u(&self) -> DenseMatrix<T> {
        self.block(1, 0)
    }

    pub fn v(&self) -> DenseMatrix<T> {
        self.block(1, 1)
    }
}

/// Relative threshold on `|Ω(q, p)| / (‖q‖ ‖p‖)` below which SQR reports rank deficiency.
pub const SQR_RANK_TOLERANCE: f64 = 1e-13;

/// Symplectic QR decomposition of `M = [u_1..u_k, v_1..v_k]` (`2n x 2k`).
pub fn sqr_decompose<T: Scalar>(m: &DenseMatrix<T>) -> Result<SqrFactors<T>> {
    check_even("sqr_decompose (rows)", m.rows())?;
    check_even("sqr_decompose (cols)", m.cols())?;
    if !m.is_finite() {
        return Err(Error::NonFinite("sqr_decompose input"));
    }
    let k = m.cols() / 2;
    let mut es: Vec<Vec<T>> = Vec::with_capacity(k);
    let mut fs: Vec<Vec<T>> = Vec::with_capacity(k);
    for i in 0..k {
        let mut q = m.col(i).to_vec();
        let mut p = m.col(k + i).to_vec();
        for j in 0..i {
            let (ej, fj) = (&es[j], &fs[j]);
            let (a, b) = (omega_unchecked(&q, fj), omega_unchecked(&q, ej));
            axpy(-a, ej, &mut q);
            axpy(b, fj, &mut q);
            let (a, b) = (omega_unchecked(&p, fj), omega_unchecked(&p, ej));
            axpy(-a, ej, &mut p);
            axpy(b, fj, &mut p);
        }
        let alpha = omega_unchecked(&q, &p);
        let scale = norm2(&q) * norm2(&p);
        if !(alpha.abs() > T::lit(SQR_RANK_TOLERANCE) * scale) || alpha == T::zero() {
            return Err(Error::RankDeficient {
                step: i + 1,
                alpha: alpha.abs().to_f64_lossy(),
            });
        }
        let root = alpha.abs().sqrt();
        let sign = alpha.signum();
        es.push(q.iter().map(|&x| sign * x / root).collect());
        fs.push(p.iter().map(|&x| x / root).collect());
    }
    es.extend(fs);
    let a = DenseMatrix::from_columns(m.rows(), &es)?;
    let mut r = symplectic_inverse(&a)?.matmul(m)?;
    // Entries below the block diagonals (and the diagonals of T and U) vanish
    // by construction; clear the round-off left by the product.
    for bi in 0..2 {
        for bj in 0..2 {
            let strict = bi != bj;
            for j in 0..k {
                for i in 0..k {
                    if i > j || (strict && i == j) {
                        r[(bi * k + i, bj * k + j)] = T::zero();
                    }
                }
            }
        }
    }
    Ok(SqrFactors { a, r })
}
