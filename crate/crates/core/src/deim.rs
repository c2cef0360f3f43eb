//! Discrete empirical interpolation of nonlinear terms and its symplectic variant.
//!
//! Indices are 0-based throughout.

use log::{debug, info};

use crate::basis::symplectic_projection_errors;
use crate::error::{check_len, Error, Result};
use crate::matrix::DenseMatrix;
use crate::models::{HamiltonianModel, ParameterPoint};
use crate::scalar::Scalar;
use crate::svd::condition_number;
use crate::symplectic::{apply_j_columns, symplectic_inverse, GramSchmidtOptions, SymplecticBasis};

fn argmax_abs<T: Scalar>(v: &[T], skip: &[usize]) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (i, &x) in v.iter().enumerate() {
        if skip.contains(&i) {
            continue;
        }
        let a = x.abs();
        match best {
            Some((_, b)) if !(a > b) => {}
            _ => best = Some((i, a)),
        }
    }
    best
}

/// Solves `(Pᵀ U[:, ..cols]) c = Pᵀ u` (least squares when over-determined) and returns `u − U c`.
fn interpolation_residual<T: Scalar>(u: &DenseMatrix<T>, cols: usize, rows: &[usize], target: &[T]) -> Result<Vec<T>> {
    let basis = u.column_block(0, cols);
    let sampled = basis.select_rows(rows);
    let rhs: Vec<T> = rows.iter().map(|&i| target[i]).collect();
    let c = if rows.len() == cols {
        sampled.solve(&rhs)?
    } else {
        sampled.least_squares(&rhs)?
    };
    let uc = basis.matvec(&c)?;
    Ok(target.iter().zip(&uc).map(|(&a, &b)| a - b).collect())
}

fn zero_residual_threshold<T: Scalar>(u: &[T]) -> T {
    let scale = u.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    T::epsilon() * T::lit(100.0) * scale
}

/// Greedy interpolation indices, one per column of `u`.
pub fn deim_indices<T: Scalar>(u: &DenseMatrix<T>) -> Result<Vec<usize>> {
    if u.cols() == 0 || u.cols() > u.rows() {
        return Err(Error::InvalidArgument(format!(
            "DEIM basis must have between 1 and {} columns, got {}",
            u.rows(),
            u.cols()
        )));
    }
    let (p1, m1) = argmax_abs(u.col(0), &[]).expect("non-empty column");
    if !(m1 > zero_residual_threshold(u.col(0))) || m1 == T::zero() {
        return Err(Error::ZeroResidual { column: 0 });
    }
    let mut idx = vec![p1];
    for l in 1..u.cols() {
        let r = interpolation_residual(u, l, &idx, u.col(l))?;
        let (p, m) = argmax_abs(&r, &[]).expect("non-empty column");
        if !(m > zero_residual_threshold(u.col(l))) {
            return Err(Error::ZeroResidual { column: l });
        }
        idx.push(p);
    }
    Ok(idx)
}

/// Greedy selection that adds the canonical partner `i ± n` of every chosen index
/// immediately; later residuals come from least-squares fits on the enlarged set.
pub fn deim_indices_paired<T: Scalar>(u: &DenseMatrix<T>, n: usize) -> Result<Vec<usize>> {
    check_len("DEIM basis rows", 2 * n, u.rows())?;
    let first = deim_indices(&u.column_block(0, 1))?[0];
    let mut idx = pair_indices(&[first], n);
    for l in 1..u.cols() {
        let r = interpolation_residual(u, l, &idx, u.col(l))?;
        let Some((p, m)) = argmax_abs(&r, &idx) else {
            break;
        };
        if !(m > zero_residual_threshold(u.col(l))) {
            return Err(Error::ZeroResidual { column: l });
        }
        idx = pair_indices(&[idx.as_slice(), &[p]].concat(), n);
    }
    Ok(idx)
}

/// Closure under `i ↦ i + n` (`i < n`) and `i ↦ i − n` (`i ≥ n`), sorted and deduplicated.
///
/// # Panics
/// If an index is outside `0..2n`.
pub fn pair_indices(indices: &[usize], n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(2 * indices.len());
    for &i in indices {
        assert!(i < 2 * n, "index {i} outside 0..{}", 2 * n);
        out.push(i);
        out.push(if i < n { i + n } else { i - n });
    }
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Pairing {
    /// Plain selection.
    None,
    /// Plain selection followed by the canonical closure.
    #[default]
    Closure,
    /// Partners added as each index is chosen.
    Inline,
}

/// Interpolation operator `W U (PᵀU)⁻¹` with `P` stored as an index list.
/// A pseudo-inverse replaces the inverse when pairing over-samples.
#[derive(Clone, Debug, PartialEq)]
pub struct DeimOperator<T> {
    u: DenseMatrix<T>,
    indices: Vec<usize>,
    paired: bool,
    interpolation: DenseMatrix<T>,
    sampled_inverse: DenseMatrix<T>,
    condition: T,
}

impl<T: Scalar> DeimOperator<T> {
    /// Selects indices for `u` and precomputes the operator for the row projector `w`
    /// (`w` has `u.rows()` columns; pass the identity for plain reconstruction).
    pub fn new(u: DenseMatrix<T>, w: &DenseMatrix<T>, pairing: Pairing) -> Result<Self> {
        crate::error::check_even("DEIM basis rows", u.rows())?;
        let n = u.rows() / 2;
        let (indices, paired) = match pairing {
            Pairing::None => (deim_indices(&u)?, false),
            Pairing::Closure => (pair_indices(&deim_indices(&u)?, n), true),
            Pairing::Inline => (deim_indices_paired(&u, n)?, true),
        };
        Self::from_indices(u, indices, paired, w)
    }

    pub fn from_indices(u: DenseMatrix<T>, indices: Vec<usize>, paired: bool, w: &DenseMatrix<T>) -> Result<Self> {
        check_len("projector columns", u.rows(), w.cols())?;
        if indices.is_empty() || indices.iter().any(|&i| i >= u.rows()) {
            return Err(Error::InvalidArgument("DEIM indices empty or out of range".into()));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != indices.len() {
            return Err(Error::InvalidArgument("DEIM indices must be distinct".into()));
        }
        if paired {
            let n = u.rows() / 2;
            if pair_indices(&indices, n) != sorted {
                return Err(Error::InvalidArgument("paired DEIM indices are not closed under i ↔ i±n".into()));
            }
        }
        if indices.len() < u.cols() {
            return Err(Error::InvalidArgument(format!(
                "{} indices cannot interpolate {} basis columns",
                indices.len(),
                u.cols()
            )));
        }
        let b = u.select_rows(&indices);
        let condition = condition_number(&b)?;
        if !condition.is_finite() {
            return Err(Error::SingularMatrix {
                column: 0,
                pivot: 0.0,
            });
        }
        info!(
            "DEIM operator: {} basis columns, {} indices, cond(PᵀU) = {:e}",
            u.cols(),
            indices.len(),
            condition.to_f64_lossy()
        );
        let sampled_inverse = if b.rows() == b.cols() {
            b.inverse()?
        } else {
            let cols = (0..b.rows())
                .map(|j| {
                    let mut e = vec![T::zero(); b.rows()];
                    e[j] = T::one();
                    b.least_squares(&e)
                })
                .collect::<Result<Vec<_>>>()?;
            DenseMatrix::from_columns(b.cols(), &cols)?
        };
        let interpolation = w.matmul(&u.matmul(&sampled_inverse)?)?;
        Ok(Self {
            u,
            indices,
            paired,
            interpolation,
            sampled_inverse,
            condition,
        })
    }

    pub fn basis(&self) -> &DenseMatrix<T> {
        &self.u
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn paired(&self) -> bool {
        self.paired
    }

    /// `W U (PᵀU)⁻¹`, one column per sampled index.
    pub fn interpolation(&self) -> &DenseMatrix<T> {
        &self.interpolation
    }

    /// Condition number of `PᵀU`.
    pub fn condition_number(&self) -> T {
        self.condition
    }

    /// `Pᵀ v`.
    pub fn sample(&self, v: &[T]) -> Result<Vec<T>> {
        check_len("sampled vector", self.u.rows(), v.len())?;
        Ok(self.indices.iter().map(|&i| v[i]).collect())
    }

    /// Full-space interpolant `U (PᵀU)⁻¹ g_P`.
    pub fn reconstruct(&self, g_at_indices: &[T]) -> Result<Vec<T>> {
        check_len("sampled values", self.indices.len(), g_at_indices.len())?;
        self.u.matvec(&self.sampled_inverse.matvec(g_at_indices)?)
    }
}

/// `W U (PᵀU)⁻¹ g_P`; cost independent of the full dimension.
pub fn deim_apply<T: Scalar>(op: &DeimOperator<T>, g_at_indices: &[T]) -> Result<Vec<T>> {
    check_len("sampled values", op.indices.len(), g_at_indices.len())?;
    op.interpolation.matvec(g_at_indices)
}

/// Nonlinear term sampled at the operator's indices for the state `a y`; only the rows of
/// `a` at the indices and their canonical partners are touched when the model exposes a
/// pairwise nonlinearity.
pub fn sample_nonlinear<T: Scalar, M: HamiltonianModel<T> + ?Sized>(
    op: &DeimOperator<T>,
    model: &M,
    a: &DenseMatrix<T>,
    y: &[T],
    omega: &ParameterPoint<T>,
) -> Result<Vec<T>> {
    let n = model.half_dim();
    check_len("basis rows", 2 * n, a.rows())?;
    let Some(pw) = model.pairwise() else {
        let g = model.nonlinear_grad(&a.matvec(y)?, omega)?;
        return op.sample(&g);
    };
    let closure = pair_indices(&op.indices, n);
    let z = a.select_rows(&closure).matvec(y)?;
    let pos = |i: usize| closure.binary_search(&i).expect("closure contains partner");
    Ok(op
        .indices
        .iter()
        .map(|&idx| {
            let node = idx % n;
            pw.component(idx, n, z[pos(node)], z[pos(node + n)], omega)
        })
        .collect())
}

/// Jacobian of `y ↦ W U (PᵀU)⁻¹ Pᵀ g(A y)` from the sampled pair Jacobian of `g`.
pub fn reduced_jacobian<T: Scalar, M: HamiltonianModel<T> + ?Sized>(
    op: &DeimOperator<T>,
    model: &M,
    a: &DenseMatrix<T>,
    y: &[T],
    omega: &ParameterPoint<T>,
) -> Result<DenseMatrix<T>> {
    if !op.paired {
        return Err(Error::InvalidArgument(
            "reduced Jacobian needs canonically paired DEIM indices".into(),
        ));
    }
    let n = model.half_dim();
    check_len("basis rows", 2 * n, a.rows())?;
    let pa = a.select_rows(&op.indices);
    let s = op.indices.len();
    let Some(pw) = model.pairwise() else {
        if model.has_nonlinearity() {
            return Err(Error::InvalidArgument("model nonlinearity is not pairwise".into()));
        }
        return Ok(DenseMatrix::zeros(op.interpolation.rows(), a.cols()));
    };
    let z = pa.matvec(y)?;
    let pos = |i: usize| op.indices.iter().position(|&x| x == i).expect("paired indices");
    let mut jg = DenseMatrix::zeros(s, s);
    for (r, &idx) in op.indices.iter().enumerate() {
        let node = idx % n;
        let (iq, ip) = (pos(node), pos(node + n));
        let (dq, dp) = pw.component_gradient(idx, n, z[iq], z[ip], omega);
        jg[(r, iq)] = dq;
        jg[(r, ip)] = dp;
    }
    op.interpolation.matmul(&jg.matmul(&pa)?)
}

/// Symplectic DEIM basis: starts from `(A⁺)ᵀ` and adds the nonlinear snapshot with the
/// largest symplectic projection error until every error is at most `delta` or
/// `max_pairs` pairs were added; returns the symplectic inverse transpose of the result.
pub fn sdeim_basis<T: Scalar>(
    a: &SymplecticBasis<T>,
    s_g: &DenseMatrix<T>,
    delta: T,
    max_pairs: Option<usize>,
    opts: &GramSchmidtOptions,
) -> Result<SymplecticBasis<T>> {
    check_len("nonlinear snapshot rows", 2 * a.n(), s_g.rows())?;
    if s_g.cols() == 0 {
        return Err(Error::InvalidArgument("no nonlinear snapshots".into()));
    }
    let at = transpose_inverse(&a.matrix())?;
    let mut v = SymplecticBasis::from_e_block(at.column_block(0, a.k()))?;
    let mut added = 0;
    loop {
        let errors = symplectic_projection_errors(s_g, &v.matrix())?;
        let sigma = errors.iter().fold(T::zero(), |m, &x| m.max(x));
        debug!("SDEIM: k = {}, max error {:e}", v.k(), sigma.to_f64_lossy());
        if !(sigma > delta) || max_pairs.is_some_and(|m| added >= m) || v.k() >= v.n() {
            break;
        }
        let mut order: Vec<usize> = (0..errors.len()).collect();
        order.sort_by(|&x, &y| errors[y].partial_cmp(&errors[x]).unwrap_or(std::cmp::Ordering::Equal).then(x.cmp(&y)));
        let mut enriched = false;
        for j in order {
            match v.enrich_in_place(s_g.col(j), opts) {
                Ok(()) => {
                    enriched = true;
                    break;
                }
                Err(Error::DegenerateVector { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if !enriched {
            break;
        }
        added += 1;
    }
    info!("SDEIM added {added} pairs, k = {}", v.k());
    let out = transpose_inverse(&v.matrix())?;
    SymplecticBasis::from_e_block(out.column_block(0, v.k()))
}

/// `(A⁺)ᵀ`.
fn transpose_inverse<T: Scalar>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    Ok(symplectic_inverse(a)?.transpose())
}

/// DEIM operator for a symplectic reduced model with `V = (A⁺)ᵀ` and row projector `A⁺ J₂ₙ`.
pub fn sdeim_operator<T: Scalar>(a: &SymplecticBasis<T>, pairing: Pairing) -> Result<DeimOperator<T>> {
    let m = a.matrix();
    let v = transpose_inverse(&m)?;
    DeimOperator::new(v, &symplectic_projector(&m)?, pairing)
}

/// Plain DEIM operator for a symplectic reduced model: `U` is the leading `m` POD modes of
/// the nonlinear snapshots, row projector `A⁺ J₂ₙ`.
pub fn deim_operator_from_snapshots<T: Scalar>(
    a: &SymplecticBasis<T>,
    s_g: &DenseMatrix<T>,
    m: usize,
    pairing: Pairing,
) -> Result<DeimOperator<T>> {
    let u = crate::svd::left_singular_vectors(s_g, m)?.1;
    DeimOperator::new(u, &symplectic_projector(&a.matrix())?, pairing)
}

/// `A⁺ J₂ₙ`, the row operator of the symplectic Galerkin projection.
pub fn symplectic_projector<T: Scalar>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    // (A⁺ J)ᵀ = Jᵀ (A⁺)ᵀ
    Ok(apply_j_columns(&symplectic_inverse(a)?.transpose(), true)?.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GridSpec, NlsModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix<f64> {
        DenseMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn first_index_is_largest_entry() {
        let u = DenseMatrix::from_rows(&[&[0.0], &[2.0], &[1.0]]);
        assert_eq!(deim_indices(&u).unwrap(), vec![1]);
    }

    #[test]
    fn second_index_by_hand() {
        let u = DenseMatrix::from_rows(&[&[0.0, 1.0], &[2.0, 1.0], &[1.0, 0.0]]);
        let r = interpolation_residual(&u, 1, &[1], u.col(1)).unwrap();
        assert_eq!(r, vec![1.0, 0.0, -0.5]);
        assert_eq!(deim_indices(&u).unwrap(), vec![1, 0]);
    }

    #[test]
    fn identity_columns_in_order() {
        let u = DenseMatrix::from_fn(6, 4, |i, j| if i == j { 1.0 } else { 0.0 });
        assert_eq!(deim_indices(&u).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn dependent_column_is_zero_residual() {
        let u = DenseMatrix::from_rows(&[&[1.0, 2.0], &[0.5, 1.0], &[0.0, 0.0]]);
        assert!(matches!(deim_indices(&u), Err(Error::ZeroResidual { column: 1 })));
    }

    #[test]
    fn pairing_examples() {
        assert_eq!(pair_indices(&[1], 3), vec![1, 4]);
        assert_eq!(pair_indices(&[4], 3), vec![1, 4]);
        assert_eq!(pair_indices(&[0, 3, 2, 5], 3), vec![0, 2, 3, 5]);
    }

    #[test]
    fn interpolation_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random(&mut rng, 20, 5);
        let eye = DenseMatrix::identity(20);
        for pairing in [Pairing::None, Pairing::Closure, Pairing::Inline] {
            let op = DeimOperator::new(u.clone(), &eye, pairing).unwrap();
            for j in 0..5 {
                let rec = op.reconstruct(&op.sample(u.col(j)).unwrap()).unwrap();
                for (a, b) in rec.iter().zip(u.col(j)) {
                    assert!((a - b).abs() <= 1e-10);
                }
            }
            if pairing != Pairing::None {
                assert!(op.paired());
                assert_eq!(pair_indices(op.indices(), 10), op.indices());
            }
        }
    }

    #[test]
    fn apply_examples() {
        let mut u = DenseMatrix::zeros(4, 1);
        u[(2, 0)] = 1.0;
        let w = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0, 4.0]]);
        let op = DeimOperator::new(u, &w, Pairing::None).unwrap();
        assert_eq!(op.indices(), &[2]);
        assert_eq!(deim_apply(&op, &[0.0]).unwrap(), vec![0.0]);
        assert_eq!(deim_apply(&op, &[2.0]).unwrap(), vec![6.0]);
        assert!(deim_apply(&op, &[1.0, 2.0]).is_err());
    }

    fn nls() -> NlsModel<f64> {
        NlsModel::new(GridSpec::new(6.0, 8, 0.01, 0.1).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn sdeim_enrichment_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let opts = GramSchmidtOptions::default();
        let mut a = SymplecticBasis::<f64>::empty(8);
        for _ in 0..3 {
            a.enrich_in_place(&random(&mut rng, 16, 1).into_vec(), &opts).unwrap();
        }
        // snapshots already in span: unchanged
        let inside = a.matrix().matmul(&random(&mut rng, 6, 4)).unwrap();
        let same = sdeim_basis(&a, &inside, 1e-8, None, &opts).unwrap();
        assert!(same.matrix().sub(&a.matrix()).unwrap().max_abs() < 1e-12);

        let sg = random(&mut rng, 16, 10);
        let one = sdeim_basis(&a, &sg, 1e-8, Some(1), &opts).unwrap();
        assert_eq!(one.k(), 4);
        let full = sdeim_basis(&a, &sg, 1e-8, None, &opts).unwrap();
        assert!(full.symplectic_residual() <= 1e-10 && full.orthonormality_residual() <= 1e-10);
        let head = full.e_block().column_block(0, 3);
        assert!(head.sub(a.e_block()).unwrap().max_abs() < 1e-12);
        let err = symplectic_projection_errors(&sg, &full.matrix()).unwrap();
        assert!(err.iter().all(|&e| e <= 1e-8));
    }

    #[test]
    fn sampled_nonlinearity_matches_dense() {
        let m = nls();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut basis = SymplecticBasis::<f64>::empty(8);
        for _ in 0..3 {
            basis.enrich_in_place(&random(&mut rng, 16, 1).into_vec(), &GramSchmidtOptions::default()).unwrap();
        }
        let op = sdeim_operator(&basis, Pairing::Closure).unwrap();
        let w = ParameterPoint::scalar(1.05);
        let y: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z = basis.matrix().matvec(&y).unwrap();
        let dense = op.sample(&m.nonlinear_grad(&z, &w).unwrap()).unwrap();
        let sampled = sample_nonlinear(&op, &m, &basis.matrix(), &y, &w).unwrap();
        for (a, b) in dense.iter().zip(&sampled) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_nonlinear_snapshots_are_rejected() {
        let mut basis = SymplecticBasis::<f64>::empty(4);
        basis.enrich_in_place(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &GramSchmidtOptions::default()).unwrap();
        let empty = DenseMatrix::zeros(8, 0);
        let err = sdeim_basis(&basis, &empty, 1e-4, None, &GramSchmidtOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        assert!(deim_operator_from_snapshots(&basis, &empty, 1, Pairing::None).is_err());
    }

    #[test]
    fn reduced_jacobian_matches_finite_differences() {
        let m = nls();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut basis = SymplecticBasis::<f64>::empty(8);
        for _ in 0..3 {
            basis.enrich_in_place(&random(&mut rng, 16, 1).into_vec(), &GramSchmidtOptions::default()).unwrap();
        }
        let a = basis.matrix();
        let sg = random(&mut rng, 16, 12);
        let w = ParameterPoint::scalar(0.95);
        for pairing in [Pairing::Closure, Pairing::Inline] {
            let op = deim_operator_from_snapshots(&basis, &sg, 4, pairing).unwrap();
            let term = |y: &[f64]| deim_apply(&op, &sample_nonlinear(&op, &m, &a, y, &w).unwrap()).unwrap();
            let zero = reduced_jacobian(&op, &m, &a, &[0.0; 6], &w).unwrap();
            assert_eq!(zero.max_abs(), 0.0);
            let y: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let jac = reduced_jacobian(&op, &m, &a, &y, &w).unwrap();
            let h = 1e-6;
            for j in 0..6 {
                let (mut yp, mut ym) = (y.clone(), y.clone());
                yp[j] += h;
                ym[j] -= h;
                let (fp, fm) = (term(&yp), term(&ym));
                for i in 0..6 {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    assert!((fd - jac[(i, j)]).abs() <= 1e-5 * (1.0 + fd.abs()));
                }
            }
        }
        let unpaired = deim_operator_from_snapshots(&basis, &sg, 4, Pairing::None).unwrap();
        assert!(reduced_jacobian(&unpaired, &m, &a, &[0.0; 6], &w).is_err());
    }
}
