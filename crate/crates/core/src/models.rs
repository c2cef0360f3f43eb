//! Parametric canonical Hamiltonian systems and their finite-difference discretizations.
//!
//! Every model splits its gradient as `∇H(z) = w·(L z + g(z))`, where `w` is the
//! quadrature weight returned by [`HamiltonianModel::energy_weight`]. The dynamics are
//! `ż = J (L z + g(z))`.

use crate::error::{check_len, Error, Result};
use crate::matrix::DenseMatrix;
use crate::scalar::Scalar;
use crate::symplectic::apply_j;

/// A point ω of the parameter domain.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterPoint<T> {
    coords: Vec<T>,
}

impl<T: Scalar> ParameterPoint<T> {
    pub fn new(coords: Vec<T>) -> Self {
        Self { coords }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            coords: vec![value],
        }
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Axis-aligned compact parameter box.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterBox<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> ParameterBox<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        check_len("parameter box bounds", lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidArgument("parameter box has no dimensions".into()));
        }
        if lower.iter().zip(&upper).any(|(&l, &u)| !(l <= u)) {
            return Err(Error::InvalidArgument(
                "parameter box lower bound exceeds upper bound".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn contains(&self, omega: &ParameterPoint<T>) -> bool {
        omega.dim() == self.dim()
            && omega
                .coords()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&l, &u))| l <= x && x <= u)
    }

    /// Tensor grid with `points_per_dim` equidistant nodes per axis, endpoints included.
    /// The first coordinate varies slowest.
    pub fn equidistant_grid(&self, points_per_dim: usize) -> Result<Vec<ParameterPoint<T>>> {
        if points_per_dim == 0 {
            return Err(Error::InvalidArgument("grid needs at least one point per axis".into()));
        }
        let axes: Vec<Vec<T>> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| linspace(l, u, points_per_dim))
            .collect();
        let d = self.dim();
        let total = points_per_dim.pow(d as u32);
        let mut grid = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            grid.push(ParameterPoint::new(
                idx.iter().enumerate().map(|(a, &i)| axes[a][i]).collect(),
            ));
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < points_per_dim {
                    break;
                }
                idx[a] = 0;
            }
        }
        Ok(grid)
    }
}

/// `count` equidistant points from `a` to `b` inclusive (a single point yields `a`).
pub fn linspace<T: Scalar>(a: T, b: T, count: usize) -> Vec<T> {
    if count == 1 {
        return vec![a];
    }
    let h = (b - a) / T::from_count(count - 1);
    (0..count)
        .map(|i| if i + 1 == count { b } else { a + h * T::from_count(i) })
        .collect()
}

/// Uniform periodic space grid plus a fixed time step.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec<T> {
    pub length: T,
    pub points: usize,
    pub dt: T,
    pub t_final: T,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(length: T, points: usize, dt: T, t_final: T) -> Result<Self> {
        let grid = Self {
            length,
            points,
            dt,
            t_final,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::InvalidArgument("grid needs at least one point".into()));
        }
        if !(self.length > T::zero()) || !self.length.is_finite() {
            return Err(Error::InvalidArgument("domain length must be positive".into()));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument("time step must be positive".into()));
        }
        if !(self.t_final >= T::zero()) || !self.t_final.is_finite() {
            return Err(Error::InvalidArgument("final time must be non-negative".into()));
        }
        self.steps().map(|_| ())
    }

    pub fn dx(&self) -> T {
        self.length / T::from_count(self.points)
    }

    /// Node `x_i = i·Δx` for `i = 1..=N`.
    pub fn node(&self, i: usize) -> T {
        T::from_count(i) * self.dx()
    }

    /// Number of steps `M` with `t_final = M·dt`.
    pub fn steps(&self) -> Result<usize> {
        let ratio = self.t_final / self.dt;
        let m = ratio.round();
        let tol = T::lit(1e-9) * T::one().max(ratio);
        if (ratio - m).abs() > tol {
            return Err(Error::InvalidArgument(format!(
                "final time {} is not an integer multiple of dt {}",
                self.t_final, self.dt
            )));
        }
        m.to_usize()
            .ok_or_else(|| Error::InvalidArgument("step count out of range".into()))
    }

    pub fn with_time(&self, dt: T, t_final: T) -> Result<Self> {
        Self::new(self.length, self.points, dt, t_final)
    }
}

/// A nonlinearity whose component `i` only depends on the canonical pair `(q_j, p_j)`,
/// `j = i mod n`.
pub trait PairwiseNonlinearity<T: Scalar>: Send + Sync {
    /// Component `index` of `g` given the pair values at that node.
    fn component(&self, index: usize, n: usize, q: T, p: T, omega: &ParameterPoint<T>) -> T;

    /// Partial derivatives `(∂g_index/∂q_j, ∂g_index/∂p_j)`.
    fn component_gradient(
        &self,
        index: usize,
        n: usize,
        q: T,
        p: T,
        omega: &ParameterPoint<T>,
    ) -> (T, T);
}

/// Descriptor of one parametric canonical Hamiltonian system.
pub trait HamiltonianModel<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    /// Half dimension `n`; states have length `2n`.
    fn half_dim(&self) -> usize;

    /// `H(q, p) = K(p) + U(q)`.
    fn separable(&self) -> bool;

    fn parameter_box(&self) -> &ParameterBox<T>;

    /// Constant factor `w` with `∇H = w·(L z + g(z))`.
    fn energy_weight(&self) -> T {
        T::one()
    }

    /// `y = L(ω) x`, applied column-agnostic to one vector.
    fn apply_linear(&self, x: &[T], omega: &ParameterPoint<T>) -> Result<Vec<T>>;

    fn has_nonlinearity(&self) -> bool {
        false
    }

    fn nonlinear_grad(&self, z: &[T], omega: &ParameterPoint<T>) -> Result<Vec<T>> {
        let _ = omega;
        check_len("nonlinear term", 2 * self.half_dim(), z.len())?;
        Ok(vec![T::zero(); z.len()])
    }

    /// Jacobian of `g`; zero unless overridden.
    fn nonlinear_jacobian(&self, z: &[T], omega: &ParameterPoint<T>) -> Result<DenseMatrix<T>> {
        let _ = omega;
        check_len("nonlinear Jacobian", 2 * self.half_dim(), z.len())?;
        Ok(DenseMatrix::zeros(z.len(), z.len()))
    }

    fn pairwise(&self) -> Option<&dyn PairwiseNonlinearity<T>> {
        None
    }

    fn hamiltonian(&self, z: &[T], omega: &ParameterPoint<T>) -> Result<T>;

    fn initial_state(&self, omega: &ParameterPoint<T>) -> Result<Vec<T>>;

    /// Dense `L(ω)`.
    fn linear_matrix(&self, omega: &ParameterPoint<T>) -> Result<DenseMatrix<T>> {
        let dim = 2 * self.half_dim();
        self.linear_times(&DenseMatrix::identity(dim), omega)
    }

    /// `L(ω) X` column by column.
    fn linear_times(&self, x: &DenseMatrix<T>, omega: &ParameterPoint<T>) -> Result<DenseMatrix<T>> {
        check_len("linear operator input rows", 2 * self.half_dim(), x.rows())?;
        let cols = x
            .columns()
            .map(|c| self.apply_linear(c, omega))
            .collect::<Result<Vec<_>>>()?;
        DenseMatrix::from_columns(x.rows(), &cols)
    }

    /// `L z + g(z)`.
    fn gradient(&self, z: &[T], omega: &ParameterPoint<T>) -> Result<Vec<T>> {
        check_len("state", 2 * self.half_dim(), z.len())?;
        let mut out = self.apply_linear(z, omega)?;
        if self.has_nonlinearity() {
            let g = self.nonlinear_grad(z, omega)?;
            out.iter_mut().zip(g).for_each(|(o, gi)| *o += gi);
        }
        Ok(out)
    }

    /// `L + ∂g/∂z`.
    fn gradient_jacobian(&self, z: &[T], omega: &ParameterPoint<T>) -> Result<DenseMatrix<T>> {
        let l = self.linear_matrix(omega)?;
        if self.has_nonlinearity() {
            l.add(&self.nonlinear_jacobian(z, omega)?)
        } else {
            Ok(l)
        }
    }
}

/// Scalar energy `H(z, ω)`.
pub fn eval_hamiltonian<T: Scalar, M: HamiltonianModel<T> + ?Sized>(
    model: &M,
    z: &[T],
    omega: &ParameterPoint<T>,
) -> Result<T> {
    check_len("state", 2 * model.half_dim(), z.len())?;
    model.hamiltonian(z, omega)
}

/// Right-hand side `J(L z + g(z))`.
pub fn eval_rhs<T: Scalar, M: HamiltonianModel<T> + ?Sized>(
    model: &M,
    z: &[T],
    omega: &ParameterPoint<T>,
) -> Result<Vec<T>> {
    apply_j(&model.gradient(z, omega)?, false)
}

/// Periodic central second difference `(x_{i+1} - 2x_i + x_{i-1}) / Δx²`, scaled by `factor`.
pub fn periodic_second_difference<T: Scalar>(x: &[T], dx: T, factor: T) -> Vec<T> {
    let n = x.len();
    let s = factor / (dx * dx);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let prev = if i == 0 { x[n - 1] } else { x[i - 1] };
        let next = if i + 1 == n { x[0] } else { x[i + 1] };
        out.push(s * (next - T::lit(2.0) * x[i] + prev));
    }
    out
}

/// Dense periodic second-difference matrix.
pub fn second_difference_matrix<T: Scalar>(n: usize, dx: T) -> DenseMatrix<T> {
    let mut d = DenseMatrix::zeros(n, n);
    let s = T::one() / (dx * dx);
    for i in 0..n {
        d[(i, i)] -= T::lit(2.0) * s;
        d[(i, (i + 1) % n)] += s;
        d[(i, (i + n - 1) % n)] += s;
    }
    d
}

/// Cubic spline bump used for the wave initial profile.
pub fn cubic_spline<T: Scalar>(s: T) -> T {
    let one = T::one();
    let two = T::lit(2.0);
    if s < T::zero() {
        cubic_spline(-s)
    } else if s <= one {
        one - T::lit(1.5) * s * s + T::lit(0.75) * s * s * s
    } else if s <= two {
        let r = two - s;
        T::lit(0.25) * r * r * r
    } else {
        T::zero()
    }
}

fn check_grid<T: Scalar>(grid: &GridSpec<T>) -> Result<()> {
    grid.validate()?;
    if grid.points < 3 {
        return Err(Error::InvalidArgument(format!(
            "finite-difference grid needs at least 3 points, got {}",
            grid.points
        )));
    }
    Ok(())
}

/// Linear wave equation `q_t = p`, `p_t = κ(ω) q_xx` on a periodic domain.
#[derive(Clone, Debug)]
pub struct WaveModel<T> {
    grid: GridSpec<T>,
    c2: T,
    bounds: ParameterBox<T>,
}

impl<T: Scalar> WaveModel<T> {
    pub fn new(grid: GridSpec<T>, c2: T) -> Result<Self> {
        check_grid(&grid)?;
        if !c2.is_finite() {
            return Err(Error::NonFinite("wave speed"));
        }
        let bounds = ParameterBox::new(vec![T::zero(); 4], vec![T::one(); 4])?;
        Ok(Self { grid, c2, bounds })
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn c2(&self) -> T {
        self.c2
    }

    /// `κ(ω) = c² Σ_l ω_l / l²`.
    pub fn kappa(&self, omega: &ParameterPoint<T>) -> Result<T> {
        check_len("wave parameter", 4, omega.dim())?;
        Ok(wave_kappa(self.c2, omega.coords()))
    }
}

/// `c² Σ_l ω_l / l²` for `l = 1, 2, ...`.
pub fn wave_kappa<T: Scalar>(c2: T, omega: &[T]) -> T {
    c2 * omega
        .iter()
        .enumerate()
        .map(|(l, &w)| w / T::from_count((l + 1) * (l + 1)))
        .sum::<T>()
}

impl<T: Scalar> HamiltonianModel<T> for WaveModel<T> {
    fn name(&self) -> &str {
        "wave"
    }

    fn half_dim(&self) -> usize {
        self.grid.points
    }

    fn separable(&self) -> bool {
        true
    }

    fn parameter_box(&self) -> &ParameterBox<T> {
        &self.bounds
    }

    fn energy_weight(&self) -> T {
        self.grid.dx()
    }

    fn apply_linear(&self, x: &[T], omega: &ParameterPoint<T>) -> Result<Vec<T>> {
        let n = self.half_dim();
        check_len("state", 2 * n, x.len())?;
        let kappa = self.kappa(omega)?;
        let mut out = periodic_second_difference(&x[..n], self.grid.dx(), -kappa);
        out.extend_from_slice(&x[n..]);
        Ok(out)
    }

    fn hamiltonian(&self, z: &[T], omega: &ParameterPoint<T>) -> Result<T> {
        let n = self.half_dim();
        check_len("state", 2 * n, z.len())?;
        let kappa = self.kappa(omega)?;
        let dx = self.grid.dx();
        let (q, p) = z.split_at(n);
        let denom = T::lit(2.0) * dx * dx;
        let sum: T = (0..n)
            .map(|i| {
                let fwd = q[(i + 1) % n] - q[i];
                let bwd = q[i] - q[(i + n - 1) % n];
                p[i] * p[i] + kappa * fwd * fwd / denom + kappa * bwd * bwd / denom
            })
            .sum();
        Ok(dx / T::lit(2.0) * sum)
    }

    fn initial_state(&self, omega: &ParameterPoint<T>) -> Result<Vec<T>> {
        check_len("wave parameter", 4, omega.dim())?;
        let n = self.half_dim();
        let half = T::lit(0.5);
        let mut z: Vec<T> = (1..=n)
            .map(|i| cubic_spline(T::lit(10.0) * (self.grid.node(i) - half).abs()))
            .collect();
        z.resize(2 * n, T::zero());
        Ok(z)
    }
}

/// Cubic nonlinearity `ε (q_i² + p_i²) (q_i; p_i)` of the Schrödinger model.
pub fn nls_nonlinearity<T: Scalar>(z: &[T], epsilon: T) -> Result<Vec<T>> {
    crate::error::check_even("nonlinear term", z.len())?;
    let n = z.len() / 2;
    let mut g = vec![T::zero(); z.len()];
    for i in 0..n {
        let (q, p) = (z[i], z[i + n]);
        let r = epsilon * (q * q + p * p);
        g[i] = r * q;
        g[i + n] = r * p;
    }
    Ok(g)
}

/// Cubic nonlinear Schrödinger equation in canonical form `u = p + i q`.
#[derive(Clone, Debug)]
pub struct NlsModel<T> {
    grid: GridSpec<T>,
    speed: T,
    center: T,
    bounds: ParameterBox<T>,
}

impl<T: Scalar> NlsModel<T> {
    /// Soliton initial state centred at `L/2`.
    pub fn new(grid: GridSpec<T>, speed: T) -> Result<Self> {
        let center = grid.length / T::lit(2.0);
        Self::with_center(grid, speed, center)
    }

    pub fn with_center(grid: GridSpec<T>, speed: T, center: T) -> Result<Self> {
        check_grid(&grid)?;
        if !speed.is_finite() || !center.is_finite() {
            return Err(Error::NonFinite("Schrodinger constants"));
        }
        let bounds = ParameterBox::new(vec![T::lit(0.9)], vec![T::lit(1.1)])?;
        Ok(Self {
            grid,
            speed,
            center,
            bounds,
        })
    }

    pub fn with_bounds(mut self, bounds: ParameterBox<T>) -> Result<Self> {
        check_len("Schrodinger parameter box", 1, bounds.dim())?;
        self.bounds = bounds;
        Ok(self)
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn speed(&self) -> T {
        self.speed
    }

    pub fn center(&self) -> T {
        self.center
    }

    fn epsilon(omega: &ParameterPoint<T>) -> Result<T> {
        check_len("Schrodinger parameter", 1, omega.dim())?;
        Ok(omega.coords()[0])
    }
}

impl<T: Scalar> PairwiseNonlinearity<T> for NlsModel<T> {
    fn component(&self, index: usize, n: usize, q: T, p: T, omega: &ParameterPoint<T>) -> T {
        let eps = omega.coords()[0];
        let r = eps * (q * q + p * p);
        if index < n {
            r * q
        } else {
            r * p
        }
    }

    fn component_gradient(
        &self,
        index: usize,
        n: usize,
        q: T,
        p: T,
        omega: &ParameterPoint<T>,
    ) -> (T, T) {
        let eps = omega.coords()[0];
        let two = T::lit(2.0);
        if index < n {
            (eps * (T::lit(3.0) * q * q + p * p), eps * two * q * p)
        } else {
            (eps * two * q * p, eps * (q * q + T::lit(3.0) * p * p))
        }
    }
}

impl<T: Scalar> HamiltonianModel<T> for NlsModel<T> {
    fn name(&self) -> &str {
        "nls"
    }

    fn half_dim(&self) -> usize {
        self.grid.points
    }

    fn separable(&self) -> bool {
        false
    }

    fn parameter_box(&self) -> &ParameterBox<T> {
        &self.bounds
    }

    fn energy_weight(&self) -> T {
        self.grid.dx()
    }

    fn apply_linear(&self, x: &[T], _omega: &ParameterPoint<T>) -> Result<Vec<T>> {
        let n = self.half_dim();
        check_len("state", 2 * n, x.len())?;
        let dx = self.grid.dx();
        let mut out = periodic_second_difference(&x[..n], dx, T::one());
        out.extend(periodic_second_difference(&x[n..], dx, T::one()));
        Ok(out)
    }

    fn has_nonlinearity(&self) -> bool {
        true
    }

    fn nonlinear_grad(&self, z: &[T], omega: &ParameterPoint<T>) -> Result<Vec<T>> {
        check_len("state", 2 * self.half_dim(), z.len())?;
        nls_nonlinearity(z, Self::epsilon(omega)?)
    }

    fn nonlinear_jacobian(&self, z: &[T], omega: &ParameterPoint<T>) -> Result<DenseMatrix<T>> {
        let n = self.half_dim();
        check_len("state", 2 * n, z.len())?;
        Self::epsilon(omega)?;
        let mut jac = DenseMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            let (q, p) = (z[i], z[i + n]);
            let (a, b) = self.component_gradient(i, n, q, p, omega);
            let (c, d) = self.component_gradient(i + n, n, q, p, omega);
            jac[(i, i)] = a;
            jac[(i, i + n)] = b;
            jac[(i + n, i)] = c;
            jac[(i + n, i + n)] = d;
        }
        Ok(jac)
    }

    fn pairwise(&self) -> Option<&dyn PairwiseNonlinearity<T>> {
        Some(self)
    }

    fn hamiltonian(&self, z: &[T], omega: &ParameterPoint<T>) -> Result<T> {
        let n = self.half_dim();
        check_len("state", 2 * n, z.len())?;
        let eps = Self::epsilon(omega)?;
        let dx = self.grid.dx();
        let dx2 = dx * dx;
        let (q, p) = z.split_at(n);
        let quarter = T::lit(0.25);
        let sum: T = (0..n)
            .map(|i| {
                let im = (i + n - 1) % n;
                let r = q[i] * q[i] + p[i] * p[i];
                (q[i] * q[im] - q[i] * q[i]) / dx2
                    + (p[i] * p[im] - p[i] * p[i]) / dx2
                    + eps * quarter * r * r
            })
            .sum();
        Ok(dx * sum)
    }

    fn initial_state(&self, omega: &ParameterPoint<T>) -> Result<Vec<T>> {
        Self::epsilon(omega)?;
        let n = self.half_dim();
        let amp = T::lit(2.0).sqrt();
        let mut q = Vec::with_capacity(n);
        let mut p = Vec::with_capacity(n);
        for i in 1..=n {
            let s = self.grid.node(i) - self.center;
            let modulus = amp / s.cosh();
            let phase = self.speed * s / T::lit(2.0);
            p.push(modulus * phase.cos());
            q.push(modulus * phase.sin());
        }
        q.extend(p);
        Ok(q)
    }
}

/// Quadratic Hamiltonian `H = ½ zᵀ L z` with a fixed symmetric `L`, independent of ω.
#[derive(Clone, Debug)]
pub struct QuadraticModel<T> {
    l: DenseMatrix<T>,
    z0: Vec<T>,
    separable: bool,
    bounds: ParameterBox<T>,
}

impl<T: Scalar> QuadraticModel<T> {
    pub fn new(l: DenseMatrix<T>, z0: Vec<T>) -> Result<Self> {
        crate::error::check_even("quadratic model", l.rows())?;
        check_len("quadratic model columns", l.rows(), l.cols())?;
        check_len("quadratic model initial state", l.rows(), z0.len())?;
        let n = l.rows() / 2;
        let separable = (0..n).all(|i| (n..2 * n).all(|j| l[(i, j)] == T::zero()));
        let bounds = ParameterBox::new(vec![T::zero()], vec![T::one()])?;
        Ok(Self {
            l,
            z0,
            separable,
            bounds,
        })
    }

    /// `H = (q² + p²)/2`.
    pub fn harmonic_oscillator(q0: T, p0: T) -> Self {
        Self::new(DenseMatrix::identity(2), vec![q0, p0]).expect("valid oscillator")
    }

    /// `H = p²/2`.
    pub fn free_particle(q0: T, p0: T) -> Self {
        let l = DenseMatrix::from_rows(&[&[T::zero(), T::zero()], &[T::zero(), T::one()]]);
        Self::new(l, vec![q0, p0]).expect("valid free particle")
    }
}

impl<T: Scalar> HamiltonianModel<T> for QuadraticModel<T> {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn half_dim(&self) -> usize {
        self.l.rows() / 2
    }

    fn separable(&self) -> bool {
        self.separable
    }

    fn parameter_box(&self) -> &ParameterBox<T> {
        &self.bounds
    }

    fn apply_linear(&self, x: &[T], _omega: &ParameterPoint<T>) -> Result<Vec<T>> {
        self.l.matvec(x)
    }

    fn linear_matrix(&self, _omega: &ParameterPoint<T>) -> Result<DenseMatrix<T>> {
        Ok(self.l.clone())
    }

    fn hamiltonian(&self, z: &[T], _omega: &ParameterPoint<T>) -> Result<T> {
        let lz = self.l.matvec(z)?;
        Ok(T::lit(0.5) * crate::scalar::dot(z, &lz))
    }

    fn initial_state(&self, _omega: &ParameterPoint<T>) -> Result<Vec<T>> {
        Ok(self.z0.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wave(n: usize) -> WaveModel<f64> {
        WaveModel::new(GridSpec::new(1.0, n, 0.01, 0.1).unwrap(), 0.1).unwrap()
    }

    fn nls(n: usize) -> NlsModel<f64> {
        let l = 2.0 * std::f64::consts::PI / 0.11;
        NlsModel::new(GridSpec::new(l, n, 0.01, 0.1).unwrap(), 1.0).unwrap()
    }

    /// Central differences of `f` with step `h`.
    fn fd_gradient(f: impl Fn(&[f64]) -> f64, z: &[f64], h: f64) -> Vec<f64> {
        let mut x = z.to_vec();
        (0..z.len())
            .map(|i| {
                x[i] = z[i] + h;
                let fp = f(&x);
                x[i] = z[i] - h;
                let fm = f(&x);
                x[i] = z[i];
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn kappa_values() {
        let m = wave(10);
        let zero = ParameterPoint::new(vec![0.0; 4]);
        assert_eq!(m.kappa(&zero).unwrap(), 0.0);
        let ones = ParameterPoint::new(vec![1.0; 4]);
        assert!((m.kappa(&ones).unwrap() - 0.1 * 205.0 / 144.0).abs() < 1e-15);
        let test = ParameterPoint::new(vec![0.8456, 0.1320, 0.9328, 0.5809]);
        assert!((m.kappa(&test).unwrap() - 0.1019).abs() <= 5e-4);
    }

    #[test]
    fn zero_kappa_transports_momentum_only() {
        let m = wave(4);
        let omega = ParameterPoint::new(vec![0.0; 4]);
        let l = m.linear_matrix(&omega).unwrap();
        let mut expected = DenseMatrix::zeros(8, 8);
        for i in 4..8 {
            expected[(i, i)] = 1.0;
        }
        assert_eq!(l, expected);
    }

    #[test]
    fn nls_grid_spacing() {
        let m = nls(256);
        assert!((m.grid().dx() - 0.2231).abs() <= 5e-4);
    }

    #[test]
    fn spline_values() {
        assert_eq!(cubic_spline(0.0), 1.0);
        assert_eq!(cubic_spline(1.0), 0.25);
        assert_eq!(cubic_spline(2.0), 0.0);
        assert_eq!(cubic_spline(3.5), 0.0);
        // continuity at the knot
        assert!((cubic_spline(1.0f64 - 1e-9) - cubic_spline(1.0 + 1e-9)).abs() < 1e-8);
    }

    #[test]
    fn nonlinearity_single_node() {
        let g = nls_nonlinearity(&[1.0, 2.0], 1.0).unwrap();
        assert_eq!(g, vec![5.0, 10.0]);
        let m = nls(8);
        let omega = ParameterPoint::scalar(1.0);
        let zero = vec![0.0; 16];
        assert_eq!(m.nonlinear_grad(&zero, &omega).unwrap(), zero);
        assert_eq!(m.hamiltonian(&zero, &omega).unwrap(), 0.0);
    }

    #[test]
    fn wave_hamiltonian_examples() {
        // N=2 on a unit domain gives dx=0.5; N=2 is below the builder minimum, so use the formula directly.
        let m = WaveModel {
            grid: GridSpec::new(1.0, 2, 0.1, 0.1).unwrap(),
            c2: 0.1,
            bounds: ParameterBox::new(vec![0.0; 4], vec![1.0; 4]).unwrap(),
        };
        let omega = ParameterPoint::new(vec![0.3, 0.2, 0.7, 0.9]);
        let h: f64 = m.hamiltonian(&[0.0, 0.0, 1.0, 1.0], &omega).unwrap();
        assert!((h - 0.5).abs() < 1e-15);

        let w = wave(12);
        let mut z = vec![0.7; 12];
        z.extend(vec![0.0; 12]);
        assert_eq!(w.hamiltonian(&z, &omega).unwrap(), 0.0);
    }

    #[test]
    fn wave_rhs_position_block_is_momentum() {
        let m = wave(16);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let omega = ParameterPoint::new((0..4).map(|_| rng.gen::<f64>()).collect());
        let z: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rhs = eval_rhs(&m, &z, &omega).unwrap();
        assert_eq!(&rhs[..16], &z[16..]);
        let kappa = m.kappa(&omega).unwrap();
        let qxx = periodic_second_difference(&z[..16], m.grid().dx(), kappa);
        for (a, b) in rhs[16..].iter().zip(&qxx) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(eval_rhs(&m, &[0.0; 32], &omega).unwrap(), vec![0.0; 32]);
    }

    #[test]
    fn wave_initial_state() {
        let m = wave(100);
        let z0 = m.initial_state(&ParameterPoint::new(vec![0.5; 4])).unwrap();
        assert_eq!(z0.len(), 200);
        // x_50 = 0.5 is the spline centre
        assert_eq!(z0[49], 1.0);
        assert!(z0[100..].iter().all(|&p| p == 0.0));
        assert_eq!(z0[0], 0.0);
    }

    #[test]
    fn nls_initial_state_is_soliton() {
        let m = nls(64);
        let z0 = m.initial_state(&ParameterPoint::scalar(1.0)).unwrap();
        for i in 0..64 {
            let x = m.grid().node(i + 1) - m.center();
            let modulus = (z0[i] * z0[i] + z0[i + 64] * z0[i + 64]).sqrt();
            assert!((modulus - 2f64.sqrt() / x.cosh()).abs() < 1e-14);
        }
    }

    #[test]
    fn second_difference_matrix_properties() {
        let d = second_difference_matrix(7, 0.3);
        assert!(d.sub(&d.transpose()).unwrap().max_abs() == 0.0);
        for i in 0..7 {
            let s: f64 = d.row(i).iter().sum();
            assert!(s.abs() < 1e-12);
        }
        let x: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let a = d.matvec(&x).unwrap();
        let b = periodic_second_difference(&x, 0.3, 1.0);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = wave(12);
        let s = nls(12);
        for trial in 0..100 {
            let omega_w = ParameterPoint::new((0..4).map(|_| rng.gen::<f64>()).collect());
            let omega_s = ParameterPoint::scalar(rng.gen_range(0.9..1.1));
            let z: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.5..1.5)).collect();
            for (model, omega) in [
                (&w as &dyn HamiltonianModel<f64>, &omega_w),
                (&s as &dyn HamiltonianModel<f64>, &omega_s),
            ] {
                let weight = model.energy_weight();
                let fd = fd_gradient(|x| model.hamiltonian(x, omega).unwrap() / weight, &z, 1e-6);
                let g = model.gradient(&z, omega).unwrap();
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() < 1e-5, "trial {trial} {}: {a} vs {b}", model.name());
                }
            }
        }
    }

    #[test]
    fn wave_energy_is_quadratic() {
        let m = wave(10);
        let omega = ParameterPoint::new(vec![0.2, 0.4, 0.6, 0.8]);
        let z: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).cos()).collect();
        let h = m.hamiltonian(&z, &omega).unwrap();
        let z3: Vec<f64> = z.iter().map(|x| 3.0 * x).collect();
        assert!((m.hamiltonian(&z3, &omega).unwrap() - 9.0 * h).abs() < 1e-12 * h.abs().max(1.0));
    }

    #[test]
    fn nls_hamiltonian_independent_summation() {
        let m = nls(9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let eps = rng.gen_range(0.9..1.1);
            let z: Vec<f64> = (0..18).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let dx = m.grid().dx();
            let (q, p) = z.split_at(9);
            // forward-neighbour form of the same periodic sum
            let mut oracle = 0.0;
            for i in 0..9 {
                let next = (i + 1) % 9;
                oracle += (q[next] * q[i] + p[next] * p[i]) / (dx * dx);
                oracle -= (q[i] * q[i] + p[i] * p[i]) / (dx * dx);
                oracle += eps / 4.0 * (q[i] * q[i] + p[i] * p[i]).powi(2);
            }
            oracle *= dx;
            let h = m.hamiltonian(&z, &ParameterPoint::scalar(eps)).unwrap();
            assert!((h - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn nls_nonlinear_jacobian_matches_finite_differences() {
        let m = nls(5);
        let omega = ParameterPoint::scalar(1.05);
        let z: Vec<f64> = (0..10).map(|i| ((i * 7) as f64 * 0.3).sin()).collect();
        let jac = m.nonlinear_jacobian(&z, &omega).unwrap();
        let h = 1e-6;
        for j in 0..10 {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let gp = m.nonlinear_grad(&zp, &omega).unwrap();
            let gm = m.nonlinear_grad(&zm, &omega).unwrap();
            for i in 0..10 {
                assert!((jac[(i, j)] - (gp[i] - gm[i]) / (2.0 * h)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn parameter_grids() {
        let b = ParameterBox::new(vec![0.0; 4], vec![1.0; 4]).unwrap();
        let g = b.equidistant_grid(5).unwrap();
        assert_eq!(g.len(), 625);
        assert_eq!(g[0].coords(), &[0.0; 4]);
        assert_eq!(g[1].coords(), &[0.0, 0.0, 0.0, 0.25]);
        assert_eq!(g[624].coords(), &[1.0; 4]);
        assert!(g.iter().all(|w| b.contains(w)));

        let e = ParameterBox::new(vec![0.9], vec![1.1]).unwrap();
        let g = e.equidistant_grid(500).unwrap();
        assert_eq!(g.len(), 500);
        assert_eq!(g[499].coords()[0], 1.1);
        assert!(!e.contains(&ParameterPoint::scalar(1.2)));
    }

    #[test]
    fn grid_step_count() {
        let g = GridSpec::new(1.0, 10, 0.01, 30.0).unwrap();
        assert_eq!(g.steps().unwrap(), 3000);
        assert!(GridSpec::new(1.0, 10, 0.3, 1.0).is_err());
        assert!(GridSpec::new(1.0, 10, 0.0, 1.0).is_err());
        assert!(WaveModel::new(GridSpec::new(1.0, 2, 0.1, 0.1).unwrap(), 0.1).is_err());
    }
}
