//! Fixed-step time integration: Störmer-Verlet (explicit or Newton-implicit) and explicit midpoint RK2.

use log::warn;

use crate::error::{check_len, Error, Result};
use crate::matrix::DenseMatrix;
use crate::models::{GridSpec, HamiltonianModel, ParameterPoint};
use crate::scalar::{all_finite, norm2, Scalar};
use crate::symplectic::apply_j;

/// A canonical Hamiltonian system with its parameter already fixed.
pub trait HamiltonianSystem<T: Scalar>: Sync {
    /// Full state length `2n`.
    fn dim(&self) -> usize;

    fn separable(&self) -> bool;

    /// Gradient driving the dynamics, `ż = J·gradient(z)`.
    fn gradient(&self, z: &[T]) -> Result<Vec<T>>;

    fn has_gradient_jacobian(&self) -> bool {
        false
    }

    /// Analytic Jacobian of [`gradient`](Self::gradient); `None` when
    /// [`has_gradient_jacobian`](Self::has_gradient_jacobian) is false.
    fn gradient_jacobian(&self, _z: &[T]) -> Option<Result<DenseMatrix<T>>> {
        None
    }

    fn energy(&self, z: &[T]) -> Result<T>;
}

/// An autonomous ODE right-hand side.
pub trait VectorField<T: Scalar>: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, z: &[T]) -> Result<Vec<T>>;
}

/// `z ↦ J ∇H(z)` as a plain vector field.
pub struct HamiltonianFlow<'a, S: ?Sized>(pub &'a S);

impl<T: Scalar, S: HamiltonianSystem<T> + ?Sized> VectorField<T> for HamiltonianFlow<'_, S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, z: &[T]) -> Result<Vec<T>> {
        apply_j(&self.0.gradient(z)?, false)
    }
}

/// A model evaluated at a fixed parameter.
pub struct BoundModel<'a, T, M: ?Sized> {
    model: &'a M,
    omega: ParameterPoint<T>,
}

impl<'a, T: Scalar, M: HamiltonianModel<T> + ?Sized> BoundModel<'a, T, M> {
    pub fn new(model: &'a M, omega: ParameterPoint<T>) -> Self {
        Self { model, omega }
    }

    pub fn omega(&self) -> &ParameterPoint<T> {
        &self.omega
    }

    pub fn model(&self) -> &'a M {
        self.model
    }
}

impl<T: Scalar, M: HamiltonianModel<T> + ?Sized> HamiltonianSystem<T> for BoundModel<'_, T, M> {
    fn dim(&self) -> usize {
        2 * self.model.half_dim()
    }

    fn separable(&self) -> bool {
        self.model.separable()
    }

    fn gradient(&self, z: &[T]) -> Result<Vec<T>> {
        self.model.gradient(z, &self.omega)
    }

    fn has_gradient_jacobian(&self) -> bool {
        true
    }

    fn gradient_jacobian(&self, z: &[T]) -> Option<Result<DenseMatrix<T>>> {
        Some(self.model.gradient_jacobian(z, &self.omega))
    }

    fn energy(&self, z: &[T]) -> Result<T> {
        self.model.hamiltonian(z, &self.omega)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonConfig {
    /// Residual 2-norm at which the iteration stops.
    pub tol: f64,
    pub max_iters: usize,
    /// Forward-difference step used when no analytic Jacobian is supplied.
    pub fd_jacobian_step: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 50,
            fd_jacobian_step: 1e-7,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters == 0 || !(self.fd_jacobian_step > 0.0) {
            return Err(Error::InvalidArgument(
                "Newton needs tol > 0, max_iters >= 1 and a positive difference step".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonSolution<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub residual: T,
}

pub type ResidualFn<'a, T> = dyn Fn(&[T]) -> Result<Vec<T>> + 'a;
pub type JacobianFn<'a, T> = dyn Fn(&[T]) -> Result<DenseMatrix<T>> + 'a;

/// Newton's method for `R(x) = 0`.
pub fn newton_solve<T: Scalar>(
    residual: &ResidualFn<'_, T>,
    jacobian: Option<&JacobianFn<'_, T>>,
    x0: &[T],
    cfg: &NewtonConfig,
) -> Result<NewtonSolution<T>> {
    cfg.validate()?;
    let tol = T::lit(cfg.tol);
    let mut x = x0.to_vec();
    let mut r = residual(&x)?;
    check_len("Newton residual", x.len(), r.len())?;
    let mut rnorm = norm2(&r);
    if rnorm <= tol {
        return Ok(NewtonSolution {
            x,
            iterations: 0,
            residual: rnorm,
        });
    }
    for it in 1..=cfg.max_iters {
        let jac = match jacobian {
            Some(f) => f(&x)?,
            None => forward_difference_jacobian(residual, &x, &r, T::lit(cfg.fd_jacobian_step))?,
        };
        let neg_r: Vec<T> = r.iter().map(|&v| -v).collect();
        let delta = jac.solve(&neg_r)?;
        x.iter_mut().zip(&delta).for_each(|(xi, &d)| *xi += d);
        r = residual(&x)?;
        rnorm = norm2(&r);
        if !rnorm.is_finite() {
            break;
        }
        // a step below the resolution of x means the residual sits at its round-off floor
        let floor = T::epsilon() * T::lit(16.0) * norm2(&x).max(T::one());
        if rnorm <= tol || norm2(&delta) <= floor {
            return Ok(NewtonSolution {
                x,
                iterations: it,
                residual: rnorm,
            });
        }
    }
    Err(Error::NewtonDivergence {
        iterations: cfg.max_iters,
        residual: rnorm.to_f64_lossy(),
    })
}

fn forward_difference_jacobian<T: Scalar>(
    residual: &ResidualFn<'_, T>,
    x: &[T],
    r: &[T],
    step: T,
) -> Result<DenseMatrix<T>> {
    let n = x.len();
    let mut jac = DenseMatrix::zeros(r.len(), n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = step * T::one().max(x[j].abs());
        xp[j] = x[j] + h;
        let rp = residual(&xp)?;
        xp[j] = x[j];
        let col = jac.col_mut(j);
        for i in 0..r.len() {
            col[i] = (rp[i] - r[i]) / h;
        }
    }
    Ok(jac)
}

/// Which sub-block of the gradient Jacobian a stage needs.
#[derive(Clone, Copy)]
enum Block {
    /// `∂(∇_p H)/∂q`
    PQ,
    /// `∂(∇_q H)/∂p`
    QP,
}

fn join<T: Scalar>(q: &[T], p: &[T]) -> Vec<T> {
    let mut z = Vec::with_capacity(q.len() + p.len());
    z.extend_from_slice(q);
    z.extend_from_slice(p);
    z
}

/// `I + s·block` of the gradient Jacobian at `z`.
fn stage_jacobian<T: Scalar, S: HamiltonianSystem<T> + ?Sized>(
    sys: &S,
    z: &[T],
    block: Block,
    s: T,
) -> Option<Result<DenseMatrix<T>>> {
    let full = sys.gradient_jacobian(z)?;
    Some(full.map(|h| {
        let n = z.len() / 2;
        let (r0, c0) = match block {
            Block::PQ => (n, 0),
            Block::QP => (0, n),
        };
        DenseMatrix::from_fn(n, n, |i, j| {
            let id = if i == j { T::one() } else { T::zero() };
            id + s * h[(r0 + i, c0 + j)]
        })
    }))
}

/// Solves the stage equation `x = base + s·G(x)` where `G` is one half of the gradient
/// evaluated with the other half frozen.
fn implicit_stage<T: Scalar, S: HamiltonianSystem<T> + ?Sized>(
    sys: &S,
    frozen: &[T],
    solve_for_q: bool,
    base: &[T],
    s: T,
    predictor: Vec<T>,
    newton: &NewtonConfig,
) -> Result<Vec<T>> {
    let n = frozen.len();
    let assemble = |x: &[T]| {
        if solve_for_q {
            join(x, frozen)
        } else {
            join(frozen, x)
        }
    };
    let half = |g: Vec<T>| -> Vec<T> {
        if solve_for_q {
            g[n..].to_vec()
        } else {
            g[..n].to_vec()
        }
    };
    let residual = |x: &[T]| -> Result<Vec<T>> {
        let g = half(sys.gradient(&assemble(x))?);
        Ok((0..n).map(|i| x[i] - base[i] - s * g[i]).collect())
    };
    let block = if solve_for_q { Block::PQ } else { Block::QP };
    let analytic = |x: &[T]| -> Result<DenseMatrix<T>> {
        stage_jacobian(sys, &assemble(x), block, -s).expect("analytic Jacobian checked")
    };
    let jac: Option<&JacobianFn<'_, T>> = if sys.has_gradient_jacobian() {
        Some(&analytic)
    } else {
        None
    };
    Ok(newton_solve(&residual, jac, &predictor, newton)?.x)
}

/// Variants of the Störmer-Verlet scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum VerletVariant {
    /// Half step in `q`, full step in `p`, half step in `q`.
    #[default]
    PositionFirst,
    /// Half step in `p`, full step in `q`, half step in `p`.
    MomentumFirst,
}

/// One Störmer-Verlet step. Explicit when the system is separable, otherwise each
/// implicit stage is solved with Newton's method.
pub fn stormer_verlet_step<T: Scalar, S: HamiltonianSystem<T> + ?Sized>(
    sys: &S,
    z: &[T],
    dt: T,
    variant: VerletVariant,
    newton: &NewtonConfig,
) -> Result<Vec<T>> {
    check_len("state", sys.dim(), z.len())?;
    let n = z.len() / 2;
    let (q, p) = z.split_at(n);
    let h = dt / T::lit(2.0);
    let sep = sys.separable();
    match variant {
        VerletVariant::PositionFirst => {
            let g0 = sys.gradient(z)?;
            let step_q: Vec<T> = (0..n).map(|i| q[i] + h * g0[n + i]).collect();
            let q_half = if sep {
                step_q
            } else {
                implicit_stage(sys, p, true, q, h, step_q, newton)?
            };
            let g_mid = sys.gradient(&join(&q_half, p))?;
            let p1 = if sep {
                (0..n).map(|i| p[i] - dt * g_mid[i]).collect::<Vec<_>>()
            } else {
                let base: Vec<T> = (0..n).map(|i| p[i] - h * g_mid[i]).collect();
                let pred: Vec<T> = (0..n).map(|i| p[i] - dt * g_mid[i]).collect();
                implicit_stage(sys, &q_half, false, &base, -h, pred, newton)?
            };
            let g1 = sys.gradient(&join(&q_half, &p1))?;
            let q1: Vec<T> = (0..n).map(|i| q_half[i] + h * g1[n + i]).collect();
            Ok(join(&q1, &p1))
        }
        VerletVariant::MomentumFirst => {
            let g0 = sys.gradient(z)?;
            let step_p: Vec<T> = (0..n).map(|i| p[i] - h * g0[i]).collect();
            let p_half = if sep {
                step_p
            } else {
                implicit_stage(sys, q, false, p, -h, step_p, newton)?
            };
            let g_mid = sys.gradient(&join(q, &p_half))?;
            let q1 = if sep {
                (0..n).map(|i| q[i] + dt * g_mid[n + i]).collect::<Vec<_>>()
            } else {
                let base: Vec<T> = (0..n).map(|i| q[i] + h * g_mid[n + i]).collect();
                let pred: Vec<T> = (0..n).map(|i| q[i] + dt * g_mid[n + i]).collect();
                implicit_stage(sys, &p_half, true, &base, h, pred, newton)?
            };
            let g1 = sys.gradient(&join(&q1, &p_half))?;
            let p1: Vec<T> = (0..n).map(|i| p_half[i] - h * g1[i]).collect();
            Ok(join(&q1, &p1))
        }
    }
}

/// One explicit midpoint step.
pub fn rk2_step<T: Scalar, F: VectorField<T> + ?Sized>(field: &F, z: &[T], dt: T) -> Result<Vec<T>> {
    check_len("state", field.dim(), z.len())?;
    let k1 = field.eval(z)?;
    let h = dt / T::lit(2.0);
    let mid: Vec<T> = z.iter().zip(&k1).map(|(&a, &b)| a + h * b).collect();
    let k2 = field.eval(&mid)?;
    Ok(z.iter().zip(&k2).map(|(&a, &b)| a + dt * b).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    StormerVerlet,
    StormerVerletMomentumFirst,
    Rk2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrateOptions {
    pub scheme: Scheme,
    pub newton: NewtonConfig,
    /// Keep every `stride`-th state.
    pub stride: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::StormerVerlet,
            newton: NewtonConfig::default(),
            stride: 1,
        }
    }
}

impl IntegrateOptions {
    pub fn with_scheme(scheme: Scheme) -> Self {
        Self {
            scheme,
            ..Self::default()
        }
    }
}

/// Stored states of one run, one column per retained time.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: DenseMatrix<T>,
    pub omega: ParameterPoint<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[T] {
        self.states.col(i)
    }

    pub fn last_state(&self) -> &[T] {
        self.states.col(self.states.cols() - 1)
    }

    pub fn map_energy(&self, f: impl Fn(&[T]) -> Result<T>) -> Result<Vec<T>> {
        self.states.columns().map(f).collect()
    }
}

fn run<T: Scalar>(
    z0: &[T],
    dt: T,
    steps: usize,
    stride: usize,
    omega: &ParameterPoint<T>,
    mut step: impl FnMut(&[T]) -> Result<Vec<T>>,
) -> Result<Trajectory<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument("time step must be positive".into()));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    if !all_finite(z0) {
        return Err(Error::NonFiniteState { step: 0 });
    }
    let mut states = DenseMatrix::zeros(z0.len(), 0);
    let mut times = Vec::with_capacity(steps / stride + 1);
    states.push_column(z0)?;
    times.push(T::zero());
    let mut z = z0.to_vec();
    for s in 1..=steps {
        z = step(&z).map_err(|e| {
            warn!("integration failed at step {s}: {e}");
            e
        })?;
        if !all_finite(&z) {
            return Err(Error::NonFiniteState { step: s });
        }
        if s % stride == 0 {
            states.push_column(&z)?;
            times.push(T::from_count(s) * dt);
        }
    }
    Ok(Trajectory {
        times,
        states,
        omega: omega.clone(),
    })
}

/// Integrates a Hamiltonian system for `steps` steps of size `dt`.
pub fn integrate_system<T: Scalar, S: HamiltonianSystem<T> + ?Sized>(
    sys: &S,
    z0: &[T],
    dt: T,
    steps: usize,
    omega: &ParameterPoint<T>,
    opts: &IntegrateOptions,
) -> Result<Trajectory<T>> {
    check_len("initial state", sys.dim(), z0.len())?;
    match opts.scheme {
        Scheme::StormerVerlet => run(z0, dt, steps, opts.stride, omega, |z| {
            stormer_verlet_step(sys, z, dt, VerletVariant::PositionFirst, &opts.newton)
        }),
        Scheme::StormerVerletMomentumFirst => run(z0, dt, steps, opts.stride, omega, |z| {
            stormer_verlet_step(sys, z, dt, VerletVariant::MomentumFirst, &opts.newton)
        }),
        Scheme::Rk2 => {
            let flow = HamiltonianFlow(sys);
            run(z0, dt, steps, opts.stride, omega, |z| rk2_step(&flow, z, dt))
        }
    }
}

/// Integrates a general vector field with RK2.
pub fn integrate_field<T: Scalar, F: VectorField<T> + ?Sized>(
    field: &F,
    z0: &[T],
    dt: T,
    steps: usize,
    omega: &ParameterPoint<T>,
    stride: usize,
) -> Result<Trajectory<T>> {
    check_len("initial state", field.dim(), z0.len())?;
    run(z0, dt, steps, stride, omega, |z| rk2_step(field, z, dt))
}

/// Full-order run of `model` at `omega` over `grid`'s time window.
pub fn integrate<T: Scalar, M: HamiltonianModel<T> + ?Sized>(
    model: &M,
    z0: &[T],
    grid: &GridSpec<T>,
    omega: &ParameterPoint<T>,
    opts: &IntegrateOptions,
) -> Result<Trajectory<T>> {
    let steps = grid.steps()?;
    let sys = BoundModel::new(model, omega.clone());
    integrate_system(&sys, z0, grid.dt, steps, omega, opts)
}
