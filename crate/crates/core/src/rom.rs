//! Reduced-model assembly, online simulation and error measurement.

use std::io::Write;

use crate::deim::{deim_apply, reduced_jacobian, sample_nonlinear, DeimOperator};
use crate::error::{check_len, Error, Result};
use crate::integrators::{
    integrate_field, integrate_system, HamiltonianSystem, IntegrateOptions, Scheme, Trajectory, VectorField,
};
use crate::matrix::DenseMatrix;
use crate::models::{GridSpec, HamiltonianModel, ParameterPoint};
use crate::scalar::Scalar;
use crate::symplectic::{apply_j, apply_j_columns, symplectic_inverse, SymplecticBasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RomKind {
    /// `ẏ = A⁺ J₂ₙ ∇H(Ay)`, integrated with Störmer-Verlet.
    Symplectic,
    /// `ẏ = Vᵀ J₂ₙ ∇H(Vy)`, integrated with RK2.
    PodGalerkin,
}

/// How the nonlinear part of the gradient enters the reduced system.
#[derive(Clone, Debug, PartialEq)]
pub enum NonlinearPath<T> {
    /// Linear model, nothing to evaluate.
    None,
    /// `g` evaluated on the lifted state every call.
    Dense,
    /// Interpolation with an arbitrary nonlinear basis.
    Deim(DeimOperator<T>),
    /// Interpolation with `V = (A⁺)ᵀ`.
    Sdeim(DeimOperator<T>),
}

impl<T> NonlinearPath<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Dense => "dense",
            Self::Deim(_) => "deim",
            Self::Sdeim(_) => "sdeim",
        }
    }

    fn operator(&self) -> Option<&DeimOperator<T>> {
        match self {
            Self::Deim(op) | Self::Sdeim(op) => Some(op),
            _ => None,
        }
    }
}

/// A model projected onto a reduced basis at a fixed parameter.
pub struct ReducedModel<'m, T: Scalar, M: ?Sized> {
    model: &'m M,
    omega: ParameterPoint<T>,
    kind: RomKind,
    basis: DenseMatrix<T>,
    /// `A⁺` or `Vᵀ`.
    reducer: DenseMatrix<T>,
    reduced_linear: DenseMatrix<T>,
    path: NonlinearPath<T>,
    separable: bool,
}

/// Projects `model` onto the orthosymplectic basis `a` at `omega`.
pub fn assemble_symplectic_rom<'m, T: Scalar, M: HamiltonianModel<T> + ?Sized>(
    model: &'m M,
    a: &SymplecticBasis<T>,
    path: NonlinearPath<T>,
    omega: &ParameterPoint<T>,
) -> Result<ReducedModel<'m, T, M>> {
    check_len("basis half-dimension", model.half_dim(), a.n())?;
    a.validate(1e-10)?;
    let basis = a.matrix();
    let reducer = symplectic_inverse(&basis)?;
    let jla = apply_j_columns(&model.linear_times(&basis, omega)?, false)?;
    let reduced_linear = reducer.matmul(&jla)?;
    ReducedModel::new(model, omega, RomKind::Symplectic, basis, reducer, reduced_linear, path)
}

/// Galerkin projection of `model` onto the orthonormal columns of `v` at `omega`.
pub fn assemble_pod_rom<'m, T: Scalar, M: HamiltonianModel<T> + ?Sized>(
    model: &'m M,
    v: &DenseMatrix<T>,
    path: NonlinearPath<T>,
    omega: &ParameterPoint<T>,
) -> Result<ReducedModel<'m, T, M>> {
    check_len("basis rows", 2 * model.half_dim(), v.rows())?;
    let residual = v.orthonormality_residual().to_f64_lossy();
    if !(residual <= 1e-10) {
        return Err(Error::NotOrthonormal {
            residual,
            tolerance: 1e-10,
        });
    }
    let reducer = v.transpose();
    let jlv = apply_j_columns(&model.linear_times(v, omega)?, false)?;
    let reduced_linear = reducer.matmul(&jlv)?;
    ReducedModel::new(model, omega, RomKind::PodGalerkin, v.clone(), reducer, reduced_linear, path)
}

impl<'m, T: Scalar, M: HamiltonianModel<T> + ?Sized> ReducedModel<'m, T, M> {
    fn new(
        model: &'m M,
        omega: &ParameterPoint<T>,
        kind: RomKind,
        basis: DenseMatrix<T>,
        reducer: DenseMatrix<T>,
        reduced_linear: DenseMatrix<T>,
        path: NonlinearPath<T>,
    ) -> Result<Self> {
        if let Some(op) = path.operator() {
            check_len("DEIM projector rows", basis.cols(), op.interpolation().rows())?;
            check_len("DEIM basis rows", basis.rows(), op.basis().rows())?;
        }
        if matches!(path, NonlinearPath::None) && model.has_nonlinearity() {
            return Err(Error::InvalidArgument(format!(
                "model '{}' has a nonlinear term; choose dense, deim or sdeim",
                model.name()
            )));
        }
        let k = basis.cols() / 2;
        let gradient_linear = apply_j_columns(&reduced_linear, true)?;
        let cross_free = (0..k).all(|i| (0..k).all(|j| gradient_linear[(i, k + j)] == T::zero() && gradient_linear[(k + i, j)] == T::zero()));
        let separable = basis.cols() % 2 == 0 && cross_free && !model.has_nonlinearity();
        Ok(Self {
            model,
            omega: omega.clone(),
            kind,
            basis,
            reducer,
            reduced_linear,
            path,
            separable,
        })
    }

    pub fn kind(&self) -> RomKind {
        self.kind
    }

    pub fn omega(&self) -> &ParameterPoint<T> {
        &self.omega
    }

    pub fn path(&self) -> &NonlinearPath<T> {
        &self.path
    }

    pub fn model(&self) -> &M {
        self.model
    }

    /// Number of reduced coordinates.
    pub fn reduced_dim(&self) -> usize {
        self.basis.cols()
    }

    /// `A` or `V`.
    pub fn basis(&self) -> &DenseMatrix<T> {
        &self.basis
    }

    /// `A⁺ J₂ₙ L A` or `Vᵀ J₂ₙ L V`.
    pub fn reduced_linear(&self) -> &DenseMatrix<T> {
        &self.reduced_linear
    }

    /// `A⁺ z` or `Vᵀ z`.
    pub fn reduce(&self, z: &[T]) -> Result<Vec<T>> {
        self.reducer.matvec(z)
    }

    /// Reduced image of the model's initial state.
    pub fn initial_state(&self) -> Result<Vec<T>> {
        self.reduce(&self.model.initial_state(&self.omega)?)
    }

    pub fn lift(&self, y: &[T]) -> Result<Vec<T>> {
        self.basis.matvec(y)
    }

    /// `H(Ay)`.
    pub fn reduced_hamiltonian(&self, y: &[T]) -> Result<T> {
        self.model.hamiltonian(&self.lift(y)?, &self.omega)
    }

    /// Basis transpose applied to the full gradient at `Ay`: `∇_y H(Ay)` without the
    /// model's quadrature weight.
    pub fn true_reduced_gradient(&self, y: &[T]) -> Result<Vec<T>> {
        let z = self.lift(y)?;
        self.basis.tr_matvec(&self.model.gradient(&z, &self.omega)?)
    }

    /// Nonlinear contribution to the reduced right-hand side.
    pub fn nonlinear_rhs(&self, y: &[T]) -> Result<Vec<T>> {
        match &self.path {
            NonlinearPath::None => Ok(vec![T::zero(); self.reduced_dim()]),
            NonlinearPath::Dense => {
                let g = self.model.nonlinear_grad(&self.lift(y)?, &self.omega)?;
                self.reducer.matvec(&apply_j(&g, false)?)
            }
            NonlinearPath::Deim(op) | NonlinearPath::Sdeim(op) => {
                deim_apply(op, &sample_nonlinear(op, self.model, &self.basis, y, &self.omega)?)
            }
        }
    }

    /// Reduced right-hand side `ẏ`.
    pub fn rhs(&self, y: &[T]) -> Result<Vec<T>> {
        check_len("reduced state", self.reduced_dim(), y.len())?;
        let mut out = self.reduced_linear.matvec(y)?;
        if !matches!(self.path, NonlinearPath::None) {
            for (o, n) in out.iter_mut().zip(self.nonlinear_rhs(y)?) {
                *o += n;
            }
        }
        Ok(out)
    }

    /// Jacobian of [`rhs`](Self::rhs).
    pub fn rhs_jacobian(&self, y: &[T]) -> Result<DenseMatrix<T>> {
        let nl = match &self.path {
            NonlinearPath::None => return Ok(self.reduced_linear.clone()),
            NonlinearPath::Dense => {
                let dg = self.model.nonlinear_jacobian(&self.lift(y)?, &self.omega)?;
                let jdg = apply_j_columns(&dg.matmul(&self.basis)?, false)?;
                self.reducer.matmul(&jdg)?
            }
            NonlinearPath::Deim(op) | NonlinearPath::Sdeim(op) => {
                reduced_jacobian(op, self.model, &self.basis, y, &self.omega)?
            }
        };
        self.reduced_linear.add(&nl)
    }

    fn analytic_jacobian(&self) -> bool {
        match &self.path {
            NonlinearPath::Deim(op) | NonlinearPath::Sdeim(op) => op.paired() && self.model.pairwise().is_some(),
            _ => true,
        }
    }
}

impl<T: Scalar, M: HamiltonianModel<T> + ?Sized> HamiltonianSystem<T> for ReducedModel<'_, T, M> {
    fn dim(&self) -> usize {
        self.reduced_dim()
    }

    fn separable(&self) -> bool {
        self.separable
    }

    /// `J₂ₖᵀ ẏ`, so that `ẏ = J₂ₖ·gradient`.
    fn gradient(&self, y: &[T]) -> Result<Vec<T>> {
        apply_j(&self.rhs(y)?, true)
    }

    fn has_gradient_jacobian(&self) -> bool {
        self.analytic_jacobian()
    }

    fn gradient_jacobian(&self, y: &[T]) -> Option<Result<DenseMatrix<T>>> {
        if !self.analytic_jacobian() {
            return None;
        }
        Some(self.rhs_jacobian(y).and_then(|m| apply_j_columns(&m, true)))
    }

    fn energy(&self, y: &[T]) -> Result<T> {
        self.reduced_hamiltonian(y)
    }
}

impl<T: Scalar, M: HamiltonianModel<T> + ?Sized> VectorField<T> for ReducedModel<'_, T, M> {
    fn dim(&self) -> usize {
        self.reduced_dim()
    }

    fn eval(&self, y: &[T]) -> Result<Vec<T>> {
        self.rhs(y)
    }
}

/// Integrates the reduced system from `y0` over `grid`'s time window. Symplectic models use
/// the Störmer-Verlet scheme of `opts` (RK2 is refused); POD models always use RK2.
pub fn simulate_rom_from<T: Scalar, M: HamiltonianModel<T> + ?Sized>(
    rom: &ReducedModel<'_, T, M>,
    y0: &[T],
    grid: &GridSpec<T>,
    opts: &IntegrateOptions,
) -> Result<Trajectory<T>> {
    let steps = grid.steps()?;
    match rom.kind {
        RomKind::Symplectic => {
            if opts.scheme == Scheme::Rk2 {
                return Err(Error::InvalidArgument("symplectic reduced models use Störmer-Verlet".into()));
            }
            integrate_system(rom, y0, grid.dt, steps, &rom.omega, opts)
        }
        RomKind::PodGalerkin => integrate_field(rom, y0, grid.dt, steps, &rom.omega, opts.stride),
    }
}

/// [`simulate_rom_from`] starting at the reduced initial state.
pub fn simulate_rom<T: Scalar, M: HamiltonianModel<T> + ?Sized>(
    rom: &ReducedModel<'_, T, M>,
    grid: &GridSpec<T>,
    opts: &IntegrateOptions,
) -> Result<Trajectory<T>> {
    simulate_rom_from(rom, &rom.initial_state()?, grid, opts)
}

/// Errors between a full and a reduced trajectory on a shared time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSeries<T> {
    pub times: Vec<T>,
    /// `‖z − Ay‖₂ √Δx`.
    pub l2: Vec<T>,
    pub hamiltonian_full: Vec<T>,
    pub hamiltonian_reduced: Vec<T>,
    /// `|H(z) − H(Ay)|`.
    pub delta_h: Vec<T>,
}

impl<T: Scalar> ErrorSeries<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `max_t |ΔH(t) − ΔH(0)|`.
    pub fn delta_h_deviation(&self) -> T {
        let h0 = self.delta_h.first().copied().unwrap_or(T::zero());
        self.delta_h.iter().fold(T::zero(), |m, &d| m.max((d - h0).abs()))
    }

    pub fn final_l2(&self) -> T {
        self.l2.last().copied().unwrap_or(T::zero())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        use crate::io::format_f64;
        writeln!(w, "t,l2,H_full,H_rom,deltaH")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                format_f64(self.times[i].to_f64_lossy()),
                format_f64(self.l2[i].to_f64_lossy()),
                format_f64(self.hamiltonian_full[i].to_f64_lossy()),
                format_f64(self.hamiltonian_reduced[i].to_f64_lossy()),
                format_f64(self.delta_h[i].to_f64_lossy()),
            )?;
        }
        Ok(())
    }
}

/// Compares a full-order trajectory with a reduced one (both sampled at the same times).
pub fn error_series<T: Scalar, M: HamiltonianModel<T> + ?Sized>(
    fom: &Trajectory<T>,
    rom: &ReducedModel<'_, T, M>,
    rom_traj: &Trajectory<T>,
    dx: T,
) -> Result<ErrorSeries<T>> {
    check_len("trajectory samples", fom.len(), rom_traj.len())?;
    let tol = T::lit(1e-9);
    for (a, b) in fom.times.iter().zip(&rom_traj.times) {
        if (*a - *b).abs() > tol * (T::one() + a.abs()) {
            return Err(Error::InvalidArgument("full and reduced time grids differ".into()));
        }
    }
    let lifted = rom.basis.matmul(&rom_traj.states)?;
    let weight = dx.sqrt();
    let mut series = ErrorSeries {
        times: fom.times.clone(),
        l2: Vec::with_capacity(fom.len()),
        hamiltonian_full: Vec::with_capacity(fom.len()),
        hamiltonian_reduced: Vec::with_capacity(fom.len()),
        delta_h: Vec::with_capacity(fom.len()),
    };
    for i in 0..fom.len() {
        let (z, za) = (fom.state(i), lifted.col(i));
        let diff: T = z.iter().zip(za).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt();
        let hf = rom.model.hamiltonian(z, &rom.omega)?;
        let hr = rom.model.hamiltonian(za, &rom.omega)?;
        series.l2.push(diff * weight);
        series.hamiltonian_full.push(hf);
        series.hamiltonian_reduced.push(hr);
        series.delta_h.push((hf - hr).abs());
    }
    Ok(series)
}
