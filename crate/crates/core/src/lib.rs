//! Structure-preserving model reduction for parametric Hamiltonian systems.
//!
//! Numerics are generic over [`Scalar`]; the aliases below fix `T = f64`.

pub mod basis;
pub mod deim;
pub mod error;
pub mod integrators;
pub mod io;
pub mod matrix;
pub mod models;
pub mod rom;
pub mod scalar;
pub mod svd;
pub mod symplectic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = matrix::DenseMatrix<f64>;
pub type Basis = symplectic::SymplecticBasis<f64>;
pub type Snapshots = basis::SnapshotSet<f64>;
pub type Parameter = models::ParameterPoint<f64>;
pub type Grid = models::GridSpec<f64>;
pub type Wave = models::WaveModel<f64>;
pub type Nls = models::NlsModel<f64>;
pub type Deim = deim::DeimOperator<f64>;
pub type Svd = svd::SvdResult<f64>;
pub type Trajectory = integrators::Trajectory<f64>;
pub type ErrorSeries = rom::ErrorSeries<f64>;
