//! Numerical laboratory for local dissipative (Lindblad) dynamics on
//! periodic lattices: generator construction, Krylov time evolution,
//! mixing and Lieb-Robinson diagnostics, and perturbation-stability
//! experiments, including a classical Glauber-dynamics engine.

pub mod algebra;
pub mod lattice;
pub mod scalar;

pub mod diagnostics;
pub mod evolution;
pub mod glauber;
pub mod io;
pub mod liouvillian;
pub mod presets;
pub mod stability;

pub use lattice::{Lattice, Region, Site};
pub use scalar::{Scalar, C};

/// Concrete f64 aliases for the generic core types.
pub type Operator64 = algebra::Operator<f64>;
pub type Superoperator64 = algebra::Superoperator<f64>;
pub type LindbladData64 = algebra::LindbladData<f64>;
pub type LocalTerm64 = liouvillian::LocalTerm<f64>;
pub type Liouvillian64 = liouvillian::Liouvillian<f64>;
pub type Perturbation64 = liouvillian::Perturbation<f64>;
pub type EvolutionEngine64 = evolution::EvolutionEngine<f64>;
pub type FixedPoint64 = evolution::FixedPoint<f64>;

/// Concrete f32 aliases.
pub type Operator32 = algebra::Operator<f32>;
pub type Superoperator32 = algebra::Superoperator<f32>;
pub type LindbladData32 = algebra::LindbladData<f32>;
