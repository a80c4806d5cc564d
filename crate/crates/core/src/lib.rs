#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod laplace_ode;
pub mod mechanisms;
pub mod numerics;
pub mod quadratic;
pub mod scalar;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use quadratic::QuadraticParams;
pub use simulate::{MCEstimate, PathEnsemble, PathGrid, RngSpec, Scheme};
pub use verify::{Check, McSpec, VerificationReport};

pub type Mechanism = mechanisms::BranchingMechanism<f64>;
pub type Immigration = mechanisms::ImmigrationMechanism<f64>;
pub type Levy = mechanisms::LevyMeasure<f64>;
pub type Grid = laplace_ode::GridFunction<f64>;
pub type Measure = laplace_ode::FiniteMeasureOnR<f64>;
pub type Quadratic = quadratic::QuadraticParams<f64>;
