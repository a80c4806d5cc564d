//! Generic numerical kernels shared by the solvers.

pub mod ode;
pub mod quadrature;
pub mod roots;

pub use ode::{dopri5, OdeOptions, OdeStep};
pub use quadrature::{integrate, QuadOptions, QuadResult};
pub use roots::brent;
