//! Discrete variational field theories on cellular complexes.
//!
//! The crate provides abstract cellular complexes ([`complex`]) with two concrete
//! lattices, the cubic complex ([`cubic`]) and the Coxeter–Freudenthal–Kuhn
//! triangulation ([`cfk`]); the variational calculus of discrete Lagrangian
//! densities over them ([`variational`]); rotation-group geometry ([`so3`]);
//! geodesic interpolation and quadrature ([`interp`]); and a discrete Cosserat
//! rod integrator built from all of the above ([`rod`]).

pub mod cfk;
pub mod complex;
pub mod complex_check;
pub mod cubic;
pub mod error;
pub mod interp;
pub mod rod;
pub mod so3;
pub mod variational;

pub use error::{Error, Result};
