//! Numerical laboratory for Kan-like skew products `K(θ, t) = (E(θ), φ(θ, t))`
//! on the cylinder `S¹ × [0, 1]`.
//!
//! The modules follow the pipeline: base dynamics ([`torus`]), equilibrium
//! states of the base ([`ruelle`]), the skew product and its axioms
//! ([`skew`]), fiber Lyapunov exponents ([`exponents`]), finite-time basin
//! classification ([`basins`]), the separating graph and interior periodic
//! orbits ([`central`]), separated-set entropy ([`entropy`]) and the run
//! orchestration used by the `kanlab` binary ([`config`], [`output`], [`cli`]).

pub mod basins;
pub mod entropy;
pub mod error;
pub mod central;
pub mod cli;
pub mod config;
pub mod exponents;
pub mod output;
pub mod series;
pub mod pool;
pub mod ruelle;
pub mod seeding;
pub mod torus;
pub mod skew;

pub use error::{KanError, Result};
pub use series::{Poly, TrigPoly};
pub use skew::{FiberFamily, KanSystem};
pub use torus::ExpandingCircleMap;
