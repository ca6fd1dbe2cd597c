//! Random near-identity maps acting on tensor fields over periodic grids.
//!
//! A state variable is tagged with its tensor class (function, 1-form,
//! density, n-vector) and perturbed by the pull-back or push-forward of a map
//! `T(x) = x + aΔt + Σᵢ e_iΔη_i`. Closed-form increments live in [`perturb`],
//! a formula-free reference transport in [`oracle`].

pub mod calculus;
pub mod conservation;
pub mod diffeo;
pub mod error;
pub mod field;
pub mod io;
pub mod models;
pub mod noise;
pub mod oracle;
pub mod perturb;

pub use diffeo::{Convention, DiffeoIncrement};
pub use error::{Error, Result};
pub use field::{Grid, ScalarField, TensorClass, VectorField};
pub use noise::{BrownianIncrements, BrownianPath, ModeSpec, NoiseBasis, NoiseStream};
pub use perturb::{NFormMode, PerturbationResult};
