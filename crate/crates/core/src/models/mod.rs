//! Full stochastic models assembled from a deterministic tendency and the
//! random-map perturbation.

pub mod forecast;
pub mod lu;
pub mod tsw;

pub use forecast::{
    advection_diffusion_rhs, deterministic_step, forecast_with_increments, perturb_state, stability_limit,
    two_step_forecast, AdvectionDiffusion, ForecastOptions, NoRhs, Rhs, TensorAssignment, Var,
};
pub use lu::{
    lu_correspondence_check, lu_correspondence_with, lu_nform_check, lu_nform_with, salt_increment,
    salt_increment_with_safety,
};
pub use tsw::{
    tsw_deterministic_rhs, tsw_spde_step, tsw_step_with_increments, TswDynamics, TswModel, TswParams, TswState,
};
