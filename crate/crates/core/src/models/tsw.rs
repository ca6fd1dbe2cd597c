//! Thermal shallow water: an active layer of height `h` and buoyancy `Θ` with
//! planar velocity `u`, perturbed by one shared random map per step.

use std::sync::Arc;

use crate::calculus::{derivative, gradient};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::noise::{sample_increments, BrownianIncrements, NoiseBasis, NoiseStream};

use super::forecast::{forecast_with_increments, ForecastOptions, NoRhs, Rhs, TensorAssignment, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct TswState {
    pub h: ScalarField,
    pub theta: ScalarField,
    pub u: VectorField,
}

impl TswState {
    /// Validates shapes and positivity of `h` and `Θ`.
    pub fn new(h: ScalarField, theta: ScalarField, u: VectorField) -> Result<Self> {
        h.same_grid(&theta)?;
        if u.grid() != h.grid() {
            return Err(Error::GridMismatch);
        }
        if u.dim() != 2 {
            return Err(Error::Dimension {
                op: "TswState",
                expected: "2",
                got: u.dim(),
            });
        }
        let s = Self { h, theta, u };
        s.check_positive()?;
        Ok(s)
    }

    /// `Err(PositivityLost)` at step 0 if `h` or `Θ` has a non-positive node.
    pub fn check_positive(&self) -> Result<()> {
        for (field, f) in [("h", &self.h), ("theta", &self.theta)] {
            let min = f.min();
            if !(min > 0.0) {
                return Err(Error::PositivityLost { field, step: 0, min });
            }
        }
        Ok(())
    }

    /// `[h, Θ, u]`, the order used by [`TensorAssignment::tsw`].
    pub fn to_vars(&self) -> Vec<Var> {
        vec![
            Var::Scalar(self.h.clone()),
            Var::Scalar(self.theta.clone()),
            Var::Vector(self.u.clone()),
        ]
    }

    pub fn from_vars(vars: Vec<Var>) -> Result<Self> {
        let mut it = vars.into_iter();
        match (it.next(), it.next(), it.next(), it.next()) {
            (Some(Var::Scalar(h)), Some(Var::Scalar(theta)), Some(Var::Vector(u)), None) => Ok(Self { h, theta, u }),
            _ => Err(Error::Format("expected state variables [h, theta, u]".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TswParams {
    pub kappa: f64,
    pub h0: f64,
    pub theta0: f64,
    pub fcor: f64,
}

impl TswParams {
    pub fn new(kappa: f64, h0: f64, theta0: f64, fcor: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !(h0 > 0.0) || !(theta0 > 0.0) || !fcor.is_finite() {
            return Err(Error::Format(format!(
                "invalid thermal shallow-water parameters: kappa = {kappa}, h0 = {h0}, theta0 = {theta0}, f = {fcor}"
            )));
        }
        Ok(Self {
            kappa,
            h0,
            theta0,
            fcor,
        })
    }
}

/// Tendencies of `(h, Θ, u)`:
///
/// `∂h/∂t = −D_p(h u^p)`,
/// `∂Θ/∂t = −u·∇Θ − κ(hΘ − h₀Θ₀)`,
/// `∂u/∂t = −(u·∇)u − f ẑ×u − ∇(hΘ) + ½h∇Θ`.
pub fn tsw_deterministic_rhs(state: &TswState, params: &TswParams) -> Result<TswState> {
    let (h, theta, u) = (&state.h, &state.theta, &state.u);
    let grid = h.grid();
    let mut dh = ScalarField::zeros(grid);
    for p in 0..2 {
        dh.axpy(-1.0, &derivative(&(h * u.component(p)), p)?);
    }

    let grad_theta = gradient(theta);
    let mut dtheta = u.dot(&grad_theta).scaled(-1.0);
    if params.kappa != 0.0 {
        let forcing = h.zip_map(theta, |a, b| a * b - params.h0 * params.theta0);
        dtheta.axpy(-params.kappa, &forcing);
    }

    let pressure = gradient(&(h * theta));
    let mut du = VectorField::zeros(grid);
    for j in 0..2 {
        let grad_uj = gradient(u.component(j));
        let c = du.component_mut(j);
        c.axpy(-1.0, &u.dot(&grad_uj));
        c.axpy(-1.0, pressure.component(j));
        c.axpy(0.5, &(h * grad_theta.component(j)));
    }
    // −f ẑ×u = (f v, −f u)
    if params.fcor != 0.0 {
        let (u0, u1) = (u.component(0).clone(), u.component(1).clone());
        du.component_mut(0).axpy(params.fcor, &u1);
        du.component_mut(1).axpy(-params.fcor, &u0);
    }
    Ok(TswState {
        h: dh,
        theta: dtheta,
        u: du,
    })
}

/// The thermal shallow-water tendency as a generic [`Rhs`].
#[derive(Clone, Copy, Debug)]
pub struct TswModel {
    pub params: TswParams,
}

impl Rhs for TswModel {
    fn eval(&self, state: &[Var]) -> Result<Vec<Var>> {
        let s = TswState::from_vars(state.to_vec())?;
        Ok(tsw_deterministic_rhs(&s, &self.params)?.to_vars())
    }

    /// `max|u| + √max(hΘ)`: advection plus gravity-wave speed.
    fn max_speed(&self, state: &[Var]) -> f64 {
        match state {
            [Var::Scalar(h), Var::Scalar(theta), Var::Vector(u)] => {
                let c2 = (h * theta).max().max(0.0);
                u.max_magnitude() + c2.sqrt()
            }
            _ => 0.0,
        }
    }
}

/// Whether the deterministic tendency is applied before the perturbation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TswDynamics {
    #[default]
    Full,
    /// Tendency frozen to zero: the step is the perturbation alone.
    PerturbationOnly,
}

/// One step with prescribed increments; aborts if `h` or `Θ` loses positivity.
pub fn tsw_step_with_increments(
    state: &TswState,
    params: &TswParams,
    basis: &Arc<NoiseBasis>,
    increments: BrownianIncrements,
    opts: &ForecastOptions,
    dynamics: TswDynamics,
) -> Result<TswState> {
    let vars = state.to_vars();
    let assignment = TensorAssignment::tsw();
    let out = match dynamics {
        TswDynamics::Full => {
            let model = TswModel { params: *params };
            forecast_with_increments(&vars, &model, &assignment, basis, increments, opts)?
        }
        TswDynamics::PerturbationOnly => forecast_with_increments(&vars, &NoRhs, &assignment, basis, increments, opts)?,
    };
    let next = TswState::from_vars(out)?;
    next.check_positive()?;
    Ok(next)
}

/// Deterministic Euler step then the shared tensor-class perturbation.
pub fn tsw_spde_step(
    state: &TswState,
    params: &TswParams,
    basis: &Arc<NoiseBasis>,
    dt: f64,
    rng: &mut NoiseStream,
    opts: &ForecastOptions,
) -> Result<TswState> {
    let inc = sample_increments(basis.len(), dt, rng)?;
    tsw_step_with_increments(state, params, basis, inc, opts, TswDynamics::Full)
}
