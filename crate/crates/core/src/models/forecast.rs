//! Deterministic Euler step followed by a tensor-aware random perturbation.

use std::sync::Arc;

use crate::calculus::{gradient, laplacian};
use crate::diffeo::{Convention, DiffeoIncrement, DEFAULT_SAFETY};
use crate::error::{Error, Result};
use crate::field::{ScalarField, TensorClass, VectorField};
use crate::noise::{sample_increments, BrownianIncrements, NoiseBasis, NoiseStream};
use crate::perturb::{perturb_0form, perturb_1form, perturb_nform, pushforward_nvector, NFormMode};

/// One state variable.
#[derive(Clone, Debug, PartialEq)]
pub enum Var {
    Scalar(ScalarField),
    Vector(VectorField),
}

impl Var {
    pub fn as_scalar(&self) -> Option<&ScalarField> {
        match self {
            Var::Scalar(f) => Some(f),
            Var::Vector(_) => None,
        }
    }

    pub fn as_vector(&self) -> Option<&VectorField> {
        match self {
            Var::Vector(v) => Some(v),
            Var::Scalar(_) => None,
        }
    }

    fn components_mut(&mut self) -> Vec<&mut ScalarField> {
        match self {
            Var::Scalar(f) => vec![f],
            Var::Vector(v) => v.components_mut().iter_mut().collect(),
        }
    }

    fn components(&self) -> Vec<&ScalarField> {
        match self {
            Var::Scalar(f) => vec![f],
            Var::Vector(v) => v.components().iter().collect(),
        }
    }
}

/// `target += inc`, leaving entries untouched where `inc` is exactly zero so
/// a vanishing perturbation is a bitwise no-op.
fn add_increment(target: &mut ScalarField, inc: &ScalarField) {
    for (t, &r) in target.values_mut().iter_mut().zip(inc.values()) {
        if r != 0.0 {
            *t += r;
        }
    }
}

/// How each state variable transforms under the random map.
///
/// `NVector` variables are paired with the n-form variables and are pushed
/// forward by the inverse map. Vector variables tagged `ZeroForm` are
/// perturbed componentwise.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorAssignment {
    classes: Vec<TensorClass>,
}

impl TensorAssignment {
    pub fn new(classes: Vec<TensorClass>) -> Result<Self> {
        if classes
            .iter()
            .any(|c| matches!(c, TensorClass::VolumeForm | TensorClass::MixedPair))
        {
            return Err(Error::Format(
                "state variables must be 0-forms, 1-forms, n-forms or n-vectors".into(),
            ));
        }
        Ok(Self { classes })
    }

    /// Thermal shallow water: `h` n-form, `Θ` n-vector, `u` componentwise 0-form.
    pub fn tsw() -> Self {
        Self {
            classes: vec![TensorClass::NForm, TensorClass::NVector, TensorClass::ZeroForm],
        }
    }

    pub fn classes(&self) -> &[TensorClass] {
        &self.classes
    }
}

/// A deterministic tendency `∂θ/∂t = g(θ)`.
pub trait Rhs {
    fn eval(&self, state: &[Var]) -> Result<Vec<Var>>;

    /// Largest diffusivity acting on the state.
    fn diffusivity(&self) -> f64 {
        0.0
    }

    /// Largest advecting speed in `state`.
    fn max_speed(&self, _state: &[Var]) -> f64 {
        0.0
    }
}

impl<F: Fn(&[Var]) -> Result<Vec<Var>>> Rhs for F {
    fn eval(&self, state: &[Var]) -> Result<Vec<Var>> {
        self(state)
    }
}

/// Tendency that is identically zero: the step is pure perturbation.
pub struct NoRhs;

impl Rhs for NoRhs {
    fn eval(&self, state: &[Var]) -> Result<Vec<Var>> {
        Ok(state
            .iter()
            .map(|v| match v {
                Var::Scalar(f) => Var::Scalar(ScalarField::zeros(f.grid())),
                Var::Vector(u) => Var::Vector(VectorField::zeros(u.grid())),
            })
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForecastOptions {
    pub convention: Convention,
    pub nform_mode: NFormMode,
    /// Multiplier on the half-spacing displacement bound.
    pub safety: f64,
    /// Multiplier on `min(h²/D, h/|v|)`.
    pub c_stab: f64,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self {
            convention: Convention::Raw,
            nform_mode: NFormMode::Flux,
            safety: DEFAULT_SAFETY,
            c_stab: 1.0,
        }
    }
}

/// `c_stab · min(h²/D_eff, h/|v|)` with `D_eff = D + ½ max Σᵢ|e_i|²` and
/// `|v| = max speed + max|a|`.
pub fn stability_limit(rhs: &dyn Rhs, state: &[Var], basis: &NoiseBasis, c_stab: f64) -> f64 {
    let grid = basis.grid();
    let h = grid.min_spacing();
    let mut noise_var = ScalarField::zeros(grid);
    for e in basis.modes() {
        noise_var.axpy(1.0, &e.dot(e));
    }
    let d_eff = rhs.diffusivity() + 0.5 * noise_var.max();
    let speed = rhs.max_speed(state) + basis.drift().max_magnitude();
    let mut limit = f64::INFINITY;
    if d_eff > 0.0 {
        limit = limit.min(h * h / d_eff);
    }
    if speed > 0.0 {
        limit = limit.min(h / speed);
    }
    c_stab * limit
}

/// `θ̃ = θ + g(θ)Δt`.
pub fn deterministic_step(state: &[Var], rhs: &dyn Rhs, dt: f64) -> Result<Vec<Var>> {
    let tendency = rhs.eval(state)?;
    if tendency.len() != state.len() {
        return Err(Error::Dimension {
            op: "deterministic_step",
            expected: "one tendency per state variable",
            got: tendency.len(),
        });
    }
    let mut out = state.to_vec();
    for (v, g) in out.iter_mut().zip(&tendency) {
        for (c, gc) in v.components_mut().into_iter().zip(g.components()) {
            c.axpy(dt, gc);
        }
    }
    Ok(out)
}

/// Adds the tensor-class increment of every variable under one shared map.
pub fn perturb_state(
    state: &[Var],
    assignment: &TensorAssignment,
    d: &DiffeoIncrement,
    mode: NFormMode,
) -> Result<Vec<Var>> {
    if assignment.classes.len() != state.len() {
        return Err(Error::Dimension {
            op: "perturb_state",
            expected: "one tensor class per state variable",
            got: assignment.classes.len(),
        });
    }
    let mut inverse = None;
    let mut out = state.to_vec();
    for (v, class) in out.iter_mut().zip(&assignment.classes) {
        match (v, class) {
            (Var::Scalar(f), TensorClass::ZeroForm) => {
                let r = perturb_0form(f, d)?;
                add_increment(f, &r.realized);
            }
            (Var::Scalar(f), TensorClass::NForm) => {
                let r = perturb_nform(f, d, mode)?;
                add_increment(f, &r.realized);
            }
            (Var::Scalar(f), TensorClass::NVector) => {
                if inverse.is_none() {
                    inverse = Some(d.inverse_increment()?);
                }
                let r = pushforward_nvector(f, inverse.as_ref().expect("set above"))?;
                add_increment(f, &r.realized);
            }
            (Var::Vector(u), TensorClass::ZeroForm) => {
                for p in 0..u.dim() {
                    let r = perturb_0form(u.component(p), d)?;
                    add_increment(u.component_mut(p), &r.realized);
                }
            }
            (Var::Vector(u), TensorClass::OneForm) => {
                let r = perturb_1form(u, d)?;
                for p in 0..u.dim() {
                    add_increment(u.component_mut(p), r.realized.component(p));
                }
            }
            _ => {
                return Err(Error::Format(format!(
                    "tensor class {class:?} does not fit its state variable"
                )))
            }
        }
    }
    Ok(out)
}

/// One step with prescribed Brownian increments.
pub fn forecast_with_increments(
    state: &[Var],
    rhs: &dyn Rhs,
    assignment: &TensorAssignment,
    basis: &Arc<NoiseBasis>,
    increments: BrownianIncrements,
    opts: &ForecastOptions,
) -> Result<Vec<Var>> {
    let dt = increments.dt;
    let limit = stability_limit(rhs, state, basis, opts.c_stab);
    if dt > limit {
        return Err(Error::Stability { dt, limit });
    }
    let tilde = deterministic_step(state, rhs, dt)?;
    let d = DiffeoIncrement::with_safety(basis.clone(), increments, opts.convention, opts.safety)?;
    perturb_state(&tilde, assignment, &d, opts.nform_mode)
}

/// Deterministic Euler update, then the perturbation by a freshly sampled map
/// applied to the updated fields.
pub fn two_step_forecast(
    state: &[Var],
    rhs: &dyn Rhs,
    assignment: &TensorAssignment,
    basis: &Arc<NoiseBasis>,
    dt: f64,
    rng: &mut NoiseStream,
    opts: &ForecastOptions,
) -> Result<Vec<Var>> {
    let increments = sample_increments(basis.len(), dt, rng)?;
    forecast_with_increments(state, rhs, assignment, basis, increments, opts)
}

/// `−u·∇f + D Σ_p D_pD_p f`.
pub fn advection_diffusion_rhs(f: &ScalarField, u_adv: &VectorField, d: f64) -> Result<ScalarField> {
    if !(d >= 0.0) {
        return Err(Error::NegativeDiffusivity(d));
    }
    if u_adv.grid() != f.grid() {
        return Err(Error::GridMismatch);
    }
    let mut out = u_adv.dot(&gradient(f)).scaled(-1.0);
    if d > 0.0 {
        out.axpy(d, &laplacian(f));
    }
    Ok(out)
}

/// Linear advection-diffusion of a single scalar.
#[derive(Clone, Debug)]
pub struct AdvectionDiffusion {
    pub velocity: VectorField,
    pub diffusivity: f64,
}

impl AdvectionDiffusion {
    pub fn new(velocity: VectorField, diffusivity: f64) -> Result<Self> {
        if !(diffusivity >= 0.0) {
            return Err(Error::NegativeDiffusivity(diffusivity));
        }
        Ok(Self { velocity, diffusivity })
    }
}

impl Rhs for AdvectionDiffusion {
    fn eval(&self, state: &[Var]) -> Result<Vec<Var>> {
        state
            .iter()
            .map(|v| match v {
                Var::Scalar(f) => Ok(Var::Scalar(advection_diffusion_rhs(
                    f,
                    &self.velocity,
                    self.diffusivity,
                )?)),
                Var::Vector(_) => Err(Error::Format("advection acts on scalar fields".into())),
            })
            .collect()
    }

    fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    fn max_speed(&self, _state: &[Var]) -> f64 {
        self.velocity.max_magnitude()
    }
}
