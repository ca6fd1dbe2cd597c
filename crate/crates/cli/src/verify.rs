//! Pass/fail checks run against a configuration.

use std::fmt;
use std::sync::Arc;

use locpert_core::calculus::integrate;
use locpert_core::diffeo::{Convention, DiffeoIncrement};
use locpert_core::field::{Grid, ScalarField, TensorClass, VectorField};
use locpert_core::models::{
    deterministic_step, lu_correspondence_check, lu_nform_check, tsw_step_with_increments, two_step_forecast,
    AdvectionDiffusion, Rhs, TensorAssignment, TswDynamics, TswModel, Var,
};
use locpert_core::noise::{sample_increments, Drift, NoiseBasis, NoiseStream};
use locpert_core::perturb::{perturb_volume_multiplier, NFormMode};

use crate::config::{ModelKind, RunConfig};
use crate::error::CliError;
use crate::simulate::run_in_memory;
use crate::study::{convergence_study, evaluate, fit_slope, Metric, StudySettings};
use crate::weak::{weak_advection_study, WeakSettings};

pub const MASS_TOL: f64 = 1e-12;
pub const LU_TOL: f64 = 1e-10;
pub const SLOPE_MIN: f64 = 1.4;
/// Metrics at or below this level are conserved to round-off and carry no slope.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;
pub const H_SLOPE_MIN: f64 = 1.8;
pub const WEAK_ERROR_MAX: f64 = 0.02;
pub const WEAK_ORDER_BAND: f64 = 0.25;
pub const ORDER_DTS: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
pub const MASS_STEPS: usize = 20;
pub const DEGENERACY_STEPS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: String,
    pub pass: bool,
}

impl fmt::Display for Check {
    /// `name,measured,threshold,PASS|FAIL`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{:e},{},{}",
            self.name,
            self.measured,
            self.threshold,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

fn below(name: &str, measured: f64, tol: f64) -> Check {
    Check {
        name: name.into(),
        measured,
        threshold: format!("<{tol:e}"),
        pass: measured < tol,
    }
}

fn test_field(grid: &Grid) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        1.0 + 0.5 * x[0].sin() * (2.0 * x[1]).cos() + 0.2 * (x[0] + x[1]).cos()
    })
}

/// Largest `|ΔMass|/Mass` over a perturbation-only thermal shallow-water run
/// with the configured noise and flux-form n-forms. Advection configs use the
/// `[tsw]` defaults on their grid.
pub fn flux_mass_conservation(cfg: &RunConfig) -> Result<f64, CliError> {
    let basis = cfg.basis()?;
    let mut opts = cfg.forecast_options();
    opts.nform_mode = NFormMode::Flux;
    let params = cfg.tsw_params()?;
    let mut state = cfg.tsw_initial()?;
    let mass0 = integrate(&state.h);
    let mut rng = NoiseStream::new(cfg.run.seed, 0);
    let mut worst: f64 = 0.0;
    for step in 1..=MASS_STEPS {
        let inc = sample_increments(basis.len(), cfg.run.dt, &mut rng)?;
        state = tsw_step_with_increments(&state, &params, &basis, inc, &opts, TswDynamics::PerturbationOnly).map_err(
            |e| CliError::Abort {
                member: 0,
                step,
                source: e.at_step(step),
            },
        )?;
        worst = worst.max((integrate(&state.h) - mass0).abs() / mass0);
    }
    Ok(worst)
}

/// Shear modes `(0, A sin x)` and `(A cos y, 0)`: divergence-free with
/// `D_pD_q Σe^pe^q = 0`, under the LU drift.
fn shear_basis(grid: &Grid, amp: f64) -> Result<Arc<NoiseBasis>, CliError> {
    let dim = grid.dim();
    let mode = |axis: usize, f: fn(f64) -> f64, along: usize| {
        VectorField::from_fn(grid, move |x, o| {
            o.iter_mut().for_each(|v| *v = 0.0);
            o[axis] = amp * f(x[along]);
        })
    };
    if dim < 2 {
        return Err(CliError::Config(
            "the incompressibility check needs at least 2 dimensions".into(),
        ));
    }
    let basis = NoiseBasis::new(grid, vec![mode(1, f64::sin, 0), mode(0, f64::cos, 1)])?.with_drift(Drift::Lu)?;
    Ok(Arc::new(basis))
}

/// `‖realized volume multiplier‖_∞` for the shear basis.
pub fn lu_incompressibility(cfg: &RunConfig) -> Result<f64, CliError> {
    let grid = cfg.grid()?;
    let basis = shear_basis(&grid, 0.3)?;
    let mut rng = NoiseStream::new(cfg.run.seed, 0);
    let inc = sample_increments(basis.len(), cfg.run.dt, &mut rng)?;
    let d = DiffeoIncrement::with_safety(basis, inc, Convention::Lu, f64::INFINITY)?;
    Ok(perturb_volume_multiplier(&d).realized.max_abs())
}

/// Tendency, initial state and tensor classes of the configured model.
type ModelSetup = (Box<dyn Rhs>, Vec<Var>, TensorAssignment);

fn model_state(cfg: &RunConfig) -> Result<ModelSetup, CliError> {
    Ok(match cfg.run.model {
        ModelKind::Advection => (
            Box::new(AdvectionDiffusion::new(
                cfg.advection_velocity()?,
                cfg.advection.diffusivity,
            )?),
            vec![Var::Scalar(cfg.advection_initial()?)],
            TensorAssignment::new(vec![TensorClass::ZeroForm])?,
        ),
        ModelKind::Tsw | ModelKind::PerturbationOnly => (
            Box::new(TswModel {
                params: cfg.tsw_params()?,
            }),
            cfg.tsw_initial()?.to_vars(),
            TensorAssignment::tsw(),
        ),
    })
}

/// Number of steps, out of the run, at which the stochastic solver with an
/// empty basis differs in any bit from plain Euler.
pub fn degeneracy(cfg: &RunConfig) -> Result<usize, CliError> {
    let (rhs, state, assignment) = model_state(cfg)?;
    let empty = Arc::new(NoiseBasis::empty(&cfg.grid()?));
    let opts = cfg.forecast_options();
    let mut rng = NoiseStream::new(cfg.run.seed, 0);
    let (mut a, mut b) = (state.clone(), state);
    let mut differing = 0;
    for _ in 0..DEGENERACY_STEPS {
        a = two_step_forecast(&a, rhs.as_ref(), &assignment, &empty, cfg.run.dt, &mut rng, &opts)?;
        b = deterministic_step(&b, rhs.as_ref(), cfg.run.dt)?;
        if a != b {
            differing += 1;
        }
    }
    Ok(differing)
}

/// Slope in `h` of the weak vorticity commutation defect at fixed `dt`.
pub fn vorticity_h_slope(points: &[usize], dt: f64) -> Result<(Vec<f64>, f64), CliError> {
    let values = points
        .iter()
        .map(|&n| {
            let s = StudySettings {
                points: n,
                ..StudySettings::default()
            };
            evaluate(Metric::VorticityWeak, &s, dt)
        })
        .collect::<locpert_core::Result<Vec<f64>>>()?;
    let hs: Vec<f64> = points.iter().map(|&n| std::f64::consts::TAU / n as f64).collect();
    let slope = fit_slope(&hs, &values);
    Ok((values, slope))
}

/// Number of output files whose bytes differ between two identical runs.
pub fn reproducibility(cfg: &RunConfig) -> Result<usize, CliError> {
    let a = run_in_memory(cfg)?;
    let b = run_in_memory(cfg)?;
    let mut differing = a.files.iter().filter(|(k, v)| b.files.get(*k) != Some(*v)).count();
    differing += b.files.keys().filter(|k| !a.files.contains_key(*k)).count();
    Ok(differing)
}

/// Every check, in report order.
pub fn verify_suite(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();

    checks.push(below("flux_mass_conservation", flux_mass_conservation(cfg)?, MASS_TOL));

    let grid = cfg.grid()?;
    let basis = cfg.basis()?;
    let f = test_field(&grid);
    let mut rng = NoiseStream::new(cfg.run.seed, 0);
    let corr = lu_correspondence_check(&basis, &f, cfg.run.dt, &mut rng)?;
    checks.push(below("lu_correspondence", corr, LU_TOL));
    let nform = lu_nform_check(&basis, &f, cfg.run.dt, &mut rng)?;
    checks.push(below("lu_nform", nform, LU_TOL));
    checks.push(below("lu_incompressibility", lu_incompressibility(cfg)?, LU_TOL));

    let differing = degeneracy(cfg)? as f64;
    checks.push(Check {
        name: "degeneracy".into(),
        measured: differing,
        threshold: "=0".into(),
        pass: differing == 0.0,
    });

    let rows = convergence_study(&Metric::ORDER_SUITE, &ORDER_DTS, &StudySettings::default())?;
    for m in Metric::ORDER_SUITE {
        let mine: Vec<_> = rows.iter().filter(|r| r.metric == m).collect();
        let slope = mine[0].slope;
        let largest = mine.iter().map(|r| r.value).fold(0.0, f64::max);
        // a metric conserved to round-off reports its size, not a slope
        let exact = largest <= ROUNDOFF_FLOOR;
        checks.push(Check {
            name: format!("slope_{}", m.name()),
            measured: if exact { largest } else { slope },
            threshold: format!(">={SLOPE_MIN}|max<={ROUNDOFF_FLOOR:e}"),
            pass: slope >= SLOPE_MIN || exact,
        });
    }

    let (_, h_slope) = vorticity_h_slope(&[64, 128, 256], ORDER_DTS[0])?;
    checks.push(Check {
        name: "vorticity_commutation_h_slope".into(),
        measured: h_slope,
        threshold: format!(">={H_SLOPE_MIN}"),
        pass: h_slope >= H_SLOPE_MIN,
    });

    let weak = weak_advection_study(&WeakSettings::default())?;
    let err = *weak.errors.last().expect("at least one step size");
    checks.push(below("weak_mean_error", err, WEAK_ERROR_MAX));
    checks.push(Check {
        name: "weak_order".into(),
        measured: weak.order,
        threshold: format!("1+-{WEAK_ORDER_BAND}"),
        pass: (weak.order - 1.0).abs() <= WEAK_ORDER_BAND,
    });

    let differing = reproducibility(cfg)? as f64;
    checks.push(Check {
        name: "reproducibility".into(),
        measured: differing,
        threshold: "=0".into(),
        pass: differing == 0.0,
    });
    Ok(checks)
}

/// One `name,measured,threshold,PASS|FAIL` line per check.
pub fn report(checks: &[Check]) -> String {
    checks.iter().map(|c| format!("{c}\n")).collect()
}
