//! Step-size refinement studies.
//!
//! Weak metrics take the expectation over the Brownian increments with a
//! tensor Gauss–Hermite rule, so every step size sees the same standardized
//! noise nodes. Pathwise metrics sample one fine path and sum it into the
//! coarser increments.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use locpert_core::calculus::{curl_2d, integrate};
use locpert_core::conservation::{helicity, pairing_integral, tsw_invariants, vorticity_commutation};
use locpert_core::diffeo::{composition_residual_field, Convention, DiffeoIncrement};
use locpert_core::field::{Grid, ScalarField, TensorClass, VectorField};
use locpert_core::models::{perturb_state, TensorAssignment, TswState};
use locpert_core::noise::{
    build_fourier_basis, BrownianIncrements, BrownianPath, Drift, ModeSpec, NoiseBasis, NoiseStream, Phase,
    Polarization,
};
use locpert_core::oracle::{oracle_remap, FieldSet};
use locpert_core::perturb::{
    perturb_0form, perturb_1form, perturb_mixed_pair, perturb_nform, pushforward_nvector, NFormMode,
};
use locpert_core::{Error, Result};

use crate::quadrature::GaussHermite;

/// A quantity measured at one step size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    /// RMS of `E[closed-form increment − (oracle − input)]`, per class.
    Oracle0Form,
    Oracle1Form,
    OracleNForm,
    OracleNVector,
    /// RMS of `E[T(T⁻¹x) − x]`.
    Composition,
    /// Relative `|E[Δ∫fg]|`, `f` n-form, `g` 0-form.
    DriftFg,
    /// Relative `|E[Δ∫f²g]|`, `f` n-form, `g` n-vector.
    DriftF2g,
    /// Relative `|E[Δ helicity]|` of a 3D 1-form.
    DriftHelicity,
    /// Relative `|E[ΔE]|` of a thermal shallow-water state.
    DriftTswEnergy,
    /// Relative `|E[Δ∫hu]|`.
    DriftTswMomentum,
    /// RMS of `E[curl(Δ₁u) − Δₙ(curl u)]`.
    VorticityWeak,
    /// Pathwise vorticity commutation defect on one matched path.
    VorticityPathwise,
    /// Pathwise 0-form oracle mismatch on one matched path.
    Oracle0FormPathwise,
    /// Pathwise composition residual on one matched path.
    CompositionPathwise,
}

impl Metric {
    /// The metrics whose slope is held to the refinement threshold.
    pub const ORDER_SUITE: [Metric; 10] = [
        Metric::Oracle0Form,
        Metric::Oracle1Form,
        Metric::OracleNForm,
        Metric::OracleNVector,
        Metric::Composition,
        Metric::DriftFg,
        Metric::DriftF2g,
        Metric::DriftHelicity,
        Metric::DriftTswEnergy,
        Metric::DriftTswMomentum,
    ];

    /// Reported alongside the suite for reference only.
    pub const PATHWISE: [Metric; 3] = [
        Metric::Oracle0FormPathwise,
        Metric::CompositionPathwise,
        Metric::VorticityPathwise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Oracle0Form => "oracle_0form",
            Metric::Oracle1Form => "oracle_1form",
            Metric::OracleNForm => "oracle_nform",
            Metric::OracleNVector => "oracle_nvector",
            Metric::Composition => "composition_residual",
            Metric::DriftFg => "drift_fg",
            Metric::DriftF2g => "drift_f2g",
            Metric::DriftHelicity => "drift_helicity",
            Metric::DriftTswEnergy => "drift_tsw_energy",
            Metric::DriftTswMomentum => "drift_tsw_momentum",
            Metric::VorticityWeak => "vorticity_commutation_weak",
            Metric::VorticityPathwise => "vorticity_commutation",
            Metric::Oracle0FormPathwise => "oracle_0form_pathwise",
            Metric::CompositionPathwise => "composition_residual_pathwise",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ORDER_SUITE
            .iter()
            .chain(&Self::PATHWISE)
            .chain(&[Metric::VorticityWeak])
            .copied()
            .find(|m| m.name() == name)
    }

    fn is_pathwise(self) -> bool {
        Self::PATHWISE.contains(&self)
    }
}

/// Resolution and noise strength of the study problems.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StudySettings {
    /// Points per axis of the planar problems.
    pub points: usize,
    /// Points per axis of the helicity problem.
    pub points_3d: usize,
    /// Amplitude of the noise modes.
    pub amplitude: f64,
    /// Gauss–Hermite nodes per mode.
    pub nodes: usize,
    /// Seed of the matched path used by pathwise metrics.
    pub seed: u64,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            points: 256,
            points_3d: 64,
            amplitude: 1.0,
            nodes: 10,
            seed: 7,
        }
    }
}

fn planar_basis(grid: &Grid, amp: f64) -> Result<Arc<NoiseBasis>> {
    let specs = [ModeSpec::new(&[1.0, 1.0], &[amp, -0.6 * amp], Polarization::Free)];
    let drift = VectorField::from_fn(grid, |x, o| {
        o[0] = 0.3 * amp * x[1].sin();
        o[1] = 0.2 * amp * x[0].cos();
    });
    Ok(Arc::new(
        build_fourier_basis(grid, &specs)?.with_drift(Drift::Field(drift))?,
    ))
}

fn spatial_basis(grid: &Grid, amp: f64) -> Result<Arc<NoiseBasis>> {
    let specs =
        [ModeSpec::new(&[1.0, 0.0, 1.0], &[0.5 * amp, amp, -0.4 * amp], Polarization::Free).with_phase(Phase::Cos)];
    Ok(Arc::new(build_fourier_basis(grid, &specs)?))
}

fn scalar_f(grid: &Grid) -> ScalarField {
    ScalarField::from_fn(grid, |x| 1.5 + 0.5 * x[0].sin() * x[1].cos() + 0.3 * (2.0 * x[1]).cos())
}

fn scalar_g(grid: &Grid) -> ScalarField {
    ScalarField::from_fn(grid, |x| 2.0 + 0.4 * (x[0] + x[1]).cos() - 0.2 * (2.0 * x[0]).sin())
}

fn planar_velocity(grid: &Grid) -> VectorField {
    VectorField::from_fn(grid, |x, o| {
        o[0] = 0.4 + 0.5 * x[1].sin() + 0.2 * (x[0] + x[1]).cos();
        o[1] = -0.3 + 0.6 * x[0].cos() - 0.1 * (2.0 * x[1]).sin();
    })
}

fn abc_velocity(grid: &Grid) -> VectorField {
    let (a, b, c) = (1.0, 0.7, 0.4);
    VectorField::from_fn(grid, |x, o| {
        o[0] = a * x[2].sin() + c * x[1].cos();
        o[1] = b * x[0].sin() + a * x[2].cos();
        o[2] = c * x[1].sin() + b * x[0].cos();
    })
}

fn tsw_state(grid: &Grid) -> Result<TswState> {
    TswState::new(scalar_f(grid), scalar_g(grid), planar_velocity(grid))
}

fn increment(basis: &Arc<NoiseBasis>, dt: f64, eta: Vec<f64>) -> Result<DiffeoIncrement> {
    DiffeoIncrement::with_safety(
        basis.clone(),
        BrownianIncrements::fixed(dt, eta)?,
        Convention::Raw,
        f64::INFINITY,
    )
}

/// `Σ_k w_k F(η_k)` with `η_k = √dt · z_k` over the tensor rule.
fn expectation<F>(rule: &GaussHermite, m: usize, dt: f64, f: F) -> Result<Vec<f64>>
where
    F: Fn(Vec<f64>) -> Result<Vec<f64>> + Sync,
{
    let sd = dt.sqrt();
    let parts: Vec<(f64, Vec<f64>)> = rule
        .product(m)
        .into_par_iter()
        .map(|(z, w)| Ok((w, f(z.iter().map(|v| sd * v).collect())?)))
        .collect::<Result<_>>()?;
    let len = parts.first().map_or(0, |p| p.1.len());
    let mut acc = vec![0.0; len];
    for (w, v) in parts {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += w * x;
        }
    }
    Ok(acc)
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt()
}

fn flatten(fields: &FieldSet) -> Vec<f64> {
    match fields {
        FieldSet::Scalar(f) => f.values().to_vec(),
        FieldSet::Vector(v) => v.components().iter().flat_map(|c| c.values().to_vec()).collect(),
        FieldSet::Pair(f, g) => f.values().iter().chain(g.values()).copied().collect(),
        FieldSet::Empty => Vec::new(),
    }
}

fn minus(a: Vec<f64>, b: &[f64]) -> Vec<f64> {
    a.into_iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Closed-form increment (drift part only, or realized) for an oracle class.
fn closed_form(class: TensorClass, fields: &FieldSet, d: &DiffeoIncrement, realized: bool) -> Result<Vec<f64>> {
    let pick_s = |r: locpert_core::PerturbationResult<ScalarField>| {
        if realized {
            r.realized
        } else {
            r.drift_part.scaled(d.dt())
        }
    };
    Ok(match (class, fields) {
        (TensorClass::ZeroForm, FieldSet::Scalar(f)) => pick_s(perturb_0form(f, d)?).into_values(),
        (TensorClass::NForm, FieldSet::Scalar(f)) => pick_s(perturb_nform(f, d, NFormMode::Pointwise)?).into_values(),
        (TensorClass::NVector, FieldSet::Scalar(g)) => pick_s(pushforward_nvector(g, d)?).into_values(),
        (TensorClass::OneForm, FieldSet::Vector(v)) => {
            let r = perturb_1form(v, d)?;
            let out = if realized {
                r.realized
            } else {
                r.drift_part.scaled(d.dt())
            };
            flatten(&FieldSet::Vector(out))
        }
        _ => return Err(Error::Format(format!("no closed form for {class:?}"))),
    })
}

fn oracle_weak(class: TensorClass, settings: &StudySettings, dt: f64) -> Result<f64> {
    let grid = Grid::periodic_box(2, settings.points)?;
    let basis = planar_basis(&grid, settings.amplitude)?;
    let fields = match class {
        TensorClass::OneForm => FieldSet::Vector(planar_velocity(&grid)),
        _ => FieldSet::Scalar(scalar_f(&grid)),
    };
    let input = flatten(&fields);
    let rule = GaussHermite::new(settings.nodes);
    let mean_oracle = expectation(&rule, basis.len(), dt, |eta| {
        let d = increment(&basis, dt, eta)?;
        Ok(minus(flatten(&oracle_remap(class, &fields, &d)?), &input))
    })?;
    // the closed form is affine in Δη, so its mean is the drift term
    let d0 = increment(&basis, dt, vec![0.0; basis.len()])?;
    let closed = closed_form(class, &fields, &d0, false)?;
    Ok(rms(&minus(closed, &mean_oracle)))
}

fn composition_weak(settings: &StudySettings, dt: f64) -> Result<f64> {
    let grid = Grid::periodic_box(2, settings.points)?;
    let basis = planar_basis(&grid, settings.amplitude)?;
    let rule = GaussHermite::new(settings.nodes);
    let mean = expectation(&rule, basis.len(), dt, |eta| {
        let d = increment(&basis, dt, eta)?;
        Ok(flatten(&FieldSet::Vector(composition_residual_field(&d))))
    })?;
    Ok(rms(&mean))
}

/// `|E[I(θ + Δθ)] − I(θ)| / |I(θ)|` for a functional `I` of the perturbed state.
fn drift_weak<F>(basis: &Arc<NoiseBasis>, settings: &StudySettings, dt: f64, value: F) -> Result<f64>
where
    F: Fn(Option<&DiffeoIncrement>) -> Result<Vec<f64>> + Sync,
{
    let before = value(None)?;
    // the perturbed functionals are cubic in Δη at most
    let rule = GaussHermite::new(settings.nodes.clamp(2, 3));
    let after = expectation(&rule, basis.len(), dt, |eta| {
        let d = increment(basis, dt, eta)?;
        value(Some(&d))
    })?;
    let num: f64 = after
        .iter()
        .zip(&before)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = before.iter().map(|b| b * b).sum::<f64>().sqrt();
    Ok(num / den)
}

fn drift_fg(settings: &StudySettings, dt: f64) -> Result<f64> {
    let grid = Grid::periodic_box(2, settings.points)?;
    let basis = planar_basis(&grid, settings.amplitude)?;
    let (f, g) = (scalar_f(&grid), scalar_g(&grid));
    drift_weak(&basis, settings, dt, |d| {
        let (mut f1, mut g1) = (f.clone(), g.clone());
        if let Some(d) = d {
            f1.axpy(1.0, &perturb_nform(&f, d, NFormMode::Flux)?.realized);
            g1.axpy(1.0, &perturb_0form(&g, d)?.realized);
        }
        Ok(vec![integrate(&(&f1 * &g1))])
    })
}

fn drift_f2g(settings: &StudySettings, dt: f64) -> Result<f64> {
    let grid = Grid::periodic_box(2, settings.points)?;
    let basis = planar_basis(&grid, settings.amplitude)?;
    let (f, g) = (scalar_f(&grid), scalar_g(&grid));
    drift_weak(&basis, settings, dt, |d| {
        let (mut f1, mut g1) = (f.clone(), g.clone());
        if let Some(d) = d {
            let (rf, rg) = perturb_mixed_pair(&f, &g, d, NFormMode::Flux)?;
            f1.axpy(1.0, &rf.realized);
            g1.axpy(1.0, &rg.realized);
        }
        Ok(vec![pairing_integral(&f1, &g1)?])
    })
}

fn drift_helicity(settings: &StudySettings, dt: f64) -> Result<f64> {
    let grid = Grid::periodic_box(3, settings.points_3d)?;
    let basis = spatial_basis(&grid, settings.amplitude)?;
    let u = abc_velocity(&grid);
    drift_weak(&basis, settings, dt, |d| {
        let mut u1 = u.clone();
        if let Some(d) = d {
            u1.axpy(1.0, &perturb_1form(&u, d)?.realized);
        }
        Ok(vec![helicity(&u1)?])
    })
}

fn drift_tsw(settings: &StudySettings, dt: f64, energy: bool) -> Result<f64> {
    let grid = Grid::periodic_box(2, settings.points)?;
    let basis = planar_basis(&grid, settings.amplitude)?;
    let state = tsw_state(&grid)?;
    let assignment = TensorAssignment::tsw();
    drift_weak(&basis, settings, dt, |d| {
        let s = match d {
            Some(d) => TswState::from_vars(perturb_state(&state.to_vars(), &assignment, d, NFormMode::Flux)?)?,
            None => state.clone(),
        };
        let inv = tsw_invariants(&s);
        Ok(if energy {
            vec![inv.energy]
        } else {
            inv.momentum.to_vec()
        })
    })
}

fn vorticity_defect_field(u: &VectorField, d: &DiffeoIncrement) -> Result<Vec<f64>> {
    let lhs = curl_2d(&perturb_1form(u, d)?.realized)?;
    let rhs = perturb_nform(&curl_2d(u)?, d, NFormMode::Pointwise)?.realized;
    Ok((&lhs - &rhs).into_values())
}

fn vorticity_weak(settings: &StudySettings, dt: f64) -> Result<f64> {
    let grid = Grid::periodic_box(2, settings.points)?;
    let basis = planar_basis(&grid, settings.amplitude)?;
    let u = planar_velocity(&grid);
    let rule = GaussHermite::new(2);
    let mean = expectation(&rule, basis.len(), dt, |eta| {
        vorticity_defect_field(&u, &increment(&basis, dt, eta)?)
    })?;
    Ok(rms(&mean))
}

/// Increments at each step size, all summed from one path at the finest step.
pub fn matched_increments(m: usize, dts: &[f64], seed: u64) -> Result<Vec<Vec<f64>>> {
    let factors = refinement_factors(dts)?;
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let longest = *factors.iter().max().expect("at least one step size");
    let mut rng = NoiseStream::new(seed, 0);
    let path = BrownianPath::sample(m, finest, longest, &mut rng)?;
    Ok(factors.iter().map(|&k| path.coarsen(k).increments(0).eta).collect())
}

/// `dt / min dt` for every step size; each must be an integer multiple.
pub fn refinement_factors(dts: &[f64]) -> Result<Vec<usize>> {
    if dts.iter().any(|&dt| !(dt > 0.0)) {
        return Err(Error::Format("step sizes must be positive".into()));
    }
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    dts.iter()
        .map(|&dt| {
            let r = dt / finest;
            let k = r.round();
            if (r - k).abs() > 1e-9 * r {
                Err(Error::Format(format!(
                    "step size {dt} is not an integer multiple of the finest step {finest}"
                )))
            } else {
                Ok(k as usize)
            }
        })
        .collect()
}

fn pathwise(metric: Metric, settings: &StudySettings, dt: f64, eta: Vec<f64>) -> Result<f64> {
    let grid = Grid::periodic_box(2, settings.points)?;
    let basis = planar_basis(&grid, settings.amplitude)?;
    let d = increment(&basis, dt, eta)?;
    match metric {
        Metric::Oracle0FormPathwise => {
            let f = FieldSet::Scalar(scalar_f(&grid));
            let oracle = minus(flatten(&oracle_remap(TensorClass::ZeroForm, &f, &d)?), &flatten(&f));
            Ok(rms(&minus(closed_form(TensorClass::ZeroForm, &f, &d, true)?, &oracle)))
        }
        Metric::CompositionPathwise => Ok(rms(&flatten(&FieldSet::Vector(composition_residual_field(&d))))),
        Metric::VorticityPathwise => vorticity_commutation(&planar_velocity(&grid), &d),
        _ => unreachable!("not a pathwise metric"),
    }
}

/// Value of a weak metric at one step size.
pub fn evaluate(metric: Metric, settings: &StudySettings, dt: f64) -> Result<f64> {
    match metric {
        Metric::Oracle0Form => oracle_weak(TensorClass::ZeroForm, settings, dt),
        Metric::Oracle1Form => oracle_weak(TensorClass::OneForm, settings, dt),
        Metric::OracleNForm => oracle_weak(TensorClass::NForm, settings, dt),
        Metric::OracleNVector => oracle_weak(TensorClass::NVector, settings, dt),
        Metric::Composition => composition_weak(settings, dt),
        Metric::DriftFg => drift_fg(settings, dt),
        Metric::DriftF2g => drift_f2g(settings, dt),
        Metric::DriftHelicity => drift_helicity(settings, dt),
        Metric::DriftTswEnergy => drift_tsw(settings, dt, true),
        Metric::DriftTswMomentum => drift_tsw(settings, dt, false),
        Metric::VorticityWeak => vorticity_weak(settings, dt),
        _ => {
            let eta = matched_increments(1, &[dt], settings.seed)?.remove(0);
            pathwise(metric, settings, dt, eta)
        }
    }
}

/// Least-squares slope of `log value` against `log dt`.
pub fn fit_slope(dts: &[f64], values: &[f64]) -> f64 {
    let n = dts.len() as f64;
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// One line of the refinement table; `slope` is the fit over all step sizes
/// of the metric.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub dt: f64,
    pub metric: Metric,
    pub value: f64,
    pub slope: f64,
}

/// Evaluates every metric at every step size. Needs at least three step
/// sizes, each an integer multiple of the finest.
pub fn convergence_study(metrics: &[Metric], dts: &[f64], settings: &StudySettings) -> Result<Vec<StudyRow>> {
    if dts.len() < 3 {
        return Err(Error::Format(format!(
            "a refinement study needs at least 3 step sizes, got {}",
            dts.len()
        )));
    }
    refinement_factors(dts)?;
    let mut jobs = Vec::new();
    for &metric in metrics {
        let etas = if metric.is_pathwise() {
            Some(matched_increments(1, dts, settings.seed)?)
        } else {
            None
        };
        for (k, &dt) in dts.iter().enumerate() {
            jobs.push((metric, dt, etas.as_ref().map(|e| e[k].clone())));
        }
    }
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|(metric, dt, eta)| match eta {
            Some(eta) => pathwise(*metric, settings, *dt, eta.clone()),
            None => evaluate(*metric, settings, *dt),
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(jobs.len());
    for (chunk_jobs, chunk_vals) in jobs.chunks(dts.len()).zip(values.chunks(dts.len())) {
        let slope = fit_slope(dts, chunk_vals);
        for ((metric, dt, _), &value) in chunk_jobs.iter().zip(chunk_vals) {
            rows.push(StudyRow {
                dt: *dt,
                metric: *metric,
                value,
                slope,
            });
        }
    }
    Ok(rows)
}

/// `dt,metric,value,slope` CSV.
pub fn table_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from("dt,metric,value,slope\n");
    for r in rows {
        writeln!(out, "{:e},{},{:e},{:.4}", r.dt, r.metric.name(), r.value, r.slope).expect("writing to a String");
    }
    out
}

/// Slope of each metric in a table, in first-appearance order.
pub fn slopes(rows: &[StudyRow]) -> Vec<(Metric, f64)> {
    let mut out: Vec<(Metric, f64)> = Vec::new();
    for r in rows {
        if !out.iter().any(|(m, _)| *m == r.metric) {
            out.push((r.metric, r.slope));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_power_law() {
        let dts = [1e-2, 5e-3, 2.5e-3];
        let v: Vec<f64> = dts.iter().map(|d: &f64| 3.0 * d.powf(1.5)).collect();
        assert!((fit_slope(&dts, &v) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn factors_must_be_integers() {
        assert_eq!(refinement_factors(&[1e-2, 5e-3, 2.5e-3]).unwrap(), vec![4, 2, 1]);
        assert!(refinement_factors(&[1e-2, 3e-3, 1e-3]).is_ok());
        assert!(refinement_factors(&[1e-2, 4e-3, 3e-3]).is_err());
        assert!(refinement_factors(&[1e-2, 0.0]).is_err());
    }

    #[test]
    fn matched_increments_are_sums_of_the_fine_path() {
        let dts = [4e-3, 2e-3, 1e-3];
        let e = matched_increments(2, &dts, 3).unwrap();
        let mut rng = NoiseStream::new(3, 0);
        let path = BrownianPath::sample(2, 1e-3, 4, &mut rng).unwrap();
        for i in 0..2 {
            let fine: Vec<f64> = (0..4).map(|s| path.increments(s).eta[i]).collect();
            assert_eq!(e[2][i], fine[0]);
            assert_eq!(e[1][i], fine[0] + fine[1]);
            assert_eq!(e[0][i], (fine[0] + fine[1]) + (fine[2] + fine[3]));
        }
    }

    #[test]
    fn study_rejects_two_step_sizes() {
        let r = convergence_study(&[Metric::Composition], &[1e-2, 5e-3], &StudySettings::default());
        assert!(r.is_err());
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ORDER_SUITE.iter().chain(&Metric::PATHWISE) {
            assert_eq!(Metric::from_name(m.name()), Some(*m));
        }
        assert_eq!(Metric::from_name("nope"), None);
    }
}
