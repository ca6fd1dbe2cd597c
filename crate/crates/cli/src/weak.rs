//! Ensemble mean of stochastic advection against the effective
//! advection–diffusion solution.
//!
//! With constant modes `e_i` the transport noise only adds the diffusion
//! matrix `½Σe_ie_iᵀ`, so for `f₀ = sin(k·x)` the mean is
//! `exp(−(D|k|² + ½Σ(e_i·k)²)t) sin(k·(x − ut))`.

use std::sync::Arc;

use rayon::prelude::*;

use locpert_core::field::{Grid, ScalarField, TensorClass, VectorField};
use locpert_core::models::{forecast_with_increments, AdvectionDiffusion, ForecastOptions, TensorAssignment, Var};
use locpert_core::noise::{BrownianPath, NoiseBasis, NoiseStream};
use locpert_core::{Convention, Error, Result};

use crate::study::refinement_factors;

/// Problem and ensemble of the weak-convergence check.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakSettings {
    pub points: usize,
    pub velocity: [f64; 2],
    pub diffusivity: f64,
    /// Amplitude `c` of the modes `(c, 0)` and `(0, c)`.
    pub noise: f64,
    pub wavevector: [f64; 2],
    pub t_final: f64,
    /// Step sizes, coarsest first, each a multiple of the finest.
    pub dts: Vec<f64>,
    /// Ensemble size; a multiple of `2^(number of step sizes)`.
    pub members: usize,
    pub seed: u64,
}

impl Default for WeakSettings {
    fn default() -> Self {
        Self {
            points: 64,
            velocity: [3.0, 3.0],
            diffusivity: 0.05,
            noise: 0.5,
            wavevector: [1.0, 1.0],
            t_final: 0.1,
            dts: vec![2e-2, 1e-2, 5e-3],
            members: 256,
            seed: 11,
        }
    }
}

/// Ensemble-mean errors per step size and the order read off successive
/// differences of the means.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakReport {
    pub dts: Vec<f64>,
    /// Ensemble mean at each step size.
    pub means: Vec<ScalarField>,
    /// Relative L² distance of the ensemble mean to the exact mean.
    pub errors: Vec<f64>,
    /// `‖m(dt_j) − m(dt_{j+1})‖`, relative to the exact mean.
    pub differences: Vec<f64>,
    /// Mean of `log₂` ratios of successive differences, per refinement factor.
    pub order: f64,
}

impl WeakSettings {
    fn grid(&self) -> Result<Grid> {
        Grid::periodic_box(2, self.points)
    }

    pub fn exact_mean(&self, grid: &Grid) -> ScalarField {
        let [k1, k2] = self.wavevector;
        let [u1, u2] = self.velocity;
        let rate = self.diffusivity * (k1 * k1 + k2 * k2) + 0.5 * self.noise * self.noise * (k1 * k1 + k2 * k2);
        let decay = (-rate * self.t_final).exp();
        ScalarField::from_fn(grid, |x| {
            decay * (k1 * (x[0] - u1 * self.t_final) + k2 * (x[1] - u2 * self.t_final)).sin()
        })
    }

    fn initial(&self, grid: &Grid) -> ScalarField {
        let [k1, k2] = self.wavevector;
        ScalarField::from_fn(grid, |x| (k1 * x[0] + k2 * x[1]).sin())
    }
}

fn relative_l2(a: &ScalarField, b: &ScalarField, reference: &ScalarField) -> f64 {
    (a - b).l2_norm() / reference.l2_norm()
}

/// Sign patterns over the fine steps. Pattern bit `j` flips every odd
/// sub-block of length `factors[j+1]` inside each block of `factors[j]`, which
/// cancels in the group mean the products of increments that one refinement
/// splits apart. Bit `L` negates the whole path. Flips preserve the law of
/// the path, so every member is still an exact Brownian sample.
fn sign_patterns(factors: &[usize], n_fine: usize) -> Vec<Vec<f64>> {
    let levels = factors.len() - 1;
    (0..1usize << (levels + 1))
        .map(|mask| {
            (0..n_fine)
                .map(|i| {
                    let mut s = if mask >> levels & 1 == 1 { -1.0 } else { 1.0 };
                    for j in 0..levels {
                        if mask >> j & 1 == 1 && (i % factors[j]) / factors[j + 1] % 2 == 1 {
                            s = -s;
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// Runs the ensemble at every step size on matched paths.
pub fn weak_advection_study(s: &WeakSettings) -> Result<WeakReport> {
    let grid = s.grid()?;
    let factors = refinement_factors(&s.dts)?;
    let finest = s.dts.iter().copied().fold(f64::INFINITY, f64::min);
    let n_fine = (s.t_final / finest).round() as usize;
    let modes = vec![
        VectorField::constant(&grid, &[s.noise, 0.0])?,
        VectorField::constant(&grid, &[0.0, s.noise])?,
    ];
    let basis = Arc::new(NoiseBasis::new(&grid, modes)?);
    let rhs = AdvectionDiffusion::new(VectorField::constant(&grid, &s.velocity)?, s.diffusivity)?;
    let assignment = TensorAssignment::new(vec![TensorClass::ZeroForm])?;
    let opts = ForecastOptions {
        convention: Convention::Raw,
        safety: f64::INFINITY,
        ..ForecastOptions::default()
    };
    let f0 = s.initial(&grid);

    let run = |path: &BrownianPath| -> Result<ScalarField> {
        let mut state = vec![Var::Scalar(f0.clone())];
        for step in 0..path.len() {
            state = forecast_with_increments(&state, &rhs, &assignment, &basis, path.increments(step), &opts)?;
        }
        match state.pop() {
            Some(Var::Scalar(f)) => Ok(f),
            _ => unreachable!("one scalar in, one scalar out"),
        }
    };

    let patterns = sign_patterns(&factors, n_fine);
    if s.members == 0 || !s.members.is_multiple_of(patterns.len()) {
        return Err(Error::Format(format!(
            "ensemble size {} is not a positive multiple of {}",
            s.members,
            patterns.len()
        )));
    }
    // members[g][j]: the group sum at step size j
    let members: Vec<Vec<ScalarField>> = (0..s.members / patterns.len())
        .into_par_iter()
        .map(|g| {
            let mut rng = NoiseStream::new(s.seed, g as u64);
            let fine = BrownianPath::sample(basis.len(), finest, n_fine, &mut rng)?;
            let signed: Vec<BrownianPath> = patterns
                .iter()
                .map(|p| {
                    let steps = (0..n_fine)
                        .map(|i| fine.increments(i).eta.iter().map(|v| p[i] * v).collect())
                        .collect();
                    BrownianPath::from_steps(finest, steps)
                })
                .collect::<Result<_>>()?;
            factors
                .iter()
                .map(|&k| {
                    let mut sum = ScalarField::zeros(&grid);
                    for path in &signed {
                        sum += &run(&path.coarsen(k))?;
                    }
                    Ok(sum)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let members_total = s.members as f64;
    let means: Vec<ScalarField> = (0..s.dts.len())
        .map(|j| {
            let mut acc = ScalarField::zeros(&grid);
            for m in &members {
                acc += &m[j];
            }
            acc.scaled(1.0 / members_total)
        })
        .collect();
    let exact = s.exact_mean(&grid);
    let errors = means.iter().map(|m| relative_l2(m, &exact, &exact)).collect();
    let differences: Vec<f64> = means.windows(2).map(|w| relative_l2(&w[0], &w[1], &exact)).collect();
    let order = differences
        .windows(2)
        .zip(s.dts.windows(3))
        .map(|(d, t)| (d[0] / d[1]).ln() / (t[1] / t[2]).ln())
        .sum::<f64>()
        / (differences.len().saturating_sub(1)).max(1) as f64;
    Ok(WeakReport {
        dts: s.dts.clone(),
        means,
        errors,
        differences,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_mean_is_the_deterministic_scheme() {
        let s = WeakSettings {
            noise: 0.0,
            members: 8,
            points: 32,
            ..WeakSettings::default()
        };
        let r = weak_advection_study(&s).unwrap();
        // Euler on the linear mode: error shrinks by half per halving
        assert!((r.order - 1.0).abs() < 0.05, "{r:?}");
        assert!(r.errors.windows(2).all(|e| e[1] < e[0]));
    }

    #[test]
    fn patterns_split_each_refinement() {
        let p = sign_patterns(&[4, 2, 1], 8);
        assert_eq!(p.len(), 8);
        assert_eq!(p[0], vec![1.0; 8]);
        assert_eq!(p[1], vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0]);
        assert_eq!(p[2], vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
        assert_eq!(p[4], vec![-1.0; 8]);
        // every product of two steps inside one coarse block averages to zero
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    let m: f64 = p.iter().map(|s| s[a] * s[b]).sum();
                    assert_eq!(m, 0.0, "{a} {b}");
                }
            }
        }
    }

    #[test]
    fn ensemble_size_must_fit_the_patterns() {
        let s = WeakSettings {
            members: 12,
            ..WeakSettings::default()
        };
        assert!(weak_advection_study(&s).is_err());
    }
}
