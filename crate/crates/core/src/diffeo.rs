//! One realized random map `T(x) = x + aΔt + Σᵢ e_iΔη_i` and its
//! first-order inverse.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calculus::sample_at;
use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};
use crate::noise::{ito_drift_correction, BrownianIncrements, Drift, NoiseBasis};

/// Which drift the increment claims to carry, and the sign of its noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    #[default]
    Raw,
    Lu,
    /// Noise enters as `−e_iΔη_i`.
    Salt,
}

impl Convention {
    pub fn noise_sign(self) -> f64 {
        match self {
            Convention::Salt => -1.0,
            Convention::Raw | Convention::Lu => 1.0,
        }
    }
}

/// Default bound: displacements stay below half the smallest grid spacing.
pub const DEFAULT_SAFETY: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct DiffeoIncrement {
    basis: Arc<NoiseBasis>,
    increments: BrownianIncrements,
    convention: Convention,
    safety: f64,
    displacement: VectorField,
    inverse_drift: VectorField,
    inverse_displacement: VectorField,
}

impl DiffeoIncrement {
    pub fn new(basis: Arc<NoiseBasis>, increments: BrownianIncrements, convention: Convention) -> Result<Self> {
        Self::with_safety(basis, increments, convention, DEFAULT_SAFETY)
    }

    /// Rejects the increment when `max|aΔt + Σ e_iΔη_i| ≥ ½ · min spacing · safety`.
    pub fn with_safety(
        basis: Arc<NoiseBasis>,
        increments: BrownianIncrements,
        convention: Convention,
        safety: f64,
    ) -> Result<Self> {
        if increments.eta.len() != basis.len() {
            return Err(Error::Dimension {
                op: "DiffeoIncrement",
                expected: "one increment per noise mode",
                got: increments.eta.len(),
            });
        }
        if !(increments.dt > 0.0) {
            return Err(Error::NonPositiveDt(increments.dt));
        }
        let dt = increments.dt;
        let sign = convention.noise_sign();
        let mut displacement = basis.drift().scaled(dt);
        let mut inverse_drift = ito_drift_correction(&basis, 1.0);
        inverse_drift.axpy(-1.0, basis.drift());
        let mut inverse_displacement = inverse_drift.scaled(dt);
        for (e, &eta) in basis.modes().iter().zip(&increments.eta) {
            displacement.axpy(sign * eta, e);
            inverse_displacement.axpy(-sign * eta, e);
        }
        let bound = 0.5 * basis.grid().min_spacing() * safety;
        let max = displacement.max_magnitude().max(inverse_displacement.max_magnitude());
        if !max.is_finite() || max >= bound {
            return Err(Error::StepSize { max, bound });
        }
        Ok(Self {
            basis,
            increments,
            convention,
            safety,
            displacement,
            inverse_drift,
            inverse_displacement,
        })
    }

    /// Zero drift, no noise.
    pub fn identity(grid: &Grid, dt: f64) -> Result<Self> {
        Self::new(
            Arc::new(NoiseBasis::empty(grid)),
            BrownianIncrements::zero(dt, 0)?,
            Convention::Raw,
        )
    }

    pub fn basis(&self) -> &NoiseBasis {
        &self.basis
    }

    pub fn basis_arc(&self) -> &Arc<NoiseBasis> {
        &self.basis
    }

    pub fn grid(&self) -> &Grid {
        self.basis.grid()
    }

    pub fn increments(&self) -> &BrownianIncrements {
        &self.increments
    }

    pub fn dt(&self) -> f64 {
        self.increments.dt
    }

    pub fn eta(&self) -> &[f64] {
        &self.increments.eta
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn noise_sign(&self) -> f64 {
        self.convention.noise_sign()
    }

    pub fn safety(&self) -> f64 {
        self.safety
    }

    /// `aΔt + Σᵢ e_iΔη_i` at the nodes.
    pub fn displacement(&self) -> &VectorField {
        &self.displacement
    }

    /// `z = −a + Σᵢ (e_i·∇)e_i`.
    pub fn inverse_drift(&self) -> &VectorField {
        &self.inverse_drift
    }

    /// `zΔt − Σᵢ e_iΔη_i` at the nodes.
    pub fn inverse_displacement(&self) -> &VectorField {
        &self.inverse_displacement
    }

    /// The inverse map as an increment of its own: drift `z`, modes `−e_i`,
    /// same `Δη_i`.
    pub fn inverse_increment(&self) -> Result<Self> {
        let sign = self.noise_sign();
        let modes = self.basis.modes().iter().map(|e| e.scaled(-sign)).collect();
        let basis = NoiseBasis::new(self.grid(), modes)?.with_drift(Drift::Field(self.inverse_drift.clone()))?;
        Self::with_safety(Arc::new(basis), self.increments.clone(), Convention::Raw, self.safety)
    }
}

fn apply_displacement(grid: &Grid, disp: &VectorField, points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let dim = grid.dim();
    let shifts: Vec<Vec<f64>> = (0..dim).map(|p| sample_at(disp.component(p), points)).collect();
    points
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let mut y = *x;
            for p in 0..dim {
                y[p] += shifts[p][k];
            }
            grid.wrap(y)
        })
        .collect()
}

/// `T(x)`, with the coefficient fields interpolated between nodes.
pub fn forward_map(d: &DiffeoIncrement, points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    apply_displacement(d.grid(), &d.displacement, points)
}

/// `T⁻¹(x) = x + zΔt − Σᵢ e_iΔη_i`.
pub fn inverse_map(d: &DiffeoIncrement, points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    apply_displacement(d.grid(), &d.inverse_displacement, points)
}

/// RMS over nodes of the periodic distance between `T(T⁻¹(x))` and `x`.
pub fn composition_residual(d: &DiffeoIncrement) -> f64 {
    let grid = d.grid();
    let nodes = grid.nodes();
    let back = forward_map(d, &inverse_map(d, &nodes));
    let sq: f64 = nodes
        .iter()
        .zip(&back)
        .map(|(x, y)| {
            let r = grid.periodic_delta(*y, *x);
            r.iter().map(|v| v * v).sum::<f64>()
        })
        .sum();
    (sq / nodes.len() as f64).sqrt()
}

/// Per-node periodic residual vector `T(T⁻¹(x)) − x`.
pub fn composition_residual_field(d: &DiffeoIncrement) -> VectorField {
    let grid = *d.grid();
    let nodes = grid.nodes();
    let back = forward_map(d, &inverse_map(d, &nodes));
    let deltas: Vec<[f64; 3]> = nodes
        .iter()
        .zip(&back)
        .map(|(x, y)| grid.periodic_delta(*y, *x))
        .collect();
    let comps = (0..grid.dim())
        .map(|p| ScalarField::from_raw(&grid, deltas.iter().map(|r| r[p]).collect()))
        .collect();
    VectorField::from_components(comps).expect("components share the grid")
}
