//! Noise bases `{e_i}` with their drift `a`, and seeded Brownian increments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calculus::{derivative, divergence};
use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};

/// Whether the amplitude of a Fourier mode is projected to be divergence-free.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    Solenoidal,
    Free,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    #[default]
    Sin,
    Cos,
}

/// One real Fourier mode `e(x) = A φ(k·x)`; a zero wavevector gives the
/// constant field `A` whatever the phase.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSpec {
    /// Physical wavevector; each component must be a multiple of `2π/extent`.
    pub wavevector: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub polarization: Polarization,
    pub phase: Phase,
}

impl ModeSpec {
    pub fn new(wavevector: &[f64], amplitude: &[f64], polarization: Polarization) -> Self {
        Self {
            wavevector: wavevector.to_vec(),
            amplitude: amplitude.to_vec(),
            polarization,
            phase: Phase::Sin,
        }
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }
}

/// Which drift to install in a basis.
#[derive(Clone, Debug, PartialEq)]
pub enum Drift {
    Zero,
    /// `Σᵢ (e_i·∇)e_i`
    Lu,
    /// `½ Σᵢ (e_i·∇)e_i`
    Salt,
    Field(VectorField),
}

/// Derivative data of the modes, shared by every perturbation operator.
#[derive(Clone, Debug)]
pub(crate) struct Geometry {
    /// `grads[i][p][q] = D_q e_i^p`
    pub grads: Vec<Vec<Vec<ScalarField>>>,
    /// `D_p e_i^p`
    pub divs: Vec<ScalarField>,
    /// `Σᵢ J_i` with `J_i = (D_p e_i^p)² − D_p e_i^q D_q e_i^p`
    pub j_sum: ScalarField,
    /// `Σᵢ e_i^q D_q e_i^p`
    pub ito: VectorField,
    /// `Σᵢ e_i^p D_q e_i^q`
    pub ediv: VectorField,
    /// `cov[p][q] = Σᵢ e_i^p e_i^q`
    pub cov: Vec<Vec<ScalarField>>,
    /// `Σ_q D_q cov[p][q]`
    pub cov_div: VectorField,
    /// `D_p a^p`
    pub drift_div: ScalarField,
    /// `drift_grad[p][q] = D_q a^p`
    pub drift_grad: Vec<Vec<ScalarField>>,
}

fn jacobian(v: &VectorField) -> Vec<Vec<ScalarField>> {
    v.components()
        .iter()
        .map(|c| (0..v.dim()).map(|q| derivative(c, q).expect("axis in range")).collect())
        .collect()
}

impl Geometry {
    fn new(grid: &Grid, modes: &[VectorField], drift: &VectorField) -> Self {
        let dim = grid.dim();
        let n = grid.len();
        let grads: Vec<_> = modes.iter().map(jacobian).collect();
        let divs: Vec<_> = modes.iter().map(divergence).collect();
        let mut j_sum = vec![0.0; n];
        let mut ito = VectorField::zeros(grid);
        let mut ediv = VectorField::zeros(grid);
        let mut cov = vec![vec![ScalarField::zeros(grid); dim]; dim];
        for (i, e) in modes.iter().enumerate() {
            let g = &grads[i];
            let dv = divs[i].values();
            for k in 0..n {
                let mut cross = 0.0;
                for p in 0..dim {
                    for q in 0..dim {
                        cross += g[p][q].values()[k] * g[q][p].values()[k];
                    }
                }
                j_sum[k] += dv[k] * dv[k] - cross;
            }
            for p in 0..dim {
                let ep = e.component(p).values();
                let ito_p = ito.component_mut(p).values_mut();
                for q in 0..dim {
                    let eq = e.component(q).values();
                    let dq = g[p][q].values();
                    for k in 0..n {
                        ito_p[k] += eq[k] * dq[k];
                    }
                }
                let ediv_p = ediv.component_mut(p).values_mut();
                for k in 0..n {
                    ediv_p[k] += ep[k] * dv[k];
                }
                for q in 0..dim {
                    let eq = e.component(q).values();
                    let c = cov[p][q].values_mut();
                    for k in 0..n {
                        c[k] += ep[k] * eq[k];
                    }
                }
            }
        }
        let cov_div = VectorField::from_components(
            (0..dim)
                .map(|p| {
                    let mut c = ScalarField::zeros(grid);
                    for q in 0..dim {
                        c.axpy(1.0, &derivative(&cov[p][q], q).expect("axis in range"));
                    }
                    c
                })
                .collect(),
        )
        .expect("components share the grid");
        Self {
            grads,
            divs,
            j_sum: ScalarField::from_raw(grid, j_sum),
            cov_div,
            ito,
            ediv,
            cov,
            drift_div: divergence(drift),
            drift_grad: jacobian(drift),
        }
    }
}

/// The fields `{e_i}` and the drift `a` that define a diffeomorphism increment.
#[derive(Clone, Debug)]
pub struct NoiseBasis {
    grid: Grid,
    modes: Vec<VectorField>,
    drift: VectorField,
    drift_kind: Drift,
    divergence_free: bool,
    geometry: Geometry,
}

impl NoiseBasis {
    /// Basis with zero drift. `divergence_free` is measured on the grid.
    pub fn new(grid: &Grid, modes: Vec<VectorField>) -> Result<Self> {
        for e in &modes {
            if e.grid() != grid {
                return Err(Error::GridMismatch);
            }
        }
        let divergence_free = modes.iter().all(|e| {
            let scale = e.max_abs() / grid.min_spacing();
            divergence(e).max_abs() <= 1e-12 * scale.max(1.0)
        });
        let drift = VectorField::zeros(grid);
        Ok(Self {
            grid: *grid,
            geometry: Geometry::new(grid, &modes, &drift),
            modes,
            drift,
            drift_kind: Drift::Zero,
            divergence_free,
        })
    }

    /// No modes and zero drift.
    pub fn empty(grid: &Grid) -> Self {
        Self::new(grid, Vec::new()).expect("empty basis is valid")
    }

    pub fn with_drift(mut self, drift: Drift) -> Result<Self> {
        self.drift = match &drift {
            Drift::Zero => VectorField::zeros(&self.grid),
            Drift::Lu => self.geometry.ito.clone(),
            Drift::Salt => self.geometry.ito.scaled(0.5),
            Drift::Field(a) => {
                if a.grid() != &self.grid {
                    return Err(Error::GridMismatch);
                }
                a.clone()
            }
        };
        self.geometry.drift_div = divergence(&self.drift);
        self.geometry.drift_grad = jacobian(&self.drift);
        self.drift_kind = drift;
        Ok(self)
    }

    /// Every mode multiplied by `lambda`; the drift kind is kept and rebuilt.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let modes = self.modes.iter().map(|e| e.scaled(lambda)).collect();
        let mut b = Self::new(&self.grid, modes)?;
        b.divergence_free = self.divergence_free;
        let kind = match &self.drift_kind {
            Drift::Field(a) => Drift::Field(a.clone()),
            k => k.clone(),
        };
        b.with_drift(kind)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn modes(&self) -> &[VectorField] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn drift(&self) -> &VectorField {
        &self.drift
    }

    pub fn drift_kind(&self) -> &Drift {
        &self.drift_kind
    }

    pub fn divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub(crate) fn geometry(&self) -> &Geometry {
        &self.geometry
    }
}

/// `factor · Σᵢ e_i^q D_q e_i^p`.
pub fn ito_drift_correction(basis: &NoiseBasis, factor: f64) -> VectorField {
    basis.geometry.ito.scaled(factor)
}

/// `D_p D_q (Σᵢ e_i^p e_i^q)` summed over `p, q`; zero together with
/// divergence-free modes makes the LU map volume preserving.
pub fn covariance_double_divergence(basis: &NoiseBasis) -> ScalarField {
    let dim = basis.grid.dim();
    let mut out = ScalarField::zeros(&basis.grid);
    for p in 0..dim {
        for q in 0..dim {
            let c = &basis.geometry.cov[p][q];
            let dd = derivative(&derivative(c, q).expect("axis"), p).expect("axis");
            out.axpy(1.0, &dd);
        }
    }
    out
}

/// Builds one real Fourier mode per spec entry.
///
/// Solenoidal amplitudes are projected orthogonal to the centered-difference
/// symbol `sin(k_p h_p)/h_p`, so the discrete divergence vanishes to round-off.
pub fn build_fourier_basis(grid: &Grid, specs: &[ModeSpec]) -> Result<NoiseBasis> {
    let dim = grid.dim();
    let mut modes = Vec::with_capacity(specs.len());
    let mut all_solenoidal = true;
    for spec in specs {
        if spec.wavevector.len() != dim || spec.amplitude.len() != dim {
            return Err(Error::Dimension {
                op: "build_fourier_basis",
                expected: "wavevector and amplitude of the grid dimension",
                got: spec.wavevector.len().max(spec.amplitude.len()),
            });
        }
        for (axis, &k) in spec.wavevector.iter().enumerate() {
            if !k.is_finite() || grid.wavenumber(axis, k).is_none() {
                return Err(Error::NonCommensurate {
                    axis,
                    k,
                    extent: grid.extent()[axis],
                });
            }
        }
        let k = &spec.wavevector;
        let mut amp = spec.amplitude.clone();
        let is_const = k.iter().all(|&c| c == 0.0);
        if spec.polarization == Polarization::Solenoidal && !is_const {
            let sym: Vec<f64> = (0..dim)
                .map(|p| {
                    let h = grid.spacing(p);
                    (k[p] * h).sin() / h
                })
                .collect();
            let s2: f64 = sym.iter().map(|s| s * s).sum();
            if s2 > 0.0 {
                let proj = amp.iter().zip(&sym).map(|(a, s)| a * s).sum::<f64>() / s2;
                for p in 0..dim {
                    amp[p] -= proj * sym[p];
                }
            }
        }
        all_solenoidal &= spec.polarization == Polarization::Solenoidal || is_const;
        let phase = spec.phase;
        let e = VectorField::from_fn(grid, |x, out| {
            let s = if is_const {
                1.0
            } else {
                let arg: f64 = x.iter().zip(k).map(|(x, k)| x * k).sum();
                match phase {
                    Phase::Sin => arg.sin(),
                    Phase::Cos => arg.cos(),
                }
            };
            for p in 0..dim {
                out[p] = amp[p] * s;
            }
        });
        modes.push(e);
    }
    let mut basis = NoiseBasis::new(grid, modes)?;
    basis.divergence_free = all_solenoidal;
    Ok(basis)
}

/// Serializable position of a ChaCha20 stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

/// Explicitly seeded generator whose full state is an [`RngState`].
#[derive(Clone, Debug)]
pub struct NoiseStream {
    seed: u64,
    rng: ChaCha20Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, rng }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut s = Self::new(state.seed, state.stream);
        s.rng.set_word_pos(state.word_pos);
        s
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            stream: self.rng.get_stream(),
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// One draw of `Δη_i ~ N(0, dt)` for each of `m` modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrownianIncrements {
    pub dt: f64,
    pub eta: Vec<f64>,
    /// Generator state before the draw, if the increments were sampled.
    pub rng_state: Option<RngState>,
}

impl BrownianIncrements {
    /// Fixed increments, e.g. quadrature nodes or hand-built test cases.
    pub fn fixed(dt: f64, eta: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::NonPositiveDt(dt));
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Brownian increments"));
        }
        Ok(Self {
            dt,
            eta,
            rng_state: None,
        })
    }

    pub fn zero(dt: f64, m: usize) -> Result<Self> {
        Self::fixed(dt, vec![0.0; m])
    }

    pub fn negated(&self) -> Self {
        Self {
            dt: self.dt,
            eta: self.eta.iter().map(|v| -v).collect(),
            rng_state: self.rng_state,
        }
    }
}

pub fn sample_increments(m: usize, dt: f64, rng: &mut NoiseStream) -> Result<BrownianIncrements> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveDt(dt));
    }
    let state = rng.state();
    let sd = dt.sqrt();
    let eta = (0..m).map(|_| sd * rng.standard_normal()).collect();
    Ok(BrownianIncrements {
        dt,
        eta,
        rng_state: Some(state),
    })
}

/// A sampled sequence of increments that can be coarsened by summation, so
/// runs at different step sizes see the same Brownian path.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath {
    dt: f64,
    steps: Vec<Vec<f64>>,
}

impl BrownianPath {
    pub fn sample(m: usize, dt: f64, n_steps: usize, rng: &mut NoiseStream) -> Result<Self> {
        let steps = (0..n_steps)
            .map(|_| sample_increments(m, dt, rng).map(|b| b.eta))
            .collect::<Result<_>>()?;
        Ok(Self { dt, steps })
    }

    pub fn from_steps(dt: f64, steps: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::NonPositiveDt(dt));
        }
        Ok(Self { dt, steps })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn increments(&self, step: usize) -> BrownianIncrements {
        BrownianIncrements {
            dt: self.dt,
            eta: self.steps[step].clone(),
            rng_state: None,
        }
    }

    /// Path at step `factor·dt`; each coarse increment is the sum of `factor`
    /// consecutive fine ones. A trailing partial block is dropped.
    pub fn coarsen(&self, factor: usize) -> Self {
        assert!(factor >= 1, "coarsening factor must be positive");
        let steps = self
            .steps
            .chunks_exact(factor)
            .map(|block| {
                let m = block[0].len();
                (0..m).map(|i| block.iter().map(|s| s[i]).sum()).collect()
            })
            .collect();
        Self {
            dt: self.dt * factor as f64,
            steps,
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            dt: self.dt,
            steps: self.steps.iter().map(|s| s.iter().map(|v| -v).collect()).collect(),
        }
    }
}
