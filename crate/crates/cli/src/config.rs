//! Run configuration: one TOML file with flat sections.
//!
//! ```toml
//! [run]
//! model = "perturbation-only"   # advection | tsw | perturbation-only
//! dt = 1e-3
//! n_steps = 20
//! ensemble = 1
//! seed = 42
//! output_dir = "output"
//! diagnostics = ["mass", "energy"]
//! convention = "lu"             # raw | lu | salt
//! nform_mode = "flux"           # pointwise | flux
//! snapshot_every = 10           # 0: final state only
//! safety = 1.0
//! c_stab = 1.0
//!
//! [grid]
//! points = [64, 64]
//! extent = [6.283185307179586, 6.283185307179586]
//!
//! [noise]
//! drift = "lu"                  # zero | lu | salt
//! [[noise.mode]]
//! k = [1, 0]                    # integer wavenumbers; physical k = 2πn/L
//! amp = [0.0, 0.1]
//! solenoidal = true
//! phase = "sin"                 # sin | cos
//!
//! [advection]
//! velocity = [1.0, 0.5]
//! diffusivity = 0.01
//! initial_k = [1, 1]
//! initial_amplitude = 0.5
//! background = 1.0
//!
//! [tsw]
//! kappa = 0.0
//! h0 = 1.0
//! theta0 = 1.0
//! fcor = 0.0
//! h_amplitude = 0.05
//! theta_amplitude = 0.05
//! u_amplitude = 0.0
//! ```
//!
//! Precedence: command-line flags, then `LOCPERT_OUTPUT_DIR`, then the file.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use locpert_core::diffeo::Convention;
use locpert_core::field::{Grid, ScalarField, VectorField};
use locpert_core::models::{ForecastOptions, TswParams, TswState};
use locpert_core::noise::{build_fourier_basis, Drift, ModeSpec, NoiseBasis, Phase, Polarization};
use locpert_core::perturb::NFormMode;

use crate::error::CliError;

/// Environment variable that overrides `run.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "LOCPERT_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Advection,
    Tsw,
    PerturbationOnly,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftKind {
    #[default]
    Zero,
    Lu,
    Salt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub model: ModelKind,
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default = "one")]
    pub ensemble: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub diagnostics: Vec<String>,
    #[serde(default)]
    pub convention: Convention,
    #[serde(default)]
    pub nform_mode: NFormMode,
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "unit")]
    pub safety: f64,
    #[serde(default = "unit")]
    pub c_stab: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_points")]
    pub points: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<Vec<f64>>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            points: default_points(),
            extent: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    pub k: Vec<i64>,
    pub amp: Vec<f64>,
    #[serde(default = "yes")]
    pub solenoidal: bool,
    #[serde(default)]
    pub phase: Phase,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub drift: DriftKind,
    #[serde(default)]
    pub mode: Vec<ModeEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvectionSection {
    #[serde(default = "default_velocity")]
    pub velocity: Vec<f64>,
    #[serde(default)]
    pub diffusivity: f64,
    #[serde(default = "default_initial_k")]
    pub initial_k: Vec<i64>,
    #[serde(default = "half")]
    pub initial_amplitude: f64,
    #[serde(default = "unit")]
    pub background: f64,
}

impl Default for AdvectionSection {
    fn default() -> Self {
        Self {
            velocity: default_velocity(),
            diffusivity: 0.0,
            initial_k: default_initial_k(),
            initial_amplitude: half(),
            background: unit(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TswSection {
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "unit")]
    pub h0: f64,
    #[serde(default = "unit")]
    pub theta0: f64,
    #[serde(default)]
    pub fcor: f64,
    #[serde(default = "small")]
    pub h_amplitude: f64,
    #[serde(default = "small")]
    pub theta_amplitude: f64,
    #[serde(default)]
    pub u_amplitude: f64,
}

impl Default for TswSection {
    fn default() -> Self {
        Self {
            kappa: 0.0,
            h0: 1.0,
            theta0: 1.0,
            fcor: 0.0,
            h_amplitude: small(),
            theta_amplitude: small(),
            u_amplitude: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub advection: AdvectionSection,
    #[serde(default)]
    pub tsw: TswSection,
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn small() -> f64 {
    0.05
}
fn yes() -> bool {
    true
}
fn default_output() -> PathBuf {
    PathBuf::from("output")
}
fn default_points() -> Vec<usize> {
    vec![64, 64]
}
fn default_velocity() -> Vec<f64> {
    vec![1.0, 0.5]
}
fn default_initial_k() -> Vec<i64> {
    vec![1, 1]
}

/// Values given on the command line; `None` leaves the file value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub n_steps: Option<usize>,
    pub ensemble: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies the environment, then the command-line overrides, and
    /// revalidates.
    pub fn with_overrides(mut self, env_output: Option<PathBuf>, cli: &Overrides) -> Result<Self, CliError> {
        if let Some(dir) = env_output {
            self.run.output_dir = dir;
        }
        if let Some(dir) = &cli.output_dir {
            self.run.output_dir = dir.clone();
        }
        if let Some(seed) = cli.seed {
            self.run.seed = seed;
        }
        if let Some(dt) = cli.dt {
            self.run.dt = dt;
        }
        if let Some(n) = cli.n_steps {
            self.run.n_steps = n;
        }
        if let Some(m) = cli.ensemble {
            self.run.ensemble = m;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let r = &self.run;
        if !(r.dt > 0.0) || !r.dt.is_finite() {
            return bad(format!("run.dt must be positive, got {}", r.dt));
        }
        if r.n_steps < 1 {
            return bad("run.n_steps must be at least 1".into());
        }
        if r.ensemble < 1 {
            return bad("run.ensemble must be at least 1".into());
        }
        if !(r.safety > 0.0) || !(r.c_stab > 0.0) {
            return bad("run.safety and run.c_stab must be positive".into());
        }
        let grid = self.grid()?;
        let dim = grid.dim();
        if matches!(r.model, ModelKind::Tsw | ModelKind::PerturbationOnly) && dim != 2 {
            return bad(format!("the thermal shallow-water models need a 2D grid, got {dim}D"));
        }
        for name in &r.diagnostics {
            if !self.available_diagnostics().contains(&name.as_str()) {
                return bad(format!(
                    "unknown diagnostic {name:?} for this model; available: {}",
                    self.available_diagnostics().join(", ")
                ));
            }
        }
        for (i, m) in self.noise.mode.iter().enumerate() {
            if m.k.len() != dim || m.amp.len() != dim {
                return bad(format!("noise.mode[{i}]: k and amp need {dim} components"));
            }
        }
        if r.model == ModelKind::Advection {
            let a = &self.advection;
            if a.velocity.len() != dim || a.initial_k.len() != dim {
                return bad(format!(
                    "advection.velocity and advection.initial_k need {dim} components"
                ));
            }
            if !(a.diffusivity >= 0.0) {
                return bad(format!(
                    "advection.diffusivity must be non-negative, got {}",
                    a.diffusivity
                ));
            }
        } else {
            self.tsw_params()?;
            let t = &self.tsw;
            if !(t.h_amplitude.abs() < 1.0) || !(t.theta_amplitude.abs() < 1.0) {
                return bad("tsw.h_amplitude and tsw.theta_amplitude must lie in (-1, 1)".into());
            }
        }
        self.basis()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        let points = &self.grid.points;
        let extent = match &self.grid.extent {
            Some(e) => e.clone(),
            None => vec![TAU; points.len()],
        };
        if extent.len() != points.len() {
            return Err(CliError::Config("grid.points and grid.extent differ in length".into()));
        }
        Grid::new(points, &extent).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Physical wavevector of integer wavenumbers `n` on this grid.
    fn wavevector(grid: &Grid, n: &[i64]) -> Vec<f64> {
        n.iter()
            .enumerate()
            .map(|(p, &k)| TAU * k as f64 / grid.extent()[p])
            .collect()
    }

    pub fn mode_specs(&self) -> Result<Vec<ModeSpec>, CliError> {
        let grid = self.grid()?;
        Ok(self
            .noise
            .mode
            .iter()
            .map(|m| {
                let pol = if m.solenoidal {
                    Polarization::Solenoidal
                } else {
                    Polarization::Free
                };
                ModeSpec::new(&Self::wavevector(&grid, &m.k), &m.amp, pol).with_phase(m.phase)
            })
            .collect())
    }

    /// The configured modes with the configured drift installed.
    pub fn basis(&self) -> Result<Arc<NoiseBasis>, CliError> {
        let grid = self.grid()?;
        let drift = match self.noise.drift {
            DriftKind::Zero => Drift::Zero,
            DriftKind::Lu => Drift::Lu,
            DriftKind::Salt => Drift::Salt,
        };
        let basis = build_fourier_basis(&grid, &self.mode_specs()?)
            .and_then(|b| b.with_drift(drift))
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Arc::new(basis))
    }

    pub fn forecast_options(&self) -> ForecastOptions {
        ForecastOptions {
            convention: self.run.convention,
            nform_mode: self.run.nform_mode,
            safety: self.run.safety,
            c_stab: self.run.c_stab,
        }
    }

    pub fn tsw_params(&self) -> Result<TswParams, CliError> {
        let t = &self.tsw;
        TswParams::new(t.kappa, t.h0, t.theta0, t.fcor).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn available_diagnostics(&self) -> &'static [&'static str] {
        match self.run.model {
            ModelKind::Advection => &["integral", "l2"],
            ModelKind::Tsw | ModelKind::PerturbationOnly => &["mass", "energy", "momentum_x", "momentum_y"],
        }
    }

    /// The configured diagnostics, or every available one when none is listed.
    pub fn diagnostics(&self) -> Vec<String> {
        if self.run.diagnostics.is_empty() {
            self.available_diagnostics().iter().map(|s| s.to_string()).collect()
        } else {
            self.run.diagnostics.clone()
        }
    }

    /// `background + amplitude · sin(k·x)`.
    pub fn advection_initial(&self) -> Result<ScalarField, CliError> {
        let grid = self.grid()?;
        let a = &self.advection;
        let k = Self::wavevector(&grid, &a.initial_k);
        Ok(ScalarField::from_fn(&grid, |x| {
            let phase: f64 = x.iter().zip(&k).map(|(xi, ki)| xi * ki).sum();
            a.background + a.initial_amplitude * phase.sin()
        }))
    }

    pub fn advection_velocity(&self) -> Result<VectorField, CliError> {
        let grid = self.grid()?;
        VectorField::constant(&grid, &self.advection.velocity).map_err(|e| CliError::Config(e.to_string()))
    }

    /// `h = h₀(1 + ε_h sin x cos y)`, `Θ = Θ₀(1 + ε_Θ cos(x + y))`,
    /// `u = U(sin y, cos x)` in coordinates scaled to `[0, 2π)`.
    pub fn tsw_initial(&self) -> Result<TswState, CliError> {
        let grid = self.grid()?;
        let t = &self.tsw;
        let s = [TAU / grid.extent()[0], TAU / grid.extent()[1]];
        let h = ScalarField::from_fn(&grid, |x| {
            t.h0 * (1.0 + t.h_amplitude * (s[0] * x[0]).sin() * (s[1] * x[1]).cos())
        });
        let theta = ScalarField::from_fn(&grid, |x| {
            t.theta0 * (1.0 + t.theta_amplitude * (s[0] * x[0] + s[1] * x[1]).cos())
        });
        let u = VectorField::from_fn(&grid, |x, o| {
            o[0] = t.u_amplitude * (s[1] * x[1]).sin();
            o[1] = t.u_amplitude * (s[0] * x[0]).cos();
        });
        TswState::new(h, theta, u).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[run]\nmodel = \"advection\"\ndt = 0.01\nn_steps = 5\n";

    #[test]
    fn minimal_file_takes_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.run.ensemble, 1);
        assert_eq!(c.run.convention, Convention::Raw);
        assert_eq!(c.run.nform_mode, NFormMode::Flux);
        assert_eq!(c.grid().unwrap().points(), &[64, 64]);
        assert_eq!(c.diagnostics(), vec!["integral", "l2"]);
        assert!(c.basis().unwrap().is_empty());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "[run]\nmodel = \"advection\"\ndt = 0.0\nn_steps = 5\n",
            "[run]\nmodel = \"advection\"\ndt = 0.1\nn_steps = 0\n",
            "[run]\nmodel = \"advection\"\ndt = 0.1\nn_steps = 1\nensemble = 0\n",
            "[run]\nmodel = \"swirl\"\ndt = 0.1\nn_steps = 1\n",
            "[run]\nmodel = \"advection\"\ndt = 0.1\nn_steps = 1\nbogus = 3\n",
            "[run]\nmodel = \"advection\"\ndt = 0.1\nn_steps = 1\ndiagnostics = [\"mass\"]\n",
            "[run]\nmodel = \"tsw\"\ndt = 0.1\nn_steps = 1\n[grid]\npoints = [16]\n",
            "[run]\nmodel = \"advection\"\ndt = 0.1\nn_steps = 1\n[advection]\ndiffusivity = -1.0\n",
            "[run]\nmodel = \"advection\"\ndt = 0.1\nn_steps = 1\n[[noise.mode]]\nk = [1]\namp = [0.1, 0.0]\n",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn cli_beats_environment_beats_file() {
        let c = RunConfig::parse(&format!("{MINIMAL}output_dir = \"from_file\"\n")).unwrap();
        assert_eq!(c.run.output_dir, PathBuf::from("from_file"));
        let env = c
            .clone()
            .with_overrides(Some("from_env".into()), &Overrides::default())
            .unwrap();
        assert_eq!(env.run.output_dir, PathBuf::from("from_env"));
        let cli = Overrides {
            output_dir: Some("from_cli".into()),
            seed: Some(9),
            ..Overrides::default()
        };
        let both = c.with_overrides(Some("from_env".into()), &cli).unwrap();
        assert_eq!(both.run.output_dir, PathBuf::from("from_cli"));
        assert_eq!(both.run.seed, 9);
    }

    #[test]
    fn modes_use_integer_wavenumbers() {
        let text = "[run]\nmodel = \"perturbation-only\"\ndt = 0.001\nn_steps = 2\n\
                    [grid]\npoints = [32, 32]\nextent = [1.0, 2.0]\n\
                    [[noise.mode]]\nk = [1, 2]\namp = [0.1, 0.0]\nsolenoidal = false\nphase = \"cos\"\n";
        let c = RunConfig::parse(text).unwrap();
        let specs = c.mode_specs().unwrap();
        assert!((specs[0].wavevector[0] - TAU).abs() < 1e-15);
        assert!((specs[0].wavevector[1] - TAU).abs() < 1e-15);
        assert_eq!(specs[0].phase, Phase::Cos);
        assert_eq!(c.basis().unwrap().len(), 1);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        let again = RunConfig::parse(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, again);
    }
}
