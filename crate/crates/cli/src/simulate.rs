//! Ensemble runs producing diagnostic series, field snapshots and a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use locpert_core::calculus::integrate;
use locpert_core::conservation::{tsw_invariants, DiagnosticSeries};
use locpert_core::field::{ScalarField, TensorClass};
use locpert_core::io::write_field;
use locpert_core::models::{
    tsw_step_with_increments, two_step_forecast, AdvectionDiffusion, TensorAssignment, TswDynamics, TswState, Var,
};
use locpert_core::noise::{sample_increments, NoiseStream};

use crate::config::{ModelKind, RunConfig};
use crate::error::CliError;

/// Every output file of a run, keyed by path relative to the output directory.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunOutput {
    pub files: BTreeMap<PathBuf, Vec<u8>>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    software: &'static str,
    version: &'static str,
    seed: u64,
    ensemble: usize,
    /// Member `m` draws from ChaCha20 stream `m` of the seed.
    rng: &'static str,
    files: Vec<String>,
    config: &'a RunConfig,
}

enum ModelState {
    Scalar(ScalarField),
    Tsw(TswState),
}

impl ModelState {
    fn diagnostic(&self, name: &str) -> f64 {
        match self {
            ModelState::Scalar(f) => match name {
                "integral" => integrate(f),
                "l2" => integrate(&(f * f)).sqrt(),
                _ => unreachable!("diagnostic names are validated with the config"),
            },
            ModelState::Tsw(s) => {
                let inv = tsw_invariants(s);
                match name {
                    "mass" => inv.mass,
                    "energy" => inv.energy,
                    "momentum_x" => inv.momentum[0],
                    "momentum_y" => inv.momentum[1],
                    _ => unreachable!("diagnostic names are validated with the config"),
                }
            }
        }
    }

    fn snapshot_fields(&self) -> Vec<(&'static str, &ScalarField)> {
        match self {
            ModelState::Scalar(f) => vec![("f", f)],
            ModelState::Tsw(s) => vec![
                ("h", &s.h),
                ("theta", &s.theta),
                ("u_x", s.u.component(0)),
                ("u_y", s.u.component(1)),
            ],
        }
    }
}

fn member_dir(member: usize) -> PathBuf {
    PathBuf::from(format!("member_{member:03}"))
}

fn snapshot(files: &mut BTreeMap<PathBuf, Vec<u8>>, member: usize, step: usize, state: &ModelState) {
    for (name, f) in state.snapshot_fields() {
        let mut buf = Vec::new();
        write_field(&mut buf, f).expect("writing to memory");
        files.insert(member_dir(member).join(format!("{name}_step{step:06}.fld")), buf);
    }
}

/// Runs one member; member `m` uses RNG stream `m`.
fn run_member(cfg: &RunConfig, member: usize) -> Result<BTreeMap<PathBuf, Vec<u8>>, CliError> {
    let basis = cfg.basis()?;
    let opts = cfg.forecast_options();
    let dt = cfg.run.dt;
    let mut rng = NoiseStream::new(cfg.run.seed, member as u64);
    let names = cfg.diagnostics();
    let mut series: Vec<DiagnosticSeries> = names.iter().map(DiagnosticSeries::new).collect();
    let mut files = BTreeMap::new();

    let mut state = match cfg.run.model {
        ModelKind::Advection => ModelState::Scalar(cfg.advection_initial()?),
        ModelKind::Tsw | ModelKind::PerturbationOnly => ModelState::Tsw(cfg.tsw_initial()?),
    };
    let rhs = match cfg.run.model {
        ModelKind::Advection => Some(
            AdvectionDiffusion::new(cfg.advection_velocity()?, cfg.advection.diffusivity)
                .map_err(|e| CliError::Config(e.to_string()))?,
        ),
        _ => None,
    };
    let params = cfg.tsw_params().ok();
    let assignment = TensorAssignment::new(vec![TensorClass::ZeroForm]).expect("valid class");

    let record = |series: &mut Vec<DiagnosticSeries>, t: f64, s: &ModelState| {
        for (ser, name) in series.iter_mut().zip(&names) {
            ser.push(t, s.diagnostic(name)).expect("times increase");
        }
    };
    record(&mut series, 0.0, &state);
    let every = cfg.run.snapshot_every;
    if every > 0 {
        snapshot(&mut files, member, 0, &state);
    }

    for step in 1..=cfg.run.n_steps {
        let abort = |e: locpert_core::Error| CliError::Abort {
            member,
            step,
            source: e.at_step(step),
        };
        state = match (&state, cfg.run.model) {
            (ModelState::Scalar(f), _) => {
                let rhs = rhs.as_ref().expect("advection model has a tendency");
                let vars = [Var::Scalar(f.clone())];
                let next = two_step_forecast(&vars, rhs, &assignment, &basis, dt, &mut rng, &opts).map_err(abort)?;
                match next.into_iter().next() {
                    Some(Var::Scalar(f)) => ModelState::Scalar(f),
                    _ => unreachable!("one scalar in, one scalar out"),
                }
            }
            (ModelState::Tsw(s), model) => {
                let params = params.expect("validated thermal shallow-water parameters");
                let dynamics = if model == ModelKind::PerturbationOnly {
                    TswDynamics::PerturbationOnly
                } else {
                    TswDynamics::Full
                };
                let inc = sample_increments(basis.len(), dt, &mut rng).map_err(abort)?;
                ModelState::Tsw(tsw_step_with_increments(s, &params, &basis, inc, &opts, dynamics).map_err(abort)?)
            }
        };
        record(&mut series, step as f64 * dt, &state);
        if (every > 0 && step % every == 0) || step == cfg.run.n_steps {
            snapshot(&mut files, member, step, &state);
        }
    }
    for s in &series {
        files.insert(
            member_dir(member).join(format!("{}.csv", s.name())),
            s.to_csv().into_bytes(),
        );
    }
    Ok(files)
}

/// Runs every member concurrently and assembles the outputs in memory.
pub fn run_in_memory(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let results: Vec<_> = (0..cfg.run.ensemble)
        .into_par_iter()
        .map(|m| run_member(cfg, m))
        .collect();
    let mut files = BTreeMap::new();
    for r in results {
        files.extend(r?);
    }
    let manifest = Manifest {
        software: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.run.seed,
        ensemble: cfg.run.ensemble,
        rng: "chacha20, stream = member index",
        files: files.keys().map(|p| p.display().to_string()).collect(),
        config: cfg,
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    files.insert(PathBuf::from("manifest.toml"), text.into_bytes());
    Ok(RunOutput { files })
}

pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<(), CliError> {
    for (rel, bytes) in &out.files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

/// Runs the configuration and writes into `run.output_dir`.
pub fn run_simulation(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let out = run_in_memory(cfg)?;
    write_outputs(&cfg.run.output_dir, &out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::parse(text).unwrap()
    }

    #[test]
    fn zero_noise_advection_is_deterministic_euler() {
        let c = cfg("[run]\nmodel = \"advection\"\ndt = 0.01\nn_steps = 3\n[grid]\npoints = [16, 16]\n");
        let out = run_in_memory(&c).unwrap();
        let f =
            locpert_core::io::read_field(&mut out.files[Path::new("member_000/f_step000003.fld")].as_slice()).unwrap();
        let mut g = c.advection_initial().unwrap();
        let v = c.advection_velocity().unwrap();
        for _ in 0..3 {
            let r = locpert_core::models::advection_diffusion_rhs(&g, &v, 0.0).unwrap();
            g.axpy(0.01, &r);
        }
        assert_eq!(f, g);
    }

    #[test]
    fn same_seed_same_bytes() {
        let text = "[run]\nmodel = \"tsw\"\ndt = 0.001\nn_steps = 4\nensemble = 3\nseed = 5\nsnapshot_every = 2\n\
                    [grid]\npoints = [16, 16]\n[noise]\ndrift = \"lu\"\n\
                    [[noise.mode]]\nk = [1, 1]\namp = [0.1, -0.1]\n";
        let a = run_in_memory(&cfg(text)).unwrap();
        let b = run_in_memory(&cfg(text)).unwrap();
        assert_eq!(a, b);
        assert!(a.files.contains_key(Path::new("member_002/mass.csv")));
        assert!(a.files.contains_key(Path::new("member_001/h_step000002.fld")));
        let other = run_in_memory(&cfg(&text.replace("seed = 5", "seed = 6"))).unwrap();
        assert_ne!(
            a.files[Path::new("member_000/h_step000004.fld")],
            other.files[Path::new("member_000/h_step000004.fld")]
        );
    }

    #[test]
    fn unstable_step_aborts_with_its_index() {
        let c = cfg("[run]\nmodel = \"advection\"\ndt = 0.5\nn_steps = 3\n[grid]\npoints = [16, 16]\n");
        match run_in_memory(&c) {
            Err(CliError::Abort { member: 0, step: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
