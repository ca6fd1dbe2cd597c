//! Location-uncertainty and SALT drifts, with term-by-term cross-checks.

use std::sync::Arc;

use crate::calculus::{derivative, second_derivative};
use crate::diffeo::{Convention, DiffeoIncrement};
use crate::error::Result;
use crate::field::{ScalarField, VectorField};
use crate::noise::{sample_increments, Drift, NoiseBasis, NoiseStream};
use crate::perturb::{perturb_0form, perturb_nform, NFormMode};

/// `Σᵢ e_i^q D_q e_i^p`, assembled mode by mode without shared caches.
fn lu_drift_direct(basis: &NoiseBasis) -> VectorField {
    let grid = basis.grid();
    let dim = grid.dim();
    let mut out = VectorField::zeros(grid);
    for e in basis.modes() {
        for p in 0..dim {
            for q in 0..dim {
                let d = derivative(e.component(p), q).expect("axis in range");
                let t = e.component(q) * &d;
                out.component_mut(p).axpy(1.0, &t);
            }
        }
    }
    out
}

fn lu_increment(basis: &Arc<NoiseBasis>, dt: f64, rng: &mut NoiseStream) -> Result<DiffeoIncrement> {
    let inc = sample_increments(basis.len(), dt, rng)?;
    DiffeoIncrement::with_safety(basis.clone(), inc, Convention::Lu, f64::INFINITY)
}

/// Max-norm gap between `perturb_0form` under the basis's installed drift and
/// the LU transport increment
/// `((e_i·∇)e_i·∇f + ½e_i^pe_i^q D_pD_q f)Δt + e_i·∇f Δη_i`.
pub fn lu_correspondence_check(
    basis: &Arc<NoiseBasis>,
    f: &ScalarField,
    dt: f64,
    rng: &mut NoiseStream,
) -> Result<f64> {
    let d = lu_increment(basis, dt, rng)?;
    lu_correspondence_with(&d, f)
}

/// [`lu_correspondence_check`] for a given increment.
pub fn lu_correspondence_with(d: &DiffeoIncrement, f: &ScalarField) -> Result<f64> {
    let basis = d.basis();
    let grid = f.grid();
    let dim = grid.dim();
    let ours = perturb_0form(f, d)?;
    let grads: Vec<ScalarField> = (0..dim).map(|p| derivative(f, p)).collect::<Result<_>>()?;
    let w = lu_drift_direct(basis);
    let mut lu = ScalarField::zeros(grid);
    for p in 0..dim {
        lu.axpy(d.dt(), &(w.component(p) * &grads[p]));
    }
    for (e, &eta) in basis.modes().iter().zip(d.eta()) {
        for p in 0..dim {
            for q in 0..dim {
                let h = second_derivative(f, p, q)?;
                let c = e.component(p) * e.component(q);
                lu.axpy(0.5 * d.dt(), &(&c * &h));
            }
            lu.axpy(eta, &(e.component(p) * &grads[p]));
        }
    }
    Ok((&ours.realized - &lu).max_abs())
}

/// Max-norm gap between flux-form `perturb_nform` under the installed drift
/// and the LU density increment
/// `D_p[(½ D_q(Σe_i^pe_i^q) f + ½ Σe_i^pe_i^q D_q f)Δt + Σ e_i^p f Δη_i]`.
pub fn lu_nform_check(basis: &Arc<NoiseBasis>, f: &ScalarField, dt: f64, rng: &mut NoiseStream) -> Result<f64> {
    let d = lu_increment(basis, dt, rng)?;
    lu_nform_with(&d, f)
}

/// [`lu_nform_check`] for a given increment.
pub fn lu_nform_with(d: &DiffeoIncrement, f: &ScalarField) -> Result<f64> {
    let basis = d.basis();
    let grid = f.grid();
    let dim = grid.dim();
    let ours = perturb_nform(f, d, NFormMode::Flux)?;
    let grads: Vec<ScalarField> = (0..dim).map(|q| derivative(f, q)).collect::<Result<_>>()?;
    let mut a = vec![vec![ScalarField::zeros(grid); dim]; dim];
    for e in basis.modes() {
        for p in 0..dim {
            for q in 0..dim {
                a[p][q].axpy(1.0, &(e.component(p) * e.component(q)));
            }
        }
    }
    let mut lu = ScalarField::zeros(grid);
    for p in 0..dim {
        let mut flux = ScalarField::zeros(grid);
        for q in 0..dim {
            let div_a = derivative(&a[p][q], q)?;
            flux.axpy(0.5 * d.dt(), &(&div_a * f));
            flux.axpy(0.5 * d.dt(), &(&a[p][q] * &grads[q]));
        }
        for (e, &eta) in basis.modes().iter().zip(d.eta()) {
            flux.axpy(eta, &(e.component(p) * f));
        }
        lu.axpy(1.0, &derivative(&flux, p)?);
    }
    Ok((&ours.realized - &lu).max_abs())
}

/// Increment with drift `½Σᵢ(e_i·∇)e_i` and noise `−e_iΔη_i`.
pub fn salt_increment(basis: &NoiseBasis, dt: f64, rng: &mut NoiseStream) -> Result<DiffeoIncrement> {
    salt_increment_with_safety(basis, dt, rng, crate::diffeo::DEFAULT_SAFETY)
}

pub fn salt_increment_with_safety(
    basis: &NoiseBasis,
    dt: f64,
    rng: &mut NoiseStream,
    safety: f64,
) -> Result<DiffeoIncrement> {
    let salt = basis.clone().with_drift(Drift::Salt)?;
    let inc = sample_increments(salt.len(), dt, rng)?;
    DiffeoIncrement::with_safety(Arc::new(salt), inc, Convention::Salt, safety)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeo::{forward_map, inverse_map};
    use crate::field::Grid;
    use crate::noise::{build_fourier_basis, ito_drift_correction, BrownianIncrements, ModeSpec, Phase, Polarization};

    fn free_basis(g: &Grid) -> NoiseBasis {
        let specs = [
            ModeSpec::new(&[1.0, 0.0], &[0.8, 0.3], Polarization::Free),
            ModeSpec::new(&[1.0, 2.0], &[0.2, 0.5], Polarization::Free).with_phase(Phase::Cos),
            ModeSpec::new(&[0.0, 1.0], &[0.4, -0.6], Polarization::Free),
        ];
        build_fourier_basis(g, &specs).unwrap()
    }

    #[test]
    fn lu_checks_pass_for_lu_drift() {
        let g = Grid::periodic_box(2, 32).unwrap();
        let b = Arc::new(free_basis(&g).with_drift(Drift::Lu).unwrap());
        let f = ScalarField::from_fn(&g, |x| 1.5 + (x[0] + x[1]).sin() * x[0].cos());
        let mut rng = NoiseStream::new(3, 0);
        assert!(lu_correspondence_check(&b, &f, 1e-3, &mut rng).unwrap() < 1e-12);
        assert!(lu_nform_check(&b, &f, 1e-3, &mut rng).unwrap() < 1e-12);
    }

    #[test]
    fn lu_checks_fail_without_drift() {
        let g = Grid::periodic_box(2, 32).unwrap();
        let b = Arc::new(free_basis(&g));
        let f = ScalarField::from_fn(&g, |x| 1.5 + (x[0] + x[1]).sin() * x[0].cos());
        let mut rng = NoiseStream::new(3, 0);
        assert!(lu_correspondence_check(&b, &f, 1e-3, &mut rng).unwrap() > 1e-6);
        assert!(lu_nform_check(&b, &f, 1e-3, &mut rng).unwrap() > 1e-6);
    }

    #[test]
    fn lu_inverse_map_is_pure_noise() {
        let g = Grid::periodic_box(2, 32).unwrap();
        let b = Arc::new(free_basis(&g).with_drift(Drift::Lu).unwrap());
        let d = DiffeoIncrement::new(
            b.clone(),
            BrownianIncrements::fixed(1e-3, vec![0.01, -0.02, 0.005]).unwrap(),
            Convention::Lu,
        )
        .unwrap();
        assert_eq!(d.inverse_drift().max_abs(), 0.0);
        let nodes = g.nodes();
        let back = inverse_map(&d, &nodes);
        for (k, (x, y)) in nodes.iter().zip(&back).enumerate() {
            let mut shift = [0.0; 2];
            for (e, &eta) in b.modes().iter().zip(d.eta()) {
                for p in 0..2 {
                    shift[p] -= e.component(p).values()[k] * eta;
                }
            }
            let r = g.periodic_delta(*y, *x);
            assert!((r[0] - shift[0]).abs() < 1e-15 && (r[1] - shift[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn salt_drift_is_half_lu() {
        let g = Grid::periodic_box(2, 16).unwrap();
        let b = free_basis(&g);
        let mut rng = NoiseStream::new(9, 1);
        let d = salt_increment_with_safety(&b, 1e-4, &mut rng, 10.0).unwrap();
        assert_eq!(d.convention(), Convention::Salt);
        assert_eq!(d.basis().drift(), &ito_drift_correction(&b, 0.5));
        assert_eq!(&d.basis().drift().scaled(2.0), &ito_drift_correction(&b, 1.0));
    }

    #[test]
    fn salt_with_constant_mode_is_a_negative_shift() {
        let g = Grid::periodic_box(2, 16).unwrap();
        let b = build_fourier_basis(&g, &[ModeSpec::new(&[0.0, 0.0], &[1.0, 0.0], Polarization::Free)]).unwrap();
        let mut rng = NoiseStream::new(1, 0);
        let d = salt_increment(&b, 1e-4, &mut rng).unwrap();
        let eta = d.eta()[0];
        let y = forward_map(&d, &[[1.0, 1.0, 0.0]]);
        assert!((y[0][0] - (1.0 - eta)).abs() < 1e-15);
    }
}
