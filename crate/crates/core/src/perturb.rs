//! Closed-form increments `T*θ − θ = M(θ)Δt + Σᵢ N_i(θ)Δη_i` for each tensor
//! class.

use serde::{Deserialize, Serialize};

use crate::calculus::{derivative, gradient, second_derivative};
use crate::diffeo::DiffeoIncrement;
use crate::error::{Error, Result};
use crate::field::{LinearField, ScalarField, VectorField};

/// Drift coefficient, one noise coefficient per mode, and their realized sum.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationResult<F> {
    pub drift_part: F,
    pub noise_parts: Vec<F>,
    pub realized: F,
}

impl<F: LinearField> PerturbationResult<F> {
    /// Assembles `realized = drift·Δt + Σᵢ noise_i·Δη_i`.
    pub fn assemble(drift_part: F, noise_parts: Vec<F>, dt: f64, eta: &[f64]) -> Self {
        let mut realized = drift_part.zeros_like();
        realized.axpy(dt, &drift_part);
        for (n, &e) in noise_parts.iter().zip(eta) {
            realized.axpy(e, n);
        }
        Self {
            drift_part,
            noise_parts,
            realized,
        }
    }
}

/// How an n-form increment is discretized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NFormMode {
    /// Literal pointwise coefficients.
    Pointwise,
    /// Discrete divergence of a flux; integrates to zero on the torus.
    #[default]
    Flux,
}

fn check_grid(f: &ScalarField, d: &DiffeoIncrement) -> Result<()> {
    if f.grid() == d.grid() {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// `½ Σ_pq C^{pq} D_p D_q f`.
fn hessian_term(f: &ScalarField, cov: &[Vec<ScalarField>]) -> ScalarField {
    let dim = f.grid().dim();
    let mut out = ScalarField::zeros(f.grid());
    for p in 0..dim {
        for q in p..dim {
            let w = if p == q { 0.5 } else { 1.0 };
            let h = second_derivative(f, p, q).expect("axis in range");
            accumulate(&mut out, w, &cov[p][q], &h);
        }
    }
    out
}

/// `out += w · a · b` pointwise.
fn accumulate(out: &mut ScalarField, w: f64, a: &ScalarField, b: &ScalarField) {
    for ((o, &x), &y) in out.values_mut().iter_mut().zip(a.values()).zip(b.values()) {
        *o += w * x * y;
    }
}

/// `v · ∇f` for a vector coefficient `v` and precomputed gradient.
fn advect(v: &VectorField, grad: &VectorField) -> ScalarField {
    v.dot(grad)
}

/// Pull-back of a function: `f∘T − f`.
///
/// Drift `a·∇f + ½Σᵢ e_i^p e_i^q D_pD_q f`; noise `e_i·∇f`.
pub fn perturb_0form(f: &ScalarField, d: &DiffeoIncrement) -> Result<PerturbationResult<ScalarField>> {
    check_grid(f, d)?;
    let geo = d.basis().geometry();
    let grad = gradient(f);
    let mut drift = advect(d.basis().drift(), &grad);
    drift.axpy(1.0, &hessian_term(f, &geo.cov));
    let s = d.noise_sign();
    let noise = d.basis().modes().iter().map(|e| advect(e, &grad).scaled(s)).collect();
    Ok(PerturbationResult::assemble(drift, noise, d.dt(), d.eta()))
}

/// Pull-back of a density `f dx¹∧…∧dxⁿ`.
pub fn perturb_nform(f: &ScalarField, d: &DiffeoIncrement, mode: NFormMode) -> Result<PerturbationResult<ScalarField>> {
    check_grid(f, d)?;
    match mode {
        NFormMode::Pointwise => Ok(nform_pointwise(f, d)),
        NFormMode::Flux => Ok(nform_flux(f, d)),
    }
}

fn nform_pointwise(f: &ScalarField, d: &DiffeoIncrement) -> PerturbationResult<ScalarField> {
    let basis = d.basis();
    let geo = basis.geometry();
    let grad = gradient(f);
    let mut zeroth = geo.drift_div.clone();
    zeroth.axpy(0.5, &geo.j_sum);
    let mut drift = &zeroth * f;
    let mut vel = basis.drift().clone();
    vel.axpy(1.0, &geo.ediv);
    drift.axpy(1.0, &advect(&vel, &grad));
    drift.axpy(1.0, &hessian_term(f, &geo.cov));
    let s = d.noise_sign();
    let noise = basis
        .modes()
        .iter()
        .zip(&geo.divs)
        .map(|(e, div)| {
            let mut n = div * f;
            n.axpy(1.0, &advect(e, &grad));
            n.scaled(s)
        })
        .collect();
    PerturbationResult::assemble(drift, noise, d.dt(), d.eta())
}

/// Drift `D_p[(a^p − Σᵢ e_i^q D_q e_i^p + ½ D_q C^{pq}) f + ½ C^{pq} D_q f]`
/// with `C^{pq} = Σᵢ e_i^p e_i^q`, noise `D_p(e_i^p f)`.
///
/// Under the LU drift the transport velocity collapses to `½ D_q C^{pq}`
/// exactly.
fn nform_flux(f: &ScalarField, d: &DiffeoIncrement) -> PerturbationResult<ScalarField> {
    let basis = d.basis();
    let geo = basis.geometry();
    let grid = f.grid();
    let dim = grid.dim();
    let grad = gradient(f);
    let mut drift = ScalarField::zeros(grid);
    for p in 0..dim {
        let mut vel = basis.drift().component(p).clone();
        vel.axpy(-1.0, geo.ito.component(p));
        vel.axpy(0.5, geo.cov_div.component(p));
        let mut flux = &vel * f;
        for q in 0..dim {
            accumulate(&mut flux, 0.5, &geo.cov[p][q], grad.component(q));
        }
        drift.axpy(1.0, &derivative(&flux, p).expect("axis in range"));
    }
    let s = d.noise_sign();
    let noise = basis
        .modes()
        .iter()
        .map(|e| {
            let mut n = ScalarField::zeros(grid);
            for p in 0..dim {
                n.axpy(s, &derivative(&(e.component(p) * f), p).expect("axis in range"));
            }
            n
        })
        .collect();
    PerturbationResult::assemble(drift, noise, d.dt(), d.eta())
}

/// Multiplier of the volume form: drift `D_p a^p + ½Σᵢ J_i`, noise `D_p e_i^p`.
pub fn perturb_volume_multiplier(d: &DiffeoIncrement) -> PerturbationResult<ScalarField> {
    let geo = d.basis().geometry();
    let mut drift = geo.drift_div.clone();
    drift.axpy(0.5, &geo.j_sum);
    let s = d.noise_sign();
    let noise = geo.divs.iter().map(|div| div.scaled(s)).collect();
    PerturbationResult::assemble(drift, noise, d.dt(), d.eta())
}

/// Pull-back of a covector `f^j dx^j`.
///
/// Component `j`: drift `a·∇f^j + ½C:∇∇f^j + D_j a^p f^p + Σᵢ D_j e_i^p e_i^q D_q f^p`,
/// noise `e_i·∇f^j + D_j e_i^p f^p`.
pub fn perturb_1form(v: &VectorField, d: &DiffeoIncrement) -> Result<PerturbationResult<VectorField>> {
    let grid = v.grid();
    if grid.dim() < 2 {
        return Err(Error::Dimension {
            op: "perturb_1form",
            expected: ">= 2",
            got: grid.dim(),
        });
    }
    if grid != d.grid() {
        return Err(Error::GridMismatch);
    }
    let dim = grid.dim();
    let basis = d.basis();
    let geo = basis.geometry();
    let grads: Vec<VectorField> = v.components().iter().map(gradient).collect();
    let mut drift = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut m = advect(basis.drift(), &grads[j]);
        m.axpy(1.0, &hessian_term(v.component(j), &geo.cov));
        for p in 0..dim {
            accumulate(&mut m, 1.0, &geo.drift_grad[p][j], v.component(p));
        }
        for (e, g) in basis.modes().iter().zip(&geo.grads) {
            for p in 0..dim {
                let e_grad_fp = advect(e, &grads[p]);
                accumulate(&mut m, 1.0, &g[p][j], &e_grad_fp);
            }
        }
        drift.push(m);
    }
    let s = d.noise_sign();
    let noise = basis
        .modes()
        .iter()
        .zip(&geo.grads)
        .map(|(e, g)| {
            let comps = (0..dim)
                .map(|j| {
                    let mut n = advect(e, &grads[j]);
                    for p in 0..dim {
                        accumulate(&mut n, 1.0, &g[p][j], v.component(p));
                    }
                    n.scaled(s)
                })
                .collect();
            VectorField::from_components(comps).expect("components share the grid")
        })
        .collect();
    let drift = VectorField::from_components(drift).expect("components share the grid");
    Ok(PerturbationResult::assemble(drift, noise, d.dt(), d.eta()))
}

/// Push-forward of an n-vector density `g ∂₁∧…∧∂ₙ` by `T`.
///
/// Drift `(D_p a^p + ½ΣJ_i − Σ e_i·∇(D_p e_i^p))g +
/// (−(a + Σ e_i D_q e_i^q) + Σ (e_i·∇)e_i)·∇g + ½C:∇∇g`,
/// noise `D_p e_i^p g − e_i·∇g`. The `e_i·∇(div e_i)` term vanishes for
/// divergence-free modes.
pub fn pushforward_nvector(g: &ScalarField, d: &DiffeoIncrement) -> Result<PerturbationResult<ScalarField>> {
    check_grid(g, d)?;
    let basis = d.basis();
    let geo = basis.geometry();
    let grad = gradient(g);
    let mut zeroth = geo.drift_div.clone();
    zeroth.axpy(0.5, &geo.j_sum);
    for (e, div) in basis.modes().iter().zip(&geo.divs) {
        zeroth.axpy(-1.0, &advect(e, &gradient(div)));
    }
    let mut drift = &zeroth * g;
    let mut vel = geo.ito.clone();
    vel.axpy(-1.0, basis.drift());
    vel.axpy(-1.0, &geo.ediv);
    drift.axpy(1.0, &advect(&vel, &grad));
    drift.axpy(1.0, &hessian_term(g, &geo.cov));
    let s = d.noise_sign();
    let noise = basis
        .modes()
        .iter()
        .zip(&geo.divs)
        .map(|(e, div)| {
            let mut n = div * g;
            n.axpy(-1.0, &advect(e, &grad));
            n.scaled(s)
        })
        .collect();
    Ok(PerturbationResult::assemble(drift, noise, d.dt(), d.eta()))
}

/// Joint transport of an n-form `f` (pulled back by `T`) and an n-vector `g`
/// (pushed forward by `T⁻¹`), both driven by the same increment.
pub fn perturb_mixed_pair(
    f_nform: &ScalarField,
    g_nvector: &ScalarField,
    d: &DiffeoIncrement,
    mode: NFormMode,
) -> Result<(PerturbationResult<ScalarField>, PerturbationResult<ScalarField>)> {
    if f_nform.grid() != g_nvector.grid() {
        return Err(Error::GridMismatch);
    }
    let f = perturb_nform(f_nform, d, mode)?;
    let g = pushforward_nvector(g_nvector, &d.inverse_increment()?)?;
    Ok((f, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::integrate;
    use crate::diffeo::Convention;
    use crate::field::Grid;
    use crate::noise::{build_fourier_basis, BrownianIncrements, Drift, ModeSpec, NoiseBasis, Polarization};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn increment(basis: NoiseBasis, dt: f64, eta: Vec<f64>) -> DiffeoIncrement {
        DiffeoIncrement::with_safety(
            Arc::new(basis),
            BrownianIncrements::fixed(dt, eta).unwrap(),
            Convention::Raw,
            100.0,
        )
        .unwrap()
    }

    fn constant_mode(g: &Grid, amp: &[f64]) -> NoiseBasis {
        let k = vec![0.0; g.dim()];
        build_fourier_basis(g, &[ModeSpec::new(&k, amp, Polarization::Free)]).unwrap()
    }

    #[test]
    fn constant_field_has_zero_0form_increment() {
        let g = Grid::periodic_box(2, 16).unwrap();
        let b = build_fourier_basis(&g, &[ModeSpec::new(&[1.0, 2.0], &[1.0, 1.0], Polarization::Free)])
            .unwrap()
            .with_drift(Drift::Lu)
            .unwrap();
        let d = increment(b, 0.01, vec![0.05]);
        let r = perturb_0form(&ScalarField::constant(&g, 2.0), &d).unwrap();
        assert_eq!(r.drift_part.max_abs(), 0.0);
        assert_eq!(r.noise_parts[0].max_abs(), 0.0);
        assert_eq!(r.realized.max_abs(), 0.0);
    }

    #[test]
    fn zero_form_unit_drift_1d() {
        let l = 2.0;
        let err = |n: usize| {
            let g = Grid::new(&[n], &[l]).unwrap();
            let a = VectorField::constant(&g, &[1.0]).unwrap();
            let b = NoiseBasis::empty(&g).with_drift(Drift::Field(a)).unwrap();
            let d = increment(b, 1e-3, vec![]);
            let k = 2.0 * PI / l;
            let f = ScalarField::from_fn(&g, |x| (k * x[0]).sin());
            let r = perturb_0form(&f, &d).unwrap();
            assert!(r.noise_parts.is_empty());
            let exact = ScalarField::from_fn(&g, |x| k * (k * x[0]).cos());
            (&r.drift_part - &exact).max_abs()
        };
        let (e1, e2) = (err(32), err(64));
        assert!((e1 / e2).log2() > 1.9);
    }

    #[test]
    fn zero_form_constant_mode() {
        let err = |n: usize| {
            let g = Grid::periodic_box(2, n).unwrap();
            let d = increment(constant_mode(&g, &[1.0, 0.0]), 1e-3, vec![0.01]);
            let f = ScalarField::from_fn(&g, |x| x[0].sin());
            let r = perturb_0form(&f, &d).unwrap();
            let drift = ScalarField::from_fn(&g, |x| -0.5 * x[0].sin());
            let noise = ScalarField::from_fn(&g, |x| x[0].cos());
            // stencil symbols: sin(h)/h for D, −sin²(h)/h² for the wide D²
            let h = g.spacing(0);
            let sigma = h.sin() / h;
            assert!((&r.drift_part - &drift.scaled(sigma * sigma)).max_abs() < 1e-13);
            assert!((&r.noise_parts[0] - &noise.scaled(sigma)).max_abs() < 1e-13);
            (
                (&r.drift_part - &drift).max_abs(),
                (&r.noise_parts[0] - &noise).max_abs(),
            )
        };
        let (a1, b1) = err(32);
        let (a2, b2) = err(64);
        assert!((a1 / a2).log2() > 1.9 && (b1 / b2).log2() > 1.9);
    }

    #[test]
    fn nform_constant_inputs_vanish() {
        let g = Grid::periodic_box(2, 16).unwrap();
        let d = increment(constant_mode(&g, &[0.3, 0.7]), 0.01, vec![0.02]);
        for mode in [NFormMode::Pointwise, NFormMode::Flux] {
            let r = perturb_nform(&ScalarField::constant(&g, 1.5), &d, mode).unwrap();
            assert!(r.realized.max_abs() < 1e-15);
            assert!(r.drift_part.max_abs() < 1e-15);
        }
    }

    #[test]
    fn flux_form_integrates_to_zero() {
        let g = Grid::periodic_box(2, 32).unwrap();
        let specs = [
            ModeSpec::new(&[1.0, 2.0], &[1.0, 0.5], Polarization::Free),
            ModeSpec::new(&[3.0, 0.0], &[0.2, 1.0], Polarization::Free),
        ];
        let b = build_fourier_basis(&g, &specs)
            .unwrap()
            .with_drift(Drift::Salt)
            .unwrap();
        let d = increment(b, 1e-3, vec![0.03, -0.02]);
        let f = ScalarField::from_fn(&g, |x| 2.0 + (x[0] + x[1]).sin() * x[1].cos().exp());
        let r = perturb_nform(&f, &d, NFormMode::Flux).unwrap();
        assert!(integrate(&r.realized).abs() < 1e-12 * f.l1_norm());
    }

    #[test]
    fn pointwise_and_flux_agree_to_second_order() {
        let diff = |n: usize| {
            let g = Grid::periodic_box(2, n).unwrap();
            let specs = [ModeSpec::new(&[1.0, 1.0], &[1.0, 0.3], Polarization::Free)];
            let b = build_fourier_basis(&g, &specs).unwrap().with_drift(Drift::Lu).unwrap();
            let d = increment(b, 1e-3, vec![0.02]);
            let f = ScalarField::from_fn(&g, |x| (x[0] - 2.0 * x[1]).cos() + 2.0);
            let p = perturb_nform(&f, &d, NFormMode::Pointwise).unwrap();
            let q = perturb_nform(&f, &d, NFormMode::Flux).unwrap();
            (&p.drift_part - &q.drift_part).max_abs() + (&p.noise_parts[0] - &q.noise_parts[0]).max_abs()
        };
        let (e1, e2) = (diff(32), diff(64));
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    #[test]
    fn volume_multiplier_examples() {
        let g = Grid::periodic_box(2, 16).unwrap();
        let d = increment(constant_mode(&g, &[1.0, -1.0]), 0.01, vec![0.02]);
        let r = perturb_volume_multiplier(&d);
        assert_eq!(r.realized.max_abs(), 0.0);

        let a = VectorField::from_fn(&g, |x, o| {
            o[0] = 0.5 * x[0].sin();
            o[1] = 0.0;
        });
        let b = NoiseBasis::empty(&g).with_drift(Drift::Field(a)).unwrap();
        let d = increment(b, 0.01, vec![]);
        let r = perturb_volume_multiplier(&d);
        let exact = ScalarField::from_fn(&g, |x| 0.5 * x[0].cos());
        assert!((&r.drift_part - &exact).max_abs() < 0.02);
    }

    #[test]
    fn volume_multiplier_constant_divergence() {
        // a periodic field cannot have constant nonzero divergence; use a
        // linear ramp and skip the nodes next to its seam
        let g = Grid::new(&[32, 8], &[1.0, 1.0]).unwrap();
        let c = 0.7;
        let a = VectorField::from_fn(&g, |x, o| {
            o[0] = c * x[0];
            o[1] = 0.0;
        });
        let b = NoiseBasis::empty(&g).with_drift(Drift::Field(a)).unwrap();
        let d = increment(b, 1e-3, vec![]);
        let r = perturb_volume_multiplier(&d);
        for k in 0..g.len() {
            let i = g.multi_index(k)[0];
            if i > 0 && i < 31 {
                assert!((r.drift_part.values()[k] - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_form_examples() {
        let g = Grid::periodic_box(2, 32).unwrap();
        let d = increment(constant_mode(&g, &[1.0, 2.0]), 0.01, vec![0.02]);
        let v = VectorField::constant(&g, &[1.0, -3.0]).unwrap();
        let r = perturb_1form(&v, &d).unwrap();
        assert_eq!(r.realized.max_abs(), 0.0);

        let b = build_fourier_basis(&g, &[ModeSpec::new(&[0.0, 1.0], &[1.0, 0.0], Polarization::Free)]).unwrap();
        let d = increment(b, 0.01, vec![0.02]);
        let v = VectorField::constant(&g, &[1.0, 0.0]).unwrap();
        let r = perturb_1form(&v, &d).unwrap();
        let exact = ScalarField::from_fn(&g, |x| x[1].cos());
        assert!((r.noise_parts[0].component(1) - &exact).max_abs() < 1e-2);
        assert_eq!(r.noise_parts[0].component(0).max_abs(), 0.0);

        let g1 = Grid::new(&[8], &[1.0]).unwrap();
        let d1 = DiffeoIncrement::identity(&g1, 0.1).unwrap();
        assert!(perturb_1form(&VectorField::zeros(&g1), &d1).is_err());
    }

    #[test]
    fn nvector_examples() {
        let g = Grid::periodic_box(2, 32).unwrap();
        let b = build_fourier_basis(&g, &[ModeSpec::new(&[1.0, 0.0], &[0.0, 1.0], Polarization::Solenoidal)]).unwrap();
        let d = increment(b, 0.01, vec![0.02]);
        let r = pushforward_nvector(&ScalarField::constant(&g, 2.0), &d).unwrap();
        assert!(r.noise_parts[0].max_abs() < 1e-15);
        let vm = perturb_volume_multiplier(&d);
        assert!((&r.drift_part - &vm.drift_part.scaled(2.0)).max_abs() < 1e-14);

        let d = increment(constant_mode(&g, &[1.0, 0.5]), 0.01, vec![0.02]);
        let f = ScalarField::from_fn(&g, |x| (x[0] + x[1]).sin());
        let r0 = perturb_0form(&f, &d).unwrap();
        let rn = pushforward_nvector(&f, &d).unwrap();
        assert!((&r0.drift_part - &rn.drift_part).max_abs() < 1e-14);
        assert!((&r0.noise_parts[0] + &rn.noise_parts[0]).max_abs() < 1e-14);
    }

    #[test]
    fn mixed_pair_identity_and_grid_check() {
        let g = Grid::periodic_box(2, 16).unwrap();
        let d = DiffeoIncrement::identity(&g, 0.1).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0].sin() + 2.0);
        let (a, b) = perturb_mixed_pair(&f, &f, &d, NFormMode::Flux).unwrap();
        assert_eq!(a.realized.max_abs(), 0.0);
        assert_eq!(b.realized.max_abs(), 0.0);
        let other = ScalarField::zeros(&Grid::periodic_box(2, 8).unwrap());
        assert!(matches!(
            perturb_mixed_pair(&f, &other, &d, NFormMode::Flux),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn realized_is_the_stated_combination() {
        let g = Grid::periodic_box(2, 16).unwrap();
        let specs = [
            ModeSpec::new(&[1.0, 0.0], &[0.0, 1.0], Polarization::Free),
            ModeSpec::new(&[0.0, 2.0], &[1.0, 0.0], Polarization::Free),
        ];
        let b = build_fourier_basis(&g, &specs).unwrap().with_drift(Drift::Lu).unwrap();
        let d = increment(b, 1e-3, vec![0.01, -0.03]);
        let f = ScalarField::from_fn(&g, |x| (x[0] * x[1]).sin());
        let r = perturb_0form(&f, &d).unwrap();
        let mut expect = ScalarField::zeros(&g);
        expect.axpy(1e-3, &r.drift_part);
        expect.axpy(0.01, &r.noise_parts[0]);
        expect.axpy(-0.03, &r.noise_parts[1]);
        assert_eq!(expect, r.realized);
    }
}
