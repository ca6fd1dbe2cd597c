//! Conserved functionals and their per-step drifts.

use std::fmt::Write as _;

use crate::calculus::{curl_2d, curl_3d, integrate};
use crate::diffeo::DiffeoIncrement;
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::models::TswState;
use crate::perturb::{perturb_1form, perturb_nform, NFormMode};

/// A named scalar diagnostic sampled at strictly increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticSeries {
    name: String,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl DiagnosticSeries {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, time: f64, value: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(time > last) {
                return Err(Error::Format(format!(
                    "series {}: time {time} does not follow {last}",
                    self.name
                )));
            }
        }
        self.times.push(time);
        self.values.push(value);
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `time,<name>` header then one row per sample, shortest round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut out = format!("time,{}\n", self.name);
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t:e},{v:e}").expect("writing to a String");
        }
        out
    }
}

pub fn total_integral(f: &ScalarField) -> f64 {
    integrate(f)
}

/// `∫ f gᵐ`.
pub fn product_integral(f: &ScalarField, g: &ScalarField, m: u32) -> Result<f64> {
    f.same_grid(g)?;
    if m == 0 {
        return Ok(integrate(f));
    }
    Ok(integrate(&f.zip_map(g, |a, b| a * b.powi(m as i32))))
}

/// RMS of `curl(Δ₁u) − Δₙ(curl u)`, the defect of `d∘T* = T*∘d` on a planar
/// velocity treated as a 1-form.
pub fn vorticity_commutation(u: &VectorField, d: &DiffeoIncrement) -> Result<f64> {
    if u.dim() != 2 {
        return Err(Error::Dimension {
            op: "vorticity_commutation",
            expected: "2",
            got: u.dim(),
        });
    }
    let du = perturb_1form(u, d)?;
    let lhs = curl_2d(&du.realized)?;
    let rhs = perturb_nform(&curl_2d(u)?, d, NFormMode::Pointwise)?;
    Ok((&lhs - &rhs.realized).rms())
}

/// `∫ u · curl u`.
pub fn helicity(u: &VectorField) -> Result<f64> {
    if u.dim() != 3 {
        return Err(Error::Dimension {
            op: "helicity",
            expected: "3",
            got: u.dim(),
        });
    }
    Ok(integrate(&u.dot(&curl_3d(u)?)))
}

/// `|helicity(u + Δ₁u) − helicity(u)|` for one increment.
pub fn helicity_drift(u: &VectorField, d: &DiffeoIncrement) -> Result<f64> {
    let before = helicity(u)?;
    let mut moved = u.clone();
    moved.axpy(1.0, &perturb_1form(u, d)?.realized);
    Ok((helicity(&moved)? - before).abs())
}

/// `∫ f² g`.
pub fn pairing_integral(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.same_grid(g)?;
    Ok(integrate(&f.zip_map(g, |a, b| a * a * b)))
}

/// Energy, mass and momentum of a thermal shallow-water state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TswInvariants {
    /// `∫ ½(h|u|² + h²Θ)`
    pub energy: f64,
    /// `∫ h`
    pub mass: f64,
    /// `∫ h u`
    pub momentum: [f64; 2],
}

pub fn tsw_invariants(state: &TswState) -> TswInvariants {
    let h = &state.h;
    let u2 = state.u.dot(&state.u);
    let mut e = h * &u2;
    e.axpy(1.0, &(&(h * h) * &state.theta));
    TswInvariants {
        energy: 0.5 * integrate(&e),
        mass: integrate(h),
        momentum: [
            integrate(&(h * state.u.component(0))),
            integrate(&(h * state.u.component(1))),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use std::f64::consts::PI;

    #[test]
    fn series_times_strictly_increase() {
        let mut s = DiagnosticSeries::new("mass");
        s.push(0.0, 1.0).unwrap();
        s.push(0.5, 1.25).unwrap();
        assert!(s.push(0.5, 2.0).is_err());
        assert_eq!(s.to_csv(), "time,mass\n0e0,1e0\n5e-1,1.25e0\n");
    }

    #[test]
    fn product_integral_examples() {
        let g = Grid::periodic_box(2, 16).unwrap();
        let f = ScalarField::from_fn(&g, |x| 1.0 + x[0].sin() * x[1].cos());
        let c = ScalarField::constant(&g, 2.5);
        assert_eq!(product_integral(&f, &c, 0).unwrap(), total_integral(&f));
        let r = product_integral(&f, &c, 1).unwrap();
        assert!((r - 2.5 * total_integral(&f)).abs() < 1e-12);
        assert!(product_integral(&f, &ScalarField::zeros(&Grid::periodic_box(2, 8).unwrap()), 1).is_err());
    }

    #[test]
    fn pairing_examples() {
        let g = Grid::periodic_box(2, 16).unwrap();
        let f = ScalarField::from_fn(&g, |x| 1.0 + x[0].sin());
        let one = ScalarField::constant(&g, 1.0);
        let sq = integrate(&(&f * &f));
        assert!((pairing_integral(&f, &one).unwrap() - sq).abs() < 1e-12);
        let c = ScalarField::constant(&g, 3.0);
        let gg = ScalarField::from_fn(&g, |x| 2.0 + x[1].cos());
        assert!((pairing_integral(&c, &gg).unwrap() - 9.0 * integrate(&gg)).abs() < 1e-11);
    }

    #[test]
    fn helicity_of_constant_and_abc_fields() {
        let g = Grid::periodic_box(3, 8).unwrap();
        let c = VectorField::constant(&g, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(helicity(&c).unwrap(), 0.0);
        let (a, b, cc) = (1.0, 0.7, 0.4);
        // Beltrami field: curl u = u, so the helicity is ∫|u|² = (A²+B²+C²)(2π)³
        let exact = (a * a + b * b + cc * cc) * (2.0 * PI).powi(3);
        let err = |n: usize| {
            let g = Grid::periodic_box(3, n).unwrap();
            let u = VectorField::from_fn(&g, |x, o| {
                o[0] = a * x[2].sin() + cc * x[1].cos();
                o[1] = b * x[0].sin() + a * x[2].cos();
                o[2] = cc * x[1].sin() + b * x[0].cos();
            });
            // the centered curl maps a unit-wavenumber mode to sin(h)/h times itself
            let h = g.spacing(0);
            let discrete = exact * h.sin() / h;
            assert!((helicity(&u).unwrap() - discrete).abs() < 1e-12 * exact);
            (helicity(&u).unwrap() - exact).abs() / exact
        };
        let (e1, e2) = (err(16), err(32));
        assert!((e1 / e2).log2() > 1.9);
        let g2 = Grid::periodic_box(2, 8).unwrap();
        assert!(helicity(&VectorField::zeros(&g2)).is_err());
    }

    #[test]
    fn vorticity_commutation_requires_2d() {
        let g = Grid::periodic_box(3, 6).unwrap();
        let d = DiffeoIncrement::identity(&g, 0.1).unwrap();
        assert!(vorticity_commutation(&VectorField::zeros(&g), &d).is_err());
        let g = Grid::periodic_box(2, 16).unwrap();
        let d = DiffeoIncrement::identity(&g, 0.1).unwrap();
        let u = VectorField::from_fn(&g, |x, o| {
            o[0] = x[1].sin();
            o[1] = x[0].cos();
        });
        assert_eq!(vorticity_commutation(&u, &d).unwrap(), 0.0);
    }

    #[test]
    fn tsw_invariants_rest_state() {
        let g = Grid::new(&[8, 8], &[1.0, 1.0]).unwrap();
        let s = TswState {
            h: ScalarField::constant(&g, 1.0),
            theta: ScalarField::constant(&g, 3.0),
            u: VectorField::zeros(&g),
        };
        let inv = tsw_invariants(&s);
        assert_eq!(inv.mass, 1.0);
        assert_eq!(inv.energy, 1.5);
        assert_eq!(inv.momentum, [0.0, 0.0]);
        let scaled = TswState {
            h: s.h.scaled(2.5),
            ..s.clone()
        };
        assert_eq!(tsw_invariants(&scaled).mass, 2.5 * inv.mass);
    }
}
