//! Formula-free transport of tensor fields: interpolate through the realized
//! map and multiply by finite-difference Jacobians.

use crate::calculus::{derivative, InterpolationPlan};
use crate::diffeo::{forward_map, inverse_map, DiffeoIncrement};
use crate::error::{Error, Result};
use crate::field::{ScalarField, TensorClass, VectorField};

/// The field(s) a tensor class carries.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldSet {
    Scalar(ScalarField),
    Vector(VectorField),
    /// An n-form followed by an n-vector.
    Pair(ScalarField, ScalarField),
    /// The volume form carries no data of its own.
    Empty,
}

/// `∂_j T^p = δ_pj + D_j(displacement^p)` at the nodes, indexed `[p][j]`.
fn map_jacobian(d: &DiffeoIncrement) -> Vec<Vec<ScalarField>> {
    let disp = d.displacement();
    let dim = d.grid().dim();
    (0..dim)
        .map(|p| {
            (0..dim)
                .map(|j| {
                    let mut c = derivative(disp.component(p), j).expect("axis in range");
                    if p == j {
                        c.values_mut().iter_mut().for_each(|v| *v += 1.0);
                    }
                    c
                })
                .collect()
        })
        .collect()
}

/// `det ∂T` at the nodes.
pub fn jacobian_determinant(d: &DiffeoIncrement) -> ScalarField {
    let jac = map_jacobian(d);
    let grid = d.grid();
    let at = |p: usize, j: usize, k: usize| jac[p][j].values()[k];
    let values = (0..grid.len())
        .map(|k| match grid.dim() {
            1 => at(0, 0, k),
            2 => at(0, 0, k) * at(1, 1, k) - at(0, 1, k) * at(1, 0, k),
            _ => {
                at(0, 0, k) * (at(1, 1, k) * at(2, 2, k) - at(1, 2, k) * at(2, 1, k))
                    - at(0, 1, k) * (at(1, 0, k) * at(2, 2, k) - at(1, 2, k) * at(2, 0, k))
                    + at(0, 2, k) * (at(1, 0, k) * at(2, 1, k) - at(1, 1, k) * at(2, 0, k))
            }
        })
        .collect();
    ScalarField::from_raw(grid, values)
}

fn forward_plan(d: &DiffeoIncrement) -> InterpolationPlan {
    let grid = d.grid();
    InterpolationPlan::new(grid, &forward_map(d, &grid.nodes()))
}

fn mismatch(class: TensorClass) -> Error {
    Error::Format(format!("fields do not match tensor class {class:?}"))
}

/// Transports `fields` as an object of class `class` through `d`.
///
/// 0-form `f∘T`; n-form `(f∘T)·det∂T`; 1-form `(f^p∘T)·∂_jT^p`;
/// n-vector `(g·det∂T)∘T⁻¹`; volume form `det∂T`;
/// mixed pair `((f∘T)·det∂T, (g∘T)/det∂T)`.
pub fn oracle_remap(class: TensorClass, fields: &FieldSet, d: &DiffeoIncrement) -> Result<FieldSet> {
    let grid = d.grid();
    let check = |f: &ScalarField| {
        if f.grid() == grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    };
    match (class, fields) {
        (TensorClass::ZeroForm, FieldSet::Scalar(f)) => {
            check(f)?;
            Ok(FieldSet::Scalar(forward_plan(d).apply_field(f)?))
        }
        (TensorClass::NForm, FieldSet::Scalar(f)) => {
            check(f)?;
            let pulled = forward_plan(d).apply_field(f)?;
            Ok(FieldSet::Scalar(&pulled * &jacobian_determinant(d)))
        }
        (TensorClass::OneForm, FieldSet::Vector(v)) => {
            check(v.component(0))?;
            let plan = forward_plan(d);
            let jac = map_jacobian(d);
            let pulled: Vec<ScalarField> = v
                .components()
                .iter()
                .map(|c| plan.apply_field(c))
                .collect::<Result<_>>()?;
            let comps = (0..grid.dim())
                .map(|j| {
                    let mut out = ScalarField::zeros(grid);
                    for (p, fp) in pulled.iter().enumerate() {
                        out.axpy(1.0, &(fp * &jac[p][j]));
                    }
                    out
                })
                .collect();
            Ok(FieldSet::Vector(VectorField::from_components(comps)?))
        }
        (TensorClass::NVector, FieldSet::Scalar(g)) => {
            check(g)?;
            let weighted = g * &jacobian_determinant(d);
            let plan = InterpolationPlan::new(grid, &inverse_map(d, &grid.nodes()));
            Ok(FieldSet::Scalar(plan.apply_field(&weighted)?))
        }
        (TensorClass::VolumeForm, FieldSet::Empty) => Ok(FieldSet::Scalar(jacobian_determinant(d))),
        (TensorClass::MixedPair, FieldSet::Pair(f, g)) => {
            check(f)?;
            check(g)?;
            let plan = forward_plan(d);
            let det = jacobian_determinant(d);
            let f_hat = &plan.apply_field(f)? * &det;
            let g_hat = plan.apply_field(g)?.zip_map(&det, |a, b| a / b);
            Ok(FieldSet::Pair(f_hat, g_hat))
        }
        _ => Err(mismatch(class)),
    }
}
