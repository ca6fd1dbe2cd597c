//! Centered finite differences, quadrature and Catmull-Rom interpolation on
//! periodic grids.

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};

/// Flat index of the neighbour `offset` nodes away along `axis`, wrapped.
#[inline]
fn neighbour(grid: &Grid, flat: usize, axis: usize, offset: i64) -> usize {
    let n = grid.points()[axis];
    let stride = grid.stride(axis);
    let i = (flat / stride) % n;
    let j = (i as i64 + offset).rem_euclid(n as i64) as usize;
    flat + j * stride - i * stride
}

/// Applies `out[k] = Σ w · f[k + off·e_axis]` over a 1D stencil.
fn stencil(f: &ScalarField, axis: usize, taps: &[(i64, f64)]) -> ScalarField {
    let grid = *f.grid();
    let v = f.values();
    let n = grid.points()[axis];
    let stride = grid.stride(axis);
    let mut out = vec![0.0; v.len()];
    for (k, o) in out.iter_mut().enumerate() {
        let i = (k / stride) % n;
        let base = k - i * stride;
        let mut acc = 0.0;
        for &(off, w) in taps {
            let j = (i as i64 + off).rem_euclid(n as i64) as usize;
            acc += w * v[base + j * stride];
        }
        *o = acc;
    }
    ScalarField::from_raw(&grid, out)
}

/// Second-order centered difference `(f[i+1] − f[i−1]) / 2h` along `axis`.
pub fn derivative(f: &ScalarField, axis: usize) -> Result<ScalarField> {
    let grid = f.grid();
    grid.check_axis(axis)?;
    let inv = 1.0 / (2.0 * grid.spacing(axis));
    Ok(stencil(f, axis, &[(1, inv), (-1, -inv)]))
}

/// `D_p D_q f`, the composition of two centered differences.
///
/// The mixed case is evaluated with one symmetric four-point stencil so that
/// swapping the axes gives bit-identical output.
pub fn second_derivative(f: &ScalarField, axis_p: usize, axis_q: usize) -> Result<ScalarField> {
    let grid = *f.grid();
    grid.check_axis(axis_p)?;
    grid.check_axis(axis_q)?;
    if axis_p == axis_q {
        let h = grid.spacing(axis_p);
        let w = 1.0 / (4.0 * h * h);
        return Ok(stencil(f, axis_p, &[(2, w), (0, -2.0 * w), (-2, w)]));
    }
    let (p, q) = (axis_p.min(axis_q), axis_p.max(axis_q));
    let w = 1.0 / (4.0 * grid.spacing(p) * grid.spacing(q));
    let v = f.values();
    let out = (0..v.len())
        .map(|k| {
            let kp = neighbour(&grid, k, p, 1);
            let km = neighbour(&grid, k, p, -1);
            let pp = v[neighbour(&grid, kp, q, 1)];
            let pm = v[neighbour(&grid, kp, q, -1)];
            let mp = v[neighbour(&grid, km, q, 1)];
            let mm = v[neighbour(&grid, km, q, -1)];
            w * ((pp - pm) - (mp - mm))
        })
        .collect();
    Ok(ScalarField::from_raw(&grid, out))
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Rectangle-rule integral over the periodic cell, `mean(f) × volume`.
pub fn integrate(f: &ScalarField) -> f64 {
    let grid = f.grid();
    compensated_sum(f.values().iter().copied()) / grid.len() as f64 * grid.volume()
}

pub fn gradient(f: &ScalarField) -> VectorField {
    let comps = (0..f.grid().dim())
        .map(|p| derivative(f, p).expect("axis in range"))
        .collect();
    VectorField::from_components(comps).expect("gradient components share the grid")
}

/// `Σ_p D_p v^p`.
pub fn divergence(v: &VectorField) -> ScalarField {
    let mut out = ScalarField::zeros(v.grid());
    for p in 0..v.dim() {
        out.axpy(1.0, &derivative(v.component(p), p).expect("axis in range"));
    }
    out
}

/// `Σ_p D_p D_p f`.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(f.grid());
    for p in 0..f.grid().dim() {
        out.axpy(1.0, &second_derivative(f, p, p).expect("axis in range"));
    }
    out
}

/// Curl of a planar or spatial vector field.
#[derive(Clone, Debug, PartialEq)]
pub enum Curl {
    /// `D_x v − D_y u` in 2D.
    Scalar(ScalarField),
    /// The 3D curl vector.
    Vector(VectorField),
}

pub fn curl(v: &VectorField) -> Result<Curl> {
    match v.dim() {
        2 => Ok(Curl::Scalar(curl_2d(v)?)),
        3 => Ok(Curl::Vector(curl_3d(v)?)),
        d => Err(Error::Dimension {
            op: "curl",
            expected: "2 or 3",
            got: d,
        }),
    }
}

pub fn curl_2d(v: &VectorField) -> Result<ScalarField> {
    if v.dim() != 2 {
        return Err(Error::Dimension {
            op: "curl_2d",
            expected: "2",
            got: v.dim(),
        });
    }
    let dvx = derivative(v.component(1), 0)?;
    let duy = derivative(v.component(0), 1)?;
    Ok(&dvx - &duy)
}

pub fn curl_3d(v: &VectorField) -> Result<VectorField> {
    if v.dim() != 3 {
        return Err(Error::Dimension {
            op: "curl_3d",
            expected: "3",
            got: v.dim(),
        });
    }
    let d = |c: usize, axis: usize| derivative(v.component(c), axis);
    let cx = &d(2, 1)? - &d(1, 2)?;
    let cy = &d(0, 2)? - &d(2, 0)?;
    let cz = &d(1, 0)? - &d(0, 1)?;
    VectorField::from_components(vec![cx, cy, cz])
}

/// Pointwise `u · v`.
pub fn dot(u: &VectorField, v: &VectorField) -> Result<ScalarField> {
    if u.grid() != v.grid() {
        return Err(Error::GridMismatch);
    }
    if u.dim() != v.dim() {
        return Err(Error::Dimension {
            op: "dot",
            expected: "equal component counts",
            got: v.dim(),
        });
    }
    Ok(u.dot(v))
}

/// Catmull-Rom weights for the nodes at offsets −1, 0, 1, 2 and fractional
/// position `t ∈ [0, 1)`.
#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Precomputed tensor-product Catmull-Rom stencils for a fixed point set.
///
/// Reusing one plan across several fields evaluated at the same points avoids
/// recomputing indices and weights.
#[derive(Clone, Debug)]
pub struct InterpolationPlan {
    grid: Grid,
    taps: usize,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl InterpolationPlan {
    pub fn new(grid: &Grid, points: &[[f64; 3]]) -> Self {
        let dim = grid.dim();
        let taps = 4usize.pow(dim as u32);
        let mut indices = Vec::with_capacity(points.len() * taps);
        let mut weights = Vec::with_capacity(points.len() * taps);
        let mut base = [0i64; 3];
        let mut w = [[0.0f64; 4]; 3];
        for x in points {
            for axis in 0..dim {
                let s = x[axis] / grid.spacing(axis);
                let mut i = s.floor();
                let mut t = s - i;
                // snap onto a node when s is a rounded integer
                let r = s.round();
                if (s - r).abs() <= 4.0 * f64::EPSILON * r.abs().max(1.0) {
                    i = r;
                    t = 0.0;
                }
                base[axis] = i as i64;
                w[axis] = catmull_rom(t);
            }
            for tap in 0..taps {
                let mut idx = [0i64; 3];
                let mut weight = 1.0;
                let mut rem = tap;
                for axis in (0..dim).rev() {
                    let o = rem % 4;
                    rem /= 4;
                    idx[axis] = base[axis] + o as i64 - 1;
                    weight *= w[axis][o];
                }
                indices.push(grid.flat_index_wrapped(&idx[..dim]));
                weights.push(weight);
            }
        }
        Self {
            grid: *grid,
            taps,
            indices,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len() / self.taps
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn apply(&self, f: &ScalarField) -> Result<Vec<f64>> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let v = f.values();
        Ok(self
            .indices
            .chunks_exact(self.taps)
            .zip(self.weights.chunks_exact(self.taps))
            .map(|(idx, w)| {
                // zero-weight taps are skipped so node samples are exact
                idx.iter()
                    .zip(w)
                    .filter(|(_, &w)| w != 0.0)
                    .map(|(&k, &w)| w * v[k])
                    .sum()
            })
            .collect())
    }

    /// Applies the plan to a field sampled on the same grid, returning a field
    /// when the plan has one point per node.
    pub fn apply_field(&self, f: &ScalarField) -> Result<ScalarField> {
        let values = self.apply(f)?;
        ScalarField::from_values(f.grid(), values)
    }
}

/// Catmull-Rom interpolation of `f` at arbitrary points, wrapped periodically.
///
/// Only the first `dim` coordinates of each point are read.
pub fn sample_at(f: &ScalarField, points: &[[f64; 3]]) -> Vec<f64> {
    InterpolationPlan::new(f.grid(), points)
        .apply(f)
        .expect("plan built on the field's own grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid2(n: usize) -> Grid {
        Grid::periodic_box(2, n).unwrap()
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let g = Grid::new(&[7, 5, 6], &[1.0, 2.0, 3.0]).unwrap();
        let f = ScalarField::constant(&g, 3.25);
        for p in 0..3 {
            assert_eq!(derivative(&f, p).unwrap().max_abs(), 0.0);
            for q in 0..3 {
                assert_eq!(second_derivative(&f, p, q).unwrap().max_abs(), 0.0);
            }
        }
    }

    #[test]
    fn axis_out_of_range() {
        let g = grid2(8);
        let f = ScalarField::zeros(&g);
        assert!(matches!(
            derivative(&f, 2),
            Err(Error::AxisOutOfRange { axis: 2, dim: 2 })
        ));
        assert!(second_derivative(&f, 0, 5).is_err());
    }

    #[test]
    fn sine_derivative_second_order() {
        let l = 3.0;
        let err = |n: usize| {
            let g = Grid::new(&[n], &[l]).unwrap();
            let k = 2.0 * PI / l;
            let f = ScalarField::from_fn(&g, |x| (k * x[0]).sin());
            let exact = ScalarField::from_fn(&g, |x| k * (k * x[0]).cos());
            let exact2 = ScalarField::from_fn(&g, |x| -k * k * (k * x[0]).sin());
            (
                (&derivative(&f, 0).unwrap() - &exact).max_abs(),
                (&second_derivative(&f, 0, 0).unwrap() - &exact2).max_abs(),
            )
        };
        let (a1, b1) = err(32);
        let (a2, b2) = err(64);
        assert!((a1 / a2).log2() > 1.9 && (a1 / a2).log2() < 2.1);
        assert!((b1 / b2).log2() > 1.9 && (b1 / b2).log2() < 2.1);
    }

    #[test]
    fn mixed_second_derivative_is_symmetric() {
        let g = Grid::new(&[9, 8, 7], &[1.0, 1.5, 2.0]).unwrap();
        let f = ScalarField::from_fn(&g, |x| (x[0] * 3.1).sin() * (x[1] + 0.3 * x[2]).cos() + x[2]);
        for p in 0..3 {
            for q in 0..3 {
                assert_eq!(
                    second_derivative(&f, p, q).unwrap(),
                    second_derivative(&f, q, p).unwrap()
                );
            }
        }
    }

    #[test]
    fn mixed_second_derivative_is_composition() {
        let g = grid2(16);
        let f = ScalarField::from_fn(&g, |x| (x[0] + 2.0 * x[1]).sin() + (3.0 * x[0]).cos() * x[1].sin());
        let composed = derivative(&derivative(&f, 1).unwrap(), 0).unwrap();
        assert!((&composed - &second_derivative(&f, 0, 1).unwrap()).max_abs() < 1e-13);
        let composed = derivative(&derivative(&f, 0).unwrap(), 0).unwrap();
        assert!((&composed - &second_derivative(&f, 0, 0).unwrap()).max_abs() < 1e-13);
    }

    #[test]
    fn integrate_examples() {
        for n in [3, 7, 10, 64] {
            let g = Grid::new(&[n, n], &[1.0, 1.0]).unwrap();
            assert_eq!(integrate(&ScalarField::constant(&g, 1.0)), 1.0);
        }
        let g = Grid::new(&[50], &[2.5]).unwrap();
        let f = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0] / 2.5).sin());
        assert!(integrate(&f).abs() < 1e-15);
    }

    #[test]
    fn curl_examples() {
        let g = grid2(32);
        let c = VectorField::constant(&g, &[1.0, -2.0]).unwrap();
        assert_eq!(divergence(&c).max_abs(), 0.0);
        assert_eq!(curl_2d(&c).unwrap().max_abs(), 0.0);
        let err = |n: usize| {
            let g = grid2(n);
            let v = VectorField::from_fn(&g, |x, o| {
                o[0] = -x[1].sin();
                o[1] = x[0].sin();
            });
            let exact = ScalarField::from_fn(&g, |x| x[0].cos() + x[1].cos());
            let h = g.spacing(0);
            let symbol = ScalarField::from_fn(&g, |x| (h.sin() / h) * (x[0].cos() + x[1].cos()));
            (
                (&curl_2d(&v).unwrap() - &exact).max_abs(),
                (&curl_2d(&v).unwrap() - &symbol).max_abs(),
            )
        };
        let ((e1, s1), (e2, s2)) = (err(32), err(64));
        // the stencil's Fourier symbol is sin(kh)/h, so the error is exactly (1 − sin h/h)
        assert!(s1 < 1e-13 && s2 < 1e-13);
        assert!((e1 / e2).log2() > 1.9);
        let g1 = Grid::new(&[8], &[1.0]).unwrap();
        assert!(matches!(
            curl(&VectorField::zeros(&g1)),
            Err(Error::Dimension { got: 1, .. })
        ));
    }

    #[test]
    fn catmull_rom_weights_partition_unity() {
        for t in [0.0, 0.1, 0.5, 0.77, 0.999] {
            let w = catmull_rom(t);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            // reproduces linear functions
            let lin: f64 = w.iter().enumerate().map(|(i, w)| w * (i as f64 - 1.0)).sum();
            assert!((lin - t).abs() < 1e-15);
        }
    }

    #[test]
    fn sample_reproduces_nodes_and_constants() {
        let g = Grid::new(&[10, 6], &[1.3, 0.7]).unwrap();
        let f = ScalarField::from_fn(&g, |x| (x[0] * 5.0).sin() + x[1] * x[1]);
        let nodes = g.nodes();
        assert_eq!(sample_at(&f, &nodes), f.values());
        let c = ScalarField::constant(&g, -4.5);
        let pts = [[0.123, 5.0, 0.0], [-3.3, 0.01, 0.0], [1.29, 0.69, 0.0]];
        for v in sample_at(&c, &pts) {
            assert!((v + 4.5).abs() < 1e-14);
        }
    }
}
