//! Periodic lattices and the sampled fields that live on them.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Uniform periodic lattice in 1, 2 or 3 dimensions.
///
/// Node `k` on axis `p` sits at `k * spacing(p)`, so coordinates cover
/// `[0, extent_p)`. Values are stored row-major: the last axis varies fastest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    points: [usize; 3],
    extent: [f64; 3],
}

impl Grid {
    pub fn new(points: &[usize], extent: &[f64]) -> Result<Self> {
        let dim = points.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        if extent.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "{} extents given for {dim} axes",
                extent.len()
            )));
        }
        let mut p = [1usize; 3];
        let mut e = [1.0f64; 3];
        for axis in 0..dim {
            if points[axis] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} needs at least 3 points, got {}",
                    points[axis]
                )));
            }
            if !(extent[axis].is_finite() && extent[axis] > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} extent must be positive, got {}",
                    extent[axis]
                )));
            }
            p[axis] = points[axis];
            e[axis] = extent[axis];
        }
        Ok(Self {
            dim,
            points: p,
            extent: e,
        })
    }

    /// Square/cubic grid of `n` points per axis on `[0, 2π)^dim`.
    pub fn periodic_box(dim: usize, n: usize) -> Result<Self> {
        let two_pi = 2.0 * std::f64::consts::PI;
        Self::new(&vec![n; dim], &vec![two_pi; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[usize] {
        &self.points[..self.dim]
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.points[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|p| self.spacing(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.points[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|p| self.spacing(p)).product()
    }

    pub fn volume(&self) -> f64 {
        self.extent[..self.dim].iter().product()
    }

    /// Distance in flat storage between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.points[axis + 1..self.dim].iter().product()
    }

    pub fn check_axis(&self, axis: usize) -> Result<()> {
        if axis < self.dim {
            Ok(())
        } else {
            Err(Error::AxisOutOfRange { axis, dim: self.dim })
        }
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            idx[axis] = rem % self.points[axis];
            rem /= self.points[axis];
        }
        idx
    }

    /// Flat index of a (possibly out-of-range) multi-index, wrapped periodically.
    pub fn flat_index_wrapped(&self, idx: &[i64]) -> usize {
        let mut flat = 0usize;
        for axis in 0..self.dim {
            let n = self.points[axis] as i64;
            flat = flat * self.points[axis] + idx[axis].rem_euclid(n) as usize;
        }
        flat
    }

    pub fn coord(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = idx[axis] as f64 * self.spacing(axis);
        }
        x
    }

    /// Coordinates of every node, in storage order.
    pub fn nodes(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|k| self.coord(k)).collect()
    }

    /// Wraps a point into the fundamental cell `[0, extent)`.
    pub fn wrap(&self, x: [f64; 3]) -> [f64; 3] {
        let mut out = x;
        for axis in 0..self.dim {
            let l = self.extent[axis];
            let w = x[axis].rem_euclid(l);
            // rem_euclid can round up to exactly l
            out[axis] = if w >= l { 0.0 } else { w };
        }
        out
    }

    /// Minimum-image separation `a - b` on the torus.
    pub fn periodic_delta(&self, a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        let mut d = [0.0; 3];
        for axis in 0..self.dim {
            let l = self.extent[axis];
            let mut v = a[axis] - b[axis];
            v -= l * (v / l).round();
            d[axis] = v;
        }
        d
    }

    /// Integer wavenumber `n` corresponding to the physical wavevector
    /// component `k = 2πn/extent`, if there is one.
    pub fn wavenumber(&self, axis: usize, k: f64) -> Option<i64> {
        let n = k * self.extent[axis] / (2.0 * std::f64::consts::PI);
        let r = n.round();
        ((n - r).abs() <= 1e-9 * r.abs().max(1.0)).then_some(r as i64)
    }
}

/// Scalar samples on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: *grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values"));
        }
        Ok(Self { grid: *grid, values })
    }

    /// Samples `f(x)` at every node; `x` has `grid.dim()` entries.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let dim = grid.dim();
        let values = (0..grid.len())
            .map(|k| {
                let x = grid.coord(k);
                f(&x[..dim])
            })
            .collect();
        Self { grid: *grid, values }
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid: *grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Self::from_raw(
            &self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &ScalarField) {
        assert_eq!(self.grid, x.grid, "fields live on different grids");
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s += alpha * v;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Root mean square over nodes.
    pub fn rms(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    /// Discrete L1 norm, `Σ|f| · cell volume`.
    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_volume()
    }

    /// Discrete L2 norm, `sqrt(Σ f² · cell volume)`.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

/// Pointwise product.
impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.scaled(rhs)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.map(|v| -v)
    }
}

impl AddAssign<&ScalarField> for ScalarField {
    fn add_assign(&mut self, rhs: &ScalarField) {
        self.axpy(1.0, rhs);
    }
}

/// `dim` scalar components sharing one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            components: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    pub fn constant(grid: &Grid, c: &[f64]) -> Result<Self> {
        if c.len() != grid.dim() {
            return Err(Error::Dimension {
                op: "VectorField::constant",
                expected: "one value per axis",
                got: c.len(),
            });
        }
        Ok(Self {
            components: c.iter().map(|&v| ScalarField::constant(grid, v)).collect(),
        })
    }

    pub fn from_components(components: Vec<ScalarField>) -> Result<Self> {
        let first = components.first().ok_or(Error::Dimension {
            op: "VectorField::from_components",
            expected: "at least one component",
            got: 0,
        })?;
        let grid = *first.grid();
        if components.len() != grid.dim() {
            return Err(Error::Dimension {
                op: "VectorField::from_components",
                expected: "one component per axis",
                got: components.len(),
            });
        }
        if components.iter().any(|c| *c.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { components })
    }

    /// Samples a vector-valued function; `f` writes `dim` components.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let dim = grid.dim();
        let mut comps = vec![Vec::with_capacity(grid.len()); dim];
        let mut out = [0.0; 3];
        for k in 0..grid.len() {
            let x = grid.coord(k);
            f(&x[..dim], &mut out[..dim]);
            for (c, &v) in comps.iter_mut().zip(&out[..dim]) {
                c.push(v);
            }
        }
        Self {
            components: comps.into_iter().map(|v| ScalarField::from_raw(grid, v)).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, p: usize) -> &ScalarField {
        &self.components[p]
    }

    pub fn component_mut(&mut self, p: usize) -> &mut ScalarField {
        &mut self.components[p]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [ScalarField] {
        &mut self.components
    }

    pub fn into_components(self) -> Vec<ScalarField> {
        self.components
    }

    pub fn axpy(&mut self, alpha: f64, x: &VectorField) {
        for (c, xc) in self.components.iter_mut().zip(&x.components) {
            c.axpy(alpha, xc);
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            components: self.components.iter().map(|c| c.scaled(alpha)).collect(),
        }
    }

    /// Pointwise `Σ_p u^p v^p`.
    pub fn dot(&self, other: &VectorField) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid());
        for (a, b) in self.components.iter().zip(&other.components) {
            for ((o, &x), &y) in out.values_mut().iter_mut().zip(a.values()).zip(b.values()) {
                *o += x * y;
            }
        }
        out
    }

    /// Pointwise Euclidean length.
    pub fn magnitude(&self) -> ScalarField {
        self.dot(self).map(f64::sqrt)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitude().max()
    }

    /// RMS over nodes of the pointwise Euclidean length.
    pub fn rms(&self) -> f64 {
        self.dot(self).mean().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }
}

impl Add for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: &VectorField) -> VectorField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

/// Which tensor object a field stands for when it is transported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TensorClass {
    /// Function, pulled back by composition.
    ZeroForm,
    /// Covector `f^j dx^j`.
    OneForm,
    /// Density `f dx¹∧…∧dxⁿ`.
    NForm,
    /// Contravariant density `g ∂₁∧…∧∂ₙ`.
    NVector,
    /// The bare volume form `dx¹∧…∧dxⁿ`.
    VolumeForm,
    /// An n-form paired with an n-vector; the n-vector is pushed forward by the inverse map.
    MixedPair,
}

/// Fields that can be combined linearly; lets increments be generic over
/// scalar and vector carriers.
pub trait LinearField: Clone {
    fn zeros_like(&self) -> Self;
    fn axpy(&mut self, alpha: f64, x: &Self);
}

impl LinearField for ScalarField {
    fn zeros_like(&self) -> Self {
        ScalarField::zeros(self.grid())
    }
    fn axpy(&mut self, alpha: f64, x: &Self) {
        ScalarField::axpy(self, alpha, x);
    }
}

impl LinearField for VectorField {
    fn zeros_like(&self) -> Self {
        VectorField::zeros(self.grid())
    }
    fn axpy(&mut self, alpha: f64, x: &Self) {
        VectorField::axpy(self, alpha, x);
    }
}
