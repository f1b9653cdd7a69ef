//! Periodic n-dimensional grids (n ≥ 3), scalar fields on them, flat
//! differential operators, and quadrature.
//!
//! The reference chart is the flat n-torus: uniform nodes, periodic in
//! every axis, values stored row-major in axis order. Differentiation is
//! spectral by default (exact for band-limited data); 4th-order centered
//! finite differences are available as an independent cross-check.

pub mod fd;
pub mod io;
pub mod spectral;

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::Expr;
use crate::util::{pairwise_sum, pairwise_sum_by};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("dimension below 3 (got {0})")]
    DimensionBelow3(usize),
    #[error("axis {axis} has {nodes} nodes; at least 8 required")]
    TooFewNodes { axis: usize, nodes: usize },
    #[error("axis {axis} has nonpositive period {period}")]
    NonpositivePeriod { axis: usize, period: f64 },
    #[error("expected {expected} nodes-per-axis entries, got {got}")]
    AxisCountMismatch { expected: usize, got: usize },
    #[error("value count {got} does not match grid size {expected}")]
    ValueCountMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {0}")]
    NonFiniteValue(usize),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("nonpositive quadrature weight at node {0}")]
    NonpositiveWeight(usize),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad field container: {0}")]
    BadContainer(String),
}

/// Validated description of a periodic uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    n: usize,
    nodes: Vec<usize>,
    periods: Vec<f64>,
}

/// Shared handle to a grid; fields on the same grid share one allocation.
pub type Grid = Arc<GridSpec>;

impl GridSpec {
    pub fn new(n: usize, nodes: Vec<usize>, periods: Vec<f64>) -> Result<GridSpec, GridError> {
        if n < 3 {
            return Err(GridError::DimensionBelow3(n));
        }
        if nodes.len() != n {
            return Err(GridError::AxisCountMismatch { expected: n, got: nodes.len() });
        }
        if periods.len() != n {
            return Err(GridError::AxisCountMismatch { expected: n, got: periods.len() });
        }
        for (axis, &m) in nodes.iter().enumerate() {
            if m < 8 {
                return Err(GridError::TooFewNodes { axis, nodes: m });
            }
        }
        for (axis, &period) in periods.iter().enumerate() {
            if !(period > 0.0) || !period.is_finite() {
                return Err(GridError::NonpositivePeriod { axis, period });
            }
        }
        Ok(GridSpec { n, nodes, periods })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    /// Total number of grid nodes.
    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.periods[axis] / self.nodes[axis] as f64
    }

    /// Volume of one grid cell, h₁·h₂·…·hₙ.
    pub fn cell_volume(&self) -> f64 {
        (0..self.n).map(|a| self.spacing(a)).product()
    }

    /// Decompose a flat row-major index into per-axis indices.
    pub fn unravel(&self, mut index: usize, out: &mut [usize]) {
        for axis in (0..self.n).rev() {
            out[axis] = index % self.nodes[axis];
            index /= self.nodes[axis];
        }
    }

    /// Coordinates of the node with the given per-axis indices.
    pub fn coords_of(&self, idx: &[usize], out: &mut [f64]) {
        for axis in 0..self.n {
            out[axis] = idx[axis] as f64 * self.spacing(axis);
        }
    }

    /// Largest eigenvalue magnitude of the spectral flat Laplacian,
    /// Σ_j (π m_j / L_j)².
    pub fn laplacian_spectral_radius(&self) -> f64 {
        (0..self.n)
            .map(|a| {
                let k = (self.nodes[a] / 2) as f64;
                let kappa = 2.0 * std::f64::consts::PI * k / self.periods[a];
                kappa * kappa
            })
            .sum()
    }
}

/// Construct a validated grid handle.
pub fn make_grid(n: usize, nodes: Vec<usize>, periods: Vec<f64>) -> Result<Grid, GridError> {
    Ok(Arc::new(GridSpec::new(n, nodes, periods)?))
}

/// Values of a real function at the grid nodes, row-major in axis order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    /// Validating constructor: value count must match the grid and all
    /// values must be finite.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<ScalarField, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::ValueCountMismatch { expected: grid.len(), got: values.len() });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(GridError::NonFiniteValue(i));
            }
        }
        Ok(ScalarField { grid, values })
    }

    /// Internal constructor for operator outputs. Finiteness is enforced
    /// at the domain boundaries (metric construction, flow guards), not
    /// on every intermediate.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> ScalarField {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn constant(grid: &Grid, value: f64) -> ScalarField {
        ScalarField { grid: grid.clone(), values: vec![value; grid.len()] }
    }

    /// Sample a function of the node coordinates.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        let n = grid.n();
        let mut idx = vec![0usize; n];
        let mut coords = vec![0.0f64; n];
        let mut values = Vec::with_capacity(grid.len());
        for flat in 0..grid.len() {
            grid.unravel(flat, &mut idx);
            grid.coords_of(&idx, &mut coords);
            values.push(f(&coords));
        }
        ScalarField { grid: grid.clone(), values }
    }

    /// Evaluate a parsed expression at every node.
    pub fn from_expr(grid: &Grid, expr: &Expr) -> ScalarField {
        ScalarField::from_fn(grid, |x| expr.eval(x))
    }

    /// Zero-mean random band-limited field with sup-norm exactly
    /// `amplitude`, deterministic in `seed`.
    pub fn random_smooth(grid: &Grid, seed: u64, max_mode: usize, amplitude: f64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.n();
        let k_range = max_mode as i64;
        // Half-space of nonzero integer modes; cos with a random phase
        // covers the conjugate partner.
        let mut modes: Vec<(Vec<i64>, f64, f64)> = Vec::new();
        let per_axis = 2 * k_range + 1;
        let total_modes: usize = (per_axis as usize).pow(n as u32);
        for flat in 0..total_modes {
            let mut rem = flat;
            let mut k = vec![0i64; n];
            for axis in (0..n).rev() {
                k[axis] = (rem % per_axis as usize) as i64 - k_range;
                rem /= per_axis as usize;
            }
            // keep one of each ±k pair, skip 0
            let first_nonzero = k.iter().copied().find(|&v| v != 0);
            match first_nonzero {
                None => continue,
                Some(v) if v < 0 => continue,
                _ => {}
            }
            let coeff: f64 = rng.gen_range(-1.0..1.0);
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            modes.push((k, coeff, phase));
        }
        let mut field = ScalarField::from_fn(grid, |x| {
            let mut acc = 0.0;
            for (k, coeff, phase) in &modes {
                let mut arg = *phase;
                for axis in 0..n {
                    arg += std::f64::consts::TAU * k[axis] as f64 * x[axis] / grid.periods()[axis];
                }
                acc += coeff * arg.cos();
            }
            acc
        });
        let sup = field.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if sup > 0.0 {
            let scale = amplitude / sup;
            for v in &mut field.values {
                *v *= scale;
            }
        }
        field
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Index of the minimising node.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_raw(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        let values =
            self.values.iter().zip(other.values.iter()).map(|(&a, &b)| f(a, b)).collect();
        ScalarField::from_raw(self.grid.clone(), values)
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    pub fn powf(&self, e: f64) -> ScalarField {
        self.map(|v| crate::util::pow_fast(v, e))
    }
}

/// Distances between two fields measured against a reference volume
/// density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceMetrics {
    pub sup: f64,
    pub l1: f64,
    pub lp: f64,
    pub p: f64,
}

/// Rectangle-rule quadrature Σ f·w·h^n. Exact for band-limited periodic
/// integrands; the reduction order is fixed for bit-stable results.
pub fn integrate(f: &ScalarField, weights: &ScalarField) -> Result<f64, GridError> {
    if f.grid != weights.grid {
        return Err(GridError::GridMismatch);
    }
    for (i, w) in weights.values.iter().enumerate() {
        if !(*w > 0.0) {
            return Err(GridError::NonpositiveWeight(i));
        }
    }
    let cell = f.grid.cell_volume();
    let fv = &f.values;
    let wv = &weights.values;
    Ok(cell * pairwise_sum_by(fv.len(), &|i| fv[i] * wv[i]))
}

/// Quadrature without a weight check, for integrands that are not
/// measures (internal use).
pub(crate) fn integrate_unweighted(f: &ScalarField) -> f64 {
    f.grid.cell_volume() * pairwise_sum(&f.values)
}

/// sup, L¹ and L^p distances of `f − g` against the given volume weights.
pub fn field_metrics(
    f: &ScalarField,
    g: &ScalarField,
    weights: &ScalarField,
    p: f64,
) -> Result<DistanceMetrics, GridError> {
    if f.grid != g.grid || f.grid != weights.grid {
        return Err(GridError::GridMismatch);
    }
    let cell = f.grid.cell_volume();
    let mut sup = 0.0f64;
    for (a, b) in f.values.iter().zip(g.values.iter()) {
        sup = sup.max((a - b).abs());
    }
    let l1 = cell
        * pairwise_sum_by(f.len(), &|i| (f.values[i] - g.values[i]).abs() * weights.values[i]);
    let lp = (cell
        * pairwise_sum_by(f.len(), &|i| {
            (f.values[i] - g.values[i]).abs().powf(p) * weights.values[i]
        }))
    .powf(1.0 / p);
    Ok(DistanceMetrics { sup, l1, lp, p })
}

pub use fd::{gradient_flat_fd, laplacian_flat_fd};
pub use spectral::{
    dealias_two_thirds, grad_inner_flat, grad_squared_flat, gradient_flat, laplacian_flat,
    spectral_upsample,
};
