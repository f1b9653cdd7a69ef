//! Conformal class machinery over a background geometry g₀.
//!
//! A conformal metric is g = u^{4/(n−2)} g₀ with u > 0. Its scalar
//! curvature follows from the background curvature via
//!
//! ```text
//! R(g) = −u^{−(n+2)/(n−2)} ( c_n Δ_{g₀} u − R(g₀) u ),   c_n = 4(n−1)/(n−2)
//! ```
//!
//! Three background kinds are supported:
//!
//! * `Flat` — the flat torus itself: R₀ ≡ 0, unit volume weights.
//! * `ConformallyFlat(φ)` — g₀ = φ^{4/(n−2)} g_flat with φ > 0; R₀ and
//!   the volume weights are derived from φ.
//! * `Synthetic(R₀)` — prescribed curvature field over the flat torus
//!   operators. This is an operator-level stand-in used to exercise the
//!   positive-curvature branch without discretising a genuinely
//!   positive-Yamabe manifold; reports carry this label.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{
    self, grad_inner_flat, grad_squared_flat, integrate, laplacian_flat, Grid, GridError,
    ScalarField,
};
use crate::util::{pairwise_sum_by, pow_fast};

/// Conformal factors below this floor abort a run: the continuous flow
/// preserves positivity, so a breach signals numerical failure.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("conformal-to-flat factor must be positive (min {0})")]
    NonpositivePhi(f64),
    #[error("conformal factor below positivity floor: min {min} at node {node}")]
    PositivityFloor { min: f64, node: usize },
    #[error("field lives on a different grid than the background")]
    GridMismatch,
    #[error("all flow starts failed: {0}")]
    AllStartsFailed(String),
}

/// c_n = 4(n−1)/(n−2), the coefficient of the conformal Laplacian.
pub fn conformal_coefficient(n: usize) -> f64 {
    4.0 * (n as f64 - 1.0) / (n as f64 - 2.0)
}

/// Exponent of u in the curvature prefactor: (n+2)/(n−2).
pub fn curvature_exponent(n: usize) -> f64 {
    (n as f64 + 2.0) / (n as f64 - 2.0)
}

/// Exponent of u in the volume density: 2n/(n−2).
pub fn volume_exponent(n: usize) -> f64 {
    2.0 * n as f64 / (n as f64 - 2.0)
}

/// Exponent of u in the conformal rescaling of the Laplacian: 4/(n−2).
pub fn laplace_exponent(n: usize) -> f64 {
    4.0 / (n as f64 - 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BackgroundKind {
    Flat,
    ConformallyFlat,
    Synthetic,
}

/// Construction data for [`make_background`].
pub enum BackgroundSpec {
    Flat,
    ConformallyFlat { phi: ScalarField },
    Synthetic { r0: ScalarField },
}

/// The reference geometry g₀: its Laplace–Beltrami action, scalar
/// curvature field R₀, and volume weights against the flat measure.
#[derive(Debug, Clone)]
pub struct Background {
    grid: Grid,
    kind: BackgroundKind,
    r0: ScalarField,
    vol_weights: ScalarField,
    conformal_to_flat: ScalarField,
}

impl Background {
    pub fn flat(grid: Grid) -> Background {
        Background {
            r0: ScalarField::constant(&grid, 0.0),
            vol_weights: ScalarField::constant(&grid, 1.0),
            conformal_to_flat: ScalarField::constant(&grid, 1.0),
            kind: BackgroundKind::Flat,
            grid,
        }
    }

    /// g₀ = φ^{4/(n−2)} g_flat. The flat chart is scalar-flat, so
    /// R₀ = −φ^{−(n+2)/(n−2)} c_n Δ_flat φ and dvol_{g₀} = φ^{2n/(n−2)} dx.
    pub fn conformally_flat(grid: Grid, phi: ScalarField) -> Result<Background, ConformalError> {
        if phi.grid() != &grid {
            return Err(ConformalError::GridMismatch);
        }
        let min = phi.min();
        if !(min > 0.0) {
            return Err(ConformalError::NonpositivePhi(min));
        }
        let n = grid.n();
        let cn = conformal_coefficient(n);
        let lap = laplacian_flat(&phi);
        let r0 = phi
            .zip_with(&lap, |p, dp| -pow_fast(p, -curvature_exponent(n)) * cn * dp);
        let vol_weights = phi.powf(volume_exponent(n));
        Ok(Background {
            grid,
            kind: BackgroundKind::ConformallyFlat,
            r0,
            vol_weights,
            conformal_to_flat: phi,
        })
    }

    /// Prescribed R₀ over the flat torus operators (operator-level mode).
    pub fn synthetic(grid: Grid, r0: ScalarField) -> Result<Background, ConformalError> {
        if r0.grid() != &grid {
            return Err(ConformalError::GridMismatch);
        }
        if !r0.is_finite() {
            return Err(GridError::NonFiniteValue(r0.argmin()).into());
        }
        Ok(Background {
            vol_weights: ScalarField::constant(&grid, 1.0),
            conformal_to_flat: ScalarField::constant(&grid, 1.0),
            kind: BackgroundKind::Synthetic,
            r0,
            grid,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> BackgroundKind {
        self.kind
    }

    pub fn r0(&self) -> &ScalarField {
        &self.r0
    }

    pub fn vol_weights(&self) -> &ScalarField {
        &self.vol_weights
    }

    pub fn conformal_to_flat(&self) -> &ScalarField {
        &self.conformal_to_flat
    }

    pub fn r0_min(&self) -> f64 {
        self.r0.min()
    }

    pub fn r0_max(&self) -> f64 {
        self.r0.max()
    }

    /// True when R₀ ≤ 0 everywhere (the nonpositive-case hypotheses).
    pub fn is_nonpositive(&self) -> bool {
        self.r0_max() <= 0.0
    }

    /// Vol(M, g₀) = ∫ dvol_{g₀}.
    pub fn volume0(&self) -> f64 {
        let one = ScalarField::constant(&self.grid, 1.0);
        integrate(&one, &self.vol_weights).expect("volume weights are positive")
    }

    /// ∫ f dvol_{g₀}.
    pub fn integrate_dvol0(&self, f: &ScalarField) -> f64 {
        integrate(f, &self.vol_weights).expect("volume weights are positive")
    }

    /// Δ_{g₀} f. For conformally flat backgrounds the flat operator is
    /// composed through φ: Δ_{g₀}f = φ^{−4/(n−2)}(Δ_flat f + 2⟨∇φ,∇f⟩/φ).
    pub fn laplace_beltrami(&self, f: &ScalarField) -> ScalarField {
        match self.kind {
            BackgroundKind::Flat | BackgroundKind::Synthetic => laplacian_flat(f),
            BackgroundKind::ConformallyFlat => {
                let n = self.grid.n();
                let phi = &self.conformal_to_flat;
                let lap = laplacian_flat(f);
                let cross = grad_inner_flat(phi, f);
                let e = laplace_exponent(n);
                let mut values = Vec::with_capacity(f.len());
                for i in 0..f.len() {
                    let p = phi.values()[i];
                    values.push(pow_fast(p, -e) * (lap.values()[i] + 2.0 * cross.values()[i] / p));
                }
                ScalarField::from_raw(self.grid.clone(), values)
            }
        }
    }

    /// Pointwise ⟨∇f, ∇g⟩_{g₀}.
    pub fn grad_inner(&self, f: &ScalarField, g: &ScalarField) -> ScalarField {
        let flat = grad_inner_flat(f, g);
        match self.kind {
            BackgroundKind::Flat | BackgroundKind::Synthetic => flat,
            BackgroundKind::ConformallyFlat => {
                let e = laplace_exponent(self.grid.n());
                flat.zip_with(&self.conformal_to_flat, |v, p| v * pow_fast(p, -e))
            }
        }
    }

    /// Pointwise |∇f|²_{g₀}.
    pub fn grad_squared(&self, f: &ScalarField) -> ScalarField {
        let flat = grad_squared_flat(f);
        match self.kind {
            BackgroundKind::Flat | BackgroundKind::Synthetic => flat,
            BackgroundKind::ConformallyFlat => {
                let e = laplace_exponent(self.grid.n());
                flat.zip_with(&self.conformal_to_flat, |v, p| v * pow_fast(p, -e))
            }
        }
    }

    /// Key=value manifest describing the background.
    pub fn manifest(&self, provenance: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("kind={:?}\n", self.kind));
        out.push_str(&format!("n={}\n", self.grid.n()));
        out.push_str(&format!(
            "nodes={}\n",
            self.grid.nodes().iter().map(|m| m.to_string()).collect::<Vec<_>>().join(",")
        ));
        out.push_str(&format!(
            "periods={}\n",
            self.grid.periods().iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
        ));
        out.push_str(&format!("r0_min={}\n", self.r0_min()));
        out.push_str(&format!("r0_max={}\n", self.r0_max()));
        out.push_str(&format!("volume0={}\n", self.volume0()));
        out.push_str(&format!("provenance={provenance}\n"));
        out
    }
}

/// Facade constructor mirroring the three background kinds.
pub fn make_background(grid: Grid, spec: BackgroundSpec) -> Result<Background, ConformalError> {
    match spec {
        BackgroundSpec::Flat => Ok(Background::flat(grid)),
        BackgroundSpec::ConformallyFlat { phi } => Background::conformally_flat(grid, phi),
        BackgroundSpec::Synthetic { r0 } => Background::synthetic(grid, r0),
    }
}

/// A positive conformal factor u over a background, representing
/// g = u^{4/(n−2)} g₀.
#[derive(Debug, Clone)]
pub struct ConformalMetric {
    background: Arc<Background>,
    u: ScalarField,
}

impl ConformalMetric {
    pub fn new(background: Arc<Background>, u: ScalarField) -> Result<ConformalMetric, ConformalError> {
        if u.grid() != background.grid() {
            return Err(ConformalError::GridMismatch);
        }
        let node = u.argmin();
        let min = u.values()[node];
        if !(min > POSITIVITY_FLOOR) || !u.is_finite() {
            return Err(ConformalError::PositivityFloor { min, node });
        }
        Ok(ConformalMetric { background, u })
    }

    pub fn background(&self) -> &Arc<Background> {
        &self.background
    }

    pub fn u(&self) -> &ScalarField {
        &self.u
    }

    fn n(&self) -> usize {
        self.background.grid().n()
    }
}

/// R(g) = −u^{−(n+2)/(n−2)} ( c_n Δ_{g₀} u − R₀ u ).
pub fn scalar_curvature(m: &ConformalMetric) -> ScalarField {
    let n = m.n();
    let cn = conformal_coefficient(n);
    let p = curvature_exponent(n);
    let lap = m.background.laplace_beltrami(&m.u);
    let r0 = m.background.r0();
    let u = &m.u;
    let values: Vec<f64> = (0..u.len())
        .map(|i| {
            let ui = u.values()[i];
            -pow_fast(ui, -p) * (cn * lap.values()[i] - r0.values()[i] * ui)
        })
        .collect();
    ScalarField::from_raw(u.grid().clone(), values)
}

/// Δ_g f = u^{−4/(n−2)} ( Δ_{g₀} f + 2 ⟨∇u, ∇f⟩_{g₀} / u ).
pub fn laplace_beltrami_of_metric(m: &ConformalMetric, f: &ScalarField) -> ScalarField {
    let e = laplace_exponent(m.n());
    let lap = m.background.laplace_beltrami(f);
    let cross = m.background.grad_inner(&m.u, f);
    let u = &m.u;
    let values: Vec<f64> = (0..f.len())
        .map(|i| {
            let ui = u.values()[i];
            pow_fast(ui, -e) * (lap.values()[i] + 2.0 * cross.values()[i] / ui)
        })
        .collect();
    ScalarField::from_raw(f.grid().clone(), values)
}

/// Vol(M, g) = ∫ u^{2n/(n−2)} dvol_{g₀}.
pub fn volume(m: &ConformalMetric) -> f64 {
    let e = volume_exponent(m.n());
    m.background.integrate_dvol0(&m.u.powf(e))
}

/// ∫ R(g) dvol_g, evaluated through the curvature field.
pub fn total_scalar(m: &ConformalMetric) -> f64 {
    let r = scalar_curvature(m);
    total_scalar_with_curvature(m, &r)
}

/// Total scalar curvature re-using an already computed R(g) field.
pub fn total_scalar_with_curvature(m: &ConformalMetric, r: &ScalarField) -> f64 {
    let e = volume_exponent(m.n());
    let cell = m.background.grid().cell_volume();
    let u = m.u.values();
    let w = m.background.vol_weights().values();
    let rv = r.values();
    cell * pairwise_sum_by(rv.len(), &|i| rv[i] * pow_fast(u[i], e) * w[i])
}

/// The Dirichlet-form expression of the total scalar curvature:
/// ∫ ( c_n |∇u|²_{g₀} + R₀ u² ) dvol_{g₀}. Related to [`total_scalar`]
/// by integration by parts; the two routes are compared in tests.
pub fn dirichlet_total(m: &ConformalMetric) -> f64 {
    let n = m.n();
    let cn = conformal_coefficient(n);
    let gs = m.background.grad_squared(&m.u);
    let r0 = m.background.r0();
    let u = &m.u;
    let integrand = ScalarField::from_raw(
        u.grid().clone(),
        (0..u.len())
            .map(|i| cn * gs.values()[i] + r0.values()[i] * u.values()[i] * u.values()[i])
            .collect(),
    );
    m.background.integrate_dvol0(&integrand)
}

/// r(g) = ∫R dvol_g / Vol(M, g).
pub fn mean_scalar(m: &ConformalMetric) -> f64 {
    total_scalar(m) / volume(m)
}

/// Yamabe energy ∫R dvol / Vol^{(n−2)/n}; invariant under u ↦ cu.
pub fn yamabe_quotient(m: &ConformalMetric) -> f64 {
    let n = m.n() as f64;
    total_scalar(m) / volume(m).powf((n - 2.0) / n)
}

/// Configuration for the flow-based Yamabe-constant estimator.
#[derive(Debug, Clone, Serialize)]
pub struct YamabeConfig {
    pub starts: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    /// sup-norm of the random start perturbations around 1.
    pub amplitude: f64,
    /// band limit of the random starts
    pub max_mode: usize,
}

impl Default for YamabeConfig {
    fn default() -> Self {
        YamabeConfig { starts: 4, horizon: 0.3, dt: 1e-3, seed: 1, amplitude: 0.3, max_mode: 2 }
    }
}

/// Result of [`estimate_yamabe_constant`]: a numerical upper bound on
/// Y(M, g₀) with the run that achieved it.
#[derive(Debug, Clone, Serialize)]
pub struct YamabeEstimate {
    pub value: f64,
    pub best_start: usize,
    /// final Yamabe quotient per start; None where the flow aborted
    pub quotients: Vec<Option<f64>>,
    /// abort diagnostics per start
    pub failures: Vec<Option<String>>,
}

/// Minimum over several normalized-flow runs (random smooth positive
/// starts) of the final Yamabe quotient. The normalized flow decreases
/// the quotient, so each completed run gives an upper bound on Y.
pub fn estimate_yamabe_constant(
    bg: &Arc<Background>,
    cfg: &YamabeConfig,
) -> Result<YamabeEstimate, ConformalError> {
    use crate::flow::{run_flow, FlowConfig, FlowMode, RunOutcome, Stepper};

    let grid = bg.grid();
    let mut quotients = Vec::with_capacity(cfg.starts);
    let mut failures = Vec::with_capacity(cfg.starts);
    for s in 0..cfg.starts {
        let pert = ScalarField::random_smooth(grid, cfg.seed.wrapping_add(s as u64), cfg.max_mode, cfg.amplitude);
        let u0 = pert.map(|v| 1.0 + v);
        let flow_cfg = FlowConfig::new(
            FlowMode::Normalized,
            cfg.dt,
            cfg.horizon,
            Stepper::ExplicitRk4,
            10,
        )
        .expect("valid flow config");
        let series = run_flow(&u0, bg, &flow_cfg);
        match series.outcome() {
            RunOutcome::Completed => {
                let last = series.samples().last().expect("completed run has samples");
                let n = grid.n() as f64;
                let q = last.total_scalar / last.volume.powf((n - 2.0) / n);
                quotients.push(Some(q));
                failures.push(None);
            }
            RunOutcome::Aborted { t, reason, .. } => {
                quotients.push(None);
                failures.push(Some(format!("start {s}: aborted at t={t}: {reason}")));
            }
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, q) in quotients.iter().enumerate() {
        if let Some(q) = q {
            if best.map_or(true, |(_, b)| *q < b) {
                best = Some((i, *q));
            }
        }
    }
    match best {
        Some((best_start, value)) => Ok(YamabeEstimate { value, best_start, quotients, failures }),
        None => Err(ConformalError::AllStartsFailed(
            failures.iter().flatten().cloned().collect::<Vec<_>>().join("; "),
        )),
    }
}

pub use grid::DistanceMetrics;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn unit_t3(nodes: usize) -> Grid {
        make_grid(3, vec![nodes; 3], vec![1.0; 3]).unwrap()
    }

    fn flat_metric(nodes: usize, u: impl Fn(&[f64]) -> f64) -> ConformalMetric {
        let grid = unit_t3(nodes);
        let bg = Arc::new(Background::flat(grid.clone()));
        ConformalMetric::new(bg, ScalarField::from_fn(&grid, u)).unwrap()
    }

    #[test]
    fn flat_background_has_zero_curvature_and_unit_weights() {
        let grid = unit_t3(16);
        let bg = Background::flat(grid);
        assert_eq!(bg.r0().sup_norm(), 0.0);
        assert_eq!(bg.vol_weights().min(), 1.0);
        assert_eq!(bg.vol_weights().max(), 1.0);
        assert!((bg.volume0() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn constant_conformal_factor_is_still_flat() {
        // φ ≡ 2 in n = 3: R₀ ≡ 0, weights ≡ 2^{2n/(n−2)} = 64.
        let grid = unit_t3(16);
        let phi = ScalarField::constant(&grid, 2.0);
        let bg = Background::conformally_flat(grid, phi).unwrap();
        assert!(bg.r0().sup_norm() < 1e-12);
        assert!((bg.vol_weights().min() - 64.0).abs() < 1e-10);
        assert!((bg.vol_weights().max() - 64.0).abs() < 1e-10);
    }

    #[test]
    fn conformally_flat_curvature_matches_symbolic_oracle() {
        // φ = 1 + 0.2 sin(2πx₁) in n = 3: Δφ = −0.2(2π)² sin(2πx₁), so
        // R₀ = 8·0.2·(2π)² sin(2πx₁)·φ^{−5}.
        let grid = unit_t3(16);
        let phi = ScalarField::from_fn(&grid, |x| 1.0 + 0.2 * (TAU * x[0]).sin());
        let bg = Background::conformally_flat(grid.clone(), phi).unwrap();
        let oracle = ScalarField::from_fn(&grid, |x| {
            let s = (TAU * x[0]).sin();
            let p = 1.0 + 0.2 * s;
            8.0 * 0.2 * TAU * TAU * s * p.powi(-5)
        });
        let mut err = 0.0f64;
        for (a, b) in bg.r0().values().iter().zip(oracle.values().iter()) {
            err = err.max((a - b).abs());
        }
        assert!(err / oracle.sup_norm() < 1e-6, "rel err {}", err / oracle.sup_norm());
    }

    #[test]
    fn conformally_flat_rejects_nonpositive_phi() {
        let grid = unit_t3(16);
        let phi = ScalarField::from_fn(&grid, |x| (TAU * x[0]).sin());
        assert!(matches!(
            Background::conformally_flat(grid, phi),
            Err(ConformalError::NonpositivePhi(_))
        ));
    }

    #[test]
    fn scalar_curvature_trivial_cases() {
        let m = flat_metric(16, |_| 1.0);
        assert!(scalar_curvature(&m).sup_norm() < 1e-12);

        // u ≡ c on a synthetic background: R = c^{−4/(n−2)} R₀.
        let grid = unit_t3(16);
        let r0 = ScalarField::from_fn(&grid, |x| 1.0 + 0.5 * (TAU * x[1]).cos());
        let bg = Arc::new(Background::synthetic(grid.clone(), r0.clone()).unwrap());
        let c = 1.7f64;
        let m = ConformalMetric::new(bg, ScalarField::constant(&grid, c)).unwrap();
        let r = scalar_curvature(&m);
        let expected = r0.scale(c.powf(-4.0));
        let mut err = 0.0f64;
        for (a, b) in r.values().iter().zip(expected.values().iter()) {
            err = err.max((a - b).abs());
        }
        assert!(err < 1e-12);
    }

    #[test]
    fn scalar_curvature_matches_symbolic_oracle() {
        // n = 3 flat, u = 1 + 0.3 sin(2πx₁): R = 8·0.3·(2π)² sin(2πx₁) u^{−5}.
        let m = flat_metric(16, |x| 1.0 + 0.3 * (TAU * x[0]).sin());
        let r = scalar_curvature(&m);
        let oracle = ScalarField::from_fn(m.u().grid(), |x| {
            let s = (TAU * x[0]).sin();
            8.0 * 0.3 * TAU * TAU * s * (1.0 + 0.3 * s).powi(-5)
        });
        let mut err = 0.0f64;
        for (a, b) in r.values().iter().zip(oracle.values().iter()) {
            err = err.max((a - b).abs());
        }
        assert!(err / oracle.sup_norm() < 1e-6);
    }

    #[test]
    fn metric_laplacian_trivial_scalings() {
        let grid = unit_t3(16);
        let bg = Arc::new(Background::flat(grid.clone()));
        let f = ScalarField::random_smooth(&grid, 9, 2, 1.0);

        let m1 = ConformalMetric::new(bg.clone(), ScalarField::constant(&grid, 1.0)).unwrap();
        let lap1 = laplace_beltrami_of_metric(&m1, &f);
        let flat = laplacian_flat(&f);
        let mut err = 0.0f64;
        for (a, b) in lap1.values().iter().zip(flat.values().iter()) {
            err = err.max((a - b).abs());
        }
        assert!(err < 1e-12);

        let c = 2.0f64;
        let mc = ConformalMetric::new(bg, ScalarField::constant(&grid, c)).unwrap();
        let lapc = laplace_beltrami_of_metric(&mc, &f);
        let expected = flat.scale(c.powf(-4.0));
        let mut err = 0.0f64;
        for (a, b) in lapc.values().iter().zip(expected.values().iter()) {
            err = err.max((a - b).abs());
        }
        assert!(err / flat.sup_norm() < 1e-12);
    }

    #[test]
    fn metric_laplacian_integrates_to_zero_against_dvol_g() {
        let grid = unit_t3(16);
        let bg = Arc::new(Background::flat(grid.clone()));
        let u = ScalarField::random_smooth(&grid, 21, 2, 0.3).map(|v| 1.0 + v);
        let m = ConformalMetric::new(bg, u).unwrap();
        let f = ScalarField::random_smooth(&grid, 22, 2, 1.0);
        let lap = laplace_beltrami_of_metric(&m, &f);
        let e = volume_exponent(3);
        let dvol_density = m.u().powf(e);
        let total = integrate(&lap.zip_with(&dvol_density, |a, b| a * b),
                              &ScalarField::constant(&grid, 1.0)).unwrap();
        assert!(total.abs() <= 1e-8 * f.sup_norm().max(1.0) * grid.laplacian_spectral_radius());
    }

    #[test]
    fn volume_closed_forms() {
        let m = flat_metric(16, |_| 1.0);
        assert!((volume(&m) - 1.0).abs() < 1e-13);

        let c = 1.3f64;
        let m = flat_metric(16, move |_| c);
        assert!((volume(&m) - c.powf(6.0)).abs() < 1e-12);

        // Binomial-expansion oracle for ∫ (1 + a sin)⁶ on the unit torus:
        // 1 + 15a²/2 + 45a⁴/8 + 5a⁶/16.
        let a = 0.3f64;
        let m = flat_metric(16, move |x| 1.0 + a * (TAU * x[0]).sin());
        let oracle = 1.0 + 15.0 * a.powi(2) / 2.0 + 45.0 * a.powi(4) / 8.0 + 5.0 * a.powi(6) / 16.0;
        assert!((volume(&m) - oracle).abs() / oracle < 1e-10);
    }

    #[test]
    fn total_scalar_closed_forms() {
        let m = flat_metric(16, |_| 1.0);
        assert!(total_scalar(&m).abs() < 1e-12);

        // SYNTHETIC constant R₀, u ≡ c: exponents combine to c².
        let grid = unit_t3(16);
        let r0 = ScalarField::constant(&grid, -1.4);
        let bg = Arc::new(Background::synthetic(grid.clone(), r0).unwrap());
        let c = 1.2f64;
        let m = ConformalMetric::new(bg, ScalarField::constant(&grid, c)).unwrap();
        assert!((total_scalar(&m) - (-1.4) * c * c).abs() < 1e-12);
        assert!((dirichlet_total(&m) - (-1.4) * c * c).abs() < 1e-12);
        assert!((mean_scalar(&m) - (-1.4) * c.powf(-4.0)).abs() < 1e-12);
    }

    #[test]
    fn conformally_flat_composition_consistency() {
        // R(u over φ-background) = R(u·φ over flat), pointwise.
        let grid = unit_t3(16);
        let phi = ScalarField::from_fn(&grid, |x| 1.0 + 0.2 * (TAU * x[0]).sin());
        let u = ScalarField::from_fn(&grid, |x| 1.0 + 0.15 * (TAU * x[1]).cos());
        let bg = Arc::new(Background::conformally_flat(grid.clone(), phi.clone()).unwrap());
        let m = ConformalMetric::new(bg, u.clone()).unwrap();
        let through_bg = scalar_curvature(&m);

        let flat_bg = Arc::new(Background::flat(grid.clone()));
        let composed =
            ConformalMetric::new(flat_bg, u.zip_with(&phi, |a, b| a * b)).unwrap();
        let through_flat = scalar_curvature(&composed);

        let mut err = 0.0f64;
        for (a, b) in through_bg.values().iter().zip(through_flat.values().iter()) {
            err = err.max((a - b).abs());
        }
        assert!(
            err / through_flat.sup_norm() < 1e-6,
            "rel err {}",
            err / through_flat.sup_norm()
        );
    }

    #[test]
    fn yamabe_quotient_single_mode_closed_form() {
        // Dirichlet integral of 1 + 0.3 sin(2πx₁) is c₃·(0.3·2π)²/2 = 4(0.6π)².
        let m = flat_metric(16, |x| 1.0 + 0.3 * (TAU * x[0]).sin());
        let numerator = 4.0 * (0.6 * std::f64::consts::PI).powi(2);
        let expected = numerator / volume(&m).powf(1.0 / 3.0);
        let q = yamabe_quotient(&m);
        assert!(q > 0.0);
        assert!((q - expected).abs() / expected < 1e-7, "q={q} expected={expected}");
        assert!((dirichlet_total(&m) - numerator).abs() / numerator < 1e-7);
    }

    #[test]
    fn yamabe_estimator_negative_synthetic_class() {
        // R₀ ≡ −1 over the unit torus: the constant factor minimizes the
        // quotient at −Vol(g₀)^{2/n} = −1, so the flow estimate must land
        // well below −0.5·Vol^{2/n}.
        let grid = unit_t3(8);
        let bg = Arc::new(
            Background::synthetic(grid.clone(), ScalarField::constant(&grid, -1.0)).unwrap(),
        );
        let cfg = YamabeConfig {
            starts: 2,
            horizon: 0.3,
            dt: 1e-3,
            seed: 11,
            amplitude: 0.2,
            max_mode: 1,
        };
        let est = estimate_yamabe_constant(&bg, &cfg).unwrap();
        let vol0 = bg.volume0();
        assert!(
            est.value <= -0.5 * vol0.powf(2.0 / 3.0),
            "estimate {} too high",
            est.value
        );
        assert!((est.value - (-1.0)).abs() < 0.05, "estimate {} far from -1", est.value);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]

        /// total_scalar ≡ dirichlet_total on smooth positive u.
        #[test]
        fn energy_form_equivalence(seed in 0u64..500) {
            let grid = unit_t3(16);
            let bg = Arc::new(Background::flat(grid.clone()));
            let u = ScalarField::random_smooth(&grid, seed, 2, 0.4).map(|v| 1.0 + v);
            let m = ConformalMetric::new(bg, u).unwrap();
            let a = total_scalar(&m);
            let b = dirichlet_total(&m);
            prop_assert!((a - b).abs() <= 1e-7 * a.abs().max(b.abs()).max(1e-12));
        }

        /// R(cu) = c^{−4/(n−2)} R(u) pointwise.
        #[test]
        fn curvature_scaling(seed in 0u64..500, c in 0.5f64..2.0) {
            let grid = unit_t3(8);
            let bg = Arc::new(Background::flat(grid.clone()));
            let u = ScalarField::random_smooth(&grid, seed, 2, 0.4).map(|v| 1.0 + v);
            let m = ConformalMetric::new(bg.clone(), u.clone()).unwrap();
            let mc = ConformalMetric::new(bg, u.scale(c)).unwrap();
            let r = scalar_curvature(&m);
            let rc = scalar_curvature(&mc);
            let scale = c.powf(-4.0);
            for (a, b) in r.values().iter().zip(rc.values().iter()) {
                prop_assert!((a * scale - b).abs() <= 1e-12 * r.sup_norm().max(1.0));
            }
        }

        /// The Yamabe quotient is invariant under u ↦ cu.
        #[test]
        fn quotient_scale_invariance(seed in 0u64..500, c in 0.5f64..2.0) {
            let grid = unit_t3(8);
            let bg = Arc::new(Background::flat(grid.clone()));
            let u = ScalarField::random_smooth(&grid, seed, 2, 0.4).map(|v| 1.0 + v);
            let q1 = yamabe_quotient(&ConformalMetric::new(bg.clone(), u.clone()).unwrap());
            let q2 = yamabe_quotient(&ConformalMetric::new(bg, u.scale(c)).unwrap());
            prop_assert!((q1 - q2).abs() <= 1e-12 * q1.abs().max(1.0));
        }

        /// r(cu) = c^{−4/(n−2)} r(u).
        #[test]
        fn mean_scalar_scaling(seed in 0u64..500, c in 0.5f64..2.0) {
            let grid = unit_t3(8);
            let bg = Arc::new(Background::flat(grid.clone()));
            let u = ScalarField::random_smooth(&grid, seed, 2, 0.4).map(|v| 1.0 + v);
            let r1 = mean_scalar(&ConformalMetric::new(bg.clone(), u.clone()).unwrap());
            let r2 = mean_scalar(&ConformalMetric::new(bg, u.scale(c)).unwrap());
            prop_assert!((r1 * c.powf(-4.0) - r2).abs() <= 1e-12 * r1.abs().max(1.0));
        }
    }
}
