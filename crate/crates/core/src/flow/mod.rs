//! Time integration of the normalized and unnormalized Yamabe flows for
//! the conformal factor.
//!
//! Differentiating g = u^{4/(n−2)} g₀ in ∂ₜg = −(R − r)g gives the
//! direct factor form integrated here explicitly:
//!
//! ```text
//! ∂ₜu = −((n−2)/4) (R(g) − r) u          (normalized; r omitted otherwise)
//! ```
//!
//! Substituting w = u^{(n+2)/(n−2)} recovers the fast-diffusion form
//!
//! ```text
//! ∂ₜw = ((n+2)/4) ( c_n Δ_{g₀} w^{(n−2)/(n+2)} − R₀ w^{(n−2)/(n+2)} + r w )
//! ```
//!
//! used by the semi-implicit stepper (implicit flat Laplacian, explicit
//! remainder). The two integrators are checked against each other under
//! refinement.
//!
//! `EXPLICIT_RK4` respects the parabolic stability bound by subcycling:
//! a user step of size dt is advanced in ⌈dt/dt_stab⌉ equal RK4
//! substeps, with dt_stab re-estimated at t = 0 and every 100 user
//! steps. Monitors are computed on the same quadrature as the grid
//! integrals, so the conserved/monotone identities hold in the discrete
//! system itself.

mod residuals;
mod stepper;

pub use residuals::{
    dr_dt_residual, evolution_residual_field, scalar_evolution_residual,
    total_scalar_dissipation_residual,
};

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{
    curvature_exponent, scalar_curvature, total_scalar_with_curvature, volume, Background,
    ConformalError, ConformalMetric, POSITIVITY_FLOOR,
};
use crate::grid::ScalarField;
use crate::util::pairwise_sum_by;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid flow config: {0}")]
    BadConfig(String),
    #[error("positivity floor breached at t={t}: u_min={min} at node {node}")]
    PositivityBreach { t: f64, min: f64, node: usize },
    #[error("series does not retain u snapshots at 3 consecutive sample times")]
    InsufficientSnapshots,
    #[error("operation requires a {expected:?}-mode series")]
    WrongMode { expected: FlowMode },
    #[error("monitor csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowMode {
    Normalized,
    Unnormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stepper {
    ExplicitRk4,
    SemiImplicit,
}

/// Integration parameters. The horizon is rounded to a whole number of
/// monitor strides so that sample spacing is exactly dt·monitor_stride.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowConfig {
    pub mode: FlowMode,
    pub dt: f64,
    pub horizon: f64,
    pub stepper: Stepper,
    pub monitor_stride: usize,
    pub dealias: bool,
    /// physical times at which to retain u snapshots (mapped to the
    /// nearest monitor sample)
    pub snapshot_times: Vec<f64>,
    /// retain a snapshot every k-th monitor sample (0 = off)
    pub snapshot_stride: usize,
}

impl FlowConfig {
    pub fn new(
        mode: FlowMode,
        dt: f64,
        horizon: f64,
        stepper: Stepper,
        monitor_stride: usize,
    ) -> Result<FlowConfig, FlowError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(FlowError::BadConfig(format!("dt must be positive, got {dt}")));
        }
        if !(horizon > dt) {
            return Err(FlowError::BadConfig(format!(
                "horizon {horizon} must exceed dt {dt}"
            )));
        }
        if monitor_stride == 0 {
            return Err(FlowError::BadConfig("monitor_stride must be at least 1".into()));
        }
        Ok(FlowConfig {
            mode,
            dt,
            horizon,
            stepper,
            monitor_stride,
            dealias: false,
            snapshot_times: Vec::new(),
            snapshot_stride: 0,
        })
    }

    pub fn with_dealias(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    pub fn with_snapshot_times(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_snapshot_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    /// Number of monitor samples after t = 0.
    pub fn sample_count(&self) -> usize {
        let per_sample = self.dt * self.monitor_stride as f64;
        ((self.horizon / per_sample).round() as usize).max(1)
    }

    pub fn sample_spacing(&self) -> f64 {
        self.dt * self.monitor_stride as f64
    }

    /// Explicit-stepper stability warning, per the CFL-type guard.
    pub fn stability_warning(&self, u0: &ScalarField, bg: &Background) -> Option<String> {
        if self.stepper != Stepper::ExplicitRk4 {
            return None;
        }
        let bound = stability_dt_bound(u0, bg);
        if self.dt > bound {
            Some(format!(
                "dt={} exceeds the explicit stability estimate {bound:.3e}; RK4 will subcycle",
                self.dt
            ))
        } else {
            None
        }
    }

    fn snapshot_samples(&self, n_samples: usize) -> BTreeSet<usize> {
        let mut set = BTreeSet::new();
        let spacing = self.sample_spacing();
        for &t in &self.snapshot_times {
            let idx = (t / spacing).round() as i64;
            let idx = idx.clamp(0, n_samples as i64) as usize;
            set.insert(idx);
        }
        if self.snapshot_stride > 0 {
            let mut i = 0;
            while i <= n_samples {
                set.insert(i);
                i += self.snapshot_stride;
            }
            set.insert(n_samples);
        }
        set
    }
}

/// Explicit-RK4 stability estimate C/(ν_max·λ_max) with
/// ν_max = (n−1)·max (u·φ)^{−4/(n−2)} the fast-diffusion coefficient
/// and λ_max the spectral radius of the flat Laplacian.
pub fn stability_dt_bound(u: &ScalarField, bg: &Background) -> f64 {
    const C_STAB: f64 = 2.5; // RK4 real-axis limit 2.785 with safety margin
    let n = bg.grid().n();
    let e = crate::conformal::laplace_exponent(n);
    let phi = bg.conformal_to_flat();
    let mut coeff_max = 0.0f64;
    for (ui, pi) in u.values().iter().zip(phi.values().iter()) {
        let c = crate::util::pow_fast(ui * pi, -e);
        coeff_max = coeff_max.max(c);
    }
    let nu_max = (n as f64 - 1.0) * coeff_max;
    let lambda = bg.grid().laplacian_spectral_radius();
    C_STAB / (nu_max * lambda)
}

/// Snapshot of the evolving state with cached monitors.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub u: ScalarField,
    /// cached R(g(t))
    pub scalar_curv: ScalarField,
    pub r: f64,
    pub volume: f64,
    pub total_scalar: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub inf_r: f64,
    /// ∫ (R − r)² dvol_g
    pub dissipation: f64,
}

impl FlowState {
    pub fn from_u(bg: &Arc<Background>, u: ScalarField, t: f64) -> Result<FlowState, FlowError> {
        let metric = ConformalMetric::new(bg.clone(), u)?;
        let scalar_curv = scalar_curvature(&metric);
        let vol = volume(&metric);
        let total = total_scalar_with_curvature(&metric, &scalar_curv);
        let r = total / vol;
        let u = metric.u().clone();
        let n = bg.grid().n();
        let e = crate::conformal::volume_exponent(n);
        let cell = bg.grid().cell_volume();
        let w = bg.vol_weights().values();
        let rv = scalar_curv.values();
        let uv = u.values();
        let dissipation = cell
            * pairwise_sum_by(rv.len(), &|i| {
                let d = rv[i] - r;
                d * d * crate::util::pow_fast(uv[i], e) * w[i]
            });
        Ok(FlowState {
            t,
            u_min: u.min(),
            u_max: u.max(),
            inf_r: scalar_curv.min(),
            u,
            scalar_curv,
            r,
            volume: vol,
            total_scalar: total,
            dissipation,
        })
    }

    fn sample(&self) -> Sample {
        Sample {
            t: self.t,
            volume: self.volume,
            r: self.r,
            total_scalar: self.total_scalar,
            u_min: self.u_min,
            u_max: self.u_max,
            inf_r: self.inf_r,
            dissipation: self.dissipation,
        }
    }
}

/// Scalar monitors at one sample time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub volume: f64,
    pub r: f64,
    pub total_scalar: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub inf_r: f64,
    /// ∫(R−r)² dvol_g; not part of the CSV export schema
    pub dissipation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunOutcome {
    Completed,
    Aborted { t: f64, node: usize, reason: String, u_min_history: Vec<f64> },
}

/// Ordered monitor samples plus optional u snapshots at configured
/// sample times. A run that aborts retains its partial series.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    mode: FlowMode,
    dimension: usize,
    dt: f64,
    monitor_stride: usize,
    samples: Vec<Sample>,
    snapshots: Vec<(usize, ScalarField)>,
    outcome: RunOutcome,
}

impl TimeSeries {
    pub fn from_parts(
        mode: FlowMode,
        dimension: usize,
        dt: f64,
        monitor_stride: usize,
        samples: Vec<Sample>,
        snapshots: Vec<(usize, ScalarField)>,
        outcome: RunOutcome,
    ) -> TimeSeries {
        TimeSeries { mode, dimension, dt, monitor_stride, samples, snapshots, outcome }
    }

    pub fn mode(&self) -> FlowMode {
        self.mode
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn monitor_stride(&self) -> usize {
        self.monitor_stride
    }

    pub fn sample_spacing(&self) -> f64 {
        self.dt * self.monitor_stride as f64
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn snapshots(&self) -> &[(usize, ScalarField)] {
        &self.snapshots
    }

    pub fn snapshot_at_sample(&self, idx: usize) -> Option<&ScalarField> {
        self.snapshots.iter().find(|(i, _)| *i == idx).map(|(_, f)| f)
    }

    pub fn outcome(&self) -> &RunOutcome {
        &self.outcome
    }

    pub fn completed(&self) -> bool {
        matches!(self.outcome, RunOutcome::Completed)
    }

    /// CSV with the documented monitor columns. Optionally embeds the
    /// config hash as a leading comment line.
    pub fn to_csv(&self, config_hash: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(h) = config_hash {
            out.push_str(&format!("# config_hash={h}\n"));
        }
        out.push_str("t,volume,r,total_scalar,u_min,u_max,inf_R\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.t, s.volume, s.r, s.total_scalar, s.u_min, s.u_max, s.inf_r
            ));
        }
        out
    }
}

/// Parse the monitor CSV written by [`TimeSeries::to_csv`]. The
/// dissipation monitor is not part of the export schema and is restored
/// as NaN.
pub fn samples_from_csv(text: &str) -> Result<Vec<Sample>, FlowError> {
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('t') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(FlowError::Csv(format!(
                "line {}: expected 7 columns, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, FlowError> {
            s.parse::<f64>().map_err(|e| FlowError::Csv(format!("line {}: {e}", lineno + 1)))
        };
        samples.push(Sample {
            t: parse(fields[0])?,
            volume: parse(fields[1])?,
            r: parse(fields[2])?,
            total_scalar: parse(fields[3])?,
            u_min: parse(fields[4])?,
            u_max: parse(fields[5])?,
            inf_r: parse(fields[6])?,
            dissipation: f64::NAN,
        });
    }
    Ok(samples)
}

/// Right-hand side of the normalized flow, ∂ₜu = −((n−2)/4)(R(g) − r)u.
pub fn rhs_normalized(m: &ConformalMetric, r: f64) -> ScalarField {
    let n = m.background().grid().n() as f64;
    let factor = -(n - 2.0) / 4.0;
    let scalar = scalar_curvature(m);
    m.u().zip_with(&scalar, |u, rr| factor * (rr - r) * u)
}

/// Right-hand side of the unnormalized flow, ∂ₜu = −((n−2)/4) R(g) u.
pub fn rhs_unnormalized(m: &ConformalMetric) -> ScalarField {
    let n = m.background().grid().n() as f64;
    let factor = -(n - 2.0) / 4.0;
    let scalar = scalar_curvature(m);
    m.u().zip_with(&scalar, |u, rr| factor * rr * u)
}

/// One user step of the configured stepper: a stability-subcycled RK4
/// step on the u-form, or one linearly-implicit step in the
/// w = u^{(n+2)/(n−2)} variable.
pub fn step(state: &FlowState, bg: &Arc<Background>, cfg: &FlowConfig) -> Result<FlowState, FlowError> {
    let u_next = match cfg.stepper {
        Stepper::ExplicitRk4 => {
            let bound = stability_dt_bound(&state.u, bg);
            stepper::rk4_user_step(&state.u, bg, cfg, bound, state.t)?
        }
        Stepper::SemiImplicit => stepper::semi_implicit_startup_step(&state.u, bg, cfg, state.t)?,
    };
    FlowState::from_u(bg, u_next, state.t + cfg.dt)
}

/// Integrate on [0, T] and record monitors; deterministic given inputs.
/// Step errors abort the run with the partial series retained.
pub fn run_flow(u0: &ScalarField, bg: &Arc<Background>, cfg: &FlowConfig) -> TimeSeries {
    if let Some(warning) = cfg.stability_warning(u0, bg) {
        log::warn!("{warning}");
    }
    let n_samples = cfg.sample_count();
    let n_steps = n_samples * cfg.monitor_stride;
    let wanted_snapshots = cfg.snapshot_samples(n_samples);

    let mut samples = Vec::with_capacity(n_samples + 1);
    let mut snapshots = Vec::new();

    let state0 = match FlowState::from_u(bg, u0.clone(), 0.0) {
        Ok(s) => s,
        Err(e) => {
            return TimeSeries {
                mode: cfg.mode,
                dimension: bg.grid().n(),
                dt: cfg.dt,
                monitor_stride: cfg.monitor_stride,
                samples,
                snapshots,
                outcome: RunOutcome::Aborted {
                    t: 0.0,
                    node: 0,
                    reason: e.to_string(),
                    u_min_history: vec![],
                },
            }
        }
    };
    samples.push(state0.sample());
    if wanted_snapshots.contains(&0) {
        snapshots.push((0, state0.u.clone()));
    }

    let mut integrator = stepper::Integrator::new(cfg.stepper, &state0.u, bg);
    let mut u = state0.u;

    let mut outcome = RunOutcome::Completed;
    'run: for step_idx in 0..n_steps {
        if step_idx % 100 == 0 {
            integrator.refresh_estimates(&u, bg);
        }
        let t = step_idx as f64 * cfg.dt;
        match integrator.advance(&u, bg, cfg, t) {
            Ok(next) => u = next,
            Err(breach) => {
                let mut history: Vec<f64> =
                    samples.iter().rev().take(8).map(|s| s.u_min).collect();
                history.reverse();
                history.push(breach.min);
                outcome = RunOutcome::Aborted {
                    t: breach.t,
                    node: breach.node,
                    reason: breach.reason,
                    u_min_history: history,
                };
                break 'run;
            }
        }
        if (step_idx + 1) % cfg.monitor_stride == 0 {
            let sample_idx = (step_idx + 1) / cfg.monitor_stride;
            match FlowState::from_u(bg, u.clone(), (step_idx + 1) as f64 * cfg.dt) {
                Ok(state) => {
                    samples.push(state.sample());
                    if wanted_snapshots.contains(&sample_idx) {
                        snapshots.push((sample_idx, state.u.clone()));
                    }
                }
                Err(e) => {
                    let mut history: Vec<f64> =
                        samples.iter().rev().take(8).map(|s| s.u_min).collect();
                    history.reverse();
                    history.push(u.min());
                    outcome = RunOutcome::Aborted {
                        t: (step_idx + 1) as f64 * cfg.dt,
                        node: u.argmin(),
                        reason: e.to_string(),
                        u_min_history: history,
                    };
                    break 'run;
                }
            }
        }
    }

    TimeSeries {
        mode: cfg.mode,
        dimension: bg.grid().n(),
        dt: cfg.dt,
        monitor_stride: cfg.monitor_stride,
        samples,
        snapshots,
        outcome,
    }
}

/// Shared positivity guard: index and value of the minimum, as an abort
/// record when it breaches the floor or goes non-finite.
pub(crate) fn positivity_check(u: &ScalarField, t: f64) -> Result<(), stepper::Breach> {
    let mut min = f64::INFINITY;
    let mut node = 0;
    for (i, v) in u.values().iter().enumerate() {
        if !v.is_finite() {
            return Err(stepper::Breach {
                t,
                min: *v,
                node: i,
                reason: format!("non-finite conformal factor at node {i}"),
            });
        }
        if *v < min {
            min = *v;
            node = i;
        }
    }
    if min <= POSITIVITY_FLOOR {
        return Err(stepper::Breach {
            t,
            min,
            node,
            reason: format!("u_min={min} fell below the positivity floor {POSITIVITY_FLOOR}"),
        });
    }
    Ok(())
}

/// w = u^{(n+2)/(n−2)} and back.
pub(crate) fn u_to_w(u: &ScalarField, n: usize) -> ScalarField {
    u.powf(curvature_exponent(n))
}

pub(crate) fn w_to_u(w: &ScalarField, n: usize) -> ScalarField {
    w.powf(1.0 / curvature_exponent(n))
}
