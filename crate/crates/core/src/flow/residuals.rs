//! Residuals of the evolution identities satisfied along the flows.
//!
//! * scalar-curvature evolution:
//!   ∂ₜR = (n−1) Δ_{g(t)} R + R(R − r)   (normalized)
//!   ∂ₜR = (n−1) Δ_{g(t)} R + R²         (unnormalized)
//! * mean-curvature dissipation (normalized):
//!   dr/dt = −((n−2)/2) Vol⁻¹ ∫ (R − r)² dvol.
//!
//! Both compare a central time difference of the sampled series against
//! the right-hand side assembled from the discrete operators.

use std::sync::Arc;

use crate::conformal::{
    laplace_beltrami_of_metric, scalar_curvature, total_scalar_with_curvature, volume, Background,
    ConformalMetric,
};
use crate::grid::ScalarField;

use super::{FlowError, FlowMode, TimeSeries};

/// Pointwise residual field of the scalar-curvature evolution identity
/// at the middle of three snapshots spaced `dt_span` apart, together
/// with sup|R| at the middle time.
pub fn evolution_residual_field(
    bg: &Arc<Background>,
    mode: FlowMode,
    u_prev: &ScalarField,
    u_mid: &ScalarField,
    u_next: &ScalarField,
    dt_span: f64,
) -> Result<(ScalarField, f64), FlowError> {
    let m_prev = ConformalMetric::new(bg.clone(), u_prev.clone())?;
    let m_mid = ConformalMetric::new(bg.clone(), u_mid.clone())?;
    let m_next = ConformalMetric::new(bg.clone(), u_next.clone())?;

    let r_prev = scalar_curvature(&m_prev);
    let r_mid = scalar_curvature(&m_mid);
    let r_next = scalar_curvature(&m_next);

    let n = bg.grid().n() as f64;
    let lap = laplace_beltrami_of_metric(&m_mid, &r_mid);
    let mean = match mode {
        FlowMode::Normalized => {
            total_scalar_with_curvature(&m_mid, &r_mid) / volume(&m_mid)
        }
        FlowMode::Unnormalized => 0.0,
    };

    let values: Vec<f64> = (0..u_mid.len())
        .map(|i| {
            let lhs = (r_next.values()[i] - r_prev.values()[i]) / (2.0 * dt_span);
            let r = r_mid.values()[i];
            let rhs = (n - 1.0) * lap.values()[i] + r * (r - mean);
            lhs - rhs
        })
        .collect();
    Ok((ScalarField::from_raw(u_mid.grid().clone(), values), r_mid.sup_norm()))
}

/// Sup-norm residual of the scalar-curvature evolution identity over
/// every window of three consecutive snapshots, normalized by
/// sup|R| + 1.
pub fn scalar_evolution_residual(
    series: &TimeSeries,
    bg: &Arc<Background>,
    mode: FlowMode,
) -> Result<f64, FlowError> {
    let spacing = series.sample_spacing();
    let snaps = series.snapshots();
    let mut worst: Option<f64> = None;
    for w in snaps.windows(3) {
        let (i0, ref u0) = w[0];
        let (i1, ref u1) = w[1];
        let (i2, ref u2) = w[2];
        if i1 != i0 + 1 || i2 != i1 + 1 {
            continue;
        }
        let (field, sup_r) = evolution_residual_field(bg, mode, u0, u1, u2, spacing)?;
        let value = field.sup_norm() / (sup_r + 1.0);
        worst = Some(worst.map_or(value, |v: f64| v.max(value)));
    }
    worst.ok_or(FlowError::InsufficientSnapshots)
}

/// Max over interior samples of the relative residual of the
/// unnormalized total-scalar dissipation identity
/// d/dt ∫R dvol = −((n−2)/2) ∫R² dvol, with
/// ∫R² dvol recovered from the monitors as dissipation + r²·Vol.
pub fn total_scalar_dissipation_residual(series: &TimeSeries) -> Result<f64, FlowError> {
    if series.mode() != FlowMode::Unnormalized {
        return Err(FlowError::WrongMode { expected: FlowMode::Unnormalized });
    }
    let samples = series.samples();
    if samples.len() < 3 {
        return Err(FlowError::InsufficientSnapshots);
    }
    let n = series.dimension() as f64;
    let spacing = series.sample_spacing();
    let mut worst = 0.0f64;
    for i in 1..samples.len() - 1 {
        let lhs = (samples[i + 1].total_scalar - samples[i - 1].total_scalar) / (2.0 * spacing);
        let r_sq_total = samples[i].dissipation + samples[i].r * samples[i].r * samples[i].volume;
        let rhs = -(n - 2.0) / 2.0 * r_sq_total;
        let res = (lhs - rhs).abs() / (rhs.abs() + 1e-12);
        worst = worst.max(res);
    }
    Ok(worst)
}

/// Max over interior samples of
/// |central-difference dr/dt − RHS| / (|RHS| + 1e−12) for the
/// normalized dissipation identity.
pub fn dr_dt_residual(series: &TimeSeries) -> Result<f64, FlowError> {
    if series.mode() != FlowMode::Normalized {
        return Err(FlowError::WrongMode { expected: FlowMode::Normalized });
    }
    let samples = series.samples();
    if samples.len() < 3 {
        return Err(FlowError::InsufficientSnapshots);
    }
    let n = series.dimension() as f64;
    let spacing = series.sample_spacing();
    let mut worst = 0.0f64;
    for i in 1..samples.len() - 1 {
        let lhs = (samples[i + 1].r - samples[i - 1].r) / (2.0 * spacing);
        let rhs = -(n - 2.0) / 2.0 * samples[i].dissipation / samples[i].volume;
        let res = (lhs - rhs).abs() / (rhs.abs() + 1e-12);
        worst = worst.max(res);
    }
    Ok(worst)
}
