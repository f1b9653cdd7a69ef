//! Integrator internals: subcycled explicit RK4 on the u-form, and a
//! stabilized semi-implicit multistep scheme on the w-form.
//!
//! The semi-implicit path treats ν̄·Δ_flat implicitly (diagonal in
//! Fourier space) with ν̄ = max over the grid of the fast-diffusion
//! coefficient (n−1)(uφ)^{−4/(n−2)}, and the remainder explicitly:
//!
//! * first step: stabilized backward-Euler predictor in w,
//! * subsequent steps: SBDF2 with extrapolated explicit part.
//!
//! With ν̄ at least the maximal diffusion coefficient the explicitly
//! treated antidiffusive residue is dominated by the implicit term, so
//! the scheme runs stably at steps far above the explicit limit while
//! remaining 2nd-order accurate.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use super::{
    positivity_check, rhs_unnormalized, stability_dt_bound, u_to_w, w_to_u, FlowConfig, FlowError,
    FlowMode, Stepper,
};
use crate::conformal::{
    conformal_coefficient, laplace_exponent, scalar_curvature, total_scalar_with_curvature,
    volume, Background, ConformalMetric,
};
use crate::grid::{dealias_two_thirds, laplacian_flat, Grid, ScalarField};

/// Hard cap on stability subcycles per user step; a bound that has
/// collapsed this far signals a run that is numerically lost.
const MAX_SUBCYCLES: usize = 1024;

/// Positivity-breach record carried out of a failed step.
#[derive(Debug, Clone)]
pub(crate) struct Breach {
    pub t: f64,
    pub min: f64,
    pub node: usize,
    pub reason: String,
}

fn subcycle_count(dt: f64, bound: f64, t: f64, u: &ScalarField) -> Result<usize, Breach> {
    let k = (dt / bound).ceil().max(1.0);
    if k > MAX_SUBCYCLES as f64 {
        return Err(Breach {
            t,
            min: u.min(),
            node: u.argmin(),
            reason: format!(
                "stability estimate collapsed: dt={dt} would need {k:.0} explicit substeps"
            ),
        });
    }
    Ok(k as usize)
}

impl From<Breach> for FlowError {
    fn from(b: Breach) -> FlowError {
        FlowError::PositivityBreach { t: b.t, min: b.min, node: b.node }
    }
}

/// Mode-dependent right-hand side of the u-form.
fn eval_rhs(u: &ScalarField, bg: &Arc<Background>, mode: FlowMode, t: f64) -> Result<ScalarField, Breach> {
    positivity_check(u, t)?;
    let metric = ConformalMetric::new(bg.clone(), u.clone()).map_err(|e| Breach {
        t,
        min: u.min(),
        node: u.argmin(),
        reason: e.to_string(),
    })?;
    Ok(match mode {
        FlowMode::Normalized => {
            // r recomputed from the current state at every stage; frozen
            // r degrades volume conservation measurably.
            let scalar = scalar_curvature(&metric);
            let vol = volume(&metric);
            let total = total_scalar_with_curvature(&metric, &scalar);
            let r = total / vol;
            let n = bg.grid().n() as f64;
            let factor = -(n - 2.0) / 4.0;
            u.zip_with(&scalar, |ui, ri| factor * (ri - r) * ui)
        }
        FlowMode::Unnormalized => rhs_unnormalized(&metric),
    })
}

fn axpy(u: &ScalarField, k: &ScalarField, a: f64) -> ScalarField {
    u.zip_with(k, |x, y| x + a * y)
}

/// One RK4 substep of size `h` starting at time `t`.
fn rk4_substep(
    u: &ScalarField,
    bg: &Arc<Background>,
    mode: FlowMode,
    h: f64,
    t: f64,
) -> Result<ScalarField, Breach> {
    let k1 = eval_rhs(u, bg, mode, t)?;
    let k2 = eval_rhs(&axpy(u, &k1, 0.5 * h), bg, mode, t + 0.5 * h)?;
    let k3 = eval_rhs(&axpy(u, &k2, 0.5 * h), bg, mode, t + 0.5 * h)?;
    let k4 = eval_rhs(&axpy(u, &k3, h), bg, mode, t + h)?;
    let mut values = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        values.push(
            u.values()[i]
                + h / 6.0
                    * (k1.values()[i]
                        + 2.0 * k2.values()[i]
                        + 2.0 * k3.values()[i]
                        + k4.values()[i]),
        );
    }
    Ok(ScalarField::from_raw(u.grid().clone(), values))
}

/// One user step of size cfg.dt advanced in ⌈dt/bound⌉ RK4 substeps.
pub(crate) fn rk4_user_step(
    u: &ScalarField,
    bg: &Arc<Background>,
    cfg: &FlowConfig,
    bound: f64,
    t: f64,
) -> Result<ScalarField, FlowError> {
    let subcycles = subcycle_count(cfg.dt, bound, t, u)?;
    let h = cfg.dt / subcycles as f64;
    let mut current = u.clone();
    for s in 0..subcycles {
        current = rk4_substep(&current, bg, cfg.mode, h, t + s as f64 * h)?;
        if cfg.dealias {
            current = dealias_two_thirds(&current);
        }
        positivity_check(&current, t + (s + 1) as f64 * h)?;
    }
    Ok(current)
}

/// Solve (a − ν̄ Δ) x = rhs in Fourier space.
fn solve_helmholtz(grid: &Grid, a: f64, nu_bar: f64, rhs: &ScalarField) -> ScalarField {
    use crate::grid::spectral::{fft_all_axes, for_each_mode};
    let mut spectrum: Vec<Complex64> =
        rhs.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_all_axes(grid, &mut spectrum, true);
    let kappa_sq: Vec<Vec<f64>> = (0..grid.n())
        .map(|axis| {
            let m = grid.nodes()[axis];
            (0..m)
                .map(|i| {
                    let k = if i <= m / 2 { i as i64 } else { i as i64 - m as i64 };
                    let kappa = 2.0 * std::f64::consts::PI * k as f64 / grid.periods()[axis];
                    kappa * kappa
                })
                .collect()
        })
        .collect();
    for_each_mode(grid, |flat, idx| {
        let mut ksq = 0.0;
        for (axis, &i) in idx.iter().enumerate() {
            ksq += kappa_sq[axis][i];
        }
        spectrum[flat] /= a + nu_bar * ksq;
    });
    fft_all_axes(grid, &mut spectrum, false);
    ScalarField::from_raw(grid.clone(), spectrum.into_iter().map(|c| c.re).collect())
}

/// Maximal fast-diffusion coefficient (n−1)(uφ)^{−4/(n−2)} over the grid.
fn nu_bar_of(u: &ScalarField, bg: &Background) -> f64 {
    let n = bg.grid().n();
    let e = laplace_exponent(n);
    let phi = bg.conformal_to_flat();
    let mut coeff = 0.0f64;
    for (ui, pi) in u.values().iter().zip(phi.values().iter()) {
        coeff = coeff.max(crate::util::pow_fast(ui * pi, -e));
    }
    (n as f64 - 1.0) * coeff
}

/// Explicit part of the w-equation:
/// F_w(w) = ((n+2)/4)(c_n Δ_{g₀} u − R₀ u + r w), u = w^{(n−2)/(n+2)}.
fn eval_fw(
    w: &ScalarField,
    bg: &Arc<Background>,
    mode: FlowMode,
    t: f64,
) -> Result<ScalarField, Breach> {
    let n = bg.grid().n();
    let u = w_to_u(w, n);
    positivity_check(&u, t)?;
    let cn = conformal_coefficient(n);
    let lap = bg.laplace_beltrami(&u);
    let r0 = bg.r0();
    let r = match mode {
        FlowMode::Normalized => {
            let metric = ConformalMetric::new(bg.clone(), u.clone()).map_err(|e| Breach {
                t,
                min: u.min(),
                node: u.argmin(),
                reason: e.to_string(),
            })?;
            let scalar = scalar_curvature(&metric);
            total_scalar_with_curvature(&metric, &scalar) / volume(&metric)
        }
        FlowMode::Unnormalized => 0.0,
    };
    let factor = (n as f64 + 2.0) / 4.0;
    let values: Vec<f64> = (0..w.len())
        .map(|i| {
            factor
                * (cn * lap.values()[i] - r0.values()[i] * u.values()[i] + r * w.values()[i])
        })
        .collect();
    Ok(ScalarField::from_raw(w.grid().clone(), values))
}

/// Stabilized backward-Euler step in w (the one-step semi-implicit
/// form; also the SBDF2 startup):
/// (1/dt − ν̄Δ) w¹ = w⁰/dt + F_w(w⁰) − ν̄Δw⁰.
pub(crate) fn semi_implicit_startup_step(
    u: &ScalarField,
    bg: &Arc<Background>,
    cfg: &FlowConfig,
    t: f64,
) -> Result<ScalarField, FlowError> {
    let n = bg.grid().n();
    let w = u_to_w(u, n);
    let nu_bar = nu_bar_of(u, bg);
    let fw = eval_fw(&w, bg, cfg.mode, t)?;
    let lap_w = laplacian_flat(&w);
    let a = 1.0 / cfg.dt;
    let rhs = ScalarField::from_raw(
        w.grid().clone(),
        (0..w.len())
            .map(|i| a * w.values()[i] + fw.values()[i] - nu_bar * lap_w.values()[i])
            .collect(),
    );
    let mut w_next = solve_helmholtz(bg.grid(), a, nu_bar, &rhs);
    if cfg.dealias {
        w_next = dealias_two_thirds(&w_next);
    }
    let u_next = w_to_u(&w_next, n);
    positivity_check(&u_next, t + cfg.dt)?;
    Ok(u_next)
}

pub(crate) struct Integrator {
    stepper: Stepper,
    rk4_bound: f64,
    /// previous w for the SBDF2 two-step history
    w_prev: Option<ScalarField>,
}

impl Integrator {
    pub fn new(stepper: Stepper, u0: &ScalarField, bg: &Arc<Background>) -> Integrator {
        Integrator { stepper, rk4_bound: stability_dt_bound(u0, bg), w_prev: None }
    }

    /// Called every 100 user steps per the stability-guard contract.
    pub fn refresh_estimates(&mut self, u: &ScalarField, bg: &Arc<Background>) {
        if self.stepper == Stepper::ExplicitRk4 {
            self.rk4_bound = stability_dt_bound(u, bg);
        }
    }

    pub fn advance(
        &mut self,
        u: &ScalarField,
        bg: &Arc<Background>,
        cfg: &FlowConfig,
        t: f64,
    ) -> Result<ScalarField, Breach> {
        match self.stepper {
            Stepper::ExplicitRk4 => {
                let subcycles = subcycle_count(cfg.dt, self.rk4_bound, t, u)?;
                let h = cfg.dt / subcycles as f64;
                let mut current = u.clone();
                for s in 0..subcycles {
                    current = rk4_substep(&current, bg, cfg.mode, h, t + s as f64 * h)?;
                    if cfg.dealias {
                        current = dealias_two_thirds(&current);
                    }
                    positivity_check(&current, t + (s + 1) as f64 * h)?;
                }
                Ok(current)
            }
            Stepper::SemiImplicit => self.sbdf2_step(u, bg, cfg, t),
        }
    }

    /// SBDF2 with extrapolated explicit part:
    /// (3/(2dt) − ν̄Δ) w^{k+1} = (4w^k − w^{k−1})/(2dt) + F_w(ŵ) − ν̄Δŵ,
    /// ŵ = 2w^k − w^{k−1}.
    fn sbdf2_step(
        &mut self,
        u: &ScalarField,
        bg: &Arc<Background>,
        cfg: &FlowConfig,
        t: f64,
    ) -> Result<ScalarField, Breach> {
        let n = bg.grid().n();
        let w = u_to_w(u, n);
        let Some(w_prev) = self.w_prev.clone() else {
            // first step: stabilized backward Euler, locally 2nd order
            let u_next = match semi_implicit_startup_step(u, bg, cfg, t) {
                Ok(v) => v,
                Err(FlowError::PositivityBreach { t, min, node }) => {
                    return Err(Breach { t, min, node, reason: "positivity floor".into() })
                }
                Err(e) => {
                    return Err(Breach { t, min: u.min(), node: u.argmin(), reason: e.to_string() })
                }
            };
            self.w_prev = Some(w);
            return Ok(u_next);
        };

        let nu_bar = nu_bar_of(u, bg);
        // extrapolated state; fall back to w^k if the extrapolation
        // leaves the positive cone
        let mut w_hat = ScalarField::from_raw(
            w.grid().clone(),
            (0..w.len()).map(|i| 2.0 * w.values()[i] - w_prev.values()[i]).collect(),
        );
        if !(w_hat.min() > 0.0) {
            w_hat = w.clone();
        }
        let fw = eval_fw(&w_hat, bg, cfg.mode, t)?;
        let lap_hat = laplacian_flat(&w_hat);
        let a = 3.0 / (2.0 * cfg.dt);
        let rhs = ScalarField::from_raw(
            w.grid().clone(),
            (0..w.len())
                .map(|i| {
                    (4.0 * w.values()[i] - w_prev.values()[i]) / (2.0 * cfg.dt)
                        + fw.values()[i]
                        - nu_bar * lap_hat.values()[i]
                })
                .collect(),
        );
        let mut w_next = solve_helmholtz(bg.grid(), a, nu_bar, &rhs);
        if cfg.dealias {
            w_next = dealias_two_thirds(&w_next);
        }
        let u_next = w_to_u(&w_next, n);
        positivity_check(&u_next, t + cfg.dt)?;
        self.w_prev = Some(w);
        Ok(u_next)
    }
}
