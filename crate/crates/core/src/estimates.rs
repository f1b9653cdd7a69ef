//! Checkers for the comparison inequalities and identities satisfied
//! along the flows. Each consumes series or field data and emits a
//! structured pass/fail report with signed margins (positive = slack).
//!
//! Every checker distinguishes hypothesis failures (the inputs violate
//! the inequality's preconditions; reported, distinct exit path) from
//! conclusion failures (the inequality itself fails on admissible
//! inputs; a red result).

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::conformal::Background;
use crate::flow::{FlowMode, TimeSeries};
use crate::grid::{field_metrics, integrate, ScalarField};
use crate::util::{fit_slope, Tolerance};

/// ψ-admissibility: nodes with ψ ≤ this are treated as zeros of the
/// cutoff.
const PSI_ZERO: f64 = 1e-13;
/// |Δψ| allowed on the zero set of an admissible cutoff.
const PSI_LAPLACIAN_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EstimatesError {
    #[error("beta must be nonnegative (beta[{0}] < 0)")]
    NegativeBeta(usize),
    #[error("time grid must increase strictly from 0")]
    BadTimeGrid,
    #[error("input lengths differ")]
    LengthMismatch,
    #[error("series is empty")]
    EmptySeries,
    #[error("checker requires a {expected:?}-mode series")]
    WrongMode { expected: FlowMode },
    #[error("the bound is derived for nonpositive background curvature (max R₀ = {0})")]
    PositiveBackgroundRejected(f64),
    #[error("nonpositive Yamabe lower bound required, got {0}")]
    PositiveYamabeRejected(f64),
    #[error("sigma = max(1−δ, 1) is at least 1 by construction, got {0}")]
    SigmaBelowOne(f64),
    #[error("inadmissible cutoff: {0}")]
    InadmissiblePsi(String),
    #[error("series mismatch: {0}")]
    SeriesMismatch(String),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

/// Structured pass/fail record of one checked inequality.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub name: String,
    pub holds: bool,
    /// signed; positive = slack
    pub worst_margin: f64,
    pub worst_time: f64,
    pub parameters: BTreeMap<String, f64>,
    pub tolerance: Tolerance,
    /// present when the inputs fail the inequality's hypotheses; the
    /// conclusion was then not judged
    pub hypothesis_failure: Option<String>,
}

impl EstimateReport {
    fn from_margins(
        name: &str,
        margins: &[(f64, f64)], // (t, margin)
        scale: f64,
        tol: Tolerance,
        mut parameters: BTreeMap<String, f64>,
    ) -> EstimateReport {
        let (worst_time, worst_margin) = margins
            .iter()
            .copied()
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("margins are finite"))
            .unwrap_or((0.0, f64::INFINITY));
        parameters.insert("margin_scale".into(), scale);
        EstimateReport {
            name: name.to_string(),
            holds: tol.admits(worst_margin, scale),
            worst_margin,
            worst_time,
            parameters,
            tolerance: tol,
            hypothesis_failure: None,
        }
    }

    fn hypothesis_failure(
        name: &str,
        reason: String,
        parameters: BTreeMap<String, f64>,
        tol: Tolerance,
    ) -> EstimateReport {
        EstimateReport {
            name: name.to_string(),
            holds: false,
            worst_margin: f64::NEG_INFINITY,
            worst_time: 0.0,
            parameters,
            tolerance: tol,
            hypothesis_failure: Some(reason),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row of the human-readable table.
    pub fn table_row(&self) -> String {
        match &self.hypothesis_failure {
            Some(reason) => format!(
                "{:<22} HYPOTHESIS-FAIL  {}",
                self.name, reason
            ),
            None => format!(
                "{:<22} {:<5} worst_margin={:+.3e} at t={:.4}",
                self.name,
                if self.holds { "OK" } else { "FAIL" },
                self.worst_margin,
                self.worst_time
            ),
        }
    }
}

/// Human-readable table for a batch of reports.
pub fn report_table(reports: &[EstimateReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&r.table_row());
        out.push('\n');
    }
    out
}

/// Gronwall bound curve: given sampled α and nonnegative β on an
/// increasing time grid starting at 0, the conclusion curve
///
/// ```text
/// bound(t) = α(t) + ∫₀ᵗ α(s) β(s) exp(∫ₛᵗ β(r) dr) ds
/// ```
///
/// by nested trapezoidal quadrature (O(n) via the cumulative form).
pub fn gronwall_bound(alpha: &[f64], beta: &[f64], t: &[f64]) -> Result<Vec<f64>, EstimatesError> {
    if alpha.len() != beta.len() || alpha.len() != t.len() {
        return Err(EstimatesError::LengthMismatch);
    }
    if t.is_empty() || t[0].abs() > 1e-300 {
        return Err(EstimatesError::BadTimeGrid);
    }
    for w in t.windows(2) {
        if !(w[1] > w[0]) {
            return Err(EstimatesError::BadTimeGrid);
        }
    }
    for (i, b) in beta.iter().enumerate() {
        if !(*b >= 0.0) {
            return Err(EstimatesError::NegativeBeta(i));
        }
    }
    let n = t.len();
    // B(t) = ∫₀ᵗ β
    let mut big_b = vec![0.0f64; n];
    for i in 1..n {
        big_b[i] = big_b[i - 1] + 0.5 * (t[i] - t[i - 1]) * (beta[i] + beta[i - 1]);
    }
    // J(t) = ∫₀ᵗ α β e^{−B}; bound = α + e^{B} J
    let g = |i: usize| alpha[i] * beta[i] * (-big_b[i]).exp();
    let mut j = vec![0.0f64; n];
    for i in 1..n {
        j[i] = j[i - 1] + 0.5 * (t[i] - t[i - 1]) * (g(i) + g(i - 1));
    }
    Ok((0..n).map(|i| alpha[i] + big_b[i].exp() * j[i]).collect())
}

fn require_mode(series: &TimeSeries, expected: FlowMode) -> Result<(), EstimatesError> {
    if series.mode() != expected {
        return Err(EstimatesError::WrongMode { expected });
    }
    if series.samples().is_empty() {
        return Err(EstimatesError::EmptySeries);
    }
    Ok(())
}

/// Exponential lower bound on the conformal-factor minimum in the
/// nonpositive case:
/// u_min^{(n+2)/(n−2)}(t) ≥ exp( (n−2)/(8(n−1)) · Y · Vol^{−2/n} · t ) · u_min^{(n+2)/(n−2)}(0).
///
/// `y_lower ≤ 0` must be a lower bound for the Yamabe constant and
/// `vol` the conserved volume of the run. Registry name: `ye-min`.
pub fn check_min_exponential_bound(
    series: &TimeSeries,
    bg: &Background,
    y_lower: f64,
    vol: f64,
    tol: Tolerance,
) -> Result<EstimateReport, EstimatesError> {
    require_mode(series, FlowMode::Normalized)?;
    if bg.r0_max() > 0.0 {
        return Err(EstimatesError::PositiveBackgroundRejected(bg.r0_max()));
    }
    if y_lower > 0.0 {
        return Err(EstimatesError::PositiveYamabeRejected(y_lower));
    }
    let n = series.dimension() as f64;
    let q = (n + 2.0) / (n - 2.0);
    let rate = (n - 2.0) / (8.0 * (n - 1.0)) * y_lower * vol.powf(-2.0 / n);
    let base = series.samples()[0].u_min.powf(q);
    let margins: Vec<(f64, f64)> = series
        .samples()
        .iter()
        .map(|s| (s.t, s.u_min.powf(q) - (rate * s.t).exp() * base))
        .collect();
    let mut params = BTreeMap::new();
    params.insert("y_lower".into(), y_lower);
    params.insert("vol".into(), vol);
    params.insert("rate".into(), rate);
    Ok(EstimateReport::from_margins("ye-min", &margins, base, tol, params))
}

/// Gronwall upper bound on the conformal-factor maximum in the
/// nonpositive case:
/// u_max^{4/(n−2)}(t) ≤ α(t) + ∫₀ᵗ α(s) β̃ e^{β̃(t−s)} ds with
/// α(t) = u_max(0)^{4/(n−2)} − (n−2)/((n−1)(n+2)) · (min R₀) · t and
/// β̃ = 2(n−2)/((n−1)(n+2)) · Vol(g) · max{κ, 0}. Registry name: `ye-max`.
pub fn check_max_gronwall_bound(
    series: &TimeSeries,
    bg: &Background,
    kappa: f64,
    vol_g: f64,
    r0_min: f64,
    tol: Tolerance,
) -> Result<EstimateReport, EstimatesError> {
    require_mode(series, FlowMode::Normalized)?;
    if bg.r0_max() > 0.0 {
        return Err(EstimatesError::PositiveBackgroundRejected(bg.r0_max()));
    }
    let mut params = BTreeMap::new();
    params.insert("kappa".into(), kappa);
    params.insert("vol_g".into(), vol_g);
    params.insert("r0_min".into(), r0_min);

    let total0 = series.samples()[0].total_scalar;
    if total0 > kappa + tol.slack(kappa.abs().max(1.0)) {
        return Ok(EstimateReport::hypothesis_failure(
            "ye-max",
            format!("total scalar curvature at t=0 is {total0}, above kappa={kappa}"),
            params,
            tol,
        ));
    }

    let n = series.dimension() as f64;
    let e = 4.0 / (n - 2.0);
    let c2 = (n - 2.0) / ((n - 1.0) * (n + 2.0));
    let beta_tilde = 2.0 * c2 * vol_g * kappa.max(0.0);
    params.insert("beta_tilde".into(), beta_tilde);

    let base = series.samples()[0].u_max.powf(e);
    let times: Vec<f64> = series.samples().iter().map(|s| s.t).collect();
    let alpha: Vec<f64> = times.iter().map(|&t| base - c2 * r0_min * t).collect();
    let beta: Vec<f64> = vec![beta_tilde; times.len()];
    let bound = gronwall_bound(&alpha, &beta, &times)?;
    let margins: Vec<(f64, f64)> = series
        .samples()
        .iter()
        .zip(bound.iter())
        .map(|(s, b)| (s.t, b - s.u_max.powf(e)))
        .collect();
    Ok(EstimateReport::from_margins("ye-max", &margins, base, tol, params))
}

/// Preservation of the scalar-curvature lower bound in positive mode:
/// inf R(g(t)) ≥ min{inf δ, 0}. Hypothesis: inf R(0) ≥ inf δ.
/// Registry name: `scalar-lower`.
pub fn check_scalar_lower_preservation(
    series: &TimeSeries,
    delta: &ScalarField,
    tol: Tolerance,
) -> Result<EstimateReport, EstimatesError> {
    require_mode(series, FlowMode::Normalized)?;
    let inf_delta = delta.min();
    let mut params = BTreeMap::new();
    params.insert("inf_delta".into(), inf_delta);

    let inf_r0 = series.samples()[0].inf_r;
    if inf_r0 < inf_delta - tol.slack(inf_delta.abs().max(1.0)) {
        return Ok(EstimateReport::hypothesis_failure(
            "scalar-lower",
            format!("inf R(0) = {inf_r0} is below inf delta = {inf_delta}"),
            params,
            tol,
        ));
    }

    let floor = inf_delta.min(0.0);
    params.insert("floor".into(), floor);
    let margins: Vec<(f64, f64)> =
        series.samples().iter().map(|s| (s.t, s.inf_r - floor)).collect();
    Ok(EstimateReport::from_margins(
        "scalar-lower",
        &margins,
        floor.abs().max(1.0),
        tol,
        params,
    ))
}

/// Linear-in-t sup bound in positive mode with R + σ ≥ 1:
/// sup u(t) ≤ sup u(0) + (n−2)/4 · ( κ/(2 Vol) + σ ) · t.
/// Registry name: `brendle-sup`.
pub fn check_sup_linear_bound(
    series: &TimeSeries,
    kappa: f64,
    vol_g: f64,
    sigma: f64,
    tol: Tolerance,
) -> Result<EstimateReport, EstimatesError> {
    require_mode(series, FlowMode::Normalized)?;
    if sigma < 1.0 {
        return Err(EstimatesError::SigmaBelowOne(sigma));
    }
    let mut params = BTreeMap::new();
    params.insert("kappa".into(), kappa);
    params.insert("vol_g".into(), vol_g);
    params.insert("sigma".into(), sigma);

    let s0 = &series.samples()[0];
    if s0.inf_r + sigma < 1.0 - tol.slack(1.0) {
        return Ok(EstimateReport::hypothesis_failure(
            "brendle-sup",
            format!("R + sigma >= 1 fails at t=0 (inf R = {}, sigma = {sigma})", s0.inf_r),
            params,
            tol,
        ));
    }
    if s0.total_scalar > kappa + tol.slack(kappa.abs().max(1.0)) {
        return Ok(EstimateReport::hypothesis_failure(
            "brendle-sup",
            format!(
                "total scalar curvature at t=0 is {}, above kappa={kappa}",
                s0.total_scalar
            ),
            params,
            tol,
        ));
    }

    let n = series.dimension() as f64;
    let slope = (n - 2.0) / 4.0 * (0.5 * kappa / vol_g + sigma);
    params.insert("slope".into(), slope);
    let base = s0.u_max;
    let margins: Vec<(f64, f64)> = series
        .samples()
        .iter()
        .map(|s| (s.t, base + slope * s.t - s.u_max))
        .collect();
    Ok(EstimateReport::from_margins("brendle-sup", &margins, base, tol, params))
}

/// Volume bounds along the unnormalized flow, in the time-integrated
/// forms of the underlying differential inequalities:
///
/// ```text
/// Vol(0)·exp(−nκt / (2 Vol(0)))  ≤  Vol(t)  ≤  (Vol(0)^{2/n} − Y·t)^{n/2}
/// ```
///
/// The t-free displayed constants Vol(0)·exp(−nκ/(2Vol(0))) and
/// (−nY + Vol(0)^{2/n})^{n/2} are additionally checked on samples with
/// t ≤ 1, where they envelope the integrated forms; their worst margins
/// are recorded in the parameters. Registry name: `volume-bounds`.
pub fn check_volume_bounds(
    series: &TimeSeries,
    kappa: f64,
    y: f64,
    tol: Tolerance,
) -> Result<EstimateReport, EstimatesError> {
    require_mode(series, FlowMode::Unnormalized)?;
    if y > 0.0 {
        return Err(EstimatesError::PositiveYamabeRejected(y));
    }
    let mut params = BTreeMap::new();
    params.insert("kappa".into(), kappa);
    params.insert("y".into(), y);

    let s0 = &series.samples()[0];
    if s0.total_scalar > kappa + tol.slack(kappa.abs().max(1.0)) {
        return Ok(EstimateReport::hypothesis_failure(
            "volume-bounds",
            format!(
                "total scalar curvature at t=0 is {}, above kappa={kappa}",
                s0.total_scalar
            ),
            params,
            tol,
        ));
    }

    let n = series.dimension() as f64;
    let v0 = s0.volume;
    params.insert("vol0".into(), v0);

    let mut margins = Vec::with_capacity(series.samples().len());
    let mut lower_worst = f64::INFINITY;
    let mut upper_worst = f64::INFINITY;
    let mut lower_disp_worst = f64::INFINITY;
    let mut upper_disp_worst = f64::INFINITY;
    let lower_disp = v0 * (-n * kappa / (2.0 * v0)).exp();
    let upper_disp = (v0.powf(2.0 / n) - n * y).powf(n / 2.0);
    for s in series.samples() {
        let lower = v0 * (-n * kappa * s.t / (2.0 * v0)).exp();
        let upper = (v0.powf(2.0 / n) - y * s.t).powf(n / 2.0);
        let lm = s.volume - lower;
        let um = upper - s.volume;
        lower_worst = lower_worst.min(lm);
        upper_worst = upper_worst.min(um);
        margins.push((s.t, lm.min(um)));
        if s.t <= 1.0 {
            lower_disp_worst = lower_disp_worst.min(s.volume - lower_disp);
            upper_disp_worst = upper_disp_worst.min(upper_disp - s.volume);
        }
    }
    params.insert("lower_margin_worst".into(), lower_worst);
    params.insert("upper_margin_worst".into(), upper_worst);
    params.insert("lower_displayed_margin_worst".into(), lower_disp_worst);
    params.insert("upper_displayed_margin_worst".into(), upper_disp_worst);
    Ok(EstimateReport::from_margins("volume-bounds", &margins, v0, tol, params))
}

/// The cutoff functional C[ψ] = ∫ |Δ_{g₀}ψ|^{(n+2)/4} ψ^{−(n−2)/4} dvol₀.
///
/// At nodes where ψ = 0 the integrand contributes 0 provided
/// |Δψ| ≤ 1e−10 there; a cutoff with ψ = 0 but |Δψ| above that is
/// rejected as inadmissible.
pub fn c_psi(psi: &ScalarField, bg: &Background) -> Result<f64, EstimatesError> {
    if psi.grid() != bg.grid() {
        return Err(EstimatesError::SeriesMismatch("psi lives on a different grid".into()));
    }
    if psi.min() < 0.0 {
        return Err(EstimatesError::InadmissiblePsi(format!(
            "psi must be nonnegative (min {})",
            psi.min()
        )));
    }
    let n = bg.grid().n() as f64;
    let lap = bg.laplace_beltrami(psi);
    let mut integrand = Vec::with_capacity(psi.len());
    for i in 0..psi.len() {
        let p = psi.values()[i];
        let dp = lap.values()[i];
        if p <= PSI_ZERO {
            if dp.abs() > PSI_LAPLACIAN_TOL {
                return Err(EstimatesError::InadmissiblePsi(format!(
                    "psi vanishes at node {i} but |Δψ| = {} there",
                    dp.abs()
                )));
            }
            integrand.push(0.0);
        } else {
            integrand.push(dp.abs().powf((n + 2.0) / 4.0) * p.powf(-(n - 2.0) / 4.0));
        }
    }
    let field = ScalarField::new(bg.grid().clone(), integrand)?;
    Ok(bg.integrate_dvol0(&field))
}

/// L¹ comparison estimate for a pair of unnormalized flows:
///
/// ```text
/// L(t)^{4/(n+2)} ≤ L(0)^{4/(n+2)}
///   + ( (n−1)(n+2)/(n−2) · (2C[ψ])^{4/(n+2)}
///     + (n+2)/4 · (∫ψ dvol₀)^{4/(n+2)} ) · t,
/// L(t) = ∫ ψ |u_a(t) − u_b(t)| dvol₀.
/// ```
///
/// Both series must run over the same background and time grid and
/// retain snapshots at common sample times (including t = 0).
/// Registry name: `l1`.
pub fn check_l1_estimate(
    series_a: &TimeSeries,
    series_b: &TimeSeries,
    bg: &Background,
    psi: &ScalarField,
    tol: Tolerance,
) -> Result<EstimateReport, EstimatesError> {
    require_mode(series_a, FlowMode::Unnormalized)?;
    require_mode(series_b, FlowMode::Unnormalized)?;
    if (series_a.dt() - series_b.dt()).abs() > 1e-15
        || series_a.monitor_stride() != series_b.monitor_stride()
    {
        return Err(EstimatesError::SeriesMismatch("time grids differ".into()));
    }
    let c = c_psi(psi, bg)?;
    let n = bg.grid().n() as f64;
    let e = 4.0 / (n + 2.0);
    let psi_weighted = psi.zip_with(bg.vol_weights(), |p, w| p * w);
    let psi_mass = integrate(psi, bg.vol_weights())?;
    let slope = (n - 1.0) * (n + 2.0) / (n - 2.0) * (2.0 * c).powf(e)
        + (n + 2.0) / 4.0 * psi_mass.powf(e);

    // common snapshot sample indices
    let mut pairs: Vec<(usize, &ScalarField, &ScalarField)> = Vec::new();
    for (ia, ua) in series_a.snapshots() {
        if let Some(ub) = series_b.snapshot_at_sample(*ia) {
            pairs.push((*ia, ua, ub));
        }
    }
    pairs.sort_by_key(|(i, _, _)| *i);
    if pairs.is_empty() || pairs[0].0 != 0 {
        return Err(EstimatesError::SeriesMismatch(
            "common snapshots (including t = 0) required".into(),
        ));
    }

    let weighted_l1 = |ua: &ScalarField, ub: &ScalarField| -> f64 {
        let diff = ua.zip_with(ub, |a, b| (a - b).abs());
        let integrand = diff.zip_with(&psi_weighted, |d, pw| d * pw);
        crate::grid::integrate_unweighted(&integrand)
    };

    let l0 = weighted_l1(pairs[0].1, pairs[0].2).powf(e);
    let spacing = series_a.sample_spacing();
    let mut margins = Vec::with_capacity(pairs.len());
    let mut rhs_max = l0;
    for (idx, ua, ub) in &pairs {
        let t = *idx as f64 * spacing;
        let lhs = weighted_l1(ua, ub).powf(e);
        let rhs = l0 + slope * t;
        rhs_max = rhs_max.max(rhs);
        margins.push((t, rhs - lhs));
    }
    let mut params = BTreeMap::new();
    params.insert("c_psi".into(), c);
    params.insert("psi_mass".into(), psi_mass);
    params.insert("slope".into(), slope);
    params.insert("lhs0".into(), l0);
    Ok(EstimateReport::from_margins("l1", &margins, rhs_max, tol, params))
}

/// Uniform-convergence probe for a sequence of conformal factors
/// with two-sided bounds C₀⁻¹ ≤ uᵢ ≤ C₀ and decreasing L¹ distances:
/// logs the sup- and L¹-distance sequences, verifies the sup sequence
/// decreases beyond `decrease_from` (1-based), and fits the empirical
/// sup-vs-L¹ decay exponent. No quantitative constant is asserted: the
/// Hölder-modulus constant relating the two distances is not
/// constructive, so only the observed decay is reported.
/// Registry name: `uniform-convergence`.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceProbe {
    pub report: EstimateReport,
    pub sup_distances: Vec<f64>,
    pub l1_distances: Vec<f64>,
    pub fitted_exponent: f64,
}

pub fn uniform_convergence_probe(
    members: &[ScalarField],
    limit: &ScalarField,
    bg: &Background,
    c0: f64,
    decrease_from: usize,
    tol: Tolerance,
) -> Result<ConvergenceProbe, EstimatesError> {
    if !(c0 > 0.0) {
        return Err(EstimatesError::SeriesMismatch(format!("C0 must be positive, got {c0}")));
    }
    let mut params = BTreeMap::new();
    params.insert("c0".into(), c0);
    params.insert("members".into(), members.len() as f64);

    let mut sup = Vec::with_capacity(members.len());
    let mut l1 = Vec::with_capacity(members.len());
    for (i, u) in members.iter().enumerate() {
        if u.min() < 1.0 / c0 - tol.slack(1.0 / c0) || u.max() > c0 + tol.slack(c0) {
            let report = EstimateReport::hypothesis_failure(
                "uniform-convergence",
                format!(
                    "member {} violates C0 bounds: range [{}, {}] vs [{}, {}]",
                    i + 1,
                    u.min(),
                    u.max(),
                    1.0 / c0,
                    c0
                ),
                params,
                tol,
            );
            return Ok(ConvergenceProbe {
                report,
                sup_distances: sup,
                l1_distances: l1,
                fitted_exponent: f64::NAN,
            });
        }
        let m = field_metrics(u, limit, bg.vol_weights(), 2.0)?;
        sup.push(m.sup);
        l1.push(m.l1);
    }

    for (i, w) in l1.windows(2).enumerate() {
        if w[1] > w[0] + tol.slack(w[0]) {
            let report = EstimateReport::hypothesis_failure(
                "uniform-convergence",
                format!("L1 distances are not decreasing at i={} ({} -> {})", i + 1, w[0], w[1]),
                params,
                tol,
            );
            return Ok(ConvergenceProbe {
                report,
                sup_distances: sup,
                l1_distances: l1,
                fitted_exponent: f64::NAN,
            });
        }
    }

    // empirical sup vs L1 decay exponent over the decreasing tail
    let pairs: Vec<(f64, f64)> = sup
        .iter()
        .zip(l1.iter())
        .filter(|(s, l)| **s > 0.0 && **l > 0.0)
        .map(|(s, l)| (l.ln(), s.ln()))
        .collect();
    let fitted_exponent = if pairs.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        fit_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    if fitted_exponent.is_finite() {
        params.insert("fitted_exponent".into(), fitted_exponent);
    }

    // conclusion: sup distances decrease beyond the configured index
    let start = decrease_from.saturating_sub(1);
    let mut margins = Vec::new();
    for i in start..sup.len().saturating_sub(1) {
        margins.push(((i + 1) as f64, sup[i] - sup[i + 1]));
    }
    if margins.is_empty() {
        margins.push((start as f64, 0.0));
    }
    let scale = sup.first().copied().unwrap_or(0.0).max(1e-12);
    let report =
        EstimateReport::from_margins("uniform-convergence", &margins, scale, tol, params);
    Ok(ConvergenceProbe { report, sup_distances: sup, l1_distances: l1, fitted_exponent })
}
