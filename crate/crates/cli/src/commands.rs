//! Subcommand implementations and the exit-code mapping.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use yfl_core::conformal::{
    estimate_yamabe_constant, Background, BackgroundKind, YamabeConfig,
};
use yfl_core::estimates::{
    check_l1_estimate, check_max_gronwall_bound, check_min_exponential_bound,
    check_scalar_lower_preservation, check_sup_linear_bound, check_volume_bounds,
    gronwall_bound, report_table, uniform_convergence_probe, EstimateReport,
};
use yfl_core::experiments::{emit_report, parse_spec_toml, run_closedness_experiment, ExperimentError};
use yfl_core::expr::Expr;
use yfl_core::flow::{
    run_flow, samples_from_csv, FlowConfig, FlowMode, RunOutcome, Stepper, TimeSeries,
};
use yfl_core::grid::io::{field_to_bytes, read_field, write_field};
use yfl_core::grid::{make_grid, ScalarField};
use yfl_core::util::{config_hash, content_hash, Tolerance};

use crate::svg;
use crate::CommonIo;

const EXIT_CONCLUSION: i32 = 1;
const EXIT_HYPOTHESIS: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;
const EXIT_USAGE: i32 = 4;

pub struct CliFailure {
    pub code: i32,
    pub message: String,
}

fn usage(msg: impl Into<String>) -> CliFailure {
    CliFailure { code: EXIT_USAGE, message: msg.into() }
}

fn numerical(msg: impl Into<String>) -> CliFailure {
    CliFailure { code: EXIT_NUMERICAL, message: msg.into() }
}

fn io_err(e: std::io::Error, what: &str) -> CliFailure {
    usage(format!("{what}: {e}"))
}

type CliResult = Result<i32, CliFailure>;

/// Merged view of a --config TOML table with --set overrides; explicit
/// flags win over both.
struct ConfigTable(toml::value::Table);

impl ConfigTable {
    fn load(io: &CommonIo) -> Result<ConfigTable, CliFailure> {
        let mut table = match &io.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| io_err(e, "reading --config"))?;
                text.parse::<toml::Value>()
                    .map_err(|e| usage(format!("parsing --config: {e}")))?
                    .as_table()
                    .cloned()
                    .ok_or_else(|| usage("--config must contain a TOML table"))?
            }
            None => toml::value::Table::new(),
        };
        for entry in &io.set {
            let (key, value) = entry
                .split_once('=')
                .ok_or_else(|| usage(format!("--set needs KEY=VALUE, got '{entry}'")))?;
            table.insert(key.trim().to_string(), parse_override(value.trim()));
        }
        if let Some(seed) = io.seed {
            table.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        Ok(ConfigTable(table))
    }

    fn f64(&self, key: &str) -> Option<f64> {
        self.0.get(key).and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
    }

    fn usize(&self, key: &str) -> Option<usize> {
        self.0.get(key).and_then(|v| v.as_integer()).filter(|i| *i >= 0).map(|i| i as usize)
    }

    fn string(&self, key: &str) -> Option<String> {
        self.0.get(key).and_then(|v| v.as_str()).map(|s| s.to_string())
    }

    fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn to_toml_string(&self) -> String {
        toml::to_string(&toml::Value::Table(self.0.clone())).expect("table serializes")
    }
}

fn parse_override(value: &str) -> toml::Value {
    if let Ok(i) = value.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = value.parse::<f64>() {
        return toml::Value::Float(f);
    }
    match value {
        "true" => toml::Value::Boolean(true),
        "false" => toml::Value::Boolean(false),
        _ => toml::Value::String(value.to_string()),
    }
}

fn parse_axis_list(text: &str, n: usize, what: &str) -> Result<Vec<f64>, CliFailure> {
    let parts: Vec<&str> = text.split(',').map(|s| s.trim()).collect();
    let values: Result<Vec<f64>, _> = parts.iter().map(|p| p.parse::<f64>()).collect();
    let values = values.map_err(|e| usage(format!("bad {what} '{text}': {e}")))?;
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        len if len == n => Ok(values),
        len => Err(usage(format!("{what} needs 1 or {n} entries, got {len}"))),
    }
}

// ------------------------------------------------------------ background

pub fn background(
    io: CommonIo,
    kind: Option<String>,
    n: Option<usize>,
    nodes: Option<String>,
    period: Option<String>,
    phi: Option<String>,
    r0: Option<String>,
    quiet: bool,
) -> CliResult {
    let cfg = ConfigTable::load(&io)?;
    let kind = kind.or_else(|| cfg.string("kind")).unwrap_or_else(|| "flat".into());
    let n = n.or_else(|| cfg.usize("n")).unwrap_or(3);
    let nodes_text = nodes.or_else(|| cfg.string("nodes")).unwrap_or_else(|| "32".into());
    let period_text = period.or_else(|| cfg.string("period")).unwrap_or_else(|| "1".into());
    let phi = phi.or_else(|| cfg.string("phi"));
    let r0 = r0.or_else(|| cfg.string("r0"));

    let nodes: Vec<usize> = parse_axis_list(&nodes_text, n, "--nodes")?
        .into_iter()
        .map(|v| v as usize)
        .collect();
    let periods = parse_axis_list(&period_text, n, "--period")?;
    let grid = make_grid(n, nodes, periods).map_err(|e| usage(e.to_string()))?;

    let (bg, provenance) = match kind.as_str() {
        "flat" => (Background::flat(grid.clone()), "flat".to_string()),
        "conformally-flat" => {
            let phi_src = phi.ok_or_else(|| usage("conformally-flat needs --phi"))?;
            let expr = Expr::parse(&phi_src, n).map_err(|e| usage(e.to_string()))?;
            let field = ScalarField::from_expr(&grid, &expr);
            let bg = Background::conformally_flat(grid.clone(), field)
                .map_err(|e| usage(e.to_string()))?;
            (bg, format!("phi={phi_src}"))
        }
        "synthetic" => {
            let r0_src = r0.ok_or_else(|| usage("synthetic needs --r0"))?;
            let expr = Expr::parse(&r0_src, n).map_err(|e| usage(e.to_string()))?;
            let field = ScalarField::from_expr(&grid, &expr);
            let bg =
                Background::synthetic(grid.clone(), field).map_err(|e| usage(e.to_string()))?;
            (bg, format!("r0={r0_src}"))
        }
        other => return Err(usage(format!("unknown background kind '{other}'"))),
    };

    std::fs::create_dir_all(&io.out).map_err(|e| io_err(e, "creating output directory"))?;
    let mut manifest = bg.manifest(&provenance);
    let hash = config_hash(&manifest);
    for (name, field) in [
        ("r0.field", bg.r0()),
        ("vol_weights.field", bg.vol_weights()),
        ("conformal_to_flat.field", bg.conformal_to_flat()),
    ] {
        let path = io.out.join(name);
        write_field(&path, field).map_err(|e| io_err(std::io::Error::other(e.to_string()), "writing field"))?;
        manifest.push_str(&format!(
            "{}={}\n",
            name.trim_end_matches(".field"),
            name
        ));
        manifest.push_str(&format!(
            "{}_sha256={}\n",
            name.trim_end_matches(".field"),
            content_hash(&field_to_bytes(field))
        ));
    }
    manifest.push_str(&format!("config_hash={hash}\n"));
    std::fs::write(io.out.join("manifest.txt"), &manifest)
        .map_err(|e| io_err(e, "writing manifest"))?;
    if !quiet {
        println!("background written to {}", io.out.display());
        print!("{manifest}");
    }
    Ok(0)
}

/// Load a background from a directory written by `yfl background`.
fn load_background(dir: &Path) -> Result<Arc<Background>, CliFailure> {
    let manifest = std::fs::read_to_string(dir.join("manifest.txt"))
        .map_err(|e| io_err(e, "reading background manifest"))?;
    let get = |key: &str| -> Option<&str> {
        manifest
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{key}=")))
    };
    let kind = get("kind").ok_or_else(|| usage("manifest missing 'kind'"))?;
    let n: usize = get("n")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| usage("manifest missing 'n'"))?;
    let nodes: Vec<usize> = get("nodes")
        .ok_or_else(|| usage("manifest missing 'nodes'"))?
        .split(',')
        .map(|v| v.parse().map_err(|_| usage("bad nodes in manifest")))
        .collect::<Result<_, _>>()?;
    let periods: Vec<f64> = get("periods")
        .ok_or_else(|| usage("manifest missing 'periods'"))?
        .split(',')
        .map(|v| v.parse().map_err(|_| usage("bad periods in manifest")))
        .collect::<Result<_, _>>()?;
    let grid = make_grid(n, nodes, periods).map_err(|e| usage(e.to_string()))?;
    let bg = match kind {
        "Flat" => Background::flat(grid),
        "ConformallyFlat" => {
            let phi = read_field(&dir.join("conformal_to_flat.field"))
                .map_err(|e| usage(format!("reading conformal_to_flat: {e}")))?;
            Background::conformally_flat(grid, phi).map_err(|e| usage(e.to_string()))?
        }
        "Synthetic" => {
            let r0 = read_field(&dir.join("r0.field"))
                .map_err(|e| usage(format!("reading r0: {e}")))?;
            Background::synthetic(grid, r0).map_err(|e| usage(e.to_string()))?
        }
        other => return Err(usage(format!("unknown background kind '{other}' in manifest"))),
    };
    Ok(Arc::new(bg))
}

// ------------------------------------------------------------------ flow

#[derive(Serialize, Deserialize)]
struct RunManifest {
    config_hash: String,
    n: usize,
    nodes: Vec<usize>,
    periods: Vec<f64>,
    background_dir: String,
    background_kind: String,
    r0_min: f64,
    r0_max: f64,
    volume0: f64,
    mode: FlowMode,
    stepper: Stepper,
    dt: f64,
    horizon: f64,
    monitor_stride: usize,
    dealias: bool,
    snapshot_times: Vec<f64>,
    snapshot_stride: usize,
    u0_source: String,
    u0_hash: String,
    outcome: RunOutcome,
    samples: usize,
    snapshot_samples: Vec<usize>,
}

#[allow(clippy::too_many_arguments)]
pub fn flow(
    io: CommonIo,
    background_dir: PathBuf,
    u0: Option<String>,
    u0_file: Option<PathBuf>,
    mode: Option<String>,
    stepper: Option<String>,
    dt: Option<f64>,
    t_end: Option<f64>,
    monitor_stride: Option<usize>,
    dealias: bool,
    snapshot_times: Vec<f64>,
    snapshot_stride: Option<usize>,
    quiet: bool,
) -> CliResult {
    let cfg_table = ConfigTable::load(&io)?;
    let bg = load_background(&background_dir)?;
    let grid = bg.grid().clone();

    let (u0_field, u0_source) = match (u0.or_else(|| cfg_table.string("u0")), u0_file) {
        (Some(expr_src), None) => {
            let expr = Expr::parse(&expr_src, grid.n()).map_err(|e| usage(e.to_string()))?;
            (ScalarField::from_expr(&grid, &expr), format!("expr:{expr_src}"))
        }
        (None, Some(path)) => {
            let field = read_field(&path).map_err(|e| usage(format!("reading --u0-file: {e}")))?;
            if field.grid() != &grid {
                return Err(usage("--u0-file grid does not match the background"));
            }
            (field, format!("file:{}", path.display()))
        }
        (None, None) => return Err(usage("one of --u0 or --u0-file is required")),
        (Some(_), Some(_)) => return Err(usage("--u0 and --u0-file are mutually exclusive")),
    };
    if !(u0_field.min() > 0.0) {
        return Err(usage(format!("u0 must be positive (min {})", u0_field.min())));
    }

    let mode = match mode.or_else(|| cfg_table.string("mode")).as_deref() {
        Some("unnormalized") => FlowMode::Unnormalized,
        Some("normalized") | None => FlowMode::Normalized,
        Some(other) => return Err(usage(format!("unknown mode '{other}'"))),
    };
    let stepper = match stepper.or_else(|| cfg_table.string("stepper")).as_deref() {
        Some("semi-implicit") => Stepper::SemiImplicit,
        Some("rk4") | None => Stepper::ExplicitRk4,
        Some(other) => return Err(usage(format!("unknown stepper '{other}'"))),
    };
    let dt = dt.or_else(|| cfg_table.f64("dt")).unwrap_or(1e-4);
    let horizon = t_end.or_else(|| cfg_table.f64("T")).unwrap_or(0.5);
    let stride = monitor_stride.or_else(|| cfg_table.usize("monitor_stride")).unwrap_or(10);

    let flow_cfg = FlowConfig::new(mode, dt, horizon, stepper, stride)
        .map_err(|e| usage(e.to_string()))?
        .with_dealias(dealias)
        .with_snapshot_times(snapshot_times.clone())
        .with_snapshot_stride(snapshot_stride.unwrap_or(0));

    let canonical = format!(
        "background={}\nmode={mode:?}\nstepper={stepper:?}\ndt={dt}\nT={horizon}\n\
         monitor_stride={stride}\ndealias={dealias}\nsnapshot_times={snapshot_times:?}\n\
         snapshot_stride={}\nu0={u0_source}\n",
        background_dir.display(),
        snapshot_stride.unwrap_or(0),
    );
    let hash = config_hash(&canonical);

    let series = run_flow(&u0_field, &bg, &flow_cfg);

    std::fs::create_dir_all(&io.out).map_err(|e| io_err(e, "creating output directory"))?;
    std::fs::write(io.out.join("monitors.csv"), series.to_csv(Some(&hash)))
        .map_err(|e| io_err(e, "writing monitors.csv"))?;
    if !series.snapshots().is_empty() {
        std::fs::create_dir_all(io.out.join("snapshots"))
            .map_err(|e| io_err(e, "creating snapshots directory"))?;
        for (idx, field) in series.snapshots() {
            write_field(
                &io.out.join("snapshots").join(format!("sample_{idx:06}.field")),
                field,
            )
            .map_err(|e| usage(format!("writing snapshot: {e}")))?;
        }
    }
    write_monitor_charts(&io.out, &series)?;

    let manifest = RunManifest {
        config_hash: hash,
        n: grid.n(),
        nodes: grid.nodes().to_vec(),
        periods: grid.periods().to_vec(),
        background_dir: background_dir.display().to_string(),
        background_kind: format!("{:?}", bg.kind()),
        r0_min: bg.r0_min(),
        r0_max: bg.r0_max(),
        volume0: bg.volume0(),
        mode,
        stepper,
        dt,
        horizon,
        monitor_stride: stride,
        dealias,
        snapshot_times,
        snapshot_stride: snapshot_stride.unwrap_or(0),
        u0_source,
        u0_hash: content_hash(&field_to_bytes(&u0_field)),
        outcome: series.outcome().clone(),
        samples: series.samples().len(),
        snapshot_samples: series.snapshots().iter().map(|(i, _)| *i).collect(),
    };
    std::fs::write(
        io.out.join("run.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )
    .map_err(|e| io_err(e, "writing run.json"))?;

    match series.outcome() {
        RunOutcome::Completed => {
            if !quiet {
                println!(
                    "run completed: {} samples, volume drift {:.3e}",
                    series.samples().len(),
                    series
                        .samples()
                        .iter()
                        .map(|s| (s.volume - series.samples()[0].volume).abs()
                            / series.samples()[0].volume)
                        .fold(0.0f64, f64::max)
                );
            }
            Ok(0)
        }
        RunOutcome::Aborted { t, reason, .. } => {
            Err(numerical(format!("flow aborted at t={t}: {reason} (partial series retained)")))
        }
    }
}

fn write_monitor_charts(out: &Path, series: &TimeSeries) -> Result<(), CliFailure> {
    let plots = out.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| io_err(e, "creating plots directory"))?;
    let t: Vec<f64> = series.samples().iter().map(|s| s.t).collect();
    let columns: [(&str, Box<dyn Fn(&yfl_core::flow::Sample) -> f64>); 6] = [
        ("volume", Box::new(|s| s.volume)),
        ("r", Box::new(|s| s.r)),
        ("total_scalar", Box::new(|s| s.total_scalar)),
        ("u_min", Box::new(|s| s.u_min)),
        ("u_max", Box::new(|s| s.u_max)),
        ("inf_R", Box::new(|s| s.inf_r)),
    ];
    for (name, getter) in columns {
        let ys: Vec<f64> = series.samples().iter().map(|s| getter(s)).collect();
        let chart = svg::line_chart(name, &t, &ys);
        std::fs::write(plots.join(format!("{name}.svg")), chart)
            .map_err(|e| io_err(e, "writing chart"))?;
    }
    Ok(())
}

/// Load a series directory written by `yfl flow`.
fn load_series(dir: &Path) -> Result<(TimeSeries, Arc<Background>, RunManifest), CliFailure> {
    let manifest_text = std::fs::read_to_string(dir.join("run.json"))
        .map_err(|e| io_err(e, "reading run.json"))?;
    let manifest: RunManifest = serde_json::from_str(&manifest_text)
        .map_err(|e| usage(format!("parsing run.json: {e}")))?;
    let csv = std::fs::read_to_string(dir.join("monitors.csv"))
        .map_err(|e| io_err(e, "reading monitors.csv"))?;
    let samples = samples_from_csv(&csv).map_err(|e| usage(e.to_string()))?;
    let mut snapshots = Vec::new();
    for idx in &manifest.snapshot_samples {
        let path = dir.join("snapshots").join(format!("sample_{idx:06}.field"));
        let field = read_field(&path).map_err(|e| usage(format!("reading snapshot: {e}")))?;
        snapshots.push((*idx, field));
    }
    let series = TimeSeries::from_parts(
        manifest.mode,
        manifest.n,
        manifest.dt,
        manifest.monitor_stride,
        samples,
        snapshots,
        manifest.outcome.clone(),
    );
    // background_dir is stored as given on the command line; resolve it
    // against the current working directory like the original invocation
    let bg = load_background(&PathBuf::from(&manifest.background_dir))?;
    Ok((series, bg, manifest))
}

// ----------------------------------------------------------------- check

pub struct CheckArgs {
    pub io: CommonIo,
    pub check: String,
    pub series: Option<PathBuf>,
    pub series_b: Option<PathBuf>,
    pub kappa: Option<f64>,
    pub y: Option<f64>,
    pub vol: Option<f64>,
    pub r0_min: Option<f64>,
    pub sigma: Option<f64>,
    pub delta: Option<String>,
    pub psi: Option<String>,
    pub alpha: Option<String>,
    pub beta: Option<String>,
    pub t_max: f64,
    pub samples: usize,
    pub members: Option<String>,
    pub limit: Option<PathBuf>,
    pub c0: Option<f64>,
    pub decrease_from: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub quiet: bool,
}

pub fn check(args: CheckArgs) -> CliResult {
    let tol = Tolerance::new(args.tol_abs, args.tol_rel);
    let estimate = |e: yfl_core::estimates::EstimatesError| -> CliFailure {
        usage(e.to_string())
    };

    let report: EstimateReport = match args.check.as_str() {
        "gronwall" => gronwall_check(&args)?,
        "ye-min" => {
            let (series, bg, _) = load_series(args.series.as_deref().ok_or_else(|| usage("--series required"))?)?;
            let vol = args.vol.unwrap_or_else(|| series.samples()[0].volume);
            check_min_exponential_bound(&series, &bg, args.y.unwrap_or(0.0), vol, tol)
                .map_err(estimate)?
        }
        "ye-max" => {
            let (series, bg, manifest) =
                load_series(args.series.as_deref().ok_or_else(|| usage("--series required"))?)?;
            let kappa = args.kappa.unwrap_or_else(|| series.samples()[0].total_scalar);
            let vol = args.vol.unwrap_or_else(|| series.samples()[0].volume);
            let r0_min = args.r0_min.unwrap_or(manifest.r0_min);
            check_max_gronwall_bound(&series, &bg, kappa, vol, r0_min, tol).map_err(estimate)?
        }
        "scalar-lower" => {
            let (series, bg, _) =
                load_series(args.series.as_deref().ok_or_else(|| usage("--series required"))?)?;
            let delta_src = args.delta.as_deref().ok_or_else(|| usage("--delta required"))?;
            let expr = Expr::parse(delta_src, bg.grid().n()).map_err(|e| usage(e.to_string()))?;
            let delta = ScalarField::from_expr(bg.grid(), &expr);
            check_scalar_lower_preservation(&series, &delta, tol).map_err(estimate)?
        }
        "brendle-sup" => {
            let (series, _, _) =
                load_series(args.series.as_deref().ok_or_else(|| usage("--series required"))?)?;
            let kappa = args.kappa.unwrap_or_else(|| series.samples()[0].total_scalar);
            let vol = args.vol.unwrap_or_else(|| series.samples()[0].volume);
            let sigma = args.sigma.unwrap_or(1.0);
            check_sup_linear_bound(&series, kappa, vol, sigma, tol).map_err(estimate)?
        }
        "volume-bounds" => {
            let (series, _, _) =
                load_series(args.series.as_deref().ok_or_else(|| usage("--series required"))?)?;
            let kappa = args.kappa.unwrap_or_else(|| series.samples()[0].total_scalar);
            check_volume_bounds(&series, kappa, args.y.unwrap_or(0.0), tol).map_err(estimate)?
        }
        "l1" => {
            let (series_a, bg, _) =
                load_series(args.series.as_deref().ok_or_else(|| usage("--series required"))?)?;
            let (series_b, _, _) = load_series(
                args.series_b.as_deref().ok_or_else(|| usage("--series-b required"))?,
            )?;
            let psi_src = args.psi.as_deref().unwrap_or("1");
            let expr = Expr::parse(psi_src, bg.grid().n()).map_err(|e| usage(e.to_string()))?;
            let psi = ScalarField::from_expr(bg.grid(), &expr);
            check_l1_estimate(&series_a, &series_b, &bg, &psi, tol).map_err(estimate)?
        }
        "uniform-convergence" => {
            let members_arg =
                args.members.as_deref().ok_or_else(|| usage("--members required"))?;
            let limit_path = args.limit.as_deref().ok_or_else(|| usage("--limit required"))?;
            let c0 = args.c0.ok_or_else(|| usage("--c0 required"))?;
            let limit = read_field(limit_path).map_err(|e| usage(e.to_string()))?;
            let mut members = Vec::new();
            for part in members_arg.split(',') {
                members.push(read_field(Path::new(part.trim())).map_err(|e| usage(e.to_string()))?);
            }
            let bg = Arc::new(Background::flat(limit.grid().clone()));
            let probe =
                uniform_convergence_probe(&members, &limit, &bg, c0, args.decrease_from, tol)
                    .map_err(estimate)?;
            write_probe_log(&args.io.out, &probe)?;
            probe.report
        }
        other => return Err(usage(format!("unknown check '{other}'"))),
    };

    std::fs::create_dir_all(&args.io.out).map_err(|e| io_err(e, "creating output directory"))?;
    std::fs::write(args.io.out.join("report.json"), report.to_json() + "\n")
        .map_err(|e| io_err(e, "writing report.json"))?;
    let table = report_table(std::slice::from_ref(&report));
    std::fs::write(args.io.out.join("report.txt"), &table)
        .map_err(|e| io_err(e, "writing report.txt"))?;
    if !args.quiet {
        print!("{table}");
    }
    if report.hypothesis_failure.is_some() {
        Ok(EXIT_HYPOTHESIS)
    } else if report.holds {
        Ok(0)
    } else {
        Ok(EXIT_CONCLUSION)
    }
}

fn write_probe_log(
    out: &Path,
    probe: &yfl_core::estimates::ConvergenceProbe,
) -> Result<(), CliFailure> {
    std::fs::create_dir_all(out).map_err(|e| io_err(e, "creating output directory"))?;
    let mut csv = String::from("i,sup_distance,l1_distance\n");
    for (i, (s, l)) in probe.sup_distances.iter().zip(probe.l1_distances.iter()).enumerate() {
        csv.push_str(&format!("{},{s},{l}\n", i + 1));
    }
    std::fs::write(out.join("probe.csv"), csv).map_err(|e| io_err(e, "writing probe.csv"))
}

/// Engine-level verification: evaluate the bound curve for α, β given
/// as expressions in t, and compare against an independent Picard
/// solution of the equality case u = α + ∫βu, which the bound must
/// dominate.
fn gronwall_check(args: &CheckArgs) -> Result<EstimateReport, CliFailure> {
    let alpha_src = args.alpha.as_deref().ok_or_else(|| usage("--alpha required"))?;
    let beta_src = args.beta.as_deref().ok_or_else(|| usage("--beta required"))?;
    let alpha_expr = Expr::parse(alpha_src, 1).map_err(|e| usage(e.to_string()))?;
    let beta_expr = Expr::parse(beta_src, 1).map_err(|e| usage(e.to_string()))?;
    if args.samples < 8 {
        return Err(usage("--samples must be at least 8"));
    }
    let n = args.samples;
    let t: Vec<f64> = (0..n).map(|i| args.t_max * i as f64 / (n - 1) as f64).collect();
    let alpha: Vec<f64> = t.iter().map(|&s| alpha_expr.eval(&[s])).collect();
    let beta: Vec<f64> = t.iter().map(|&s| beta_expr.eval(&[s])).collect();
    let bound = gronwall_bound(&alpha, &beta, &t).map_err(|e| usage(e.to_string()))?;

    // Picard iteration for the equality case
    let mut u = alpha.clone();
    for _ in 0..64 {
        let mut integral = vec![0.0f64; n];
        for i in 1..n {
            integral[i] = integral[i - 1]
                + 0.5 * (t[i] - t[i - 1]) * (beta[i] * u[i] + beta[i - 1] * u[i - 1]);
        }
        for i in 0..n {
            u[i] = alpha[i] + integral[i];
        }
    }

    let mut csv = String::from("t,alpha,beta,bound,equality_solution\n");
    for i in 0..n {
        csv.push_str(&format!("{},{},{},{},{}\n", t[i], alpha[i], beta[i], bound[i], u[i]));
    }
    std::fs::create_dir_all(&args.io.out).map_err(|e| io_err(e, "creating output directory"))?;
    std::fs::write(args.io.out.join("bound.csv"), csv)
        .map_err(|e| io_err(e, "writing bound.csv"))?;

    let margins: Vec<(f64, f64)> =
        t.iter().zip(bound.iter().zip(u.iter())).map(|(&ti, (b, ui))| (ti, b - ui)).collect();
    let (worst_time, worst_margin) = margins
        .iter()
        .copied()
        .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite"))
        .unwrap();
    let tol = Tolerance::new(args.tol_abs, args.tol_rel);
    let mut parameters = std::collections::BTreeMap::new();
    parameters.insert("t_max".to_string(), args.t_max);
    parameters.insert("samples".to_string(), n as f64);
    Ok(EstimateReport {
        name: "gronwall".into(),
        holds: worst_margin >= -tol.slack(bound.iter().fold(0.0f64, |a, b| a.max(b.abs()))),
        worst_margin,
        worst_time,
        parameters,
        tolerance: tol,
        hypothesis_failure: None,
    })
}

// ------------------------------------------------------------ experiment

fn experiment_exit_code(e: &ExperimentError) -> i32 {
    match e {
        ExperimentError::MemberFlowAborted { .. } | ExperimentError::Flow(_) => EXIT_NUMERICAL,
        ExperimentError::Generator(_) => EXIT_HYPOTHESIS,
        _ => EXIT_USAGE,
    }
}

pub fn experiment(io: CommonIo, spec_path: Option<PathBuf>, quiet: bool) -> CliResult {
    let spec_path = spec_path.or_else(|| io.config.clone());
    let table = {
        let io_for_table = CommonIo {
            out: io.out.clone(),
            config: spec_path.clone(),
            set: io.set.clone(),
            seed: io.seed,
        };
        ConfigTable::load(&io_for_table)?
    };
    if table.is_empty() {
        return Err(usage("experiment needs --spec (or --config) pointing to a TOML file"));
    }
    let spec = parse_spec_toml(&table.to_toml_string())
        .map_err(|e| CliFailure { code: EXIT_USAGE, message: e.to_string() })?;

    let result = run_closedness_experiment(&spec).map_err(|e| CliFailure {
        code: experiment_exit_code(&e),
        message: e.to_string(),
    })?;
    std::fs::create_dir_all(&io.out).map_err(|e| io_err(e, "creating output directory"))?;
    emit_report(&result, &io.out)
        .map_err(|e| CliFailure { code: EXIT_USAGE, message: e.to_string() })?;

    // distance-vs-i and limit-run charts
    let plots = io.out.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| io_err(e, "creating plots directory"))?;
    let idx: Vec<f64> = (1..=result.report.sup_distance_tstar.len()).map(|i| i as f64).collect();
    std::fs::write(
        plots.join("sup_distance_tstar.svg"),
        svg::line_chart("sup distance at t*", &idx, &result.report.sup_distance_tstar),
    )
    .map_err(|e| io_err(e, "writing chart"))?;
    std::fs::write(
        plots.join("sup_distance_t0.svg"),
        svg::line_chart("sup distance at t=0", &idx, &result.report.sup_distance_t0),
    )
    .map_err(|e| io_err(e, "writing chart"))?;
    write_monitor_charts(&io.out.join("limit_run"), &result.limit_series)?;
    std::fs::write(
        io.out.join("limit_run").join("monitors.csv"),
        result.limit_series.to_csv(Some(&result.report.config_hash)),
    )
    .map_err(|e| io_err(e, "writing limit monitors"))?;

    if !quiet {
        println!(
            "experiment {}: {} (conclusion margin {:.3e}, continuity {:.2e})",
            result.report.family,
            if result.report.pass { "PASS" } else { "FAIL" },
            result.report.conclusion_margin,
            result.report.continuity_rel_err
        );
        for note in &result.report.notes {
            println!("note: {note}");
        }
    }
    if result.report.pass {
        Ok(0)
    } else {
        Ok(EXIT_CONCLUSION)
    }
}

// ---------------------------------------------------------------- yamabe

#[allow(clippy::too_many_arguments)]
pub fn yamabe(
    io: CommonIo,
    background_dir: PathBuf,
    starts: usize,
    t_end: f64,
    dt: f64,
    amplitude: f64,
    max_mode: usize,
    quiet: bool,
) -> CliResult {
    let cfg_table = ConfigTable::load(&io)?;
    let bg = load_background(&background_dir)?;
    let cfg = YamabeConfig {
        starts,
        horizon: t_end,
        dt,
        seed: cfg_table.usize("seed").map(|s| s as u64).unwrap_or(1),
        amplitude,
        max_mode,
    };
    let estimate = estimate_yamabe_constant(&bg, &cfg)
        .map_err(|e| numerical(e.to_string()))?;
    std::fs::create_dir_all(&io.out).map_err(|e| io_err(e, "creating output directory"))?;
    let payload = serde_json::json!({
        "config_hash": config_hash(&format!(
            "background={}\nstarts={starts}\nT={t_end}\ndt={dt}\nseed={}\namplitude={amplitude}\nmax_mode={max_mode}\n",
            background_dir.display(), cfg.seed
        )),
        "estimate": estimate,
        "background_kind": format!("{:?}", bg.kind()),
        "operator_level": bg.kind() == BackgroundKind::Synthetic,
    });
    std::fs::write(
        io.out.join("yamabe.json"),
        serde_json::to_string_pretty(&payload).expect("serializes") + "\n",
    )
    .map_err(|e| io_err(e, "writing yamabe.json"))?;
    if !quiet {
        println!(
            "yamabe estimate: {} (best start {})",
            estimate.value, estimate.best_start
        );
        for failure in estimate.failures.iter().flatten() {
            println!("note: {failure}");
        }
    }
    Ok(0)
}
