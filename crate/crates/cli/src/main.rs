//! `yfl` — command-line laboratory for conformal metric flows on
//! periodic grids.
//!
//! Subcommands: `background`, `flow`, `check`, `experiment`, `yamabe`.
//! Exit codes are a stable contract:
//!
//! * 0 — success / all selected checks hold
//! * 1 — a conclusion failed (an inequality or experiment verdict)
//! * 2 — a hypothesis or precondition failed
//! * 3 — numerical abort (positivity breach, stability collapse)
//! * 4 — usage error (bad flags, files, or config)

mod commands;
mod svg;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "yfl", version, about = "numerical laboratory for conformal metric flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for parallel experiment members
    /// (falls back to the YFL_THREADS environment variable).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Suppress informational output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Args)]
struct CommonIo {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: std::path::PathBuf,

    /// TOML config file supplying defaults for the command's flags.
    #[arg(long)]
    config: Option<std::path::PathBuf>,

    /// Override a config key (repeatable), e.g. --set dt=1e-4.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Construct a background geometry and write its container files.
    Background {
        #[command(flatten)]
        io: CommonIo,
        /// flat | conformally-flat | synthetic
        #[arg(long)]
        kind: Option<String>,
        /// Dimension n >= 3.
        #[arg(long)]
        n: Option<usize>,
        /// Nodes per axis, e.g. "16" or "16,16,16".
        #[arg(long)]
        nodes: Option<String>,
        /// Periods per axis, e.g. "1" or "1,2,1".
        #[arg(long)]
        period: Option<String>,
        /// Conformal factor expression for conformally-flat backgrounds.
        #[arg(long)]
        phi: Option<String>,
        /// Curvature expression for synthetic backgrounds.
        #[arg(long)]
        r0: Option<String>,
    },
    /// Integrate a flow and write monitors, manifest and snapshots.
    Flow {
        #[command(flatten)]
        io: CommonIo,
        /// Directory holding a background written by `yfl background`.
        #[arg(long)]
        background: std::path::PathBuf,
        /// Initial conformal factor as an expression.
        #[arg(long)]
        u0: Option<String>,
        /// Initial conformal factor from a field container.
        #[arg(long)]
        u0_file: Option<std::path::PathBuf>,
        /// normalized | unnormalized
        #[arg(long)]
        mode: Option<String>,
        /// rk4 | semi-implicit
        #[arg(long)]
        stepper: Option<String>,
        #[arg(long)]
        dt: Option<f64>,
        /// Horizon T.
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        #[arg(long)]
        monitor_stride: Option<usize>,
        /// Apply the 2/3-rule dealiasing filter after each step.
        #[arg(long)]
        dealias: bool,
        /// Retain a u snapshot near this time (repeatable).
        #[arg(long = "snapshot-time")]
        snapshot_times: Vec<f64>,
        /// Retain a snapshot every k-th monitor sample.
        #[arg(long)]
        snapshot_stride: Option<usize>,
    },
    /// Run a named inequality check against recorded series.
    Check {
        #[command(flatten)]
        io: CommonIo,
        /// gronwall | ye-min | ye-max | scalar-lower | brendle-sup |
        /// volume-bounds | l1 | uniform-convergence
        #[arg(long)]
        check: String,
        /// Directory of a `yfl flow` run.
        #[arg(long)]
        series: Option<std::path::PathBuf>,
        /// Second run directory (l1 check).
        #[arg(long)]
        series_b: Option<std::path::PathBuf>,
        #[arg(long)]
        kappa: Option<f64>,
        /// Yamabe constant (volume-bounds) or its lower bound (ye-min).
        #[arg(long)]
        y: Option<f64>,
        /// Conserved volume; defaults to the series' initial volume.
        #[arg(long)]
        vol: Option<f64>,
        #[arg(long)]
        r0_min: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        /// δ expression (scalar-lower).
        #[arg(long)]
        delta: Option<String>,
        /// ψ expression (l1).
        #[arg(long)]
        psi: Option<String>,
        /// α expression in t (gronwall).
        #[arg(long)]
        alpha: Option<String>,
        /// β expression in t (gronwall).
        #[arg(long)]
        beta: Option<String>,
        /// Gronwall time horizon.
        #[arg(long, default_value_t = 1.0)]
        t_max: f64,
        /// Gronwall sample count.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        /// Member field containers (uniform-convergence), comma separated.
        #[arg(long)]
        members: Option<String>,
        /// Limit field container (uniform-convergence).
        #[arg(long)]
        limit: Option<std::path::PathBuf>,
        #[arg(long)]
        c0: Option<f64>,
        #[arg(long, default_value_t = 1)]
        decrease_from: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol_abs: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol_rel: f64,
    },
    /// Run a closedness experiment from a spec file.
    Experiment {
        #[command(flatten)]
        io: CommonIo,
        /// Experiment spec (TOML); --config is an alias.
        #[arg(long)]
        spec: Option<std::path::PathBuf>,
    },
    /// Estimate the Yamabe constant of a background by flow descent.
    Yamabe {
        #[command(flatten)]
        io: CommonIo,
        #[arg(long)]
        background: std::path::PathBuf,
        #[arg(long, default_value_t = 4)]
        starts: usize,
        #[arg(long = "t-end", default_value_t = 0.3)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 0.3)]
        amplitude: f64,
        #[arg(long, default_value_t = 2)]
        max_mode: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let threads = cli
        .threads
        .or_else(|| std::env::var("YFL_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        if t > 0 {
            // ignore failure if a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        }
    }

    let outcome = match cli.command {
        Command::Background { io, kind, n, nodes, period, phi, r0 } => {
            commands::background(io, kind, n, nodes, period, phi, r0, cli.quiet)
        }
        Command::Flow {
            io,
            background,
            u0,
            u0_file,
            mode,
            stepper,
            dt,
            t_end,
            monitor_stride,
            dealias,
            snapshot_times,
            snapshot_stride,
        } => commands::flow(
            io,
            background,
            u0,
            u0_file,
            mode,
            stepper,
            dt,
            t_end,
            monitor_stride,
            dealias,
            snapshot_times,
            snapshot_stride,
            cli.quiet,
        ),
        Command::Check {
            io,
            check,
            series,
            series_b,
            kappa,
            y,
            vol,
            r0_min,
            sigma,
            delta,
            psi,
            alpha,
            beta,
            t_max,
            samples,
            members,
            limit,
            c0,
            decrease_from,
            tol_abs,
            tol_rel,
        } => commands::check(commands::CheckArgs {
            io,
            check,
            series,
            series_b,
            kappa,
            y,
            vol,
            r0_min,
            sigma,
            delta,
            psi,
            alpha,
            beta,
            t_max,
            samples,
            members,
            limit,
            c0,
            decrease_from,
            tol_abs,
            tol_rel,
            quiet: cli.quiet,
        }),
        Command::Experiment { io, spec } => commands::experiment(io, spec, cli.quiet),
        Command::Yamabe { io, background, starts, t_end, dt, amplitude, max_mode } => {
            commands::yamabe(io, background, starts, t_end, dt, amplitude, max_mode, cli.quiet)
        }
    };

    match outcome {
        Ok(code) => std::process::exit(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            std::process::exit(failure.code);
        }
    }
}
