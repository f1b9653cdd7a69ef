//! Artifact emission for experiment results: machine JSON, distance
//! tables, and per-run monitor curves as plot-ready CSV.

use std::path::{Path, PathBuf};

use super::{ExperimentError, ExperimentResult};

/// Write the report and its time-series data under `out_dir`:
///
/// * `report.json` — the full [`super::ClosednessReport`]
/// * `distances.csv` — per-member distance-vs-i curves
/// * `runs/limit.csv`, `runs/member_<i>.csv` — monitor curves
///
/// Emission is deterministic: identical results produce byte-identical
/// files. Returns the paths written.
pub fn emit_report(
    result: &ExperimentResult,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(out_dir.join("runs"))?;
    let mut written = Vec::new();
    let hash = &result.report.config_hash;

    let report_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&result.report)
        .expect("report serializes")
        + "\n";
    std::fs::write(&report_path, json)?;
    written.push(report_path);

    let mut distances = String::new();
    distances.push_str(&format!("# config_hash={hash}\n"));
    distances.push_str("i,sup_t0,l1_t0,lp_t0,sup_tstar,total_scalar\n");
    let r = &result.report;
    for i in 0..r.sup_distance_t0.len() {
        distances.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            r.sup_distance_t0[i],
            r.l1_distance_t0[i],
            r.lp_distance_t0[i],
            r.sup_distance_tstar[i],
            r.member_total_scalars[i]
        ));
    }
    let distances_path = out_dir.join("distances.csv");
    std::fs::write(&distances_path, distances)?;
    written.push(distances_path);

    let limit_path = out_dir.join("runs").join("limit.csv");
    std::fs::write(&limit_path, result.limit_series.to_csv(Some(hash)))?;
    written.push(limit_path);
    for (i, series) in result.member_series.iter().enumerate() {
        let path = out_dir.join("runs").join(format!("member_{}.csv", i + 1));
        std::fs::write(&path, series.to_csv(Some(hash)))?;
        written.push(path);
    }
    Ok(written)
}
