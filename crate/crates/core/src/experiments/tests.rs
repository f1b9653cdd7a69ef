use std::f64::consts::TAU;

use super::*;
use crate::grid::integrate;

fn base_spec(family: Family, members: usize) -> ExperimentSpec {
    ExperimentSpec {
        dimension: 3,
        nodes: vec![16; 3],
        periods: vec![1.0; 3],
        background: BackgroundChoice::Flat,
        limit: "1 + 0.3*sin(2*pi*x1)".into(),
        family,
        members,
        amplitudes: AmplitudeSchedule::Reciprocal,
        kappa: KappaChoice::Auto,
        delta: None,
        c0: None,
        mode: FlowMode::Normalized,
        stepper: Stepper::ExplicitRk4,
        dt: 2e-4,
        horizon: 0.04,
        monitor_stride: 10,
        seed: 7,
        decrease_from: 3,
        eta_amplitude: 0.25,
    }
}

#[test]
fn toml_spec_round_trips_the_documented_keys() {
    let text = r#"
        dimension = 3
        grid = [16, 16, 16]
        periods = [1.0, 1.0, 1.0]
        background = "flat"
        u = "1 + 0.3*sin(2*pi*x1)"
        family = "c0"
        N = 8
        amplitudes = "1/i"
        kappa = "auto"
        dt = 1e-4
        T = 0.1
        monitor_stride = 10
        seed = 7
    "#;
    let spec = parse_spec_toml(text).unwrap();
    assert_eq!(spec.members, 8);
    assert_eq!(spec.family, Family::C0Convergent);
    assert_eq!(spec.kappa, KappaChoice::Auto);
    assert_eq!(spec.mode, FlowMode::Normalized);
    assert_eq!(spec.config_hash().len(), 64);

    let text = r#"
        dimension = 3
        grid = 16
        background = "synthetic"
        r0 = "6"
        u = "1"
        family = "lp-only"
        N = 4
        delta = "0"
        dt = 1e-4
        T = 0.05
    "#;
    let spec = parse_spec_toml(text).unwrap();
    assert!(matches!(spec.background, BackgroundChoice::Synthetic { .. }));
    assert_eq!(spec.nodes, vec![16, 16, 16]);

    assert!(parse_spec_toml("dimension = 3").is_err());
    assert!(parse_spec_toml("this is not toml at all [").is_err());
}

#[test]
fn c0_family_sup_distances_follow_the_schedule() {
    let spec = base_spec(Family::C0Convergent, 5);
    let grid = spec.build_grid().unwrap();
    let bg = spec.build_background(&grid).unwrap();
    let limit = ScalarField::from_fn(&grid, |x| 1.0 + 0.3 * (TAU * x[0]).sin());
    let members = generate_sequence(&spec, &bg, &limit).unwrap();
    validate_sequence(&spec, &bg, &limit, &members).unwrap();
    let one = ScalarField::constant(&grid, 1.0);
    let mut sups = Vec::new();
    for m in &members {
        let d = crate::grid::field_metrics(m, &limit, &one, 6.0).unwrap();
        sups.push(d.sup);
    }
    // sup distance = aᵢ·‖η‖_sup with a single shape: exactly 1/i scaling
    for (i, s) in sups.iter().enumerate() {
        let expected = sups[0] / (i as f64 + 1.0);
        assert!((s - expected).abs() < 1e-12, "member {}: {s} vs {expected}", i + 1);
    }
    // members approach the limit's energy from above
    let limit_metric = ConformalMetric::new(bg.clone(), limit.clone()).unwrap();
    let limit_total = total_scalar(&limit_metric);
    for m in &members {
        let t = total_scalar(&ConformalMetric::new(bg.clone(), m.clone()).unwrap());
        assert!(t >= limit_total - 1e-10, "member energy {t} below limit {limit_total}");
    }
}

#[test]
fn lp_only_family_keeps_height_while_lp_shrinks() {
    let mut spec = base_spec(Family::LpOnlyConvergent, 4);
    spec.nodes = vec![32; 3];
    let grid = spec.build_grid().unwrap();
    let bg = spec.build_background(&grid).unwrap();
    let limit = ScalarField::constant(&grid, 1.0);
    let members = generate_sequence(&spec, &bg, &limit).unwrap();
    validate_sequence(&spec, &bg, &limit, &members).unwrap();
    let one = ScalarField::constant(&grid, 1.0);
    let mut lps = Vec::new();
    for m in &members {
        let d = crate::grid::field_metrics(m, &limit, &one, 6.0).unwrap();
        assert!(d.sup >= 0.99, "fixed height lost: {}", d.sup);
        lps.push(d.lp);
    }
    for w in lps.windows(2) {
        assert!(w[1] < w[0], "L6 distances must shrink: {lps:?}");
    }
}

#[test]
fn l1_family_respects_bounds_and_l1_decreases() {
    let mut spec = base_spec(Family::L1WithBounds, 4);
    spec.c0 = Some(2.5);
    spec.amplitudes = AmplitudeSchedule::ReciprocalSqrt;
    spec.mode = FlowMode::Unnormalized;
    let grid = spec.build_grid().unwrap();
    let bg = spec.build_background(&grid).unwrap();
    let limit = ScalarField::from_fn(&grid, |x| 1.0 + 0.3 * (TAU * x[0]).sin());
    let members = generate_sequence(&spec, &bg, &limit).unwrap();
    validate_sequence(&spec, &bg, &limit, &members).unwrap();
    for m in &members {
        assert!(m.min() >= 1.0 / 2.5 - 1e-12);
        assert!(m.max() <= 2.5 + 1e-12);
    }
}

#[test]
fn l1_family_requires_c0() {
    let spec = base_spec(Family::L1WithBounds, 2);
    let grid = spec.build_grid().unwrap();
    let bg = spec.build_background(&grid).unwrap();
    let limit = ScalarField::constant(&grid, 1.0);
    assert!(matches!(
        generate_sequence(&spec, &bg, &limit),
        Err(ExperimentError::Spec(_))
    ));
}

#[test]
fn empty_experiment_passes_with_empty_sequences() {
    let spec = base_spec(Family::C0Convergent, 0);
    let result = run_closedness_experiment(&spec).unwrap();
    assert!(result.report.pass, "notes: {:?}", result.report.notes);
    assert!(result.report.member_total_scalars.is_empty());
    assert!(result.report.sup_distance_tstar.is_empty());
    assert!(result.member_series.is_empty());
    assert!((result.report.conclusion_margin).abs() < 1e-12);
}

#[test]
fn flat_c0_experiment_passes() {
    let mut spec = base_spec(Family::C0Convergent, 5);
    spec.decrease_from = 1;
    let result = run_closedness_experiment(&spec).unwrap();
    let r = &result.report;
    assert!(r.pass, "report notes: {:?}", r.notes);
    assert!(!r.operator_level);
    assert!(r.conclusion_margin >= -1e-6);
    assert!(r.limit_monotone);
    assert!(r.member_monotone.iter().all(|&b| b));
    assert!(r.continuity_rel_err <= 1e-4, "continuity {}", r.continuity_rel_err);
    for w in r.sup_distance_tstar.windows(2) {
        assert!(w[1] < w[0], "t* distances not decreasing: {:?}", r.sup_distance_tstar);
    }
}

#[test]
fn positive_synthetic_requires_delta() {
    let mut spec = base_spec(Family::LpOnlyConvergent, 2);
    spec.background = BackgroundChoice::Synthetic { r0: "6".into() };
    spec.limit = "1".into();
    let err = run_closedness_experiment(&spec).unwrap_err();
    assert!(err.to_string().contains("delta"), "{err}");
}

#[test]
fn synthetic_experiment_is_labeled_operator_level() {
    let mut spec = base_spec(Family::C0Convergent, 2);
    spec.background = BackgroundChoice::Synthetic { r0: "-1".into() };
    spec.decrease_from = 1;
    let result = run_closedness_experiment(&spec).unwrap();
    assert!(result.report.operator_level);
    let json = serde_json::to_string(&result.report).unwrap();
    assert!(json.contains("operator_level"));
    assert!(json.contains("operator-level"));
}

#[test]
fn emission_is_deterministic_and_complete() {
    let spec = base_spec(Family::C0Convergent, 2);
    let result = run_closedness_experiment(&spec).unwrap();
    let dir = std::env::temp_dir().join(format!("yfl-emit-test-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let written = emit_report(&result, &dir).unwrap();
    assert!(written.iter().any(|p| p.ends_with("report.json")));
    assert!(written.iter().any(|p| p.ends_with("distances.csv")));
    assert!(written.iter().any(|p| p.ends_with("member_2.csv")));
    let first: Vec<Vec<u8>> =
        written.iter().map(|p| std::fs::read(p).unwrap()).collect();
    emit_report(&result, &dir).unwrap();
    for (path, bytes) in written.iter().zip(first.iter()) {
        assert_eq!(&std::fs::read(path).unwrap(), bytes, "re-emission changed {path:?}");
    }
    let report_text = std::fs::read_to_string(dir.join("report.json")).unwrap();
    assert!(report_text.contains(&result.report.config_hash));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn member_energies_are_revalidated_against_kappa() {
    // a fixed κ below the members' energies must be rejected as a
    // hypothesis violation
    let mut spec = base_spec(Family::C0Convergent, 3);
    spec.kappa = KappaChoice::Fixed(-1e6);
    let err = run_closedness_experiment(&spec).unwrap_err();
    assert!(err.to_string().contains("total-scalar bound"), "{err}");
}

#[test]
fn generated_sequences_are_deterministic_in_the_seed() {
    let spec = base_spec(Family::C0Convergent, 3);
    let grid = spec.build_grid().unwrap();
    let bg = spec.build_background(&grid).unwrap();
    let limit = ScalarField::constant(&grid, 1.0);
    let a = generate_sequence(&spec, &bg, &limit).unwrap();
    let b = generate_sequence(&spec, &bg, &limit).unwrap();
    for (x, y) in a.iter().zip(b.iter()) {
        assert_eq!(x, y);
    }
}

#[test]
fn bump_integrates_like_its_radius_cubed() {
    // sanity for the generator's bump: mass scales ~ r³
    let spec = base_spec(Family::LpOnlyConvergent, 1);
    let grid = spec.build_grid().unwrap();
    let one = ScalarField::constant(&grid, 1.0);
    let b1 = super::bump_field(&grid, 0.4);
    let b2 = super::bump_field(&grid, 0.2);
    let m1 = integrate(&b1, &one).unwrap();
    let m2 = integrate(&b2, &one).unwrap();
    let ratio = m1 / m2;
    assert!((ratio - 8.0).abs() < 1.6, "mass ratio {ratio} should be near 8");
}
