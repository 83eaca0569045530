use dsr_core::bench::{run_bench, BenchConfig, ExperimentGrid};
use dsr_core::io::{read_measurements, write_measurements};
use dsr_core::scene::{synth_scene, SceneSpec};
use dsr_core::*;

#[test]
fn gds3d_beats_linear_at_every_factor() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BenchConfig {
        grid: ExperimentGrid {
            algorithms: vec![Algorithm::Linear, Algorithm::Gds3d],
            ..ExperimentGrid::default()
        },
        solver: SolverConfig {
            max_iter: 15,
            ..SolverConfig::default()
        },
        ..BenchConfig::default()
    };
    let (truth, guide) = cfg.load_inputs(dir.path()).unwrap();
    let summary = run_bench(&cfg, &truth, guide.as_ref(), dir.path()).unwrap();
    for f in [2, 3, 4, 5] {
        let (lin, gds) = (
            summary.cell(Algorithm::Linear, f),
            summary.cell(Algorithm::Gds3d, f),
        );
        assert!(gds >= lin, "factor {f}: {gds} < {lin}");
    }
}

#[test]
fn gds2d_groups_stay_in_the_reference_frame() {
    let (guide, _) = synth_scene(&SceneSpec::default()).unwrap();
    let cfg = SolverConfig::default().with_algo(Algorithm::Gds2d);
    let table = build_groups(guide.as_volume(), &cfg.effective_geometry()).unwrap();
    for g in table.groups() {
        assert!(g.members.iter().all(|m| m.t == g.reference.t));
    }
    let cfg3 = SolverConfig::default();
    let table3 = build_groups(guide.as_volume(), &cfg3.effective_geometry()).unwrap();
    assert!(table3
        .groups()
        .iter()
        .any(|g| g.members.iter().any(|m| m.t != g.reference.t)));
}

#[test]
fn solving_from_disk_matches_in_memory() {
    let spec = SceneSpec {
        dims: FrameDims::new(24, 24, 3).unwrap(),
        objects: vec![],
        ..SceneSpec::default()
    };
    let (guide, truth) = synth_scene(&spec).unwrap();
    let op = SamplingOperator::decimation(truth.dims(), 2).unwrap();
    let psi = add_noise(&apply_sampling(&op, &truth).unwrap(), 30.0, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_measurements(&psi, dir.path()).unwrap();
    let back = read_measurements(dir.path()).unwrap();
    assert_eq!(back.operator(), psi.operator());
    // values are stored as f32
    for (a, b) in back.values().iter().zip(psi.values()) {
        assert!((a - b).abs() <= 1e-6 * b.abs());
    }

    let cfg = SolverConfig {
        lambda: 0.01,
        max_iter: 10,
        ..SolverConfig::default()
    };
    let (a, _) = run_pipeline(&psi, Some(&guide), &cfg).unwrap();
    let (b, _) = run_pipeline(&psi, Some(&guide), &cfg).unwrap();
    assert_eq!(a, b);
    let (c, _) = run_pipeline(&back, Some(&guide), &cfg).unwrap();
    let drift = snr_db(a.values(), c.values()).unwrap();
    assert!(drift > 80.0, "{drift}");
}
