use std::fs;
use std::path::Path;
use std::process::Command;

use ggl_cli::{
    parse_config, preset, run_experiment, run_sweep, write_sweep_summary, Format, ModelKind,
    RunConfig, Summary,
};
use nonsmooth_ggl::{energy_series, penetration_stats, simulate, Scheme};
use proptest::prelude::*;

fn ball(scheme: Scheme, t_end: f64, dir: &Path) -> RunConfig {
    let mut c = RunConfig::new(ModelKind::Ball, scheme);
    c.t_end = t_end;
    c.output = dir.join(format!("ball_{scheme}.csv"));
    c
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn ball_preset_loses_energy_and_writes_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = preset("ball_drop", false, dir.path()).unwrap();
    let cfg = &sweep.runs[0];
    let rep = run_experiment(cfg).unwrap();
    assert_eq!(rep.exit_code(), 0);
    let expected = (cfg.t_end / cfg.dt / cfg.record_stride as f64).floor() as usize + 1;
    assert_eq!(expected, 10_001);
    assert_eq!(data_rows(&rep.trajectory), expected);
    assert_eq!(rep.summary.rows, expected);
    assert!(rep.summary.e_end < rep.summary.e0);
    let back: Summary =
        serde_json::from_str(&fs::read_to_string(&rep.summary_path).unwrap()).unwrap();
    assert_eq!(back, rep.summary);
}

#[test]
fn slider_penetration_moreau_vs_unified() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for scheme in [Scheme::Moreau, Scheme::GglUnified] {
        let mut c = RunConfig::new(ModelKind::SliderUnilateral, scheme);
        c.t_end = 0.2;
        c.output = dir.path().join(format!("{scheme}.csv"));
        reports.push(run_experiment(&c).unwrap());
    }
    assert!(
        reports[0].summary.min_gap < -1e-5,
        "{}",
        reports[0].summary.min_gap
    );
    assert!(reports[0].summary.violation_time > 0.0);
    assert!(
        reports[1].summary.min_gap >= -1e-9,
        "{}",
        reports[1].summary.min_gap
    );
    assert_eq!(reports[1].summary.non_converged, 0);
}

#[test]
fn summary_matches_the_recorded_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::new(ModelKind::SliderUnilateral, Scheme::Moreau);
    c.t_end = 0.05;
    c.output = dir.path().join("s.csv");
    let rep = run_experiment(&c).unwrap();

    let (model, x0) = c.build_model().unwrap();
    let sim = simulate(model.as_ref(), &x0, &c.solver(), c.t_end).unwrap();
    let pen = penetration_stats(&sim.record).unwrap();
    let en = energy_series(model.as_ref(), &sim.record).unwrap();
    let s = &rep.summary;
    assert_eq!(s.min_gap, pen.min_gap);
    assert_eq!(s.per_contact_min, pen.per_contact_min);
    assert!((s.violation_time - pen.violation_time).abs() < 1e-12);
    assert_eq!(s.max_energy_jump, en.max_increase);
    assert_eq!(s.e_end, *en.energies.last().unwrap());
    assert_eq!(s.newton_histogram.values().sum::<usize>(), s.steps);

    // Every written row equals the corresponding recorded state.
    let text = fs::read_to_string(&rep.trajectory).unwrap();
    for (k, line) in text.lines().skip(1).enumerate() {
        let n = k * c.record_stride;
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let st = &sim.record.states[n];
        assert_eq!(f[0], sim.record.times[n]);
        assert_eq!(&f[1..4], st.q.as_slice());
        assert_eq!(&f[4..7], st.v.as_slice());
        assert_eq!(&f[7..11], sim.record.gaps[n].as_slice());
        assert_eq!(f[23], sim.record.energies[n]);
        let mask: usize = sim.record.active_sets[n].iter().map(|i| 1 << i).sum();
        assert_eq!(f[24] as usize, mask);
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = ball(Scheme::GglUnified, 0.5, dir.path());
    let mut b = a.clone();
    b.output = dir.path().join("again.csv");
    run_experiment(&a).unwrap();
    run_experiment(&b).unwrap();
    assert_eq!(fs::read(&a.output).unwrap(), fs::read(&b.output).unwrap());

    a.format = Format::Json;
    a.output = dir.path().join("ball.json");
    let rep = run_experiment(&a).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&rep.trajectory).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), rep.summary.rows);
    assert_eq!(v["columns"][0], "t");
}

#[test]
fn sweeps_run_in_parallel_with_per_run_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut sweep = preset("ball_schemes", false, dir.path()).unwrap();
    for r in &mut sweep.runs {
        r.t_end = 0.2;
    }
    let serial = run_sweep(&sweep, 1).unwrap();
    let first: Vec<Vec<u8>> = serial
        .iter()
        .map(|r| fs::read(&r.trajectory).unwrap())
        .collect();
    let parallel = run_sweep(&sweep, 3).unwrap();
    for (r, bytes) in parallel.iter().zip(&first) {
        assert_eq!(&fs::read(&r.trajectory).unwrap(), bytes);
    }
    let names: Vec<_> = parallel.iter().map(|r| r.summary.scheme.clone()).collect();
    assert_eq!(names, ["moreau", "ggl_decoupled", "ggl_unified"]);
    let s = write_sweep_summary(&sweep, &parallel, dir.path())
        .unwrap()
        .unwrap();
    assert!(s.unified_moreau_time_ratio.unwrap() > 0.0);
    assert!(dir.path().join("ball_schemes.summary.json").exists());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn row_count_law(steps in 0usize..300, stride in 1usize..40) {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ball(Scheme::Moreau, 0.0, dir.path());
        c.t_end = steps as f64 * c.dt;
        c.record_stride = stride;
        let rep = run_experiment(&c).unwrap();
        let expected = (c.t_end / c.dt / stride as f64 + 1e-9).floor() as usize + 1;
        prop_assert_eq!(expected, steps / stride + 1);
        prop_assert_eq!(data_rows(&rep.trajectory), expected);
    }
}

fn cli(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nonsmooth-ggl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    fs::write(
        p.join("ok.cfg"),
        "model=ball\nscheme=ggl_unified\nt_end=0.05\noutput=out/ok.csv\n",
    )
    .unwrap();
    let o = cli(&["run", "--config", "ok.cfg"], p);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(p.join("out/ok.csv").exists() && p.join("out/ok.summary.json").exists());

    // One Newton iteration cannot resolve the slider's implicit midpoint rule.
    fs::write(
        p.join("cap.cfg"),
        "model=slider_unilateral\nscheme=ggl_unified\nt_end=0.001\nmax_iter=1\noutput=cap.csv\n",
    )
    .unwrap();
    let o = cli(&["run", "--config", "cap.cfg"], p);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(p.join("cap.csv").exists());

    fs::write(p.join("bad.cfg"), "scheme=dae_pos\nmodel=ball\n").unwrap();
    let o = cli(&["run", "--config", "bad.cfg"], p);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr)
        .contains("scheme dae_pos requires model slider_bilateral"));

    assert_eq!(cli(&["run", "--preset", "nope"], p).status.code(), Some(1));
    assert_eq!(
        cli(&["run", "--config", "missing.cfg"], p).status.code(),
        Some(1)
    );

    let o = cli(&["list-presets"], p);
    assert_eq!(o.status.code(), Some(0));
    let listing = String::from_utf8(o.stdout).unwrap();
    assert!(listing.lines().any(|l| l.starts_with("fig10_energy")));
}

#[test]
fn config_files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::new(
        ModelKind::SliderBilateral,
        Scheme::parse("dae_ggl").unwrap(),
    );
    c.t_end = 0.01;
    c.output = dir.path().join("b.csv");
    let path = dir.path().join("b.cfg");
    fs::write(&path, c.serialize()).unwrap();
    let back = parse_config(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, c);
    let rep = run_experiment(&back).unwrap();
    let header = fs::read_to_string(&rep.trajectory).unwrap();
    assert!(header.starts_with("t,theta1,theta2,omega1,omega2,g,gd,lambda,psi,E,newton_iters\n"));
    assert_eq!(rep.summary.rows, 101);
}
