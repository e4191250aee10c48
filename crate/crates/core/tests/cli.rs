use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use projdyn::cli::{EXIT_ERROR, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_PASS};

fn projdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_projdyn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_config(dir: &Path, name: &str, text: &str) -> (Output, std::path::PathBuf) {
    let cfg = dir.join(format!("{name}.json"));
    fs::write(&cfg, text).unwrap();
    let out = dir.join(format!("{name}_out"));
    let output = projdyn(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    (output, out)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn single_subdir(root: &Path) -> std::path::PathBuf {
    let entries: Vec<_> = fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(entries.len(), 1, "{entries:?}");
    entries[0].clone()
}

#[test]
fn equidistribution_defaults_pass_and_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(
        dir.path(),
        "eq",
        r#"{"map": "power(2)", "experiment": "point_equidistribution"}"#,
    );
    assert_eq!(o.status.code(), Some(EXIT_PASS), "{}", stderr(&o));
    let sub = single_subdir(&out);
    assert_eq!(sub.file_name().unwrap().len(), 64);
    for file in ["report.csv", "verdicts.txt", "summary.json"] {
        assert!(sub.join(file).is_file(), "{file} missing");
    }
    let csv = fs::read_to_string(sub.join("report.csv")).unwrap();
    assert!(csv.starts_with("experiment_id,n,tag,"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sub.join("summary.json")).unwrap()).unwrap();
    assert_eq!(
        summary["config_digest"].as_str().unwrap(),
        sub.file_name().unwrap().to_str().unwrap()
    );
}

#[test]
fn degenerate_map_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run_config(
        dir.path(),
        "bad",
        r#"{"map": {"components": [[{"exps": [1, 1], "re": 1}], [{"exps": [0, 2], "re": 1}]]},
            "experiment": "counting"}"#,
    );
    assert_eq!(o.status.code(), Some(EXIT_ERROR));
    let msg = stderr(&o);
    assert!(msg.contains("map"), "{msg}");
    assert!(msg.to_lowercase().contains("degenerate"), "{msg}");
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run_config(
        dir.path(),
        "typo",
        r#"{"map": "power(2)", "experiment": "mixing", "params": {"n_maxx": 3}}"#,
    );
    assert_eq!(o.status.code(), Some(EXIT_ERROR));
    assert!(stderr(&o).contains("n_maxx"), "{}", stderr(&o));
}

#[test]
fn exceptional_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run_config(
        dir.path(),
        "exc",
        r#"{"map": "power(2)", "experiment": "exceptional"}"#,
    );
    assert_eq!(o.status.code(), Some(EXIT_PASS), "{}", stderr(&o));
}

#[test]
fn failing_verdict_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run_config(
        dir.path(),
        "strict",
        r#"{"map": "quadratic_family(-1, 0)", "experiment": "hypersurface",
            "tolerances": {"rate_threshold": 10.0}}"#,
    );
    assert_eq!(
        o.status.code(),
        Some(EXIT_FAIL),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
}

#[test]
fn periodic_birkhoff_start_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run_config(
        dir.path(),
        "fixed",
        r#"{"map": "power(2)", "experiment": "birkhoff",
            "params": {"start": {"kind": "given", "point": [1, 1]}}}"#,
    );
    assert_eq!(
        o.status.code(),
        Some(EXIT_INCONCLUSIVE),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
}

#[test]
fn fiber_of_one_has_eight_atoms() {
    let o = projdyn(&[
        "fiber", "--map", "power(2)", "--target", "1:1", "--depth", "3",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_PASS));
    assert!(
        stderr(&o).contains("total_weight=8 distinct_atoms=8"),
        "{}",
        stderr(&o)
    );
    let csv = String::from_utf8_lossy(&o.stdout);
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn fiber_of_invariant_point_is_one_atom() {
    let o = projdyn(&[
        "fiber", "--map", "power(2)", "--target", "0:1", "--depth", "4",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_PASS));
    assert!(
        stderr(&o).contains("total_weight=16 distinct_atoms=1"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn fiber_binary_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cloud.fibc");
    let o = projdyn(&[
        "--out",
        path.to_str().unwrap(),
        "fiber",
        "--map",
        "power(3)",
        "--target",
        "2:1",
        "--depth",
        "2",
        "--format",
        "binary",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_PASS), "{}", stderr(&o));
    let cloud = projdyn::fibers::read_cloud_binary(&mut fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(cloud.total_weight(), 9);
    assert_eq!(cloud.depth, 2);
}

#[test]
fn fiber_beyond_cap_exits_one() {
    let o = projdyn(&[
        "fiber", "--map", "power(2)", "--target", "2:1", "--depth", "40",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_ERROR));
}

fn green_csv(dir: &Path, map: &str, points: &str, depth: &str) -> (Output, String) {
    let file = dir.join("points.txt");
    fs::write(&file, points).unwrap();
    let o = projdyn(&[
        "green",
        "--map",
        map,
        "--points",
        file.to_str().unwrap(),
        "--depth",
        depth,
    ]);
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    (o, text)
}

#[test]
fn green_depth_zero_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = green_csv(dir.path(), "power(2)", "2:1\n", "0");
    assert_eq!(o.status.code(), Some(EXIT_ERROR));
}

#[test]
fn green_of_two_one_is_log_two() {
    let dir = tempfile::tempdir().unwrap();
    let (o, text) = green_csv(dir.path(), "power(2)", "# one point\n2:1\n", "30");
    assert_eq!(o.status.code(), Some(EXIT_PASS));
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let g: f64 = row[row.len() - 2].parse().unwrap();
    assert!((g - 2f64.ln()).abs() < 1e-8, "{g}");
}

#[test]
fn green_tail_bounds_on_quadratic_grid() {
    let dir = tempfile::tempdir().unwrap();
    let points: String = (0..100)
        .map(|j| {
            let t = j as f64 * 0.0628;
            let r = 0.5 + 0.02 * j as f64;
            format!("{}+{}i:1\n", r * t.cos(), r * t.sin())
        })
        .collect();
    let (o, text) = green_csv(dir.path(), "quadratic_family(-1, 0)", &points, "30");
    assert_eq!(o.status.code(), Some(EXIT_PASS), "{}", stderr(&o));
    let tol = projdyn::Tolerances::default();
    let f =
        projdyn::EndomorphismMap::quadratic_family(num_complex::Complex64::new(-1.0, 0.0), &tol)
            .unwrap();
    let bound = f.map_constant() * 2f64.powi(-30);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 100);
    for row in rows {
        let tail: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(tail <= bound, "{tail} > {bound}");
    }
}

#[test]
fn green_parse_failure_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = green_csv(dir.path(), "power(2)", "2:1\nnot a point\n", "5");
    assert_eq!(o.status.code(), Some(EXIT_ERROR));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn presets_lists_maps_and_experiments() {
    let o = projdyn(&["presets"]);
    assert_eq!(o.status.code(), Some(EXIT_PASS));
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in [
        "power",
        "quadratic_family",
        "hypersurface",
        "holder_modulus",
    ] {
        assert!(text.contains(needle), "{needle}");
    }
}

#[test]
fn validate_checks_without_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"map": "power(3)", "experiment": "counting", "seed": 4}"#,
    )
    .unwrap();
    let o = projdyn(&["--config", cfg.to_str().unwrap(), "validate"]);
    assert_eq!(o.status.code(), Some(EXIT_PASS), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());

    fs::write(&cfg, r#"{"map": "power(3)", "experiment": "countng"}"#).unwrap();
    let o = projdyn(&["--config", cfg.to_str().unwrap(), "validate"]);
    assert_eq!(o.status.code(), Some(EXIT_ERROR));
    assert!(stderr(&o).contains("experiment"));
}

#[test]
fn zero_threads_is_rejected() {
    let o = projdyn(&["--threads", "0", "presets"]);
    assert_eq!(o.status.code(), Some(EXIT_ERROR));
}

#[test]
fn seed_override_changes_digest_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m.json");
    fs::write(
        &cfg,
        r#"{"map": "power(2)", "experiment": "mixing", "params": {"samples": 500}}"#,
    )
    .unwrap();
    let mut dirs = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(format!("o{seed}"));
        let o = projdyn(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "run",
        ]);
        assert_ne!(o.status.code(), Some(EXIT_ERROR), "{}", stderr(&o));
        dirs.push(single_subdir(&out));
    }
    assert_ne!(dirs[0].file_name(), dirs[1].file_name());
    assert_ne!(
        fs::read(dirs[0].join("report.csv")).unwrap(),
        fs::read(dirs[1].join("report.csv")).unwrap()
    );
}
