use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
birth_prob = 0.01
birth_cov = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
transition = [[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
process_noise = [[0.0025, 0.0, 0.005, 0.0], [0.0, 0.0025, 0.0, 0.005], [0.005, 0.0, 0.01, 0.0], [0.0, 0.005, 0.0, 0.01]]
survival_prob = 0.99
observation = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]
measurement_noise = [[1.0, 0.0], [0.0, 1.0]]
detect_prob = 0.9
clutter_density = 1e-4
fov_min = [-100.0, -100.0]
fov_max = [100.0, 100.0]
"#;

const SCENARIO: &str = r#"
frames = 10
transition = [[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
observation = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]
measurement_noise = [[1.0, 0.0], [0.0, 1.0]]
detect_prob = 0.9
clutter_rate = 2.0
fov_min = [-100.0, -100.0]
fov_max = [100.0, 100.0]

[[targets]]
birth_frame = 0
state = [-20.0, 0.0, 1.0, 0.5]

[[targets]]
birth_frame = 3
death_frame = 8
state = [30.0, 10.0, -1.0, 0.0]
"#;

fn fglmb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fglmb"))
        .args(args)
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn track(dir: &Path, frames: &str, extra: &[&str]) -> Output {
    let frames_path = dir.join("frames.jsonl");
    let config_path = dir.join("tracker.toml");
    fs::write(&frames_path, frames).unwrap();
    fs::write(&config_path, CONFIG).unwrap();
    let out = dir.join("out");
    let mut args = vec![
        "track",
        "--frames",
        path(&frames_path),
        "--config",
        path(&config_path),
        "--out",
        path(&out),
    ];
    args.extend_from_slice(extra);
    fglmb(&args)
}

#[test]
fn empty_frame_file_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = track(dir.path(), "", &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let counts = fs::read_to_string(dir.path().join("out/counts.csv")).unwrap();
    assert_eq!(counts, "frame,num_factors,total_hypos\n");
    assert_eq!(
        fs::read_to_string(dir.path().join("out/estimates.jsonl")).unwrap(),
        ""
    );
}

#[test]
fn lone_measurement_starts_a_two_hypothesis_factor() {
    let dir = tempfile::tempdir().unwrap();
    let out = track(
        dir.path(),
        "{\"frame\": 1, \"time\": 1.0, \"measurements\": [[5.0, -3.0]]}\n",
        &[],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let counts = fs::read_to_string(dir.path().join("out/counts.csv")).unwrap();
    assert_eq!(counts, "frame,num_factors,total_hypos\n1,1,2\n");
}

#[test]
fn malformed_line_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let frames =
        "{\"frame\": 0, \"time\": 0.0, \"measurements\": []}\n{\"frame\": 1, \"time\": oops}\n";
    let out = track(dir.path(), frames, &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn wrong_dimension_and_bad_config_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = track(
        dir.path(),
        "{\"frame\": 0, \"time\": 0.0, \"measurements\": [[1.0]]}\n",
        &[],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    let frames_path = dir.path().join("frames.jsonl");
    let config_path = dir.path().join("broken.toml");
    fs::write(&config_path, "detect_prob = 0.9\n").unwrap();
    let out = fglmb(&[
        "track",
        "--frames",
        path(&frames_path),
        "--config",
        path(&config_path),
        "--out",
        path(&dir.path().join("o")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("scenario.toml");
    fs::write(&spec, SCENARIO).unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let status = fglmb(&[
            "simulate",
            "--spec",
            path(&spec),
            "--seed",
            seed,
            "--out",
            path(&out),
        ]);
        assert!(
            status.status.success(),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        fs::read_to_string(out).unwrap()
    };
    let a = run("5", "a.jsonl");
    let b = run("5", "b.jsonl");
    let c = run("6", "c.jsonl");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 10);
}

#[test]
fn simulate_rejects_invalid_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("scenario.toml");
    fs::write(
        &spec,
        SCENARIO.replace("detect_prob = 0.9", "detect_prob = 1.9"),
    )
    .unwrap();
    let out = fglmb(&[
        "simulate",
        "--spec",
        path(&spec),
        "--seed",
        "1",
        "--out",
        path(&dir.path().join("x")),
    ]);
    assert!(!out.status.success());
}

#[test]
fn simulated_frames_track_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("scenario.toml");
    fs::write(&spec, SCENARIO).unwrap();
    let frames = dir.path().join("sim.jsonl");
    let out = fglmb(&[
        "simulate",
        "--spec",
        path(&spec),
        "--seed",
        "3",
        "--out",
        path(&frames),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&frames).unwrap();
    let out = track(dir.path(), &text, &["--debug-tree"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let counts = fs::read_to_string(dir.path().join("out/counts.csv")).unwrap();
    let rows: Vec<&str> = counts.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    for (i, row) in rows.iter().enumerate() {
        let cols: Vec<u64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[0], i as u64);
        assert!(cols[2] >= cols[1]);
    }
    let estimates = fs::read_to_string(dir.path().join("out/estimates.jsonl")).unwrap();
    for line in estimates.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["estimates"].is_array());
    }
    let dot = fs::read_to_string(dir.path().join("out/pedigree.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("head"));
}
