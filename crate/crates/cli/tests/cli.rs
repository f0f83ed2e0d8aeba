use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dmn_core::io::save_model;
use dmn_core::network::MaterialNetwork;
use serde_json::{json, Value};

fn dmn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count()
}

fn write_json(p: &Path, v: &Value) -> PathBuf {
    fs::write(p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_path_buf()
}

fn elastic_materials(dir: &Path) -> PathBuf {
    write_json(
        &dir.join("materials.json"),
        &json!({
            "format": "dmn-materials", "version": 1,
            "phase1": { "model": "isotropic_elastic", "E": 100.0, "nu": 0.3 },
            "phase2": { "model": "orthotropic_elastic", "E1": 10.0, "E2": 12.0, "E3": 80.0,
                        "G12": 4.0, "G13": 5.0, "G23": 6.0, "nu12": 0.3, "nu13": 0.05, "nu23": 0.06 }
        }),
    )
}

fn model(dir: &Path, name: &str, net: &MaterialNetwork) -> PathBuf {
    let p = dir.join(name);
    save_model(&p, net, Value::Null).unwrap();
    p
}

fn uniaxial_path(dir: &Path, f11: &[f64]) -> PathBuf {
    let flags = ["F", "P", "P", "P", "F", "P", "F", "P", "F"];
    let steps: Vec<Value> = f11
        .iter()
        .map(|v| json!({ "target": [v, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], "dt": 1.0 }))
        .collect();
    write_json(
        &dir.join("path.json"),
        &json!({ "format": "dmn-load-path", "version": 1, "flags": flags, "steps": steps }),
    )
}

/// Network of `depth` with exactly `n1` phase-1 and `n2` phase-2 active leaves.
fn with_counts(depth: usize, n1: usize, n2: usize) -> MaterialNetwork {
    let mut net = MaterialNetwork::random_seeded(depth, 3);
    let (mut c1, mut c2) = (0, 0);
    for j in 0..net.num_leaves() {
        let counter = if net.phases[j] == 1 { &mut c1 } else { &mut c2 };
        let limit = if net.phases[j] == 1 { n1 } else { n2 };
        if *counter < limit {
            *counter += 1;
            net.z[j] = net.z[j].abs() + 0.1;
        } else {
            net.z[j] = -0.5;
        }
    }
    net
}

#[test]
fn gen_data_default_split_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = dmn(&["gen-data", "--seed", "5", "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(lines(&a.join("train.jsonl")), 401);
    assert_eq!(lines(&a.join("test.jsonl")), 101);
    for f in ["train.jsonl", "test.jsonl", "teacher.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let m: Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "gen-data");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn gen_data_custom_split_and_laminate() {
    let dir = tempfile::tempdir().unwrap();
    let o = dmn(&[
        "gen-data",
        "--oracle",
        "laminate",
        "--count",
        "10",
        "--split",
        "8,2",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(lines(&dir.path().join("train.jsonl")), 9);
    assert_eq!(lines(&dir.path().join("test.jsonl")), 3);
}

#[test]
fn gen_data_rejects_inconsistent_split() {
    let dir = tempfile::tempdir().unwrap();
    let o = dmn(&[
        "gen-data",
        "--count",
        "10",
        "--split",
        "8,3",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_data_import_resplits_external_samples() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    assert_eq!(
        code(&dmn(&[
            "gen-data",
            "--count",
            "6",
            "--split",
            "6,0",
            "--out",
            s(&src)
        ])),
        0
    );
    let out = dir.path().join("imp");
    let o = dmn(&[
        "gen-data",
        "--oracle",
        "import",
        "--input",
        s(&src.join("train.jsonl")),
        "--count",
        "6",
        "--split",
        "4,2",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&out.join("train.jsonl")), 5);
    assert_eq!(lines(&out.join("test.jsonl")), 3);
}

#[test]
fn replay_reproduces_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    assert_eq!(
        code(&dmn(&[
            "gen-data",
            "--count",
            "20",
            "--split",
            "15,5",
            "--seed",
            "9",
            "--out",
            s(&out)
        ])),
        0
    );
    let first = fs::read(out.join("train.jsonl")).unwrap();
    fs::remove_file(out.join("train.jsonl")).unwrap();
    let o = dmn(&["replay", s(&out.join("manifest.json"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(out.join("train.jsonl")).unwrap(), first);
}

#[test]
fn train_prints_summary_and_resume_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(
        code(&dmn(&[
            "gen-data",
            "--count",
            "40",
            "--split",
            "30,10",
            "--out",
            s(&data)
        ])),
        0
    );
    let (tr, te) = (data.join("train.jsonl"), data.join("test.jsonl"));
    let common = [
        "--train",
        s(&tr),
        "--test",
        s(&te),
        "--depth",
        "3",
        "--seed",
        "2",
        "--log-every",
        "1",
    ];

    let full = dir.path().join("full");
    let mut args = vec!["train", "--epochs", "6", "--out", s(&full)];
    args.extend(common);
    let o = dmn(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let header = out.lines().next().unwrap();
    for col in ["train_err_%", "test_err_%", "max_test_%", "vf1", "N_a"] {
        assert!(header.contains(col), "{header}");
    }
    let row: Vec<f64> = out
        .lines()
        .nth(1)
        .unwrap()
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(row.len(), 5);
    assert_eq!(lines(&full.join("report.csv")), 7);

    let half = dir.path().join("half");
    let mut args = vec!["train", "--epochs", "3", "--out", s(&half)];
    args.extend(common);
    assert_eq!(code(&dmn(&args)), 0);
    let resumed = dir.path().join("resumed");
    let ckpt = half.join("checkpoint.json");
    let mut args = vec![
        "train",
        "--epochs",
        "6",
        "--resume",
        s(&ckpt),
        "--out",
        s(&resumed),
    ];
    args.extend(common);
    assert_eq!(code(&dmn(&args)), 0);
    let a: Value =
        serde_json::from_str(&fs::read_to_string(full.join("model.json")).unwrap()).unwrap();
    let b: Value =
        serde_json::from_str(&fs::read_to_string(resumed.join("model.json")).unwrap()).unwrap();
    assert_eq!(a["z"], b["z"]);
    assert_eq!(a["angles"], b["angles"]);
}

#[test]
fn predict_tangent_matches_eval_stiffness() {
    let dir = tempfile::tempdir().unwrap();
    let m = model(
        dir.path(),
        "model.json",
        &MaterialNetwork::random_seeded(3, 4),
    );
    let mats = elastic_materials(dir.path());
    let ev = dir.path().join("eval.json");
    let o = dmn(&[
        "eval",
        "--model",
        s(&m),
        "--materials",
        s(&mats),
        "--out",
        s(&ev),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ev: Value = serde_json::from_str(&fs::read_to_string(&ev).unwrap()).unwrap();
    let c: Vec<Vec<f64>> = serde_json::from_value(ev["stiffness"].clone()).unwrap();

    let d = 1e-7;
    let target = [1.0 + d, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let path = write_json(
        &dir.path().join("tiny.json"),
        &json!({ "format": "dmn-load-path", "version": 1, "flags": ["F", "F", "F", "F", "F", "F", "F", "F", "F"], "steps": [{ "target": target, "dt": 1.0 }] }),
    );
    let out = dir.path().join("h.csv");
    let o = dmn(&[
        "predict",
        "--model",
        s(&m),
        "--materials",
        s(&mats),
        "--path",
        s(&path),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    // P columns follow step,time,iterations,cutbacks and nine F columns
    let (p11, p22, p33) = (last[13], last[14], last[15]);
    for (p, i) in [(p11, 0), (p22, 1), (p33, 2)] {
        assert!(
            (p / d - c[i][0]).abs() <= 1e-4 * c[0][0],
            "{} vs {}",
            p / d,
            c[i][0]
        );
    }
    assert!(dir.path().join("h.csv.manifest.json").exists());
}

#[test]
fn predict_writes_one_row_per_step_plus_initial() {
    let dir = tempfile::tempdir().unwrap();
    let m = model(
        dir.path(),
        "model.json",
        &MaterialNetwork::random_seeded(3, 5),
    );
    let mats = elastic_materials(dir.path());
    let path = uniaxial_path(dir.path(), &[1.01, 1.02, 1.03]);
    for small in [false, true] {
        let out = dir.path().join(format!("h{small}.csv"));
        let mut args = vec![
            "predict",
            "--model",
            s(&m),
            "--materials",
            s(&mats),
            "--path",
            s(&path),
            "--out",
            s(&out),
        ];
        if small {
            args.push("--small-strain");
        }
        let o = dmn(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(lines(&out), 1 + 4);
        assert!(fs::read_to_string(&out)
            .unwrap()
            .starts_with("step,time,iterations,cutbacks,F11,"));
    }
}

#[test]
fn small_strain_rejects_rotational_path() {
    let dir = tempfile::tempdir().unwrap();
    let m = model(
        dir.path(),
        "model.json",
        &MaterialNetwork::random_seeded(2, 5),
    );
    let mats = elastic_materials(dir.path());
    let path = write_json(
        &dir.path().join("rot.json"),
        &json!({ "format": "dmn-load-path", "version": 1, "flags": ["F", "F", "F", "F", "F", "F", "F", "F", "F"],
                 "steps": [{ "target": [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.01, -0.01], "dt": 1.0 }] }),
    );
    let out = dir.path().join("h.csv");
    let o = dmn(&[
        "predict",
        "--model",
        s(&m),
        "--materials",
        s(&mats),
        "--path",
        s(&path),
        "--small-strain",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn failed_step_keeps_partial_history() {
    let dir = tempfile::tempdir().unwrap();
    let m = model(
        dir.path(),
        "model.json",
        &MaterialNetwork::random_seeded(2, 5),
    );
    let mats = elastic_materials(dir.path());
    let path = uniaxial_path(dir.path(), &[1.01, -0.5]);
    let out = dir.path().join("h.csv");
    let o = dmn(&[
        "predict",
        "--model",
        s(&m),
        "--materials",
        s(&mats),
        "--path",
        s(&path),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&out), 1 + 2);
}

#[test]
fn concat_reports_large_scale_dofs_and_predicts() {
    let dir = tempfile::tempdir().unwrap();
    let root = model(dir.path(), "root.json", &with_counts(8, 16, 22));
    let graft = model(dir.path(), "graft.json", &with_counts(7, 5, 9));
    let asm = dir.path().join("asm.json");
    let o = dmn(&[
        "concat",
        "--root",
        s(&root),
        "--graft",
        s(&graft),
        "--phase",
        "1",
        "--out",
        s(&asm),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("16 + 22 = 38"), "{out}");
    assert!(out.contains("16 x 14 + 22 = 246"), "{out}");

    let mats = write_json(
        &dir.path().join("m.json"),
        &json!({ "format": "dmn-materials", "version": 1,
                 "phase1": { "model": "isotropic_elastic", "E": 200.0, "nu": 0.25 },
                 "phase2": { "model": "isotropic_elastic", "E": 3.0, "nu": 0.35 },
                 "other": { "model": "isotropic_elastic", "E": 4.0, "nu": 0.35 } }),
    );
    let path = uniaxial_path(dir.path(), &[1.001]);
    let h1 = dir.path().join("sub.csv");
    let h2 = dir.path().join("flat.csv");
    for (h, flat) in [(&h1, false), (&h2, true)] {
        let mut args = vec![
            "predict",
            "--assembly",
            s(&asm),
            "--materials",
            s(&mats),
            "--path",
            s(&path),
            "--out",
            s(h),
        ];
        if flat {
            args.push("--flatten");
        }
        let o = dmn(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let p11 = |h: &Path| -> f64 {
        fs::read_to_string(h)
            .unwrap()
            .lines()
            .last()
            .unwrap()
            .split(',')
            .nth(13)
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((p11(&h1) - p11(&h2)).abs() <= 1e-8 * p11(&h1).abs());
}

#[test]
fn single_leaf_graft_only_substitutes() {
    let dir = tempfile::tempdir().unwrap();
    let root = model(dir.path(), "root.json", &with_counts(4, 3, 2));
    let graft = model(dir.path(), "graft.json", &with_counts(3, 1, 0));
    let o = dmn(&[
        "concat",
        "--root",
        s(&root),
        "--graft",
        s(&graft),
        "--phase",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("2 x 1 + 3 = 5"), "{}", stdout(&o));
}

#[test]
fn concat_errors_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let root = model(dir.path(), "root.json", &with_counts(3, 2, 2));
    let asm = dir.path().join("asm.json");
    let o = dmn(&[
        "concat",
        "--root",
        s(&root),
        "--graft",
        s(&dir.path().join("missing.json")),
        "--phase",
        "1",
        "--out",
        s(&asm),
    ]);
    assert_eq!(code(&o), 4);
    assert!(!asm.exists());
    let o = dmn(&[
        "concat",
        "--root",
        s(&root),
        "--graft",
        s(&root),
        "--phase",
        "3",
        "--out",
        s(&asm),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!asm.exists());
}

#[test]
fn export_writes_orientations_and_treemap() {
    let dir = tempfile::tempdir().unwrap();
    let net = MaterialNetwork::random_seeded(3, 8);
    let m = model(dir.path(), "model.json", &net);
    let out = dir.path().join("exp");
    let o = dmn(&["export", "--model", s(&m), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        lines(&out.join("orientations.csv")),
        1 + net.active_leaves()
    );
    let t: Value =
        serde_json::from_str(&fs::read_to_string(out.join("treemap.json")).unwrap()).unwrap();
    assert_eq!(t["treemap"]["active_leaves"], net.active_leaves());
}

#[test]
fn unknown_model_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = model(
        dir.path(),
        "model.json",
        &MaterialNetwork::random_seeded(2, 1),
    );
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&m).unwrap()).unwrap();
    v["version"] = json!(99);
    write_json(&m, &v);
    let o = dmn(&[
        "export",
        "--model",
        s(&m),
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(code(&o), 2);
}
