use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocular-eval"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = bin(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

#[test]
fn pairs_prints_both_published_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let polyu = ok(&["pairs", "--layout", "polyu"], tmp.path());
    assert!(polyu.contains("8,360(418)/4,180(418)"));
    assert!(polyu.contains("4,180/4,357,650"));
    assert!(polyu.contains("21,945/4,890,600"));
    let ce = ok(&["pairs", "--layout", "cross-eyed", "--enumerate"], tmp.path());
    assert!(ce.contains("720/258,120"));
    assert!(ce.contains("3,360/913,920"));
    assert_eq!(ce.matches(" ok").count(), 4);
    assert!(!ce.contains("MISMATCH"));
}

#[test]
fn pairs_export_writes_one_line_per_pair() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &[
            "pairs",
            "--layout",
            "6x4",
            "--train-samples",
            "2",
            "--scenario",
            "vis",
            "--export",
            "p.csv",
        ],
        tmp.path(),
    );
    let text = fs::read_to_string(tmp.path().join("p.csv")).unwrap();
    // 6 classes x 2 test samples: 6 genuine, C(12,2) - 6 = 60 impostor.
    assert_eq!(text.lines().count(), 66);
    assert_eq!(text.lines().filter(|l| l.starts_with("GENUINE,")).count(), 6);
    assert!(text.lines().all(|l| l.split(',').count() == 7));
}

#[test]
fn synth_writes_four_files_per_trial_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "synth", "--layout", "10x4", "--dim", "8", "--trials", "1", "--seed", "9", "--out", out,
        ]
    };
    ok(&args("a"), tmp.path());
    ok(&args("b"), tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let names = csv_files(&a);
    assert_eq!(
        names,
        [
            "trial_00_iris_nir.csv",
            "trial_00_iris_vis.csv",
            "trial_00_periocular_nir.csv",
            "trial_00_periocular_vis.csv"
        ]
    );
    for n in names.iter().map(String::as_str).chain(["run.toml"]) {
        assert_eq!(
            fs::read(a.join(n)).unwrap(),
            fs::read(b.join(n)).unwrap(),
            "{n} differs"
        );
    }
    ok(
        &[
            "synth", "--layout", "10x4", "--dim", "8", "--seed", "10", "--out", "c",
        ],
        tmp.path(),
    );
    assert_ne!(
        fs::read(a.join("trial_00_iris_nir.csv")).unwrap(),
        fs::read(tmp.path().join("c/trial_00_iris_nir.csv")).unwrap()
    );
}

#[test]
fn thirty_trials_use_distinct_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &[
            "synth", "--layout", "4x2", "--dim", "4", "--trials", "30", "--out", "s",
        ],
        tmp.path(),
    );
    let dir = tmp.path().join("s");
    assert_eq!(csv_files(&dir).len(), 120);
    let manifest = fs::read_to_string(dir.join("run.toml")).unwrap();
    let seeds: std::collections::HashSet<&str> = manifest
        .lines()
        .filter_map(|l| l.strip_prefix("# trial "))
        .map(|l| l.rsplit(' ').next().unwrap())
        .collect();
    assert_eq!(seeds.len(), 30);
    let first: Vec<u8> = fs::read(dir.join("trial_00_iris_vis.csv")).unwrap();
    assert_ne!(first, fs::read(dir.join("trial_01_iris_vis.csv")).unwrap());
}

#[test]
fn full_weight_on_periocular_equals_periocular_alone() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &[
            "synth", "--layout", "16x6", "--dim", "32", "--trials", "2", "--out", "s",
        ],
        tmp.path(),
    );
    ok(
        &["eval", "--config", "s/run.toml", "--wp", "1", "--out", "fused"],
        tmp.path(),
    );
    ok(
        &[
            "eval",
            "--config",
            "s/run.toml",
            "--trait",
            "perioc",
            "--out",
            "single",
        ],
        tmp.path(),
    );
    for k in ["trial_00", "trial_01"] {
        let f = report(&tmp.path().join("fused").join(k).join("report.json"));
        let s = report(&tmp.path().join("single").join(k).join("report.json"));
        for field in [
            "eer",
            "eer_threshold",
            "decidability",
            "genuine_stats",
            "impostor_stats",
            "genuine_pairs",
        ] {
            assert_eq!(f[field], s[field], "{k}: {field}");
        }
        assert_eq!(
            fs::read(tmp.path().join("fused").join(k).join("curve.csv")).unwrap(),
            fs::read(tmp.path().join("single").join(k).join("curve.csv")).unwrap()
        );
    }
    let agg = report(&tmp.path().join("fused/aggregate.json"));
    assert_eq!(agg["num_trials"], 2);
    // CW with 3 train samples: 16 classes x C(3,2) genuine.
    assert_eq!(agg["genuine_pairs"], 48);
    let summary = fs::read_to_string(tmp.path().join("fused/summary.txt")).unwrap();
    assert!(summary.contains("EER (%)") && summary.contains("Decidability") && summary.contains('±'));
}

#[test]
fn sweep_prefers_the_stronger_trait() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &[
            "synth",
            "--layout",
            "30x6",
            "--dim",
            "64",
            "--iris-noise",
            "3.5",
            "--perioc-noise",
            "1.8",
            "--out",
            "s",
        ],
        tmp.path(),
    );
    let stdout = ok(&["sweep", "--config", "s/run.toml", "--out", "sw"], tmp.path());
    assert!(stdout.contains("best w_p"));
    let text = fs::read_to_string(tmp.path().join("sw/sweep.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 21);
    let best = rows.iter().min_by(|a, b| a[1].total_cmp(&b[1])).unwrap();
    assert!(best[0] >= 0.5, "best w_p {}", best[0]);
    assert!(
        rows[20][1] < rows[0][1],
        "periocular alone should beat iris alone"
    );
}

#[test]
fn spectral_fusion_runs_on_intra_scenarios() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &["synth", "--layout", "12x4", "--dim", "16", "--out", "s"],
        tmp.path(),
    );
    ok(
        &[
            "eval",
            "--config",
            "s/run.toml",
            "--scenario",
            "nir",
            "--spectral-fusion",
            "--out",
            "e",
        ],
        tmp.path(),
    );
    let r = report(&tmp.path().join("e/trial_00/report.json"));
    assert_eq!(r["spectral_fusion"], true);
    // 12 classes x C(2,2) genuine, C(24,2) - 12 impostor.
    assert_eq!(r["genuine_pairs"], 12);
    assert_eq!(r["impostor_pairs"], 264);
}

#[test]
fn errors_name_their_module_and_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin(&["eval", "--config", "missing.toml"], tmp.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: config: missing.toml"), "{err}");

    ok(
        &["synth", "--layout", "4x2", "--dim", "4", "--out", "s"],
        tmp.path(),
    );
    let out = bin(&["eval", "--config", "s/run.toml", "--wp", "2"], tmp.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: config:"));

    fs::write(tmp.path().join("s/trial_00_iris_vis.csv"), "garbage\n").unwrap();
    let out = bin(&["eval", "--config", "s/run.toml"], tmp.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: embedding-store:"));
}
