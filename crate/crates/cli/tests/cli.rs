use std::path::PathBuf;
use std::process::{Command, Output};

fn camel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camel")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn config() -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.toml");
    p.to_str().unwrap().to_string()
}

fn data_lines(s: &str) -> Vec<&str> {
    s.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn bounds_prints_header_and_one_row() {
    let o = camel(&["bounds", "--epsilon0", "2", "--n", "60000", "--gamma", "0.0533", "--T", "1000"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("# camel "));
    assert!(out.lines().next().unwrap().contains("command=bounds"));
    let rows = data_lines(&out);
    assert_eq!(rows.len(), 2);
    let v: Vec<f64> = rows[1].split(',').take(3).map(|x| x.parse().unwrap()).collect();
    assert!(v[0] < v[1] && v[1] < v[2], "{v:?}");
}

#[test]
fn compare_respects_grid_flags() {
    let o = camel(&["compare", "--epsilon0", "1,2", "--n", "1000", "--gamma", "1", "--T", "1,10"]);
    assert!(o.status.success());
    assert_eq!(data_lines(&stdout(&o)).len(), 1 + 4);
}

#[test]
fn compose_ends_with_minimum() {
    let o = camel(&["compose", "--epsilon0", "1", "--n", "1000", "--T", "10"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().last().unwrap().starts_with("# epsilon="));
}

#[test]
fn amplify_rejects_bad_bound() {
    let o = camel(&["amplify", "--epsilon0", "1", "--n", "1000", "--bound", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown bound"));
}

#[test]
fn parse_errors_exit_one_and_help_exits_zero() {
    assert_eq!(camel(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(camel(&["--help"]).status.code(), Some(0));
    assert_eq!(camel(&["--version"]).status.code(), Some(0));
}

#[test]
fn train_is_reproducible_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let meter = dir.path().join("meter.csv");
    let model = dir.path().join("model.txt");
    let cfg = config();
    let args = [
        "train",
        "--config",
        &cfg,
        "--meter-out",
        meter.to_str().unwrap(),
        "--model-out",
        model.to_str().unwrap(),
    ];
    let a = camel(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = camel(&["--jobs", "1", "train", "--config", &config()]);
    let digest = |o: &Output| stdout(o).lines().find(|l| l.starts_with("# model_digest=")).unwrap().to_string();
    assert_eq!(digest(&a), digest(&b));
    assert_eq!(std::fs::read_to_string(&model).unwrap().lines().count(), 8);
    assert!(std::fs::read_to_string(&meter).unwrap().lines().count() > 1);
    let c = camel(&["train", "--config", &config(), "--seed", "2"]);
    assert_ne!(digest(&a), digest(&c));
}

#[test]
fn tampered_training_exits_two() {
    let o = camel(&["train", "--config", &config(), "--attack", "tamper_aggregation", "--attack-role", "S1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model_hash"));
}

#[test]
fn attack_scenarios_by_name_and_file() {
    let o = camel(&["attack", "--scenario", "malformed-delta", "--trials", "20"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(data_lines(&out)[1], "malformed_delta,20,20,0.000000,S3,full,post_shuffle:20");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(&path, "[[attack]]\nrole = \"S2\"\nbehavior = \"forge_f_share\"\ntrials = 10\n").unwrap();
    let o = camel(&["attack", "--scenario", path.to_str().unwrap(), "--no-commit"]);
    assert!(o.status.success());
    assert!(data_lines(&stdout(&o))[1].starts_with("forge_f_share,10,0,"));

    assert_eq!(camel(&["attack", "--scenario", "missing"]).status.code(), Some(1));
}

#[test]
fn shuffle_bench_compressed_is_dimension_free() {
    let o = camel(&["shuffle-bench", "--n", "16", "--d", "10,1000"]);
    assert!(o.status.success());
    assert_eq!(data_lines(&stdout(&o)).len(), 2);
    let o = camel(&["shuffle-bench", "--n", "16", "--mode", "vec", "--d", "4,8"]);
    let out = stdout(&o);
    let rows = data_lines(&out);
    assert_eq!(rows.len(), 3);
    let online = |r: &str| r.split(',').nth(6).unwrap().parse::<u64>().unwrap();
    assert!(online(rows[2]) > online(rows[1]));
}

#[test]
fn ldp_stats_within_bounds() {
    let o = camel(&["ldp-stats", "--trials", "20000", "--d", "8"]);
    assert!(o.status.success());
    let row: Vec<f64> = data_lines(&stdout(&o))[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert!(row[1] < row[2] && row[3] <= row[4] * 1.05, "{row:?}");
}
