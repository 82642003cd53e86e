use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mrvcg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrvcg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn gen(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["gen", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    mrvcg(&args)
}

#[test]
fn gen_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let flags = ["--kind", "increasing", "--clients", "6", "--resources", "2", "--units", "3", "--seed", "9"];
    assert!(gen(&a, &flags).status.success());
    assert!(gen(&b, &flags).status.success());
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.iter().filter(|n| n.to_string_lossy().ends_with(".vft")).count(), 6);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn gen_rejects_zero_units() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gen(tmp.path(), &["--units", "0"]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(mrvcg(&["auction"]).status.code(), Some(2));
    assert_eq!(mrvcg(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn vickrey_fixture_pays_second_price() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("a.vft"), "VFT1\n1 1\n0 5\n").unwrap();
    fs::write(tmp.path().join("b.vft"), "VFT1\n1 1\n0 3\n").unwrap();
    let out = tmp.path().join("res");
    let o = mrvcg(&["auction", "--dataset", tmp.path().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("3.000000"), "{table}");
    let csv = fs::read_to_string(out.join("result.csv")).unwrap();
    assert!(csv.contains("agent,a,1,5.0,3.0"), "{csv}");

    let o = mrvcg(&["auction", "--csv", "--dataset", tmp.path().to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("record,agent_id,allocation,value,payment\n"));
}

#[test]
fn small_grid_agrees_with_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(gen(tmp.path(), &["--clients", "5", "--units", "3,3", "--seed", "4"]).status.success());
    for ds in ["combination", "kd_tree", "linear_scan"] {
        let o = mrvcg(&["auction", "--oracle", "--ds", ds, "--dataset", tmp.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{ds}: {}", text(&o));
        assert!(text(&o).contains("oracle: welfare and payments agree"));
    }
}

#[test]
fn concave_dataset_matches_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(gen(tmp.path(), &["--kind", "concave", "--clients", "16", "--units", "31"]).status.success());
    let o = mrvcg(&["auction", "--verify-baseline", "--dataset", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("agree with the greedy auction"));
}

#[test]
fn baseline_needs_one_resource() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(gen(tmp.path(), &["--kind", "concave", "--clients", "3", "--units", "3,3"]).status.success());
    let o = mrvcg(&["auction", "--verify-baseline", "--dataset", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let body = fs::read_to_string(path).unwrap();
    let mut lines = body.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("{name} in {header:?}"));
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

#[test]
fn quick_bench_writes_every_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mrvcg(&["bench", "--quick", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    for f in [
        "env.csv",
        "naive_comparisons.csv",
        "join_timing.csv",
        "matches_per_query.csv",
        "phases.csv",
        "false_positives.csv",
        "auction_timing.csv",
        "separate_auctions.csv",
    ] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let fp = tmp.path().join("false_positives.csv");
    let ds = csv_column(&fp, "ds");
    let ratio = csv_column(&fp, "false_positive_ratio");
    assert!(ds.iter().any(|d| d == "linear_scan"));
    for (d, r) in ds.iter().zip(&ratio) {
        if d == "linear_scan" || d == "kd_tree" {
            assert_eq!(r.parse::<f64>().unwrap(), 0.0, "{d}");
        }
    }
    let naive = tmp.path().join("naive_comparisons.csv");
    assert_eq!(csv_column(&naive, "comparisons"), csv_column(&naive, "division_count"));
    for col in ["dataset", "seed", "resources", "cells", "ds"] {
        assert!(!csv_column(&tmp.path().join("join_timing.csv"), col).is_empty());
    }
}

#[test]
fn quick_verify_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mrvcg(&["verify", "--quick", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let out = text(&o);
    for s in ["oracle", "invariants", "structures", "baseline"] {
        assert!(out.contains(&format!("suite={s} status=pass")), "{out}");
    }
    assert!(tmp.path().join("verify.csv").exists());
}

#[test]
fn injected_fault_fails_with_reproduction() {
    let o = mrvcg(&["verify", "--quick", "--suite", "oracle", "--inject-fault", "drop-left-infinity"]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    let out = text(&o);
    assert!(out.contains("suite=oracle status=fail"), "{out}");
    let cmd = out
        .lines()
        .find_map(|l| l.split_once("mrvcg verify ").map(|(_, rest)| rest.to_string()))
        .expect("reproduction command");
    let args: Vec<&str> = std::iter::once("verify").chain(cmd.split_whitespace()).collect();
    let again = mrvcg(&args);
    assert_eq!(again.status.code(), Some(1), "{}", text(&again));
}

#[test]
fn config_file_supplies_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("gen.toml");
    fs::write(&cfg, "kind = \"concave\"\nclients = 3\nunits = [2, 2]\nseed = 5\n").unwrap();
    let out = tmp.path().join("d");
    let o = mrvcg(&["--config", cfg.to_str().unwrap(), "gen", "--clients", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    let vfts = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "vft")).count();
    assert_eq!(vfts, 4, "command line wins over the config file");
    let spec = fs::read_to_string(out.join("spec.cfg")).unwrap();
    assert!(spec.contains("kind = concave"), "{spec}");

    fs::write(&cfg, "units = { a = 1 }\n").unwrap();
    let o = mrvcg(&["--config", cfg.to_str().unwrap(), "gen", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
