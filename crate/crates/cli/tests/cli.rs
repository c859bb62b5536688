use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vinolab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vinolab"))
        .args(args)
        .current_dir(dir)
        .env_remove("VINOLAB_BUDGET")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn record(out: &Output) -> Value {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON record")
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn count_routes_agree() {
    let dir = tmp();
    let r = record(&vinolab(&["count", "--n", "2", "--s", "2", "--N", "2", "--algo", "all"], dir.path()));
    let res = &r["results"];
    assert_eq!(res["naive"], "6");
    assert_eq!(res["mitm"], "6");
    assert_eq!(res["torus"], "6");
    assert_eq!(res["agreement"], true);
    assert_eq!(r["subcommand"], "count");
    assert_eq!(r["params"]["args"]["N"], 2);
}

#[test]
fn count_through_spill_file() {
    let dir = tmp();
    let r = record(&vinolab(&["count", "--n", "3", "--s", "2", "--N", "6", "--algo", "naive", "--spill", "h.spill"], dir.path()));
    assert_eq!(r["results"]["naive"], r["results"]["spill"]);
    assert_eq!(r["results"]["agreement"], true);
    assert!(dir.path().join("h.spill").exists());
}

#[test]
fn appendix_boundary_values_are_exact_strings() {
    let dir = tmp();
    let r = record(&vinolab(&["appendix", "--n", "3", "--delta", "4", "--theta", "0"], dir.path()));
    assert_eq!(r["results"]["omega"], serde_json::json!(["1/1", "1/2", "0/1"]));
    assert_eq!(r["results"]["eta"], serde_json::json!(["2/1", "1/1"]));
    assert_eq!(r["results"]["exact_solution"], true);
}

#[test]
fn threshold_just_below_n_plus_one() {
    let dir = tmp();
    let r = record(&vinolab(&["threshold", "--n", "3", "--delta", "3999/1000"], dir.path()));
    assert_eq!(r["results"]["verdict"], true);
    let margin = r["results"]["margin"].as_str().unwrap();
    assert!(!margin.starts_with('-') && margin != "0/1", "margin {margin}");
    let at = record(&vinolab(&["threshold", "--n", "3", "--delta", "4"], dir.path()));
    assert_eq!(at["results"]["verdict"], false);
    assert_eq!(at["results"]["margin"], "0/1");
}

#[test]
fn exit_codes() {
    let dir = tmp();
    let d = dir.path();
    // budget
    let out = vinolab(&["count", "--n", "2", "--s", "3", "--N", "40", "--algo", "naive", "--max-tuples", "1000"], d);
    assert_eq!(code(&out), 2);
    let out = vinolab(&["tree", "--n", "3", "--p", "11", "--depth", "30", "--max-nodes", "10"], d);
    assert_eq!(code(&out), 2);
    // validation
    assert_eq!(code(&vinolab(&["appendix", "--n", "2", "--delta", "4"], d)), 3);
    assert_eq!(code(&vinolab(&["appendix", "--n", "3", "--delta", "2"], d)), 3);
    assert_eq!(code(&vinolab(&["decouple", "--delta", "0.3", "--trials", "1"], d)), 3);
    assert_eq!(code(&vinolab(&["count", "--n", "2", "--s", "2", "--N", "4", "--max-panels", "0"], d)), 3);
    // usage
    assert_eq!(code(&vinolab(&["count", "--n", "2"], d)), 64);
    assert_eq!(code(&vinolab(&["appendix", "--n", "3", "--delta", "four"], d)), 64);
    assert_eq!(code(&vinolab(&["frobnicate"], d)), 64);
    assert_eq!(code(&vinolab(&["count", "--n", "2", "--s", "2", "--N", "4", "--bogus"], d)), 64);
    let out = Command::new(env!("CARGO_BIN_EXE_vinolab"))
        .args(["weights", "--n", "3", "--p", "11"])
        .env("VINOLAB_BUDGET", "enormous")
        .output()
        .unwrap();
    assert_eq!(code(&out), 64);
    // help is not an error
    assert_eq!(code(&vinolab(&["--help"], d)), 0);
}

#[test]
fn budget_profile_is_echoed() {
    let out = Command::new(env!("CARGO_BIN_EXE_vinolab"))
        .args(["weights", "--n", "3", "--p", "11"])
        .env("VINOLAB_BUDGET", "small")
        .output()
        .unwrap();
    let r = record(&out);
    assert_eq!(r["params"]["budget"]["profile"], "small");
}

#[test]
fn persisted_record_round_trips() {
    let dir = tmp();
    let out = vinolab(&["weights", "--n", "4", "--p", "37/2", "--series", "20", "--out", "w.json"], dir.path());
    let printed = record(&out);
    let stored: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("w.json")).unwrap()).unwrap();
    assert_eq!(printed, stored);
    assert_eq!(stored["results"]["relations_agree"], true);
    let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1, "temporary files must not be left behind");
}

#[test]
fn jsonl_records_append() {
    let dir = tmp();
    for n in ["3", "4", "5"] {
        record(&vinolab(&["threshold", "--n", n, "--delta", "9/2", "--out", "t.jsonl"], dir.path()));
    }
    let text = fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    let ns: Vec<u64> = lines.iter().map(|r| r["results"]["n"].as_u64().unwrap()).collect();
    assert_eq!(ns, [3, 4, 5]);
}

#[test]
fn stochastic_results_are_reproducible() {
    let dir = tmp();
    let runs: Vec<&[&str]> = vec![
        &["decouple", "--delta", "1/4", "--trials", "3", "--samples", "2048", "--seed", "7"],
        &["minor-sup", "--n", "2", "--N", "32,64", "--samples", "2000", "--seed", "7"],
        &["torus-moment", "--n", "2", "--s", "2", "--N", "5", "--method", "monte-carlo", "--samples", "3000", "--seed", "7"],
        &["inflate", "--cells", "8", "--samples", "512", "--cover-balls", "4", "--seed", "7"],
    ];
    for args in runs {
        let a = record(&vinolab(args, dir.path()));
        let b = record(&vinolab(args, dir.path()));
        assert_eq!(
            serde_json::to_string(&a["results"]).unwrap(),
            serde_json::to_string(&b["results"]).unwrap(),
            "{args:?}"
        );
    }
    let a = record(&vinolab(&["decouple", "--delta", "1/4", "--trials", "3", "--samples", "2048", "--seed", "8"], dir.path()));
    let b = record(&vinolab(&["decouple", "--delta", "1/4", "--trials", "3", "--samples", "2048", "--seed", "9"], dir.path()));
    assert_ne!(a["results"]["ratios"], b["results"]["ratios"]);
}

#[test]
fn csv_output() {
    let dir = tmp();
    let out = vinolab(&["appendix", "--n", "3", "--delta", "4", "--format", "csv"], dir.path());
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "j,omega,eta\n1,1/1,2/1\n2,1/2,1/1\n3,0/1,\n");
    let out = vinolab(&["arcs", "--n", "2", "--N", "16", "--format", "csv"], dir.path());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 5);
}

#[test]
fn growth_plot_data() {
    let dir = tmp();
    let d = dir.path();
    record(&vinolab(&["count", "--n", "2", "--s", "4", "--growth", "4,8,16", "--out", "g.jsonl"], d));
    let out = vinolab(&["plot", "--kind", "growth", "--input", "g.jsonl", "--csv", "g.csv"], d);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(d.join("g.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "series,N,J,log_N,log_J,reference_slope,log_J_reference");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.rsplit(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[1] == "5"), "reference slope for n=2, s=4 is 5");
    let desc: Value = serde_json::from_str(&fs::read_to_string(d.join("g.plot.json")).unwrap()).unwrap();
    let slopes: Vec<f64> = desc["reference_lines"].as_array().unwrap().iter().map(|l| l["slope"].as_f64().unwrap()).collect();
    assert_eq!(slopes, [4.0, 5.0]);
    assert_eq!(desc["x"]["column"], "log_N");
}

#[test]
fn appendix_sweep_plot_crosses_zero() {
    let dir = tmp();
    let d = dir.path();
    record(&vinolab(&["appendix", "--n", "3", "--delta", "7/2", "--sweep-to", "9/2", "--steps", "10", "--out", "a.jsonl"], d));
    let out = vinolab(&["plot", "--kind", "appendix", "--input", "a.jsonl", "--csv", "a.csv"], d);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(d.join("a.csv")).unwrap();
    let gaps: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[2].parse().unwrap(), c[4].parse().unwrap())
        })
        .collect();
    for (delta, gap) in gaps {
        assert_eq!(gap.partial_cmp(&0.0).unwrap(), 4.0f64.partial_cmp(&delta).unwrap(), "Δ = {delta}");
    }
}

#[test]
fn plot_selection_errors() {
    let dir = tmp();
    let d = dir.path();
    record(&vinolab(&["threshold", "--n", "3", "--delta", "4", "--out", "t.jsonl"], d));
    let out = vinolab(&["plot", "--kind", "vp-scan", "--input", "t.jsonl", "--csv", "v.csv"], d);
    assert_eq!(code(&out), 3, "nothing to plot");
    record(&vinolab(&["appendix", "--n", "3", "--delta", "4", "--out", "t.jsonl"], d));
    let out = vinolab(&["plot", "--kind", "appendix", "--input", "t.jsonl", "--csv", "v.csv"], d);
    assert_eq!(code(&out), 3, "mixed subcommands");
    assert!(!d.join("v.csv").exists());
}

#[test]
fn tree_text_export() {
    let dir = tmp();
    let out = vinolab(&["tree", "--n", "3", "--p", "11", "--depth", "1", "--text"], dir.path());
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("D_{1p/3} scale=1/1 ball=2/1 weight=1/1\n"));
    assert!(text.contains("A_p b=2/1 weight=3/8 edge=3/8"));
}
