//! End-to-end command-line checks: flag parsing, exact printed values, exit
//! codes, file outputs, and byte-identical determinism.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use moe_planner::chinchilla::{chinchilla_eval, ChinchillaFit, CurvePoint};
use moe_planner::records::{write_curve, write_records};

const BIN: &str = env!("CARGO_BIN_EXE_moe-planner");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn count_prints_exact_totals() {
    let args = ["count", "--l", "6", "--d", "288", "--g", "4", "--n-exp", "128", "--n-topk", "8"];
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("49766400"), "{text}");
    assert!(text.contains("n_total"), "{text}");
    assert!(text.contains("active_ratio"), "{text}");
    // Byte-identical on a second run.
    assert_eq!(stdout(&run(&args)), text);

    let json_out = run(&["count", "--l", "6", "--d", "288", "--g", "4", "--n-exp", "128",
        "--n-topk", "8", "--json"]);
    assert_eq!(code(&json_out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&json_out)).unwrap();
    assert_eq!(v["n_total"], "49766400");
    assert_eq!(v["gamma"], 48.0);
}

#[test]
fn count_minimal_and_invalid_dims() {
    let out = run(&["count", "--l", "1", "--d", "1", "--g", "1", "--n-exp", "1", "--n-topk", "1"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("n_total      7\n"), "{}", stdout(&out));

    let out = run(&["count", "--l", "1", "--d", "1", "--g", "1", "--n-exp", "8", "--n-topk", "9"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("n_topk exceeds n_exp"), "{}", stderr(&out));
}

#[test]
fn variants_preserve_budgets() {
    let out = run(&["variants", "--l", "8", "--d", "384", "--g", "4", "--n-exp", "64",
        "--n-topk", "8", "--factors", "1/4,1/2,1,2,4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    // Every variant row shows the same exact total: 8·384²·(4 + 3·64/4).
    let total_count = text.matches("61341696").count();
    assert!(total_count >= 5, "{text}");

    // A factor that breaks integrality of n_topk is rejected.
    let out = run(&["variants", "--l", "8", "--d", "384", "--g", "4", "--n-exp", "64",
        "--n-topk", "3", "--factors", "1/2"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("n_topk"), "{}", stderr(&out));
}

#[test]
fn solve_experts_exit_codes_distinguish_failures() {
    let out = run(&["solve-experts", "--l", "1", "--d", "10", "--g", "4",
        "--target-total", "475", "--target-active", "475"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("n_exp            1"), "{text}");
    assert!(text.contains("n_topk           1"), "{text}");

    // Active target saturated by the dense term: infeasible, exit 3.
    let out = run(&["solve-experts", "--l", "1", "--d", "10", "--g", "4",
        "--target-total", "475", "--target-active", "400"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("dense term"), "{}", stderr(&out));

    // Target order violation: validation error, exit 2.
    let out = run(&["solve-experts", "--l", "1", "--d", "10", "--g", "4",
        "--target-total", "400", "--target-active", "475"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn fit_power_recovers_generator_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    let records = common::power_law_records(20.0, -0.052, 0.023, -0.018, 1_000_000_000);
    fs::write(&path, write_records(&records)).unwrap();

    let out = run(&["fit-power", path.to_str().unwrap(), "--spec", "Ntotal+nexp+ntopk"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("ln(Ntotal)"), "{text}");
    assert!(text.contains("r_squared"), "{text}");

    let out = run(&["fit-power", path.to_str().unwrap(), "--spec", "Ntotal+nexp+ntopk",
        "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let coef = |i: usize| v["coefficients"][i]["coefficient"].as_f64().unwrap();
    assert!((coef(1) + 0.052).abs() < 1e-6, "{}", coef(1));
    assert!((coef(2) - 0.023).abs() < 1e-6, "{}", coef(2));
    assert!((coef(3) + 0.018).abs() < 1e-6, "{}", coef(3));
    assert!((v["r_squared"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn fit_power_failure_modes() {
    let dir = tempfile::tempdir().unwrap();

    // Constant sparsity makes ln(s) collinear with the intercept: exit 4.
    let path = dir.path().join("const_s.csv");
    let records: Vec<_> = common::power_law_records(20.0, -0.052, 0.023, -0.018, 1_000_000_000)
        .into_iter()
        .filter(|r| r.dims.n_exp == 16 * r.dims.n_topk)
        .collect();
    assert!(records.len() >= 10);
    fs::write(&path, write_records(&records)).unwrap();
    let out = run(&["fit-power", path.to_str().unwrap(), "--spec", "Ntotal+s"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("dependent columns"), "{}", stderr(&out));

    // Non-positive loss: exit 2.
    let path = dir.path().join("zero_loss.csv");
    fs::write(&path, "l,d,g,n_exp,n_topk,tokens_D,loss_L\n6,288,4,128,8,1000000000,0\n")
        .unwrap();
    let out = run(&["fit-power", path.to_str().unwrap(), "--spec", "Ntotal"]);
    assert_eq!(code(&out), 2);

    // Missing file: exit 2.
    let out = run(&["fit-power", "/nonexistent/records.csv", "--spec", "Ntotal"]);
    assert_eq!(code(&out), 2);
}

fn synthetic_curve(a: f64, b: f64, e: f64, alpha: f64, beta: f64) -> Vec<CurvePoint> {
    let fit = ChinchillaFit {
        a,
        b,
        e,
        alpha,
        beta,
        objective_value: 0.0,
        converged: true,
        start_point: [0.0; 5],
        start_index: 0,
    };
    let mut pts = Vec::new();
    for &(l, d) in &common::MAIN_GRID {
        let n = (l * d * d * 100) as f64;
        for ds in [9e9, 1.5e10, 2.5e10, 3.8e10, 5e10] {
            let loss = chinchilla_eval(&fit, n, ds).unwrap();
            pts.push(CurvePoint::new(n, ds, loss).unwrap());
        }
    }
    pts
}

#[test]
fn fit_chinchilla_recovers_and_compares() {
    let dir = tempfile::tempdir().unwrap();
    let path_a = dir.path().join("curve_a.csv");
    let path_b = dir.path().join("curve_b.csv");
    // Curve B sits a constant 0.25 above curve A: A dominates everywhere.
    fs::write(&path_a, write_curve(&synthetic_curve(28.0, 229.0, 1.08, 0.28, 0.16))).unwrap();
    fs::write(&path_b, write_curve(&synthetic_curve(28.0, 229.0, 1.33, 0.28, 0.16))).unwrap();

    let plot_dir = dir.path().join("series");
    let out = run(&["fit-chinchilla", path_a.to_str().unwrap(),
        "--compare", path_b.to_str().unwrap(),
        "--plot-dir", plot_dir.to_str().unwrap(), "--json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let a = v["fit"]["a"].as_f64().unwrap();
    assert!((a - 28.0).abs() / 28.0 < 0.01, "A = {a}");
    assert_eq!(v["fit"]["converged"], true);
    assert_eq!(v["comparison"]["fraction_a_below"], 1.0);

    // One TSV per token-count slice, with the comparison columns.
    let mut files: Vec<_> = fs::read_dir(&plot_dir)
        .unwrap()
        .map(|f| f.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files.len(), 5, "{files:?}");
    assert!(files.iter().all(|f| f.starts_with("series_D") && f.ends_with(".tsv")), "{files:?}");
    let body = fs::read_to_string(plot_dir.join(&files[0])).unwrap();
    assert!(body.starts_with("n_total\tloss_a\tloss_b\n"), "{body}");
    assert_eq!(body.lines().count(), 8, "{body}"); // header + 7 sizes
}

#[test]
fn fit_chinchilla_identifiability_exit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one_n.csv");
    // Five points, a single distinct N: the size exponent cannot be pinned.
    let pts: Vec<CurvePoint> = [9e9, 1.5e10, 2.5e10, 3.8e10, 5e10]
        .iter()
        .map(|&d| CurvePoint::new(5e8, d, 3.0 + 1e10 / d).unwrap())
        .collect();
    fs::write(&path, write_curve(&pts)).unwrap();
    let out = run(&["fit-chinchilla", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unidentifiable"), "{}", stderr(&out));
}

fn write_plan(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn plan_reports_choice_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_plan(
        dir.path(),
        "small.toml",
        "c_total = \"8e6\"\nc_active = \"2e6\"\nk_align = 2\n",
    );

    let out = run(&["plan", &path]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("chosen configuration"), "{text}");
    assert!(text.contains("% of budget"), "{text}");
    assert_eq!(stdout(&run(&["plan", &path])), text, "plan output must be deterministic");

    let out = run(&["plan", &path, "--verify-brute-force", "--table"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("agreed"), "{text}");
    assert!(text.contains("per-cell table"), "{text}");
    assert!(text.contains("no-topk"), "{text}");

    let out = run(&["plan", &path, "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["best"]["n_total"].is_string());
    assert_eq!(v["cells_total"], 297);
}

#[test]
fn plan_failure_modes() {
    let dir = tempfile::tempdir().unwrap();

    // No feasible cell: diagnostics printed, exit 3.
    let path = write_plan(dir.path(), "tiny.toml", "c_total = 10\nc_active = 10\n");
    let out = run(&["plan", &path]);
    assert_eq!(code(&out), 3);
    let text = stdout(&out);
    assert!(text.contains("no feasible configuration"), "{text}");
    assert!(text.contains("cells total 297"), "{text}");

    // Constraint-order violation: exit 2.
    let path = write_plan(dir.path(), "order.toml", "c_total = \"1e6\"\nc_active = \"2e6\"\n");
    let out = run(&["plan", &path]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("c_active"), "{}", stderr(&out));

    // Unknown key: exit 2, message names it.
    let path = write_plan(dir.path(), "typo.toml", "c_total = 10\nc_active = 5\nk_algin = 2\n");
    let out = run(&["plan", &path]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("k_algin"), "{}", stderr(&out));
}

#[test]
fn plan_verify_skips_oversized_spaces() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_plan(
        dir.path(),
        "big.toml",
        "c_total = \"1e12\"\nc_active = \"1e11\"\nmax_brute_candidates = 1000\n",
    );
    let out = run(&["plan", &path, "--verify-brute-force"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("skipped"), "{text}");
    assert!(text.contains("1000"), "{text}");
}

#[test]
fn plot_data_writes_one_file_per_slice() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("pts.csv");
    let pts = vec![
        CurvePoint::new(2e8, 5e10, 5.6).unwrap(),
        CurvePoint::new(1e8, 9e9, 7.3).unwrap(),
        CurvePoint::new(5e7, 9e9, 7.9).unwrap(),
    ];
    fs::write(&curve, write_curve(&pts)).unwrap();
    let out_dir = dir.path().join("plots");

    let out = run(&["plot-data", curve.to_str().unwrap(), "--out-dir",
        out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let listing = stdout(&out);
    assert!(listing.contains("series_D9000000000.tsv"), "{listing}");
    assert!(listing.contains("series_D50000000000.tsv"), "{listing}");

    let a = fs::read_to_string(out_dir.join("series_D9000000000.tsv")).unwrap();
    assert_eq!(a, "n_total\tloss_L\n50000000\t7.9\n100000000\t7.3\n");
    let b = fs::read_to_string(out_dir.join("series_D50000000000.tsv")).unwrap();
    assert_eq!(b, "n_total\tloss_L\n200000000\t5.6\n");
}

#[test]
fn usage_errors_exit_2() {
    let out = run(&["count", "--l", "6"]); // missing required flags
    assert_eq!(code(&out), 2);
    let out = run(&["no-such-subcommand"]);
    assert_eq!(code(&out), 2);
}
