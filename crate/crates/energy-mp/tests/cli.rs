use energy_mp::cli::run;
use serde_json::Value;
use std::path::{Path, PathBuf};

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn emp(args: &[&str]) -> (i32, String, String) {
    let out = run(std::iter::once("emp").chain(args.iter().copied()));
    (out.code, out.stdout, out.stderr)
}

fn report(args: &[&str]) -> Value {
    let (code, stdout, stderr) = emp(args);
    assert_eq!(code, 0, "{args:?}: {stderr}");
    serde_json::from_str(&stdout).unwrap()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("emp-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

/// Compares against `tests/golden/<name>`; `UPDATE_GOLDEN=1` rewrites the file.
fn golden(name: &str, args: &[&str]) {
    let (code, stdout, stderr) = emp(args);
    assert_eq!(code, 0, "{stderr}");
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &stdout).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(stdout, want, "report for {name} changed");
}

#[test]
fn golden_reports() {
    let md = data("mdelta_6.json");
    golden("validate_mdelta.json", &["validate", "--mdp", &md, "--no-timing"]);
    golden("mec_mdelta.json", &["mec", "--mdp", &md, "--no-timing"]);
    golden("classify_mdelta.json", &["classify", "--mdp", &md, "--no-timing"]);
    golden("decide_mdelta.json", &["decide", "--mdp", &md, "--state", "s", "--energy", "0", "--no-timing"]);
    golden("decide_loop.json", &["decide", "--mdp", &data("loop_pp.json"), "--no-timing"]);
    golden("gen_lb_6.json", &["gen-lb", "--delta", "1/6", "--no-timing"]);
    golden("gen_random_42.json", &["gen-random", "--seed", "42", "--no-timing"]);
}

#[test]
fn report_envelope() {
    let r = report(&["validate", "--mdp", &data("mdelta_6.json")]);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "validate");
    assert_eq!(r["tool_version"], env!("CARGO_PKG_VERSION"));
    assert!(r["input_digest"].as_str().unwrap().starts_with("sha256:"));
    assert!(r["timing_ms"].is_number());
    let quiet = report(&["validate", "--mdp", &data("mdelta_6.json"), "--no-timing"]);
    assert!(quiet.get("timing_ms").is_none());
}

#[test]
fn decide_lower_bound_at_zero_energy() {
    let r = report(&["decide", "--mdp", &data("mdelta_6.json"), "--state", "s", "--energy", "0"]);
    assert_eq!(r["result"]["query"]["winnable"], true);
    assert_eq!(r["result"]["query"]["i_s"], 0);
}

#[test]
fn input_errors_exit_2() {
    let (code, _, err) = emp(&["validate", "--mdp", &data("bad_row.json")]);
    assert_eq!(code, 2);
    assert!(err.contains("5/6"), "{err}");
    assert_eq!(err.lines().count(), 1);
    assert_eq!(emp(&["validate", "--mdp", &data("missing.json")]).0, 2);
    assert_eq!(emp(&["decide", "--mdp", &data("mdelta_6.json"), "--bogus"]).0, 2);
    assert_eq!(emp(&["frobnicate"]).0, 2);
    assert_eq!(emp(&["synth", "--mdp", &data("mdelta_6.json"), "--state", "s", "--energy", "0"]).0, 2);
    assert_eq!(emp(&["decide", "--mdp", &data("mdelta_6.json"), "--state", "nope", "--energy", "0"]).0, 2);
    assert_eq!(emp(&["simulate", "--mdp", &data("mdelta_6.json"), "--trials", "3"]).0, 2);
    assert_eq!(emp(&["gen-lb", "--delta", "1/6", "--unary"]).0, 2);
    assert_eq!(emp(&["--help"]).0, 0);
}

#[test]
fn synth_then_verify_composes() {
    let strat = tmp("mdelta_strategy.json");
    let md = data("mdelta_6.json");
    let out = strat.display().to_string();
    let r = report(&["synth", "--mdp", &md, "--state", "s", "--energy", "0", "--search-b", "--out", &out]);
    assert_eq!(r["result"]["verification"]["pass"], true);
    let b = r["result"]["search"]["b_min"].as_i64().unwrap();
    assert!(b >= 2);
    let v = report(&["verify", "--mdp", &md, "--strategy", &out, "--state", "s", "--energy", "0"]);
    assert_eq!(v["result"]["pass"], true);
    assert_eq!(v["result"]["energy_safe"], true);
    let fixed = b.to_string();
    let r = report(&["synth", "--mdp", &md, "--state", "s", "--energy", "0", "--b", &fixed]);
    assert_eq!(r["result"]["verification"]["pass"], true);
    // Below Z_b + 1 the alternating parameters are rejected.
    assert_eq!(emp(&["synth", "--mdp", &md, "--state", "s", "--energy", "0", "--b", "0"]).0, 2);
    let sim = report(&[
        "simulate", "--mdp", &md, "--strategy", &out, "--state", "s", "--seed", "3", "--trials", "20", "--horizon", "20000",
    ]);
    assert_eq!(sim["result"]["violations"], 0);
    assert_eq!(sim["result"]["positive_trials"][1], 20);
    let again = report(&[
        "simulate", "--mdp", &md, "--strategy", &out, "--state", "s", "--seed", "3", "--trials", "20", "--horizon", "20000",
    ]);
    assert_eq!(sim["result"], again["result"]);
}

#[test]
fn synth_reports_losing_queries() {
    let dir = tmp("lose.json");
    let text = r#"{"d":2,"R":1,"states":[{"id":"q","owner":"max"}],"edges":[{"src":"q","dst":"q","reward":[-1,1]}]}"#;
    std::fs::write(&dir, text).unwrap();
    let p = dir.display().to_string();
    let r = report(&["synth", "--mdp", &p, "--state", "q", "--energy", "5", "--search-b"]);
    assert_eq!(r["result"]["winnable"], false);
    assert_eq!(r["result"]["i_s"], "inf");
}

#[test]
fn bounds_and_walks_on_a_chain() {
    let p = tmp("walk.json");
    let text = r#"{"d":1,"R":1,"states":[{"id":"a","owner":"random"}],
        "edges":[{"src":"a","dst":"a","prob":"3/4","reward":[1]},{"src":"a","dst":"a","prob":"1/4","reward":[-1]}]}"#;
    std::fs::write(&p, text).unwrap();
    let path = p.display().to_string();
    let csv = tmp("table.csv").display().to_string();
    let r = report(&["bounds", "--mdp", &path, "--b", "5", "--emit-csv", &csv, "--seed", "1", "--trials", "2000"]);
    assert_eq!(r["result"]["constants"]["mu"], "1/2");
    // h = 2·1·1/(1/4) = 8; T_5 bounds [0, (5 + 8 + 1)/(1/2)].
    assert_eq!(r["result"]["bounds"]["t_b_upper"], "28");
    let table = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().count(), 11);
    assert!(table.starts_with("b,t_b_lower,t_b_upper,empirical_mean"));
    let w = report(&["simulate", "--mdp", &path, "--seed", "2", "--trials", "500", "--horizon", "10000", "--b", "10"]);
    let mean: f64 = w["result"]["t_b"]["mean"].as_str().unwrap().parse().unwrap();
    assert!((mean - 20.0).abs() < 3.0, "{mean}");
    assert_eq!(emp(&["bounds", "--mdp", &path, "--emit-csv", &csv]).0, 2);
}

#[test]
fn generators() {
    let a = report(&["gen-random", "--seed", "7", "--states", "3", "--no-timing"]);
    let b = report(&["gen-random", "--seed", "7", "--states", "3", "--no-timing"]);
    assert_eq!(a, b);
    let u = report(&["gen-lb", "--delta", "1/8", "--unary"]);
    assert!(u["result"]["mdp"]["states"].as_array().unwrap().len() > 5);
    let dir = tmp("corpus");
    let r = report(&["gen-exhaustive", "--out-dir", &dir.display().to_string()]);
    let n = r["result"]["count"].as_u64().unwrap() as usize;
    assert_eq!(std::fs::read_dir(&dir).unwrap().count(), n);
}

#[test]
fn theoretical_bound_report() {
    let r = report(&["bounds", "--mdp", &data("loop_pp.json"), "--theoretical"]);
    let res = &r["result"];
    assert_eq!(res["size_f_gain"], 28);
    let z_g: u128 = res["z_g"].as_str().unwrap().parse().unwrap();
    let b: u128 = res["b"].as_str().unwrap().parse().unwrap();
    assert_eq!(b, z_g + 1);
    assert_eq!(res["delta"], "2^-15680");
}
