use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_bnscore");

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_in(dir: &TempDir, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir.path()).args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn binary_vars(names: &[&str]) -> String {
    let vars: Vec<String> = names
        .iter()
        .map(|n| format!(r#"{{"name":"{n}","type":"discrete","states":["1","2"]}}"#))
        .collect();
    vars.join(",")
}

fn discrete_net(names: &[&str], edges: &[(&str, &str)]) -> String {
    let e: Vec<String> = edges.iter().map(|(a, b)| format!(r#"["{a}","{b}"]"#)).collect();
    format!(r#"{{"variables":[{}],"edges":[{}]}}"#, binary_vars(names), e.join(","))
}

const GAUSSIAN_CHAIN: &str = r#"{
  "variables": [{"name": "a", "type": "continuous"}, {"name": "b", "type": "continuous"}],
  "edges": [["a", "b"]],
  "parameters": {
    "a": {"gaussian": {"m": 0, "v": 1}},
    "b": {"gaussian": {"m": 0, "v": 1, "b": {"a": 1}}}
  }
}"#;

fn parse_reals(csv: &[u8]) -> Vec<Vec<f64>> {
    let text = std::str::from_utf8(csv).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn empty_database_scores_structure_prior_only() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", "x1,x2,x3\n");
    let out = json(&run(&["score", "-n", golden("chain.json").to_str().unwrap(), "-d", &data]));
    let c = &out["candidates"][0];
    assert_eq!(c["log_likelihood"].as_f64().unwrap(), 0.0);
    assert_eq!(c["log_score"], c["log_prior"]);
    // 25 DAGs on three labelled nodes.
    assert!((c["log_prior"].as_f64().unwrap() + 25f64.ln()).abs() < 1e-11);
}

#[test]
fn example_database_matches_hand_computation_and_golden_file() {
    let out = run(&[
        "score",
        "-n",
        golden("chain.json").to_str().unwrap(),
        "-d",
        golden("example.csv").to_str().unwrap(),
        "--local-terms",
    ]);
    let v = json(&out);
    // Uniform Dirichlet(1/4 per cell) for x2|x1 and x3|x2, Dirichlet(1/2, 1/2) for x1.
    let x1 = (0.5f64 * 0.5 / 2.0).ln();
    let x2 = (0.5f64 * 0.5).ln();
    let x3 = (0.5f64 * 1.25 / 1.5).ln();
    let terms = &v["candidates"][0]["local_terms"];
    for (name, want) in [("x1", x1), ("x2", x2), ("x3", x3)] {
        assert!((terms[name].as_f64().unwrap() - want).abs() < 1e-11, "{name}");
    }
    let ll = v["candidates"][0]["log_likelihood"].as_f64().unwrap();
    assert!((ll - (x1 + x2 + x3)).abs() < 1e-11);
    let expected = std::fs::read(golden("example_score.json")).unwrap();
    assert_eq!(out.stdout, expected);
}

#[test]
fn header_mismatch_exits_2_with_one_line_naming_the_file() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "bad.csv", "x1,x2,x4\n1,1,1\n");
    let out = run(&["score", "-n", golden("chain.json").to_str().unwrap(), "-d", &data]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.contains("bad.csv") && err.contains("line 1"), "{err}");
}

#[test]
fn bad_cell_reports_its_line() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", "x1,x2,x3\n1,1,1\n1,3,1\n");
    let out = run(&["score", "-n", golden("chain.json").to_str().unwrap(), "-d", &data]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn gen_zero_cases_is_header_only() {
    let dir = TempDir::new().unwrap();
    let net = write(&dir, "g.json", GAUSSIAN_CHAIN);
    let out = run(&["gen", "-n", &net, "-m", "0"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "a,b\n");
}

#[test]
fn gen_fair_coin_frequency() {
    let dir = TempDir::new().unwrap();
    let net = write(
        &dir,
        "coin.json",
        &format!(
            r#"{{"variables":[{}],"parameters":{{"c":{{"cpt":[[0.5,0.5]]}}}}}}"#,
            binary_vars(&["c"])
        ),
    );
    let out = run(&["gen", "-n", &net, "-m", "10000", "--seed", "11"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let ones = text.lines().skip(1).filter(|l| *l == "1").count();
    let f = ones as f64 / 1e4;
    assert!((0.48..=0.52).contains(&f), "{f}");
}

#[test]
fn gen_gaussian_chain_correlation() {
    let dir = TempDir::new().unwrap();
    let net = write(&dir, "g.json", GAUSSIAN_CHAIN);
    let out = run(&["gen", "-n", &net, "-m", "10000", "--seed", "5"]);
    assert!(out.status.success());
    let rows = parse_reals(&out.stdout);
    let m = rows.len() as f64;
    let mean = |k: usize| rows.iter().map(|r| r[k]).sum::<f64>() / m;
    let (ma, mb) = (mean(0), mean(1));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for r in &rows {
        sab += (r[0] - ma) * (r[1] - mb);
        saa += (r[0] - ma).powi(2);
        sbb += (r[1] - mb).powi(2);
    }
    let rho = sab / (saa * sbb).sqrt();
    assert!((rho - 0.5f64.sqrt()).abs() < 0.03, "{rho}");
}

#[test]
fn gen_is_reproducible_by_seed() {
    let dir = TempDir::new().unwrap();
    let net = write(&dir, "g.json", GAUSSIAN_CHAIN);
    let a = run(&["gen", "-n", &net, "-m", "50", "--seed", "9"]);
    let b = run(&["gen", "-n", &net, "-m", "50", "--seed", "9"]);
    let c = run(&["gen", "-n", &net, "-m", "50", "--seed", "10"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn gen_requires_parameters() {
    let out = run(&["gen", "-n", golden("chain.json").to_str().unwrap(), "-m", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn equiv_exit_codes() {
    let dir = TempDir::new().unwrap();
    let names = ["x", "y", "z"];
    let chain = write(&dir, "c.json", &discrete_net(&names, &[("x", "y"), ("y", "z")]));
    let rev = write(&dir, "r.json", &discrete_net(&names, &[("z", "y"), ("y", "x")]));
    let vs = write(&dir, "v.json", &discrete_net(&names, &[("x", "y"), ("z", "y")]));
    let other = write(&dir, "o.json", &discrete_net(&["x", "y"], &[("x", "y")]));

    let same = run(&["equiv", &chain, &rev, "--show-reversals"]);
    assert_eq!(same.status.code(), Some(0));
    let text = String::from_utf8(same.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("reverse")).count(), 2);

    let diff = run(&["equiv", &chain, &vs]);
    assert_eq!(diff.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&diff.stdout).contains("v-structure"));

    assert_eq!(run(&["equiv", &chain, &other]).status.code(), Some(2));
}

#[test]
fn learned_structure_scores_at_least_the_generator() {
    let dir = TempDir::new().unwrap();
    let names = ["a", "b", "c"];
    let net = format!(
        r#"{{"variables":[{}],"edges":[["a","b"],["c","b"]],"parameters":{{
            "a":{{"cpt":[[0.3,0.7]]}},
            "c":{{"cpt":[[0.6,0.4]]}},
            "b":{{"cpt":[[0.9,0.1],[0.2,0.8],[0.4,0.6],[0.05,0.95]]}}}}}}"#,
        binary_vars(&names)
    );
    write(&dir, "gen.json", &net);
    let data = run_in(&dir, &["gen", "-n", "gen.json", "-m", "60", "--seed", "2"]);
    assert!(data.status.success());
    std::fs::write(dir.path().join("d.csv"), &data.stdout).unwrap();

    let scored = json(&run_in(&dir, &["score", "-n", "gen.json", "-d", "d.csv"]));
    let gen_score = scored["candidates"][0]["log_score"].as_f64().unwrap();
    for extra in [&[][..], &["--no-collapse"][..]] {
        let mut args = vec!["learn", "-s", "gen.json", "-d", "d.csv", "--top-k", "1"];
        args.extend_from_slice(extra);
        let learned = json(&run_in(&dir, &args));
        let best = learned["candidates"][0]["log_score"].as_f64().unwrap();
        assert!(best >= gen_score - 1e-9, "{best} < {gen_score}");
    }
}

#[test]
fn learn_and_score_are_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let net = write(&dir, "g.json", GAUSSIAN_CHAIN);
    let data = run(&["gen", "-n", &net, "-m", "40", "--seed", "1"]);
    let csv = write(&dir, "d.csv", std::str::from_utf8(&data.stdout).unwrap());
    for args in [
        vec!["learn", "-s", &net, "-d", &csv, "--mode", "greedy", "--restarts", "4", "--seed", "3"],
        vec!["learn", "-s", &net, "-d", &csv],
        vec!["score", "-n", &net, "-d", &csv, "--local-terms"],
    ] {
        let a = run(&args);
        let b = Command::new(BIN).args(&args).env("BNSCORE_THREADS", "1").output().unwrap();
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout);
        assert_eq!(a.stderr, b.stderr);
    }
}

#[test]
fn prior_network_changes_the_score_and_flags_override_it() {
    let dir = TempDir::new().unwrap();
    let net = write(&dir, "g.json", GAUSSIAN_CHAIN);
    let data = run(&["gen", "-n", &net, "-m", "20", "--seed", "4"]);
    let csv = write(&dir, "d.csv", std::str::from_utf8(&data.stdout).unwrap());
    let score = |extra: &[&str]| {
        let mut args = vec!["score", "-n", &net, "-d", &csv];
        args.extend_from_slice(extra);
        json(&run(&args))["candidates"][0]["log_score"].as_f64().unwrap()
    };
    let plain = score(&[]);
    let informed = score(&["--prior", &net]);
    assert_ne!(plain, informed);
    assert_ne!(informed, score(&["--prior", &net, "--n-t", "10"]));
    assert_ne!(plain, score(&["--subset-dof", "marginalized", "--n-t", "5"]));
}

#[test]
fn mixed_domain_scores() {
    let dir = TempDir::new().unwrap();
    let net = write(
        &dir,
        "m.json",
        r#"{"variables":[{"name":"s","type":"discrete","states":["lo","hi"]},{"name":"y","type":"continuous"}],
            "edges":[["s","y"]]}"#,
    );
    let csv = write(&dir, "d.csv", "s,y\nlo,0.1\nhi,2.5\nlo,-0.3\nhi,1.9\n");
    let v = json(&run(&["score", "-n", &net, "-d", &csv]));
    assert!(v["candidates"][0]["log_score"].as_f64().unwrap().is_finite());
    let out = run(&["score", "-n", &net, "-d", &csv, "--subset-dof", "marginalized"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn project_keeps_requested_columns_in_order() {
    let out = run(&[
        "project",
        "-s",
        golden("chain.json").to_str().unwrap(),
        "-d",
        golden("example.csv").to_str().unwrap(),
        "--vars",
        "x3,x1",
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "x3,x1\n1,1\n1,2\n");
}

#[test]
fn zero_threads_is_rejected() {
    let out = Command::new(BIN)
        .args(["score", "-n", golden("chain.json").to_str().unwrap(), "-d", golden("example.csv").to_str().unwrap()])
        .env("BNSCORE_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
