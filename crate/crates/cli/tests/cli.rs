use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn treecode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treecode"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn digest(out: &Output) -> Vec<u8> {
    Sha256::digest(&out.stdout).to_vec()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json output")
}

#[test]
fn build_and_search_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let recipe = write(
        dir.path(),
        "eks.json",
        r#"{"kind":"eks","k":3,"delta":"1/2","seed":5}"#,
    );
    let a = treecode(&["build", &recipe]);
    let b = treecode(&["build", &recipe, "--threads", "1"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(digest(&a), digest(&b));
    assert_eq!(json(&a)["kind"], "eks_params");

    let search = write(
        dir.path(),
        "search.json",
        r#"{"n":4,"sigma_out":4,"delta":"1/2","trials":500}"#,
    );
    let s1 = treecode(&["search", &search, "--seed", "3"]);
    let s2 = treecode(&["search", &search, "--seed", "3", "--threads", "2"]);
    assert_eq!(digest(&s1), digest(&s2));
    assert_eq!(json(&s1)["seed"], 3);
}

#[test]
fn verify_exit_codes() {
    let dir = TempDir::new().unwrap();
    let pass = write(
        dir.path(),
        "pass.json",
        r#"{"code":{"kind":"trivial","n":6},"check":{"property":"tree_distance","delta":"1"}}"#,
    );
    assert_eq!(treecode(&["verify", &pass]).status.code(), Some(0));

    let fail = write(
        dir.path(),
        "fail.json",
        r#"{"code":{"kind":"identity","n":4},"check":{"property":"tree_distance","delta":"1/2"}}"#,
    );
    let out = treecode(&["verify", &fail]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["pass"], false);
    assert!(v["witness"]["x"].is_array());

    let big = write(
        dir.path(),
        "big.json",
        r#"{"code":{"kind":"trivial","n":24},"check":{"property":"tree_distance","delta":"1"}}"#,
    );
    assert_eq!(treecode(&["verify", &big]).status.code(), Some(3));
    assert_eq!(
        treecode(&["verify", &pass, "--cap", "4"]).status.code(),
        Some(3)
    );

    let bad = write(dir.path(), "bad.json", r#"{"code":{"kind":"nope"}}"#);
    assert_eq!(treecode(&["verify", &bad]).status.code(), Some(4));
    assert_eq!(treecode(&["verify"]).status.code(), Some(4));
    assert_eq!(treecode(&["--help"]).status.code(), Some(0));
    assert_eq!(
        treecode(&["verify", "/nonexistent/file.json"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn neighborhood_and_conditions() {
    let dir = TempDir::new().unwrap();
    let nb = write(
        dir.path(),
        "nb.json",
        r#"{"code":{"kind":"eks","k":2,"delta":"1/2","seed":1},
            "check":{"property":"neighborhood","partition":{"kind":"eks_partition","k":2}}}"#,
    );
    let out = treecode(&["verify", &nb]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["blocks"].as_array().unwrap().len(), 3);

    let chs = write(
        dir.path(),
        "chs.json",
        r#"{"code":{"kind":"identity","n":8},"check":{"property":"chs","m":1,"l1":2,"shift":-1}}"#,
    );
    let out = treecode(&["verify", &chs]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["lemma_precondition_holds"], false);
}

#[test]
fn bounds_from_the_command_line() {
    let out = treecode(&[
        "bound",
        "--formula",
        "window_construction",
        "--params",
        r#"{"n":65536,"k0":16,"epsilon":"1/2"}"#,
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["report"]["satisfied"], true);

    let out = treecode(&[
        "bound",
        "--formula",
        "window_ratio",
        "--params",
        r#"{"n":65536,"m":2,"delta":"1/2","ratio":"1"}"#,
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = treecode(&[
        "bound",
        "--formula",
        "imm_rate",
        "--params",
        r#"{"imm":"exp","delta":"1/2","n":128}"#,
    ]);
    assert_eq!(json(&out)["closed_form"]["bound"]["lo"], "4/1");

    let out = treecode(&[
        "bound",
        "--formula",
        "laminar_alphabet",
        "--params",
        r#"{"alpha":"1/8","ell":2,"lg_sigma_in":1}"#,
    ]);
    assert_eq!(json(&out)["value"], "1/4");

    assert_eq!(
        treecode(&["bound", "--formula", "nope", "--params", "{}"])
            .status
            .code(),
        Some(4)
    );
}

#[test]
fn audit_reports_ledger_and_refuses_unverified() {
    let dir = TempDir::new().unwrap();
    let ok = write(
        dir.path(),
        "ok.json",
        r#"{"code":{"kind":"trivial","n":8},"partition":{"kind":"eks_partition","k":3}}"#,
    );
    let out = treecode(&["audit", &ok]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["audit"]["report"]["satisfied"], true);
    assert_eq!(v["entropy"]["levels"].as_array().unwrap().len(), 4);

    let refused = write(
        dir.path(),
        "refused.json",
        r#"{"code":{"kind":"identity","n":8},"partition":{"kind":"eks_partition","k":3}}"#,
    );
    assert_eq!(treecode(&["audit", &refused]).status.code(), Some(2));

    let structural = write(
        dir.path(),
        "structural.json",
        r#"{"code":{"kind":"trivial","n":128},"partition":{"kind":"imm_partition","imm":"exp","delta":"1/2","ell":2}}"#,
    );
    let out = treecode(&["audit", &structural]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["audit"]["verification"], "structural");

    let text = treecode(&["audit", &ok, "--format", "text"]);
    assert!(String::from_utf8(text.stdout)
        .unwrap()
        .contains("audit.report.satisfied: true"));
}

#[test]
fn build_partition_writes_output_file() {
    let dir = TempDir::new().unwrap();
    let recipe = write(
        dir.path(),
        "p.json",
        r#"{"kind":"chs_partition","m":1,"l1":2,"shift":-1}"#,
    );
    let target = dir.path().join("out.json");
    let out = treecode(&["build", &recipe, "-o", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(target).unwrap()).unwrap();
    assert_eq!(v["partition"]["n"], 8);
    assert!(v["ledger"].is_array());
}
