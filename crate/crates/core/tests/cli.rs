use std::path::Path;
use std::process::{Command, Output};

use pbdss::CodeSpec;
use tempfile::TempDir;

fn pbdss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbdss"))
        .args(args)
        .env_remove("PBDSS_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

const TEN_FIVE: [&str; 8] = ["--k", "5", "--n-a", "7", "--n-b", "8", "--tau", "1"];

fn construct(dir: &TempDir, extra: &[&str]) -> String {
    let out = path(dir, "code.json");
    let mut args = vec!["construct"];
    args.extend(TEN_FIVE);
    args.extend(extra);
    args.extend(["--out", &out]);
    let o = pbdss(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn construct_writes_loadable_spec() {
    let dir = TempDir::new().unwrap();
    let file = construct(&dir, &[]);
    let spec = CodeSpec::from_json(&std::fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!((spec.n(), spec.k(), spec.n_a(), spec.tau()), (10, 5, 7, 1));
}

#[test]
fn invalid_parameters_exit_two() {
    let o = pbdss(&["construct", "--k", "5", "--n-a", "7", "--n-b", "8", "--tau", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = pbdss(&["construct", "--k", "5", "--n-a", "7", "--n-b", "8"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn repair_sim_reports_example_reads() {
    let dir = TempDir::new().unwrap();
    let traces = path(&dir, "traces.json");
    let mut args = vec!["repair-sim"];
    args.extend(TEN_FIVE);
    args.extend(["--node", "0", "--out", &traces]);
    let o = pbdss(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&traces).unwrap()).unwrap();
    let text = json.to_string();
    assert!(text.contains("\"total\":9"), "{text}");
}

#[test]
fn too_many_failures_exit_three() {
    let mut args = vec!["repair-sim"];
    args.extend(TEN_FIVE);
    args.extend(["--fail", "0,1,2"]);
    assert_eq!(pbdss(&args).status.code(), Some(3));
    let mut args = vec!["repair-sim"];
    args.extend(TEN_FIVE);
    args.extend(["--fail", "0,1"]);
    assert_eq!(pbdss(&args).status.code(), Some(0));
}

#[test]
fn corrupted_generator_exits_four() {
    let dir = TempDir::new().unwrap();
    let file = construct(&dir, &[]);
    let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    let alpha = json["classA"]["alpha"].as_array_mut().unwrap();
    let first = alpha[0].clone();
    alpha[1] = first;
    std::fs::write(&file, json.to_string()).unwrap();
    let o = pbdss(&["construct", "--spec", &file]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn tables_are_deterministic() {
    let a = pbdss(&["tables", "--table", "3"]);
    let b = pbdss(&["tables", "--table", "3"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 6, "{text}");
    assert!(text.contains("1.875"), "{text}");
}

#[test]
fn table_two_json_lists_three_rows() {
    let o = pbdss(&["tables", "--table", "2", "--format", "json"]);
    assert!(o.status.success());
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["cR"], 44.0);
}

#[test]
fn seed_env_overrides_flag() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, env: Option<&str>| {
        let out = path(&dir, name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_pbdss"));
        cmd.args(["encode"]).args(TEN_FIVE).args(["--seed", "1", "--out", &out]);
        match env {
            Some(v) => cmd.env("PBDSS_SEED", v),
            None => cmd.env_remove("PBDSS_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(Path::new(&out)).unwrap()
    };
    let flag_one = run("a.bin", None);
    assert_eq!(flag_one, run("b.bin", None));
    assert_ne!(flag_one, run("c.bin", Some("2")));
    assert_eq!(flag_one, run("d.bin", Some("1")));
}

#[test]
fn encoded_array_repairs_from_file() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "input.txt");
    let arr = path(&dir, "arr.bin");
    let mut args = vec!["encode"];
    args.extend(TEN_FIVE);
    args.extend(["--input", &input, "--out", &arr]);
    // 25 symbols of 3 bits hold 9 bytes but not 12.
    std::fs::write(&input, b"hello stripe").unwrap();
    assert_eq!(pbdss(&args).status.code(), Some(2));
    std::fs::write(&input, b"hi stripe").unwrap();
    assert!(pbdss(&args).status.success());
    let mut args = vec!["repair-sim"];
    args.extend(TEN_FIVE);
    args.extend(["--array", &arr, "--node", "0,6,9"]);
    let o = pbdss(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_single_spec_passes() {
    let dir = TempDir::new().unwrap();
    let file = construct(&dir, &["--construction", "2"]);
    let o = pbdss(&["verify", "--spec", &file, "--trials", "3"]);
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS"));
}
