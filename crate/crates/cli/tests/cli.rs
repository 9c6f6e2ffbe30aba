use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn navrec(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_navrec"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn table(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn bench_braess_writes_totals() {
    let dir = tempfile::tempdir().unwrap();
    let out = navrec(&["bench", "--scenario", "braess-all"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = table(&dir.path().join("braess_totals.csv"));
    assert_eq!(
        rows[0][..4],
        ["scenario", "attack", "baseline_total", "combined_total"]
    );
    let totals: Vec<f64> = rows[1..].iter().map(|r| r[3].parse().unwrap()).collect();
    for (got, want) in totals.iter().zip([145.0, 120.0, 120.0, 105.0]) {
        assert!((got - want).abs() <= 1e-2, "{totals:?}");
    }
}

#[test]
fn gamma_above_total_demand_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = navrec(
        &["attack", "--scenario", "five_node", "--gamma", "25"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("exceeds the total true demand 20"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn optimal_attack_reaches_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = navrec(
        &[
            "attack",
            "--scenario",
            "five_node",
            "--profile",
            "optimal",
            "--gamma",
            "10",
            "--target",
            "3-5",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let plan = table(&dir.path().join("attack_plan.csv"));
    let total: u64 = plan[1..].iter().map(|r| r[2].parse::<u64>().unwrap()).sum();
    assert!(total <= 35, "{plan:?}");
    let flows = table(&dir.path().join("attack_edge_flows.csv"));
    let row = flows.iter().find(|r| r[0] == "3-5").unwrap();
    assert!(row[2].parse::<f64>().unwrap() >= 10.0 - 1e-9);
}

#[test]
fn outputs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "attack",
        "--scenario",
        "five_node",
        "--profile",
        "random",
        "--gamma",
        "10",
        "--target",
        "3-5",
        "--budget",
        "30",
        "--trials",
        "20",
        "--seed",
        "7",
    ];
    assert!(navrec(&args, a.path()).status.success());
    assert!(navrec(&args, b.path()).status.success());
    for f in [
        "report.json",
        "edge_loads.csv",
        "strategies.csv",
        "convergence.csv",
        "attack_plan.csv",
        "attack_edge_flows.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn usage_and_parse_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        navrec(&["solve-we", "--scenario", "no_such_scenario"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        navrec(&["solve-we", "--tol", "abc"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        navrec(&["attack", "--profile", "sneaky"], dir.path())
            .status
            .code(),
        Some(2)
    );
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"name\": \"x\",\n  \"network\": {\n").unwrap();
    let out = navrec(
        &["solve-we", "--scenario", bad.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn solve_commands_write_artifacts() {
    for cmd in ["solve-we", "solve-rs"] {
        let dir = tempfile::tempdir().unwrap();
        let out = navrec(&[cmd, "--scenario", "braess_users"], dir.path());
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let loads = table(&dir.path().join("edge_loads.csv"));
        assert!(loads.len() > 1);
        assert!(String::from_utf8_lossy(&out.stdout).contains("combined 120.0000"));
    }
}

#[test]
fn paths_lists_ranked_routes() {
    let dir = tempfile::tempdir().unwrap();
    let out = navrec(&["paths", "--scenario", "braess_users"], dir.path());
    assert!(out.status.success());
    let rows = table(&dir.path().join("paths.csv"));
    let labels: Vec<&str> = rows[1..].iter().map(|r| r[2].as_str()).collect();
    assert_eq!(labels, ["A-C-D-B", "A-C-B", "A-D-B"]);
}

#[test]
fn scenario_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let s = navrec::scenario::builtin_scenario("braess_users").unwrap();
    let path = dir.path().join("s.json");
    navrec::scenario::save_scenario(&s, &path).unwrap();
    let out = navrec(
        &["solve-we", "--scenario", path.to_str().unwrap()],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
