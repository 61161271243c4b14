use std::path::Path;
use std::process::{Command, Output};

fn mttsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mttsp")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FEASIBLE: &str = r#"{
  "format_version": 1,
  "grid": { "dims": [6, 6, 1], "cell_size": 1.0, "blocked": [[2, 0, 0], [2, 1, 0], [2, 2, 0]] },
  "depot": [0.5, 0.5, 0.5],
  "v_max": 1.0,
  "targets": [
    { "waypoints": [[0, 4.5, 0.5, 0.5], [20, 4.5, 4.5, 0.5]], "windows": [[0, 10], [12, 20]] },
    { "waypoints": [[0, 0.5, 5.5, 0.5]], "windows": [[0, null]] }
  ]
}"#;

const INFEASIBLE: &str = r#"{
  "format_version": 1,
  "grid": { "dims": [6, 6, 1], "cell_size": 1.0 },
  "depot": [0.5, 0.5, 0.5],
  "v_max": 1.0,
  "targets": [ { "waypoints": [[0, 5.5, 5.5, 0.5]], "windows": [[0, 2]] } ]
}"#;

#[test]
fn solve_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("feasible.json");
    let sol = dir.path().join("solution.json");
    std::fs::write(&inst, FEASIBLE).unwrap();
    let out = mttsp(&["solve", path(&inst), "--w", "1.05", "-o", path(&sol)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&sol).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["status"], "solved");
    assert!(json["t_f"].as_f64().unwrap() > 0.0);
    let out = mttsp(&["validate", path(&inst), path(&sol)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tampered_solution_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("feasible.json");
    let sol = dir.path().join("solution.json");
    std::fs::write(&inst, FEASIBLE).unwrap();
    assert!(mttsp(&["solve", path(&inst), "-o", path(&sol)]).status.success());
    let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sol).unwrap()).unwrap();
    // Shift the first segment's end point sideways.
    let end = &mut json["trajectory"][0]["end"];
    end[2] = serde_json::json!(end[2].as_f64().unwrap() + 0.3);
    std::fs::write(&sol, json.to_string()).unwrap();
    let out = mttsp(&["validate", path(&inst), path(&sol)]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid_solution");
    assert!(!err["details"]["violations"].as_array().unwrap().is_empty());
}

#[test]
fn infeasible_instance_still_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("infeasible.json");
    let sol = dir.path().join("solution.json");
    std::fs::write(&inst, INFEASIBLE).unwrap();
    let out = mttsp(&["solve", path(&inst), "-o", path(&sol)]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sol).unwrap()).unwrap();
    assert_eq!(json["status"], "infeasible");
    assert_eq!(json["t_f"], "inf");
}

#[test]
fn bad_instance_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("broken.json");
    std::fs::write(&inst, FEASIBLE.replace("[0, 10]", "[10, 0]")).unwrap();
    let out = mttsp(&["solve", path(&inst), "-o", path(&dir.path().join("s.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "instance");
    assert!(err["message"].as_str().unwrap().contains("window 0"));
}

#[test]
fn generate_is_deterministic_and_benchable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let args = |p: &Path| {
        vec!["generate", "--seed", "4", "--targets", "2", "--sum-window-len", "16", "--dims", "6,6,6", "-o"]
            .into_iter()
            .map(String::from)
            .chain([path(p).to_string()])
            .collect::<Vec<_>>()
    };
    for p in [&a, &b] {
        let argv = args(p);
        let out = mttsp(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let csv = dir.path().join("bench.csv");
    let out = mttsp(&["bench", path(dir.path()), "--w", "1.1", "--jobs", "2", "-o", path(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["instance", "status", "t_f", "lb", "w", "wall_ms", "tours_emitted", "fmc_calls", "paths_expanded"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let (t_f, lb): (f64, f64) = (row[2].parse().unwrap(), row[3].parse().unwrap());
        if row[1] == *"solved" {
            assert!(t_f <= 1.1 * lb + 1e-6, "{t_f} vs {lb}");
        }
    }
}

#[test]
fn oracle_prints_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("feasible.json");
    std::fs::write(&inst, FEASIBLE).unwrap();
    let out = mttsp(&["oracle", path(&inst), "--space-res", "0.25", "--tours"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(json["t_f"].as_f64().unwrap() > 0.0);
    assert_eq!(json["tours"].as_array().unwrap().len(), 4);
}
