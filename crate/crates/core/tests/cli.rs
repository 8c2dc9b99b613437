use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use morley_ocp::cli::svg;
use morley_ocp::cli::table::Table;
use morley_ocp::cli::RunFile;

fn morley(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morley-ocp"))
        .args(args)
        .env("MORLEY_OCP_THREADS", "0")
        .output()
        .expect("binary runs")
}

fn solve(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["solve", "--quiet", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = morley(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn read_table(path: &Path) -> Table {
    Table::parse(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn ex1_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    solve(dir.path(), &["--problem", "ex1", "--theta", "0.3", "--max-dofs", "2000", "--svg"]);
    for f in ["convergence.csv", "run.json", "convergence.svg", "efficiency.svg", "mesh_final.txt", "indicators_final.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let t = read_table(&dir.path().join("convergence.csv"));
    assert_eq!(t.header, morley_ocp::cli::table::HEADER);
    assert!(t.rows.len() >= 5);
    let dofs: Vec<f64> = t.numeric("dofs").into_iter().map(Option::unwrap).collect();
    assert!(dofs.windows(2).all(|w| w[1] > w[0]));
    assert!(t.numeric("energy_error").iter().all(Option::is_some));
    assert!(t.numeric("wall_ms").iter().all(Option::is_none));
}

#[test]
fn ex4_has_estimator_but_no_error_columns() {
    let dir = tempfile::tempdir().unwrap();
    solve(dir.path(), &["--problem", "ex4", "--max-dofs", "800"]);
    let t = read_table(&dir.path().join("convergence.csv"));
    for col in ["energy_error", "l2_error", "eff_index"] {
        assert!(t.numeric(col).iter().all(Option::is_none), "{col}");
    }
    for col in ["eta_h", "eta1", "eta2", "eta3", "eta4", "eta5", "mu_h"] {
        assert!(t.numeric(col).iter().all(Option::is_some), "{col}");
    }
    let c = t.column("lambda_summary").unwrap();
    assert!(t.rows.iter().all(|r| r[c].starts_with("max|l|=")));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["--problem", "ex3", "--max-dofs", "1500"];
    solve(a.path(), &args);
    solve(b.path(), &args);
    for f in ["convergence.csv", "indicators_final.csv", "mesh_final.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn csv_cells_round_trip_through_json() {
    let dir = tempfile::tempdir().unwrap();
    solve(dir.path(), &["--problem", "manufactured", "--seed", "3", "--variant", "state-active", "--max-dofs", "600", "--record-timing"]);
    let t = read_table(&dir.path().join("convergence.csv"));
    let run = RunFile::read(&dir.path().join("run.json")).unwrap();
    assert_eq!(run.records.len(), t.rows.len());
    for (row, r) in t.rows.iter().zip(&run.records) {
        let cell = |name: &str| row[t.column(name).unwrap()].parse::<f64>().unwrap();
        assert_eq!(cell("eta_h").to_bits(), r.eta.to_bits());
        for k in 0..5 {
            assert_eq!(cell(&format!("eta{}", k + 1)).to_bits(), r.eta_parts[k].to_bits());
        }
        assert_eq!(cell("energy_error").to_bits(), r.error.unwrap().energy_error.to_bits());
        assert_eq!(cell("mu_h").to_bits(), r.mu.to_bits());
        assert_eq!(cell("wall_ms").to_bits(), r.wall_ms.to_bits());
    }
    assert_eq!(&run.table(), &t);
}

#[test]
fn svg_is_regenerated_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    solve(dir.path(), &["--problem", "ex1", "--max-dofs", "600", "--svg"]);
    let t = read_table(&dir.path().join("convergence.csv"));
    let written = fs::read_to_string(dir.path().join("convergence.svg")).unwrap();
    assert_eq!(written, svg::render(&svg::convergence_plot(&t, "ex1-adaptive")));
    let written = fs::read_to_string(dir.path().join("efficiency.svg")).unwrap();
    assert_eq!(written, svg::render(&svg::efficiency_plot(&t, "ex1-adaptive")));
}

#[test]
fn bad_flags_exit_with_two() {
    for args in [
        vec!["solve", "--problem", "ex7"],
        vec!["solve", "--problem", "ex1", "--theta", "1.5"],
        vec!["solve", "--problem", "ex1", "--max-dofs", "lots"],
        vec!["solve", "--bogus"],
        vec!["frobnicate"],
    ] {
        assert_eq!(morley(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn solver_failure_exits_with_three_and_names_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let o = morley(&["solve", "--quiet", "--problem", "ex4", "--pdas-max-iterations", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("iteration 0"));
}

#[test]
fn report_of_one_run_is_its_table() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    solve(&run, &["--problem", "ex3", "--max-dofs", "500"]);
    let rep = dir.path().join("rep");
    let o = morley(&["report", "--out", rep.to_str().unwrap(), run.join("run.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let merged = read_table(&rep.join("report.csv"));
    let original = read_table(&run.join("convergence.csv"));
    assert_eq!(merged.header[0], "run");
    let stripped = Table {
        header: merged.header[1..].to_vec(),
        rows: merged.rows.iter().map(|r| r[1..].to_vec()).collect(),
    };
    assert_eq!(stripped, original);
    assert!(rep.join("report.svg").is_file());
}

#[test]
fn report_overlays_adaptive_and_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let (a, u) = (dir.path().join("a"), dir.path().join("u"));
    solve(&a, &["--problem", "ex1", "--max-dofs", "500"]);
    solve(&u, &["--problem", "ex1", "--max-dofs", "500", "--uniform"]);
    let rep = dir.path().join("rep");
    let o = morley(&["report", "--out", rep.to_str().unwrap(), a.join("run.json").to_str().unwrap(), u.join("run.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let merged = read_table(&rep.join("report.csv"));
    let labels: std::collections::BTreeSet<&str> = merged.rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(labels.into_iter().collect::<Vec<_>>(), vec!["ex1-adaptive", "ex1-uniform"]);
    let dofs: Vec<f64> = merged.numeric("dofs").into_iter().map(Option::unwrap).collect();
    assert!(dofs.windows(2).all(|w| w[1] >= w[0]));
    let plot = fs::read_to_string(rep.join("report.svg")).unwrap();
    assert!(plot.contains("ex1-adaptive eta_h") && plot.contains("ex1-uniform eta_h"));
}

#[test]
fn corrupt_run_file_exits_with_two_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken_run.json");
    fs::write(&bad, "{\"format\": \"morley-ocp-run\", \"version\": 1, \"records\": [").unwrap();
    let o = morley(&["report", "--out", dir.path().join("rep").to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken_run.json"));
    let other = dir.path().join("other.json");
    fs::write(&other, "{\"format\": \"something-else\", \"version\": 1}").unwrap();
    let o = morley(&["report", other.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
