use std::fs;
use std::io::Write;
use std::path::Path;

use inrbench::harness::{
    emit_heatmaps, parse_config, parse_config_str, read_ledger, read_results_csv, run_matrix, write_tables, CellStatus, ExperimentMatrix,
    Metric, RunOptions, CANONICAL_CSV, LEDGER_FILE, RESULTS_CSV,
};
use inrbench::fieldmodels::ModelKind;

const SMALL: &str = r#"
models = ["grid", "gaplanes", "bacon"]
budgets = [128, 512]
bandwidths = [0.3]
resolution = 16
seeds = [1, 2]
[train]
iterations = 40
"#;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run_all(m: &ExperimentMatrix, dir: &Path, workers: usize) -> Vec<u8> {
    let report = run_matrix(m, dir, &RunOptions { workers, max_cells: None }).unwrap();
    assert!(report.is_complete());
    write_tables(dir, &report.results).unwrap();
    fs::read(dir.join(CANONICAL_CSV)).unwrap()
}

#[test]
fn golden_two_by_two_table_is_reproduced() {
    let m = parse_config(&fixture("golden_2x2.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let produced = run_all(&m, dir.path(), 1);
    let frozen = fs::read(fixture("golden_2x2.csv")).unwrap();
    assert_eq!(String::from_utf8(produced).unwrap(), String::from_utf8(frozen).unwrap());
}

#[test]
fn worker_count_does_not_change_the_canonical_table() {
    let m = parse_config_str(SMALL).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let one = run_all(&m, a.path(), 1);
    let three = run_all(&m, b.path(), 3);
    assert_eq!(one, three);
    assert_eq!(String::from_utf8(one).unwrap().lines().count(), 1 + 12);
}

#[test]
fn interrupted_run_resumes_to_the_same_table() {
    let m = parse_config_str(SMALL).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let reference = run_all(&m, a.path(), 1);

    let partial = run_matrix(&m, b.path(), &RunOptions { workers: 2, max_cells: Some(5) }).unwrap();
    assert_eq!((partial.attempted, partial.pending), (5, 7));
    let mut ledger = fs::OpenOptions::new().append(true).open(b.path().join(LEDGER_FILE)).unwrap();
    ledger.write_all(br#"{"config_hash":"0123","model":"gr"#).unwrap();
    drop(ledger);

    let resumed = run_matrix(&m, b.path(), &RunOptions { workers: 1, max_cells: None }).unwrap();
    assert_eq!((resumed.resumed, resumed.attempted), (5, 7));
    write_tables(b.path(), &resumed.results).unwrap();
    assert_eq!(fs::read(b.path().join(CANONICAL_CSV)).unwrap(), reference);
    assert_eq!(read_ledger(&b.path().join(LEDGER_FILE)).unwrap().len(), 12);

    let again = run_matrix(&m, b.path(), &RunOptions { workers: 1, max_cells: None }).unwrap();
    assert_eq!((again.resumed, again.attempted), (12, 0));
}

#[test]
fn gap_table_recomputes_from_the_absolute_table() {
    let m = parse_config_str(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_all(&m, dir.path(), 1);
    let rows = read_results_csv(&dir.path().join(RESULTS_CSV)).unwrap();
    let out = emit_heatmaps(&rows, Metric::Psnr, ModelKind::Grid, &dir.path().join("maps")).unwrap();
    assert_eq!(out.images.len(), 6);
    let mean = |model: &str, budget: usize| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.model.name() == model && r.budget == budget)
            .filter_map(|r| r.psnr_db)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let mut r = csv::Reader::from_path(out.delta_csv.unwrap()).unwrap();
    let mut n = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        let budget: usize = rec[2].parse().unwrap();
        if rec[6].is_empty() {
            assert!(rec[4].is_empty() && &rec[0] == "gaplanes" && budget == 128, "{rec:?}");
            continue;
        }
        let delta: f64 = rec[6].parse().unwrap();
        let expected = mean(&rec[0], budget) - mean("grid", budget);
        assert!((delta - expected).abs() <= 1e-9, "{rec:?}");
        if &rec[0] == "grid" {
            assert_eq!(delta, 0.0);
        }
        n += 1;
    }
    assert_eq!(n, 5);
}

#[test]
fn statuses_are_faithful() {
    let m = parse_config_str(
        "models = [\"grid\", \"siren\", \"hashgrid\"]\nbudgets = [200]\nbandwidths = [0.3]\nresolution = 16\n[train]\niterations = 5\nlr = 1e300\n",
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_all(&m, dir.path(), 2);
    for r in read_ledger(&dir.path().join(LEDGER_FILE)).unwrap() {
        match r.model {
            ModelKind::HashGrid => assert_eq!(r.status, CellStatus::Skipped),
            _ => assert_eq!(r.status, CellStatus::Diverged, "{:?}", r.model),
        }
        assert!(r.metrics.is_none());
    }
    let m = parse_config_str("models = [\"grid\"]\nbudgets = [64]\nbandwidths = [0.3]\nresolution = 16\n[train]\niterations = 3").unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_all(&m, dir.path(), 1);
    for r in read_results_csv(&dir.path().join(RESULTS_CSV)).unwrap() {
        assert_eq!(r.status, CellStatus::Ok);
        assert!(r.train_s.unwrap() > 0.0 && r.infer_s.unwrap() > 0.0);
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let m = parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!m.cells().is_empty());
        n += 1;
    }
    assert!(n >= 2);
}
