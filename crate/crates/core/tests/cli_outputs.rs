use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use torus_market::cli::{execute, parse_and_validate};

fn run(args: &[&str], dir: &Path) -> Vec<PathBuf> {
    let out = dir.to_str().unwrap();
    let argv: Vec<&str> = ["torus-market"]
        .iter()
        .chain(args)
        .chain(["--out-dir", out].iter())
        .copied()
        .collect();
    let inv = parse_and_validate(argv).unwrap();
    execute(&inv, "test").unwrap()
}

fn find(paths: &[PathBuf], ext: &str) -> PathBuf {
    paths
        .iter()
        .find(|p| p.extension().unwrap() == ext)
        .cloned()
        .unwrap()
}

#[test]
fn nash_table_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let paths = run(&["nash-table", "--formats", "csv"], dir.path());
    assert_eq!(paths[0].file_name().unwrap(), "nash-table_test.csv");
    let mut reader = csv::Reader::from_path(&paths[0]).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["d", "omega", "x_star", "p_star", "stable"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 10);
    let last = &rows[9];
    assert_eq!(&last[0], "0.5");
    let x: f64 = last[2].parse().unwrap();
    assert!((x - 0.169_039_661_488_382_6).abs() < 1e-12);
    let text = fs::read_to_string(&paths[0]).unwrap();
    assert!(!text.contains('\r'));
}

#[test]
fn csv_aggregates_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let paths = run(
        &[
            "two-firm",
            "--d",
            "0.2,0.5",
            "--n-side",
            "12",
            "--seeds",
            "0:3:4",
            "--formats",
            "csv,json",
        ],
        dir.path(),
    );
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(find(&paths, "json")).unwrap()).unwrap();
    let aggs = json["aggregates"].as_array().unwrap();
    let mut reader = csv::Reader::from_path(find(&paths, "csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.iter().filter(|r| &r[col("agg")] == "0").count(), 8);
    let agg_rows: Vec<&csv::StringRecord> = rows.iter().filter(|r| &r[col("agg")] == "1").collect();
    assert_eq!(agg_rows.len(), aggs.len());
    for (row, agg) in agg_rows.iter().zip(aggs) {
        for field in [
            "mean_profit",
            "std_profit",
            "mean_price",
            "min_profit",
            "max_profit",
        ] {
            let csv_value: f64 = row[col(field)].parse().unwrap();
            assert_eq!(
                csv_value.to_bits(),
                agg[field].as_f64().unwrap().to_bits(),
                "{field}"
            );
        }
    }
}

#[test]
fn json_summary_schema() {
    let dir = tempfile::tempdir().unwrap();
    let paths = run(
        &[
            "multi-firm",
            "--m",
            "4,8,16",
            "--n-side",
            "16",
            "--seeds",
            "1,2,3",
            "--fit-min-m",
            "4",
            "--formats",
            "json",
        ],
        dir.path(),
    );
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&paths[0]).unwrap()).unwrap();
    for key in ["spec", "rows", "aggregates", "fits", "meta"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    let fit = &json["fits"][0]["fit"];
    for key in ["A", "B", "se_A", "se_B"] {
        assert!(fit[key].is_f64(), "missing fit.{key}");
    }
    assert!(json["meta"]["rng"].as_str().unwrap().contains("ChaCha8"));
    assert!(json["meta"]["wall_clock_secs"].is_f64());
    let spec: torus_market::ExperimentSpec = serde_json::from_value(json["spec"].clone()).unwrap();
    let rerun = torus_market::experiments::run(&spec).unwrap();
    assert_eq!(
        serde_json::to_value(&rerun.aggregates).unwrap(),
        json["aggregates"]
    );
}

#[test]
fn dat_and_svg_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let paths = run(
        &[
            "variance-scaling",
            "--n-side",
            "8,16",
            "--seeds",
            "0,1",
            "--formats",
            "dat,svg",
        ],
        dir.path(),
    );
    let dat = fs::read_to_string(find(&paths, "dat")).unwrap();
    let data: Vec<&str> = dat
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    assert_eq!(data.len(), 2);
    assert!(data.iter().all(|l| l.split(' ').count() == 2));
    let svg = fs::read_to_string(find(&paths, "svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn assign_map_two_regions_in_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let paths = run(&["assign-map", "--n-side", "20"], dir.path());
    assert_eq!(paths.len(), 2);
    for path in &paths {
        let grid: Vec<Vec<u8>> = fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| l.split(' ').map(|t| t.parse().unwrap()).collect())
            .collect();
        assert_eq!(grid.len(), 20);
        let middle = &grid[10];
        // the cheaper firm at x = 0.2 holds its own column, the dearer firm at x = 0.5 holds its own
        assert_eq!(middle[4], 0);
        assert_eq!(middle[10], 1);
        let ones = grid.iter().flatten().filter(|&&v| v == 1).count();
        assert!(ones > 0 && ones < 400);
    }
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_torus-market");
    let bad = Command::new(exe)
        .args(["two-firm", "--burn-in", "200", "--steps", "120"])
        .env("NO_COLOR", "1")
        .output()
        .unwrap();
    assert!(!bad.status.success());
    let stderr = String::from_utf8(bad.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.contains("burn-in must be < steps"));
    assert!(!stderr.contains('\x1b'));

    let dir = tempfile::tempdir().unwrap();
    let ok = Command::new(exe)
        .args(["nash-table", "--formats", "csv", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(ok.status.success());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);

    let missing = dir.path().join("file-not-dir");
    fs::write(&missing, "x").unwrap();
    let unwritable = Command::new(exe)
        .args(["nash-table", "--out-dir"])
        .arg(&missing)
        .output()
        .unwrap();
    assert!(!unwritable.status.success());
    assert_eq!(
        String::from_utf8(unwritable.stderr)
            .unwrap()
            .lines()
            .count(),
        1
    );
}
