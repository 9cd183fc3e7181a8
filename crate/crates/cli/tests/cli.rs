use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use interpfn_cli::RunConfig;

const QUICK: &str = r#"
rows = 60

[fit]
iterations = 40
restarts = 1

[full]
hidden = [6]
epochs = 2

[benchmark]
epochs = 2

[heatmap]
steps = 5
"#;

fn interpfn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interpfn")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn run_ok(cfg: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", cfg, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = interpfn(&args);
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(str::to_string).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

#[test]
fn sim1_report_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim1.toml", &format!("study = \"sim1\"\n{QUICK}\n[trial]\nmc_reps = 400\n"));
    let out = dir.path().join("out");
    run_ok(&cfg, &out, &[]);

    let (header, rows) = csv_rows(&out.join("report.csv"));
    assert_eq!(header, ["model_id", "form", "r", "loss_cv", "loss_cv_val", "mc_cv", "mc_cv_val"]);
    assert_eq!(rows.len(), 20);
    let ids: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    let expected: Vec<String> = (1..=18).map(|i| i.to_string()).collect();
    assert_eq!(&ids[..18], expected.iter().map(String::as_str).collect::<Vec<_>>().as_slice());
    assert_eq!(&ids[18..], ["benchmark", "complex_dnn"]);
    assert!(rows[9][1].starts_with("sim1.f1.2{sim1.f2.2, sim1.f2.3}"));
    assert_eq!(rows[9][2], "7.0");

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for key in ["lambda_opt", "selected_id", "selected", "seeds", "config", "candidates"] {
        assert!(json.get(key).is_some(), "report.json lacks {key}");
    }
    assert_eq!(json["config"]["fit"]["iterations"], 40);
    assert_eq!(json["config"]["selection"]["folds"], 5);

    let (dh, drows) = csv_rows(&out.join("dataset.csv"));
    assert_eq!(dh, ["mu0", "alpha", "beta", "y"]);
    assert_eq!(drows.len(), 60);
}

#[test]
fn sim3_report_has_accuracy_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim3.toml", &format!("study = \"sim3\"\n{QUICK}"));
    let out = dir.path().join("out");
    run_ok(&cfg, &out, &["--seed", "4"]);
    let (header, rows) = csv_rows(&out.join("report.csv"));
    assert_eq!(&header[7..], ["acc_cv", "acc_cv_val"]);
    assert_eq!(rows.len(), 11);
    for r in &rows {
        let acc: f64 = r[8].parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}

fn tabular_csv(dir: &Path) -> String {
    let mut text = String::from("y");
    for j in 1..=10 {
        write!(text, ",z{j}").unwrap();
    }
    text.push('\n');
    for i in 0..48 {
        let z: Vec<f64> = (1..=10).map(|j| ((i * j) % 17) as f64 + 0.1 * j as f64).collect();
        let y = (0.05 * z[0] - 0.02 * z[3]).exp();
        write!(text, "{y}").unwrap();
        for v in z {
            write!(text, ",{v}").unwrap();
        }
        text.push('\n');
    }
    text.push_str("1.0,NA,1,1,1,1,1,1,1,1,1\n");
    write(dir, "table.csv", &text)
}

#[test]
fn tabular_enumerates_405_candidates_and_writes_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    tabular_csv(dir.path());
    let cfg = write(
        dir.path(),
        "tab.toml",
        &format!("study = \"tabular\"\n{}\n[tabular]\ncsv = \"table.csv\"\n", QUICK.replace("iterations = 40", "iterations = 5")),
    );
    let out = dir.path().join("out");
    run_ok(&cfg, &out, &[]);

    let (_, rows) = csv_rows(&out.join("report.csv"));
    assert_eq!(rows.iter().filter(|r| r[0].parse::<usize>().is_ok()).count(), 405);

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["dataset"]["dropped_rows"], 1);

    for view in ["model", "f1", "f2_1", "f2_2"] {
        let path = out.join(format!("heatmap_{view}.csv"));
        let text = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6, "{view}");
        for l in &lines[1..] {
            let cells: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
            assert_eq!(cells.len(), 6);
            assert!(cells.iter().all(|c| c.is_finite()));
        }
    }
}

#[test]
fn gen_writes_the_dataset_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = interpfn(&["gen", "--study", "sim3", "--seed", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let (header, rows) = csv_rows(&out.join("dataset.csv"));
    assert_eq!(header, ["q1", "q2", "n", "y0", "y1"]);
    assert_eq!(rows.len(), 1000);
    assert!(!out.join("report.json").exists());
}

#[test]
fn defaults_output_loads_back() {
    for study in ["sim1", "sim2", "sim3", "tabular"] {
        let o = interpfn(&["defaults", "--study", study]);
        assert!(o.status.success());
        let text = String::from_utf8(o.stdout).unwrap();
        let cfg = RunConfig::from_toml_str(&text, None).unwrap();
        assert_eq!(cfg, RunConfig::defaults(study).unwrap());
    }
}

#[test]
fn studies_lists_the_registry() {
    let o = interpfn(&["studies"]);
    let text = String::from_utf8(o.stdout).unwrap();
    let names: Vec<&str> = text.lines().filter_map(|l| l.split_whitespace().next()).collect();
    assert_eq!(names, ["sim1", "sim2", "sim3", "tabular"]);
}

#[test]
fn config_errors_exit_with_2_and_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "study = \"sim1\"\nsede = 3\n",
        "study = \"sim4\"\n",
        "study = \"sim1\"\n[selection]\nfolds = 1\n",
        "study = \"sim1\"\n[candidates]\nsecond_layer = [\"sim1.f2.9\"]\n",
        "study = \"sim1\"\n[selection]\ncorrelation = \"kendall\"\n",
        "study = \"tabular\"\n[heatmap]\nviews = [\"f3\"]\n",
        "not toml at all [",
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("c{i}.toml"), text);
        let o = interpfn(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "case {i}: {}", String::from_utf8_lossy(&o.stderr));
        let err = String::from_utf8(o.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "case {i}: {err}");
        assert!(err.starts_with("interpfn: "));
    }
    let o = interpfn(&["run", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.csv", "y,a,b\n1,2,3\n1,oops,3\n");
    let missing = write(dir.path(), "m.toml", "study = \"tabular\"\n[tabular]\ncsv = \"nope.csv\"\n");
    let bad = write(dir.path(), "b.toml", "study = \"tabular\"\n[tabular]\ncsv = \"bad.csv\"\n");
    for cfg in [missing, bad] {
        let o = interpfn(&["gen", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    }
}
