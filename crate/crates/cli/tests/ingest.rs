use std::path::PathBuf;

use interpfn_cli::config::{TabularSection, TargetTransform};
use interpfn_cli::ingest::{ingest_reader, read_dataset, write_dataset};
use interpfn_cli::CliError;
use interpfn_core::data::Dataset;
use interpfn_core::rng;
use rand::Rng;

fn spec(transform: TargetTransform, standardize: bool) -> TabularSection {
    TabularSection {
        csv: PathBuf::from("unused.csv"),
        target: "y".into(),
        features: Vec::new(),
        target_transform: transform,
        standardize,
    }
}

#[test]
fn identity_transform_keeps_values() {
    let text = "a,b,y\n0.1,-2.5,3\n1e-3,7,0.30000000000000004\n-0.0,12345.678,-1\n";
    let (ds, info) = ingest_reader(text.as_bytes(), &spec(TargetTransform::None, false)).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.x(0), &[0.1, -2.5]);
    assert_eq!(ds.x(1), &[1e-3, 7.0]);
    assert_eq!(ds.y(1), &[0.30000000000000004]);
    assert_eq!(ds.x(2), &[-0.0, 12345.678]);
    assert_eq!(ds.y(2), &[-1.0]);
    assert_eq!((info.rows_read, info.rows_dropped, info.rows_used), (3, 0, 3));
    assert!(info.standardization.is_none());
}

#[test]
fn standardized_columns_have_unit_scale() {
    let mut r = rng::stream(3, &[]);
    let mut text = String::from("u,v,y\n");
    for _ in 0..200 {
        let u: f64 = r.random_range(-50.0..80.0);
        let v: f64 = r.random_range(1e3..2e3);
        text.push_str(&format!("{u},{v},1\n"));
    }
    let (ds, info) = ingest_reader(text.as_bytes(), &spec(TargetTransform::None, true)).unwrap();
    let n = ds.len() as f64;
    for j in 0..2 {
        let col: Vec<f64> = (0..ds.len()).map(|i| ds.x(i)[j]).collect();
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() <= 1e-12, "mean {mean}");
        assert!((sd - 1.0).abs() <= 1e-12, "sd {sd}");
    }
    let scales = info.standardization.unwrap();
    assert_eq!(scales.len(), 2);
    assert!(scales[1].mean > 1e3 && scales[1].sd > 0.0);
}

#[test]
fn log_affine_target_and_inverse() {
    let t = TargetTransform::LogAffine { shift: 3.0, scale: 14.0 };
    let text = format!("x,y\n1,{}\n", std::f64::consts::E);
    let (ds, _) = ingest_reader(text.as_bytes(), &spec(t, false)).unwrap();
    assert!((ds.y(0)[0] - 4.0 / 14.0).abs() < 1e-15);
    assert!((t.invert(ds.y(0)[0]) - std::f64::consts::E).abs() < 1e-14);
}

#[test]
fn missing_cells_drop_rows_and_are_counted() {
    let text = "a,b,y\n1,2,3\n,2,3\n1,NA,3\n4,5,.\n6,7,8\n";
    let (ds, info) = ingest_reader(text.as_bytes(), &spec(TargetTransform::None, false)).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!((info.rows_read, info.rows_dropped, info.rows_used), (5, 3, 2));
}

#[test]
fn non_numeric_cells_are_reported_by_line() {
    let text = "a,b,y\n1,2,3\n1,abc,3\n4,5,6\nx,5,6\n";
    let err = ingest_reader(text.as_bytes(), &spec(TargetTransform::None, false)).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, CliError::Data(_)));
    assert!(msg.contains("line 3") && msg.contains("line 5"), "{msg}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn nothing_left_is_fatal() {
    let text = "a,y\nNA,1\n2,\n";
    let err = ingest_reader(text.as_bytes(), &spec(TargetTransform::None, false)).unwrap_err();
    assert!(matches!(err, CliError::Data(_)));
}

#[test]
fn log_of_nonpositive_target_is_an_error() {
    let t = TargetTransform::LogAffine { shift: 3.0, scale: 14.0 };
    let err = ingest_reader("x,y\n1,0\n".as_bytes(), &spec(t, false)).unwrap_err();
    assert!(err.to_string().contains("line 2"));
}

#[test]
fn unknown_target_column_is_a_config_error() {
    let err = ingest_reader("a,b\n1,2\n".as_bytes(), &spec(TargetTransform::None, false)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn dataset_csv_round_trip_is_lossless() {
    let mut r = rng::stream(17, &[]);
    let mut ds = Dataset::new(vec!["p".into(), "q".into()], vec!["t0".into(), "t1".into()]);
    for i in 0..500 {
        let scale = 10f64.powi(r.random_range(-300..300));
        let x = [r.random::<f64>() * scale, -r.random::<f64>() / 3.0];
        let y = [(i as f64).sqrt(), f64::MIN_POSITIVE * r.random::<f64>()];
        ds.push(&x, &y).unwrap();
    }
    let mut buf = Vec::new();
    write_dataset(&ds, &mut buf).unwrap();
    let back = read_dataset(buf.as_slice(), 2).unwrap();
    assert_eq!(back.feature_names, ds.feature_names);
    assert_eq!(back.target_names, ds.target_names);
    assert_eq!(back.len(), ds.len());
    for i in 0..ds.len() {
        let a: Vec<u64> = ds.x(i).iter().chain(ds.y(i)).map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.x(i).iter().chain(back.y(i)).map(|v| v.to_bits()).collect();
        assert_eq!(a, b, "row {i}");
    }
}
