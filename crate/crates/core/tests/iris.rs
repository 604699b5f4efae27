use std::path::PathBuf;

use bkm_core::data::{load_csv, subsample_balanced};
use bkm_core::{solve_task, Error, SolveConfig, Solver};

const FEATURES: [&str; 4] = ["sepal_length", "sepal_width", "petal_length", "petal_width"];

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/iris.csv")
}

#[test]
fn loads_all_rows() {
    let d = load_csv(fixture(), &FEATURES, Some("species")).unwrap();
    assert_eq!(d.n_rows(), 150);
    assert_eq!(d.n_features(), 4);
    assert_eq!(d.class_names, ["setosa", "versicolor", "virginica"]);
    let labels = d.labels.as_ref().unwrap();
    for c in 0..3 {
        assert_eq!(labels.iter().filter(|&&l| l == c).count(), 50);
    }
    // empty selection means every non-label column
    assert_eq!(load_csv(fixture(), &[], Some("species")).unwrap(), d);
}

#[test]
fn missing_column_is_a_parse_error() {
    let err = load_csv(fixture(), &["sepal_length", "stem_length"], Some("species")).unwrap_err();
    assert!(
        matches!(err, Error::Parse { ref column, .. } if column == "stem_length"),
        "{err}"
    );
    assert!(matches!(
        load_csv(fixture().with_extension("tsv"), &[], None),
        Err(Error::Io { .. })
    ));
}

#[test]
fn subsample_is_balanced_and_deterministic() {
    let d = load_csv(fixture(), &FEATURES, Some("species")).unwrap();
    let a = subsample_balanced(&d, 3, 5, 4, 21).unwrap();
    assert_eq!(a.n_points(), 15);
    assert_eq!(a.dim(), 4);
    assert_eq!(a.sizes(), [5, 5, 5]);
    assert_eq!(a, subsample_balanced(&d, 3, 5, 4, 21).unwrap());
    assert_ne!(
        a.points(),
        subsample_balanced(&d, 3, 5, 4, 22).unwrap().points()
    );
    let b = subsample_balanced(&d, 2, 3, 2, 5).unwrap();
    assert_eq!((b.n_points(), b.dim()), (6, 2));
    assert!(matches!(
        subsample_balanced(&d, 4, 5, 4, 1),
        Err(Error::InsufficientData(_))
    ));
    assert!(matches!(
        subsample_balanced(&d, 3, 51, 4, 1),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn solves_a_subsample() {
    let d = load_csv(fixture(), &FEATURES, Some("species")).unwrap();
    let t = subsample_balanced(&d, 3, 3, 4, 8).unwrap();
    let r = solve_task(&t, &SolveConfig::new(Solver::Exhaustive)).unwrap();
    let pt = r.posterior.as_ref().unwrap();
    assert!(pt.complete);
    let p = r.map_probability.unwrap();
    assert!(p > 0.0 && p <= 1.0);
    assert!(r.truth_probability.unwrap() > 0.0);
}
