use std::collections::BTreeMap;

use aqp_infer::qmc::{SobolGenerator, MAX_DIMENSION};
use serde::Deserialize;

#[derive(Deserialize)]
struct Fixture {
    dimension: usize,
    points: BTreeMap<String, Vec<f64>>,
}

fn fixture() -> Fixture {
    let text = include_str!("data/sobol_d64_scipy.json");
    serde_json::from_str(text).expect("fixture parses")
}

#[test]
fn matches_reference_points_exactly() {
    let f = fixture();
    assert_eq!(f.dimension, MAX_DIMENSION);
    for (index, expected) in &f.points {
        let index: u64 = index.parse().unwrap();
        let mut gen = SobolGenerator::starting_at(f.dimension, index).unwrap();
        let got = gen.next_points(1);
        assert_eq!(got.row(0), expected.as_slice(), "point {index}");
    }
}

#[test]
fn sequential_generation_reaches_reference_points() {
    let f = fixture();
    let last: u64 = f.points.keys().map(|k| k.parse::<u64>().unwrap()).max().unwrap();
    let mut gen = SobolGenerator::new(f.dimension).unwrap();
    let all = gen.next_points(last as usize);
    for (index, expected) in &f.points {
        let i: usize = index.parse().unwrap();
        assert_eq!(all.row(i - 1), expected.as_slice(), "point {i}");
    }
}

#[test]
fn lower_dimensions_are_prefixes() {
    let mut wide = SobolGenerator::new(MAX_DIMENSION).unwrap();
    let mut narrow = SobolGenerator::new(5).unwrap();
    let a = wide.next_points(300);
    let b = narrow.next_points(300);
    for i in 0..300 {
        assert_eq!(&a.row(i)[..5], b.row(i));
    }
}

#[test]
fn dimension_limits() {
    assert!(SobolGenerator::new(0).is_err());
    assert!(SobolGenerator::new(MAX_DIMENSION + 1).is_err());
}
