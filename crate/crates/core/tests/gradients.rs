#[path = "support/gradcheck.rs"]
mod gradcheck;

use gradcheck::{check_kind, layer_kinds, TOLERANCE};

#[test]
fn every_layer_kind_matches_finite_differences() {
    let mut failures = Vec::new();
    for (i, (name, make)) in layer_kinds().into_iter().enumerate() {
        let worst = check_kind(make.as_ref(), 1000 + i as u64).unwrap();
        println!("{name:<15} max relative error {worst:.3e}");
        if worst > TOLERANCE {
            failures.push(format!("{name}: {worst:.3e}"));
        }
    }
    assert!(failures.is_empty(), "gradient mismatches: {failures:?}");
}
