use topswap_core::verify::{
    check_decomposition, check_inverse_identity, check_pushforward, summarize,
};

#[test]
fn inverse_pairing_is_exhaustive_through_n6() {
    let report = check_inverse_identity(6).unwrap();
    assert!(report.passed(), "{:?}", report.failures);
    // Every line and every ordered index pair with the star in between.
    assert!(report.cases > 0);
    assert_eq!(report.max_violation, 0.0);
}

#[test]
fn transposition_decomposition_is_exhaustive_through_n6() {
    let report = check_decomposition(6).unwrap();
    assert!(report.passed(), "{:?}", report.failures);
    assert_eq!(report.max_violation, 0.0);
}

#[test]
fn class_pushforward_is_exhaustive_through_n6() {
    let report = check_pushforward(6).unwrap();
    assert!(report.passed(), "{:?}", report.failures);
    assert_eq!(report.max_violation, 0.0);
    // The reverse-order landing position is recorded for inspection but is
    // not an asserted claim.
    assert!(report.range.contains("observed"), "range: {}", report.range);
}

#[test]
fn identity_suite_summary_is_all_pass() {
    let reports = vec![
        check_inverse_identity(5).unwrap(),
        check_decomposition(5).unwrap(),
        check_pushforward(5).unwrap(),
    ];
    let text = summarize(&reports);
    assert_eq!(text.lines().count(), 3);
    for line in text.lines() {
        assert!(line.starts_with("PASS "), "unexpected line: {line}");
    }
}

#[test]
fn identity_checks_refuse_oversized_ranges() {
    assert!(check_inverse_identity(9).is_err());
    assert!(check_pushforward(8).is_err());
}
