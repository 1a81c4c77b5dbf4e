use topswap_core::kernels::KernelId;
use topswap_core::linalg::dense_symmetric_eigenvalues;
use topswap_core::spectral::{
    build_matrix, form_spectrum, gap_from_spectrum, spectral_gap, GapOptions,
};

fn golden_tau_grid() -> Vec<(usize, usize, f64)> {
    let text = include_str!("golden/tau_over_positions.csv");
    text.lines()
        .skip(1)
        .map(|line| {
            let mut it = line.split(',');
            let n = it.next().unwrap().parse().unwrap();
            let k = it.next().unwrap().parse().unwrap();
            let ratio = it.next().unwrap().parse().unwrap();
            (n, k, ratio)
        })
        .collect()
}

#[test]
fn two_card_gaps_are_simple_fractions() {
    let opts = GapOptions::default();
    let cases = [(2usize, 2usize, 1.0 / 8.0), (2, 3, 4.0 / 25.0), (2, 4, 1.0 / 6.0)];
    for (n, k, expected) in cases {
        let report = spectral_gap(KernelId::TopSwap, n, k, &opts).unwrap();
        assert!(
            (report.gap - expected).abs() < 1e-9,
            "({n},{k}): gap {} vs {expected}",
            report.gap
        );
    }
}

#[test]
fn relaxation_grid_matches_golden_file() {
    let opts = GapOptions::default();
    for (n, k, golden) in golden_tau_grid() {
        let report = spectral_gap(KernelId::TopSwap, n, k, &opts).unwrap();
        let ratio = report.relaxation_time / (n + k) as f64;
        assert!(
            (ratio - golden).abs() < 1e-6 * golden,
            "({n},{k}): tau/(n+k) {ratio} vs golden {golden}"
        );
    }
}

#[test]
fn deck_and_line_encodings_agree_for_two_decks() {
    let opts = GapOptions::default();
    for n in 2..=5 {
        let decks = spectral_gap(KernelId::TopSwap, n, 2, &opts).unwrap();
        let line = spectral_gap(KernelId::TopSwapLine, n, 2, &opts).unwrap();
        assert_eq!(decks.state_count, line.state_count);
        assert!(
            (decks.gap - line.gap).abs() < 1e-9,
            "n={n}: deck gap {} vs line gap {}",
            decks.gap,
            line.gap
        );
    }
    // Same spectra, not just the same gap.
    let deck_spec = form_spectrum(KernelId::TopSwap, 3, 2, &opts).unwrap();
    let line_spec = form_spectrum(KernelId::TopSwapLine, 3, 2, &opts).unwrap();
    assert_eq!(deck_spec.len(), line_spec.len());
    for (a, b) in deck_spec.iter().zip(&line_spec) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn krylov_gap_matches_dense_eigensolver() {
    let mut opts = GapOptions::default();
    opts.dense_check = true;
    for (kernel, n, k) in [
        (KernelId::TopSwap, 4, 2),
        (KernelId::TopSwap, 3, 3),
        (KernelId::TopSwapInversion, 4, 2),
        (KernelId::BalancedSwap(0.25), 4, 2),
    ] {
        let report = spectral_gap(kernel, n, k, &opts).unwrap();
        assert!(report.gap > 0.0);
        assert!(report.residual < 1e-6);
    }
}

#[test]
fn dense_spectrum_agrees_with_matrix_eigenvalues() {
    let opts = GapOptions::default();
    let spec = form_spectrum(KernelId::TopSwap, 3, 2, &opts).unwrap();
    let gap = gap_from_spectrum(&spec).unwrap();
    let report = spectral_gap(KernelId::TopSwap, 3, 2, &opts).unwrap();
    assert!((gap - report.gap).abs() < 1e-9);
    // I - P eigenvalues are 1 - (P eigenvalues).
    let op = build_matrix(KernelId::TopSwap, 3, 2, 100_000, topswap_core::ExecMode::Serial).unwrap();
    let mut p_eigs = dense_symmetric_eigenvalues(&op.matrix.to_dense());
    for v in &mut p_eigs {
        *v = 1.0 - *v;
    }
    p_eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (a, b) in spec.iter().zip(&p_eigs) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn inversion_variant_gap_at_six_cards() {
    let opts = GapOptions::default();
    let inv = spectral_gap(KernelId::TopSwapInversion, 6, 2, &opts).unwrap();
    assert!((inv.gap - 7.0 / 32.0).abs() < 1e-9, "gap {}", inv.gap);
    let plain = spectral_gap(KernelId::TopSwap, 6, 2, &opts).unwrap();
    assert!(inv.gap >= plain.gap - 1e-9);
}
