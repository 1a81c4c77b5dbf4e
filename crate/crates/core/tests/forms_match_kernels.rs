use topswap_core::linalg::SymOp;
use topswap_core::space::{line_rank_u64, rank_u64};
use topswap_core::spectral::{dirichlet_form, form_operator, FormId, FunctionTable, SpaceId};
use topswap_core::ExecMode;

const CAP: u64 = 100_000;

fn hashed_value(index: u64, seed: u64) -> f64 {
    let h = (index ^ seed)
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

fn table_for(form: FormId, n: usize, k: usize, seed: u64) -> FunctionTable {
    match form.space(n, k).unwrap() {
        SpaceId::Lines { .. } => FunctionTable::from_line_fn(n, CAP, ExecMode::Serial, |l| {
            hashed_value(line_rank_u64(l).unwrap(), seed)
        })
        .unwrap(),
        SpaceId::Decks { .. } => FunctionTable::from_deck_fn(n, k, CAP, ExecMode::Serial, |c| {
            hashed_value(rank_u64(c).unwrap(), seed)
        })
        .unwrap(),
    }
}

fn quadratic_through_operator(form: FormId, n: usize, k: usize, f: &FunctionTable) -> f64 {
    let op = form_operator(form, n, k, CAP, ExecMode::Serial).unwrap();
    let mut y = vec![0.0; f.len()];
    op.apply(&f.values, &mut y);
    let dot: f64 = f.values.iter().zip(&y).map(|(a, b)| a * b).sum();
    dot / f.len() as f64
}

fn all_forms() -> Vec<FormId> {
    vec![
        FormId::LineTopSwap,
        FormId::LineModified,
        FormId::LineTransposition,
        FormId::LineBalanced(0.25),
        FormId::LineBalancedTranspose(0.25),
        FormId::DeckAverage,
        FormId::DeckAverageWeighted,
        FormId::TopSwap,
        FormId::ConstrainedTransposition,
    ]
}

#[test]
fn defining_sum_equals_operator_quadratic() {
    for form in all_forms() {
        for &(n, k) in &[(3usize, 2usize), (4, 2), (3, 3)] {
            if form.space(n, k).is_err() {
                continue;
            }
            for seed in [7u64, 1234] {
                let f = table_for(form, n, k, seed);
                let direct = dirichlet_form(form, &f, ExecMode::Serial).unwrap();
                let through_op = quadratic_through_operator(form, n, k, &f);
                let scale = direct.abs().max(1.0);
                assert!(
                    (direct - through_op).abs() <= 1e-10 * scale,
                    "{} at ({n},{k}): sum {direct} vs operator {through_op}",
                    form.name()
                );
            }
        }
    }
}

#[test]
fn form_values_are_identical_across_exec_modes() {
    for form in all_forms() {
        let (n, k) = (4, 2);
        if form.space(n, k).is_err() {
            continue;
        }
        let f = table_for(form, n, k, 99);
        let serial = dirichlet_form(form, &f, ExecMode::Serial).unwrap();
        let parallel = dirichlet_form(form, &f, ExecMode::Parallel).unwrap();
        assert_eq!(
            serial.to_bits(),
            parallel.to_bits(),
            "{} differs across modes",
            form.name()
        );
    }
}

#[test]
fn forms_vanish_only_on_constants() {
    for form in all_forms() {
        let (n, k) = (3, 3);
        if form.space(n, k).is_err() {
            continue;
        }
        let f = table_for(form, n, k, 5);
        let ones = FunctionTable {
            space: f.space,
            values: vec![2.5; f.len()],
        };
        assert!(dirichlet_form(form, &ones, ExecMode::Serial).unwrap().abs() < 1e-12);
        let nonconstant = dirichlet_form(form, &f, ExecMode::Serial).unwrap();
        assert!(
            nonconstant > 1e-9,
            "{} vanished on a random nonconstant table",
            form.name()
        );
    }
}
