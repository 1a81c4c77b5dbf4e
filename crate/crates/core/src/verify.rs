//! Exhaustive machine checks: the exchange-move identities in exact
//! arithmetic, the form-comparison inequalities as operator positivity,
//! the balanced-swap gap bound, the rate-ratio growth of transpositions
//! over top-swaps, and the limiting constant table.
//!
//! Every check is exhaustive over its declared range and reports concrete
//! witnesses on failure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernels::{top_swap_line, top_swap_line_extended, transpose_line, KernelId};
use crate::linalg::{SymOp, VarianceOp};
use crate::space::{enumerate_lines, line_count_u64, BalanceParams, Line};
use crate::spectral::{
    dirichlet_form, form_operator, form_operator_for_kernel, smallest_mean_zero_eig,
    spectral_gap, FormId, FunctionTable, GapOptions, SumOp,
};

/// Outcome of one exhaustive check.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CheckReport {
    pub name: String,
    pub range: String,
    pub cases: u64,
    pub failures: Vec<String>,
    pub max_violation: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// One line per report: name, range, cases, failure count, max violation.
pub fn write_check_csv<W: std::io::Write>(
    mut out: W,
    reports: &[CheckReport],
) -> std::io::Result<()> {
    writeln!(out, "name,range,cases,failures,max_violation")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{:.17e}",
            r.name,
            r.range.replace(',', ";"),
            r.cases,
            r.failures.len(),
            r.max_violation
        )?;
    }
    Ok(())
}

pub fn summarize(reports: &[CheckReport]) -> String {
    let mut s = String::new();
    for r in reports {
        if r.passed() {
            s.push_str(&format!("PASS {} [{}] {} cases\n", r.name, r.range, r.cases));
        } else {
            s.push_str(&format!(
                "FAIL {} [{}] {} cases, {} failures, max violation {:.3e}; first: {}\n",
                r.name,
                r.range,
                r.cases,
                r.failures.len(),
                r.max_violation,
                r.failures[0]
            ));
        }
    }
    s
}

const IDENTITY_N_CAP: usize = 7;

fn identity_range_guard(n_max: usize, cap: usize) -> Result<()> {
    if n_max == 0 || n_max > cap {
        return Err(Error::InvalidParameter(format!(
            "exhaustive identity checks cover 1 <= n <= {cap}, got n_max = {n_max}"
        )));
    }
    Ok(())
}

/// Star-swaps at matched indices undo each other: with j = x_*, the move
/// at (i, j) is inverted by the move at (i, n+i-j+2), in both orders.
pub fn check_inverse_identity(n_max: usize) -> Result<CheckReport> {
    identity_range_guard(n_max, IDENTITY_N_CAP)?;
    let mut cases = 0u64;
    let mut failures = Vec::new();
    for n in 1..=n_max {
        for eta in enumerate_lines(n) {
            let j = eta.star();
            for i in 1..=j {
                cases += 1;
                if i == j {
                    if top_swap_line(&eta, j, j)? != eta {
                        failures.push(format!("n={n} eta={eta:?} i=j={j}: not identity"));
                    }
                    continue;
                }
                let jp = n + i + 2 - j;
                let xi = top_swap_line(&eta, i, j)?;
                let back = top_swap_line(&xi, i, jp)?;
                if back != eta {
                    failures.push(format!(
                        "n={n} eta={eta:?} i={i} j={j}: return at (i,{jp}) gave {back:?}"
                    ));
                    continue;
                }
                let fwd = top_swap_line(&xi, i, jp)?;
                let there = top_swap_line(&fwd, i, j)?;
                if there != xi {
                    failures.push(format!(
                        "n={n} xi={xi:?} i={i}: reverse order broke at (i,{j})"
                    ));
                }
            }
        }
    }
    Ok(CheckReport {
        name: "inverse-identity".into(),
        range: format!("lines, n <= {n_max}, i <= x_*"),
        cases,
        failures,
        max_violation: 0.0,
    })
}

/// A transposition across the star splits into two star-swaps: for
/// i < x_* = l < j, swapping positions i and j equals the move at (i, j)
/// followed by the move at (i+1, n+i-l+3), with the overflow index n+2
/// meaning the move at the star itself (identity).
pub fn check_decomposition(n_max: usize) -> Result<CheckReport> {
    identity_range_guard(n_max, IDENTITY_N_CAP)?;
    let mut cases = 0u64;
    let mut failures = Vec::new();
    for n in 1..=n_max {
        for eta in enumerate_lines(n) {
            let l = eta.star();
            for i in 1..l {
                for j in l + 1..=n + 1 {
                    cases += 1;
                    let want = transpose_line(&eta, i, j)?;
                    let first = top_swap_line(&eta, i, j)?;
                    let got = top_swap_line_extended(&first, i + 1, n + i + 3 - l)?;
                    if got != want {
                        failures.push(format!(
                            "n={n} eta={eta:?} i={i} l={l} j={j}: got {got:?} want {want:?}"
                        ));
                    }
                }
            }
        }
    }
    Ok(CheckReport {
        name: "transposition-decomposition".into(),
        range: format!("lines, n <= {n_max}, i < x_* < j"),
        cases,
        failures,
        max_violation: 0.0,
    })
}

/// Moving every star-j state through the (i, j) star-swap lands exactly on
/// the star-i states, bijectively; consequently the star-swap average has
/// conditional mean independent of the star position. Both facts checked
/// in exact integer arithmetic; the i > j landing position is recorded but
/// not asserted.
pub fn check_pushforward(n_max: usize) -> Result<CheckReport> {
    identity_range_guard(n_max, 6)?;
    let mut cases = 0u64;
    let mut failures = Vec::new();
    let mut over_landing: Option<String> = Some("n+j-i+2".into());
    for n in 1..=n_max {
        let lines = enumerate_lines(n);
        let mut by_star: BTreeMap<usize, Vec<&Line>> = BTreeMap::new();
        for l in &lines {
            by_star.entry(l.star()).or_default().push(l);
        }
        for i in 1..=n + 1 {
            for j in 1..=n + 1 {
                if i == j {
                    continue;
                }
                if i < j {
                    let mut image = std::collections::BTreeSet::new();
                    for &eta in &by_star[&j] {
                        cases += 1;
                        let moved = top_swap_line(eta, i, j)?;
                        if moved.star() != i {
                            failures.push(format!(
                                "n={n} i={i} j={j} eta={eta:?}: landed at star {}",
                                moved.star()
                            ));
                            continue;
                        }
                        if !image.insert(moved) {
                            failures.push(format!("n={n} i={i} j={j}: image collision"));
                        }
                    }
                    if image.len() != by_star[&i].len() {
                        failures.push(format!(
                            "n={n} i={i} j={j}: image size {} != {}",
                            image.len(),
                            by_star[&i].len()
                        ));
                    }
                } else {
                    for &eta in &by_star[&j] {
                        cases += 1;
                        let moved = top_swap_line(eta, j, i)?;
                        if moved.star() != n + j + 2 - i {
                            over_landing = None;
                        }
                    }
                }
            }
        }

        // Star-swap average: (A g)(eta) = mean over i of g at the (i, x_*)
        // move. Conditional sums per star position must all equal the
        // global sum when integer-valued g is summed over (n+1) moves.
        let mut rng = ChaCha8Rng::seed_from_u64(0xA5A5 + n as u64);
        for _ in 0..2 {
            let g: BTreeMap<&Line, i64> = lines
                .iter()
                .map(|l| (l, if rng.gen_bool(0.5) { 1 } else { -1 }))
                .collect();
            let total: i64 = g.values().sum();
            for (&j, members) in &by_star {
                cases += 1;
                let mut s = 0i64;
                for &eta in members {
                    for i in 1..=n + 1 {
                        let moved = top_swap_line(eta, i.min(j), i.max(j))?;
                        s += g[&moved];
                    }
                }
                if s != total {
                    failures.push(format!(
                        "n={n} star {j}: conditional average sum {s} != {total}"
                    ));
                }
            }
        }
    }
    let landing = match over_landing {
        Some(f) => format!("i>j observed landing {f}"),
        None => "i>j landing irregular (observed only)".into(),
    };
    Ok(CheckReport {
        name: "class-pushforward".into(),
        range: format!("lines, n <= {n_max}, i<j asserted; {landing}"),
        cases,
        failures,
        max_violation: 0.0,
    })
}

/// Comparison inequalities between Dirichlet forms, checked as operator
/// positivity on the mean-zero subspace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FormPair {
    /// Modified-transposition form within 5x the top-swap form (lines).
    ModifiedVsTopSwap,
    /// Balanced-swap form within C(n)*n times the modified form (lines).
    BalancedVsModified(f64),
    /// Variance within gamma times the balanced-swap form (lines).
    VarianceVsBalanced(f64),
    /// Variance within the unweighted deck-averaging form.
    VarianceVsUnweightedAverage,
    /// Variance within (6k/n) times the weighted deck-averaging form.
    VarianceVsWeightedAverage,
    /// Variance within the composed constant times (n+k) top-swap forms.
    VarianceVsTopSwap,
    /// Same composed bound for the inversion variant's form.
    VarianceVsInversion,
    /// The inversion variant's form dominates the top-swap form.
    InversionDomination,
}

impl FormPair {
    pub fn name(&self) -> String {
        match self {
            FormPair::ModifiedVsTopSwap => "modified-le-5-topswap".into(),
            FormPair::BalancedVsModified(_) => "balanced-le-cn-modified".into(),
            FormPair::VarianceVsBalanced(_) => "variance-le-gamma-balanced".into(),
            FormPair::VarianceVsUnweightedAverage => "variance-le-deck-average".into(),
            FormPair::VarianceVsWeightedAverage => "variance-le-weighted-average".into(),
            FormPair::VarianceVsTopSwap => "variance-le-c-topswap".into(),
            FormPair::VarianceVsInversion => "variance-le-c-inversion".into(),
            FormPair::InversionDomination => "topswap-le-inversion".into(),
        }
    }
}

pub const PSD_TOLERANCE: f64 = 1e-9;

/// Largest constant factor chain: every deck pair's variance is controlled
/// through balanced swaps and modified transpositions, then summed over
/// pairs. The worst per-pair factor is taken over pooled sizes m <= n.
pub fn composed_pipeline_constant(n: usize, k: usize, delta: f64) -> Result<f64> {
    let params = BalanceParams::new(delta)?;
    let mut worst: f64 = 0.0;
    for m in 2..=n.max(2) {
        let c = 5.0 * params.comparison_constant(m) * params.gamma(m);
        worst = worst.max(c);
    }
    Ok(12.0 * worst * (n + k) as f64 / (n + 12 * k) as f64)
}

struct PsdOutcome {
    min_eig: f64,
    residual: f64,
    dim: u64,
}

fn psd_min_eig(
    terms: Vec<(f64, Box<dyn SymOp>)>,
    uppers: &[f64],
    opts: &GapOptions,
) -> Result<PsdOutcome> {
    let dim = terms[0].1.dim();
    for (_, op) in &terms {
        if op.dim() != dim {
            return Err(Error::SpaceMismatch(
                "form comparison needs operators on one space".into(),
            ));
        }
    }
    let upper: f64 = terms
        .iter()
        .zip(uppers)
        .map(|((c, _), u)| c.abs() * u)
        .sum();
    let op = SumOp {
        dim,
        terms,
        mode: opts.mode,
    };
    let (min_eig, residual) = smallest_mean_zero_eig(&op, upper, &opts.eig, opts.mode)?;
    Ok(PsdOutcome {
        min_eig,
        residual,
        dim: dim as u64,
    })
}

pub fn check_form_inequality(
    pair: FormPair,
    n: usize,
    k: usize,
    opts: &GapOptions,
) -> Result<CheckReport> {
    let mut extra = String::new();
    let outcome = match pair {
        FormPair::ModifiedVsTopSwap => {
            let top = form_operator(FormId::LineTopSwap, n, 2, opts.cap, opts.mode)?;
            let modified = form_operator(FormId::LineModified, n, 2, opts.cap, opts.mode)?;
            let uppers = [top.upper_bound(), modified.upper_bound()];
            psd_min_eig(
                vec![(5.0, Box::new(top)), (-1.0, Box::new(modified))],
                &uppers,
                opts,
            )?
        }
        FormPair::BalancedVsModified(delta) => {
            let params = BalanceParams::new(delta)?;
            let c = params.comparison_constant(n) * n as f64;
            let modified = form_operator(FormId::LineModified, n, 2, opts.cap, opts.mode)?;
            let balanced = form_operator(FormId::LineBalanced(delta), n, 2, opts.cap, opts.mode)?;
            let uppers = [modified.upper_bound(), balanced.upper_bound()];
            extra = format!("; factor {c:.6}");
            psd_min_eig(
                vec![(c, Box::new(modified)), (-1.0, Box::new(balanced))],
                &uppers,
                opts,
            )?
        }
        FormPair::VarianceVsBalanced(delta) => {
            let params = BalanceParams::new(delta)?;
            let gamma = params.gamma(n);
            let balanced = form_operator(FormId::LineBalanced(delta), n, 2, opts.cap, opts.mode)?;
            let dim = balanced.dim();
            let uppers = [balanced.upper_bound(), 1.0];
            extra = format!("; gamma {gamma:.6}");
            psd_min_eig(
                vec![
                    (gamma, Box::new(balanced)),
                    (
                        -1.0,
                        Box::new(VarianceOp {
                            dim,
                            mode: opts.mode,
                        }),
                    ),
                ],
                &uppers,
                opts,
            )?
        }
        FormPair::VarianceVsUnweightedAverage => {
            let avg = form_operator(FormId::DeckAverage, n, k, opts.cap, opts.mode)?;
            let dim = avg.dim();
            let uppers = [avg.upper_bound(), 1.0];
            psd_min_eig(
                vec![
                    (1.0, Box::new(avg)),
                    (
                        -1.0,
                        Box::new(VarianceOp {
                            dim,
                            mode: opts.mode,
                        }),
                    ),
                ],
                &uppers,
                opts,
            )?
        }
        FormPair::VarianceVsWeightedAverage => {
            let avg = form_operator(FormId::DeckAverageWeighted, n, k, opts.cap, opts.mode)?;
            let dim = avg.dim();
            let factor = 6.0 * k as f64 / n as f64;
            let uppers = [avg.upper_bound(), 1.0];
            extra = format!("; factor {factor:.6}");
            psd_min_eig(
                vec![
                    (factor, Box::new(avg)),
                    (
                        -1.0,
                        Box::new(VarianceOp {
                            dim,
                            mode: opts.mode,
                        }),
                    ),
                ],
                &uppers,
                opts,
            )?
        }
        FormPair::VarianceVsTopSwap | FormPair::VarianceVsInversion => {
            let kernel = if pair == FormPair::VarianceVsTopSwap {
                KernelId::TopSwap
            } else {
                KernelId::TopSwapInversion
            };
            let composed = composed_pipeline_constant(n, k, 0.25)?;
            let gap = spectral_gap(kernel, n, k, opts)?.gap;
            let smallest = 1.0 / (gap * (n + k) as f64);
            extra = format!("; smallest C {smallest:.6}, composed C {composed:.6}");
            if smallest > composed {
                return Ok(CheckReport {
                    name: format!("form-{}", pair.name()),
                    range: format!("n={n} k={k}{extra}"),
                    cases: 1,
                    failures: vec![format!(
                        "smallest valid constant {smallest} exceeds composed {composed}"
                    )],
                    max_violation: smallest - composed,
                });
            }
            let form = form_operator_for_kernel(kernel, n, k, opts.cap, opts.mode)?;
            let dim = form.dim();
            let uppers = [form.upper_bound(), 1.0];
            psd_min_eig(
                vec![
                    (composed * (n + k) as f64, Box::new(form)),
                    (
                        -1.0,
                        Box::new(VarianceOp {
                            dim,
                            mode: opts.mode,
                        }),
                    ),
                ],
                &uppers,
                opts,
            )?
        }
        FormPair::InversionDomination => {
            let inv = form_operator_for_kernel(KernelId::TopSwapInversion, n, k, opts.cap, opts.mode)?;
            let top = form_operator_for_kernel(KernelId::TopSwap, n, k, opts.cap, opts.mode)?;
            let uppers = [inv.upper_bound(), top.upper_bound()];
            psd_min_eig(
                vec![(1.0, Box::new(inv)), (-1.0, Box::new(top))],
                &uppers,
                opts,
            )?
        }
    };
    let mut failures = Vec::new();
    if outcome.min_eig < -PSD_TOLERANCE {
        failures.push(format!(
            "minimum mean-zero eigenvalue {:.12e} (residual {:.3e})",
            outcome.min_eig, outcome.residual
        ));
    }
    Ok(CheckReport {
        name: format!("form-{}", pair.name()),
        range: format!("n={n} k={k}{extra}"),
        cases: outcome.dim,
        failures,
        max_violation: (-outcome.min_eig).max(0.0),
    })
}

/// Balanced-swap generator gap: at least 1 - sqrt(1 - p) with the exact
/// balanced fraction p; star-position functions of mean zero are exact
/// eigenfunctions at eigenvalue 1; with an unconstrained window the gap
/// is exactly 1.
pub fn check_balanced_gap_bound(
    n_max: usize,
    delta: f64,
    opts: &GapOptions,
) -> Result<CheckReport> {
    identity_range_guard(n_max, 6)?;
    let params = BalanceParams::new(delta)?;
    let mut cases = 0u64;
    let mut failures = Vec::new();
    let mut max_violation = 0.0f64;
    for n in 1..=n_max {
        cases += 1;
        let bound = params.gap_lower_bound(n);
        let report = spectral_gap(KernelId::BalancedSwap(delta), n, 2, opts)?;
        if report.gap < bound - PSD_TOLERANCE {
            failures.push(format!(
                "n={n}: gap {:.9} below bound {:.9}",
                report.gap, bound
            ));
            max_violation = max_violation.max(bound - report.gap);
        }

        // phi(x_*) with mean zero: the generator must return it exactly.
        cases += 1;
        let phi =
            FunctionTable::from_line_fn(n, opts.cap, opts.mode, |l| {
                l.star() as f64 - (n + 2) as f64 / 2.0
            })?;
        let op = form_operator(FormId::LineBalanced(delta), n, 2, opts.cap, opts.mode)?;
        let mut out = vec![0.0; phi.values.len()];
        op.apply(&phi.values, &mut out);
        let dev = out
            .iter()
            .zip(&phi.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if dev > 1e-12 {
            failures.push(format!("n={n}: star eigenfunction deviates by {dev:.3e}"));
            max_violation = max_violation.max(dev);
        }

        // unconstrained window: gap exactly 1
        cases += 1;
        let free = spectral_gap(KernelId::BalancedSwap(0.0), n, 2, opts)?;
        if (free.gap - 1.0).abs() > PSD_TOLERANCE {
            failures.push(format!("n={n}: unconstrained gap {:.12}", free.gap));
            max_violation = max_violation.max((free.gap - 1.0).abs());
        }
    }
    Ok(CheckReport {
        name: "balanced-gap".into(),
        range: format!("lines, n <= {n_max}, delta = {delta}"),
        cases,
        failures,
        max_violation,
    })
}

/// Ordered pairs moving the fully stacked line, for transpositions and for
/// top-swaps; the ratio grows linearly.
pub fn transposition_rate_ratios(n_lo: usize, n_hi: usize) -> Result<Vec<(usize, f64)>> {
    if n_lo == 0 || n_lo > n_hi {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= n_lo <= n_hi, got {n_lo}..{n_hi}"
        )));
    }
    let mut out = Vec::with_capacity(n_hi - n_lo + 1);
    for n in n_lo..=n_hi {
        let eta = Line::stacked(n);
        let mut transpositions = 0u64;
        let mut topswaps = 0u64;
        for i in 1..=n + 1 {
            for j in 1..=n + 1 {
                if transpose_line(&eta, i.min(j), i.max(j))? != eta {
                    transpositions += 1;
                }
                if top_swap_line(&eta, i.min(j), i.max(j))? != eta {
                    topswaps += 1;
                }
            }
        }
        if topswaps == 0 {
            return Err(Error::Degenerate(format!(
                "no top-swap moves touch the stacked line at n = {n}"
            )));
        }
        out.push((n, transpositions as f64 / topswaps as f64));
    }
    Ok(out)
}

/// The point indicator of the fully stacked line has both pair forms
/// proportional to its moved-pair counts, so the form ratio is the count
/// ratio; it must grow linearly (doubling n multiplies it by 1.5 to 2.5).
pub fn check_transposition_rate_ratio(n_lo: usize, n_hi: usize) -> Result<CheckReport> {
    let ratios = transposition_rate_ratios(n_lo, n_hi)?;
    let mut cases = ratios.len() as u64;
    let mut failures = Vec::new();
    let mut max_violation = 0.0f64;
    for &(n, r) in &ratios {
        if !(r > 0.0) {
            failures.push(format!("n={n}: nonpositive ratio {r}"));
        }
    }
    for &(n, r) in &ratios {
        if let Some(&(_, r2)) = ratios.iter().find(|&&(m, _)| m == 2 * n) {
            cases += 1;
            let growth = r2 / r;
            if !(1.5..=2.5).contains(&growth) {
                failures.push(format!("n={n}: growth ratio {growth:.6} outside [1.5, 2.5]"));
                max_violation = max_violation.max((growth - 2.0).abs() - 0.5);
            }
        }
    }
    // cross-check against the form evaluations where enumeration is cheap
    for &(n, r) in &ratios {
        if line_count_u64(n).map_or(true, |c| c > 6000) {
            continue;
        }
        cases += 1;
        let eta = Line::stacked(n);
        let f = FunctionTable::from_line_fn(n, u64::MAX, Default::default(), |l| {
            if *l == eta {
                1.0
            } else {
                0.0
            }
        })?;
        let num = dirichlet_form(FormId::LineTransposition, &f, Default::default())?;
        let den = dirichlet_form(FormId::LineTopSwap, &f, Default::default())?;
        let via_forms = num / den;
        if (via_forms - r).abs() > 1e-9 {
            failures.push(format!(
                "n={n}: form ratio {via_forms:.12} != counted {r:.12}"
            ));
            max_violation = max_violation.max((via_forms - r).abs());
        }
    }
    Ok(CheckReport {
        name: "rate-ratio".into(),
        range: format!("stacked line, n in {n_lo}..={n_hi}"),
        cases,
        failures,
        max_violation,
    })
}

/// Finite-n constants approach their limits: the window-comparison factor
/// tends to 2 + 9/(delta(1-delta)), gamma tends to 1/(1 - sqrt(2 delta)),
/// and the per-pair composed factor stays below the 875 ceiling.
pub fn check_constant_table(delta: f64) -> Result<CheckReport> {
    let params = BalanceParams::new(delta)?;
    if delta <= 0.0 {
        return Err(Error::InvalidParameter(
            "constant table needs a proper window, delta > 0".into(),
        ));
    }
    let c_limit = 2.0 + 9.0 / (delta * (1.0 - delta));
    let gamma_limit = 1.0 / (1.0 - (2.0 * delta).sqrt());
    let composed_limit = 5.0 * c_limit * gamma_limit;
    let ns = [50usize, 100, 200, 400, 800];
    let mut cases = 0u64;
    let mut failures = Vec::new();
    let mut max_violation = 0.0f64;
    let mut c_fit = 0.0f64;
    let mut gamma_fit = 0.0f64;
    let mut composed_fit = 0.0f64;
    for &n in &ns {
        cases += 3;
        let c = params.comparison_constant(n);
        let g = params.gamma(n);
        c_fit = c_fit.max(n as f64 * (c - c_limit).abs());
        gamma_fit = gamma_fit.max(n as f64 * (g - gamma_limit).abs());
        composed_fit = composed_fit.max(n as f64 * (5.0 * c * g - composed_limit).abs());
    }
    cases += 1;
    if composed_limit > 875.0 + 1e-9 {
        failures.push(format!(
            "composed limit {composed_limit:.3} exceeds 875"
        ));
        max_violation = max_violation.max(composed_limit - 875.0);
    }
    let n_last = *ns.last().unwrap() as f64;
    let c_last = params.comparison_constant(*ns.last().unwrap());
    let g_last = params.gamma(*ns.last().unwrap());
    let composed_last = 5.0 * c_last * g_last;
    cases += 3;
    if (composed_last - composed_limit).abs() > composed_fit / n_last + 1e-9 {
        failures.push(format!(
            "composed factor at n={n_last}: {composed_last:.6} vs limit {composed_limit:.6}"
        ));
        max_violation = max_violation.max((composed_last - composed_limit).abs());
    }
    if (c_last - c_limit).abs() > c_fit / n_last + 1e-9 {
        failures.push(format!(
            "window factor at n={n_last}: {c_last:.6} vs limit {c_limit:.6}"
        ));
        max_violation = max_violation.max((c_last - c_limit).abs());
    }
    if (g_last - gamma_limit).abs() > gamma_fit / n_last + 1e-9 {
        failures.push(format!(
            "gamma at n={n_last}: {g_last:.6} vs limit {gamma_limit:.6}"
        ));
        max_violation = max_violation.max((g_last - gamma_limit).abs());
    }
    Ok(CheckReport {
        name: "constants".into(),
        range: format!(
            "delta = {delta}; limits {c_limit:.4}, {gamma_limit:.4}, composed {composed_limit:.2}"
        ),
        cases,
        failures,
        max_violation,
    })
}

/// The canonical inequality instances exercised by the command-line suite.
pub fn standard_inequality_suite(opts: &GapOptions) -> Result<Vec<CheckReport>> {
    let delta = 0.25;
    let mut reports = Vec::new();
    for n in 2..=5 {
        reports.push(check_form_inequality(FormPair::ModifiedVsTopSwap, n, 2, opts)?);
    }
    for n in 2..=5 {
        reports.push(check_form_inequality(
            FormPair::BalancedVsModified(delta),
            n,
            2,
            opts,
        )?);
    }
    for n in 1..=5 {
        reports.push(check_form_inequality(
            FormPair::VarianceVsBalanced(delta),
            n,
            2,
            opts,
        )?);
    }
    for (n, k) in [(3, 2), (4, 2), (2, 3), (3, 3)] {
        reports.push(check_form_inequality(
            FormPair::VarianceVsUnweightedAverage,
            n,
            k,
            opts,
        )?);
    }
    for (n, k) in [(3, 3), (4, 3), (3, 4)] {
        reports.push(check_form_inequality(
            FormPair::VarianceVsWeightedAverage,
            n,
            k,
            opts,
        )?);
    }
    for (n, k) in [(5, 2), (3, 3), (4, 3)] {
        reports.push(check_form_inequality(FormPair::VarianceVsTopSwap, n, k, opts)?);
        reports.push(check_form_inequality(FormPair::VarianceVsInversion, n, k, opts)?);
    }
    for (n, k) in [(4, 2), (3, 3)] {
        reports.push(check_form_inequality(FormPair::InversionDomination, n, k, opts)?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_line() -> Line {
        Line::new(vec![3, 4, 0, 5, 2, 1, 6]).unwrap()
    }

    #[test]
    fn worked_inverse_example() {
        let eta = worked_line();
        assert_eq!(eta.star(), 3);
        let moved = top_swap_line(&eta, 1, 3).unwrap();
        let back = top_swap_line(&moved, 1, 6).unwrap();
        assert_eq!(back, eta);
    }

    #[test]
    fn worked_decomposition_examples() {
        let eta = worked_line();
        let want = transpose_line(&eta, 1, 6).unwrap();
        let first = top_swap_line(&eta, 1, 6).unwrap();
        assert_eq!(first, Line::new(vec![1, 6, 0, 5, 2, 3, 4]).unwrap());
        let got = top_swap_line_extended(&first, 2, 7).unwrap();
        assert_eq!(got, want);

        let want = transpose_line(&eta, 2, 5).unwrap();
        let first = top_swap_line(&eta, 2, 5).unwrap();
        assert_eq!(first, Line::new(vec![3, 2, 1, 6, 0, 5, 4]).unwrap());
        let via_overflow = top_swap_line_extended(&first, 3, 8).unwrap();
        let via_plain = top_swap_line(&first, 3, 5).unwrap();
        assert_eq!(via_overflow, via_plain);
        assert_eq!(via_overflow, want);
    }

    #[test]
    fn identity_checks_exhaustive() {
        let inv = check_inverse_identity(4).unwrap();
        assert!(inv.passed(), "{:?}", inv.failures.first());
        assert!(inv.cases > 0);
        let dec = check_decomposition(4).unwrap();
        assert!(dec.passed(), "{:?}", dec.failures.first());
        let push = check_pushforward(4).unwrap();
        assert!(push.passed(), "{:?}", push.failures.first());
        assert!(push.range.contains("n+j-i+2"));
        assert!(check_inverse_identity(9).is_err());
        assert!(check_pushforward(0).is_err());
    }

    #[test]
    fn line_form_inequalities_hold() {
        let opts = GapOptions::default();
        for n in 2..=4 {
            let r = check_form_inequality(FormPair::ModifiedVsTopSwap, n, 2, &opts).unwrap();
            assert!(r.passed(), "n={n}: {:?}", r.failures.first());
            let r =
                check_form_inequality(FormPair::BalancedVsModified(0.25), n, 2, &opts).unwrap();
            assert!(r.passed(), "n={n}: {:?}", r.failures.first());
            let r =
                check_form_inequality(FormPair::VarianceVsBalanced(0.25), n, 2, &opts).unwrap();
            assert!(r.passed(), "n={n}: {:?}", r.failures.first());
        }
    }

    #[test]
    fn deck_average_positivity_split() {
        let opts = GapOptions::default();
        // two decks: averaging the single pair is a full resample
        let r = check_form_inequality(FormPair::VarianceVsUnweightedAverage, 4, 2, &opts).unwrap();
        assert!(r.passed(), "{:?}", r.failures.first());
        // three decks: the unweighted bound fails by an exact 1/9 margin
        let r = check_form_inequality(FormPair::VarianceVsUnweightedAverage, 3, 3, &opts).unwrap();
        assert!(!r.passed());
        assert!(
            (r.max_violation - 1.0 / 9.0).abs() < 1e-6,
            "violation {}",
            r.max_violation
        );
        let r = check_form_inequality(FormPair::VarianceVsWeightedAverage, 3, 3, &opts).unwrap();
        assert!(r.passed(), "{:?}", r.failures.first());
    }

    #[test]
    fn composed_constant_dominates_smallest() {
        let opts = GapOptions::default();
        for (n, k) in [(5, 2), (3, 3)] {
            let r = check_form_inequality(FormPair::VarianceVsTopSwap, n, k, &opts).unwrap();
            assert!(r.passed(), "({n},{k}): {:?}", r.failures.first());
            assert!(r.range.contains("smallest C"));
            let r = check_form_inequality(FormPair::VarianceVsInversion, n, k, &opts).unwrap();
            assert!(r.passed(), "({n},{k}): {:?}", r.failures.first());
        }
    }

    #[test]
    fn balanced_gap_bound_holds() {
        let r = check_balanced_gap_bound(4, 0.25, &GapOptions::default()).unwrap();
        assert!(r.passed(), "{:?}", r.failures.first());
    }

    #[test]
    fn rate_ratio_counts_and_growth() {
        let ratios = transposition_rate_ratios(4, 9).unwrap();
        let expect = [2.5, 3.0, 3.5, 4.0, 4.5, 5.0];
        for ((n, r), e) in ratios.iter().zip(expect) {
            assert_eq!(*r, e, "n={n}");
        }
        let report = check_transposition_rate_ratio(4, 9).unwrap();
        assert!(report.passed(), "{:?}", report.failures.first());
        assert!(transposition_rate_ratios(0, 4).is_err());
    }

    #[test]
    fn constant_table_approaches_limits() {
        let r = check_constant_table(0.25).unwrap();
        assert!(r.passed(), "{:?}", r.failures.first());
        assert!(r.range.contains("50.0000"));
        assert!(check_constant_table(0.0).is_err());
    }

    #[test]
    fn csv_report_layout() {
        let reports = vec![CheckReport {
            name: "demo".into(),
            range: "n <= 2, k = 2".into(),
            cases: 7,
            failures: vec![],
            max_violation: 0.0,
        }];
        let mut buf = Vec::new();
        write_check_csv(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("name,range,cases,failures,max_violation\n"));
        assert!(text.contains("demo,n <= 2; k = 2,7,0,"));
        let summary = summarize(&reports);
        assert!(summary.starts_with("PASS demo"));
    }
}
