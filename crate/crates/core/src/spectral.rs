//! Exact spectral machinery: operator assembly over enumerated state spaces,
//! Dirichlet forms evaluated from their defining sums, spectral gaps with
//! residual reporting, and the deck-content projection operator.
//!
//! Conventions. All inner products are with respect to the uniform measure,
//! so quadratic forms read f^T Q f / N. Discrete kernels contribute the form
//! operator I - P, continuous-time kernels contribute -L; both are PSD with
//! kernel spanned by the constants, and the spectral gap is the smallest
//! eigenvalue on the mean-zero subspace.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::kernels::{
    constrained_transposition_decks, modified_transposition_line, top_swap, top_swap_line,
    transition_distribution, transpose_line, ChainState, KernelId, TimeKind,
};
use crate::linalg::{
    dense_symmetric_eigenvalues, dot, largest_eigenvalue_mean_zero, map_rows, operator_to_dense,
    project_mean_zero, sum, Csr, EigOptions, ExecMode, ShiftedNeg, SymOp,
};
use crate::space::{
    enumerate, factorial, is_first_deck_empty, line_count_u64, line_rank_u64, line_unrank_u64,
    rank_u64, state_count, state_count_u64, unrank_u64, BalanceParams, Card, Configuration, Line,
};

/// Default ceiling on enumerable state spaces.
pub const DEFAULT_STATE_CAP: u64 = 200_000;

/// Largest dimension handed to the dense eigensolver.
pub const DENSE_LIMIT: usize = 2_000;

/// Which enumerated space a table of function values lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceId {
    Decks { n: usize, k: usize },
    Lines { n: usize },
}

impl SpaceId {
    pub fn for_kernel(kernel: KernelId, n: usize, k: usize) -> Result<SpaceId> {
        if kernel.is_line_space() {
            if k != 2 {
                return Err(Error::SpaceMismatch(format!(
                    "{} runs on the single-line encoding, which requires k = 2 (got k = {k})",
                    kernel.name()
                )));
            }
            Ok(SpaceId::Lines { n })
        } else {
            Ok(SpaceId::Decks { n, k })
        }
    }

    pub fn size(&self) -> Option<u64> {
        match *self {
            SpaceId::Decks { n, k } => state_count_u64(n, k),
            SpaceId::Lines { n } => line_count_u64(n),
        }
    }

    /// Size under the cap, or a `CapExceeded` error.
    pub fn checked_size(&self, cap: u64) -> Result<u64> {
        let big = match *self {
            SpaceId::Decks { n, k } => state_count(n, k),
            SpaceId::Lines { n } => factorial(n + 1),
        };
        let cap_big = BigUint::from(cap.min(u32::MAX as u64));
        if big > cap_big {
            let states = big.try_into().unwrap_or(u128::MAX);
            return Err(Error::CapExceeded {
                states,
                cap: cap as u128,
            });
        }
        Ok(self.size().expect("size fits in u64 under the cap"))
    }

    pub fn n(&self) -> usize {
        match *self {
            SpaceId::Decks { n, .. } | SpaceId::Lines { n } => n,
        }
    }

    pub fn k(&self) -> usize {
        match *self {
            SpaceId::Decks { k, .. } => k,
            SpaceId::Lines { .. } => 2,
        }
    }

    /// Total position count n + k driving the uniform pair choice.
    pub fn positions(&self) -> usize {
        self.n() + self.k()
    }
}

/// A function on an enumerated space, stored by state rank.
#[derive(Clone, Debug)]
pub struct FunctionTable {
    pub space: SpaceId,
    pub values: Vec<f64>,
}

impl FunctionTable {
    pub fn from_deck_fn<F>(n: usize, k: usize, cap: u64, mode: ExecMode, f: F) -> Result<Self>
    where
        F: Fn(&Configuration) -> f64 + Sync + Send,
    {
        let space = SpaceId::Decks { n, k };
        let size = space.checked_size(cap)? as usize;
        let values = map_rows(mode, size, |i| {
            let cfg = unrank_u64(n, k, i as u64).expect("index below the state count");
            f(&cfg)
        });
        Ok(FunctionTable { space, values })
    }

    pub fn from_line_fn<F>(n: usize, cap: u64, mode: ExecMode, f: F) -> Result<Self>
    where
        F: Fn(&Line) -> f64 + Sync + Send,
    {
        let space = SpaceId::Lines { n };
        let size = space.checked_size(cap)? as usize;
        let values = map_rows(mode, size, |i| {
            let line = line_unrank_u64(n, i as u64).expect("index below the state count");
            f(&line)
        });
        Ok(FunctionTable { space, values })
    }

    /// Indicator of the first deck being empty.
    pub fn indicator_empty_first_deck(n: usize, k: usize, cap: u64, mode: ExecMode) -> Result<Self> {
        Self::from_deck_fn(n, k, cap, mode, |c| {
            if is_first_deck_empty(c) {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self, mode: ExecMode) -> f64 {
        sum(mode, &self.values) / self.len() as f64
    }

    pub fn variance(&self, mode: ExecMode) -> f64 {
        let m = self.mean(mode);
        let centered: Vec<f64> = self.values.iter().map(|v| v - m).collect();
        dot(mode, &centered, &centered) / self.len() as f64
    }
}

/// An assembled transition matrix (discrete) or generator (continuous time).
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub kernel: KernelId,
    pub space: SpaceId,
    pub time: TimeKind,
    pub matrix: Csr,
}

/// Assemble the kernel's matrix row by row; rows are independent, so the
/// build parallelizes over states.
pub fn build_matrix(
    kernel: KernelId,
    n: usize,
    k: usize,
    cap: u64,
    mode: ExecMode,
) -> Result<OperatorMatrix> {
    let space = SpaceId::for_kernel(kernel, n, k)?;
    let size = space.checked_size(cap)? as usize;
    let time = if kernel.is_generator() {
        TimeKind::Generator
    } else {
        TimeKind::Discrete
    };
    let rows: Vec<Result<Vec<(u32, f64)>>> = map_rows(mode, size, |i| {
        let state = state_at(space, i as u64)?;
        let dist = transition_distribution(kernel, &state)?;
        debug_assert_eq!(dist.kind, time);
        let mut row = Vec::with_capacity(dist.entries.len());
        for (target, v) in dist.entries {
            let col = match target {
                ChainState::Decks(c) => rank_u64(&c),
                ChainState::Line(l) => line_rank_u64(&l),
            }
            .expect("target rank fits in u64 under the cap");
            row.push((col as u32, v));
        }
        debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
        Ok(row)
    });
    let rows: Result<Vec<Vec<(u32, f64)>>> = rows.into_iter().collect();
    Ok(OperatorMatrix {
        kernel,
        space,
        time,
        matrix: Csr::from_rows(rows?, mode),
    })
}

fn state_at(space: SpaceId, index: u64) -> Result<ChainState> {
    match space {
        SpaceId::Decks { n, k } => Ok(ChainState::Decks(unrank_u64(n, k, index)?)),
        SpaceId::Lines { n } => Ok(ChainState::Line(line_unrank_u64(n, index)?)),
    }
}

/// Dirichlet forms, named by the dynamics whose energy they measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FormId {
    /// Pair sum of squared top-swap increments on lines.
    LineTopSwap,
    /// Pair sum with the modified transposition on lines.
    LineModified,
    /// Pair sum with the plain transposition on lines.
    LineTransposition,
    /// Star-conditional variance on the balanced window plus star swaps.
    LineBalanced(f64),
    /// Same skeleton with transpositions in place of top swaps.
    LineBalancedTranspose(f64),
    /// Average of pairwise deck-resampling variances.
    DeckAverage,
    /// Deck-resampling variances weighted by the pooled deck sizes.
    DeckAverageWeighted,
    /// Pair sum of squared top-swap increments over k decks.
    TopSwap,
    /// Pair sum with the constrained transposition over k decks.
    ConstrainedTransposition,
}

impl FormId {
    pub fn name(&self) -> String {
        match self {
            FormId::LineTopSwap => "line-top-swap".into(),
            FormId::LineModified => "line-modified-transposition".into(),
            FormId::LineTransposition => "line-transposition".into(),
            FormId::LineBalanced(d) => format!("line-balanced({d})"),
            FormId::LineBalancedTranspose(d) => format!("line-balanced-transpose({d})"),
            FormId::DeckAverage => "deck-average".into(),
            FormId::DeckAverageWeighted => "deck-average-weighted".into(),
            FormId::TopSwap => "top-swap".into(),
            FormId::ConstrainedTransposition => "constrained-transposition".into(),
        }
    }

    /// The kernel whose form operator realizes this quadratic form.
    pub fn realizing_kernel(&self) -> KernelId {
        match *self {
            FormId::LineTopSwap => KernelId::TopSwapLine,
            FormId::LineModified => KernelId::ModifiedTransposition,
            FormId::LineTransposition => KernelId::PureTransposition,
            FormId::LineBalanced(d) => KernelId::BalancedSwap(d),
            FormId::LineBalancedTranspose(d) => KernelId::BalancedSwapTranspose(d),
            FormId::DeckAverage => KernelId::DeckAverage,
            FormId::DeckAverageWeighted => KernelId::DeckAverageWeighted,
            FormId::TopSwap => KernelId::TopSwap,
            FormId::ConstrainedTransposition => KernelId::ConstrainedTranspositionDecks,
        }
    }

    pub fn space(&self, n: usize, k: usize) -> Result<SpaceId> {
        SpaceId::for_kernel(self.realizing_kernel(), n, k)
    }
}

/// Evaluate the form from its defining sum (not through any matrix), so the
/// matrix identities stay independently testable.
pub fn dirichlet_form(form: FormId, f: &FunctionTable, mode: ExecMode) -> Result<f64> {
    let nstates = f.len();
    match form {
        FormId::LineTopSwap | FormId::LineModified | FormId::LineTransposition => {
            let n = match f.space {
                SpaceId::Lines { n } => n,
                _ => return Err(Error::SpaceMismatch("line form on a deck table".into())),
            };
            let norm = 1.0 / (2.0 * ((n + 2) * (n + 2)) as f64);
            let locals = map_rows(mode, nstates, |idx| {
                let line = line_unrank_u64(n, idx as u64).unwrap();
                let fx = f.values[idx];
                let mut acc = 0.0;
                for i in 1..=n + 1 {
                    for j in i + 1..=n + 1 {
                        let y = match form {
                            FormId::LineTopSwap => top_swap_line(&line, i, j),
                            FormId::LineModified => modified_transposition_line(&line, i, j),
                            _ => transpose_line(&line, i, j),
                        }
                        .unwrap();
                        let d = f.values[line_rank_u64(&y).unwrap() as usize] - fx;
                        // Ordered pairs (i,j) and (j,i) give the same move.
                        acc += 2.0 * d * d;
                    }
                }
                acc
            });
            Ok(norm * sum(mode, &locals) / nstates as f64)
        }
        FormId::LineBalanced(delta) | FormId::LineBalancedTranspose(delta) => {
            let n = match f.space {
                SpaceId::Lines { n } => n,
                _ => return Err(Error::SpaceMismatch("line form on a deck table".into())),
            };
            let params = BalanceParams::new(delta)?;
            let transpose = matches!(form, FormId::LineBalancedTranspose(_));

            // Star-conditional variance over the balanced window.
            let mut count = vec![0u64; n + 2];
            let mut s1 = vec![0.0f64; n + 2];
            let mut s2 = vec![0.0f64; n + 2];
            for (idx, &fx) in f.values.iter().enumerate() {
                let line = line_unrank_u64(n, idx as u64).unwrap();
                let x = line.star();
                count[x] += 1;
                s1[x] += fx;
                s2[x] += fx * fx;
            }
            let mut var_term = 0.0;
            for x in 1..=n + 1 {
                if params.is_balanced(x, n) && count[x] > 0 {
                    let c = count[x] as f64;
                    let mean = s1[x] / c;
                    let var = (s2[x] / c - mean * mean).max(0.0);
                    var_term += c / nstates as f64 * var;
                }
            }

            let norm = 1.0 / (2.0 * (n + 1) as f64);
            let locals = map_rows(mode, nstates, |idx| {
                let line = line_unrank_u64(n, idx as u64).unwrap();
                let x = line.star();
                let fx = f.values[idx];
                let mut acc = 0.0;
                for i in 1..=n + 1 {
                    let y = if transpose {
                        transpose_line(&line, i, x)
                    } else {
                        top_swap_line(&line, i, x)
                    }
                    .unwrap();
                    let d = f.values[line_rank_u64(&y).unwrap() as usize] - fx;
                    acc += d * d;
                }
                acc
            });
            Ok(var_term + norm * sum(mode, &locals) / nstates as f64)
        }
        FormId::DeckAverage | FormId::DeckAverageWeighted => {
            let (n, k) = match f.space {
                SpaceId::Decks { n, k } => (n, k),
                _ => return Err(Error::SpaceMismatch("deck form on a line table".into())),
            };
            let weighted = matches!(form, FormId::DeckAverageWeighted);
            let op = deck_average_operator(n, k, weighted, DEFAULT_STATE_CAP.max(nstates as u64), mode)?;
            Ok(op.class_variance_sum(&f.values) / nstates as f64)
        }
        FormId::TopSwap | FormId::ConstrainedTransposition => {
            let (n, k) = match f.space {
                SpaceId::Decks { n, k } => (n, k),
                _ => return Err(Error::SpaceMismatch("deck form on a line table".into())),
            };
            let npos = n + k;
            let norm = 1.0 / (2.0 * (npos * npos) as f64);
            let constrained = matches!(form, FormId::ConstrainedTransposition);
            let locals = map_rows(mode, nstates, |idx| {
                let cfg = unrank_u64(n, k, idx as u64).unwrap();
                let fx = f.values[idx];
                let mut acc = 0.0;
                for r in 1..=npos {
                    for s in r + 1..=npos {
                        let y = if constrained {
                            constrained_transposition_decks(&cfg, r, s)
                        } else {
                            top_swap(&cfg, r, s)
                        }
                        .unwrap();
                        let d = f.values[rank_u64(&y).unwrap() as usize] - fx;
                        acc += 2.0 * d * d;
                    }
                }
                acc
            });
            Ok(norm * sum(mode, &locals) / nstates as f64)
        }
    }
}

/// Mean variance of `f` under resampling the unordered deck pair {a, b}.
pub fn pair_conditional_variance(
    f: &FunctionTable,
    a: usize,
    b: usize,
    mode: ExecMode,
) -> Result<f64> {
    let (n, k) = match f.space {
        SpaceId::Decks { n, k } => (n, k),
        _ => return Err(Error::SpaceMismatch("pair resampling needs decks".into())),
    };
    if a == b || a >= k || b >= k {
        return Err(Error::InvalidParameter(format!(
            "deck pair ({a}, {b}) out of range for k = {k}"
        )));
    }
    let states = enumerate(n, k);
    let partition = partition_outside_pair(&states, a.min(b), a.max(b), false);
    let _ = mode;
    Ok(partition.weighted_variance_sum(&f.values) / states.len() as f64)
}

/// Per-star-position means and variances of a line function, indexed by
/// position - 1.
pub fn star_conditional_stats(f: &FunctionTable) -> Result<Vec<(f64, f64)>> {
    let n = match f.space {
        SpaceId::Lines { n } => n,
        _ => return Err(Error::SpaceMismatch("star statistics need lines".into())),
    };
    let mut count = vec![0u64; n + 1];
    let mut s1 = vec![0.0f64; n + 1];
    let mut s2 = vec![0.0f64; n + 1];
    for (idx, &fx) in f.values.iter().enumerate() {
        let line = line_unrank_u64(n, idx as u64).unwrap();
        let x = line.star() - 1;
        count[x] += 1;
        s1[x] += fx;
        s2[x] += fx * fx;
    }
    Ok((0..=n)
        .map(|x| {
            let c = count[x] as f64;
            let mean = s1[x] / c;
            (mean, (s2[x] / c - mean * mean).max(0.0))
        })
        .collect())
}

/// One conditional-averaging block: states grouped by the frozen part, with a
/// per-class weight.
struct ClassPartition {
    class_ptr: Vec<usize>,
    members: Vec<u32>,
    weights: Vec<f64>,
}

impl ClassPartition {
    fn classes(&self) -> usize {
        self.class_ptr.len() - 1
    }

    fn class(&self, c: usize) -> &[u32] {
        &self.members[self.class_ptr[c]..self.class_ptr[c + 1]]
    }

    /// sum over classes of weight * sum_{x in class} (f(x) - class mean)^2.
    fn weighted_variance_sum(&self, f: &[f64]) -> f64 {
        let mut acc = 0.0;
        for c in 0..self.classes() {
            let members = self.class(c);
            let mean = members.iter().map(|&m| f[m as usize]).sum::<f64>() / members.len() as f64;
            let sq: f64 = members
                .iter()
                .map(|&m| {
                    let d = f[m as usize] - mean;
                    d * d
                })
                .sum();
            acc += self.weights[c] * sq;
        }
        acc
    }

    /// y += coeff * weight * (x - class mean), per class.
    fn accumulate_centered(&self, coeff: f64, x: &[f64], y: &mut [f64]) {
        for c in 0..self.classes() {
            let members = self.class(c);
            let mean = members.iter().map(|&m| x[m as usize]).sum::<f64>() / members.len() as f64;
            let w = coeff * self.weights[c];
            for &m in members {
                y[m as usize] += w * (x[m as usize] - mean);
            }
        }
    }

    /// y += coeff * class mean, per class.
    fn accumulate_mean(&self, coeff: f64, x: &[f64], y: &mut [f64]) {
        for c in 0..self.classes() {
            let members = self.class(c);
            let mean = members.iter().map(|&m| x[m as usize]).sum::<f64>() / members.len() as f64;
            for &m in members {
                y[m as usize] += coeff * mean;
            }
        }
    }
}

fn partition_outside_pair(
    states: &[Configuration],
    i: usize,
    j: usize,
    weight_by_pool: bool,
) -> ClassPartition {
    let mut classes: BTreeMap<Vec<Card>, Vec<u32>> = BTreeMap::new();
    for (idx, st) in states.iter().enumerate() {
        let mut key = Vec::with_capacity(st.n() + st.k());
        for (t, deck) in st.decks().iter().enumerate() {
            if t != i && t != j {
                key.extend_from_slice(deck);
                key.push(crate::space::SEPARATOR);
            }
        }
        classes.entry(key).or_default().push(idx as u32);
    }
    let n = states[0].n();
    let mut class_ptr = vec![0usize];
    let mut members = Vec::with_capacity(states.len());
    let mut weights = Vec::with_capacity(classes.len());
    for (key, mut m) in classes {
        members.append(&mut m);
        class_ptr.push(members.len());
        let outside = key.iter().filter(|&&c| c != crate::space::SEPARATOR).count();
        weights.push(if weight_by_pool {
            (n - outside) as f64
        } else {
            1.0
        });
    }
    ClassPartition {
        class_ptr,
        members,
        weights,
    }
}

fn partition_by_deck(states: &[Configuration], d: usize) -> ClassPartition {
    let mut classes: BTreeMap<Vec<Card>, Vec<u32>> = BTreeMap::new();
    for (idx, st) in states.iter().enumerate() {
        classes.entry(st.deck(d).to_vec()).or_default().push(idx as u32);
    }
    let mut class_ptr = vec![0usize];
    let mut members = Vec::with_capacity(states.len());
    let mut weights = Vec::with_capacity(classes.len());
    for (_, mut m) in classes {
        members.append(&mut m);
        class_ptr.push(members.len());
        weights.push(1.0);
    }
    ClassPartition {
        class_ptr,
        members,
        weights,
    }
}

/// Matrix-free form operator of the deck-averaging dynamics:
/// Q = (2/k) * sum over deck pairs of weight * (I - pair average).
pub struct DeckAverageOp {
    dim: usize,
    coeff: f64,
    pairs: Vec<ClassPartition>,
    upper_bound: f64,
}

impl DeckAverageOp {
    /// Form value numerator: f^T Q f (divide by N for the measure).
    fn class_variance_sum(&self, f: &[f64]) -> f64 {
        self.pairs
            .iter()
            .map(|p| self.coeff * p.weighted_variance_sum(f))
            .sum()
    }
}

impl SymOp for DeckAverageOp {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for p in &self.pairs {
            p.accumulate_centered(self.coeff, x, y);
        }
    }
}

/// Build the deck-averaging form operator; weighted multiplies each pair term
/// by the pooled card count of the two decks.
pub fn deck_average_operator(
    n: usize,
    k: usize,
    weighted: bool,
    cap: u64,
    _mode: ExecMode,
) -> Result<DeckAverageOp> {
    let space = SpaceId::Decks { n, k };
    let size = space.checked_size(cap)? as usize;
    let states = enumerate(n, k);
    debug_assert_eq!(states.len(), size);
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            pairs.push(partition_outside_pair(&states, i, j, weighted));
        }
    }
    let w_max = if weighted { n as f64 } else { 1.0 };
    Ok(DeckAverageOp {
        dim: size,
        coeff: 2.0 / k as f64,
        pairs,
        upper_bound: (k - 1) as f64 * w_max,
    })
}

/// Uniform average of the per-deck conditional expectations.
pub struct ProjectorAverageOp {
    dim: usize,
    decks: Vec<ClassPartition>,
}

impl SymOp for ProjectorAverageOp {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        let coeff = 1.0 / self.decks.len() as f64;
        for p in &self.decks {
            p.accumulate_mean(coeff, x, y);
        }
    }
}

/// Largest mean-zero eigenvalue of the deck-projector average, with its
/// residual. Bounds how much the per-deck marginals can overlap.
pub fn projector_average_bound(
    n: usize,
    k: usize,
    cap: u64,
    eig: &EigOptions,
    mode: ExecMode,
) -> Result<(f64, f64)> {
    let space = SpaceId::Decks { n, k };
    let size = space.checked_size(cap)? as usize;
    let states = enumerate(n, k);
    let op = ProjectorAverageOp {
        dim: size,
        decks: (0..k).map(|d| partition_by_deck(&states, d)).collect(),
    };
    let got = largest_eigenvalue_mean_zero(&op, eig, mode)?;
    Ok((got.value, got.residual))
}

/// The PSD operator whose Rayleigh quotients give a kernel's Dirichlet form:
/// I - P for discrete chains, -L for generators, and the class-structured
/// operator for deck averaging.
pub enum FormOperator {
    Chain { matrix: Csr, time: TimeKind },
    Classes(DeckAverageOp),
}

impl FormOperator {
    pub fn upper_bound(&self) -> f64 {
        match self {
            FormOperator::Chain {
                time: TimeKind::Discrete,
                ..
            } => 2.0,
            FormOperator::Chain { matrix, .. } => matrix.abs_row_sum_max(),
            FormOperator::Classes(op) => op.upper_bound,
        }
    }
}

impl SymOp for FormOperator {
    fn dim(&self) -> usize {
        match self {
            FormOperator::Chain { matrix, .. } => matrix.nrows,
            FormOperator::Classes(op) => op.dim,
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            FormOperator::Chain { matrix, time } => {
                matrix.apply(x, y);
                match time {
                    // I - P
                    TimeKind::Discrete => {
                        for (v, u) in y.iter_mut().zip(x) {
                            *v = u - *v;
                        }
                    }
                    // -L
                    TimeKind::Generator => {
                        for v in y.iter_mut() {
                            *v = -*v;
                        }
                    }
                }
            }
            FormOperator::Classes(op) => op.apply(x, y),
        }
    }
}

pub fn form_operator_for_kernel(
    kernel: KernelId,
    n: usize,
    k: usize,
    cap: u64,
    mode: ExecMode,
) -> Result<FormOperator> {
    match kernel {
        KernelId::DeckAverage => Ok(FormOperator::Classes(deck_average_operator(
            n, k, false, cap, mode,
        )?)),
        KernelId::DeckAverageWeighted => Ok(FormOperator::Classes(deck_average_operator(
            n, k, true, cap, mode,
        )?)),
        _ => {
            let built = build_matrix(kernel, n, k, cap, mode)?;
            Ok(FormOperator::Chain {
                matrix: built.matrix,
                time: built.time,
            })
        }
    }
}

pub fn form_operator(
    form: FormId,
    n: usize,
    k: usize,
    cap: u64,
    mode: ExecMode,
) -> Result<FormOperator> {
    form_operator_for_kernel(form.realizing_kernel(), n, k, cap, mode)
}

/// Smallest mean-zero eigenvalue of a PSD operator with a known spectral
/// upper bound: shift to c I - Q and take the top.
pub fn smallest_mean_zero_eig(
    op: &dyn SymOp,
    upper_bound: f64,
    eig: &EigOptions,
    mode: ExecMode,
) -> Result<(f64, f64)> {
    let c = upper_bound + 1.0;
    let shifted = ShiftedNeg {
        c,
        inner: op,
        mode,
    };
    let got = largest_eigenvalue_mean_zero(&shifted, eig, mode)?;
    Ok((c - got.value, got.residual))
}

/// Gap of a PSD operator via the dense eigensolver: eigenvalues ascending,
/// first must be the (near-zero) constant mode.
pub fn dense_form_gap(op: &dyn SymOp) -> Result<f64> {
    let n = op.dim();
    if n > DENSE_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "dense path limited to {DENSE_LIMIT} states, got {n}"
        )));
    }
    if n < 2 {
        return Err(Error::Degenerate("single-state space has no gap".into()));
    }
    let dense = operator_to_dense(op);
    let evs = dense_symmetric_eigenvalues(&dense);
    if evs[0].abs() > 1e-7 {
        return Err(Error::Degenerate(format!(
            "form operator kernel missing: smallest eigenvalue {}",
            evs[0]
        )));
    }
    Ok(evs[1])
}

#[derive(Clone, Copy, Debug)]
pub struct GapOptions {
    pub mode: ExecMode,
    pub cap: u64,
    pub eig: EigOptions,
    /// Cross-check against the dense eigensolver when the space is small.
    pub dense_check: bool,
}

impl Default for GapOptions {
    fn default() -> Self {
        GapOptions {
            mode: ExecMode::default(),
            cap: DEFAULT_STATE_CAP,
            eig: EigOptions::default(),
            dense_check: false,
        }
    }
}

/// One spectral-gap result; `gap_times_nk` scales by the position count n+k.
#[derive(Clone, Debug, serde::Serialize)]
pub struct GapReport {
    pub kernel: String,
    pub n: usize,
    pub k: usize,
    pub state_count: u64,
    pub gap: f64,
    pub relaxation_time: f64,
    pub residual: f64,
    pub gap_times_nk: f64,
}

fn gap_of_operator(
    label: String,
    space: SpaceId,
    op: &FormOperator,
    opts: &GapOptions,
) -> Result<GapReport> {
    let size = space.checked_size(opts.cap)?;
    if size < 2 {
        return Err(Error::Degenerate(
            "single-state space has no spectral gap".into(),
        ));
    }
    let (gap, mut residual) = smallest_mean_zero_eig(op, op.upper_bound(), &opts.eig, opts.mode)?;
    if opts.dense_check && (size as usize) <= DENSE_LIMIT {
        let dense = dense_form_gap(op)?;
        let diff = (dense - gap).abs();
        if diff > 1e-6 * gap.abs().max(1.0) {
            return Err(Error::NotConverged {
                context: format!("dense cross-check disagrees for {label}: {dense} vs {gap}"),
                residual: diff,
                iterations: 0,
            });
        }
        residual = residual.max(diff);
    }
    Ok(GapReport {
        kernel: label,
        n: space.n(),
        k: space.k(),
        state_count: size,
        gap,
        relaxation_time: 1.0 / gap,
        residual,
        gap_times_nk: gap * space.positions() as f64,
    })
}

/// Spectral gap of a kernel: smallest mean-zero eigenvalue of I - P or -L.
pub fn spectral_gap(kernel: KernelId, n: usize, k: usize, opts: &GapOptions) -> Result<GapReport> {
    let space = SpaceId::for_kernel(kernel, n, k)?;
    let op = form_operator_for_kernel(kernel, n, k, opts.cap, opts.mode)?;
    gap_of_operator(kernel.name(), space, &op, opts)
}

/// Relaxation time of a Dirichlet form: sup Var(f)/Form(f) over nonconstant
/// f, i.e. the reciprocal of the form operator's gap.
pub fn rayleigh_relaxation(form: FormId, n: usize, k: usize, opts: &GapOptions) -> Result<GapReport> {
    let space = form.space(n, k)?;
    let op = form_operator(form, n, k, opts.cap, opts.mode)?;
    gap_of_operator(form.name(), space, &op, opts)
}

/// Weighted sum of form operators (coefficients may be negative), used for
/// comparing forms against each other and against the variance.
pub struct SumOp {
    pub dim: usize,
    pub terms: Vec<(f64, Box<dyn SymOp>)>,
    pub mode: ExecMode,
}

impl SymOp for SumOp {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        let mut tmp = vec![0.0; x.len()];
        for (c, op) in &self.terms {
            op.apply(x, &mut tmp);
            crate::linalg::axpy(self.mode, *c, &tmp, y);
        }
    }
}

/// Exact closed-form statistics of the first-deck-empty indicator, computed
/// by counting boundary moves, not by quoting a formula.
#[derive(Clone, Debug)]
pub struct EmptyFirstDeckStats {
    pub mean: BigRational,
    pub variance: BigRational,
    pub dirichlet_form: BigRational,
}

pub fn empty_first_deck_stats(n: usize, k: usize) -> Result<EmptyFirstDeckStats> {
    if n < 1 || k < 2 {
        return Err(Error::InvalidParameter(format!(
            "need n >= 1 cards and k >= 2 decks, got n = {n}, k = {k}"
        )));
    }
    use num_bigint::BigInt;
    let to_int = |b: BigUint| BigInt::from(b);
    let total = to_int(state_count(n, k));
    // States with an empty first deck: arrangements of n cards over k-1 decks.
    let empty = to_int(state_count(n, k - 1));
    let mean = BigRational::new(empty.clone(), total.clone());
    let variance = BigRational::new(
        empty.clone() * (total.clone() - empty.clone()),
        total.clone() * total.clone(),
    );
    // Directed boundary crossings: an empty-deck state exits via either order
    // of (extra slot of deck 1, any card position): 2n pairs. A nonempty
    // state empties deck 1 via either order of (bottom card of deck 1, extra
    // slot of another deck): 2(k-1) pairs. The two counts agree in total.
    let crossings = BigInt::from(2 * n) * empty.clone()
        + BigInt::from(2 * (k - 1)) * (total.clone() - empty);
    let npos = BigInt::from((n + k) * (n + k));
    let dirichlet_form = BigRational::new(crossings, BigInt::from(2) * npos * total);
    Ok(EmptyFirstDeckStats {
        mean,
        variance,
        dirichlet_form,
    })
}

/// All fillings of one deck drawn from m distinct cards (any subset, any
/// order), sorted by length then lexicographically.
pub fn deck_content_states(m: usize) -> Vec<Vec<Card>> {
    let mut out: Vec<Vec<Card>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<Card>> = vec![Vec::new()];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 1..=m as Card {
                if !s.contains(&c) {
                    let mut t = s.clone();
                    t.push(c);
                    out.push(t.clone());
                    next.push(t);
                }
            }
        }
        frontier = next;
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

/// Spectrum of the deck-content coupling operator: the conditional law of one
/// deck given another under the uniform measure, symmetrized by the marginal.
#[derive(Clone, Debug)]
pub struct ContentSpectrum {
    pub m: usize,
    pub k: usize,
    pub content_states: usize,
    /// All eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Distinct eigenvalues (descending) with multiplicities, grouped at 1e-9.
    pub distinct: Vec<(f64, usize)>,
    /// Largest eigenvalue strictly below 1.
    pub lambda2: f64,
    /// Max asymmetry of the joint occupancy counts; exactly 0 by exchangeability.
    pub joint_defect: u64,
}

pub fn content_coupling_spectrum(m: usize, k: usize, cap: u64) -> Result<ContentSpectrum> {
    if k < 2 {
        return Err(Error::InvalidParameter("need at least two decks".into()));
    }
    let space = SpaceId::Decks { n: m, k };
    space.checked_size(cap)?;
    let contents = deck_content_states(m);
    let d = contents.len();
    if d > DENSE_LIMIT {
        return Err(Error::CapExceeded {
            states: d as u128,
            cap: DENSE_LIMIT as u128,
        });
    }
    let index: BTreeMap<&[Card], usize> = contents
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_slice(), i))
        .collect();
    let mut joint = vec![0u64; d * d];
    for st in enumerate(m, k) {
        let a = index[st.deck(1)];
        let b = index[st.deck(0)];
        joint[a * d + b] += 1;
    }
    let mut joint_defect = 0u64;
    for a in 0..d {
        for b in 0..d {
            joint_defect = joint_defect.max(joint[a * d + b].abs_diff(joint[b * d + a]));
        }
    }
    let marg: Vec<u64> = (0..d).map(|a| (0..d).map(|b| joint[a * d + b]).sum()).collect();
    // Symmetrized kernel: joint(a,b) / sqrt(marg(a) marg(b)).
    let mut s = nalgebra::DMatrix::<f64>::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            s[(a, b)] = joint[a * d + b] as f64 / ((marg[a] as f64) * (marg[b] as f64)).sqrt();
        }
    }
    let eigenvalues = dense_symmetric_eigenvalues(&s);
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for &v in eigenvalues.iter().rev() {
        match distinct.last_mut() {
            Some((val, mult)) if (*val - v).abs() < 1e-9 => *mult += 1,
            _ => distinct.push((v, 1)),
        }
    }
    let lambda2 = distinct
        .iter()
        .find(|(v, _)| *v < 1.0 - 1e-9)
        .map(|(v, _)| *v)
        .ok_or_else(|| Error::Degenerate("no eigenvalue below 1".into()))?;
    Ok(ContentSpectrum {
        m,
        k,
        content_states: contents.len(),
        eigenvalues,
        distinct,
        lambda2,
        joint_defect,
    })
}

/// Extract the gap from a full ascending spectrum of a PSD form operator.
pub fn gap_from_spectrum(eigenvalues: &[f64]) -> Result<f64> {
    if eigenvalues.len() < 2 {
        return Err(Error::Degenerate("need at least two eigenvalues".into()));
    }
    if eigenvalues[0].abs() > 1e-7 {
        return Err(Error::Degenerate(format!(
            "expected a near-zero bottom eigenvalue, got {}",
            eigenvalues[0]
        )));
    }
    Ok(eigenvalues[1])
}

/// Full dense spectrum of a kernel's form operator, ascending.
pub fn form_spectrum(kernel: KernelId, n: usize, k: usize, opts: &GapOptions) -> Result<Vec<f64>> {
    let op = form_operator_for_kernel(kernel, n, k, opts.cap.min(DENSE_LIMIT as u64), opts.mode)?;
    Ok(dense_symmetric_eigenvalues(&operator_to_dense(&op)))
}

/// Mean-zero deflation helper shared by tests: returns f centered.
pub fn centered(f: &FunctionTable, mode: ExecMode) -> Vec<f64> {
    let mut v = f.values.clone();
    project_mean_zero(mode, &mut v);
    v
}
