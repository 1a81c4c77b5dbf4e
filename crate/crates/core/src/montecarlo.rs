//! Seeded simulation of the shuffles, autocorrelation-based relaxation
//! estimates, exact distribution-evolution diagnostics, and scaling scans.
//!
//! Continuous-time kernels are simulated through their uniformized jump
//! chains; every reported time is divided by the recorded uniformization
//! rate so estimates live on the generator's clock.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{
    constrained_transposition_decks, deck_average_resample, inversion_move,
    modified_transposition_line, top_swap, top_swap_line, transpose_line, ChainState, KernelId,
};
use crate::linalg::{ExecMode, SymOp};
use crate::space::{
    line_rank_u64, rank_u64, sample_uniform, BalanceParams, Card, Configuration, Line,
};
use crate::spectral::{
    build_matrix, spectral_gap, FunctionTable, GapOptions, GapReport, SpaceId,
};

/// What to record along a trajectory.
#[derive(Clone, Debug)]
pub enum Observable {
    /// Number of cards in the first deck (for lines: star position - 1).
    FirstDeckSize,
    /// Star position of the two-deck encoding, 1-based.
    StarPosition,
    /// Indicator of the first deck being empty.
    FirstDeckEmpty,
    /// Arbitrary tabulated function; requires an enumerable space.
    Custom(FunctionTable),
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Observable::FirstDeckSize => "first-deck-size".into(),
            Observable::StarPosition => "star-position".into(),
            Observable::FirstDeckEmpty => "first-deck-empty".into(),
            Observable::Custom(_) => "custom-table".into(),
        }
    }

    pub fn eval(&self, state: &ChainState) -> Result<f64> {
        match (self, state) {
            (Observable::FirstDeckSize, ChainState::Decks(c)) => Ok(c.deck(0).len() as f64),
            (Observable::FirstDeckSize, ChainState::Line(l)) => Ok((l.star() - 1) as f64),
            (Observable::StarPosition, ChainState::Decks(c)) => {
                if c.k() != 2 {
                    return Err(Error::SpaceMismatch(
                        "star position is defined for two decks".into(),
                    ));
                }
                Ok((c.deck(0).len() + 1) as f64)
            }
            (Observable::StarPosition, ChainState::Line(l)) => Ok(l.star() as f64),
            (Observable::FirstDeckEmpty, ChainState::Decks(c)) => {
                Ok(if c.deck(0).is_empty() { 1.0 } else { 0.0 })
            }
            (Observable::FirstDeckEmpty, ChainState::Line(l)) => {
                Ok(if l.star() == 1 { 1.0 } else { 0.0 })
            }
            (Observable::Custom(table), state) => {
                let idx = match (table.space, state) {
                    (SpaceId::Decks { n, k }, ChainState::Decks(c))
                        if c.n() == n && c.k() == k =>
                    {
                        rank_u64(c)
                    }
                    (SpaceId::Lines { n }, ChainState::Line(l)) if l.n() == n => line_rank_u64(l),
                    _ => None,
                }
                .ok_or_else(|| {
                    Error::SpaceMismatch("custom table does not cover the simulated space".into())
                })?;
                table
                    .values
                    .get(idx as usize)
                    .copied()
                    .ok_or_else(|| Error::SpaceMismatch("custom table too short".into()))
            }
        }
    }
}

/// One simulated run: observable samples, with `samples[0]` taken in the
/// initial state and one sample after each step.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub kernel: KernelId,
    pub n: usize,
    pub k: usize,
    pub observable: String,
    pub seed: u64,
    /// Exit-rate bound of the uniformized embedding; 1 for discrete kernels.
    pub uniformization_rate: f64,
    pub samples: Vec<f64>,
}

fn uniform_line<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Line {
    let mut syms: Vec<Card> = (0..=n as Card).collect();
    syms.shuffle(rng);
    Line::new(syms).expect("one star by construction")
}

fn shuffle_cards_keep_star<R: Rng + ?Sized>(line: &Line, rng: &mut R) -> Line {
    let x = line.star();
    let mut cards: Vec<Card> = line
        .symbols()
        .iter()
        .copied()
        .filter(|&c| c != crate::space::SEPARATOR)
        .collect();
    cards.shuffle(rng);
    let mut syms = Vec::with_capacity(cards.len() + 1);
    syms.extend_from_slice(&cards[..x - 1]);
    syms.push(crate::space::SEPARATOR);
    syms.extend_from_slice(&cards[x - 1..]);
    Line::new(syms).expect("one star by construction")
}

/// Total exit-rate bound used to embed a generator into discrete steps.
pub fn uniformization_rate(kernel: KernelId, n: usize, k: usize) -> f64 {
    match kernel {
        KernelId::BalancedSwap(_) | KernelId::BalancedSwapTranspose(_) => 2.0,
        KernelId::DeckAverage => (k - 1) as f64,
        // Sum of (pooled pair size)/k over ordered deck pairs.
        KernelId::DeckAverageWeighted => 2.0 * (k - 1) as f64 * n as f64 / k as f64,
        _ => 1.0,
    }
}

fn deck_of_card(cfg: &Configuration, card: Card) -> usize {
    cfg.decks()
        .iter()
        .position(|d| d.contains(&card))
        .expect("every card sits in some deck")
}

fn step<R: Rng + ?Sized>(
    kernel: KernelId,
    state: ChainState,
    n: usize,
    k: usize,
    params: Option<&BalanceParams>,
    rng: &mut R,
) -> Result<ChainState> {
    match (kernel, state) {
        (KernelId::TopSwap, ChainState::Decks(c)) => {
            let r = rng.gen_range(1..=n + k);
            let s = rng.gen_range(1..=n + k);
            Ok(ChainState::Decks(top_swap(&c, r, s)?))
        }
        (KernelId::ConstrainedTranspositionDecks, ChainState::Decks(c)) => {
            let r = rng.gen_range(1..=n + k);
            let s = rng.gen_range(1..=n + k);
            Ok(ChainState::Decks(constrained_transposition_decks(&c, r, s)?))
        }
        (KernelId::TopSwapInversion, ChainState::Decks(c)) => {
            let r = rng.gen_range(1..=n + k);
            let s = rng.gen_range(1..=n + k);
            Ok(ChainState::Decks(inversion_move(&c, r, s)?))
        }
        (KernelId::DeckAverage, ChainState::Decks(c)) => {
            let a = rng.gen_range(0..k);
            let mut b = rng.gen_range(0..k - 1);
            if b >= a {
                b += 1;
            }
            Ok(ChainState::Decks(deck_average_resample(&c, a, b, rng)?))
        }
        (KernelId::DeckAverageWeighted, ChainState::Decks(c)) => {
            // Pair {a,b} must be hit proportionally to its pooled card count:
            // picking a uniform card's deck and a uniform other deck does it.
            let card = rng.gen_range(1..=n as Card);
            let a = deck_of_card(&c, card);
            let mut b = rng.gen_range(0..k - 1);
            if b >= a {
                b += 1;
            }
            Ok(ChainState::Decks(deck_average_resample(&c, a, b, rng)?))
        }
        (
            KernelId::TopSwapLine
            | KernelId::PureTransposition
            | KernelId::ModifiedTransposition
            | KernelId::ConstrainedTranspositionLine,
            ChainState::Line(l),
        ) => {
            // Positions are drawn from 1..=n+2; draws touching the phantom
            // index hold, matching the transition law exactly.
            let u = rng.gen_range(1..=n + 2);
            let v = rng.gen_range(1..=n + 2);
            if u > n + 1 || v > n + 1 {
                return Ok(ChainState::Line(l));
            }
            let moved = match kernel {
                KernelId::TopSwapLine => top_swap_line(&l, u, v)?,
                KernelId::PureTransposition => transpose_line(&l, u, v)?,
                KernelId::ModifiedTransposition => modified_transposition_line(&l, u, v)?,
                _ => crate::kernels::constrained_transposition_line(&l, u.min(v), u.max(v))?,
            };
            Ok(ChainState::Line(moved))
        }
        (KernelId::BalancedSwap(_) | KernelId::BalancedSwapTranspose(_), ChainState::Line(l)) => {
            let params = params.expect("balance parameters prepared by the caller");
            if rng.gen_bool(0.5) {
                let i = rng.gen_range(1..=n + 1);
                let x = l.star();
                let moved = if matches!(kernel, KernelId::BalancedSwapTranspose(_)) {
                    transpose_line(&l, i, x)?
                } else {
                    top_swap_line(&l, i, x)?
                };
                Ok(ChainState::Line(moved))
            } else if params.is_balanced(l.star(), n) {
                Ok(ChainState::Line(shuffle_cards_keep_star(&l, rng)))
            } else {
                Ok(ChainState::Line(l))
            }
        }
        (kernel, _) => Err(Error::SpaceMismatch(format!(
            "{} cannot run on the given state type",
            kernel.name()
        ))),
    }
}

/// Simulate `steps` moves from a stationary start drawn from the seed.
pub fn simulate(
    kernel: KernelId,
    n: usize,
    k: usize,
    steps: usize,
    seed: u64,
    observable: &Observable,
) -> Result<Trajectory> {
    simulate_from(kernel, n, k, steps, seed, observable, None)
}

/// Simulate from an explicit initial state (stationary sample when `None`).
pub fn simulate_from(
    kernel: KernelId,
    n: usize,
    k: usize,
    steps: usize,
    seed: u64,
    observable: &Observable,
    start: Option<ChainState>,
) -> Result<Trajectory> {
    if kernel.is_line_space() && k != 2 {
        return Err(Error::SpaceMismatch(format!(
            "{} runs on the single-line encoding, which requires k = 2",
            kernel.name()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = match kernel {
        KernelId::BalancedSwap(d) | KernelId::BalancedSwapTranspose(d) => {
            Some(BalanceParams::new(d)?)
        }
        _ => None,
    };
    let mut state = match start {
        Some(s) => {
            let matches_space = match (&s, kernel.is_line_space()) {
                (ChainState::Line(l), true) => l.n() == n,
                (ChainState::Decks(c), false) => c.n() == n && c.k() == k,
                _ => false,
            };
            if !matches_space {
                return Err(Error::SpaceMismatch(
                    "initial state does not live on the kernel's space".into(),
                ));
            }
            s
        }
        None if kernel.is_line_space() => ChainState::Line(uniform_line(n, &mut rng)),
        None => ChainState::Decks(sample_uniform(n, k, &mut rng)),
    };
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(observable.eval(&state)?);
    for _ in 0..steps {
        state = step(kernel, state, n, k, params.as_ref(), &mut rng)?;
        samples.push(observable.eval(&state)?);
    }
    Ok(Trajectory {
        kernel,
        n,
        k,
        observable: observable.name(),
        seed,
        uniformization_rate: uniformization_rate(kernel, n, k),
        samples,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct EstimateOptions {
    /// Autocorrelation threshold defining the window.
    pub rho_threshold: f64,
    /// Window search limit as a fraction of the series length.
    pub max_window_fraction: f64,
    /// Lower end of the fit range as a fraction of the window; raising it
    /// suppresses fast-mode contamination in multi-rate observables.
    pub fit_lo_fraction: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            rho_threshold: 0.05,
            max_window_fraction: 0.25,
            fit_lo_fraction: 0.25,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct TauEstimate {
    pub method: &'static str,
    pub tau: f64,
    pub stderr: f64,
}

/// Relaxation-time estimate in generator time, by two methods sharing one
/// automatically chosen window.
#[derive(Clone, Debug, serde::Serialize)]
pub struct RelaxationEstimate {
    pub observable: String,
    pub window: usize,
    pub fit_lo: usize,
    pub fit_hi: usize,
    pub exponential_fit: TauEstimate,
    pub integrated: TauEstimate,
    pub uniformization_rate: f64,
    pub samples: usize,
    pub warning: Option<String>,
}

/// Pooled normalized autocorrelations rho(0..=window) over one or more
/// series, where `window` is the first lag below the threshold; lags are
/// only computed up to that point. Each series is centered by its own mean.
fn autocorrelation_window(
    series: &[Vec<f64>],
    threshold: f64,
    max_lag: usize,
) -> Result<Vec<f64>> {
    let centered: Vec<Vec<f64>> = series
        .iter()
        .map(|s| {
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|v| v - mean).collect()
        })
        .collect();
    let c0: f64 = centered
        .iter()
        .map(|s| s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64)
        .sum();
    if c0 <= 0.0 {
        return Err(Error::Degenerate(
            "constant observable has no autocorrelation".into(),
        ));
    }
    let mut rho = vec![1.0];
    let mut min_rho = f64::INFINITY;
    for t in 1..=max_lag {
        let c: f64 = centered
            .iter()
            .map(|s| {
                let l = s.len();
                s[..l - t]
                    .iter()
                    .zip(&s[t..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / (l - t) as f64
            })
            .sum();
        let r = c / c0;
        rho.push(r);
        min_rho = min_rho.min(r);
        if r < threshold {
            return Ok(rho);
        }
    }
    Err(Error::NotConverged {
        context: format!(
            "autocorrelation never fell below {threshold} within {max_lag} lags"
        ),
        residual: min_rho,
        iterations: max_lag,
    })
}

pub fn estimate_relaxation(trajectory: &Trajectory) -> Result<RelaxationEstimate> {
    estimate_relaxation_with(trajectory, &EstimateOptions::default())
}

pub fn estimate_relaxation_with(
    trajectory: &Trajectory,
    opts: &EstimateOptions,
) -> Result<RelaxationEstimate> {
    let samples = &trajectory.samples;
    let l = samples.len();
    if l < 16 {
        return Err(Error::InvalidParameter(
            "trajectory too short for an autocorrelation estimate".into(),
        ));
    }
    let max_lag = ((l as f64 * opts.max_window_fraction) as usize).max(2);
    let rho = autocorrelation_window(
        std::slice::from_ref(samples),
        opts.rho_threshold,
        max_lag,
    )?;
    estimate_from_rho(
        &rho,
        l,
        trajectory.uniformization_rate,
        trajectory.observable.clone(),
        opts,
    )
}

fn estimate_from_rho(
    rho: &[f64],
    total_samples: usize,
    rate: f64,
    observable: String,
    opts: &EstimateOptions,
) -> Result<RelaxationEstimate> {
    let l = total_samples;
    let window = rho.len() - 1;

    let fit_lo = ((window as f64 * opts.fit_lo_fraction) as usize).max(1);
    let fit_hi = window;
    let mut points: Vec<(f64, f64)> = (fit_lo..=fit_hi)
        .filter(|&t| rho[t] > 0.0)
        .map(|t| (t as f64, rho[t].ln()))
        .collect();
    if points.len() < 2 {
        points = (1..=fit_hi)
            .filter(|&t| rho[t] > 0.0)
            .map(|t| (t as f64, rho[t].ln()))
            .collect();
    }
    // Through-origin slope (log rho(0) = 0) when the tail is too sparse
    // for a regression; an empty tail means sub-step decorrelation.
    let sparse_fallback = |points: &[(f64, f64)]| match points.last() {
        Some(&(t, ln_r)) => (-t / ln_r, 0.0),
        None => (0.0, 0.0),
    };
    let (tau_steps, tau_stderr_steps) = if points.len() < 2 {
        sparse_fallback(&points)
    } else {
        let m = points.len() as f64;
        let xbar = points.iter().map(|(x, _)| x).sum::<f64>() / m;
        let ybar = points.iter().map(|(_, y)| y).sum::<f64>() / m;
        let sxx: f64 = points.iter().map(|(x, _)| (x - xbar) * (x - xbar)).sum();
        let sxy: f64 = points.iter().map(|(x, y)| (x - xbar) * (y - ybar)).sum();
        let slope = sxy / sxx;
        if slope < 0.0 {
            let resid2: f64 = points
                .iter()
                .map(|(x, y)| {
                    let pred = ybar + slope * (x - xbar);
                    (y - pred) * (y - pred)
                })
                .sum();
            let slope_var = if points.len() > 2 {
                resid2 / (m - 2.0) / sxx
            } else {
                0.0
            };
            (-1.0 / slope, slope_var.sqrt() / (slope * slope))
        } else {
            sparse_fallback(&points)
        }
    };

    let tau_int_steps = 0.5 + rho[1..=window].iter().sum::<f64>();
    let tau_int_stderr_steps =
        tau_int_steps * (2.0 * (2.0 * window as f64 + 1.0) / l as f64).sqrt();

    let warning = if (l as f64) < 100.0 * tau_steps {
        Some(format!(
            "series length {} below 100 x estimated correlation time {:.1}",
            l, tau_steps
        ))
    } else {
        None
    };
    Ok(RelaxationEstimate {
        observable,
        window,
        fit_lo,
        fit_hi,
        exponential_fit: TauEstimate {
            method: "exponential-fit",
            tau: tau_steps / rate,
            stderr: tau_stderr_steps / rate,
        },
        integrated: TauEstimate {
            method: "integrated-autocorrelation",
            tau: tau_int_steps / rate,
            stderr: tau_int_stderr_steps / rate,
        },
        uniformization_rate: rate,
        samples: l,
        warning,
    })
}

/// Pooled relaxation estimate from independent replicas, one per seed
/// derived from `base_seed`. Replicas run in parallel when enabled; the
/// reduction is a fixed seed-ordered sum, so results do not depend on the
/// thread count. Autocorrelations are averaged before windowing and
/// fitting, which tames per-series noise in deep windows.
pub fn replica_relaxation(
    kernel: KernelId,
    n: usize,
    k: usize,
    steps: usize,
    base_seed: u64,
    replicas: usize,
    observable: &Observable,
    opts: &EstimateOptions,
    mode: ExecMode,
) -> Result<RelaxationEstimate> {
    if replicas == 0 {
        return Err(Error::InvalidParameter("need at least one replica".into()));
    }
    let runs = crate::linalg::map_rows(mode, replicas, |r| {
        simulate(kernel, n, k, steps, base_seed.wrapping_add(r as u64), observable)
    });
    let mut series = Vec::with_capacity(replicas);
    let mut rate = 1.0;
    for run in runs {
        let t = run?;
        rate = t.uniformization_rate;
        series.push(t.samples);
    }
    let total: usize = series.iter().map(|s| s.len()).sum();
    let per_len = series[0].len();
    let max_lag = ((per_len as f64 * opts.max_window_fraction) as usize).max(2);
    let rho = autocorrelation_window(&series, opts.rho_threshold, max_lag)?;
    estimate_from_rho(&rho, total, rate, observable.name(), opts)
}

/// Exact distribution evolution from a point mass under a discrete kernel:
/// total-variation distance to uniform after each step.
pub fn exact_tv_curve(
    kernel: KernelId,
    n: usize,
    k: usize,
    start: &ChainState,
    t_max: usize,
    opts: &GapOptions,
) -> Result<Vec<(usize, f64)>> {
    if kernel.is_generator() {
        return Err(Error::InvalidParameter(
            "distribution evolution needs a discrete kernel".into(),
        ));
    }
    let built = build_matrix(kernel, n, k, opts.cap, opts.mode)?;
    let size = built.matrix.nrows;
    let start_idx = match (built.space, start) {
        (SpaceId::Decks { n, k }, ChainState::Decks(c)) if c.n() == n && c.k() == k => rank_u64(c),
        (SpaceId::Lines { n }, ChainState::Line(l)) if l.n() == n => line_rank_u64(l),
        _ => None,
    }
    .ok_or_else(|| Error::SpaceMismatch("start state off the kernel's space".into()))?;
    let uniform = 1.0 / size as f64;
    let mut dist = vec![0.0; size];
    dist[start_idx as usize] = 1.0;
    let mut out = Vec::with_capacity(t_max + 1);
    let mut next = vec![0.0; size];
    for t in 0..=t_max {
        let tv = 0.5 * dist.iter().map(|&p| (p - uniform).abs()).sum::<f64>();
        out.push((t, tv));
        if t < t_max {
            // P is symmetric, so row application evolves the distribution.
            built.matrix.apply(&dist, &mut next);
            std::mem::swap(&mut dist, &mut next);
        }
    }
    Ok(out)
}

/// How scaling_scan obtains each relaxation time.
#[derive(Clone, Copy, Debug)]
pub enum ScanMode {
    Exact,
    Mc { steps: usize, seed: u64 },
}

impl ScanMode {
    pub fn name(&self) -> &'static str {
        match self {
            ScanMode::Exact => "exact",
            ScanMode::Mc { .. } => "mc",
        }
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ScanRow {
    #[serde(flatten)]
    pub report: GapReport,
    pub mode: String,
}

/// Scan of relaxation times over a grid, with a least-squares line in n+k.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ScanReport {
    pub kernel: String,
    pub rows: Vec<ScanRow>,
    pub fit_slope: f64,
    pub fit_intercept: f64,
    /// Extremes of relaxation_time / (n+k) over the grid.
    pub ratio_max: f64,
    pub ratio_min: f64,
}

impl ScanReport {
    pub fn fitted(&self, positions: f64) -> f64 {
        self.fit_slope * positions + self.fit_intercept
    }
}

pub fn scaling_scan(
    kernel: KernelId,
    grid: &[(usize, usize)],
    mode: ScanMode,
    opts: &GapOptions,
) -> Result<ScanReport> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty scan grid".into()));
    }
    let mut grid: Vec<(usize, usize)> = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let mut rows = Vec::with_capacity(grid.len());
    for &(n, k) in &grid {
        let report = match mode {
            ScanMode::Exact => spectral_gap(kernel, n, k, opts)?,
            ScanMode::Mc { steps, seed } => {
                // Distinct instances draw from distinct streams.
                let inst_seed = seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add((n as u64) << 20)
                    .wrapping_add(k as u64);
                let traj = simulate(kernel, n, k, steps, inst_seed, &Observable::FirstDeckSize)?;
                let est = estimate_relaxation(&traj)?;
                let tau = est.exponential_fit.tau;
                GapReport {
                    kernel: kernel.name(),
                    n,
                    k,
                    state_count: crate::space::state_count_u64(n, k).unwrap_or(0),
                    gap: 1.0 / tau,
                    relaxation_time: tau,
                    residual: est.exponential_fit.stderr,
                    gap_times_nk: (n + k) as f64 / tau,
                }
            }
        };
        rows.push(ScanRow {
            report,
            mode: mode.name().into(),
        });
    }
    let m = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|r| (r.report.n + r.report.k) as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.report.relaxation_time).collect();
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let (fit_slope, fit_intercept) = if sxx > 0.0 {
        let s = sxy / sxx;
        (s, ybar - s * xbar)
    } else {
        (0.0, ybar)
    };
    let ratios: Vec<f64> = rows
        .iter()
        .map(|r| r.report.relaxation_time / (r.report.n + r.report.k) as f64)
        .collect();
    let ratio_max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ratio_min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ScanReport {
        kernel: kernel.name(),
        rows,
        fit_slope,
        fit_intercept,
        ratio_max,
        ratio_min,
    })
}

/// Chi-square p-value of observed counts against expected probabilities.
pub fn chi_square_p(observed: &[u64], expected_probs: &[f64]) -> Result<f64> {
    if observed.len() != expected_probs.len() || observed.len() < 2 {
        return Err(Error::InvalidParameter(
            "need matching count/probability bins, at least two".into(),
        ));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::InvalidParameter("no observations".into()));
    }
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = p * total as f64;
        if e <= 0.0 {
            if o > 0 {
                return Ok(0.0);
            }
            continue;
        }
        let d = o as f64 - e;
        stat += d * d / e;
    }
    let df = (observed.len() - 1) as f64;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let chi = ChiSquared::new(df)
        .map_err(|e| Error::InvalidParameter(format!("chi-square setup: {e}")))?;
    Ok(1.0 - chi.cdf(stat))
}

/// Fraction of simulated states per first-deck size, against the exact
/// uniform marginal (all sizes equally likely at k = 2).
pub fn first_deck_size_counts(trajectory: &Trajectory) -> Result<Vec<u64>> {
    if trajectory.observable != Observable::FirstDeckSize.name() {
        return Err(Error::InvalidParameter(
            "size counts need the first-deck-size observable".into(),
        ));
    }
    let mut counts = vec![0u64; trajectory.n + 1];
    for &s in &trajectory.samples {
        let v = s as usize;
        if s < 0.0 || s.fract() != 0.0 || v > trajectory.n {
            return Err(Error::Degenerate(format!("non-size sample {s}")));
        }
        counts[v] += 1;
    }
    Ok(counts)
}

pub fn write_series_csv<W: std::io::Write>(
    mut out: W,
    samples: &[f64],
) -> std::io::Result<()> {
    writeln!(out, "t,value")?;
    for (t, v) in samples.iter().enumerate() {
        writeln!(out, "{t},{v:.16e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::DEFAULT_STATE_CAP;
    use crate::ExecMode;
    use approx::assert_relative_eq;

    #[test]
    fn seeded_runs_are_identical() {
        let a = simulate(KernelId::TopSwap, 4, 2, 500, 7, &Observable::FirstDeckSize).unwrap();
        let b = simulate(KernelId::TopSwap, 4, 2, 500, 7, &Observable::FirstDeckSize).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = simulate(KernelId::TopSwap, 4, 2, 500, 8, &Observable::FirstDeckSize).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn stationary_mean_of_empty_indicator() {
        let traj =
            simulate(KernelId::TopSwap, 3, 3, 200_000, 11, &Observable::FirstDeckEmpty).unwrap();
        let mean = traj.samples.iter().sum::<f64>() / traj.samples.len() as f64;
        // Exact stationary mean is (k-1)/(n+k-1) = 2/5.
        assert!((mean - 0.4).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn relabeled_start_gives_identical_size_series() {
        let start = ChainState::Decks(
            Configuration::new(vec![vec![1, 2, 3], vec![4], vec![]]).unwrap(),
        );
        let relabeled = ChainState::Decks(
            Configuration::new(vec![vec![4, 3, 1], vec![2], vec![]]).unwrap(),
        );
        let a = simulate_from(
            KernelId::TopSwap,
            4,
            3,
            2_000,
            5,
            &Observable::FirstDeckSize,
            Some(start),
        )
        .unwrap();
        let b = simulate_from(
            KernelId::TopSwap,
            4,
            3,
            2_000,
            5,
            &Observable::FirstDeckSize,
            Some(relabeled),
        )
        .unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn estimator_on_iid_noise_reports_short_tau() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let samples: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();
        let traj = Trajectory {
            kernel: KernelId::TopSwap,
            n: 4,
            k: 2,
            observable: "noise".into(),
            seed: 99,
            uniformization_rate: 1.0,
            samples,
        };
        let est = estimate_relaxation(&traj).unwrap();
        assert_eq!(est.window, 1);
        assert!(est.integrated.tau <= 1.0);
    }

    #[test]
    fn tv_curve_start_and_decay() {
        let start = ChainState::Decks(Configuration::stacked(4, 2));
        let curve = exact_tv_curve(
            KernelId::TopSwap,
            4,
            2,
            &start,
            240,
            &GapOptions::default(),
        )
        .unwrap();
        let n_states = 120.0;
        assert_relative_eq!(curve[0].1, 1.0 - 1.0 / n_states, epsilon = 1e-12);
        assert!(curve.last().unwrap().1 < 1e-3);
        // Late-time log-slope approaches -gap.
        let gap = spectral_gap(KernelId::TopSwap, 4, 2, &GapOptions::default())
            .unwrap()
            .gap;
        let t0 = 160;
        let t1 = 240;
        let slope = (curve[t1].1.ln() - curve[t0].1.ln()) / (t1 - t0) as f64;
        assert!(
            (slope.abs() - gap).abs() / gap < 0.05,
            "slope {slope} gap {gap}"
        );
    }

    #[test]
    fn uniform_start_stays_at_zero_tv() {
        let built = build_matrix(KernelId::TopSwap, 3, 2, DEFAULT_STATE_CAP, ExecMode::Serial)
            .unwrap();
        let size = built.matrix.nrows;
        let uniform = vec![1.0 / size as f64; size];
        let mut next = vec![0.0; size];
        built.matrix.apply(&uniform, &mut next);
        let tv = 0.5
            * next
                .iter()
                .map(|&p| (p - 1.0 / size as f64).abs())
                .sum::<f64>();
        assert!(tv < 1e-14);
    }

    #[test]
    fn scan_sorts_rows_and_fits() {
        let grid = [(3usize, 2usize), (2, 2), (2, 3)];
        let scan = scaling_scan(
            KernelId::TopSwap,
            &grid,
            ScanMode::Exact,
            &GapOptions::default(),
        )
        .unwrap();
        let order: Vec<(usize, usize)> =
            scan.rows.iter().map(|r| (r.report.n, r.report.k)).collect();
        assert_eq!(order, vec![(2, 2), (2, 3), (3, 2)]);
        assert!(scan.ratio_max >= scan.ratio_min);
        assert!(scan.fitted(7.0).is_finite());
        assert!(scaling_scan(KernelId::TopSwap, &[], ScanMode::Exact, &GapOptions::default())
            .is_err());
    }

    #[test]
    fn chi_square_detects_bias() {
        let fair = chi_square_p(&[2500, 2500, 2500, 2500], &[0.25; 4]).unwrap();
        assert!(fair > 0.99);
        let biased = chi_square_p(&[4000, 2000, 2000, 2000], &[0.25; 4]).unwrap();
        assert!(biased < 1e-6);
    }

    #[test]
    fn balanced_chain_stays_on_space_and_mixes() {
        let traj = simulate(
            KernelId::BalancedSwap(0.25),
            3,
            2,
            50_000,
            13,
            &Observable::StarPosition,
        )
        .unwrap();
        assert_eq!(traj.uniformization_rate, 2.0);
        // Star position is uniform on 1..=n+1 in equilibrium.
        let mut counts = vec![0u64; 4];
        for &s in &traj.samples {
            counts[s as usize - 1] += 1;
        }
        let p = chi_square_p(&counts, &[0.25; 4]).unwrap();
        assert!(p > 0.001, "p = {p}, counts {counts:?}");
    }

    #[test]
    fn replica_pooling_is_thread_count_invariant() {
        let opts = EstimateOptions::default();
        let serial = replica_relaxation(
            KernelId::TopSwap,
            4,
            2,
            20_000,
            3,
            4,
            &Observable::FirstDeckSize,
            &opts,
            ExecMode::Serial,
        )
        .unwrap();
        let parallel = replica_relaxation(
            KernelId::TopSwap,
            4,
            2,
            20_000,
            3,
            4,
            &Observable::FirstDeckSize,
            &opts,
            ExecMode::Parallel,
        )
        .unwrap();
        assert_eq!(serial.exponential_fit.tau.to_bits(), parallel.exponential_fit.tau.to_bits());
        assert_eq!(serial.integrated.tau.to_bits(), parallel.integrated.tau.to_bits());
        assert_eq!(serial.window, parallel.window);
    }

    #[test]
    fn weighted_resampling_prefers_loaded_pairs() {
        // With all cards in deck 0, deck 0 must join every resampled pair.
        let start = ChainState::Decks(Configuration::stacked(5, 3));
        let traj = simulate_from(
            KernelId::DeckAverageWeighted,
            5,
            3,
            1,
            3,
            &Observable::FirstDeckSize,
            Some(start),
        )
        .unwrap();
        assert_eq!(traj.uniformization_rate, 2.0 * 2.0 * 5.0 / 3.0);
        assert_eq!(traj.samples.len(), 2);
    }
}
