//! Batch front door: gap computations, scaling scans, simulations, content
//! spectra, and verification suites, emitted as CSV or JSON.
//!
//! Exit codes: 0 success, 1 usage or invalid parameters, 2 numerical
//! non-convergence or failing verification checks, 3 resource caps and
//! degenerate instances.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use topswap_core::kernels::KernelId;
use topswap_core::montecarlo::{
    estimate_relaxation_with, replica_relaxation, scaling_scan, simulate, write_series_csv,
    EstimateOptions, Observable, RelaxationEstimate, ScanMode,
};
use topswap_core::spectral::{
    content_coupling_spectrum, spectral_gap, GapOptions, GapReport, DEFAULT_STATE_CAP,
};
use topswap_core::verify::{
    check_balanced_gap_bound, check_constant_table, check_decomposition, check_inverse_identity,
    check_pushforward, check_transposition_rate_ratio, standard_inequality_suite, summarize,
    write_check_csv, CheckReport,
};
use topswap_core::{Error, ExecMode};

#[derive(Parser)]
#[command(name = "topswap", version, about)]
struct Cli {
    /// Worker threads for parallel sections; falls back to TOPSWAP_WORKERS,
    /// then to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format for the main artifact.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// State-count cap for enumerated spaces.
    #[arg(long, global = true, default_value_t = DEFAULT_STATE_CAP)]
    cap: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChainArg {
    TopSwap,
    TopSwapLine,
    ModifiedTransposition,
    ConstrainedTranspositionLine,
    ConstrainedTranspositionDecks,
    PureTransposition,
    BalancedSwap,
    BalancedSwapTranspose,
    #[value(alias = "deck-avg")]
    DeckAverage,
    DeckAverageWeighted,
    TopSwapInversion,
}

impl ChainArg {
    fn kernel(self, delta: f64) -> KernelId {
        match self {
            ChainArg::TopSwap => KernelId::TopSwap,
            ChainArg::TopSwapLine => KernelId::TopSwapLine,
            ChainArg::ModifiedTransposition => KernelId::ModifiedTransposition,
            ChainArg::ConstrainedTranspositionLine => KernelId::ConstrainedTranspositionLine,
            ChainArg::ConstrainedTranspositionDecks => KernelId::ConstrainedTranspositionDecks,
            ChainArg::PureTransposition => KernelId::PureTransposition,
            ChainArg::BalancedSwap => KernelId::BalancedSwap(delta),
            ChainArg::BalancedSwapTranspose => KernelId::BalancedSwapTranspose(delta),
            ChainArg::DeckAverage => KernelId::DeckAverage,
            ChainArg::DeckAverageWeighted => KernelId::DeckAverageWeighted,
            ChainArg::TopSwapInversion => KernelId::TopSwapInversion,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObservableArg {
    FirstDeckSize,
    StarPosition,
    FirstDeckEmpty,
}

impl ObservableArg {
    fn observable(self) -> Observable {
        match self {
            ObservableArg::FirstDeckSize => Observable::FirstDeckSize,
            ObservableArg::StarPosition => Observable::StarPosition,
            ObservableArg::FirstDeckEmpty => Observable::FirstDeckEmpty,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Identities,
    Inequalities,
    BalancedGap,
    RateRatio,
    Constants,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum OperatorArg {
    /// Deck-content coupling operator between two decks.
    Content,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScanModeArg {
    Exact,
    Mc,
}

#[derive(Args)]
struct ChainInstance {
    /// Number of cards.
    #[arg(long)]
    n: usize,
    /// Number of decks.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Balanced-window parameter for the balanced-swap chains.
    #[arg(long, default_value_t = 0.25)]
    delta: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Exact spectral gap of one chain instance.
    Gap {
        #[arg(long, value_enum)]
        chain: ChainArg,
        #[command(flatten)]
        instance: ChainInstance,
    },
    /// Relaxation times over an (n, k) grid with a least-squares line.
    Scan {
        #[arg(long, value_enum)]
        chain: ChainArg,
        #[arg(long, default_value_t = 2)]
        n_min: usize,
        #[arg(long, default_value_t = 6)]
        n_max: usize,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 4)]
        k_max: usize,
        #[arg(long, default_value_t = 0.25)]
        delta: f64,
        #[arg(long, value_enum, default_value_t = ScanModeArg::Exact)]
        mode: ScanModeArg,
        /// Steps per instance in mc mode.
        #[arg(long, default_value_t = 1_000_000)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Seeded trajectory with a windowed relaxation-time estimate.
    Simulate {
        #[arg(long, value_enum)]
        chain: ChainArg,
        #[command(flatten)]
        instance: ChainInstance,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ObservableArg::FirstDeckSize)]
        observable: ObservableArg,
        /// Independent chains pooled into one estimate.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        replicas: u64,
        /// Autocorrelation threshold closing the fit window.
        #[arg(long, default_value_t = 0.05)]
        rho_threshold: f64,
        /// Lower end of the fit range as a fraction of the window.
        #[arg(long, default_value_t = 0.25)]
        fit_lo: f64,
        /// Window search limit as a fraction of the series length.
        #[arg(long, default_value_t = 0.25)]
        max_window: f64,
        /// Also write the sampled series as CSV.
        #[arg(long)]
        trajectory_out: Option<PathBuf>,
    },
    /// Run a verification suite; nonzero exit when any check fails.
    Verify {
        #[arg(long, value_enum)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 6)]
        n_max: usize,
        #[arg(long, default_value_t = 0.25)]
        delta: f64,
    },
    /// Eigenvalues of a structured operator, descending with multiplicities.
    Spectrum {
        #[arg(long, value_enum)]
        operator: OperatorArg,
        /// Cards shared by the coupled decks.
        #[arg(long)]
        cards: usize,
        #[arg(long, default_value_t = 3)]
        decks: usize,
    },
}

/// One emitted row; field order fixes the CSV column order and the JSON keys.
#[derive(Serialize)]
struct GapRow {
    chain: String,
    n: usize,
    k: usize,
    states: u64,
    gap: f64,
    relaxation_time: f64,
    gap_times_nk: f64,
    mode: String,
    residual: f64,
}

impl GapRow {
    fn new(report: &GapReport, mode: &str) -> Self {
        GapRow {
            chain: report.kernel.clone(),
            n: report.n,
            k: report.k,
            states: report.state_count,
            gap: report.gap,
            relaxation_time: report.relaxation_time,
            gap_times_nk: report.gap_times_nk,
            mode: mode.into(),
            residual: report.residual,
        }
    }
}

#[derive(Serialize)]
struct SimulateArtifact {
    chain: String,
    n: usize,
    k: usize,
    steps: usize,
    seed: u64,
    replicas: usize,
    estimate: RelaxationEstimate,
}

#[derive(Serialize)]
struct SpectrumRow {
    value: f64,
    multiplicity: usize,
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn gap_rows_csv(rows: &[GapRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "chain",
        "n",
        "k",
        "states",
        "gap",
        "relaxation_time",
        "gap_times_nk",
        "mode",
        "residual",
    ])
    .unwrap();
    for r in rows {
        w.write_record([
            r.chain.as_str(),
            &r.n.to_string(),
            &r.k.to_string(),
            &r.states.to_string(),
            &real(r.gap),
            &real(r.relaxation_time),
            &real(r.gap_times_nk),
            &r.mode,
            &real(r.residual),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

fn spectrum_csv(rows: &[SpectrumRow]) -> String {
    let mut out = String::from("value,multiplicity\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", real(r.value), r.multiplicity);
    }
    out
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| Error::InvalidParameter(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

/// Instances with no spectral gap to report: zero cards, or a single deck
/// (every pick is a same-deck identity move).
fn degenerate_guard(n: usize, k: usize) -> Result<(), Error> {
    if k >= 1 && (n == 0 || k == 1) {
        return Err(Error::Degenerate(format!(
            "({n} cards, {k} decks) is a single communicating state"
        )));
    }
    Ok(())
}

fn exec_mode(workers: Option<usize>) -> ExecMode {
    let requested = workers.or_else(|| {
        std::env::var("TOPSWAP_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    match requested {
        Some(0) | Some(1) => ExecMode::Serial,
        Some(w) => {
            // Ignored when a pool already exists; sizing is best-effort.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
            ExecMode::Parallel
        }
        None => ExecMode::Parallel,
    }
}

fn exit_for(err: &Error) -> ExitCode {
    let code = match err {
        Error::InvalidParameter(_) | Error::IndexOutOfRange { .. } | Error::SpaceMismatch(_) => 1,
        Error::NotConverged { .. } => 2,
        Error::CapExceeded { .. } | Error::Degenerate(_) => 3,
    };
    ExitCode::from(code)
}

fn run(cli: Cli) -> Result<(), Error> {
    let mode = exec_mode(cli.workers);
    let opts = GapOptions {
        mode,
        cap: cli.cap,
        ..GapOptions::default()
    };
    match cli.command {
        Command::Gap { chain, instance } => {
            degenerate_guard(instance.n, instance.k)?;
            let kernel = chain.kernel(instance.delta);
            let report = spectral_gap(kernel, instance.n, instance.k, &opts)?;
            let row = GapRow::new(&report, "exact");
            let content = match cli.format {
                Format::Csv => gap_rows_csv(std::slice::from_ref(&row)),
                Format::Json => serde_json::to_string_pretty(&row).unwrap() + "\n",
            };
            emit(&cli.out, &content)
        }
        Command::Scan {
            chain,
            n_min,
            n_max,
            k_min,
            k_max,
            delta,
            mode: scan_mode,
            steps,
            seed,
        } => {
            if n_min > n_max || k_min > k_max {
                return Err(Error::InvalidParameter(
                    "empty scan grid: require n_min <= n_max and k_min <= k_max".into(),
                ));
            }
            let kernel = chain.kernel(delta);
            let mut grid = Vec::new();
            for n in n_min..=n_max {
                for k in k_min..=k_max {
                    grid.push((n, k));
                }
            }
            let sm = match scan_mode {
                ScanModeArg::Exact => ScanMode::Exact,
                ScanModeArg::Mc => ScanMode::Mc { steps, seed },
            };
            let report = scaling_scan(kernel, &grid, sm, &opts)?;
            let rows: Vec<GapRow> = report
                .rows
                .iter()
                .map(|r| GapRow::new(&r.report, &r.mode))
                .collect();
            let content = match cli.format {
                Format::Csv => gap_rows_csv(&rows),
                Format::Json => serde_json::to_string_pretty(&rows).unwrap() + "\n",
            };
            emit(&cli.out, &content)
        }
        Command::Simulate {
            chain,
            instance,
            steps,
            seed,
            observable,
            replicas,
            rho_threshold,
            fit_lo,
            max_window,
            trajectory_out,
        } => {
            let kernel = chain.kernel(instance.delta);
            let obs = observable.observable();
            let est_opts = EstimateOptions {
                rho_threshold,
                max_window_fraction: max_window,
                fit_lo_fraction: fit_lo,
            };
            let steps = steps as usize;
            let replicas = replicas as usize;
            let estimate = if replicas == 1 {
                let traj = simulate(kernel, instance.n, instance.k, steps, seed, &obs)?;
                if let Some(path) = &trajectory_out {
                    let mut buf = Vec::new();
                    write_series_csv(&mut buf, &traj.samples).map_err(|e| {
                        Error::InvalidParameter(format!("trajectory write failed: {e}"))
                    })?;
                    std::fs::write(path, buf).map_err(|e| {
                        Error::InvalidParameter(format!("cannot write {}: {e}", path.display()))
                    })?;
                }
                estimate_relaxation_with(&traj, &est_opts)?
            } else {
                if trajectory_out.is_some() {
                    return Err(Error::InvalidParameter(
                        "trajectory output covers single-chain runs only".into(),
                    ));
                }
                replica_relaxation(
                    kernel, instance.n, instance.k, steps, seed, replicas, &obs, &est_opts, mode,
                )?
            };
            let artifact = SimulateArtifact {
                chain: kernel.name(),
                n: instance.n,
                k: instance.k,
                steps,
                seed,
                replicas,
                estimate,
            };
            let content = serde_json::to_string_pretty(&artifact).unwrap() + "\n";
            emit(&cli.out, &content)
        }
        Command::Verify {
            suite,
            n_max,
            delta,
        } => {
            let mut reports: Vec<CheckReport> = Vec::new();
            let identity_cap = n_max.min(6);
            if matches!(suite, SuiteArg::Identities | SuiteArg::All) {
                reports.push(check_inverse_identity(n_max)?);
                reports.push(check_decomposition(n_max)?);
                reports.push(check_pushforward(identity_cap)?);
            }
            if matches!(suite, SuiteArg::Inequalities | SuiteArg::All) {
                reports.extend(standard_inequality_suite(&opts)?);
            }
            if matches!(suite, SuiteArg::BalancedGap | SuiteArg::All) {
                reports.push(check_balanced_gap_bound(n_max, delta, &opts)?);
            }
            if matches!(suite, SuiteArg::RateRatio | SuiteArg::All) {
                reports.push(check_transposition_rate_ratio(4, 9)?);
            }
            if matches!(suite, SuiteArg::Constants | SuiteArg::All) {
                reports.push(check_constant_table(delta)?);
            }
            let mut buf = Vec::new();
            write_check_csv(&mut buf, &reports)
                .map_err(|e| Error::InvalidParameter(format!("report write failed: {e}")))?;
            let content = match cli.format {
                Format::Csv => String::from_utf8(buf).unwrap(),
                Format::Json => serde_json::to_string_pretty(&reports).unwrap() + "\n",
            };
            emit(&cli.out, &content)?;
            eprintln!("{}", summarize(&reports));
            let failures: u64 = reports.iter().map(|r| r.failures.len() as u64).sum();
            if failures > 0 {
                return Err(Error::NotConverged {
                    context: format!("{failures} verification failures"),
                    residual: reports.iter().map(|r| r.max_violation).fold(0.0, f64::max),
                    iterations: 0,
                });
            }
            Ok(())
        }
        Command::Spectrum {
            operator: OperatorArg::Content,
            cards,
            decks,
        } => {
            let spec = content_coupling_spectrum(cards, decks, cli.cap)?;
            let rows: Vec<SpectrumRow> = spec
                .distinct
                .iter()
                .map(|&(value, multiplicity)| SpectrumRow {
                    value,
                    multiplicity,
                })
                .collect();
            let content = match cli.format {
                Format::Csv => spectrum_csv(&rows),
                Format::Json => serde_json::to_string_pretty(&rows).unwrap() + "\n",
            };
            emit(&cli.out, &content)?;
            eprintln!(
                "content states {}, second eigenvalue {}",
                spec.content_states,
                real(spec.lambda2)
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::CapExceeded { .. }) {
                eprintln!("raise --cap to enumerate larger spaces");
            }
            exit_for(&e)
        }
    }
}
