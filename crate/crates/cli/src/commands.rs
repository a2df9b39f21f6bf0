//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};

use qfreq::analysis::{
    fit_scaling, read_curve_csv, steps_to_threshold, write_curve_csv, CurvePoint, CurveRow,
    FitModel, FitReport,
};
use qfreq::fourier::{best_fourier_curve, PeakRefinement};
use qfreq::schemes::{
    generate_lona_sequence_diagnostic, LonaSequenceFile, SchemeSpec, DEFAULT_BRANCH_CAP,
};
use qfreq::simulator::{sweep_curve, write_trials_jsonl, SweepPoint, TrialConfig};

use crate::util::{
    atomic_write, load_config, parse_fit_range, parse_n_list, parse_n_range, CliError, ConfigFile,
    FitRange, NValues,
};

const DEFAULT_TRIALS: u64 = 1000;
const DEFAULT_SEED: u64 = 1;
const DEFAULT_OMEGA0: f64 = 1.0;
const DEFAULT_M_MAX: u32 = 1000;
const DEFAULT_N_REP: u32 = 1;
const DEFAULT_PRUNE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    /// Uniformly spread waiting times, spectral-peak estimate.
    Fourier,
    /// All measurements at m = 1, Bayesian estimate.
    BayesM1,
    /// Uniformly spread waiting times, Bayesian estimate.
    BayesUniform,
    /// Locally optimal adaptive waiting times.
    Adaptive,
    /// Precomputed locally optimal non-adaptive sequence.
    Lona,
}

impl SchemeArg {
    fn label(self) -> &'static str {
        match self {
            SchemeArg::Fourier => "fourier",
            SchemeArg::BayesM1 => "bayes-m1",
            SchemeArg::BayesUniform => "bayes-uniform",
            SchemeArg::Adaptive => "adaptive",
            SchemeArg::Lona => "lona",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureArg {
    /// Mean squared error of the point estimates.
    Mse,
    /// Across-trial mean of the posterior variance (Bayesian schemes only).
    PosteriorVariance,
}

impl MeasureArg {
    fn label(self) -> &'static str {
        match self {
            MeasureArg::Mse => "mse",
            MeasureArg::PosteriorVariance => "posterior-variance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Power,
    Exp,
}

/// Run Monte Carlo ensembles over a sweep of measurement budgets and write
/// the MSE curve as CSV.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Estimation scheme to simulate.
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    /// Comma-separated measurement budgets, e.g. 5,10,20.
    #[arg(long, value_parser = parse_n_list, group = "budgets", required = true)]
    n_list: Option<NValues>,
    /// Budget range A:B:step (inclusive).
    #[arg(long, value_parser = parse_n_range, group = "budgets")]
    n_range: Option<NValues>,
    /// Trials per ensemble [default: 1000].
    #[arg(long)]
    trials: Option<u64>,
    /// Base RNG seed; trial i uses stream (seed, i) [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Upper bound of the frequency prior [default: 1.0].
    #[arg(long)]
    omega0: Option<f64>,
    /// Largest waiting multiple for the adaptive search [default: 1000].
    #[arg(long)]
    m_max: Option<u32>,
    /// Repetitions per waiting time (fourier / bayes-uniform) [default: 1].
    #[arg(long)]
    n_rep: Option<u32>,
    /// LONA sequence file (required for --scheme lona).
    #[arg(long)]
    lona_file: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Also dump every trial as JSON lines.
    #[arg(long)]
    dump_trials: Option<PathBuf>,
    /// Statistic written to the mse column [default: mse].
    #[arg(long, value_enum)]
    measure: Option<MeasureArg>,
    /// Disable quadratic peak interpolation (fourier scheme).
    #[arg(long)]
    raw_peak: bool,
    /// Emit a gnuplot stub referencing the CSV.
    #[arg(long)]
    plot_script: Option<PathBuf>,
    /// TOML/JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

struct Resolved {
    trials: u64,
    seed: u64,
    omega0: f64,
    m_max: u32,
    n_rep: u32,
}

fn resolve(
    config: &Option<PathBuf>,
    trials: Option<u64>,
    seed: Option<u64>,
    omega0: Option<f64>,
    m_max: Option<u32>,
    n_rep: Option<u32>,
) -> Result<Resolved, CliError> {
    let file: ConfigFile = match config {
        Some(path) => load_config(path)?,
        None => ConfigFile::default(),
    };
    let resolved = Resolved {
        trials: trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        omega0: omega0.or(file.omega0).unwrap_or(DEFAULT_OMEGA0),
        m_max: m_max.or(file.m_max).unwrap_or(DEFAULT_M_MAX),
        n_rep: n_rep.or(file.n_rep).unwrap_or(DEFAULT_N_REP),
    };
    if resolved.trials < 1 {
        return Err(CliError::Config("trials must be >= 1".into()));
    }
    if !(resolved.omega0 > 0.0) || !resolved.omega0.is_finite() {
        return Err(CliError::Config("omega0 must be positive".into()));
    }
    if resolved.m_max < 1 || resolved.n_rep < 1 {
        return Err(CliError::Config("m-max and n-rep must be >= 1".into()));
    }
    Ok(resolved)
}

fn load_lona_scheme(
    path: &Option<PathBuf>,
    omega0: f64,
    max_budget: usize,
) -> Result<SchemeSpec, CliError> {
    let path = path
        .as_ref()
        .ok_or_else(|| CliError::Config("--scheme lona requires --lona-file".into()))?;
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let file: LonaSequenceFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if (file.omega0 - omega0).abs() > 1e-9 * omega0 {
        return Err(CliError::Config(format!(
            "LONA file was generated for omega0 = {}, run requested {}",
            file.omega0, omega0
        )));
    }
    if file.sequence.len() < max_budget {
        return Err(CliError::Config(format!(
            "LONA sequence holds {} multiples but the largest budget is {max_budget}",
            file.sequence.len()
        )));
    }
    Ok(SchemeSpec::lona(file.sequence.into())?)
}

pub fn run_cmd(args: RunArgs) -> Result<(), CliError> {
    let r = resolve(
        &args.config,
        args.trials,
        args.seed,
        args.omega0,
        args.m_max,
        args.n_rep,
    )?;
    let budgets = args
        .n_list
        .or(args.n_range)
        .expect("clap enforces the budgets group")
        .0;
    let measure = args.measure.unwrap_or(MeasureArg::Mse);

    let scheme = match args.scheme {
        SchemeArg::Fourier => SchemeSpec::fourier_partition(r.n_rep)?,
        SchemeArg::BayesM1 => SchemeSpec::bayes_fixed_m1(),
        SchemeArg::BayesUniform => SchemeSpec::bayes_uniform(r.n_rep)?,
        SchemeArg::Adaptive => SchemeSpec::bayes_adaptive(r.m_max)?,
        SchemeArg::Lona => load_lona_scheme(&args.lona_file, r.omega0, *budgets.last().unwrap())?,
    };
    if args.scheme == SchemeArg::Fourier && measure == MeasureArg::PosteriorVariance {
        return Err(CliError::Config(
            "the fourier scheme has no posterior variance; use --measure mse".into(),
        ));
    }

    let base = TrialConfig {
        omega0: r.omega0,
        steps: *budgets.last().unwrap(),
        scheme,
        seed: r.seed,
        trial_index: 0,
        peak: if args.raw_peak {
            PeakRefinement::RawBin
        } else {
            PeakRefinement::Quadratic
        },
    };
    let sweep = sweep_curve(&base, &budgets, r.trials)?;

    let rows: Vec<CurveRow> = sweep
        .points
        .iter()
        .map(|p| {
            let (value, se) = match measure {
                MeasureArg::Mse => (p.mse, p.standard_error),
                MeasureArg::PosteriorVariance => (
                    p.mean_posterior_variance.expect("bayesian scheme"),
                    p.posterior_variance_se.expect("bayesian scheme"),
                ),
            };
            CurveRow {
                n: p.n,
                mse: value,
                standard_error: se,
                trials: p.trials,
                scheme: args.scheme.label().to_string(),
                seed: r.seed,
            }
        })
        .collect();

    let comments = vec![
        format!("seed: {}", r.seed),
        format!(
            "scheme={} omega0={} m-max={} n-rep={} trials={} measure={} raw-peak={}",
            args.scheme.label(),
            r.omega0,
            r.m_max,
            r.n_rep,
            r.trials,
            measure.label(),
            args.raw_peak
        ),
    ];
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, &rows, &comments).map_err(CliError::from)?;
    atomic_write(&args.out, &buf)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());

    if let Some(dump) = &args.dump_trials {
        let mut buf = Vec::new();
        write_trials_jsonl(&mut buf, &sweep.results).map_err(CliError::from)?;
        atomic_write(dump, &buf)?;
        println!("dumped {} trials to {}", sweep.results.len(), dump.display());
    }
    if let Some(script) = &args.plot_script {
        let text = format!(
            "# gnuplot stub; run: gnuplot -p {}\n\
             set datafile separator ','\n\
             set logscale y\n\
             set xlabel 'N'\n\
             set ylabel '{}'\n\
             plot '{}' using 1:2:3 with yerrorlines title '{}'\n",
            script.display(),
            measure.label(),
            args.out.display(),
            args.scheme.label()
        );
        atomic_write(script, text.as_bytes())?;
        println!("wrote plot stub to {}", script.display());
    }
    Ok(())
}

/// Generate the locally optimal non-adaptive waiting-time sequence offline.
#[derive(Debug, Args)]
pub struct LonaArgs {
    /// Number of sequence entries to generate.
    #[arg(long)]
    steps: usize,
    /// Largest candidate waiting multiple.
    #[arg(long, default_value_t = DEFAULT_M_MAX)]
    m_max: u32,
    /// Drop outcome branches lighter than this weight.
    #[arg(long, default_value_t = DEFAULT_PRUNE)]
    prune: f64,
    /// Upper bound of the frequency prior.
    #[arg(long, default_value_t = DEFAULT_OMEGA0)]
    omega0: f64,
    /// Abort if the branch ensemble outgrows this cap.
    #[arg(long, default_value_t = DEFAULT_BRANCH_CAP)]
    branch_cap: usize,
    /// Write the sequence file here (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn lona_cmd(args: LonaArgs) -> Result<(), CliError> {
    let gen = generate_lona_sequence_diagnostic(
        args.omega0,
        args.steps,
        args.m_max,
        args.prune,
        args.branch_cap,
    )?;
    let file = LonaSequenceFile {
        omega0: args.omega0,
        m_max: args.m_max,
        prune_threshold: args.prune,
        sequence: gen.sequence,
    };
    let mut json = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    json.push('\n');
    println!("{json}");
    if let Some(out) = &args.out {
        atomic_write(out, json.as_bytes())?;
        eprintln!("wrote {} multiples to {}", file.sequence.len(), out.display());
    }
    Ok(())
}

/// Fit a power-law or exponential scaling model to a results CSV.
#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV (written by `run`).
    #[arg(long)]
    input: PathBuf,
    /// Scaling model.
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Restrict the fit to N in A:B (inclusive) [default: all rows].
    #[arg(long, value_parser = parse_fit_range)]
    range: Option<FitRange>,
    /// Write the fit report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn fit_cmd(args: FitArgs) -> Result<(), CliError> {
    let file = fs::File::open(&args.input)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.input.display())))?;
    let mut rows = read_curve_csv(file)?;
    rows.sort_by_key(|r| r.n);
    let points: Vec<CurvePoint> = rows.iter().map(CurveRow::point).collect();

    let range = match args.range {
        Some(FitRange(a, b)) => (a, b),
        None => (points.first().unwrap().n, points.last().unwrap().n),
    };
    let model = match args.model {
        ModelArg::Power => FitModel::Power,
        ModelArg::Exp => FitModel::Exponential,
    };
    let fit = fit_scaling(&points, model, range)?;
    println!(
        "model={} rate={:.6} ci=[{:.6}, {:.6}] r_squared={:.6} range=[{}, {}] coefficient={:.6e}",
        fit.model.as_str(),
        fit.rate,
        fit.ci_low,
        fit.ci_high,
        fit.r_squared,
        fit.fit_range.0,
        fit.fit_range.1,
        fit.coefficient
    );
    if let Some(report) = &args.report {
        let doc: FitReport = fit.into();
        let mut json = serde_json::to_string_pretty(&doc)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        json.push('\n');
        atomic_write(report, json.as_bytes())?;
        println!("wrote report to {}", report.display());
    }
    Ok(())
}

/// Run every scheme and tabulate the steps needed to reach the target
/// variance thresholds.
#[derive(Debug, Args)]
pub struct Table1Args {
    /// Trials per scheme [default: 2000].
    #[arg(long)]
    trials: Option<u64>,
    /// Base RNG seed [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Upper bound of the frequency prior [default: 1.0].
    #[arg(long)]
    omega0: Option<f64>,
    /// Largest waiting multiple for the adaptive search [default: 1000].
    #[arg(long)]
    m_max: Option<u32>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Also evaluate the 1e-5 threshold over extended budgets.
    #[arg(long)]
    deep: bool,
    /// Reuse a pregenerated LONA sequence file instead of generating one.
    #[arg(long)]
    lona_file: Option<PathBuf>,
    /// LONA sequence length when generating here.
    #[arg(long, default_value_t = 32)]
    lona_steps: usize,
    /// LONA branch prune threshold when generating here.
    #[arg(long, default_value_t = DEFAULT_PRUNE)]
    lona_prune: f64,
    /// TOML/JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

struct TableRow {
    scheme: &'static str,
    to_1e3: Option<usize>,
    to_1e5: Option<usize>,
}

/// Bayesian rows are judged on the across-trial mean posterior variance (the
/// lower-noise estimator of the same quantity as the MSE); the Fourier row
/// has no posterior and is judged on MSE.
fn threshold_row(
    scheme: &'static str,
    points: &[SweepPoint],
    use_posterior_variance: bool,
    deep: bool,
) -> TableRow {
    let curve: Vec<CurvePoint> = points
        .iter()
        .map(|p| CurvePoint {
            n: p.n,
            mse: if use_posterior_variance {
                p.mean_posterior_variance.expect("bayesian scheme")
            } else {
                p.mse
            },
            standard_error: p.standard_error,
            trials: p.trials,
        })
        .collect();
    TableRow {
        scheme,
        to_1e3: steps_to_threshold(&curve, 1e-3),
        to_1e5: deep.then(|| steps_to_threshold(&curve, 1e-5)).flatten(),
    }
}

pub fn table1_cmd(args: Table1Args) -> Result<(), CliError> {
    let r = resolve(&args.config, args.trials, args.seed, args.omega0, args.m_max, None)?;
    let trials = if args.trials.is_none() && args.config.is_none() {
        2000
    } else {
        r.trials
    };
    let deep = args.deep;
    let mut rows: Vec<TableRow> = Vec::with_capacity(5);

    let sweep_for = |scheme: SchemeSpec, budgets: &[usize]| -> Result<Vec<SweepPoint>, CliError> {
        let base = TrialConfig {
            omega0: r.omega0,
            steps: *budgets.last().unwrap(),
            scheme,
            seed: r.seed,
            trial_index: 0,
            peak: PeakRefinement::Quadratic,
        };
        Ok(sweep_curve(&base, budgets, trials)?.points)
    };

    // Bayesian n = N (every measurement at m = 1).
    let budgets: Vec<usize> = (1..=if deep { 2500 } else { 400 }).collect();
    let points = sweep_for(SchemeSpec::bayes_fixed_m1(), &budgets)?;
    rows.push(threshold_row("bayes-m1", &points, true, deep));
    eprintln!("bayes-m1 done");

    // Best Fourier over the partition choices, on multiples of 6.
    let top = if deep { 300 } else { 150 };
    let budgets: Vec<usize> = (1..=top / 6).map(|i| 6 * i).collect();
    let points = best_fourier_curve(r.omega0, &budgets, trials, r.seed)?;
    rows.push(threshold_row("fourier", &points, false, deep));
    eprintln!("fourier done");

    // Bayesian n = 1 (m = 1, 2, 3, ...).
    let budgets: Vec<usize> = (1..=if deep { 90 } else { 75 }).collect();
    let points = sweep_for(SchemeSpec::bayes_uniform(1)?, &budgets)?;
    rows.push(threshold_row("bayes-n1", &points, true, deep));
    eprintln!("bayes-n1 done");

    // LONA.
    let sequence = match &args.lona_file {
        Some(_) => {
            let spec = load_lona_scheme(&args.lona_file, r.omega0, 1)?;
            spec.lona_sequence.expect("lona spec").to_vec()
        }
        None => {
            eprintln!(
                "generating LONA sequence ({} steps, prune {:.0e})...",
                args.lona_steps, args.lona_prune
            );
            generate_lona_sequence_diagnostic(
                r.omega0,
                args.lona_steps,
                r.m_max,
                args.lona_prune,
                DEFAULT_BRANCH_CAP,
            )?
            .sequence
        }
    };
    let budgets: Vec<usize> = (1..=sequence.len()).collect();
    let points = sweep_for(SchemeSpec::lona(sequence.into())?, &budgets)?;
    rows.push(threshold_row("lona", &points, true, deep));
    eprintln!("lona done");

    // Locally optimal adaptive.
    let budgets: Vec<usize> = (1..=50).collect();
    let points = sweep_for(SchemeSpec::bayes_adaptive(r.m_max)?, &budgets)?;
    rows.push(threshold_row("adaptive", &points, true, deep));
    eprintln!("adaptive done");

    // Emit in the published order.
    let fmt_cell = |v: Option<usize>| v.map_or("not_reached".to_string(), |n| n.to_string());
    let mut out = String::new();
    writeln!(out, "# seed: {}", r.seed).unwrap();
    writeln!(
        out,
        "# trials={trials} omega0={} m-max={} measure=posterior-variance (mse for fourier)",
        r.omega0, r.m_max
    )
    .unwrap();
    if deep {
        writeln!(out, "scheme,steps_to_1e-3,steps_to_1e-5").unwrap();
    } else {
        writeln!(out, "scheme,steps_to_1e-3").unwrap();
    }
    for row in &rows {
        if deep {
            writeln!(out, "{},{},{}", row.scheme, fmt_cell(row.to_1e3), fmt_cell(row.to_1e5))
                .unwrap();
        } else {
            writeln!(out, "{},{}", row.scheme, fmt_cell(row.to_1e3)).unwrap();
        }
    }
    atomic_write(&args.out, out.as_bytes())?;

    println!("{:<12} {:>14} {:>14}", "scheme", "steps to 1e-3", if deep { "steps to 1e-5" } else { "" });
    for row in &rows {
        println!(
            "{:<12} {:>14} {:>14}",
            row.scheme,
            fmt_cell(row.to_1e3),
            if deep { fmt_cell(row.to_1e5) } else { String::new() }
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
