//! Ground-truth physics and the Monte Carlo trial loop.
//!
//! A trial draws the true frequency uniformly from `[0, ω0]`, then runs the
//! configured scheme for `N` steps: ask the policy for the next waiting
//! multiple, sample the measurement outcome with `p(+|ω) = cos²(πωm/2ω0)`,
//! and (for Bayesian schemes) fold the outcome into the posterior.
//!
//! Reproducibility contract: every trial owns an RNG stream derived from
//! `(seed, trial_index)`, so an ensemble is a pure function of its
//! configuration no matter how trials are scheduled across threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::{build_signal, estimate_omega_fourier_with, PeakRefinement};
use crate::posterior::{Outcome, PosteriorCosineSeries};
use crate::schemes::{next_waiting_multiple, MeasurementRecord, SchemeSpec};

/// Everything a single trial needs.
#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub omega0: f64,
    /// Number of measurements N.
    pub steps: usize,
    pub scheme: SchemeSpec,
    pub seed: u64,
    pub trial_index: u64,
    /// Peak readout mode for Fourier-scheme estimates.
    pub peak: PeakRefinement,
}

/// Outcome of one simulated run.
#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub true_omega: f64,
    pub estimate: f64,
    pub squared_error: f64,
    /// Posterior variance after each step; empty for pure-Fourier trials.
    pub variance_trace: Vec<f64>,
    /// Posterior mean after each step; empty for pure-Fourier trials.
    pub mean_trace: Vec<f64>,
    pub record: MeasurementRecord,
}

/// Per-trial RNG stream: one ChaCha stream per `(seed, trial_index)` pair,
/// independent of worker count and scheduling.
pub fn trial_rng(seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

/// Uniform draw of the true frequency over `[0, ω0]`.
pub fn sample_true_omega<R: Rng>(rng: &mut R, omega0: f64) -> f64 {
    rng.gen::<f64>() * omega0
}

/// One projective measurement: `+` with probability `cos²(πωm/2ω0)`.
pub fn sample_outcome<R: Rng>(rng: &mut R, true_omega: f64, m: u32, omega0: f64) -> Outcome {
    let phase = std::f64::consts::PI * true_omega * f64::from(m) / (2.0 * omega0);
    let p_plus = phase.cos().powi(2);
    if rng.gen::<f64>() < p_plus {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}

/// Runs one trial. Deterministic given `(seed, trial_index)`.
pub fn run_trial(config: &TrialConfig) -> Result<TrialResult> {
    if config.steps < 1 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    let mut rng = trial_rng(config.seed, config.trial_index);
    let true_omega = sample_true_omega(&mut rng, config.omega0);

    let bayesian = config.scheme.is_bayesian();
    let mut posterior = PosteriorCosineSeries::uniform_prior(config.omega0)?;
    let mut record = MeasurementRecord::new();
    let mut variance_trace = Vec::with_capacity(if bayesian { config.steps } else { 0 });
    let mut mean_trace = Vec::with_capacity(if bayesian { config.steps } else { 0 });

    for step in 1..=config.steps {
        let attach = |e: Error| Error::TrialFailed {
            trial: config.trial_index,
            step,
            source: Box::new(e),
        };
        let m = next_waiting_multiple(&config.scheme, &record, &posterior).map_err(attach)?;
        let r = sample_outcome(&mut rng, true_omega, m, config.omega0);
        record.push(m, r);
        if bayesian {
            posterior = posterior.bayes_update(m, r).map_err(attach)?;
            variance_trace.push(posterior.variance());
            mean_trace.push(posterior.mean());
        }
    }

    let estimate = if bayesian {
        posterior.mean()
    } else {
        let signal = build_signal(&record, config.scheme.repetitions)?;
        estimate_omega_fourier_with(&signal, config.omega0, config.peak)?.omega
    };

    Ok(TrialResult {
        true_omega,
        estimate,
        squared_error: (estimate - true_omega).powi(2),
        variance_trace,
        mean_trace,
        record,
    })
}

/// An ensemble of trials plus its headline statistics.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub results: Vec<TrialResult>,
    /// Mean squared error of the final estimates.
    pub mse: f64,
    /// Standard error of the MSE (sample std of squared errors / √trials).
    pub mse_standard_error: f64,
    /// Across-trial mean of the per-step posterior variance; empty for
    /// Fourier ensembles.
    pub mean_variance_trace: Vec<f64>,
}

/// Runs `trials` independent trials with `trial_index = 0..trials`.
///
/// Trials execute in parallel; results come back ordered by index, and the
/// whole ensemble is reproducible from `(base, trials)` alone.
pub fn run_ensemble(base: &TrialConfig, trials: u64) -> Result<EnsembleResult> {
    if trials < 1 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let results: Vec<TrialResult> = (0..trials)
        .into_par_iter()
        .map(|trial_index| {
            run_trial(&TrialConfig {
                trial_index,
                scheme: base.scheme.clone(),
                ..*base
            })
        })
        .collect::<Result<_>>()?;

    let (mse, mse_standard_error) = mean_and_standard_error(results.iter().map(|r| r.squared_error));

    let mean_variance_trace = if results[0].variance_trace.is_empty() {
        Vec::new()
    } else {
        let steps = results[0].variance_trace.len();
        let mut acc = vec![0.0; steps];
        for r in &results {
            for (a, v) in acc.iter_mut().zip(&r.variance_trace) {
                *a += v;
            }
        }
        let t = results.len() as f64;
        acc.iter_mut().for_each(|a| *a /= t);
        acc
    };

    Ok(EnsembleResult {
        results,
        mse,
        mse_standard_error,
        mean_variance_trace,
    })
}

/// One N-checkpoint of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub n: usize,
    pub mse: f64,
    pub standard_error: f64,
    /// Across-trial mean (and standard error) of the posterior variance at
    /// this step; `None` for Fourier sweeps.
    pub mean_posterior_variance: Option<f64>,
    pub posterior_variance_se: Option<f64>,
    pub trials: u64,
}

/// A sweep's curve plus the underlying trials (for raw dumps).
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub points: Vec<SweepPoint>,
    pub results: Vec<TrialResult>,
}

/// MSE (and posterior-variance) curve over several measurement budgets from
/// a single ensemble.
///
/// Every scheme here chooses its waiting times from the history alone, so a
/// trial truncated to `N` steps is exactly the prefix of the same trial run
/// longer. One ensemble at `max(checkpoints)` therefore yields the identical
/// statistics to re-running per checkpoint, at a fraction of the cost. For
/// the Fourier scheme the prefix record is re-estimated at each checkpoint
/// (each must be a multiple of the repetition count).
pub fn sweep_curve(base: &TrialConfig, checkpoints: &[usize], trials: u64) -> Result<SweepOutput> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidParameter("no checkpoints given".into()));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints[0] < 1 {
        return Err(Error::InvalidParameter(
            "checkpoints must be strictly increasing and >= 1".into(),
        ));
    }
    let max_n = *checkpoints.last().unwrap();
    let bayesian = base.scheme.is_bayesian();
    if !bayesian {
        let n = base.scheme.repetitions as usize;
        if let Some(&bad) = checkpoints.iter().find(|&&c| c % n != 0) {
            return Err(Error::InvalidParameter(format!(
                "checkpoint {bad} is not a multiple of the repetition count {n}"
            )));
        }
    }

    let full = TrialConfig {
        steps: max_n,
        scheme: base.scheme.clone(),
        ..*base
    };
    let ensemble = run_ensemble(&full, trials)?;

    // Per-trial squared error (and posterior variance) at each checkpoint.
    let columns: Vec<Vec<(f64, f64)>> = ensemble
        .results
        .par_iter()
        .map(|trial| -> Result<Vec<(f64, f64)>> {
            let mut row = Vec::with_capacity(checkpoints.len());
            for &ck in checkpoints {
                if bayesian {
                    let est = trial.mean_trace[ck - 1];
                    let sq = (est - trial.true_omega).powi(2);
                    row.push((sq, trial.variance_trace[ck - 1]));
                } else {
                    let prefix: MeasurementRecord =
                        trial.record.steps()[..ck].iter().copied().collect();
                    let signal = build_signal(&prefix, base.scheme.repetitions)?;
                    let est =
                        estimate_omega_fourier_with(&signal, base.omega0, base.peak)?.omega;
                    row.push(((est - trial.true_omega).powi(2), 0.0));
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let points = checkpoints
        .iter()
        .enumerate()
        .map(|(i, &ck)| {
            let (mse, se) = mean_and_standard_error(columns.iter().map(|row| row[i].0));
            let (pv, pv_se) = mean_and_standard_error(columns.iter().map(|row| row[i].1));
            SweepPoint {
                n: ck,
                mse,
                standard_error: se,
                mean_posterior_variance: bayesian.then_some(pv),
                posterior_variance_se: bayesian.then_some(pv_se),
                trials,
            }
        })
        .collect();
    Ok(SweepOutput {
        points,
        results: ensemble.results,
    })
}

/// Sample mean and standard error of the mean (0 for a single value).
pub fn mean_and_standard_error(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    assert!(n > 0);
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let std = (ss / (n - 1) as f64).sqrt();
    (mean, std / (n as f64).sqrt())
}

/// Writes one JSON document per trial, one per line.
pub fn write_trials_jsonl<W: Write>(mut writer: W, results: &[TrialResult]) -> std::io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
