//! Waiting-time selection policies.
//!
//! Every estimation scheme answers one question each step: given the history
//! (and, for the adaptive scheme, the current posterior), how many base
//! intervals should the next measurement wait? [`next_waiting_multiple`] is
//! the single dispatch point; the trial loop stays scheme-agnostic.

mod lona;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{Outcome, PosteriorCosineSeries};

pub use lona::{generate_lona_sequence, generate_lona_sequence_diagnostic, LonaGeneration,
               LonaSequenceFile, DEFAULT_BRANCH_CAP, DEFAULT_PRUNE_THRESHOLD};

/// Which waiting-time policy drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeKind {
    /// Uniformly spread waiting times, estimate read off the spectrum peak.
    FourierPartition,
    /// Every measurement at `m = 1`; Bayesian estimate.
    BayesFixedM1,
    /// Uniformly spread waiting times (`m = ⌈k/n⌉`); Bayesian estimate.
    BayesUniform,
    /// Locally optimal adaptive: each step minimizes the expected posterior
    /// variance over `m ∈ 1..=m_max`.
    BayesAdaptive,
    /// Locally optimal non-adaptive: a precomputed offline sequence.
    Lona,
}

/// A scheme plus its parameters.
#[derive(Debug, Clone)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    /// Repetitions per waiting time (Fourier partition and uniform Bayes).
    pub repetitions: u32,
    /// Largest waiting multiple the adaptive search may choose.
    pub m_max: u32,
    /// Precomputed waiting multiples (LONA only). Shared so that cloning a
    /// spec per trial stays cheap.
    pub lona_sequence: Option<Arc<[u32]>>,
}

pub const DEFAULT_M_MAX: u32 = 1000;

impl SchemeSpec {
    pub fn fourier_partition(repetitions: u32) -> Result<Self> {
        Self::with_repetitions(SchemeKind::FourierPartition, repetitions)
    }

    pub fn bayes_fixed_m1() -> Self {
        Self {
            kind: SchemeKind::BayesFixedM1,
            repetitions: 1,
            m_max: DEFAULT_M_MAX,
            lona_sequence: None,
        }
    }

    pub fn bayes_uniform(repetitions: u32) -> Result<Self> {
        Self::with_repetitions(SchemeKind::BayesUniform, repetitions)
    }

    pub fn bayes_adaptive(m_max: u32) -> Result<Self> {
        if m_max < 1 {
            return Err(Error::InvalidParameter("m_max must be >= 1".into()));
        }
        Ok(Self {
            kind: SchemeKind::BayesAdaptive,
            repetitions: 1,
            m_max,
            lona_sequence: None,
        })
    }

    pub fn lona(sequence: Arc<[u32]>) -> Result<Self> {
        if sequence.is_empty() {
            return Err(Error::InvalidParameter(
                "LONA sequence must not be empty".into(),
            ));
        }
        if let Some(&bad) = sequence.iter().find(|&&m| m < 1) {
            return Err(Error::InvalidParameter(format!(
                "LONA sequence contains invalid multiple {bad}"
            )));
        }
        Ok(Self {
            kind: SchemeKind::Lona,
            repetitions: 1,
            m_max: DEFAULT_M_MAX,
            lona_sequence: Some(sequence),
        })
    }

    fn with_repetitions(kind: SchemeKind, repetitions: u32) -> Result<Self> {
        if repetitions < 1 {
            return Err(Error::InvalidParameter(
                "repetitions must be >= 1".into(),
            ));
        }
        Ok(Self {
            kind,
            repetitions,
            m_max: DEFAULT_M_MAX,
            lona_sequence: None,
        })
    }

    /// True for schemes whose estimate is the posterior mean (everything but
    /// the Fourier baseline).
    pub fn is_bayesian(&self) -> bool {
        self.kind != SchemeKind::FourierPartition
    }
}

/// Ordered record of performed measurements: `(waiting multiple, outcome)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    steps: Vec<(u32, Outcome)>,
}

impl MeasurementRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, m: u32, r: Outcome) {
        debug_assert!(m >= 1);
        self.steps.push((m, r));
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[(u32, Outcome)] {
        &self.steps
    }
}

impl FromIterator<(u32, Outcome)> for MeasurementRecord {
    fn from_iter<I: IntoIterator<Item = (u32, Outcome)>>(iter: I) -> Self {
        Self {
            steps: iter.into_iter().collect(),
        }
    }
}

/// Waiting multiple for the upcoming measurement (step `history.len() + 1`).
///
/// The posterior argument is consulted only by the adaptive scheme; passing
/// it unconditionally keeps the trial loop uniform across schemes. Ties in
/// the adaptive search (within 1e−12) resolve to the smallest multiple.
pub fn next_waiting_multiple(
    spec: &SchemeSpec,
    history: &MeasurementRecord,
    posterior: &PosteriorCosineSeries,
) -> Result<u32> {
    let k = history.len() + 1;
    let m = match spec.kind {
        SchemeKind::BayesFixedM1 => 1,
        SchemeKind::BayesUniform | SchemeKind::FourierPartition => {
            let n = spec.repetitions as usize;
            let m = k.div_ceil(n);
            if m > spec.m_max as usize {
                log::warn!(
                    "schedule multiple {m} exceeds m_max={} at step {k}; not clamped",
                    spec.m_max
                );
            }
            m as u32
        }
        SchemeKind::BayesAdaptive => {
            let scan = posterior.expected_variance_scan(spec.m_max);
            argmin_smallest(&scan) as u32 + 1
        }
        SchemeKind::Lona => {
            let seq = spec
                .lona_sequence
                .as_ref()
                .expect("LONA spec constructed without sequence");
            *seq.get(k - 1).ok_or(Error::LonaSequenceExhausted {
                step: k,
                len: seq.len(),
            })?
        }
    };
    Ok(m)
}

/// Index of the smallest value; among values within 1e−12 of the minimum the
/// lowest index wins.
pub(crate) fn argmin_smallest(values: &[f64]) -> usize {
    debug_assert!(!values.is_empty());
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    values
        .iter()
        .position(|&v| v <= min + 1e-12)
        .expect("non-empty scan")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior() -> PosteriorCosineSeries {
        PosteriorCosineSeries::uniform_prior(1.0).unwrap()
    }

    fn history_of_len(len: usize) -> MeasurementRecord {
        (0..len).map(|_| (1, Outcome::Plus)).collect()
    }

    #[test]
    fn fixed_m1_is_constant() {
        let spec = SchemeSpec::bayes_fixed_m1();
        for len in [0, 1, 10, 99] {
            let m = next_waiting_multiple(&spec, &history_of_len(len), &prior()).unwrap();
            assert_eq!(m, 1);
        }
    }

    #[test]
    fn uniform_schedule_is_ceil_k_over_n() {
        // n = 3 gives m = 1,1,1,2,2,2,3,...
        let spec = SchemeSpec::bayes_uniform(3).unwrap();
        let expected = [1, 1, 1, 2, 2, 2, 3, 3, 3, 4];
        for (len, &want) in expected.iter().enumerate() {
            let m = next_waiting_multiple(&spec, &history_of_len(len), &prior()).unwrap();
            assert_eq!(m, want, "step {}", len + 1);
        }
        // Spec example: history length 4 -> next m = 2.
        let m = next_waiting_multiple(&spec, &history_of_len(4), &prior()).unwrap();
        assert_eq!(m, 2);
    }

    #[test]
    fn fourier_uses_same_schedule_as_uniform() {
        let f = SchemeSpec::fourier_partition(2).unwrap();
        let b = SchemeSpec::bayes_uniform(2).unwrap();
        for len in 0..12 {
            let hf = next_waiting_multiple(&f, &history_of_len(len), &prior()).unwrap();
            let hb = next_waiting_multiple(&b, &history_of_len(len), &prior()).unwrap();
            assert_eq!(hf, hb);
        }
    }

    #[test]
    fn adaptive_picks_one_on_uniform_prior() {
        let spec = SchemeSpec::bayes_adaptive(1000).unwrap();
        let m = next_waiting_multiple(&spec, &MeasurementRecord::new(), &prior()).unwrap();
        assert_eq!(m, 1);
    }

    #[test]
    fn adaptive_is_function_of_posterior_only() {
        let spec = SchemeSpec::bayes_adaptive(200).unwrap();
        // Two different histories that produce the same posterior (the
        // posterior passed in is what matters).
        let p = prior().bayes_update(2, Outcome::Plus).unwrap();
        let m1 = next_waiting_multiple(&spec, &history_of_len(1), &p).unwrap();
        let m2 = next_waiting_multiple(&spec, &history_of_len(7), &p).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn lona_reads_sequence_and_errors_when_exhausted() {
        let seq: Arc<[u32]> = vec![1, 1, 2].into();
        let spec = SchemeSpec::lona(seq).unwrap();
        assert_eq!(
            next_waiting_multiple(&spec, &history_of_len(0), &prior()).unwrap(),
            1
        );
        assert_eq!(
            next_waiting_multiple(&spec, &history_of_len(2), &prior()).unwrap(),
            2
        );
        assert!(matches!(
            next_waiting_multiple(&spec, &history_of_len(3), &prior()),
            Err(Error::LonaSequenceExhausted { step: 4, len: 3 })
        ));
    }

    #[test]
    fn constructor_validation() {
        assert!(SchemeSpec::bayes_uniform(0).is_err());
        assert!(SchemeSpec::fourier_partition(0).is_err());
        assert!(SchemeSpec::bayes_adaptive(0).is_err());
        assert!(SchemeSpec::lona(Vec::<u32>::new().into()).is_err());
        assert!(SchemeSpec::lona(vec![1, 0, 2].into()).is_err());
    }

    #[test]
    fn argmin_tie_breaks_to_smallest_index() {
        let vals = [0.5, 0.2, 0.2 + 5e-13, 0.3];
        assert_eq!(argmin_smallest(&vals), 1);
        let vals2 = [0.2 + 5e-13, 0.2, 0.4];
        assert_eq!(argmin_smallest(&vals2), 0);
    }
}
