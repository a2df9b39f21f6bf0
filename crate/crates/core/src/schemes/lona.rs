//! Offline generator for the locally optimal non-adaptive (LONA) sequence.
//!
//! The adaptive scheme needs the posterior — and therefore the measurement
//! results — to choose each waiting time. The LONA sequence instead commits
//! to the whole schedule in advance: at step `k` it keeps a weighted ensemble
//! of every outcome branch over the already-chosen multiples (weight =
//! marginal likelihood of that outcome string) and picks the multiple that
//! minimizes the branch-averaged expected posterior variance. No measurement
//! data enters the computation, so the schedule can be generated once and
//! reused; the run-time cost of the scheme is the same as any fixed schedule.
//!
//! The ensemble doubles at each split, so low-weight branches are pruned
//! against a threshold and the survivors renormalized. A hard cap on the
//! branch count turns runaway growth into an error instead of a silent
//! quality degradation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{Outcome, PosteriorCosineSeries};
use crate::schemes::argmin_smallest;

pub const DEFAULT_PRUNE_THRESHOLD: f64 = 1e-6;
pub const DEFAULT_BRANCH_CAP: usize = 1 << 20;

/// Fixed chunking for the parallel branch reduction, so the floating-point
/// summation order (and therefore the output) is independent of thread count.
const BRANCH_CHUNK: usize = 64;

struct Branch {
    posterior: PosteriorCosineSeries,
    weight: f64,
}

/// Sequence plus per-step diagnostics.
#[derive(Debug, Clone)]
pub struct LonaGeneration {
    pub sequence: Vec<u32>,
    /// Surviving branch count after each step's split-and-prune.
    pub branch_counts: Vec<usize>,
    /// Branch weight totals immediately after each renormalization.
    pub weight_sums: Vec<f64>,
    /// Branches dropped by pruning over the whole generation.
    pub pruned_total: u64,
}

/// On-disk form of a generated sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LonaSequenceFile {
    pub omega0: f64,
    pub m_max: u32,
    pub prune_threshold: f64,
    pub sequence: Vec<u32>,
}

/// Generates the first `steps` LONA waiting multiples. Deterministic: no
/// randomness enters anywhere.
pub fn generate_lona_sequence(
    omega0: f64,
    steps: usize,
    m_max: u32,
    prune_threshold: f64,
) -> Result<Vec<u32>> {
    generate_lona_sequence_diagnostic(omega0, steps, m_max, prune_threshold, DEFAULT_BRANCH_CAP)
        .map(|g| g.sequence)
}

/// Full-diagnostics variant with an explicit branch cap.
pub fn generate_lona_sequence_diagnostic(
    omega0: f64,
    steps: usize,
    m_max: u32,
    prune_threshold: f64,
    branch_cap: usize,
) -> Result<LonaGeneration> {
    if steps < 1 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    if m_max < 1 {
        return Err(Error::InvalidParameter("m_max must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&prune_threshold) {
        return Err(Error::InvalidParameter(format!(
            "prune threshold must lie in [0, 1), got {prune_threshold}"
        )));
    }
    if branch_cap < 1 {
        return Err(Error::InvalidParameter("branch cap must be >= 1".into()));
    }

    let mut branches = vec![Branch {
        posterior: PosteriorCosineSeries::uniform_prior(omega0)?,
        weight: 1.0,
    }];
    let mut gen = LonaGeneration {
        sequence: Vec::with_capacity(steps),
        branch_counts: Vec::with_capacity(steps),
        weight_sums: Vec::with_capacity(steps),
        pruned_total: 0,
    };
    // Reflecting ω ↔ ω0−ω maps the posterior of an outcome string onto the
    // posterior of the string with outcomes flipped at odd multiples, with
    // equal weight and equal expected-variance profile. Once an odd multiple
    // enters the schedule every string pairs with a distinct mirror partner,
    // so it suffices to keep one representative per pair carrying the pair's
    // total weight. `folded` notes that this halving is active (each kept
    // entry then stands for two branches of half its weight, which is what
    // the prune threshold applies to).
    let mut folded = false;

    for step in 1..=steps {
        let objective = branch_averaged_scan(&branches, m_max);
        let m_star = argmin_smallest(&objective) as u32 + 1;
        gen.sequence.push(m_star);

        if step == steps {
            // The posteriors after the final multiple are never consulted.
            gen.branch_counts.push(branches.len());
            gen.weight_sums.push(branches.iter().map(|b| b.weight).sum());
            break;
        }

        if !folded && m_star % 2 == 1 && branches.len() == 1 {
            // First odd multiple from the symmetric prior: the two children
            // are mirror images, so keep the "+" child at the full weight.
            let (posterior, _) = branches[0].posterior.bayes_update_weighted(m_star, Outcome::Plus)?;
            branches = vec![Branch {
                posterior,
                weight: branches[0].weight,
            }];
            folded = true;
        } else {
            // In folded mode a representative of weight w stands for two
            // branches of weight w/2 each, so the per-branch prune threshold
            // doubles on representative weights.
            let threshold = if folded { 2.0 * prune_threshold } else { prune_threshold };
            let before_split = branches.len() * 2;
            branches = split_branches(branches, m_star, threshold);
            gen.pruned_total += (before_split - branches.len()) as u64;
        }

        if branches.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "prune threshold {prune_threshold} removed every branch at depth {step}"
            )));
        }
        if branches.len() > branch_cap {
            return Err(Error::BranchCapExceeded {
                step,
                branches: branches.len(),
                cap: branch_cap,
            });
        }

        let total: f64 = branches.iter().map(|b| b.weight).sum();
        for b in &mut branches {
            b.weight /= total;
        }
        gen.branch_counts.push(branches.len());
        gen.weight_sums.push(branches.iter().map(|b| b.weight).sum());
    }

    Ok(gen)
}

/// `Σ_b w_b · E[V_b | m]` for every candidate multiple.
///
/// Chunked so the reduction order is fixed regardless of parallelism.
fn branch_averaged_scan(branches: &[Branch], m_max: u32) -> Vec<f64> {
    let partials: Vec<Vec<f64>> = branches
        .par_chunks(BRANCH_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; m_max as usize];
            for b in chunk {
                let scan = b.posterior.expected_variance_scan(m_max);
                for (a, s) in acc.iter_mut().zip(&scan) {
                    *a += b.weight * s;
                }
            }
            acc
        })
        .collect();

    let mut objective = vec![0.0; m_max as usize];
    for partial in partials {
        for (o, p) in objective.iter_mut().zip(&partial) {
            *o += p;
        }
    }
    objective
}

/// Split every branch on both outcomes of a measurement at `m_star`, dropping
/// children whose weight falls below the prune threshold.
fn split_branches(branches: Vec<Branch>, m_star: u32, prune_threshold: f64) -> Vec<Branch> {
    let chunks: Vec<Vec<Branch>> = branches
        .par_chunks(BRANCH_CHUNK)
        .map(|chunk| {
            let mut out = Vec::with_capacity(chunk.len() * 2);
            for b in chunk {
                for r in [Outcome::Plus, Outcome::Minus] {
                    // A degenerate update means the outcome has no mass on
                    // this branch; that is exactly a zero-weight child.
                    if let Ok((posterior, mass)) = b.posterior.bayes_update_weighted(m_star, r) {
                        let weight = b.weight * mass;
                        if weight >= prune_threshold && weight > 0.0 {
                            out.push(Branch { posterior, weight });
                        }
                    }
                }
            }
            out
        })
        .collect();
    chunks.into_iter().flatten().collect()
}
