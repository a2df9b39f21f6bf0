//! Exact Bayesian posterior over the qubit frequency, represented as a finite
//! Fourier cosine series.
//!
//! The density over `ω ∈ [0, ω0]` is stored as coefficients `c[0..=K]` with
//!
//! ```text
//! P(ω) = ½·c[0] + Σ_{q=1..K} c[q]·cos(qπω/ω0)
//! ```
//!
//! A measurement with waiting multiple `m` and outcome `r ∈ {+1, -1}` has
//! likelihood proportional to `1 + r·cos(mπω/ω0)`, so a Bayes update is a
//! two-tap convolution in coefficient space and the representation stays
//! exact: after updates with multiples `m_1..m_k` the highest harmonic is
//! exactly `K = Σ m_j`. First and second moments have closed forms in the
//! coefficients, which is what makes the expected-posterior-variance search
//! over candidate waiting times affordable.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Counts how often a numerically negative variance was clamped to zero.
static NEGATIVE_VARIANCE_CLAMPS: AtomicU64 = AtomicU64::new(0);

/// Outcome of a single fixed-basis measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    /// The "+" result, `r = +1`.
    Plus,
    /// The "-" result, `r = -1`.
    Minus,
}

impl Outcome {
    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    pub fn sign_i8(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Self> {
        match sign {
            1 => Some(Outcome::Plus),
            -1 => Some(Outcome::Minus),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }
}

// On the wire an outcome is the integer +1 / -1.
impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_i8(self.sign_i8())
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = i8::deserialize(deserializer)?;
        Outcome::from_sign(raw).ok_or_else(|| D::Error::custom("outcome must be +1 or -1"))
    }
}

/// Exact posterior `P(ω | r_1..r_k)` as a finite cosine series.
///
/// The series is kept normalized (`c[0] = 2/ω0`, so the density integrates
/// to one) after every update. All moment formulas divide by `c[0]`, so they
/// are insensitive to that convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorCosineSeries {
    omega0: f64,
    coeffs: Vec<f64>,
}

impl PosteriorCosineSeries {
    /// The uniform prior `P(ω) = 1/ω0` on `[0, ω0]`: a single coefficient
    /// `c[0] = 2/ω0`.
    pub fn uniform_prior(omega0: f64) -> Result<Self> {
        if !(omega0 > 0.0) || !omega0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "omega0 must be positive and finite, got {omega0}"
            )));
        }
        Ok(Self {
            omega0,
            coeffs: vec![2.0 / omega0],
        })
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Highest harmonic index `K`. Equals the sum of all waiting multiples
    /// applied so far.
    pub fn max_harmonic(&self) -> usize {
        self.coeffs.len() - 1
    }

    #[inline]
    fn coeff_or_zero(&self, q: usize) -> f64 {
        self.coeffs.get(q).copied().unwrap_or(0.0)
    }

    /// Probability of observing outcome `r` if the next measurement waits
    /// `m` base intervals: `½·(1 + r·c[m]/c[0])`.
    pub fn outcome_probability(&self, m: u32, r: Outcome) -> Result<f64> {
        if m < 1 {
            return Err(Error::InvalidParameter(
                "waiting multiple must be >= 1".into(),
            ));
        }
        let ratio = self.coeff_or_zero(m as usize) / self.coeffs[0];
        Ok(0.5 * (1.0 + r.sign() * ratio))
    }

    /// Bayes update for one measurement: multiply by `1 + r·cos(mπω/ω0)` and
    /// renormalize.
    ///
    /// In coefficient space (folding negative indices by evenness and
    /// treating indices beyond `K` as zero):
    ///
    /// ```text
    /// c'[q] = c[q] + (r/2)·( c[|q−m|] + c[q+m] )
    /// ```
    ///
    /// The new highest harmonic is `K + m`.
    pub fn bayes_update(&self, m: u32, r: Outcome) -> Result<Self> {
        let (series, _mass) = self.bayes_update_weighted(m, r)?;
        Ok(series)
    }

    /// As [`bayes_update`](Self::bayes_update), additionally returning the
    /// normalization mass: the probability of the observed outcome given the
    /// prior series. This is the `c_k(0|r)` weight (up to the shared `2·c[0]`
    /// factor) that the expected-variance formula needs.
    pub fn bayes_update_weighted(&self, m: u32, r: Outcome) -> Result<(Self, f64)> {
        if m < 1 {
            return Err(Error::InvalidParameter(
                "waiting multiple must be >= 1".into(),
            ));
        }
        let m = m as usize;
        let k_new = self.max_harmonic() + m;
        let half_r = 0.5 * r.sign();
        let mut coeffs = Vec::with_capacity(k_new + 1);
        for q in 0..=k_new {
            let down = q.abs_diff(m);
            let folded = self.coeff_or_zero(down) + self.coeff_or_zero(q + m);
            coeffs.push(self.coeff_or_zero(q) + half_r * folded);
        }
        debug_assert_eq!(coeffs.len(), k_new + 1);

        // Outcome probability = c'[0] / (2·c[0]); must be positive or the
        // recorded outcome was impossible under this prior.
        let mass = coeffs[0] / (2.0 * self.coeffs[0]);
        if !(mass > 0.0) {
            return Err(Error::DegenerateUpdate {
                m: m as u32,
                outcome: r.sign_i8(),
                mass,
            });
        }

        let mut series = Self {
            omega0: self.omega0,
            coeffs,
        };
        series.normalize();
        Ok((series, mass))
    }

    /// Rescale so that `c[0] = 2/ω0`. Exactly idempotent: renormalizing a
    /// normalized series multiplies every coefficient by 1.0.
    fn normalize(&mut self) {
        let scale = (2.0 / self.omega0) / self.coeffs[0];
        for c in &mut self.coeffs {
            *c *= scale;
        }
    }

    /// Density at a single frequency, by Clenshaw recurrence on
    /// `cos(qθ) = T_q(cos θ)`.
    pub fn density(&self, omega: f64) -> f64 {
        let x = (PI * omega / self.omega0).cos();
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for q in (1..self.coeffs.len()).rev() {
            let b = self.coeffs[q] + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b;
        }
        0.5 * self.coeffs[0] + x * b1 - b2
    }

    /// Weighted coefficient sums shared by the moment formulas:
    /// `s_var = Σ c[q]·(−1)^q/q²` and `s_mean = Σ c[q]·[(−1)^q − 1]/q²`.
    fn moment_sums(&self) -> (f64, f64) {
        let mut s_mean = 0.0;
        let mut s_var = 0.0;
        for (q, &c) in self.coeffs.iter().enumerate().skip(1) {
            let inv = 1.0 / (q as f64 * q as f64);
            if q & 1 == 1 {
                s_var -= c * inv;
                s_mean -= 2.0 * c * inv;
            } else {
                s_var += c * inv;
            }
        }
        (s_mean, s_var)
    }

    /// Posterior mean `⟨ω⟩ = ω0/2 + Σ 2c[q]·ω0·[(−1)^q − 1] / (c[0]·(qπ)²)`.
    ///
    /// Derivation: `∫₀^{ω0} ω·cos(qπω/ω0) dω = ω0²[(−1)^q − 1]/(qπ)²`, and
    /// the normalization mass is `½·c[0]·ω0`. In the point-mass limit
    /// (`c[q] → c[0]·cos(qπω*/ω0)`) the sum telescopes to exactly `ω*`.
    pub fn mean(&self) -> f64 {
        let (s_mean, _) = self.moment_sums();
        0.5 * self.omega0 + 2.0 * self.omega0 * s_mean / (self.coeffs[0] * PI * PI)
    }

    /// Posterior variance `⟨ω²⟩ − ⟨ω⟩²` with
    /// `⟨ω²⟩ = ω0²/3 + Σ 4c[q]·ω0²·(−1)^q / (c[0]·(qπ)²)`.
    ///
    /// Rounding can drive the difference a hair below zero for sharply
    /// concentrated posteriors; such values are clamped to 0 and counted.
    pub fn variance(&self) -> f64 {
        let (s_mean, s_var) = self.moment_sums();
        let v = self.variance_from_sums(self.coeffs[0], s_mean, s_var);
        if v < 0.0 {
            NEGATIVE_VARIANCE_CLAMPS.fetch_add(1, Ordering::Relaxed);
            return 0.0;
        }
        v
    }

    #[inline]
    fn variance_from_sums(&self, c0: f64, s_mean: f64, s_var: f64) -> f64 {
        let w0 = self.omega0;
        let mean = 0.5 * w0 + 2.0 * w0 * s_mean / (c0 * PI * PI);
        let second = w0 * w0 / 3.0 + 4.0 * w0 * w0 * s_var / (c0 * PI * PI);
        second - mean * mean
    }

    /// Expected posterior variance after a measurement at multiple `m`,
    /// marginalized over the unknown outcome:
    ///
    /// ```text
    /// E[V|m] = ( c(0|+)·V₊ + c(0|−)·V₋ ) / ( c(0|+) + c(0|−) )
    /// ```
    ///
    /// where `c(0|r)` are the pre-normalization zeroth coefficients of the
    /// two candidate updates (proportional to the outcome probabilities).
    /// Never exceeds the current variance by more than rounding noise.
    pub fn expected_posterior_variance(&self, m: u32) -> Result<f64> {
        if m < 1 {
            return Err(Error::InvalidParameter(
                "waiting multiple must be >= 1".into(),
            ));
        }
        let m = m as usize;
        let tables = EvTables::build(self, m);
        Ok(self.ev_for_multiple(m, &tables))
    }

    /// Expected posterior variance for every candidate multiple `1..=m_max`,
    /// sharing the weight tables across candidates. `scan[m-1]` is bit-equal
    /// to `expected_posterior_variance(m)`.
    pub fn expected_variance_scan(&self, m_max: u32) -> Vec<f64> {
        let m_max = m_max as usize;
        if m_max == 0 {
            return Vec::new();
        }
        let tables = EvTables::build(self, m_max);
        (1..=m_max).map(|m| self.ev_for_multiple(m, &tables)).collect()
    }

    /// One candidate multiple of the expected-variance search.
    ///
    /// The branch coefficient sums are assembled by scattering each prior
    /// coefficient `c[j]` onto the harmonics it reaches after the two-tap
    /// convolution (`q = m±j` and `q = j−m`), which costs O(K) per candidate
    /// independent of `m`.
    fn ev_for_multiple(&self, m: usize, tables: &EvTables) -> f64 {
        let c = &self.coeffs;
        let k = c.len() - 1;
        let w = &tables.weight;

        // Scatter each prior coefficient onto the harmonics it reaches after
        // the two-tap convolution. `w[0] = [0, 0]`, so the j = m collision
        // (which would land on the weightless q = 0 harmonic) drops out
        // without a branch.
        let mut t_var = c[0] * w[m][0];
        let mut t_mean = c[0] * w[m][1];
        for j in 1..=k {
            let cj = c[j];
            let up = w[m + j];
            let down = w[m.abs_diff(j)];
            t_var += cj * (up[0] + down[0]);
            t_mean += cj * (up[1] + down[1]);
        }

        let c0 = c[0];
        let cm = self.coeff_or_zero(m);
        let v_cap = 0.25 * self.omega0 * self.omega0;
        let mut acc = 0.0;
        for r in [1.0_f64, -1.0] {
            // Pre-normalization weight of this outcome branch.
            let c0_r = c0 + r * cm;
            if c0_r <= 0.0 {
                continue;
            }
            let s_mean = tables.base_mean + 0.5 * r * t_mean;
            let s_var = tables.base_var + 0.5 * r * t_var;
            let v_r = self.variance_from_sums(c0_r, s_mean, s_var).clamp(0.0, v_cap);
            acc += c0_r * v_r;
        }
        // c(0|+) + c(0|−) = 2·c[0] exactly.
        acc / (2.0 * c0)
    }

    /// How many times a rounding-negative variance has been clamped to zero
    /// process-wide.
    pub fn negative_variance_clamp_count() -> u64 {
        NEGATIVE_VARIANCE_CLAMPS.load(Ordering::Relaxed)
    }
}

/// Precomputed per-harmonic weights for the expected-variance search:
/// `weight[q] = [(−1)^q/q², ((−1)^q − 1)/q²]`, fused so the hot loop streams
/// one table.
struct EvTables {
    weight: Vec<[f64; 2]>,
    base_mean: f64,
    base_var: f64,
}

impl EvTables {
    fn build(series: &PosteriorCosineSeries, m_max: usize) -> Self {
        let top = series.max_harmonic() + m_max;
        let mut weight = Vec::with_capacity(top + 1);
        weight.push([0.0, 0.0]);
        for q in 1..=top {
            let inv = 1.0 / (q as f64 * q as f64);
            if q & 1 == 1 {
                weight.push([-inv, -2.0 * inv]);
            } else {
                weight.push([inv, 0.0]);
            }
        }
        let (base_mean, base_var) = series.moment_sums();
        Self {
            weight,
            base_mean,
            base_var,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn from_raw(omega0: f64, coeffs: Vec<f64>) -> PosteriorCosineSeries {
        PosteriorCosineSeries { omega0, coeffs }
    }

    #[test]
    fn uniform_prior_moments() {
        let p = PosteriorCosineSeries::uniform_prior(1.0).unwrap();
        assert_eq!(p.coeffs(), &[2.0]);
        assert_eq!(p.max_harmonic(), 0);
        assert_abs_diff_eq!(p.mean(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.variance(), 1.0 / 12.0, epsilon = 1e-15);

        let p2 = PosteriorCosineSeries::uniform_prior(2.0).unwrap();
        assert_eq!(p2.coeffs(), &[1.0]);
        assert_abs_diff_eq!(p2.mean(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p2.variance(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn invalid_omega0_rejected() {
        assert!(PosteriorCosineSeries::uniform_prior(0.0).is_err());
        assert!(PosteriorCosineSeries::uniform_prior(-1.0).is_err());
        assert!(PosteriorCosineSeries::uniform_prior(f64::NAN).is_err());
    }

    #[test]
    fn single_update_coefficients() {
        let prior = PosteriorCosineSeries::uniform_prior(1.0).unwrap();
        let plus = prior.bayes_update(1, Outcome::Plus).unwrap();
        assert_eq!(plus.coeffs(), &[2.0, 1.0]);
        let minus = prior.bayes_update(1, Outcome::Minus).unwrap();
        assert_eq!(minus.coeffs(), &[2.0, -1.0]);
    }

    #[test]
    fn single_update_moments() {
        // P = 1 + cos(πω): ∫ωP = ½ − 2/π², Var = 1/12 − 4/π⁴ (quadrature
        // oracle values; cross-checked against the dense grid in the
        // integration tests).
        let prior = PosteriorCosineSeries::uniform_prior(1.0).unwrap();
        let pi2 = PI * PI;
        let plus = prior.bayes_update(1, Outcome::Plus).unwrap();
        assert_abs_diff_eq!(plus.mean(), 0.5 - 2.0 / pi2, epsilon = 1e-14);
        let expected_var = 1.0 / 12.0 - 4.0 / (pi2 * pi2);
        assert_abs_diff_eq!(plus.variance(), expected_var, epsilon = 1e-14);

        let minus = prior.bayes_update(1, Outcome::Minus).unwrap();
        assert_abs_diff_eq!(minus.mean(), 0.5 + 2.0 / pi2, epsilon = 1e-14);
        assert_abs_diff_eq!(minus.variance(), expected_var, epsilon = 1e-14);
    }

    #[test]
    fn likelihood_zero_kills_density() {
        // After observing "+" at multiple m, the density must vanish where
        // cos(mπω/ω0) = −1.
        let prior = PosteriorCosineSeries::uniform_prior(1.0).unwrap();
        for m in [1u32, 2, 5] {
            let p = prior.bayes_update(m, Outcome::Plus).unwrap();
            let omega_zero = 1.0 / f64::from(m); // cos(mπω) = cos(π) = −1
            assert_abs_diff_eq!(p.density(omega_zero), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn harmonic_bookkeeping() {
        let mut p = PosteriorCosineSeries::uniform_prior(1.0).unwrap();
        let multiples = [3u32, 1, 7, 2];
        for (i, &m) in multiples.iter().enumerate() {
            let r = if i % 2 == 0 { Outcome::Plus } else { Outcome::Minus };
            p = p.bayes_update(m, r).unwrap();
        }
        let expected: u32 = multiples.iter().sum();
        assert_eq!(p.max_harmonic(), expected as usize);
    }

    #[test]
    fn update_rejects_zero_multiple() {
        let prior = PosteriorCosineSeries::uniform_prior(1.0).unwrap();
        assert!(matches!(
            prior.bayes_update(0, Outcome::Plus),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn degenerate_update_detected() {
        // c = [2, -2] puts all mass where cos(πω) = −1, so outcome "+" at
        // m = 1 is impossible.
        let p = from_raw(1.0, vec![2.0, -2.0]);
        assert!(matches!(
            p.bayes_update(1, Outcome::Plus),
            Err(Error::DegenerateUpdate { .. })
        ));
    }

    #[test]
    fn normalization_idempotent() {
        let mut p = PosteriorCosineSeries::uniform_prior(1.0).unwrap();
        for m in [2u32, 3, 1] {
            p = p.bayes_update(m, Outcome::Minus).unwrap();
        }
        let mut again = p.clone();
        again.normalize();
        for (a, b) in p.coeffs().iter().zip(again.coeffs()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn outcome_probabilities_sum_to_one() {
        let mut p = PosteriorCosineSeries::uniform_prior(1.0).unwrap();
        p = p.bayes_update(2, Outcome::Plus).unwrap();
        p = p.bayes_update(1, Outcome::Minus).unwrap();
        for m in 1..=10u32 {
            let plus = p.outcome_probability(m, Outcome::Plus).unwrap();
            let minus = p.outcome_probability(m, Outcome::Minus).unwrap();
            assert_abs_diff_eq!(plus + minus, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn update_mass_matches_outcome_probability() {
        let prior = PosteriorCosineSeries::uniform_prior(1.0).unwrap();
        let p = prior.bayes_update(1, Outcome::Plus).unwrap();
        let expected = p.outcome_probability(3, Outcome::Minus).unwrap();
        let (_, mass) = p.bayes_update_weighted(3, Outcome::Minus).unwrap();
        assert_abs_diff_eq!(mass, expected, epsilon = 1e-15);
    }

    #[test]
    fn expected_variance_uniform_prior() {
        // For the uniform prior: E[V|m] = 1/12 − 4/(mπ)⁴ at odd m and exactly
        // 1/12 at even m, so m = 1 is the strict minimizer.
        let prior = PosteriorCosineSeries::uniform_prior(1.0).unwrap();
        let ev1 = prior.expected_posterior_variance(1).unwrap();
        assert_abs_diff_eq!(ev1, 1.0 / 12.0 - 4.0 / PI.powi(4), epsilon = 1e-14);
        let ev2 = prior.expected_posterior_variance(2).unwrap();
        assert_abs_diff_eq!(ev2, 1.0 / 12.0, epsilon = 1e-14);
        for m in 1..=50u32 {
            let ev = prior.expected_posterior_variance(m).unwrap();
            assert!(ev <= prior.variance() + 1e-12);
            assert!(ev >= ev1 - 1e-15, "m=1 should minimize, m={m} gave {ev}");
        }
    }

    #[test]
    fn scan_matches_single_calls_bitwise() {
        let mut p = PosteriorCosineSeries::uniform_prior(1.0).unwrap();
        for (m, r) in [(1, Outcome::Plus), (4, Outcome::Minus), (2, Outcome::Plus)] {
            p = p.bayes_update(m, r).unwrap();
        }
        let scan = p.expected_variance_scan(40);
        for m in 1..=40u32 {
            let single = p.expected_posterior_variance(m).unwrap();
            assert_eq!(
                scan[(m - 1) as usize].to_bits(),
                single.to_bits(),
                "scan and single-call disagree at m={m}"
            );
        }
    }

    #[test]
    fn expected_variance_never_exceeds_variance() {
        let mut p = PosteriorCosineSeries::uniform_prior(1.0).unwrap();
        let trail = [(2, Outcome::Plus), (5, Outcome::Minus), (1, Outcome::Minus), (3, Outcome::Plus)];
        for &(m, r) in &trail {
            p = p.bayes_update(m, r).unwrap();
            let v = p.variance();
            for m_next in 1..=30u32 {
                let ev = p.expected_posterior_variance(m_next).unwrap();
                assert!(ev <= v + 1e-12, "E[V|{m_next}] = {ev} > V = {v}");
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let p = PosteriorCosineSeries::uniform_prior(1.0)
            .unwrap()
            .bayes_update(2, Outcome::Minus)
            .unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"omega0\""));
        assert!(json.contains("\"coeffs\""));
        let back: PosteriorCosineSeries = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn outcome_serde_is_signed_integer() {
        assert_eq!(serde_json::to_string(&Outcome::Plus).unwrap(), "1");
        assert_eq!(serde_json::to_string(&Outcome::Minus).unwrap(), "-1");
        let minus: Outcome = serde_json::from_str("-1").unwrap();
        assert_eq!(minus, Outcome::Minus);
        assert!(serde_json::from_str::<Outcome>("0").is_err());
    }
}
