//! Brute-force reference posterior on a dense frequency grid.
//!
//! This crate exists purely as a test oracle. It evaluates the measurement
//! likelihood product pointwise on a uniform grid over `[0, omega0]` and
//! normalizes by trapezoid quadrature, so every quantity here is computed by
//! a route completely independent of the cosine-series arithmetic it is used
//! to check. It is a dev-dependency only and must never become a production
//! code path.

/// A normalized probability density sampled on a uniform grid over
/// `[0, omega0]`, endpoints included.
#[derive(Debug, Clone)]
pub struct GridDensity {
    omega0: f64,
    values: Vec<f64>,
}

/// Builds the posterior for a measurement record by direct pointwise
/// multiplication of the per-step likelihood factors `1 + r·cos(mπω/ω0)`.
///
/// `steps` holds `(waiting multiple, outcome)` pairs with outcome in `{+1, -1}`.
/// `points` is the number of grid intervals; the density is sampled at
/// `points + 1` nodes.
pub fn posterior_on_grid(omega0: f64, steps: &[(u32, i8)], points: usize) -> GridDensity {
    assert!(omega0 > 0.0, "omega0 must be positive");
    assert!(points >= 2, "need at least 2 grid intervals");
    let mut values = vec![1.0; points + 1];
    for (i, v) in values.iter_mut().enumerate() {
        let omega = omega0 * i as f64 / points as f64;
        for &(m, r) in steps {
            assert!(m >= 1, "waiting multiple must be >= 1");
            assert!(r == 1 || r == -1, "outcome must be +1 or -1");
            *v *= 1.0 + f64::from(r) * (f64::from(m) * std::f64::consts::PI * omega / omega0).cos();
        }
    }
    let mut density = GridDensity { omega0, values };
    density.renormalize();
    density
}

impl GridDensity {
    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    /// Number of grid intervals.
    pub fn intervals(&self) -> usize {
        self.values.len() - 1
    }

    /// Density values at the grid nodes.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Frequency coordinate of grid node `i`.
    pub fn node(&self, i: usize) -> f64 {
        self.omega0 * i as f64 / self.intervals() as f64
    }

    fn spacing(&self) -> f64 {
        self.omega0 / self.intervals() as f64
    }

    fn renormalize(&mut self) {
        let z = trapezoid(&self.values, self.spacing());
        assert!(z > 0.0, "degenerate density: zero total mass");
        for v in &mut self.values {
            *v /= z;
        }
    }

    /// Posterior mean by quadrature.
    pub fn mean(&self) -> f64 {
        let h = self.spacing();
        let weighted: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.node(i))
            .collect();
        trapezoid(&weighted, h)
    }

    /// Posterior variance by quadrature.
    pub fn variance(&self) -> f64 {
        let h = self.spacing();
        let mu = self.mean();
        let weighted: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * (self.node(i) - mu).powi(2))
            .collect();
        trapezoid(&weighted, h)
    }

    /// Probability of outcome `r` for a measurement at waiting multiple `m`,
    /// i.e. the quadrature of `P(ω)·(1 + r·cos(mπω/ω0))/2`.
    pub fn outcome_probability(&self, m: u32, r: i8) -> f64 {
        let h = self.spacing();
        let weighted: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let omega = self.node(i);
                let c = (f64::from(m) * std::f64::consts::PI * omega / self.omega0).cos();
                v * (1.0 + f64::from(r) * c) / 2.0
            })
            .collect();
        trapezoid(&weighted, h)
    }

    /// The renormalized density after observing outcome `r` at multiple `m`.
    pub fn updated(&self, m: u32, r: i8) -> GridDensity {
        let mut values = self.values.clone();
        for (i, v) in values.iter_mut().enumerate() {
            let omega = self.node(i);
            let c = (f64::from(m) * std::f64::consts::PI * omega / self.omega0).cos();
            *v *= 1.0 + f64::from(r) * c;
        }
        let mut out = GridDensity {
            omega0: self.omega0,
            values,
        };
        out.renormalize();
        out
    }

    /// Expected posterior variance after a measurement at multiple `m`,
    /// marginalized over the (unknown) outcome: `Σ_r Pr(r)·Var(ω|r)`.
    pub fn expected_posterior_variance(&self, m: u32) -> f64 {
        let mut acc = 0.0;
        for r in [1i8, -1i8] {
            let p = self.outcome_probability(m, r);
            if p > 0.0 {
                acc += p * self.updated(m, r).variance();
            }
        }
        acc
    }
}

/// Trapezoid rule over uniformly spaced samples.
pub fn trapezoid(values: &[f64], spacing: f64) -> f64 {
    assert!(values.len() >= 2);
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    spacing * (0.5 * values[0] + inner + 0.5 * values[values.len() - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_prior_moments() {
        let d = posterior_on_grid(1.0, &[], 10_000);
        assert!((d.mean() - 0.5).abs() < 1e-9);
        assert!((d.variance() - 1.0 / 12.0).abs() < 1e-8);
    }

    #[test]
    fn flat_prior_outcome_probability_is_half() {
        let d = posterior_on_grid(1.0, &[], 10_000);
        for m in [1, 2, 7] {
            assert!((d.outcome_probability(m, 1) - 0.5).abs() < 1e-9);
            assert!((d.outcome_probability(m, -1) - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn single_plus_update_density() {
        // P(ω) = 1 + cos(πω) on [0, 1].
        let d = posterior_on_grid(1.0, &[(1, 1)], 10_000);
        for i in (0..=10_000).step_by(97) {
            let omega = d.node(i);
            let expected = 1.0 + (std::f64::consts::PI * omega).cos();
            assert!((d.values()[i] - expected).abs() < 1e-7);
        }
    }
}
