//! Aggregation and model fitting: MSE-vs-N curves, power/exponential scaling
//! fits with confidence intervals, and steps-to-threshold tables.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::simulator::{mean_and_standard_error, TrialResult};

/// One point of an MSE-vs-N curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub n: usize,
    pub mse: f64,
    pub standard_error: f64,
    pub trials: u64,
}

/// Scaling law fitted to a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModel {
    /// `mse ≈ coefficient · N^(−rate)`
    Power,
    /// `mse ≈ coefficient · exp(−rate·N)`
    #[serde(rename = "exp")]
    Exponential,
}

impl FitModel {
    pub fn as_str(self) -> &'static str {
        match self {
            FitModel::Power => "power",
            FitModel::Exponential => "exp",
        }
    }
}

/// Fitted scaling model with a 95% confidence interval on the rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub model: FitModel,
    /// Prefactor of the model.
    pub coefficient: f64,
    /// Power `p` in `N^(−p)`, or rate `a` in `exp(−aN)`.
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub r_squared: f64,
    pub fit_range: (usize, usize),
}

/// Collapses per-N ensembles into a curve, sorted by N.
pub fn mse_curve(ensembles: &BTreeMap<usize, Vec<TrialResult>>) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::with_capacity(ensembles.len());
    for (&n, results) in ensembles {
        if results.is_empty() {
            return Err(Error::AnalysisInput(format!("empty ensemble at N={n}")));
        }
        let (mse, se) = mean_and_standard_error(results.iter().map(|r| r.squared_error));
        out.push(CurvePoint {
            n,
            mse,
            standard_error: se,
            trials: results.len() as u64,
        });
    }
    Ok(out)
}

/// Ordinary least squares on the log-transformed curve.
///
/// POWER regresses `log mse` on `log N`; EXPONENTIAL regresses `log mse` on
/// `N`. The rate is the negated slope; its confidence interval comes from
/// the two-sided 95% t-quantile with `points − 2` degrees of freedom.
pub fn fit_scaling(
    curve: &[CurvePoint],
    model: FitModel,
    range: (usize, usize),
) -> Result<ScalingFit> {
    let (lo, hi) = range;
    let points: Vec<&CurvePoint> = curve.iter().filter(|p| p.n >= lo && p.n <= hi).collect();
    if points.len() < 3 {
        return Err(Error::AnalysisInput(format!(
            "need at least 3 points in N ∈ [{lo}, {hi}], found {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|p| p.mse <= 0.0) {
        return Err(Error::NonPositiveMse { n: p.n, mse: p.mse });
    }

    let xs: Vec<f64> = points
        .iter()
        .map(|p| match model {
            FitModel::Power => (p.n as f64).ln(),
            FitModel::Exponential => p.n as f64,
        })
        .collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mse.ln()).collect();

    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    if sxx <= 0.0 {
        return Err(Error::AnalysisInput(
            "fit range has no spread in N".into(),
        ));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;

    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let resid = y - (intercept + slope * x);
            resid * resid
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else if ss_res <= f64::EPSILON {
        1.0
    } else {
        0.0
    };

    let df = (points.len() - 2) as f64;
    let slope_se = (ss_res / df / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, df)
        .expect("valid t distribution")
        .inverse_cdf(0.975);
    let rate = -slope;
    Ok(ScalingFit {
        model,
        coefficient: intercept.exp(),
        rate,
        ci_low: rate - t * slope_se,
        ci_high: rate + t * slope_se,
        r_squared,
        fit_range: (lo, hi),
    })
}

/// Smallest sampled N whose MSE is at or below the threshold; `None` if the
/// curve never reaches it. No interpolation: the table reports sampled step
/// counts only. The curve must be sorted by N.
pub fn steps_to_threshold(curve: &[CurvePoint], threshold: f64) -> Option<usize> {
    debug_assert!(curve.windows(2).all(|w| w[0].n <= w[1].n));
    curve.iter().find(|p| p.mse <= threshold).map(|p| p.n)
}

/// One row of the results CSV (`N,mse,standard_error,trials,scheme,seed`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub mse: f64,
    pub standard_error: f64,
    pub trials: u64,
    pub scheme: String,
    pub seed: u64,
}

impl CurveRow {
    pub fn point(&self) -> CurvePoint {
        CurvePoint {
            n: self.n,
            mse: self.mse,
            standard_error: self.standard_error,
            trials: self.trials,
        }
    }
}

/// Writes the curve CSV. `comments` go first, one per line, prefixed `# `;
/// rows are written with fixed-precision scientific notation so identical
/// inputs produce identical bytes.
pub fn write_curve_csv<W: Write>(
    mut writer: W,
    rows: &[CurveRow],
    comments: &[String],
) -> std::io::Result<()> {
    for c in comments {
        writeln!(writer, "# {c}")?;
    }
    writeln!(writer, "N,mse,standard_error,trials,scheme,seed")?;
    for r in rows {
        writeln!(
            writer,
            "{},{:.10e},{:.10e},{},{},{}",
            r.n, r.mse, r.standard_error, r.trials, r.scheme, r.seed
        )?;
    }
    Ok(())
}

/// Reads a curve CSV produced by [`write_curve_csv`] (comment lines starting
/// with `#` are skipped).
pub fn read_curve_csv<R: Read>(reader: R) -> Result<Vec<CurveRow>> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for record in csv_reader.deserialize::<CurveRow>() {
        rows.push(record.map_err(|e| Error::MalformedCsv(e.to_string()))?);
    }
    if rows.is_empty() {
        return Err(Error::MalformedCsv("no data rows".into()));
    }
    Ok(rows)
}

/// JSON fit report: `{model, rate, ci: [low, high], r_squared, range, coefficient}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: FitModel,
    pub rate: f64,
    pub ci: [f64; 2],
    pub r_squared: f64,
    pub range: [usize; 2],
    pub coefficient: f64,
}

impl From<ScalingFit> for FitReport {
    fn from(fit: ScalingFit) -> Self {
        FitReport {
            model: fit.model,
            rate: fit.rate,
            ci: [fit.ci_low, fit.ci_high],
            r_squared: fit.r_squared,
            range: [fit.fit_range.0, fit.fit_range.1],
            coefficient: fit.coefficient,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn synthetic_curve(f: impl Fn(usize) -> f64, ns: &[usize]) -> Vec<CurvePoint> {
        ns.iter()
            .map(|&n| CurvePoint {
                n,
                mse: f(n),
                standard_error: 0.0,
                trials: 1000,
            })
            .collect()
    }

    #[test]
    fn exact_power_law_recovered() {
        let ns: Vec<usize> = (10..=100).step_by(10).collect();
        let curve = synthetic_curve(|n| 5.0 * (n as f64).powi(-3), &ns);
        let fit = fit_scaling(&curve, FitModel::Power, (10, 100)).unwrap();
        assert_abs_diff_eq!(fit.rate, 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.coefficient, 5.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert!(fit.ci_low <= fit.rate && fit.rate <= fit.ci_high);
        assert!((fit.ci_high - fit.ci_low) < 1e-8);
    }

    #[test]
    fn exact_exponential_recovered() {
        let ns: Vec<usize> = (5..=50).step_by(5).collect();
        let curve = synthetic_curve(|n| (-0.3 * n as f64).exp(), &ns);
        let fit = fit_scaling(&curve, FitModel::Exponential, (5, 50)).unwrap();
        assert_abs_diff_eq!(fit.rate, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rate_invariant_under_mse_rescaling() {
        let ns: Vec<usize> = (10..=60).step_by(5).collect();
        // Mild curvature so the fit is not exact.
        let curve = synthetic_curve(|n| 2.0 * (n as f64).powf(-2.5) * (1.0 + 0.05 * (n as f64).sin().abs()), &ns);
        let scaled: Vec<CurvePoint> = curve
            .iter()
            .map(|p| CurvePoint {
                mse: 7.5 * p.mse,
                ..*p
            })
            .collect();
        let a = fit_scaling(&curve, FitModel::Power, (10, 60)).unwrap();
        let b = fit_scaling(&scaled, FitModel::Power, (10, 60)).unwrap();
        assert_abs_diff_eq!(a.rate, b.rate, epsilon = 1e-12);
        assert_abs_diff_eq!(b.coefficient / a.coefficient, 7.5, epsilon = 1e-9);
        assert_abs_diff_eq!(a.r_squared, b.r_squared, epsilon = 1e-12);
    }

    #[test]
    fn fit_input_validation() {
        let ns = [10, 20];
        let curve = synthetic_curve(|n| 1.0 / n as f64, &ns);
        assert!(matches!(
            fit_scaling(&curve, FitModel::Power, (10, 20)),
            Err(Error::AnalysisInput(_))
        ));
        let mut bad = synthetic_curve(|n| 1.0 / n as f64, &[10, 20, 30]);
        bad[1].mse = 0.0;
        assert!(matches!(
            fit_scaling(&bad, FitModel::Power, (10, 30)),
            Err(Error::NonPositiveMse { n: 20, .. })
        ));
    }

    #[test]
    fn steps_to_threshold_semantics() {
        let curve = synthetic_curve(|n| 1.0 / n as f64, &[10, 20, 40, 80]);
        assert_eq!(steps_to_threshold(&curve, 1.0 / 25.0), Some(40));
        assert_eq!(steps_to_threshold(&curve, 1e-6), None);
        // Threshold above every MSE: the smallest sampled N.
        assert_eq!(steps_to_threshold(&curve, 10.0), Some(10));
        // Monotone: a lower threshold never yields a smaller N.
        let hi = steps_to_threshold(&curve, 0.05).unwrap();
        let lo = steps_to_threshold(&curve, 0.02).unwrap();
        assert!(lo >= hi);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            CurveRow {
                n: 10,
                mse: 1.25e-3,
                standard_error: 2.0e-5,
                trials: 500,
                scheme: "adaptive".into(),
                seed: 7,
            },
            CurveRow {
                n: 20,
                mse: 4.0e-4,
                standard_error: 8.0e-6,
                trials: 500,
                scheme: "adaptive".into(),
                seed: 7,
            },
        ];
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &rows, &["seed: 7".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed: 7\n"));
        let back = read_curve_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].n, 10);
        assert_abs_diff_eq!(back[0].mse, 1.25e-3, epsilon = 1e-15);
        assert_eq!(back[1].scheme, "adaptive");
    }

    #[test]
    fn malformed_csv_is_reported() {
        let text = "N,mse\n10,0.5\n";
        assert!(matches!(
            read_curve_csv(text.as_bytes()),
            Err(Error::MalformedCsv(_))
        ));
    }

    #[test]
    fn mse_curve_from_ensembles() {
        use crate::schemes::SchemeSpec;
        use crate::simulator::{run_ensemble, TrialConfig};
        let mut map = BTreeMap::new();
        for n in [4usize, 8] {
            let cfg = TrialConfig {
                omega0: 1.0,
                steps: n,
                scheme: SchemeSpec::bayes_fixed_m1(),
                seed: 3,
                trial_index: 0,
                peak: crate::fourier::PeakRefinement::Quadratic,
            };
            map.insert(n, run_ensemble(&cfg, 20).unwrap().results);
        }
        let curve = mse_curve(&map).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(curve[0].n, 4);
        assert_eq!(curve[1].n, 8);
        assert!(curve.iter().all(|p| p.trials == 20));
        // Duplicating an ensemble leaves the mean alone and scales the SE by
        // ~1/√2 (exactly √((T−1)/(2T−1)) with the sample-variance estimator).
        let doubled: Vec<TrialResult> = map[&4].iter().chain(map[&4].iter()).cloned().collect();
        let (m1, s1) = mean_and_standard_error(map[&4].iter().map(|r| r.squared_error));
        let (m2, s2) = mean_and_standard_error(doubled.iter().map(|r| r.squared_error));
        assert_abs_diff_eq!(m1, m2, epsilon = 1e-15);
        let expected = s1 * (19.0_f64 / 39.0).sqrt();
        assert_abs_diff_eq!(s2, expected, epsilon = 1e-12);
    }

    #[test]
    fn fit_report_shape() {
        let fit = ScalingFit {
            model: FitModel::Exponential,
            coefficient: 0.4,
            rate: 0.299,
            ci_low: 0.28,
            ci_high: 0.32,
            r_squared: 0.98,
            fit_range: (5, 50),
        };
        let report: FitReport = fit.into();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"model\":\"exp\""));
        assert!(json.contains("\"ci\":[0.28,0.32]"));
        let back: FitReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
