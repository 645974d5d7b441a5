//! Geometric-envelope fits of outer residual series,
//! `‖x_k − x*‖ ≤ A ρ^k + floor`.

use serde::{Deserialize, Serialize};

use crate::error::{RdroError, Result};

const MIN_SERIES_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceDiagnostics {
    /// Per-iteration contraction factor ρ ∈ (0, 1).
    pub fitted_rate: f64,
    pub fitted_floor: f64,
    /// Prefactor A of the envelope.
    pub amplitude: f64,
    pub residual_series: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ConvergenceDiagnostics {
    pub fn envelope(&self, k: usize) -> f64 {
        self.amplitude * self.fitted_rate.powi(k as i32) + self.fitted_floor
    }
}

struct LogFit {
    log_amplitude: f64,
    log_rate: f64,
}

/// Least squares of `ln(r_k − floor)` on `k` over the points with
/// `r_k ≥ 2·floor`.
fn log_linear_fit(series: &[f64], floor: f64) -> Option<LogFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > 0.0 && **r - floor > 0.0 && **r >= 2.0 * floor)
        .map(|(k, r)| (k as f64, (r - floor).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let kx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ky = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - kx) * (p.0 - kx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - kx) * (p.1 - ky)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(LogFit {
        log_amplitude: ky - slope * kx,
        log_rate: slope,
    })
}

/// Misfit of the full model in log space.
fn log_misfit(series: &[f64], floor: f64, fit: &LogFit) -> f64 {
    series
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > 0.0)
        .map(|(k, r)| {
            let model = (fit.log_amplitude + fit.log_rate * k as f64).exp() + floor;
            let d = r.ln() - model.ln();
            d * d
        })
        .sum()
}

/// Fits `A ρ^k + floor` to a residual series, then lifts `A` and the floor
/// just enough that the envelope dominates every observed residual.
pub fn fit_convergence(residual_series: &[f64]) -> Result<ConvergenceDiagnostics> {
    if residual_series.len() < MIN_SERIES_LEN {
        return Err(RdroError::Configuration(format!(
            "need at least {MIN_SERIES_LEN} residuals, got {}",
            residual_series.len()
        )));
    }
    if residual_series.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(RdroError::Domain("residuals must be finite and nonnegative".into()));
    }
    let mut warnings = Vec::new();
    let non_monotone = residual_series
        .windows(2)
        .filter(|w| w[1] > w[0] * (1.0 + 1e-6) + 1e-15)
        .count();
    if non_monotone > 0 {
        let msg = format!("residual series increases at {non_monotone} steps");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let positive_min = residual_series
        .iter()
        .cloned()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !positive_min.is_finite() {
        return Err(RdroError::Domain("residual series is identically zero".into()));
    }

    let score = |floor: f64| -> (f64, Option<LogFit>) {
        match log_linear_fit(residual_series, floor) {
            Some(fit) => (log_misfit(residual_series, floor, &fit), Some(fit)),
            None => (f64::INFINITY, None),
        }
    };
    // golden section over floor ∈ [0, min r), with the endpoint 0 checked explicitly
    let (mut best_floor, (mut best_score, mut best_fit)) = (0.0, score(0.0));
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, positive_min * (1.0 - 1e-9));
    for _ in 0..120 {
        let c = b - gr * (b - a);
        let d = a + gr * (b - a);
        if score(c).0 < score(d).0 {
            b = d;
        } else {
            a = c;
        }
    }
    let interior = 0.5 * (a + b);
    let (s, f) = score(interior);
    if s < best_score {
        best_floor = interior;
        best_score = s;
        best_fit = f;
    }
    let fit = best_fit.ok_or_else(|| RdroError::Domain("too few informative residuals to fit".into()))?;
    log::debug!("convergence fit misfit {best_score:.3e}");

    let mut rate = fit.log_rate.exp();
    if !(rate < 1.0) {
        let msg = format!("fitted contraction {rate} is not below 1");
        log::warn!("{msg}");
        warnings.push(msg);
        rate = 1.0 - 1e-12;
    }
    rate = rate.max(f64::MIN_POSITIVE);

    let floor = best_floor;
    let mut amplitude = fit.log_amplitude.exp();
    for (k, r) in residual_series.iter().enumerate() {
        if *r >= 2.0 * floor && *r > floor {
            let decay = rate.powi(k as i32);
            if decay > 0.0 {
                amplitude = amplitude.max((r - floor) / decay);
            }
        }
    }
    let mut fitted_floor = floor;
    for (k, r) in residual_series.iter().enumerate() {
        fitted_floor = fitted_floor.max(r - amplitude * rate.powi(k as i32));
    }
    Ok(ConvergenceDiagnostics {
        fitted_rate: rate,
        fitted_floor,
        amplitude,
        residual_series: residual_series.to_vec(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_geometric_series() {
        let series: Vec<f64> = (0..30).map(|k| 0.5f64.powi(k)).collect();
        let d = fit_convergence(&series).unwrap();
        assert!((d.fitted_rate - 0.5).abs() <= 1e-6, "{}", d.fitted_rate);
        assert!(d.fitted_floor <= 1e-12);
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn geometric_plus_floor() {
        let series: Vec<f64> = (0..40).map(|k| 0.5f64.powi(k) + 1e-4).collect();
        let d = fit_convergence(&series).unwrap();
        assert!((d.fitted_floor - 1e-4).abs() <= 0.2e-4, "{}", d.fitted_floor);
        assert!((d.fitted_rate - 0.5).abs() <= 1e-2);
    }

    #[test]
    fn envelope_dominates_noisy_series() {
        let series: Vec<f64> = (0..60)
            .map(|k| 2.0 * 0.8f64.powi(k) * (1.0 + 0.3 * ((k * 7) % 5) as f64 / 5.0) + 1e-6)
            .collect();
        let d = fit_convergence(&series).unwrap();
        for (k, r) in series.iter().enumerate() {
            assert!(*r <= d.envelope(k) * (1.0 + 1e-12));
        }
        assert!(d.fitted_rate > 0.0 && d.fitted_rate < 1.0);
    }

    #[test]
    fn non_monotone_series_warns_but_fits() {
        let mut series: Vec<f64> = (0..20).map(|k| 0.7f64.powi(k)).collect();
        series[5] *= 1.5;
        let d = fit_convergence(&series).unwrap();
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(fit_convergence(&[1.0, 0.5, 0.25]).is_err());
    }
}
