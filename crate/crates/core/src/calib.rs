//! Anomaly detection by heading disagreement and the resulting blend.
//!
//! The analytic heading and the network's predicted heading are compared
//! over a rolling window. A Gaussian reference for that disagreement is
//! estimated by maximum likelihood from steps judged anomaly-free, and the
//! anomaly weight `eta = exp(-(e - mu)^2 / sigma^2)` sets how much the
//! commanded heading trusts the analytic law.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::angle::{diff_deg, wrap_deg};
use crate::error::{Error, Result};

/// Gaussian reference statistics, degrees and degrees squared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyStats {
    pub mu: f64,
    pub sigma2: f64,
    pub count: usize,
}

/// Per-step calibration outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendRecord {
    /// Mean absolute discrepancy over the rolling window, degrees.
    pub e_n: Option<f64>,
    pub eta: f64,
    pub theta_cmd: f64,
    pub stats: Option<AnomalyStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibConfig {
    /// Reference window length in units of the model window.
    pub reference_windows: usize,
    pub sigma2_floor: f64,
    pub eta_min: f64,
    /// Steps with `eta` below this are kept out of the reference.
    pub reference_gate: f64,
}

impl Default for CalibConfig {
    fn default() -> Self {
        Self {
            reference_windows: 3,
            sigma2_floor: 1.0,
            eta_min: 1e-3,
            reference_gate: 0.5,
        }
    }
}

impl CalibConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reference_windows == 0 {
            return Err(Error::InvalidInput("reference_windows must be >= 1".into()));
        }
        if !(self.sigma2_floor > 0.0) {
            return Err(Error::InvalidInput("sigma2_floor must be positive".into()));
        }
        if !(self.eta_min > 0.0 && self.eta_min <= 1.0) {
            return Err(Error::InvalidInput("eta_min must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Mean absolute wrapped difference between two heading sequences.
pub fn heading_discrepancy(analytic: &[f64], predicted: &[f64]) -> Result<f64> {
    if analytic.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "heading sequences differ in length: {} vs {}",
            analytic.len(),
            predicted.len()
        )));
    }
    if analytic.is_empty() {
        return Err(Error::InvalidInput("empty heading sequences".into()));
    }
    let sum: f64 = analytic
        .iter()
        .zip(predicted)
        .map(|(a, p)| diff_deg(*a, *p).abs())
        .sum();
    Ok(sum / analytic.len() as f64)
}

/// Maximum-likelihood Gaussian fit with a variance floor.
pub fn fit_reference(window: &[f64], sigma2_floor: f64) -> Result<AnomalyStats> {
    if window.len() < 2 {
        return Err(Error::NotReady(format!(
            "reference fit needs at least 2 values, have {}",
            window.len()
        )));
    }
    let n = window.len() as f64;
    let mu = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    Ok(AnomalyStats {
        mu,
        sigma2: var.max(sigma2_floor),
        count: window.len(),
    })
}

/// `exp(-(e - mu)^2 / sigma^2)` clamped into `[eta_min, 1]`.
pub fn anomaly_weight(e_n: f64, stats: &AnomalyStats, eta_min: f64) -> f64 {
    let z = (e_n - stats.mu).powi(2) / stats.sigma2;
    (-z).exp().clamp(eta_min, 1.0)
}

/// Weighted blend of the analytic and predicted headings on the unit circle.
pub fn blend_heading(eta: f64, analytic: f64, predicted: f64) -> f64 {
    if eta >= 1.0 {
        return wrap_deg(analytic);
    }
    let (sa, ca) = analytic.to_radians().sin_cos();
    let (sp, cp) = predicted.to_radians().sin_cos();
    let s = eta * sa + (1.0 - eta) * sp;
    let c = eta * ca + (1.0 - eta) * cp;
    if s.abs() < 1e-300 && c.abs() < 1e-300 {
        // Exactly opposite headings with equal weight: keep the analytic one.
        return wrap_deg(analytic);
    }
    wrap_deg(s.atan2(c).to_degrees())
}

/// Streaming calibrator used inside the mission loop.
#[derive(Debug, Clone)]
pub struct Calibrator {
    cfg: CalibConfig,
    window: usize,
    recent: VecDeque<f64>,
    reference: VecDeque<f64>,
}

impl Calibrator {
    pub fn new(cfg: CalibConfig, window: usize) -> Self {
        Self {
            cfg,
            window: window.max(1),
            recent: VecDeque::new(),
            reference: VecDeque::new(),
        }
    }

    pub fn reset(&mut self) {
        self.recent.clear();
        self.reference.clear();
    }

    /// Fold in one step's headings and return the blend.
    pub fn step(&mut self, analytic: f64, predicted: f64) -> BlendRecord {
        let d = diff_deg(analytic, predicted).abs();
        self.recent.push_back(d);
        while self.recent.len() > self.window {
            self.recent.pop_front();
        }
        let e_n = self.recent.iter().sum::<f64>() / self.recent.len() as f64;
        let refs: Vec<f64> = self.reference.iter().copied().collect();
        let (eta, stats) = match fit_reference(&refs, self.cfg.sigma2_floor) {
            Ok(st) => (anomaly_weight(e_n, &st, self.cfg.eta_min), Some(st)),
            Err(_) => (1.0, None),
        };
        if eta >= self.cfg.reference_gate {
            self.reference.push_back(d);
            while self.reference.len() > self.cfg.reference_windows * self.window {
                self.reference.pop_front();
            }
        }
        BlendRecord {
            e_n: Some(e_n),
            eta,
            theta_cmd: blend_heading(eta, analytic, predicted),
            stats,
        }
    }
}
