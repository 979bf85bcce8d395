//! Decentralized baseline: one Gaussian mean-shift CUSUM per sensor, alarm on
//! the first sensor to cross.

use super::{CusumState, Detector, StoppingReport, Update};
use crate::error::{Error, Result};
use crate::stream::{MultiSensorFrame, Tick};

fn check(mu: f64, sigma2: f64) -> Result<()> {
    if mu == 0.0 || !mu.is_finite() {
        return Err(Error::invalid(format!("mu must be finite and nonzero, got {mu}")));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::invalid(format!("sigma2 must be > 0, got {sigma2}")));
    }
    Ok(())
}

/// `S' = (S)⁺ + (μ/σ²)(x − μ/2)`.
pub fn one_shot_step(state: &CusumState, t: Tick, x: f64, mu: f64, sigma2: f64) -> CusumState {
    state.advance(t, (mu / sigma2) * (x - mu / 2.0))
}

#[derive(Debug, Clone)]
pub struct OneShot {
    mu: f64,
    sigma2: f64,
    threshold: f64,
    sensors: Vec<CusumState>,
    statistic: f64,
    crossed_at: Option<Tick>,
}

impl OneShot {
    pub fn new(k: usize, mu: f64, sigma2: f64, threshold: f64) -> Result<Self> {
        check(mu, sigma2)?;
        if k == 0 {
            return Err(Error::invalid("need at least one sensor"));
        }
        let drift = mu * mu / (2.0 * sigma2);
        Ok(Self {
            mu,
            sigma2,
            threshold,
            sensors: vec![CusumState::new(drift, threshold, 0); k],
            statistic: 0.0,
            crossed_at: None,
        })
    }

    /// Per-sensor statistics.
    pub fn sensors(&self) -> &[CusumState] {
        &self.sensors
    }

    /// Advances every sensor with its sample at `t`; returns `max_i S_i`.
    pub fn step(&mut self, t: Tick, values: &[f64]) -> Result<f64> {
        if values.len() != self.sensors.len() {
            return Err(Error::DimensionMismatch {
                expected: self.sensors.len(),
                got: values.len(),
            });
        }
        let mut max = f64::NEG_INFINITY;
        for (s, &x) in self.sensors.iter_mut().zip(values) {
            *s = one_shot_step(s, t, x, self.mu, self.sigma2);
            max = max.max(s.statistic());
        }
        self.statistic = max;
        if self.crossed_at.is_none() && max >= self.threshold {
            self.crossed_at = Some(t);
        }
        Ok(max)
    }
}

impl Detector for OneShot {
    fn name(&self) -> &str {
        "one-shot"
    }
    fn lookahead(&self) -> usize {
        0
    }
    fn drift(&self) -> f64 {
        self.mu * self.mu / (2.0 * self.sigma2)
    }
    fn threshold(&self) -> f64 {
        self.threshold
    }
    fn statistic(&self) -> f64 {
        self.statistic
    }
    fn crossed_at(&self) -> Option<Tick> {
        self.crossed_at
    }
    fn reported_at(&self) -> Option<Tick> {
        self.crossed_at
    }

    fn push(&mut self, frame: MultiSensorFrame) -> Result<Option<Update>> {
        let statistic = self.step(frame.t(), frame.values())?;
        Ok(Some(Update::Step {
            t: frame.t(),
            energy: None,
            statistic,
        }))
    }
}

/// Runs the one-shot scheme over `k ≥ 1` scalar streams of equal length, with
/// ticks numbered from 1. The trajectory holds `max_i S_i`.
pub fn one_shot_detector(streams: &[&[f64]], mu: f64, sigma2: f64, b: f64) -> Result<StoppingReport> {
    let Some(first) = streams.first() else {
        return Err(Error::invalid("need at least one stream"));
    };
    let n = first.len();
    if let Some(bad) = streams.iter().find(|s| s.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.len(),
        });
    }
    let mut det = OneShot::new(streams.len(), mu, sigma2, b)?;
    let mut trajectory = Vec::with_capacity(n);
    let mut values = vec![0.0; streams.len()];
    for j in 0..n {
        let t = j as Tick + 1;
        for (v, s) in values.iter_mut().zip(streams) {
            *v = s[j];
        }
        trajectory.push((t, det.step(t, &values)?));
        if det.crossed_at.is_some() {
            break;
        }
    }
    Ok(StoppingReport {
        detector: det.name().to_string(),
        b,
        d: det.drift(),
        lookahead: 0,
        crossed_at: det.crossed_at,
        reported_at: det.crossed_at,
        trajectory,
        energies: Vec::new(),
        gaps: Vec::new(),
    })
}

/// As [`one_shot_detector`], continuing past the alarm.
pub fn one_shot_trajectory(streams: &[&[f64]], mu: f64, sigma2: f64) -> Result<Vec<f64>> {
    let report = one_shot_detector(streams, mu, sigma2, f64::INFINITY)?;
    Ok(report.trajectory.into_iter().map(|(_, s)| s).collect())
}
