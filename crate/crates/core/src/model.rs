//! Ground-truth scenario description: noise level, per-sensor amplitudes,
//! the causal source waveform and per-sensor onsets.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::stream::Tick;

/// Causal source signal `s(n)`; every query with `n < 0` returns exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    /// `s(n) = level` for all `n ≥ 0` (a mean shift once the onset has passed).
    Step { level: f64 },
    /// `s(n) = amplitude · sin(2πn/period + phase)`.
    Sinusoid {
        amplitude: f64,
        period: f64,
        phase: f64,
    },
    /// `s(n) = table[n]`, zero past the end of the table.
    Tabulated(Arc<[f64]>),
}

impl Waveform {
    pub fn step() -> Self {
        Self::Step { level: 1.0 }
    }

    /// One full cycle of a unit sine sampled `period` times.
    pub fn sine_cycle(period: usize) -> Self {
        let p = period as f64;
        Self::Tabulated(
            (0..period)
                .map(|n| (2.0 * std::f64::consts::PI * n as f64 / p).sin())
                .collect(),
        )
    }

    pub fn tabulated(samples: impl Into<Arc<[f64]>>) -> Self {
        Self::Tabulated(samples.into())
    }

    pub fn at(&self, n: Tick) -> f64 {
        if n < 0 {
            return 0.0;
        }
        match self {
            Self::Step { level } => *level,
            Self::Sinusoid {
                amplitude,
                period,
                phase,
            } => amplitude * (2.0 * std::f64::consts::PI * n as f64 / period + phase).sin(),
            Self::Tabulated(table) => table.get(n as usize).copied().unwrap_or(0.0),
        }
    }

    /// Mean of `s²(n)` over `n ∈ [0, horizon)`, the finite-horizon stand-in for
    /// the average signal energy `E₀`.
    pub fn average_energy(&self, horizon: usize) -> f64 {
        match self {
            Self::Step { level } => level * level,
            _ if horizon == 0 => 0.0,
            _ => (0..horizon as Tick).map(|n| self.at(n).powi(2)).sum::<f64>() / horizon as f64,
        }
    }
}

/// Parameters of the asynchronous observation model
/// `x_i(t) = α_i s(t − τ_i − 1) + e_i(t)` for `t > τ_i`, pure noise before.
///
/// The onset `τ_i` is the last pure-noise tick of sensor `i`; waveform sample
/// `s(0)` shows up at tick `τ_i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioModel {
    sigma2: f64,
    alpha: Vec<f64>,
    waveform: Waveform,
    onsets: Option<Vec<Tick>>,
}

impl ScenarioModel {
    pub fn new(sigma2: f64, alpha: Vec<f64>, waveform: Waveform, onsets: Vec<Tick>) -> Result<Self> {
        let model = Self::pure_noise_with(sigma2, alpha, waveform)?;
        model.with_onsets(onsets)
    }

    /// No change ever happens; `alpha` and `waveform` are kept for reference.
    pub fn pure_noise_with(sigma2: f64, alpha: Vec<f64>, waveform: Waveform) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::invalid(format!("sigma2 must be finite and >= 0, got {sigma2}")));
        }
        if alpha.len() < 2 {
            return Err(Error::invalid(format!("need k >= 2 sensors, got {}", alpha.len())));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("amplitudes must be finite"));
        }
        Ok(Self {
            sigma2,
            alpha,
            waveform,
            onsets: None,
        })
    }

    pub fn pure_noise(k: usize, sigma2: f64) -> Result<Self> {
        Self::pure_noise_with(sigma2, vec![0.0; k], Waveform::step())
    }

    pub fn with_onsets(mut self, onsets: Vec<Tick>) -> Result<Self> {
        if onsets.len() != self.alpha.len() {
            return Err(Error::DimensionMismatch {
                expected: self.alpha.len(),
                got: onsets.len(),
            });
        }
        self.onsets = Some(onsets);
        Ok(self)
    }

    pub fn without_change(mut self) -> Self {
        self.onsets = None;
        self
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn waveform(&self) -> &Waveform {
        &self.waveform
    }

    pub fn onsets(&self) -> Option<&[Tick]> {
        self.onsets.as_deref()
    }

    /// `τ = min_i τ_i`, or `None` for a pure-noise model.
    pub fn change_point(&self) -> Option<Tick> {
        self.onsets.as_ref().and_then(|o| o.iter().copied().min())
    }

    /// Relative delays `τ_i − τ_ref`.
    pub fn relative_delays(&self, reference: usize) -> Option<Vec<Tick>> {
        let onsets = self.onsets.as_ref()?;
        let r = *onsets.get(reference)?;
        Some(onsets.iter().map(|o| o - r).collect())
    }

    /// Noise-free part of sensor `i` at tick `t`.
    pub fn signal(&self, sensor: usize, t: Tick) -> f64 {
        match &self.onsets {
            Some(onsets) if t > onsets[sensor] => {
                self.alpha[sensor] * self.waveform.at(t - onsets[sensor] - 1)
            }
            _ => 0.0,
        }
    }

    pub fn alpha_norm2(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum()
    }
}

/// Spiked-covariance view of a scenario once aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikedStats {
    /// `α/‖α‖`.
    pub u: Vec<f64>,
    /// `θ = s²(n)‖α‖²` at the requested waveform index.
    pub theta_t: f64,
    /// Average SNR `ρ = E₀‖α‖²/σ²`.
    pub rho: f64,
    pub e0: f64,
}

impl SpikedStats {
    /// Derives the spiked parameters, averaging the waveform energy over
    /// `energy_horizon` samples.
    pub fn from_model(model: &ScenarioModel, n: Tick, energy_horizon: usize) -> Result<Self> {
        let a2 = model.alpha_norm2();
        if a2 == 0.0 {
            return Err(Error::DegenerateInput("all amplitudes are zero".into()));
        }
        if model.sigma2 <= 0.0 {
            return Err(Error::invalid("SNR needs sigma2 > 0"));
        }
        let norm = a2.sqrt();
        let e0 = model.waveform.average_energy(energy_horizon);
        Ok(Self {
            u: model.alpha.iter().map(|a| a / norm).collect(),
            theta_t: model.waveform.at(n).powi(2) * a2,
            rho: e0 * a2 / model.sigma2,
            e0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waveform_is_causal() {
        for w in [
            Waveform::step(),
            Waveform::sine_cycle(8),
            Waveform::Sinusoid {
                amplitude: 1.0,
                period: 5.0,
                phase: 1.0,
            },
        ] {
            assert_eq!(w.at(-1), 0.0);
            assert_eq!(w.at(-100), 0.0);
        }
        assert_eq!(Waveform::tabulated(vec![1.0, 2.0]).at(2), 0.0);
    }

    #[test]
    fn change_point_is_min_onset() {
        let m = ScenarioModel::new(1.0, vec![1.0, 2.0, 3.0], Waveform::step(), vec![7, 3, 5]).unwrap();
        assert_eq!(m.change_point(), Some(3));
        assert_eq!(m.relative_delays(0), Some(vec![0, -4, -2]));
        assert_eq!(m.clone().without_change().change_point(), None);
        assert_eq!(m.signal(1, 3), 0.0);
        assert_eq!(m.signal(1, 4), 2.0);
    }

    #[test]
    fn spiked_stats_from_model() {
        let m = ScenarioModel::new(2.0, vec![3.0, 4.0], Waveform::Step { level: 0.5 }, vec![0, 0]).unwrap();
        let s = SpikedStats::from_model(&m, 0, 100).unwrap();
        assert!((s.u[0] - 0.6).abs() < 1e-15 && (s.u[1] - 0.8).abs() < 1e-15);
        assert!((s.u.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(s.e0, 0.25);
        assert!((s.rho - 0.25 * 25.0 / 2.0).abs() < 1e-12);
        assert!((s.theta_t - 0.25 * 25.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ScenarioModel::pure_noise(1, 1.0).is_err());
        assert!(ScenarioModel::pure_noise(3, -1.0).is_err());
        assert!(ScenarioModel::pure_noise(3, 1.0).unwrap().with_onsets(vec![1, 2]).is_err());
    }
}
