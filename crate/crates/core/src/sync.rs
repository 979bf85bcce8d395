//! Relative-delay estimation for asynchronous sensors.
//!
//! [`ml_delay`] scans integer shifts for the maximum absolute correlation
//! between one sensor and a waveform template; [`joint_estimate`] alternates
//! that scan with a subspace re-estimate, rebuilding the template as the
//! `û`-weighted sum of the aligned sensors until the delays stop moving.

use crate::error::{Error, Result};
use crate::linalg::{self, EigenConfig};
use crate::stream::{DelayProfile, SampleSource, Tick};

/// Settings for [`joint_estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncConfig {
    /// Delays are searched in `[-tau_max, tau_max]`.
    pub tau_max: usize,
    /// Stop once no delay moved by `delta` ticks or more.
    pub delta: usize,
    /// Upper bound on passes.
    pub n_max: usize,
    /// Reference sensor (index 0 is the first sensor).
    pub reference: usize,
    pub eigen: EigenConfig,
}

impl SyncConfig {
    pub fn new(tau_max: usize) -> Self {
        Self {
            tau_max,
            delta: 1,
            n_max: 10,
            reference: 0,
            eigen: EigenConfig {
                probe_gap: false,
                best_effort: true,
                ..EigenConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(Error::invalid("n_max must be at least 1"));
        }
        Ok(())
    }
}

/// Reconstructed waveform `ŝ` over an analysis window. Identifiable only up to
/// scale and sign.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformEstimate {
    pub origin: Tick,
    pub samples: Vec<f64>,
}

/// Output of [`ml_delay`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayEstimate {
    pub shift: Tick,
    /// Signed correlation at `shift`.
    pub correlation: f64,
    /// Every candidate shift produced an exactly zero correlation.
    pub zero_correlation: bool,
}

/// Maximum-likelihood integer delay of `sensor` relative to `template`.
///
/// Both slices cover the same ticks `t+1 ..= t+w`; the template is treated as
/// zero outside that support. Returns the shift `z ∈ [-tau_max, tau_max]`
/// maximizing `|Σ_j x(j) ŝ(j − z)|`, preferring the smallest `|z|` and then
/// the smallest `z` on ties.
pub fn ml_delay(sensor: &[f64], template: &[f64], tau_max: usize) -> Result<DelayEstimate> {
    if sensor.is_empty() {
        return Err(Error::EmptyWindow);
    }
    if sensor.len() != template.len() {
        return Err(Error::DimensionMismatch {
            expected: sensor.len(),
            got: template.len(),
        });
    }
    let mut best = DelayEstimate {
        shift: 0,
        correlation: 0.0,
        zero_correlation: true,
    };
    let mut best_abs = -1.0;
    for z in candidate_shifts(tau_max) {
        let c = shifted_correlation(sensor, template, z);
        if c != 0.0 {
            best.zero_correlation = false;
        }
        if c.abs() > best_abs {
            best_abs = c.abs();
            best.shift = z;
            best.correlation = c;
        }
    }
    if best.zero_correlation {
        best.shift = 0;
    }
    Ok(best)
}

/// `0, -1, 1, -2, 2, …, -tau_max, tau_max`.
fn candidate_shifts(tau_max: usize) -> impl Iterator<Item = Tick> {
    std::iter::once(0).chain((1..=tau_max as Tick).flat_map(|m| [-m, m]))
}

fn shifted_correlation(sensor: &[f64], template: &[f64], z: Tick) -> f64 {
    let len = sensor.len() as Tick;
    // j − z must stay inside [0, len)
    let lo = z.max(0);
    let hi = (len + z).min(len);
    if lo >= hi {
        return 0.0;
    }
    let (lo, hi) = (lo as usize, hi as usize);
    let off = (lo as Tick - z) as usize;
    sensor[lo..hi]
        .iter()
        .zip(&template[off..off + (hi - lo)])
        .map(|(x, s)| x * s)
        .sum()
}

/// Result of [`joint_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct JointEstimate {
    pub profile: DelayProfile,
    pub waveform: WaveformEstimate,
    /// Leading direction of the aligned window covariance.
    pub u_hat: Vec<f64>,
}

/// Jointly estimates relative delays and the source waveform over the window
/// `window_start .. window_start + window_len`.
///
/// Starts from `ŝ = x_ref` and zero delays. Each pass re-scans every
/// non-reference sensor against the current template, re-aligns the window,
/// takes the leading eigenvector `û` of the aligned second-moment matrix and
/// rebuilds `ŝ(j) = Σ_i û_i x_i(j + τ̂_i)`. The loop ends when no delay moved by
/// `delta` or more (`converged`) or after `n_max` passes.
///
/// Window samples must be available in `source`; shifted samples falling
/// outside the recorded range are read as zero.
pub fn joint_estimate<S: SampleSource + ?Sized>(
    source: &S,
    window_start: Tick,
    window_len: usize,
    cfg: &SyncConfig,
) -> Result<JointEstimate> {
    cfg.validate()?;
    let k = source.sensors();
    if k < 2 {
        return Err(Error::invalid(format!("need k >= 2 sensors, got {k}")));
    }
    if window_len < 2 {
        return Err(Error::invalid(format!("analysis window must be >= 2, got {window_len}")));
    }
    if cfg.reference >= k {
        return Err(Error::invalid(format!("reference {} out of range", cfg.reference)));
    }

    let window: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..window_len as Tick)
                .map(|j| {
                    let t = window_start + j;
                    source
                        .sample(i, t)
                        .ok_or(Error::InsufficientLookahead { sensor: i, needed: t })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut template = window[cfg.reference].clone();
    let mut shifts = vec![0 as Tick; k];
    let mut previous: Option<Vec<Tick>> = None;
    let mut u_hat = Vec::new();
    let mut passes = 0;
    let mut rows = vec![0.0; window_len * k];

    let moved = |prev: &Option<Vec<Tick>>, cur: &[Tick]| -> Option<u64> {
        prev.as_ref().map(|p| {
            p.iter()
                .zip(cur)
                .enumerate()
                .filter(|(i, _)| *i != cfg.reference)
                .map(|(_, (a, b))| a.abs_diff(*b))
                .max()
                .unwrap_or(0)
        })
    };

    // `previous == None` plays the role of the initial "infinite" delays.
    while moved(&previous, &shifts).is_none_or(|m| m >= cfg.delta as u64) && passes < cfg.n_max {
        passes += 1;
        let mut next = vec![0 as Tick; k];
        for (i, series) in window.iter().enumerate() {
            if i != cfg.reference {
                next[i] = ml_delay(series, &template, cfg.tau_max)?.shift;
            }
        }

        for j in 0..window_len {
            let t = window_start + j as Tick;
            for (i, &shift) in next.iter().enumerate() {
                rows[j * k + i] = source.sample(i, t + shift).unwrap_or(0.0);
            }
        }
        u_hat = linalg::window_top_vector(k, &rows, &cfg.eigen, None)?.vector;
        for (s, row) in template.iter_mut().zip(rows.chunks_exact(k)) {
            *s = linalg::dot(&u_hat, row);
        }
        previous = Some(std::mem::replace(&mut shifts, next));
    }

    let converged = moved(&previous, &shifts).is_some_and(|m| m < cfg.delta as u64);
    let profile = DelayProfile::new(shifts, cfg.tau_max, cfg.reference)?
        .with_convergence(passes, converged);
    Ok(JointEstimate {
        profile,
        waveform: WaveformEstimate {
            origin: window_start,
            samples: template,
        },
        u_hat,
    })
}
