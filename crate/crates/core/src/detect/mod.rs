//! CUSUM detector family: the known-subspace CUSUM, the Subspace-CUSUM with
//! fixed or estimated delays, and the one-shot per-sensor baseline.
//!
//! Every detector is a single-threaded state machine fed one raw frame at a
//! time. Detectors with a lookahead window release logical tick `t` only after
//! the frames they need from the future have arrived, and report an alarm at
//! `crossed_at + w`.

mod drift;
mod oneshot;
mod subspace;

pub use drift::{
    calibrate_drift, drift_bounds, eigvec_error_energy, known_subspace_offset, postchange_mean,
    prechange_mean, DriftBounds, DEFAULT_CALIBRATION_FACTOR,
};
pub use oneshot::{one_shot_detector, one_shot_step, one_shot_trajectory, OneShot};
pub use subspace::{
    async_pipeline, detector_eigen, DelayMode, DelayRecord, PipelineReport, SubspaceConfig,
    SubspaceCusum,
};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::stream::{MultiSensorFrame, Tick};

/// Running CUSUM statistic with its drift, threshold and crossing bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CusumState {
    statistic: f64,
    drift: f64,
    threshold: f64,
    lookahead: usize,
    crossed_at: Option<Tick>,
    reported_at: Option<Tick>,
}

impl CusumState {
    pub fn new(drift: f64, threshold: f64, lookahead: usize) -> Self {
        Self {
            statistic: 0.0,
            drift,
            threshold,
            lookahead,
            crossed_at: None,
            reported_at: None,
        }
    }

    pub fn with_statistic(mut self, statistic: f64) -> Self {
        self.statistic = statistic;
        self
    }

    pub fn statistic(&self) -> f64 {
        self.statistic
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn lookahead(&self) -> usize {
        self.lookahead
    }

    pub fn crossed_at(&self) -> Option<Tick> {
        self.crossed_at
    }

    pub fn reported_at(&self) -> Option<Tick> {
        self.reported_at
    }

    /// `S ← (S)⁺ + increment`, recording the first tick with `S ≥ b`.
    pub fn advance(mut self, t: Tick, increment: f64) -> Self {
        self.statistic = self.statistic.max(0.0) + increment;
        if self.crossed_at.is_none() && self.statistic >= self.threshold {
            self.crossed_at = Some(t);
            self.reported_at = Some(t + self.lookahead as Tick);
        }
        self
    }
}

fn check_unit(u: &[f64]) -> Result<()> {
    let n = dot(u, u).sqrt();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("subspace vector must be unit norm, got {n}")));
    }
    Ok(())
}

/// `(uᵀx)²`.
pub fn projection_energy(u: &[f64], x: &[f64]) -> f64 {
    dot(u, x).powi(2)
}

/// Known-subspace CUSUM update
/// `S' = (S)⁺ + (uᵀx)² − σ²(1 + 1/ρ) ln(1 + ρ)`.
pub fn cusum_step_known_u(
    state: &CusumState,
    frame: &MultiSensorFrame,
    u: &[f64],
    sigma2: f64,
    rho: f64,
) -> Result<CusumState> {
    if !(sigma2 > 0.0 && rho > 0.0) {
        return Err(Error::invalid(format!("need sigma2 > 0 and rho > 0, got {sigma2}, {rho}")));
    }
    if u.len() != frame.k() {
        return Err(Error::DimensionMismatch {
            expected: frame.k(),
            got: u.len(),
        });
    }
    check_unit(u)?;
    let offset = known_subspace_offset(sigma2, rho);
    let mut next = state.advance(frame.t(), projection_energy(u, frame.values()) - offset);
    next.drift = offset;
    Ok(next)
}

/// Leading direction estimated from the aligned window `window_start ..
/// window_start + window_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceEstimate {
    pub u: Vec<f64>,
    pub window_start: Tick,
    pub window_len: usize,
}

/// Subspace-CUSUM update `S' = (S)⁺ + (ûᵀx̃)² − d`, where `û` must come from
/// frames strictly after the current tick.
pub fn subspace_cusum_step(
    state: &CusumState,
    frame: &MultiSensorFrame,
    estimate: &SubspaceEstimate,
) -> Result<CusumState> {
    if estimate.window_start <= frame.t() {
        return Err(Error::ContractViolation {
            t: frame.t(),
            window_start: estimate.window_start,
        });
    }
    if estimate.u.len() != frame.k() {
        return Err(Error::DimensionMismatch {
            expected: frame.k(),
            got: estimate.u.len(),
        });
    }
    check_unit(&estimate.u)?;
    let increment = projection_energy(&estimate.u, frame.values()) - state.drift;
    Ok(state.advance(frame.t(), increment))
}

/// What a detector did with a pushed frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Update {
    /// Logical tick `t` was processed.
    Step {
        t: Tick,
        /// `(ûᵀx̃)²` for projection-based detectors.
        energy: Option<f64>,
        statistic: f64,
    },
    /// Logical tick `t` could not be formed (edge of stream or empty window);
    /// the statistic is carried over unchanged.
    Gap { t: Tick },
}

/// A streaming CUSUM-type detector.
pub trait Detector: Send {
    fn name(&self) -> &str;
    /// Ticks added to the crossing time when reporting an alarm.
    fn lookahead(&self) -> usize;
    fn drift(&self) -> f64;
    fn threshold(&self) -> f64;
    fn statistic(&self) -> f64;
    fn crossed_at(&self) -> Option<Tick>;
    fn reported_at(&self) -> Option<Tick>;
    /// Feeds the next raw frame; at most one logical tick is released per push.
    fn push(&mut self, frame: MultiSensorFrame) -> Result<Option<Update>>;
    /// Processes whatever is still buffered once the stream has ended.
    fn finish(&mut self) -> Result<Vec<Update>> {
        Ok(Vec::new())
    }
}

/// Detector with a fixed known direction `u` and offset from `(σ², ρ)`.
#[derive(Debug, Clone)]
pub struct KnownSubspaceCusum {
    u: Vec<f64>,
    sigma2: f64,
    rho: f64,
    state: CusumState,
}

impl KnownSubspaceCusum {
    pub fn new(u: Vec<f64>, sigma2: f64, rho: f64, threshold: f64) -> Result<Self> {
        check_unit(&u)?;
        if !(sigma2 > 0.0 && rho > 0.0) {
            return Err(Error::invalid("need sigma2 > 0 and rho > 0"));
        }
        let state = CusumState::new(known_subspace_offset(sigma2, rho), threshold, 0);
        Ok(Self {
            u,
            sigma2,
            rho,
            state,
        })
    }
}

impl Detector for KnownSubspaceCusum {
    fn name(&self) -> &str {
        "known-subspace"
    }
    fn lookahead(&self) -> usize {
        0
    }
    fn drift(&self) -> f64 {
        self.state.drift
    }
    fn threshold(&self) -> f64 {
        self.state.threshold
    }
    fn statistic(&self) -> f64 {
        self.state.statistic
    }
    fn crossed_at(&self) -> Option<Tick> {
        self.state.crossed_at
    }
    fn reported_at(&self) -> Option<Tick> {
        self.state.reported_at
    }

    fn push(&mut self, frame: MultiSensorFrame) -> Result<Option<Update>> {
        self.state = cusum_step_known_u(&self.state, &frame, &self.u, self.sigma2, self.rho)?;
        Ok(Some(Update::Step {
            t: frame.t(),
            energy: Some(projection_energy(&self.u, frame.values())),
            statistic: self.state.statistic,
        }))
    }
}

/// Detector kind plus everything but the threshold.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorSpec {
    KnownSubspace { u: Vec<f64>, sigma2: f64, rho: f64 },
    Subspace(SubspaceConfig),
    OneShot { mu: f64, sigma2: f64 },
}

impl DetectorSpec {
    pub fn id(&self) -> &'static str {
        match self {
            Self::KnownSubspace { .. } => "known-subspace",
            Self::Subspace(cfg) => cfg.name(),
            Self::OneShot { .. } => "one-shot",
        }
    }

    pub fn lookahead(&self) -> usize {
        match self {
            Self::Subspace(cfg) => cfg.w,
            _ => 0,
        }
    }

    pub fn drift(&self) -> f64 {
        match self {
            Self::KnownSubspace { sigma2, rho, .. } => known_subspace_offset(*sigma2, *rho),
            Self::Subspace(cfg) => cfg.drift,
            Self::OneShot { mu, sigma2 } => mu * mu / (2.0 * sigma2),
        }
    }

    pub fn build(&self, k: usize, threshold: f64) -> Result<Box<dyn Detector>> {
        Ok(match self {
            Self::KnownSubspace { u, sigma2, rho } => {
                if u.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        got: u.len(),
                    });
                }
                Box::new(KnownSubspaceCusum::new(u.clone(), *sigma2, *rho, threshold)?)
            }
            Self::Subspace(cfg) => Box::new(SubspaceCusum::new(cfg.clone(), k, threshold)?),
            Self::OneShot { mu, sigma2 } => Box::new(OneShot::new(k, *mu, *sigma2, threshold)?),
        })
    }
}

/// Outcome of running a detector over a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingReport {
    pub detector: String,
    pub b: f64,
    pub d: f64,
    pub lookahead: usize,
    pub crossed_at: Option<Tick>,
    pub reported_at: Option<Tick>,
    /// `(t, S_t)` for every processed logical tick.
    pub trajectory: Vec<(Tick, f64)>,
    /// `(t, (ûᵀx̃_t)²)` where the detector exposes it.
    pub energies: Vec<(Tick, f64)>,
    pub gaps: Vec<Tick>,
}

impl StoppingReport {
    pub fn alarmed(&self) -> bool {
        self.crossed_at.is_some()
    }
}

/// Whether [`run_detector`] stops at the first alarm or consumes the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    StopAtAlarm,
    Full,
}

/// Drives `detector` over `frames`. The first tick with `S_t ≥ b` becomes
/// `crossed_at`; running out of frames first is a no-alarm outcome.
pub fn run_detector<D, I>(detector: &mut D, frames: I, mode: RunMode) -> Result<StoppingReport>
where
    D: Detector + ?Sized,
    I: IntoIterator<Item = MultiSensorFrame>,
{
    let mut trajectory = Vec::new();
    let mut energies = Vec::new();
    let mut gaps = Vec::new();
    let mut record = |update: Update| match update {
        Update::Step {
            t,
            energy,
            statistic,
        } => {
            trajectory.push((t, statistic));
            if let Some(e) = energy {
                energies.push((t, e));
            }
        }
        Update::Gap { t } => gaps.push(t),
    };
    let stop = |d: &D| mode == RunMode::StopAtAlarm && d.crossed_at().is_some();
    for frame in frames {
        if let Some(update) = detector.push(frame)? {
            record(update);
            if stop(detector) {
                break;
            }
        }
    }
    if !stop(detector) {
        for update in detector.finish()? {
            record(update);
            if stop(detector) {
                break;
            }
        }
    }
    Ok(StoppingReport {
        detector: detector.name().to_string(),
        b: detector.threshold(),
        d: detector.drift(),
        lookahead: detector.lookahead(),
        crossed_at: detector.crossed_at(),
        reported_at: detector.reported_at(),
        trajectory,
        energies,
        gaps,
    })
}

/// First crossing tick of each threshold along a trajectory.
pub fn first_crossings(trajectory: &[(Tick, f64)], thresholds: &[f64]) -> Vec<Option<Tick>> {
    thresholds
        .iter()
        .map(|b| trajectory.iter().find(|(_, s)| s >= b).map(|(t, _)| *t))
        .collect()
}

/// The `count` largest local peaks of a trajectory, at least `min_separation`
/// ticks apart, in decreasing order of height.
pub fn find_peaks(trajectory: &[(Tick, f64)], min_separation: Tick, count: usize) -> Vec<(Tick, f64)> {
    let mut order: Vec<usize> = (0..trajectory.len()).collect();
    order.sort_by(|&a, &b| trajectory[b].1.total_cmp(&trajectory[a].1).then(a.cmp(&b)));
    let mut peaks: Vec<(Tick, f64)> = Vec::with_capacity(count);
    for i in order {
        if peaks.len() == count {
            break;
        }
        let (t, s) = trajectory[i];
        if peaks.iter().all(|(p, _)| (p - t).abs() >= min_separation) {
            peaks.push((t, s));
        }
    }
    peaks
}
