//! Subspace-CUSUM over aligned sensors, with fixed or per-window estimated
//! relative delays.

use log::debug;

use super::{
    projection_energy, subspace_cusum_step, CusumState, Detector, RunMode, StoppingReport,
    SubspaceEstimate, Update,
};
use crate::error::{Error, Result};
use crate::linalg::{window_top_vector, EigenConfig};
use crate::stream::{
    align_frames, DelayProfile, LookaheadBuffer, MultiSensorFrame, SampleSource, SensorStreams, Tick,
};
use crate::sync::{joint_estimate, SyncConfig};

/// Where the relative delays come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayMode {
    /// Known delays (all zero for synchronous sensors).
    Fixed(DelayProfile),
    /// Re-estimated every `cadence` ticks on the `w` ticks starting `lead`
    /// ticks after the next one.
    Estimated {
        sync: SyncConfig,
        cadence: usize,
        lead: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceConfig {
    /// Lookahead window length.
    pub w: usize,
    pub drift: f64,
    pub delays: DelayMode,
    pub eigen: EigenConfig,
    /// Start each power iteration from the previous tick's `û`.
    pub warm_start: bool,
}

/// Power-iteration settings used inside the detector: a long run visits many
/// windows with nearly tied top eigenvalues, where the direction is
/// ill-determined anyway, so the last iterate is accepted.
pub fn detector_eigen() -> EigenConfig {
    EigenConfig {
        tol: 1e-8,
        max_iter: None,
        probe_gap: false,
        best_effort: true,
    }
}

impl SubspaceConfig {
    /// Synchronous sensors (zero delays).
    pub fn synchronous(k: usize, w: usize, drift: f64) -> Self {
        Self {
            w,
            drift,
            delays: DelayMode::Fixed(DelayProfile::zero(k, 0)),
            eigen: detector_eigen(),
            warm_start: true,
        }
    }

    /// Delays estimated once per window of `w` ticks.
    pub fn asynchronous(w: usize, drift: f64, sync: SyncConfig) -> Self {
        Self {
            w,
            drift,
            delays: DelayMode::Estimated {
                sync,
                cadence: w,
                lead: w,
            },
            eigen: detector_eigen(),
            warm_start: true,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.delays {
            DelayMode::Fixed(_) => "subspace-cusum",
            DelayMode::Estimated { .. } => "async-subspace-cusum",
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.w == 0 {
            return Err(Error::invalid("window length w must be >= 1"));
        }
        if !self.drift.is_finite() {
            return Err(Error::invalid(format!("drift must be finite, got {}", self.drift)));
        }
        match &self.delays {
            DelayMode::Fixed(p) if p.k() != k => Err(Error::DimensionMismatch {
                expected: k,
                got: p.k(),
            }),
            DelayMode::Estimated { sync, cadence, .. } => {
                sync.validate()?;
                if *cadence == 0 {
                    return Err(Error::invalid("re-estimation cadence must be >= 1"));
                }
                if self.w < 2 {
                    return Err(Error::invalid("delay estimation needs w >= 2"));
                }
                if sync.reference >= k {
                    return Err(Error::invalid(format!("reference {} out of range", sync.reference)));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Future frames needed beyond the window, and past frames to retain.
    fn margins(&self) -> (usize, usize) {
        match &self.delays {
            DelayMode::Fixed(p) => (p.max_forward(), p.max_backward()),
            DelayMode::Estimated { sync, lead, .. } => (sync.tau_max + lead, sync.tau_max),
        }
    }
}

/// Delay profile adopted at logical tick `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayRecord {
    pub t: Tick,
    pub profile: DelayProfile,
}

/// Streaming Subspace-CUSUM. Logical tick `t` is processed once frames up to
/// `t + w` (plus the delay margin) have arrived; `û_t` comes from the aligned
/// window `t+1 ..= t+w` only.
#[derive(Debug, Clone)]
pub struct SubspaceCusum {
    cfg: SubspaceConfig,
    k: usize,
    buffer: LookaheadBuffer,
    state: CusumState,
    profile: DelayProfile,
    first_t: Option<Tick>,
    warm: Option<Vec<f64>>,
    rows: Vec<f64>,
    delays: Vec<DelayRecord>,
    /// False once a scheduled delay estimate could not be formed; reusing the
    /// previous profile would fit it to the ticks it is applied to.
    profile_current: bool,
    unconverged: u64,
}

impl SubspaceCusum {
    pub fn new(cfg: SubspaceConfig, k: usize, threshold: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("need k >= 2 sensors, got {k}")));
        }
        cfg.validate(k)?;
        let (forward, backward) = cfg.margins();
        let profile = match &cfg.delays {
            DelayMode::Fixed(p) => p.clone(),
            DelayMode::Estimated { sync, .. } => DelayProfile::zero(k, sync.tau_max),
        };
        Ok(Self {
            buffer: LookaheadBuffer::with_history(cfg.w + forward, backward),
            state: CusumState::new(cfg.drift, threshold, cfg.w),
            rows: vec![0.0; cfg.w * k],
            k,
            profile,
            first_t: None,
            warm: None,
            delays: Vec::new(),
            profile_current: true,
            unconverged: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &SubspaceConfig {
        &self.cfg
    }

    pub fn state(&self) -> &CusumState {
        &self.state
    }

    /// Delay profiles in the order they were adopted.
    pub fn delay_history(&self) -> &[DelayRecord] {
        &self.delays
    }

    /// Ticks whose power iteration stopped on the iteration budget.
    pub fn unconverged_ticks(&self) -> u64 {
        self.unconverged
    }

    fn process(&mut self, frame: MultiSensorFrame) -> Result<Update> {
        let t = frame.t();
        let first = *self.first_t.get_or_insert(t);
        let w = self.cfg.w;

        if let DelayMode::Estimated { sync, cadence, lead } = &self.cfg.delays {
            if (t - first) % *cadence as Tick == 0 {
                match joint_estimate(&self.buffer, t + 1 + *lead as Tick, w, sync) {
                    Ok(est) => {
                        self.profile = est.profile;
                        self.profile_current = true;
                        self.delays.push(DelayRecord {
                            t,
                            profile: self.profile.clone(),
                        });
                    }
                    Err(Error::ZeroMatrix) => {
                        debug!("tick {t}: silent estimation window, keeping previous delays");
                    }
                    Err(Error::InsufficientLookahead { .. }) => self.profile_current = false,
                    Err(e) => return Err(e),
                }
            }
            if !self.profile_current {
                return Ok(Update::Gap { t });
            }
        }

        let x = match align_frames(&self.buffer, t, &self.profile) {
            Ok(x) => x,
            Err(Error::InsufficientLookahead { .. }) => return Ok(Update::Gap { t }),
            Err(e) => return Err(e),
        };
        for j in 0..w {
            let tj = t + 1 + j as Tick;
            for i in 0..self.k {
                match self.buffer.sample(i, tj + self.profile.shift(i)) {
                    Some(v) => self.rows[j * self.k + i] = v,
                    None => return Ok(Update::Gap { t }),
                }
            }
        }
        let start = if self.cfg.warm_start { self.warm.as_deref() } else { None };
        let top = match window_top_vector(self.k, &self.rows, &self.cfg.eigen, start) {
            Ok(top) => top,
            Err(Error::ZeroMatrix) => return Ok(Update::Gap { t }),
            Err(e) => return Err(e),
        };
        if !top.converged {
            self.unconverged += 1;
        }
        let estimate = SubspaceEstimate {
            u: top.vector,
            window_start: t + 1,
            window_len: w,
        };
        let energy = projection_energy(&estimate.u, x.values());
        self.state = subspace_cusum_step(&self.state, &x, &estimate)?;
        self.warm = Some(estimate.u);
        Ok(Update::Step {
            t,
            energy: Some(energy),
            statistic: self.state.statistic(),
        })
    }
}

impl Detector for SubspaceCusum {
    fn name(&self) -> &str {
        self.cfg.name()
    }
    fn lookahead(&self) -> usize {
        self.cfg.w
    }
    fn drift(&self) -> f64 {
        self.cfg.drift
    }
    fn threshold(&self) -> f64 {
        self.state.threshold()
    }
    fn statistic(&self) -> f64 {
        self.state.statistic()
    }
    fn crossed_at(&self) -> Option<Tick> {
        self.state.crossed_at()
    }
    fn reported_at(&self) -> Option<Tick> {
        self.state.reported_at()
    }

    fn push(&mut self, frame: MultiSensorFrame) -> Result<Option<Update>> {
        match self.buffer.push(frame)? {
            Some(released) => self.process(released).map(Some),
            None => Ok(None),
        }
    }

    fn finish(&mut self) -> Result<Vec<Update>> {
        let mut out = Vec::new();
        while let Some(frame) = self.buffer.flush() {
            out.push(self.process(frame)?);
        }
        Ok(out)
    }
}

/// Stopping report plus the delay profiles adopted along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub report: StoppingReport,
    pub delays: Vec<DelayRecord>,
}

/// Runs the Subspace-CUSUM over recorded streams; with [`DelayMode::Estimated`]
/// the delays are re-estimated on the lookahead window as it goes.
pub fn async_pipeline(
    streams: &SensorStreams,
    cfg: &SubspaceConfig,
    threshold: f64,
    mode: RunMode,
) -> Result<PipelineReport> {
    let mut det = SubspaceCusum::new(cfg.clone(), streams.k(), threshold)?;
    let report = super::run_detector(&mut det, streams.frames(), mode)?;
    if det.unconverged_ticks() > 0 {
        debug!("{} ticks used an unconverged subspace estimate", det.unconverged_ticks());
    }
    Ok(PipelineReport {
        report,
        delays: det.delays,
    })
}
