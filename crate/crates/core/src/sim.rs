//! Scenario generation and Monte Carlo estimation of average run length (ARL)
//! and expected detection delay (EDD).
//!
//! Every trial draws from its own ChaCha8 substream (`seed`, stream index), so
//! results do not depend on thread scheduling. Gaussian noise uses the
//! Ziggurat sampler from `rand_distr`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::detect::{Detector, DetectorSpec, DriftBounds, SubspaceConfig, SubspaceCusum, Update};
use crate::error::{Error, Result};
use crate::model::ScenarioModel;
use crate::stream::{MultiSensorFrame, SensorStreams, Tick};

/// Offset separating EDD substreams from ARL substreams.
pub const EDD_STREAM_BASE: u64 = 1 << 32;
/// Offset for drift pilot runs.
pub const PILOT_STREAM_BASE: u64 = 2 << 32;

/// How onsets are assigned per trial.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayPlan {
    /// Use the model's onsets (or none) as given.
    Fixed,
    /// Draw `U_i` uniformly on `0..=tau_max` per sensor and set
    /// `τ_i = change_point + U_i − min_j U_j`, so the change point is exact and
    /// relative delays stay within `±tau_max`.
    Uniform { change_point: Tick, tau_max: usize },
    /// No change ever happens.
    NoChange,
}

/// A scenario family: base model plus onset randomization.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: ScenarioModel,
    pub plan: DelayPlan,
}

impl Scenario {
    pub fn new(model: ScenarioModel, plan: DelayPlan) -> Self {
        Self { model, plan }
    }

    pub fn fixed(model: ScenarioModel) -> Self {
        Self::new(model, DelayPlan::Fixed)
    }

    pub fn pure_noise(k: usize, sigma2: f64) -> Result<Self> {
        Ok(Self::new(ScenarioModel::pure_noise(k, sigma2)?, DelayPlan::NoChange))
    }

    pub fn k(&self) -> usize {
        self.model.k()
    }

    pub fn has_change(&self) -> bool {
        match self.plan {
            DelayPlan::Fixed => self.model.onsets().is_some(),
            DelayPlan::Uniform { .. } => true,
            DelayPlan::NoChange => false,
        }
    }

    /// Concrete model for one trial; draws from `rng` only for random plans.
    pub fn realize(&self, rng: &mut ChaCha8Rng) -> Result<ScenarioModel> {
        match self.plan {
            DelayPlan::Fixed => Ok(self.model.clone()),
            DelayPlan::NoChange => Ok(self.model.clone().without_change()),
            DelayPlan::Uniform {
                change_point,
                tau_max,
            } => {
                let draws: Vec<Tick> = (0..self.k())
                    .map(|_| rng.random_range(0..=tau_max as Tick))
                    .collect();
                let min = draws.iter().copied().min().unwrap_or(0);
                let onsets = draws.iter().map(|u| change_point + u - min).collect();
                self.model.clone().with_onsets(onsets)
            }
        }
    }
}

fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Lazily generated episode over ticks `1 ..= horizon`. Noise is drawn tick by
/// tick, sensor by sensor.
#[derive(Debug, Clone)]
pub struct EpisodeStream {
    model: ScenarioModel,
    sigma: f64,
    horizon: Tick,
    next_t: Tick,
    rng: ChaCha8Rng,
}

impl EpisodeStream {
    pub fn new(model: ScenarioModel, horizon: Tick, rng: ChaCha8Rng) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::invalid(format!("horizon must be >= 1, got {horizon}")));
        }
        Ok(Self {
            sigma: model.sigma2().sqrt(),
            model,
            horizon,
            next_t: 1,
            rng,
        })
    }

    pub fn model(&self) -> &ScenarioModel {
        &self.model
    }
}

impl Iterator for EpisodeStream {
    type Item = MultiSensorFrame;

    fn next(&mut self) -> Option<MultiSensorFrame> {
        if self.next_t > self.horizon {
            return None;
        }
        let t = self.next_t;
        self.next_t += 1;
        let values = (0..self.model.k())
            .map(|i| {
                let noise = if self.sigma > 0.0 {
                    let z: f64 = self.rng.sample(StandardNormal);
                    self.sigma * z
                } else {
                    0.0
                };
                self.model.signal(i, t) + noise
            })
            .collect();
        MultiSensorFrame::new(t, values).ok()
    }
}

/// One episode of `horizon` ticks starting at tick 1, a pure function of
/// `(model, horizon, seed)`.
pub fn generate_episode(model: &ScenarioModel, horizon: Tick, seed: u64) -> Result<SensorStreams> {
    let frames: Vec<_> = EpisodeStream::new(model.clone(), horizon, trial_rng(seed, 0))?.collect();
    if frames.len() != horizon as usize {
        return Err(Error::DegenerateInput("generated a non-finite sample".into()));
    }
    SensorStreams::from_frames(&frames)
}

/// Outcome of one Monte Carlo trial at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub detector_id: String,
    /// Reported alarm tick; `None` if censored at the horizon.
    pub stopped_at: Option<Tick>,
    pub change_point: Option<Tick>,
    pub false_alarm: bool,
}

impl TrialResult {
    pub fn new(detector_id: &str, stopped_at: Option<Tick>, change_point: Option<Tick>) -> Self {
        let false_alarm = match (stopped_at, change_point) {
            (Some(s), Some(c)) => s <= c,
            (Some(_), None) => true,
            (None, _) => false,
        };
        Self {
            detector_id: detector_id.to_string(),
            stopped_at,
            change_point,
            false_alarm,
        }
    }
}

/// Monte Carlo budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    pub trials: usize,
    /// Last generated tick of every episode.
    pub horizon: Tick,
    pub seed: u64,
}

impl MonteCarlo {
    pub fn new(trials: usize, horizon: Tick, seed: u64) -> Self {
        Self {
            trials,
            horizon,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if self.horizon < 1 {
            return Err(Error::invalid("horizon must be >= 1"));
        }
        Ok(())
    }
}

/// Feeds `frames` to `det` and records the first crossing tick of each
/// threshold in the ascending grid `b_grid`, stopping once the largest has
/// been crossed.
pub fn first_crossing_ticks<D, I>(det: &mut D, frames: I, b_grid: &[f64]) -> Result<Vec<Option<Tick>>>
where
    D: Detector + ?Sized,
    I: IntoIterator<Item = MultiSensorFrame>,
{
    let mut crossed = vec![None; b_grid.len()];
    let mut next = 0;
    let mut see = |update: Update| {
        if let Update::Step { t, statistic, .. } = update {
            while next < b_grid.len() && statistic >= b_grid[next] {
                crossed[next] = Some(t);
                next += 1;
            }
        }
        next == b_grid.len()
    };
    let mut done = false;
    for frame in frames {
        if let Some(update) = det.push(frame)? {
            if see(update) {
                done = true;
                break;
            }
        }
    }
    if !done {
        for update in det.finish()? {
            if see(update) {
                break;
            }
        }
    }
    Ok(crossed)
}

fn check_grid(b_grid: &[f64]) -> Result<()> {
    if b_grid.is_empty() {
        return Err(Error::invalid("threshold grid is empty"));
    }
    if b_grid.iter().any(|b| b.is_nan()) || b_grid.windows(2).any(|p| p[1] < p[0]) {
        return Err(Error::invalid("threshold grid must be nondecreasing"));
    }
    Ok(())
}

/// The episode seen by trial `stream`: onsets drawn first, then the noise,
/// both from substream `stream` of `seed`.
pub fn trial_episode(scenario: &Scenario, horizon: Tick, seed: u64, stream: u64) -> Result<EpisodeStream> {
    let mut rng = trial_rng(seed, stream);
    let model = scenario.realize(&mut rng)?;
    EpisodeStream::new(model, horizon, rng)
}

/// Runs one trial against every threshold in `b_grid` (ascending). Trial `i`
/// uses substream `stream_base + i`.
pub fn run_trial(
    spec: &DetectorSpec,
    scenario: &Scenario,
    b_grid: &[f64],
    horizon: Tick,
    seed: u64,
    stream: u64,
) -> Result<Vec<TrialResult>> {
    check_grid(b_grid)?;
    let episode = trial_episode(scenario, horizon, seed, stream)?;
    let change_point = episode.model().change_point();
    let mut det = spec.build(scenario.k(), b_grid[b_grid.len() - 1])?;
    let lookahead = det.lookahead() as Tick;
    let crossed = first_crossing_ticks(det.as_mut(), episode, b_grid)?;
    Ok(crossed
        .into_iter()
        .map(|c| TrialResult::new(spec.id(), c.map(|t| t + lookahead), change_point))
        .collect())
}

/// Mean run length with its standard error and censoring metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLengthEstimate {
    pub b: f64,
    pub mean: f64,
    pub se: f64,
    pub trials: usize,
    /// Trials contributing to the mean.
    pub used: usize,
    /// Trials without an alarm by the horizon (counted at the horizon).
    pub censored: usize,
    pub censored_frac: f64,
    /// Alarms at or before the change point (excluded from EDD).
    pub false_alarms: usize,
    /// More than half of the trials were censored.
    pub unreliable: bool,
}

fn summarize(b: f64, lengths: &[f64], trials: usize, censored: usize, false_alarms: usize) -> RunLengthEstimate {
    let n = lengths.len();
    let mean = if n == 0 { f64::NAN } else { lengths.iter().sum::<f64>() / n as f64 };
    let se = if n < 2 {
        f64::NAN
    } else {
        let var = lengths.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    let censored_frac = censored as f64 / trials as f64;
    RunLengthEstimate {
        b,
        mean,
        se,
        trials,
        used: n,
        censored,
        censored_frac,
        false_alarms,
        unreliable: censored_frac > 0.5,
    }
}

fn run_trials(
    spec: &DetectorSpec,
    scenario: &Scenario,
    b_grid: &[f64],
    mc: &MonteCarlo,
    stream_base: u64,
) -> Result<Vec<Vec<TrialResult>>> {
    mc.validate()?;
    check_grid(b_grid)?;
    (0..mc.trials as u64)
        .into_par_iter()
        .map(|i| run_trial(spec, scenario, b_grid, mc.horizon, mc.seed, stream_base + i))
        .collect()
}

/// ARL at each threshold of the ascending grid under a pure-noise scenario.
/// Censored trials count at the horizon.
pub fn arl_curve(
    spec: &DetectorSpec,
    noise: &Scenario,
    b_grid: &[f64],
    mc: &MonteCarlo,
) -> Result<Vec<RunLengthEstimate>> {
    if noise.has_change() {
        return Err(Error::invalid("ARL needs a scenario without change"));
    }
    let trials = run_trials(spec, noise, b_grid, mc, 0)?;
    Ok(collect_arl(&trials, b_grid, mc))
}

/// ARL estimates from already-run trials (one row per trial, one column per threshold).
pub fn collect_arl(trials: &[Vec<TrialResult>], b_grid: &[f64], mc: &MonteCarlo) -> Vec<RunLengthEstimate> {
    b_grid
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let mut censored = 0;
            let lengths: Vec<f64> = trials
                .iter()
                .map(|row| match row[j].stopped_at {
                    Some(s) => s as f64,
                    None => {
                        censored += 1;
                        mc.horizon as f64
                    }
                })
                .collect();
            summarize(b, &lengths, trials.len(), censored, 0)
        })
        .collect()
}

/// EDD at each threshold of the ascending grid: mean of `reported_at − τ` over
/// trials alarming after the change point `τ`. Earlier alarms are excluded and
/// counted as false alarms; censored trials count at `horizon − τ`.
pub fn edd_curve(
    spec: &DetectorSpec,
    change: &Scenario,
    b_grid: &[f64],
    mc: &MonteCarlo,
) -> Result<Vec<RunLengthEstimate>> {
    if !change.has_change() {
        return Err(Error::invalid("EDD needs a scenario with a change"));
    }
    let trials = run_trials(spec, change, b_grid, mc, EDD_STREAM_BASE)?;
    Ok(collect_edd(&trials, b_grid, mc))
}

/// EDD estimates from already-run trials.
pub fn collect_edd(trials: &[Vec<TrialResult>], b_grid: &[f64], mc: &MonteCarlo) -> Vec<RunLengthEstimate> {
    b_grid
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let mut censored = 0;
            let mut false_alarms = 0;
            let mut lengths = Vec::with_capacity(trials.len());
            for row in trials {
                let r = &row[j];
                let tau = r.change_point.unwrap_or(0);
                match r.stopped_at {
                    _ if r.false_alarm => false_alarms += 1,
                    Some(s) => lengths.push((s - tau) as f64),
                    None => {
                        censored += 1;
                        lengths.push((mc.horizon - tau) as f64);
                    }
                }
            }
            summarize(b, &lengths, trials.len(), censored, false_alarms)
        })
        .collect()
}

pub fn estimate_arl(spec: &DetectorSpec, noise: &Scenario, b: f64, mc: &MonteCarlo) -> Result<RunLengthEstimate> {
    Ok(arl_curve(spec, noise, &[b], mc)?.remove(0))
}

pub fn estimate_edd(spec: &DetectorSpec, change: &Scenario, b: f64, mc: &MonteCarlo) -> Result<RunLengthEstimate> {
    Ok(edd_curve(spec, change, &[b], mc)?.remove(0))
}

/// One point of an ARL–EDD operating curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub detector: String,
    pub b: f64,
    pub arl: RunLengthEstimate,
    pub edd: RunLengthEstimate,
}

impl CurvePoint {
    /// Larger of the ARL and EDD censoring fractions.
    pub fn censored_frac(&self) -> f64 {
        self.arl.censored_frac.max(self.edd.censored_frac)
    }
}

/// `(ARL, EDD)` per threshold. ARL episodes run `arl_mc.horizon` ticks of pure
/// noise; EDD episodes use `change` (change point 0 by convention).
pub fn operating_curve(
    spec: &DetectorSpec,
    noise: &Scenario,
    change: &Scenario,
    b_grid: &[f64],
    arl_mc: &MonteCarlo,
    edd_mc: &MonteCarlo,
) -> Result<Vec<CurvePoint>> {
    let arl = arl_curve(spec, noise, b_grid, arl_mc)?;
    let edd = edd_curve(spec, change, b_grid, edd_mc)?;
    Ok(arl
        .into_iter()
        .zip(edd)
        .map(|(arl, edd)| CurvePoint {
            detector: spec.id().to_string(),
            b: arl.b,
            arl,
            edd,
        })
        .collect())
}

/// Empirical mean projection energy `(û_tᵀx̃_t)²` of a Subspace-CUSUM
/// configuration, averaged over `trials` episodes of `horizon` ticks.
pub fn mean_projection_energy(cfg: &SubspaceConfig, scenario: &Scenario, mc: &MonteCarlo, stream_base: u64) -> Result<f64> {
    mc.validate()?;
    let sums: Vec<(f64, usize)> = (0..mc.trials as u64)
        .into_par_iter()
        .map(|i| {
            let episode = trial_episode(scenario, mc.horizon, mc.seed, stream_base + i)?;
            let mut det = SubspaceCusum::new(cfg.clone(), scenario.k(), f64::INFINITY)?;
            let mut acc = (0.0, 0);
            let mut add = |u: Option<Update>| {
                if let Some(Update::Step { energy: Some(e), .. }) = u {
                    acc.0 += e;
                    acc.1 += 1;
                }
            };
            for frame in episode {
                add(det.push(frame)?);
            }
            for u in det.finish()? {
                add(Some(u));
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let (sum, n) = sums.iter().fold((0.0, 0), |a, s| (a.0 + s.0, a.1 + s.1));
    if n == 0 {
        return Err(Error::EmptyWindow);
    }
    Ok(sum / n as f64)
}

/// Drift interval measured by simulation: pre-change and post-change mean
/// projection energy of the detector as configured (its own drift is ignored).
pub fn empirical_drift_bounds(
    cfg: &SubspaceConfig,
    noise: &Scenario,
    change: &Scenario,
    mc: &MonteCarlo,
) -> Result<DriftBounds> {
    let lower = mean_projection_energy(cfg, noise, mc, PILOT_STREAM_BASE)?;
    let upper = mean_projection_energy(cfg, change, mc, PILOT_STREAM_BASE + mc.trials as u64)?;
    Ok(DriftBounds::from_means(lower, upper))
}

/// Default drift for simulation: the midpoint of the closed-form interval when
/// it is nonempty, otherwise the midpoint of the empirical interval.
pub fn default_drift(
    closed_form: &DriftBounds,
    cfg: &SubspaceConfig,
    noise: &Scenario,
    change: &Scenario,
    pilot: &MonteCarlo,
) -> Result<f64> {
    if let Some(d) = closed_form.midpoint() {
        return Ok(d);
    }
    let empirical = empirical_drift_bounds(cfg, noise, change, pilot)?;
    empirical.midpoint().ok_or_else(|| {
        Error::DegenerateInput(format!(
            "post-change projection energy {:.4} does not exceed pre-change {:.4}",
            empirical.upper, empirical.lower
        ))
    })
}
