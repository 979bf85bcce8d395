//! The four workflows. Each `fn <name>` computes its result from resolved
//! parameters; `run_<name>` writes it out.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{info, warn};
use subcusum::detect::{calibrate_drift, drift_bounds, find_peaks, run_detector, DelayRecord};
use subcusum::io;
use subcusum::sim::{self, CurvePoint, DelayPlan, MonteCarlo, Scenario};
use subcusum::{
    generate_episode, DetectorSpec, RunMode, ScenarioModel, SensorStreams, StoppingReport, SubspaceConfig,
    SubspaceCusum, Tick,
};

use crate::config::Params;
use crate::CliError;

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn finite(value: f64, flag: &str) -> Result<f64, CliError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::Config(format!("--{flag} must be finite, got {value}")))
    }
}

/// Delays are estimated when `--sync` is set, or by default when `tau-max > 0`.
fn wants_sync(p: &Params) -> bool {
    p.sync.unwrap_or(p.tau_max.unwrap_or(0) > 0)
}

fn subspace_config(p: &Params, k: usize, drift: f64) -> Result<SubspaceConfig, CliError> {
    let w = Params::require(&p.w, "w")?;
    let cfg = if wants_sync(p) {
        SubspaceConfig::asynchronous(w, drift, p.sync_config()?)
    } else {
        SubspaceConfig::synchronous(k, w, drift)
    };
    cfg.validate(k)?;
    Ok(cfg)
}

fn load_input(p: &Params) -> Result<SensorStreams, CliError> {
    let path = Params::require(&p.input, "in")?;
    let raw = io::read_sensor_csv_path(&path)?;
    let normalize = Params::flag(p.normalize) || p.normalize_prefix.is_some();
    if normalize {
        Ok(raw.normalized(p.normalize_prefix)?)
    } else {
        Ok(raw)
    }
}

fn head(streams: &SensorStreams, ticks: usize) -> Result<SensorStreams, CliError> {
    let series = (0..streams.k()).map(|i| streams.series(i)[..ticks].to_vec()).collect();
    Ok(SensorStreams::new(streams.origin(), series)?)
}

/// Episode from the model flags.
///
/// With `--onsets` the model is used as given; otherwise a signal (from `--mu`
/// or `--alpha`) starts at `--change-point` (default 0) with onsets drawn
/// within `--tau-max`. Without a signal the episode is pure noise.
pub fn simulate(p: &Params) -> Result<SensorStreams, CliError> {
    let seed = p.seed()?;
    let horizon = p.positive_horizon()?;
    let k = match (&p.k, &p.alpha) {
        (Some(k), _) => *k,
        (None, Some(a)) => a.len(),
        (None, None) => return Err(CliError::Config("--k is required".into())),
    };
    let sigma2 = p.sigma2();
    let waveform = p.waveform()?;
    let streams = match (p.amplitudes(k)?, &p.onsets) {
        (Some(alpha), Some(onsets)) => {
            let model = ScenarioModel::new(sigma2, alpha, waveform, onsets.clone())?;
            generate_episode(&model, horizon, seed)?
        }
        (Some(alpha), None) => {
            let base = ScenarioModel::pure_noise_with(sigma2, alpha, waveform)?;
            let plan = DelayPlan::Uniform {
                change_point: p.change_point.unwrap_or(0),
                tau_max: p.tau_max.unwrap_or(0),
            };
            let episode = sim::trial_episode(&Scenario::new(base, plan), horizon, seed, 0)?;
            SensorStreams::from_frames(&episode.collect::<Vec<_>>())?
        }
        (None, Some(_)) => return Err(CliError::Config("--onsets needs --mu or --alpha".into())),
        (None, None) => generate_episode(&ScenarioModel::pure_noise(k, sigma2)?, horizon, seed)?,
    };
    Ok(streams)
}

pub fn run_simulate(p: &Params) -> Result<(), CliError> {
    let streams = simulate(p)?;
    io::write_sensor_csv(sink(p.out.as_deref())?, &streams)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// `factor × mean`.
    pub d: f64,
    /// Mean projection energy over the prefix.
    pub mean: f64,
    /// Increments that entered the mean.
    pub samples: usize,
}

fn calibrate_streams(p: &Params, streams: &SensorStreams) -> Result<Calibration, CliError> {
    let factor = finite(p.factor(), "factor")?;
    let cfg = subspace_config(p, streams.k(), 0.0)?;
    let prefix = p.prefix.unwrap_or(streams.len());
    if prefix > streams.len() {
        return Err(CliError::Config(format!(
            "--prefix {prefix} exceeds the {} ticks in the input",
            streams.len()
        )));
    }
    if prefix < cfg.w {
        return Err(CliError::Config(format!("--prefix {prefix} is shorter than one window (w = {})", cfg.w)));
    }
    let out = subcusum::async_pipeline(&head(streams, prefix)?, &cfg, f64::INFINITY, RunMode::Full)?;
    let energies: Vec<f64> = out.report.energies.iter().map(|(_, e)| *e).collect();
    if energies.is_empty() {
        return Err(CliError::Config(format!(
            "no complete window in the first {prefix} ticks (w = {}, tau-max = {})",
            cfg.w,
            p.tau_max.unwrap_or(0)
        )));
    }
    let mean = energies.iter().sum::<f64>() / energies.len() as f64;
    let d = calibrate_drift(&energies, factor)?;
    info!("calibrated d = {d} from {} increments (mean {mean})", energies.len());
    Ok(Calibration {
        d,
        mean,
        samples: energies.len(),
    })
}

pub fn calibrate(p: &Params) -> Result<Calibration, CliError> {
    calibrate_streams(p, &load_input(p)?)
}

pub fn run_calibrate(p: &Params) -> Result<(), CliError> {
    let c = calibrate(p)?;
    let mut out = sink(p.out.as_deref())?;
    writeln!(out, "{}", c.d)?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub report: StoppingReport,
    pub delays: Vec<DelayRecord>,
    pub origin: Tick,
    /// Largest trajectory peaks, tallest first.
    pub peaks: Vec<(Tick, f64)>,
    /// Ticks whose subspace estimate did not converge.
    pub unconverged: u64,
}

pub fn detect(p: &Params) -> Result<Detection, CliError> {
    if let Some(rate) = p.rate {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(CliError::Config(format!("--rate must be > 0, got {rate}")));
        }
    }
    let b = match p.b {
        Some(b) => finite(b, "b")?,
        None => f64::INFINITY,
    };
    let streams = load_input(p)?;
    let mode = if Params::flag(p.full) || b == f64::INFINITY {
        RunMode::Full
    } else {
        RunMode::StopAtAlarm
    };
    let detector = p.detector.as_deref().unwrap_or("subspace");
    let (report, delays, unconverged) = match detector {
        "subspace" => {
            let d = match (p.d, p.prefix) {
                (Some(d), _) => finite(d, "d")?,
                (None, Some(_)) => calibrate_streams(p, &streams)?.d,
                (None, None) => return Err(CliError::Config("give --d, or --prefix to calibrate it".into())),
            };
            let cfg = subspace_config(p, streams.k(), d)?;
            let mut det = SubspaceCusum::new(cfg, streams.k(), b)?;
            let report = run_detector(&mut det, streams.frames(), mode)?;
            let unconverged = det.unconverged_ticks();
            (report, det.delay_history().to_vec(), unconverged)
        }
        "one-shot" => {
            let mu = Params::require(&p.mu, "mu")?;
            let spec = DetectorSpec::OneShot { mu, sigma2: p.sigma2() };
            let mut det = spec.build(streams.k(), b)?;
            (run_detector(det.as_mut(), streams.frames(), mode)?, Vec::new(), 0)
        }
        other => return Err(CliError::Config(format!("unknown detector `{other}` (subspace or one-shot)"))),
    };
    let separation = p.peak_separation.unwrap_or(report.lookahead.max(1) as Tick);
    let peaks = find_peaks(&report.trajectory, separation, p.peaks.unwrap_or(0));
    Ok(Detection {
        report,
        delays,
        origin: streams.origin(),
        peaks,
        unconverged,
    })
}

pub fn run_detect(p: &Params) -> Result<(), CliError> {
    let det = detect(p)?;
    let timing = p.rate.map(|r| (r, det.origin));
    let unconverged_delays = det.delays.iter().filter(|r| !r.profile.converged()).count();
    if det.unconverged > 0 || unconverged_delays > 0 {
        let msg = format!(
            "{} ticks used an unconverged subspace estimate, {unconverged_delays} delay searches hit n-max",
            det.unconverged
        );
        if Params::flag(p.strict) {
            return Err(CliError::NonConvergence(msg));
        }
        info!("{msg}");
    }
    io::write_report_csv(sink(p.out.as_deref())?, &det.report, timing)?;
    if let Some(path) = &p.trajectory {
        io::write_trajectory_csv(sink(Some(path))?, &det.report.trajectory)?;
    }
    if let Some(path) = &p.delays {
        io::write_delays_csv(sink(Some(path))?, &det.delays)?;
    }
    for (i, (t, s)) in det.peaks.iter().enumerate() {
        match timing {
            Some((rate, origin)) => eprintln!("peak {}: t={t} ({:.1} s) S={s:.3}", i + 1, (t - origin) as f64 / rate),
            None => eprintln!("peak {}: t={t} S={s:.3}", i + 1),
        }
    }
    Ok(())
}

/// Operating curves for the requested detectors, subspace first.
pub fn curve(p: &Params) -> Result<Vec<CurvePoint>, CliError> {
    let k = Params::require(&p.k, "k")?;
    let sigma2 = p.sigma2();
    let seed = p.seed()?;
    let trials = p.positive_trials()?;
    let horizon = p.positive_horizon()?;
    let alpha = p
        .amplitudes(k)?
        .ok_or_else(|| CliError::Config("--mu or --alpha is required".into()))?;
    let which = p.detector.as_deref().unwrap_or("both");
    let (with_sub, with_one) = match which {
        "both" => (true, true),
        "subspace" => (true, false),
        "one-shot" => (false, true),
        other => {
            return Err(CliError::Config(format!(
                "unknown detector `{other}` (subspace, one-shot or both)"
            )))
        }
    };
    let grid = Params::require(&p.b_grid, "b-grid")?;
    let one_grid = p.b_grid_one_shot.clone().unwrap_or_else(|| grid.clone());
    for g in [&grid, &one_grid] {
        if g.is_empty() {
            return Err(CliError::Config("--b-grid is empty".into()));
        }
        if g.windows(2).any(|w| w[0] >= w[1]) || g.iter().any(|b| !b.is_finite()) {
            return Err(CliError::Config("--b-grid must be finite and strictly increasing".into()));
        }
    }
    let mu = if with_one {
        Some(Params::require(&p.mu, "mu")?)
    } else {
        None
    };
    let sub_cfg = if with_sub {
        Some(subspace_config(p, k, p.d.unwrap_or(0.0))?)
    } else {
        None
    };

    let waveform = p.waveform()?;
    let base = ScenarioModel::pure_noise_with(sigma2, alpha, waveform.clone())?;
    let rho = base.alpha_norm2() * waveform.average_energy(p.w.unwrap_or(1)) / sigma2;
    let change = Scenario::new(
        base,
        DelayPlan::Uniform {
            change_point: 0,
            tau_max: p.tau_max.unwrap_or(0),
        },
    );
    let noise = Scenario::pure_noise(k, sigma2)?;
    let mc = MonteCarlo::new(trials, horizon, seed);

    let mut points = Vec::new();
    if let Some(mut cfg) = sub_cfg {
        if p.d.is_none() {
            let closed = drift_bounds(sigma2, rho, k, cfg.w)?;
            let pilot = MonteCarlo::new(p.pilot_trials.unwrap_or(8), p.pilot_horizon.unwrap_or(3000), seed);
            cfg.drift = sim::default_drift(&closed, &cfg, &noise, &change, &pilot)?;
            info!("default drift d = {}", cfg.drift);
        }
        points.extend(sim::operating_curve(&DetectorSpec::Subspace(cfg), &noise, &change, &grid, &mc, &mc)?);
    }
    if let Some(mu) = mu {
        let spec = DetectorSpec::OneShot { mu, sigma2 };
        points.extend(sim::operating_curve(&spec, &noise, &change, &one_grid, &mc, &mc)?);
    }
    for pt in &points {
        if pt.arl.unreliable || pt.edd.unreliable {
            warn!("{} b={}: more than half the trials were censored", pt.detector, pt.b);
        }
    }
    Ok(points)
}

pub fn run_curve(p: &Params) -> Result<(), CliError> {
    let points = curve(p)?;
    io::write_curve_csv(sink(p.out.as_deref())?, &points)?;
    Ok(())
}
