//! Run configuration: `key = value` preset files merged under command-line
//! flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Command, FromArgMatches};
use subcusum::detect::DEFAULT_CALIBRATION_FACTOR;
use subcusum::{SyncConfig, Tick, Waveform};

use crate::CliError;

/// Every tunable shared by the subcommands. All fields are optional so that a
/// preset file and the flags can be layered.
#[derive(Debug, Clone, Default, Args)]
pub struct Params {
    /// Preset file with `key = value` lines (keys are flag names).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Number of sensors.
    #[arg(long)]
    pub k: Option<usize>,
    /// Noise variance.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Common signal amplitude (every α_i = μ).
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Per-sensor amplitudes, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alpha: Option<Vec<f64>>,
    /// `step`, `sine:<period>` (persistent) or `pulse:<period>` (one sine cycle).
    #[arg(long)]
    pub waveform: Option<String>,
    /// Per-sensor onsets, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub onsets: Option<Vec<Tick>>,
    /// Change point for randomly drawn onsets within `tau-max`.
    #[arg(long, allow_hyphen_values = true)]
    pub change_point: Option<Tick>,

    /// Lookahead window.
    #[arg(long)]
    pub w: Option<usize>,
    /// Largest relative delay searched.
    #[arg(long)]
    pub tau_max: Option<usize>,
    /// Delay convergence tolerance in ticks.
    #[arg(long)]
    pub delta: Option<usize>,
    /// Maximum delay-estimation passes.
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Estimate relative delays on the lookahead window.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub sync: Option<bool>,

    /// Drift parameter.
    #[arg(long, allow_hyphen_values = true)]
    pub d: Option<f64>,
    /// Calibration factor applied to the pre-change mean energy.
    #[arg(long)]
    pub factor: Option<f64>,
    /// Calibration prefix in ticks.
    #[arg(long)]
    pub prefix: Option<usize>,
    /// Threshold.
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    /// Thresholds, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub b_grid: Option<Vec<f64>>,
    /// Thresholds for the one-shot curve (defaults to `b-grid`).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub b_grid_one_shot: Option<Vec<f64>>,
    /// `subspace`, `one-shot` or `both` (curve only).
    #[arg(long)]
    pub detector: Option<String>,

    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub horizon: Option<Tick>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Episodes per pilot run when the drift is derived by simulation.
    #[arg(long)]
    pub pilot_trials: Option<usize>,
    /// Ticks per pilot episode.
    #[arg(long)]
    pub pilot_horizon: Option<Tick>,

    /// Sampling rate in Hz; adds alarm times in seconds.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Standardize every sensor before detection.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    /// Take normalization statistics from the first N ticks only.
    #[arg(long)]
    pub normalize_prefix: Option<usize>,
    /// Keep running after the first alarm.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub full: Option<bool>,
    /// Report the N largest statistic peaks.
    #[arg(long)]
    pub peaks: Option<usize>,
    /// Minimum separation between reported peaks, in ticks.
    #[arg(long)]
    pub peak_separation: Option<Tick>,
    /// Fail with exit code 3 if any power iteration or delay search did not converge.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict: Option<bool>,

    /// Input CSV.
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Main output file (stdout when absent).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Trajectory CSV (detect).
    #[arg(long, value_name = "PATH")]
    pub trajectory: Option<PathBuf>,
    /// Delay log CSV (detect).
    #[arg(long, value_name = "PATH")]
    pub delays: Option<PathBuf>,
}

macro_rules! layer {
    ($hi:expr, $lo:expr; $($f:ident),* $(,)?) => {
        $( if $hi.$f.is_none() { $hi.$f = $lo.$f.take(); } )*
    };
}

impl Params {
    /// Fills every unset field from `lower`.
    pub fn or(mut self, mut lower: Params) -> Params {
        layer!(self, lower;
            k, sigma2, mu, alpha, waveform, onsets, change_point, w, tau_max, delta, n_max, sync,
            d, factor, prefix, b, b_grid, b_grid_one_shot, detector, trials, horizon, seed,
            pilot_trials, pilot_horizon, rate, normalize, normalize_prefix, full, peaks,
            peak_separation, strict, input, out, trajectory, delays,
        );
        self
    }

    /// Applies the preset named by `--config`, if any.
    pub fn resolve(self) -> Result<Params, CliError> {
        match self.config.clone() {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                let preset = parse_preset(&text, &path)?;
                let preset = preset.resolve_relative(path.parent().unwrap_or(Path::new(".")));
                Ok(self.or(preset))
            }
            None => Ok(self),
        }
    }

    fn resolve_relative(mut self, base: &Path) -> Params {
        for p in [&mut self.input, &mut self.out, &mut self.trajectory, &mut self.delays].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        self
    }

    pub fn require<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, CliError> {
        value
            .clone()
            .ok_or_else(|| CliError::Config(format!("--{flag} is required")))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        Self::require(&self.seed, "seed")
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2.unwrap_or(1.0)
    }

    pub fn factor(&self) -> f64 {
        self.factor.unwrap_or(DEFAULT_CALIBRATION_FACTOR)
    }

    pub fn flag(value: Option<bool>) -> bool {
        value.unwrap_or(false)
    }

    /// Amplitudes from `--alpha`, or `--mu` repeated `k` times.
    pub fn amplitudes(&self, k: usize) -> Result<Option<Vec<f64>>, CliError> {
        match (&self.alpha, self.mu) {
            (Some(_), Some(_)) => Err(CliError::Config("give either --alpha or --mu, not both".into())),
            (Some(a), None) if a.len() != k => Err(CliError::Config(format!(
                "--alpha has {} entries, expected k = {k}",
                a.len()
            ))),
            (Some(a), None) => Ok(Some(a.clone())),
            (None, Some(mu)) => Ok(Some(vec![mu; k])),
            (None, None) => Ok(None),
        }
    }

    pub fn waveform(&self) -> Result<Waveform, CliError> {
        match self.waveform.as_deref() {
            None | Some("step") => Ok(Waveform::step()),
            Some(s) => {
                let (kind, period) = s.split_once(':').unwrap_or((s, ""));
                match (kind, period.parse::<usize>()) {
                    ("sine", Ok(p)) if p >= 2 => Ok(Waveform::Sinusoid {
                        amplitude: 1.0,
                        period: p as f64,
                        phase: 0.0,
                    }),
                    ("pulse", Ok(p)) if p >= 2 => Ok(Waveform::sine_cycle(p)),
                    _ => Err(CliError::Config(format!(
                        "unknown waveform `{s}` (use `step`, `sine:<period>` or `pulse:<period>`)"
                    ))),
                }
            }
        }
    }

    pub fn sync_config(&self) -> Result<SyncConfig, CliError> {
        let mut sync = SyncConfig::new(self.tau_max.unwrap_or(0));
        if let Some(delta) = self.delta {
            sync.delta = delta;
        }
        if let Some(n_max) = self.n_max {
            sync.n_max = n_max;
        }
        sync.validate()?;
        Ok(sync)
    }

    pub fn positive_trials(&self) -> Result<usize, CliError> {
        match Self::require(&self.trials, "trials")? {
            0 => Err(CliError::Config("--trials must be at least 1".into())),
            n => Ok(n),
        }
    }

    pub fn positive_horizon(&self) -> Result<Tick, CliError> {
        match Self::require(&self.horizon, "horizon")? {
            h if h < 1 => Err(CliError::Config(format!("--horizon must be at least 1, got {h}"))),
            h => Ok(h),
        }
    }
}

/// Parses a preset: one `key = value` per line, `#` comments, keys spelled as
/// the long flags. Values go through the flag parser, so list syntax and
/// validation match the command line.
pub fn parse_preset(text: &str, origin: &Path) -> Result<Params, CliError> {
    let mut entries = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "{}:{}: expected `key = value`",
                origin.display(),
                n + 1
            )));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key == "config" {
            return Err(CliError::Config(format!("{}:{}: presets cannot nest", origin.display(), n + 1)));
        }
        entries.insert(key, value.trim().to_string());
    }
    let mut argv = vec!["preset".to_string()];
    for (key, value) in entries {
        argv.push(format!("--{key}={value}"));
    }
    let cmd = Params::augment_args(Command::new("preset").no_binary_name(false));
    let matches = cmd
        .try_get_matches_from(argv)
        .map_err(|e| CliError::Config(format!("{}: {}", origin.display(), e.kind())))?;
    Params::from_arg_matches(&matches).map_err(|e| CliError::Config(format!("{}: {e}", origin.display())))
}
