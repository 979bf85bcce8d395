//! Fixtures shared by the benchmarks.

use subcusum::model::{ScenarioModel, Waveform};
use subcusum::{generate_episode, SensorStreams};

/// `k` sensors, unit noise, a constant mean shift of `mu` from tick `onset`.
pub fn mean_shift_episode(k: usize, mu: f64, onset: i64, horizon: i64, seed: u64) -> SensorStreams {
    let model = ScenarioModel::new(1.0, vec![mu; k], Waveform::step(), vec![onset; k])
        .expect("valid benchmark model");
    generate_episode(&model, horizon, seed).expect("episode")
}

/// Row-major `w × k` block of the episode starting at its first tick.
pub fn window_rows(streams: &SensorStreams, w: usize) -> Vec<f64> {
    streams
        .frames()
        .take(w)
        .flat_map(|f| f.into_values())
        .collect()
}
