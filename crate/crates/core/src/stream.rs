//! Stream-level domain types: multi-sensor frames, per-sensor sample storage,
//! the lookahead buffer that hands each logical tick its future window, delay
//! profiles, alignment of asynchronous streams and per-sensor normalization.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Sample index in ticks.
pub type Tick = i64;

/// One tick of readings from all `k` sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSensorFrame {
    t: Tick,
    values: Vec<f64>,
}

impl MultiSensorFrame {
    /// Builds a frame, rejecting `k < 2` and non-finite readings.
    pub fn new(t: Tick, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "a frame needs at least 2 sensors, got {}",
                values.len()
            )));
        }
        if let Some(sensor) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t, sensor });
        }
        Ok(Self { t, values })
    }

    pub fn t(&self) -> Tick {
        self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Random access to individual sensor samples by tick.
pub trait SampleSource {
    fn sensors(&self) -> usize;
    fn sample(&self, sensor: usize, t: Tick) -> Option<f64>;
}

/// Column storage of `k` equally long sensor series starting at `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorStreams {
    origin: Tick,
    series: Vec<Vec<f64>>,
}

impl SensorStreams {
    pub fn new(origin: Tick, series: Vec<Vec<f64>>) -> Result<Self> {
        if series.len() < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 sensor series, got {}",
                series.len()
            )));
        }
        let len = series[0].len();
        for (sensor, s) in series.iter().enumerate() {
            if s.len() != len {
                return Err(Error::DimensionMismatch {
                    expected: len,
                    got: s.len(),
                });
            }
            if let Some(n) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    t: origin + n as Tick,
                    sensor,
                });
            }
        }
        Ok(Self { origin, series })
    }

    /// Collects contiguous frames into columns.
    pub fn from_frames(frames: &[MultiSensorFrame]) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyWindow)?;
        let k = first.k();
        let mut series = vec![Vec::with_capacity(frames.len()); k];
        for (expected, frame) in (first.t..).zip(frames) {
            if frame.k() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: frame.k(),
                });
            }
            if frame.t != expected {
                return Err(if frame.t < expected {
                    Error::StreamOrder {
                        last: expected - 1,
                        got: frame.t,
                    }
                } else {
                    Error::StreamGap {
                        expected,
                        got: frame.t,
                    }
                });
            }
            for (col, v) in series.iter_mut().zip(frame.values()) {
                col.push(*v);
            }
        }
        Ok(Self {
            origin: first.t,
            series,
        })
    }

    pub fn origin(&self) -> Tick {
        self.origin
    }

    /// Number of ticks.
    pub fn len(&self) -> usize {
        self.series[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One past the last tick.
    pub fn end(&self) -> Tick {
        self.origin + self.len() as Tick
    }

    pub fn k(&self) -> usize {
        self.series.len()
    }

    pub fn series(&self, sensor: usize) -> &[f64] {
        &self.series[sensor]
    }

    pub fn frame(&self, t: Tick) -> Option<MultiSensorFrame> {
        let n = self.index(t)?;
        Some(MultiSensorFrame {
            t,
            values: self.series.iter().map(|s| s[n]).collect(),
        })
    }

    pub fn frames(&self) -> impl Iterator<Item = MultiSensorFrame> + '_ {
        (self.origin..self.end()).filter_map(move |t| self.frame(t))
    }

    /// Applies [`normalize_stream`] (or its prefix variant) to every sensor.
    pub fn normalized(&self, prefix: Option<usize>) -> Result<Self> {
        let series = self
            .series
            .iter()
            .map(|s| match prefix {
                Some(p) => normalize_stream_with_prefix(s, p),
                None => normalize_stream(s),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            origin: self.origin,
            series,
        })
    }

    fn index(&self, t: Tick) -> Option<usize> {
        if t < self.origin || t >= self.end() {
            None
        } else {
            Some((t - self.origin) as usize)
        }
    }
}

impl SampleSource for SensorStreams {
    fn sensors(&self) -> usize {
        self.k()
    }

    fn sample(&self, sensor: usize, t: Tick) -> Option<f64> {
        let n = self.index(t)?;
        self.series.get(sensor).map(|s| s[n])
    }
}

/// Sliding store that releases logical tick `t` only once the frames
/// `t+1 ..= t+lookahead` have been absorbed. Optionally retains `history`
/// frames before the released tick for negative-shift access.
#[derive(Debug, Clone)]
pub struct LookaheadBuffer {
    lookahead: usize,
    history: usize,
    k: Option<usize>,
    frames: VecDeque<MultiSensorFrame>,
    first_t: Option<Tick>,
    newest_t: Option<Tick>,
    emitted_t: Option<Tick>,
    absorbed: u64,
    emitted: u64,
}

impl LookaheadBuffer {
    pub fn new(lookahead: usize) -> Self {
        Self::with_history(lookahead, 0)
    }

    pub fn with_history(lookahead: usize, history: usize) -> Self {
        Self {
            lookahead,
            history,
            k: None,
            frames: VecDeque::with_capacity(lookahead + history + 2),
            first_t: None,
            newest_t: None,
            emitted_t: None,
            absorbed: 0,
            emitted: 0,
        }
    }

    /// Absorbs `frame` and releases the frame at logical time
    /// `newest - lookahead` once it is available.
    pub fn push(&mut self, frame: MultiSensorFrame) -> Result<Option<MultiSensorFrame>> {
        match self.k {
            Some(k) if k != frame.k() => {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: frame.k(),
                })
            }
            None => self.k = Some(frame.k()),
            _ => {}
        }
        if let Some(last) = self.newest_t {
            if frame.t <= last {
                return Err(Error::StreamOrder { last, got: frame.t });
            }
            if frame.t != last + 1 {
                return Err(Error::StreamGap {
                    expected: last + 1,
                    got: frame.t,
                });
            }
        }
        let t = frame.t;
        self.first_t.get_or_insert(t);
        self.newest_t = Some(t);
        self.frames.push_back(frame);
        self.absorbed += 1;

        if t - self.candidate() < self.lookahead as Tick {
            return Ok(None);
        }
        Ok(self.release())
    }

    /// Releases the next buffered tick even though its lookahead is incomplete;
    /// used to drain the buffer at end of stream.
    pub fn flush(&mut self) -> Option<MultiSensorFrame> {
        let newest = self.newest_t?;
        if self.candidate() > newest {
            return None;
        }
        self.release()
    }

    fn candidate(&self) -> Tick {
        match self.emitted_t {
            Some(e) => e + 1,
            None => self.first_t.unwrap_or(Tick::MIN),
        }
    }

    fn release(&mut self) -> Option<MultiSensorFrame> {
        let candidate = self.candidate();
        self.emitted_t = Some(candidate);
        self.emitted += 1;
        let keep_from = candidate - self.history as Tick;
        while self.frames.front().is_some_and(|f| f.t < keep_from) {
            self.frames.pop_front();
        }
        self.get(candidate).cloned()
    }

    pub fn get(&self, t: Tick) -> Option<&MultiSensorFrame> {
        let front = self.frames.front()?.t;
        if t < front {
            return None;
        }
        self.frames.get((t - front) as usize)
    }

    /// Frames strictly after the last released tick.
    pub fn future(&self) -> impl Iterator<Item = &MultiSensorFrame> {
        let after = self.emitted_t.unwrap_or(Tick::MIN);
        self.frames.iter().filter(move |f| f.t > after)
    }

    pub fn lookahead(&self) -> usize {
        self.lookahead
    }

    pub fn history(&self) -> usize {
        self.history
    }

    pub fn emitted_t(&self) -> Option<Tick> {
        self.emitted_t
    }

    pub fn newest_t(&self) -> Option<Tick> {
        self.newest_t
    }

    pub fn oldest_t(&self) -> Option<Tick> {
        self.frames.front().map(|f| f.t)
    }

    pub fn absorbed(&self) -> u64 {
        self.absorbed
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }
}

impl SampleSource for LookaheadBuffer {
    fn sensors(&self) -> usize {
        self.k.unwrap_or(0)
    }

    fn sample(&self, sensor: usize, t: Tick) -> Option<f64> {
        self.get(t).and_then(|f| f.values.get(sensor).copied())
    }
}

/// Relative delays `τ̂_{1i}` of each sensor with respect to the reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayProfile {
    shifts: Vec<Tick>,
    tau_max: usize,
    reference: usize,
    iterations: usize,
    converged: bool,
}

impl DelayProfile {
    pub fn zero(k: usize, tau_max: usize) -> Self {
        Self {
            shifts: vec![0; k],
            tau_max,
            reference: 0,
            iterations: 0,
            converged: true,
        }
    }

    /// Validates that the reference shift is zero and every shift is within `±tau_max`.
    pub fn new(shifts: Vec<Tick>, tau_max: usize, reference: usize) -> Result<Self> {
        if reference >= shifts.len() {
            return Err(Error::invalid(format!(
                "reference sensor {reference} out of range for k = {}",
                shifts.len()
            )));
        }
        if shifts[reference] != 0 {
            return Err(Error::invalid("reference sensor must have zero delay"));
        }
        if let Some(s) = shifts.iter().find(|s| s.unsigned_abs() as usize > tau_max) {
            return Err(Error::invalid(format!(
                "delay {s} outside [-{tau_max}, {tau_max}]"
            )));
        }
        Ok(Self {
            shifts,
            tau_max,
            reference,
            iterations: 0,
            converged: true,
        })
    }

    pub(crate) fn with_convergence(mut self, iterations: usize, converged: bool) -> Self {
        self.iterations = iterations;
        self.converged = converged;
        self
    }

    pub fn shifts(&self) -> &[Tick] {
        &self.shifts
    }

    pub fn shift(&self, sensor: usize) -> Tick {
        self.shifts[sensor]
    }

    pub fn k(&self) -> usize {
        self.shifts.len()
    }

    pub fn tau_max(&self) -> usize {
        self.tau_max
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Largest forward shift (samples needed beyond `t`).
    pub fn max_forward(&self) -> usize {
        self.shifts.iter().copied().max().unwrap_or(0).max(0) as usize
    }

    /// Largest backward shift (samples needed before `t`).
    pub fn max_backward(&self) -> usize {
        (-self.shifts.iter().copied().min().unwrap_or(0)).max(0) as usize
    }
}

/// Builds `x̃_t` with component `i` equal to `x_i(t + τ̂_{1i})`.
pub fn align_frames<S: SampleSource + ?Sized>(
    source: &S,
    t: Tick,
    delays: &DelayProfile,
) -> Result<MultiSensorFrame> {
    if source.sensors() != delays.k() {
        return Err(Error::DimensionMismatch {
            expected: delays.k(),
            got: source.sensors(),
        });
    }
    let values = delays
        .shifts()
        .iter()
        .enumerate()
        .map(|(sensor, &shift)| {
            let needed = t + shift;
            source
                .sample(sensor, needed)
                .ok_or(Error::InsufficientLookahead { sensor, needed })
        })
        .collect::<Result<Vec<_>>>()?;
    MultiSensorFrame::new(t, values)
}

/// Location and scale used to normalize one sensor series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    pub mean: f64,
    pub max_abs: f64,
}

impl NormalizationStats {
    pub fn from_series(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::DegenerateInput("empty series".into()));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput("series contains non-finite values".into()));
        }
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let max_abs = raw.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        let magnitude = raw.iter().map(|v| v.abs()).fold(0.0, f64::max);
        // Rounding in the mean can leave residue of order eps·|x| on a constant series.
        if max_abs <= 1e-12 * magnitude || max_abs == 0.0 {
            return Err(Error::DegenerateInput(
                "series is constant; nothing left after centering".into(),
            ));
        }
        Ok(Self { mean, max_abs })
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().map(|v| (v - self.mean) / self.max_abs).collect()
    }
}

/// Subtracts the series mean, then divides by the largest absolute centered value.
pub fn normalize_stream(raw: &[f64]) -> Result<Vec<f64>> {
    Ok(NormalizationStats::from_series(raw)?.apply(raw))
}

/// Like [`normalize_stream`] but estimates mean and scale on the first
/// `prefix` samples only (e.g. a known pre-change stretch).
pub fn normalize_stream_with_prefix(raw: &[f64], prefix: usize) -> Result<Vec<f64>> {
    if prefix == 0 || prefix > raw.len() {
        return Err(Error::invalid(format!(
            "normalization prefix {prefix} outside 1..={}",
            raw.len()
        )));
    }
    Ok(NormalizationStats::from_series(&raw[..prefix])?.apply(raw))
}
