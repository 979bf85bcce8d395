//! Sequential change-point detection for asynchronous multi-sensor streams.
//!
//! The Subspace-CUSUM projects each aligned sample onto the leading
//! eigenvector of the next `w` samples and accumulates `(ûᵀx̃)² − d`. Relative
//! sensor delays are estimated jointly with the source waveform by alternating
//! per-sensor correlation scans with subspace updates.

pub mod detect;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod stream;
pub mod sync;

pub use detect::{
    async_pipeline, calibrate_drift, cusum_step_known_u, drift_bounds, one_shot_detector, run_detector,
    subspace_cusum_step, CusumState, Detector, DetectorSpec, DriftBounds, RunMode, StoppingReport,
    SubspaceConfig, SubspaceCusum,
};
pub use error::{Error, Result};
pub use linalg::{top_singular_vector, CovarianceWindow, EigenConfig, TopVector};
pub use model::{ScenarioModel, Waveform};
pub use sim::{generate_episode, MonteCarlo, Scenario};
pub use stream::{align_frames, DelayProfile, LookaheadBuffer, MultiSensorFrame, SensorStreams, Tick};
pub use sync::{joint_estimate, ml_delay, SyncConfig};
