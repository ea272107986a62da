//! Time-lagged linear decoding of imagined cursor kinematics from EEG.
//!
//! The crate covers the whole offline pipeline: a synthetic subject that
//! produces EEG from intended velocity, least-squares calibration of a
//! lag-embedded linear decoder, closed-loop simulation of the cursor task,
//! run statistics, and replay of cursor positions as robot hand gestures.

pub mod decoder;
pub mod error;
pub mod gesture;
pub mod io;
pub mod linalg;
pub mod protocol;
pub mod recording;
pub mod signal;
pub mod synth;

pub use decoder::{build_design, evaluate, fit, DecoderModel, DesignMatrix, EvalReport, FitOptions, Velocity};
pub use error::{Error, Result};
pub use gesture::{map_position, replay, GestureCommand, GestureKind, ReplayConfig};
pub use protocol::{calibrate, compute_stats, run_test_phase, run_training_phase, RunStats, SessionConfig, Trial};
pub use recording::{Annotation, Axis, Kinematics, Phase, Recording, TargetSide};
pub use signal::{AcquisitionConfig, CausalFilterState, EegFrame, LagWindow};
pub use synth::{IntentPolicy, SyntheticSubject};
