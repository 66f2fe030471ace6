//! Demonstration generation: scripted expert, teleoperation mapping, and
//! sensor stream recording.

mod episode;
mod expert;
mod recorder;
mod teleop;

pub use episode::{DemoType, EpisodeError, EpisodeMeta, EpisodeRecord, PoseRecord, Units, WrenchRecord};
pub use expert::{
    batch_offsets, collect_batch, expert_attempt, recovery_assignment, scripted_demo, BatchSpec, DemoError,
    ExpertParams, OuNoise, Variant,
};
pub use recorder::{
    FirstOrderLowPass, RecordError, StreamRecorder, ANTI_ALIAS_CUTOFF_HZ, POSE_PERIOD_MS, WRENCH_PERIOD_MS,
};
pub use teleop::{ControllerInput, TeleopTransform};
