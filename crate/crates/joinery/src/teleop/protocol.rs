//! JSON text frames exchanged with the teleoperation client. Every frame is
//! an object whose `type` field names the message.

use joinery_core::demo::ControllerInput;
use joinery_core::sim::{JointGeometry, PlanarPose, Status};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        #[serde(default)]
        client: Option<String>,
    },
    Input(ControllerInput),
    /// Resets the scene. Missing fields keep the session defaults; a missing
    /// offset is drawn at random.
    StartEpisode {
        #[serde(default)]
        offset: Option<f64>,
        #[serde(default)]
        scale: Option<f64>,
    },
    Save,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Config {
        geometry: JointGeometry,
        /// Robot mm per controller unit.
        scale: f64,
        /// rad
        frame_alignment: f64,
        mortise_offset: f64,
        episode_id: String,
        state_rate_hz: f64,
    },
    State(StateFrame),
    Saved {
        episode_id: String,
        path: String,
        pose_records: usize,
        wrench_records: usize,
    },
    Error {
        message: String,
    },
}

/// What the client draws. Outlines are world-frame (x, z) vertices in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    /// Simulated time, ms.
    pub t: f64,
    pub pose: PlanarPose,
    pub command: PlanarPose,
    /// Filtered tool-frame wrench `[fx, fy, fz, tx, ty, tz]`.
    pub wrench: [f64; 6],
    pub tenon: Vec<[f64; 2]>,
    pub mortise: Vec<Vec<[f64; 2]>>,
    pub status: Status,
    pub recording: bool,
    pub depth: f64,
}
