//! One operator session, independent of transport: feed it client frames
//! and clock ticks, send back what it returns.

use std::path::PathBuf;

use joinery_core::demo::{ControllerInput, DemoType, EpisodeMeta, StreamRecorder, TeleopTransform};
use joinery_core::seed;
use joinery_core::sim::{mortise_polygons, sample_mortise_offset, start_pose, tenon_polygon, Sim, SimConfig};

use super::protocol::{ClientMessage, ServerMessage, StateFrame};
use crate::episode_io::save_episode;
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub sim: SimConfig,
    pub scale: f64,
    pub frame_alignment: f64,
    /// Largest |offset| of randomly placed slots, mm.
    pub offset_max: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub state_rate_hz: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            scale: 1.0,
            frame_alignment: 0.0,
            offset_max: 10.0,
            seed: 0,
            out_dir: PathBuf::from("episodes"),
            state_rate_hz: 30.0,
        }
    }
}

pub struct TeleopSession {
    cfg: SessionConfig,
    episode: u64,
    episode_seed: u64,
    sim: Sim,
    transform: TeleopTransform,
    recorder: StreamRecorder,
    input: ControllerInput,
}

impl TeleopSession {
    pub fn new(cfg: SessionConfig) -> Result<Self, Error> {
        let (sim, transform, recorder) = Self::scene(&cfg, 0.0, cfg.scale, 0)?;
        let mut s = Self { cfg, episode: 0, episode_seed: 0, sim, transform, recorder, input: ControllerInput::default() };
        s.start_episode(None, None)?;
        Ok(s)
    }

    fn scene(cfg: &SessionConfig, offset: f64, scale: f64, seed_: u64) -> Result<(Sim, TeleopTransform, StreamRecorder), Error> {
        let sim = Sim::new(cfg.sim, offset, seed_)?;
        let pose = start_pose();
        Ok((sim, TeleopTransform::new(scale, cfg.frame_alignment, pose), StreamRecorder::new(0.0, pose, false)))
    }

    fn start_episode(&mut self, offset: Option<f64>, scale: Option<f64>) -> Result<(), Error> {
        let s = seed::derive(&[self.cfg.seed, self.episode]);
        let offset = match offset {
            Some(o) => o,
            None => sample_mortise_offset(&mut seed::rng(&[s, 0]), self.cfg.offset_max),
        };
        let scale = scale.unwrap_or(self.transform.scale);
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Format(format!("scale {scale} must be positive")));
        }
        (self.sim, self.transform, self.recorder) = Self::scene(&self.cfg, offset, scale, s)?;
        self.episode_seed = s;
        self.episode += 1;
        self.input = ControllerInput::default();
        Ok(())
    }

    pub fn episode_id(&self) -> String {
        format!("teleop-{:016x}-{:04}", self.cfg.seed, self.episode)
    }

    pub fn sim(&self) -> &Sim {
        &self.sim
    }

    pub fn config_message(&self) -> ServerMessage {
        ServerMessage::Config {
            geometry: self.sim.config().geometry,
            scale: self.transform.scale,
            frame_alignment: self.cfg.frame_alignment,
            mortise_offset: self.sim.state().mortise_offset,
            episode_id: self.episode_id(),
            state_rate_hz: self.cfg.state_rate_hz,
        }
    }

    pub fn state_frame(&self) -> StateFrame {
        let st = self.sim.state();
        let g = &self.sim.config().geometry;
        StateFrame {
            t: st.clock * 1e3,
            pose: st.tenon_pose,
            command: self.transform.last_command(),
            wrench: self.recorder.latest_wrench().v,
            tenon: tenon_polygon(g, &st.tenon_pose).to_vec(),
            mortise: mortise_polygons(g, st.mortise_offset).to_vec(),
            status: st.status,
            recording: self.recorder.is_active(),
            depth: self.sim.insertion_depth(),
        }
    }

    /// Handles one text frame. Anything malformed gets an `error` reply and
    /// leaves the session as it was.
    pub fn handle(&mut self, text: &str) -> Vec<ServerMessage> {
        let msg: ClientMessage = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => return vec![error(format!("bad message: {e}"))],
        };
        match msg {
            ClientMessage::Hello { .. } => vec![self.config_message()],
            ClientMessage::Input(input) => {
                if !input.is_finite() {
                    return vec![error("input must be finite".into())];
                }
                self.input = input;
                self.transform.map_controller(&input);
                self.recorder.set_active(input.trigger);
                vec![]
            }
            ClientMessage::StartEpisode { offset, scale } => match self.start_episode(offset, scale) {
                Ok(()) => vec![self.config_message()],
                Err(e) => vec![error(e.to_string())],
            },
            ClientMessage::Save => match self.save() {
                Ok(m) => vec![m],
                Err(e) => vec![error(e.to_string())],
            },
        }
    }

    /// Advances the simulation by `dt` seconds toward the latest command.
    pub fn tick(&mut self, dt: f64) -> Result<(), Error> {
        let rec = &mut self.recorder;
        self.sim.step_observed(self.transform.last_command(), dt, &mut |s| rec.observe(s))?;
        Ok(())
    }

    /// Writes what was recorded so far and starts recording afresh.
    fn save(&mut self) -> Result<ServerMessage, Error> {
        let st = self.sim.state();
        let fresh = StreamRecorder::new(st.clock, st.tenon_pose, self.recorder.is_active());
        let rec = std::mem::replace(&mut self.recorder, fresh);
        if rec.poses().len() < 2 || rec.wrenches().len() < 2 {
            self.recorder = rec;
            return Err(Error::Format("nothing recorded yet: hold the trigger to record".into()));
        }
        let meta = EpisodeMeta {
            episode_id: self.episode_id(),
            demo_type: DemoType::Teleop,
            mortise_offset: st.mortise_offset,
            seed: self.episode_seed,
            units: Default::default(),
            retries: 0,
        };
        let ep = rec.finish(meta).map_err(|e| Error::Format(e.to_string()))?;
        if let Some(e) = ep.validate().first() {
            return Err(Error::Format(format!("recording is invalid: {e}")));
        }
        std::fs::create_dir_all(&self.cfg.out_dir)?;
        let path = self.cfg.out_dir.join(crate::episode_io::episode_file_name(&ep));
        save_episode(&ep, &path)?;
        Ok(ServerMessage::Saved {
            episode_id: ep.meta.episode_id,
            path: path.display().to_string(),
            pose_records: ep.pose_stream.len(),
            wrench_records: ep.wrench_stream.len(),
        })
    }
}

fn error(message: String) -> ServerMessage {
    ServerMessage::Error { message }
}
