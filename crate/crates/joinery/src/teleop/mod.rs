//! Teleoperation over WebSocket: a browser client steers the simulated robot
//! and records demonstrations.

mod protocol;
mod server;
mod session;

pub use protocol::{ClientMessage, ServerMessage, StateFrame};
pub use server::{serve, serve_connection};
pub use session::{SessionConfig, TeleopSession};
