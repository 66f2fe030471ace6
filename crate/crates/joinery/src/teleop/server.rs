//! Blocking WebSocket transport. One session at a time; the simulation runs
//! in real time at the command rate between incoming frames.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use super::protocol::ServerMessage;
use super::session::{SessionConfig, TeleopSession};
use crate::Error;

/// Longest stretch of simulated time caught up in one go; beyond it the
/// simulation drops behind the wall clock instead of stalling the socket.
const MAX_CATCH_UP_S: f64 = 0.25;

/// Accepts connections one after another. Stops after `max_sessions` if
/// given.
pub fn serve(
    listener: TcpListener,
    cfg: &SessionConfig,
    max_sessions: Option<usize>,
    log: &mut dyn FnMut(&str),
) -> Result<(), Error> {
    for (served, stream) in (1..).zip(listener.incoming()) {
        let stream = stream?;
        let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
        log(&format!("session from {peer}"));
        if let Err(e) = serve_connection(stream, cfg.clone()) {
            log(&format!("session ended with error: {e}"));
        }
        if max_sessions.is_some_and(|m| served >= m) {
            break;
        }
    }
    Ok(())
}

fn send(ws: &mut WebSocket<TcpStream>, msg: &ServerMessage) -> Result<(), Error> {
    ws.send(Message::text(serde_json::to_string(msg)?))?;
    Ok(())
}

fn is_closed(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed)
}

/// Runs one session until the client disconnects. Unsaved recordings are
/// dropped.
pub fn serve_connection(stream: TcpStream, cfg: SessionConfig) -> Result<(), Error> {
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| Error::Format(format!("handshake: {e}")))?;
    ws.get_mut().set_read_timeout(Some(Duration::from_millis(2)))?;
    let period = cfg.sim.command_period();
    let state_period = 1.0 / cfg.state_rate_hz;
    let mut session = TeleopSession::new(cfg)?;
    let start = Instant::now();
    let (mut sim_time, mut next_state) = (0.0, 0.0);
    loop {
        match ws.read() {
            Ok(Message::Text(text)) => {
                for reply in session.handle(&text) {
                    match send(&mut ws, &reply) {
                        Err(Error::Ws(e)) if is_closed(&e) => return Ok(()),
                        r => r?,
                    }
                }
            }
            Ok(Message::Binary(_)) => send(&mut ws, &ServerMessage::Error { message: "expected a text frame".into() })?,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) if is_closed(&e) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
        let now = start.elapsed().as_secs_f64();
        if now - sim_time > MAX_CATCH_UP_S {
            sim_time = now - MAX_CATCH_UP_S;
        }
        while sim_time + period <= now {
            session.tick(period)?;
            sim_time += period;
        }
        if now >= next_state {
            match send(&mut ws, &ServerMessage::State(session.state_frame())) {
                Err(Error::Ws(e)) if is_closed(&e) => return Ok(()),
                r => r?,
            }
            next_state = (next_state + state_period).max(now);
        }
    }
}
