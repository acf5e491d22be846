use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use tungstenite::Message;

use super::session::{ServiceArtifacts, TeleopSession};
use crate::error::Result;

/// Serves one NDJSON connection until the peer closes it.
pub fn serve_ndjson_stream(stream: TcpStream, shared: Arc<ServiceArtifacts>) -> Result<()> {
    let mut session = TeleopSession::new(shared)?;
    let mut writer = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = session.handle_line(&line);
        writer.write_all(reply.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

/// Serves one WebSocket connection; each text frame carries one or more NDJSON lines.
pub fn serve_websocket_stream(stream: TcpStream, shared: Arc<ServiceArtifacts>) -> Result<()> {
    let mut ws = tungstenite::accept(stream)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::ConnectionAborted, e.to_string()))?;
    let mut session = TeleopSession::new(shared)?;
    loop {
        let msg = match ws.read() {
            Ok(m) => m,
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(std::io::Error::new(std::io::ErrorKind::Other, e.to_string()).into()),
        };
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => return Ok(()),
            _ => continue,
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let reply = session.handle_line(line);
            ws.send(Message::Text(reply))
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))?;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Ndjson,
    WebSocket,
}

/// Accept loop; one thread and one session per connection.
pub fn serve(listener: TcpListener, shared: Arc<ServiceArtifacts>, transport: Transport) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let shared = Arc::clone(&shared);
        let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
        thread::spawn(move || {
            log::info!("connection from {peer}");
            let done = match transport {
                Transport::Ndjson => serve_ndjson_stream(stream, shared),
                Transport::WebSocket => serve_websocket_stream(stream, shared),
            };
            if let Err(e) = done {
                log::warn!("connection {peer} ended: {e}");
            }
        });
    }
    Ok(())
}
