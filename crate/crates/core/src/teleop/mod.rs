//! Interactive sandbox service: one filtered session per connection, driven by
//! newline-delimited JSON over TCP or WebSocket.

mod protocol;
mod server;
mod session;

pub use protocol::{ClientMessage, HeatmapMessage, Point, ServerMessage, StateMessage};
pub use server::{serve, serve_ndjson_stream, serve_websocket_stream, Transport};
pub use session::{EventRecord, ServiceArtifacts, TeleopSession, EVENT_LOG_CAPACITY, HEATMAP_CAP};
