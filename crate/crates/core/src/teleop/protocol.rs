//! Newline-delimited JSON messages. Every message is one object with a `type` tag.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Reset {
        seed: u64,
        /// Optional `[x, y, theta]`; a safe start is sampled from `seed` otherwise.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<[f64; 3]>,
    },
    SetConstraint {
        x: f64,
        y: f64,
    },
    Action {
        omega: f64,
    },
    SetAlpha {
        alpha: f64,
    },
    SetEpsilon {
        epsilon: f64,
    },
    Heatmap {
        theta: f64,
        resolution: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    /// Value after the task action for filtered steps; current-state value after a reset.
    pub value: f64,
    pub delta_effective: f64,
    pub intervened: bool,
    /// Executed angular velocity.
    pub omega: f64,
    pub tick: u64,
    pub constraint: Point,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

/// Cell-centred lattice; `values[j * resolution + i]` sits at
/// `x_i = −b + (i + ½)·2b/resolution`, `y_j` likewise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMessage {
    pub theta: f64,
    pub resolution: u32,
    pub values: Vec<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(StateMessage),
    Heatmap(HeatmapMessage),
    Ack {
        detail: String,
        /// Effective threshold after the change, when it moved.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
    },
    Error {
        detail: String,
    },
}

impl ServerMessage {
    pub fn error(detail: impl Into<String>) -> Self {
        ServerMessage::Error { detail: detail.into() }
    }

    /// One NDJSON line, without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_match_the_wire_shapes() {
        let cases = [
            (r#"{"type":"reset","seed":7}"#, ClientMessage::Reset { seed: 7, start: None }),
            (r#"{"type":"set_constraint","x":0.5,"y":-0.25}"#, ClientMessage::SetConstraint { x: 0.5, y: -0.25 }),
            (r#"{"type":"action","omega":-1.25}"#, ClientMessage::Action { omega: -1.25 }),
            (r#"{"type":"set_alpha","alpha":0.1}"#, ClientMessage::SetAlpha { alpha: 0.1 }),
            (r#"{"type":"set_epsilon","epsilon":0.3}"#, ClientMessage::SetEpsilon { epsilon: 0.3 }),
            (r#"{"type":"heatmap","theta":1.5,"resolution":21}"#, ClientMessage::Heatmap { theta: 1.5, resolution: 21 }),
        ];
        for (line, msg) in cases {
            assert_eq!(serde_json::from_str::<ClientMessage>(line).unwrap(), msg);
            assert_eq!(serde_json::to_string(&msg).unwrap(), line);
        }
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"fly"}"#).is_err());
    }

    #[test]
    fn floats_survive_the_wire() {
        let m = ServerMessage::Heatmap(HeatmapMessage {
            theta: 0.1 + 0.2,
            resolution: 1,
            values: vec![-0.8231676708340927, 1.0 / 3.0],
            delta: f64::MIN_POSITIVE,
        });
        let back: ServerMessage = serde_json::from_str(&m.to_line()).unwrap();
        assert_eq!(back, m);
        assert!(m.to_line().starts_with(r#"{"type":"heatmap","#));
    }

    #[test]
    fn ack_and_error_shapes() {
        let ack = ServerMessage::Ack { detail: "alpha".into(), delta: Some(-0.7) };
        assert_eq!(ack.to_line(), r#"{"type":"ack","detail":"alpha","delta":-0.7}"#);
        assert_eq!(ServerMessage::error("boom").to_line(), r#"{"type":"error","detail":"boom"}"#);
    }
}
