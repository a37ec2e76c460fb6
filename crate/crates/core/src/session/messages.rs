//! Wire schema shared by the live service and scripted schedules.

use serde::{Deserialize, Serialize};

use crate::metrics::CoverageReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Acord,
    Styles,
    Sa,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Acord => "acord",
            Condition::Styles => "styles",
            Condition::Sa => "sa",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "acord" => Ok(Condition::Acord),
            "styles" => Ok(Condition::Styles),
            "sa" => Ok(Condition::Sa),
            other => Err(crate::Error::Request(format!("unknown condition {other:?}"))),
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Start {
        condition: Condition,
        shape: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    SetK {
        k: Vec<f64>,
    },
    Joystick {
        u: [f64; 2],
    },
    SelectStyle {
        index: usize,
    },
    Finish,
}

impl ClientMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::Start { .. } => "start",
            ClientMessage::SetK { .. } => "set_k",
            ClientMessage::Joystick { .. } => "joystick",
            ClientMessage::SelectStyle { .. } => "select_style",
            ClientMessage::Finish => "finish",
        }
    }
}

/// One streamed state frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    /// Tick counter, starting at 1 for the first environment step.
    pub t: u64,
    /// `[x, y, height, pitch]` of the brush tip.
    pub brush: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief: Option<Vec<f64>>,
    pub waypoint_index: usize,
    pub terminated: bool,
    pub failed: bool,
    pub completed: bool,
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(StateFrame),
    Ack {
        /// The acknowledged message type.
        of: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
        /// Control value now in effect (after clamping).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        u: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scores: Option<CoverageReport>,
    },
    Error {
        reason: String,
    },
}

impl ServerMessage {
    pub fn ack(of: &str) -> Self {
        ServerMessage::Ack {
            of: of.to_string(),
            session: None,
            k: None,
            index: None,
            u: None,
            scores: None,
        }
    }

    pub fn error(reason: impl Into<String>) -> Self {
        ServerMessage::Error { reason: reason.into() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        let cases = [
            (r#"{"type":"start","condition":"acord","shape":"heart"}"#, "start"),
            (r#"{"type":"set_k","k":[0.3,0.7]}"#, "set_k"),
            (r#"{"type":"joystick","u":[0.1,-0.2]}"#, "joystick"),
            (r#"{"type":"select_style","index":2}"#, "select_style"),
            (r#"{"type":"finish"}"#, "finish"),
        ];
        for (text, kind) in cases {
            let m: ClientMessage = serde_json::from_str(text).unwrap();
            assert_eq!(m.kind(), kind);
            let back: ClientMessage = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
            assert_eq!(back, m);
        }
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"warp"}"#).is_err());
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"start","condition":"x","shape":"heart"}"#).is_err());
    }

    #[test]
    fn state_frame_shape() {
        let f = ServerMessage::State(StateFrame {
            t: 3,
            brush: [0.1, 0.2, 0.0, 0.5],
            k: Some(vec![0.3, 0.7]),
            style: None,
            u: None,
            belief: None,
            waypoint_index: 4,
            terminated: false,
            failed: false,
            completed: false,
        });
        let v: serde_json::Value = serde_json::to_value(&f).unwrap();
        assert_eq!(v["type"], "state");
        assert_eq!(v["t"], 3);
        assert_eq!(v["k"][1], 0.7);
        assert_eq!(v["waypoint_index"], 4);
        assert!(v.get("style").is_none());
        let text = serde_json::to_string(&f).unwrap();
        assert!(!text.contains('\n'));
    }

    #[test]
    fn error_and_ack_shape() {
        let v = serde_json::to_value(ServerMessage::error("nope")).unwrap();
        assert_eq!(v, serde_json::json!({"type": "error", "reason": "nope"}));
        let v = serde_json::to_value(ServerMessage::ack("finish")).unwrap();
        assert_eq!(v, serde_json::json!({"type": "ack", "of": "finish"}));
    }
}
