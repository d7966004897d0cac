//! Wire messages. One JSON object per WebSocket text frame; see
//! `docs/protocol.md` for the frozen field list.

use dialschema::generate::ResponseKind;
use dialschema::interpret::GistClause;
use dialschema::planner::PlanSnapshot;
use dialschema::session::TurnRecord;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum WireMessage {
    /// Client: open a new session, or reattach to one with `resume`.
    CreateSession {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resume: Option<Resume>,
    },
    /// Server: the session exists; opening turns follow.
    SessionCreated {
        session: String,
        seq: u64,
        persona: String,
        read_only: bool,
    },
    /// Client: one doctor utterance. `seq` must exceed every earlier client seq.
    UserTurn { session: String, seq: u64, text: String },
    /// Server: one patient utterance, acknowledged only once persisted.
    SystemTurn { session: String, seq: u64, turn: u64, text: String },
    /// Server: debugging detail for the system turn numbered `turn`.
    Trace {
        session: String,
        seq: u64,
        turn: u64,
        gists: Vec<GistClause>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        response: Option<ResponseKind>,
        path: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan: Option<PlanSnapshot>,
    },
    /// Either side: the conversation is over.
    EndSession {
        session: String,
        seq: u64,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
        code: ErrorCode,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resume {
    pub session: String,
    /// Highest server seq the client has already seen.
    pub after: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    BadMessage,
    Unauthorized,
    UnknownSession,
    Replay,
    SessionClosed,
    ReadOnly,
    Internal,
}

impl WireMessage {
    pub fn session(&self) -> Option<&str> {
        match self {
            WireMessage::CreateSession { resume, .. } => resume.as_ref().map(|r| r.session.as_str()),
            WireMessage::SessionCreated { session, .. }
            | WireMessage::UserTurn { session, .. }
            | WireMessage::SystemTurn { session, .. }
            | WireMessage::Trace { session, .. }
            | WireMessage::EndSession { session, .. } => Some(session),
            WireMessage::Error { session, .. } => session.as_deref(),
        }
    }

    pub fn seq(&self) -> Option<u64> {
        match self {
            WireMessage::CreateSession { .. } => None,
            WireMessage::SessionCreated { seq, .. }
            | WireMessage::UserTurn { seq, .. }
            | WireMessage::SystemTurn { seq, .. }
            | WireMessage::Trace { seq, .. }
            | WireMessage::EndSession { seq, .. } => Some(*seq),
            WireMessage::Error { seq, .. } => *seq,
        }
    }

    pub fn error(session: Option<&str>, code: ErrorCode, message: impl Into<String>) -> Self {
        WireMessage::Error { session: session.map(str::to_string), seq: None, code, message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// SystemTurn and Trace pair for one system record. `next` hands out seqs.
pub fn system_messages(session: &str, record: &TurnRecord, next: &mut impl FnMut() -> u64) -> [WireMessage; 2] {
    [
        WireMessage::SystemTurn { session: session.into(), seq: next(), turn: record.seq, text: record.text.clone() },
        WireMessage::Trace {
            session: session.into(),
            seq: next(),
            turn: record.seq,
            gists: record.gists.clone(),
            response: record.kind,
            path: record.trace.clone(),
            plan: record.plan.clone(),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tagged_json() {
        let m = WireMessage::UserTurn { session: "s".into(), seq: 3, text: "hi".into() };
        assert_eq!(m.to_json(), r#"{"kind":"UserTurn","session":"s","seq":3,"text":"hi"}"#);
        assert_eq!(WireMessage::from_json(&m.to_json()).unwrap(), m);
        let c = WireMessage::from_json(r#"{"kind":"CreateSession"}"#).unwrap();
        assert_eq!(c, WireMessage::CreateSession { token: None, seed: None, resume: None });
        assert!(WireMessage::from_json(r#"{"kind":"Shout"}"#).is_err());
    }
}
