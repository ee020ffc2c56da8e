//! Newline-delimited JSON session protocol and its state machine.
//!
//! Every message is a single JSON object followed by `\n`, tagged by a
//! `kind` field:
//!
//! | kind          | direction       | fields                                        |
//! |---------------|-----------------|-----------------------------------------------|
//! | `Hello`       | client → server | `session_id`, `participant`                   |
//! | `Armed`       | server → client | `session_id`                                  |
//! | `Start`       | server → client | `session_id`                                  |
//! | `SampleBatch` | client → server | `session_id`, `seq`, `samples` (1..=256)      |
//! | `Ack`         | both            | `session_id`, optional `seq`                  |
//! | `Stop`        | both            | `session_id`, optional `reason`               |
//! | `Error`       | both            | `session_id`, `code`, `message`, optional `expected_seq` |
//!
//! A sample is `{"t":..,"ax":..,"ay":..,"az":..}` with an optional `aux`
//! object of named channels. `t` is seconds since the session entered
//! streaming, on the client's clock. Batch `seq` starts at 1 and increases
//! by exactly one. Unknown fields are ignored; an unknown `kind` is an error.
//!
//! Session lifecycle: `Off → Ready` on client `Hello`, `Ready → Streaming`
//! on server `Start`, `Streaming → Finalized` on `Stop` from either side,
//! and `Ready → Off` when the client leaves (client `Stop` while Ready).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SensorSample;

pub const MAX_BATCH: usize = 256;
pub const FIRST_SEQ: u64 = 1;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("batch carries {0} samples; expected 1..={MAX_BATCH}")]
    BatchSize(usize),
    #[error("batch sample {index}: {reason}")]
    BadSample { index: usize, reason: String },
    #[error("batch timestamps must strictly increase (sample {0})")]
    NonMonotone(usize),
    #[error("message contains a non-finite number")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionState {
    Off,
    Ready,
    Streaming,
    Finalized,
}

impl SessionState {
    pub const ALL: [SessionState; 4] = [Self::Off, Self::Ready, Self::Streaming, Self::Finalized];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Client,
    Server,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    IllegalTransition,
    NotStreaming,
    SeqGap,
    BadBatch,
    UnknownSession,
    Busy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Message {
    Hello {
        session_id: String,
        participant: String,
    },
    Armed {
        session_id: String,
    },
    Start {
        session_id: String,
    },
    SampleBatch {
        session_id: String,
        seq: u64,
        samples: Vec<SensorSample>,
    },
    Ack {
        session_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Stop {
        session_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    Error {
        session_id: String,
        code: ErrorCode,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expected_seq: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Hello,
    Armed,
    Start,
    SampleBatch,
    Ack,
    Stop,
    Error,
}

impl MessageKind {
    pub const ALL: [MessageKind; 7] = [
        Self::Hello,
        Self::Armed,
        Self::Start,
        Self::SampleBatch,
        Self::Ack,
        Self::Stop,
        Self::Error,
    ];
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Hello { .. } => MessageKind::Hello,
            Message::Armed { .. } => MessageKind::Armed,
            Message::Start { .. } => MessageKind::Start,
            Message::SampleBatch { .. } => MessageKind::SampleBatch,
            Message::Ack { .. } => MessageKind::Ack,
            Message::Stop { .. } => MessageKind::Stop,
            Message::Error { .. } => MessageKind::Error,
        }
    }

    pub fn session_id(&self) -> &str {
        match self {
            Message::Hello { session_id, .. }
            | Message::Armed { session_id }
            | Message::Start { session_id }
            | Message::SampleBatch { session_id, .. }
            | Message::Ack { session_id, .. }
            | Message::Stop { session_id, .. }
            | Message::Error { session_id, .. } => session_id,
        }
    }

    pub fn error(session_id: &str, code: ErrorCode, message: impl Into<String>, expected_seq: Option<u64>) -> Self {
        Message::Error {
            session_id: session_id.to_string(),
            code,
            message: message.into(),
            expected_seq,
        }
    }

    fn validate(&self) -> Result<(), ProtocolError> {
        if let Message::SampleBatch { samples, .. } = self {
            if samples.is_empty() || samples.len() > MAX_BATCH {
                return Err(ProtocolError::BatchSize(samples.len()));
            }
            for (index, s) in samples.iter().enumerate() {
                s.validate()
                    .map_err(|reason| ProtocolError::BadSample { index, reason })?;
            }
            if let Some(i) = crate::model::first_non_increasing(samples.iter().map(|s| s.t)) {
                return Err(ProtocolError::NonMonotone(i));
            }
        }
        Ok(())
    }
}

/// Serializes a message as one `\n`-terminated JSON line.
pub fn encode(msg: &Message) -> Result<Vec<u8>, ProtocolError> {
    if let Message::SampleBatch { samples, .. } = msg {
        let finite = samples
            .iter()
            .all(|s| [s.t, s.ax, s.ay, s.az].iter().chain(s.aux.values()).all(|v| v.is_finite()));
        if !finite {
            return Err(ProtocolError::NonFinite);
        }
    }
    let mut out = serde_json::to_vec(msg)?;
    out.push(b'\n');
    Ok(out)
}

/// Parses one complete line (the trailing newline is optional).
pub fn decode(line: &[u8]) -> Result<Message, ProtocolError> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    let msg: Message = serde_json::from_slice(line)?;
    msg.validate()?;
    Ok(msg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    /// The (state, kind, origin) triple is not a legal transition.
    Illegal,
    /// A batch skipped ahead; the peer should resend from `expected_seq`.
    SeqGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Effect {
    /// Reply `Armed` to the client.
    Arm,
    /// Append the batch samples to the track.
    AcceptSamples,
    /// Acknowledge; for batches carries the highest contiguous seq.
    SendAck { seq: Option<u64> },
    Reject {
        reason: RejectReason,
        expected_seq: Option<u64>,
    },
}

/// Per-connection protocol state: the lifecycle phase and the next batch
/// sequence number expected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Machine {
    pub state: SessionState,
    pub next_seq: u64,
}

impl Default for Machine {
    fn default() -> Self {
        Self {
            state: SessionState::Off,
            next_seq: FIRST_SEQ,
        }
    }
}

impl Machine {
    pub fn new(state: SessionState) -> Self {
        Self {
            state,
            next_seq: FIRST_SEQ,
        }
    }

    /// Highest contiguous batch seq accepted so far (0 before any batch).
    pub fn acked_seq(&self) -> u64 {
        self.next_seq - 1
    }
}

const ILLEGAL: Effect = Effect::Reject {
    reason: RejectReason::Illegal,
    expected_seq: None,
};

/// The session state machine. Pure and total: every
/// (state, message, origin) triple yields a next machine and effects.
pub fn transition(machine: Machine, msg: &Message, origin: Origin) -> (Machine, Vec<Effect>) {
    use MessageKind as K;
    use Origin::{Client, Server};
    use SessionState::*;

    let to = |state: SessionState, effects: Vec<Effect>| (Machine { state, ..machine }, effects);
    let stay = |effects: Vec<Effect>| (machine, effects);

    match (machine.state, msg.kind(), origin) {
        (Off | Ready, K::Hello, Client) => to(Ready, vec![Effect::Arm]),
        (Ready, K::Armed, Server) => stay(vec![]),
        (Ready, K::Start, Server) => to(Streaming, vec![Effect::SendAck { seq: None }]),
        (Streaming, K::Start, Server) => stay(vec![]),
        (Ready, K::Stop, Client) => to(Off, vec![]),
        (Streaming, K::Stop, _) => to(Finalized, vec![Effect::SendAck { seq: None }]),
        (Finalized, K::Stop, _) => stay(vec![]),
        (Streaming, K::SampleBatch, Client) => {
            let Message::SampleBatch { seq, .. } = msg else { unreachable!() };
            let seq = *seq;
            if seq == machine.next_seq {
                let next = Machine {
                    next_seq: seq + 1,
                    ..machine
                };
                (next, vec![Effect::AcceptSamples, Effect::SendAck { seq: Some(seq) }])
            } else if seq < machine.next_seq {
                stay(vec![Effect::SendAck {
                    seq: Some(machine.acked_seq()),
                }])
            } else {
                stay(vec![Effect::Reject {
                    reason: RejectReason::SeqGap,
                    expected_seq: Some(machine.next_seq),
                }])
            }
        }
        (Ready | Streaming | Finalized, K::Ack | K::Error, _) => stay(vec![]),
        _ => stay(vec![ILLEGAL]),
    }
}
