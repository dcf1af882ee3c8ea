//! Canonical JSON-lines trace files.
//!
//! Line 1 is the header, then one `init` record per party, then one `event`
//! record per event. Field order is fixed and there is no optional
//! whitespace, so two files are byte-equal iff they hold equal records.
//! Times are written as shortest round-trip decimal strings. Received
//! messages are written as uid plus payload hash; the full message appears
//! once, in the sender's event.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::model::{Event, Execution, Message, PartyId};
use super::TraceError;
use crate::time::{ClockOracle, SystemTime};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("line {line}: record is not in canonical form")]
    NotCanonical { line: usize },
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("empty trace file")]
    Empty,
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    parties: Vec<PartyId>,
    horizon: String,
    clock_kind: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case", deny_unknown_fields)]
enum Record {
    Init {
        party: PartyId,
        input: String,
        state: String,
    },
    Event {
        system_time: String,
        party: PartyId,
        received: Vec<ReceivedRef>,
        state: String,
        sent: Vec<SentMessage>,
        outputs: Vec<String>,
        terminated: bool,
        crashed: bool,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReceivedRef {
    uid: u64,
    payload_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SentMessage {
    uid: u64,
    sender: PartyId,
    receiver: PartyId,
    payload: String,
}

fn payload_hash(payload: &[u8]) -> String {
    hex::encode(Sha256::digest(payload))
}

fn time_string(t: SystemTime) -> String {
    format!("{}", t.value())
}

fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("trace records always serialize")
}

fn event_record(event: &Event, with_time: bool) -> Record {
    Record::Event {
        system_time: if with_time {
            time_string(event.system_time)
        } else {
            String::new()
        },
        party: event.party,
        received: event
            .received
            .iter()
            .map(|m| ReceivedRef {
                uid: m.uid,
                payload_hash: payload_hash(&m.payload),
            })
            .collect(),
        state: hex::encode(&event.state),
        sent: event
            .sent
            .iter()
            .map(|m| SentMessage {
                uid: m.uid,
                sender: m.sender,
                receiver: m.receiver,
                payload: hex::encode(&m.payload),
            })
            .collect(),
        outputs: event.outputs.iter().map(hex::encode).collect(),
        terminated: event.terminated,
        crashed: event.crashed,
    }
}

fn body_lines(e: &Execution, with_time: bool, out: &mut String) {
    for (party, state) in &e.initial_states {
        let input = e.inputs.get(party).map(hex::encode).unwrap_or_default();
        out.push_str(&to_line(&Record::Init {
            party: *party,
            input,
            state: hex::encode(state),
        }));
        out.push('\n');
    }
    for event in &e.events {
        out.push_str(&to_line(&event_record(event, with_time)));
        out.push('\n');
    }
}

/// Serializes an execution to the canonical trace format.
pub fn encode(e: &Execution) -> String {
    let mut out = to_line(&Header {
        format_version: FORMAT_VERSION,
        parties: e.parties.clone(),
        horizon: time_string(e.horizon),
        clock_kind: e.clock.to_string(),
    });
    out.push('\n');
    body_lines(e, true, &mut out);
    out
}

/// A byte string that two executions share iff they are equivalent.
pub fn order_signature(e: &Execution) -> Vec<u8> {
    let mut out = String::new();
    body_lines(e, false, &mut out);
    out.into_bytes()
}

fn parse_time(text: &str, line: usize) -> Result<SystemTime, CodecError> {
    let value: f64 = text.parse().map_err(|_| CodecError::Invalid {
        line,
        message: format!("bad time `{text}`"),
    })?;
    SystemTime::new(value).map_err(|err| CodecError::Invalid {
        line,
        message: err.to_string(),
    })
}

fn parse_hex(text: &str, line: usize) -> Result<Vec<u8>, CodecError> {
    hex::decode(text).map_err(|err| CodecError::Invalid {
        line,
        message: err.to_string(),
    })
}

fn parse_canonical<T: Serialize + for<'de> Deserialize<'de>>(
    text: &str,
    line: usize,
) -> Result<T, CodecError> {
    let value: T =
        serde_json::from_str(text).map_err(|source| CodecError::Json { line, source })?;
    if to_line(&value) != text {
        return Err(CodecError::NotCanonical { line });
    }
    Ok(value)
}

/// Parses a trace file. Rejects non-canonical records and structurally
/// invalid executions.
pub fn decode(text: &str) -> Result<Execution, CodecError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or(CodecError::Empty)?;
    let header: Header = parse_canonical(first, 1)?;
    if header.format_version != FORMAT_VERSION {
        return Err(CodecError::Version(header.format_version));
    }
    let clock: ClockOracle = header
        .clock_kind
        .parse()
        .map_err(|err: crate::time::TimeError| CodecError::Invalid {
            line: 1,
            message: err.to_string(),
        })?;
    let horizon = parse_time(&header.horizon, 1)?;

    let mut inputs = BTreeMap::new();
    let mut initial_states = BTreeMap::new();
    let mut events = Vec::new();
    let mut sent_index: HashMap<u64, Message> = HashMap::new();

    for (line, text) in lines {
        match parse_canonical::<Record>(text, line)? {
            Record::Init {
                party,
                input,
                state,
            } => {
                if !events.is_empty() {
                    return Err(CodecError::Invalid {
                        line,
                        message: "init record after events".into(),
                    });
                }
                inputs.insert(party, parse_hex(&input, line)?);
                if initial_states
                    .insert(party, parse_hex(&state, line)?)
                    .is_some()
                {
                    return Err(CodecError::Invalid {
                        line,
                        message: format!("second init record for {party}"),
                    });
                }
            }
            Record::Event {
                system_time,
                party,
                received,
                state,
                sent,
                outputs,
                terminated,
                crashed,
            } => {
                let received = received
                    .into_iter()
                    .map(|r| {
                        let message = sent_index.get(&r.uid).ok_or(CodecError::Trace(
                            TraceError::ReceiveWithoutSend {
                                uid: r.uid,
                                index: events.len(),
                            },
                        ))?;
                        if payload_hash(&message.payload) != r.payload_hash {
                            return Err(CodecError::Invalid {
                                line,
                                message: format!("payload hash mismatch for uid {}", r.uid),
                            });
                        }
                        Ok(message.clone())
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let sent = sent
                    .into_iter()
                    .map(|s| {
                        Ok(Message {
                            sender: s.sender,
                            receiver: s.receiver,
                            payload: parse_hex(&s.payload, line)?,
                            uid: s.uid,
                        })
                    })
                    .collect::<Result<Vec<_>, CodecError>>()?;
                for m in &sent {
                    sent_index.insert(m.uid, m.clone());
                }
                events.push(Event {
                    system_time: parse_time(&system_time, line)?,
                    received,
                    party,
                    state: parse_hex(&state, line)?,
                    sent,
                    outputs: outputs
                        .iter()
                        .map(|o| parse_hex(o, line))
                        .collect::<Result<_, _>>()?,
                    terminated,
                    crashed,
                });
            }
        }
    }

    let execution = Execution {
        clock,
        parties: header.parties,
        horizon,
        inputs,
        initial_states,
        events,
    };
    execution.validate()?;
    Ok(execution)
}
