//! Crash-tolerant single-shot agreement with a rotating leader.
//!
//! Time is cut into views of `view_length` system-time units; the leader of
//! view `v` is party `v mod n`. On entering a view every party reports its
//! last accepted `(view, value)` to the leader. A leader holding a majority of
//! reports proposes the value accepted in the highest view among them (its
//! own input if none), parties accept a proposal for their current view and
//! echo it to everyone, and a majority of equal echoes decides. A deciding
//! party broadcasts the decision and terminates.
//!
//! Safety never depends on timing. With a delay bound of 1 after
//! stabilization and a view length of 4, the first view led by a live party
//! after stabilization decides.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::protocol::{Coins, PartyEnv, Protocol, ProtocolError, Transition};
use crate::time::SystemTime;
use crate::trace::{Message, PartyId};

/// Slack when mapping a clock reading onto a view boundary.
const VIEW_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct RotatingLeaderAgreement {
    pub delta: f64,
    pub view_length: f64,
}

impl Default for RotatingLeaderAgreement {
    fn default() -> Self {
        Self {
            delta: 1.0,
            view_length: 4.0,
        }
    }
}

/// A value as carried in states and messages (hex, so JSON stays canonical).
type Value = String;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgreementMessage {
    Status {
        view: u64,
        accepted: Option<(u64, Value)>,
    },
    Propose {
        view: u64,
        value: Value,
    },
    Accept {
        view: u64,
        value: Value,
    },
    Commit {
        value: Value,
    },
}

impl AgreementMessage {
    fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("agreement message serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementState {
    input: Value,
    view: Option<u64>,
    accepted: Option<(u64, Value)>,
    /// Reports gathered while leading the current view.
    reports: BTreeMap<PartyId, Option<(u64, Value)>>,
    proposed: bool,
    /// Echo senders per view and value.
    echoes: BTreeMap<u64, BTreeMap<Value, BTreeSet<PartyId>>>,
    decided: Option<Value>,
}

impl AgreementState {
    pub fn decided(&self) -> Option<Vec<u8>> {
        self.decided.as_ref().and_then(|v| hex::decode(v).ok())
    }
}

fn majority(n: usize) -> usize {
    n / 2 + 1
}

impl RotatingLeaderAgreement {
    fn leader(&self, view: u64, env: &PartyEnv<'_>) -> PartyId {
        env.parties[(view % env.n() as u64) as usize]
    }

    fn view_at(&self, now: SystemTime) -> u64 {
        ((now.value() + VIEW_EPSILON) / self.view_length).floor() as u64
    }

    fn broadcast(
        &self,
        env: &PartyEnv<'_>,
        mut t: Transition<AgreementState>,
        message: &AgreementMessage,
    ) -> Transition<AgreementState> {
        let payload = message.encode();
        for &p in env.parties {
            t = t.send(p, payload.clone());
        }
        t
    }
}

impl Protocol for RotatingLeaderAgreement {
    type State = AgreementState;

    fn name(&self) -> String {
        "agreement".into()
    }

    fn declared_delta(&self) -> Option<f64> {
        Some(self.delta)
    }

    fn init(
        &self,
        env: &PartyEnv<'_>,
        input: &[u8],
        _coins: &mut Coins,
    ) -> Result<AgreementState, ProtocolError> {
        if input.is_empty() {
            return Err(ProtocolError::BadInput {
                party: env.me,
                reason: "agreement needs a non-empty input value".into(),
            });
        }
        Ok(AgreementState {
            input: hex::encode(input),
            view: None,
            accepted: None,
            reports: BTreeMap::new(),
            proposed: false,
            echoes: BTreeMap::new(),
            decided: None,
        })
    }

    fn on_trigger(
        &self,
        env: &PartyEnv<'_>,
        state: &AgreementState,
        received: &[Message],
        now: SystemTime,
        _coins: &mut Coins,
    ) -> Result<Transition<AgreementState>, ProtocolError> {
        if state.decided.is_some() {
            return Ok(Transition::to(state.clone()));
        }
        let mut s = state.clone();
        let mut out: Vec<(PartyId, AgreementMessage)> = Vec::new();
        let mut timers = Vec::new();

        let view = self.view_at(now);
        if s.view.is_none_or(|current| view > current) {
            s.view = Some(view);
            s.reports.clear();
            s.proposed = false;
            out.push((
                self.leader(view, env),
                AgreementMessage::Status {
                    view,
                    accepted: s.accepted.clone(),
                },
            ));
            let boundary = (view + 1) as f64 * self.view_length;
            timers.push(SystemTime::new(boundary).expect("view boundary is valid"));
        }

        let mut broadcasts = Vec::new();
        for message in received {
            let Ok(body) = serde_json::from_slice::<AgreementMessage>(&message.payload) else {
                // not ours; a crash-fault model never forges payloads
                continue;
            };
            match body {
                AgreementMessage::Status { view, accepted }
                    if Some(view) == s.view && self.leader(view, env) == env.me && !s.proposed =>
                {
                    s.reports.insert(message.sender, accepted);
                    if s.reports.len() >= majority(env.n()) {
                        let value = s
                            .reports
                            .values()
                            .flatten()
                            .max_by_key(|(v, _)| *v)
                            .map(|(_, value)| value.clone())
                            .unwrap_or_else(|| s.input.clone());
                        s.proposed = true;
                        broadcasts.push(AgreementMessage::Propose { view, value });
                    }
                }
                AgreementMessage::Propose { view, value }
                    if Some(view) == s.view && s.accepted.as_ref().map(|a| a.0) != Some(view) =>
                {
                    s.accepted = Some((view, value.clone()));
                    broadcasts.push(AgreementMessage::Accept { view, value });
                }
                AgreementMessage::Accept { view, value } => {
                    let from = s
                        .echoes
                        .entry(view)
                        .or_default()
                        .entry(value.clone())
                        .or_default();
                    from.insert(message.sender);
                    if from.len() >= majority(env.n()) {
                        s.decided = Some(value);
                        break;
                    }
                }
                AgreementMessage::Commit { value } => {
                    s.decided = Some(value);
                    break;
                }
                _ => {}
            }
        }

        if let Some(value) = s.decided.clone() {
            let record =
                hex::decode(&value).map_err(|e| ProtocolError::CorruptState(e.to_string()))?;
            let mut t = Transition::to(s).output(record).terminate();
            let commit = AgreementMessage::Commit { value }.encode();
            for p in env.others() {
                t = t.send(p, commit.clone());
            }
            return Ok(t);
        }

        let mut t = Transition::to(s);
        for (to, message) in out {
            t = t.send(to, message.encode());
        }
        for message in &broadcasts {
            t = self.broadcast(env, t, message);
        }
        for wake in timers {
            t = t.timer(wake);
        }
        Ok(t)
    }

    fn encode_state(&self, state: &AgreementState) -> Vec<u8> {
        serde_json::to_vec(state).expect("agreement state serializes")
    }
}
