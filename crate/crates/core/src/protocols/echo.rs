use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::protocol::{Coins, PartyEnv, Protocol, ProtocolError, Transition};
use crate::time::SystemTime;
use crate::trace::{Message, PartyId};

pub const HELLO: &[u8] = b"HELLO";
pub const ACK: &[u8] = b"ACK";

/// Party 0 sends HELLO to everyone else and repeats it every
/// `retransmit` system-time units to whoever has not ACKed yet; it
/// terminates once every other party has ACKed. A responder ACKs the first
/// HELLO it sees and terminates.
#[derive(Debug, Clone)]
pub struct EchoProtocol {
    pub retransmit: f64,
}

impl Default for EchoProtocol {
    fn default() -> Self {
        Self { retransmit: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum EchoState {
    Initiator {
        acked: BTreeSet<PartyId>,
        next_send: f64,
        done: bool,
    },
    Responder {
        done: bool,
    },
}

pub const INITIATOR: PartyId = PartyId(0);

impl Protocol for EchoProtocol {
    type State = EchoState;

    fn name(&self) -> String {
        "echo".into()
    }

    fn declared_delta(&self) -> Option<f64> {
        Some(1.0)
    }

    fn init(
        &self,
        env: &PartyEnv<'_>,
        _input: &[u8],
        _coins: &mut Coins,
    ) -> Result<EchoState, ProtocolError> {
        Ok(if env.me == INITIATOR {
            EchoState::Initiator {
                acked: BTreeSet::new(),
                next_send: 0.0,
                done: false,
            }
        } else {
            EchoState::Responder { done: false }
        })
    }

    fn on_trigger(
        &self,
        env: &PartyEnv<'_>,
        state: &EchoState,
        received: &[Message],
        now: SystemTime,
        _coins: &mut Coins,
    ) -> Result<Transition<EchoState>, ProtocolError> {
        match state {
            EchoState::Initiator {
                acked,
                next_send,
                done: false,
            } => {
                let mut acked = acked.clone();
                acked.extend(
                    received
                        .iter()
                        .filter(|m| m.payload == ACK)
                        .map(|m| m.sender),
                );
                let waiting: Vec<PartyId> = env.others().filter(|p| !acked.contains(p)).collect();
                if waiting.is_empty() {
                    return Ok(Transition::to(EchoState::Initiator {
                        acked,
                        next_send: *next_send,
                        done: true,
                    })
                    .terminate());
                }
                if now.value() < *next_send {
                    return Ok(Transition::to(EchoState::Initiator {
                        acked,
                        next_send: *next_send,
                        done: false,
                    }));
                }
                let next = now.value() + self.retransmit;
                let mut t = Transition::to(EchoState::Initiator {
                    acked,
                    next_send: next,
                    done: false,
                })
                .timer(SystemTime::new(next).expect("future time is valid"));
                for party in waiting {
                    t = t.send(party, HELLO);
                }
                Ok(t)
            }
            EchoState::Responder { done: false } => {
                match received.iter().find(|m| m.payload == HELLO) {
                    Some(hello) => Ok(Transition::to(EchoState::Responder { done: true })
                        .send(hello.sender, ACK)
                        .terminate()),
                    None => Ok(Transition::to(state.clone())),
                }
            }
            _ => Ok(Transition::to(state.clone())),
        }
    }

    fn encode_state(&self, state: &EchoState) -> Vec<u8> {
        serde_json::to_vec(state).expect("echo state serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::party_coins;

    const PARTIES: [PartyId; 2] = [PartyId(0), PartyId(1)];

    fn env(me: u32) -> PartyEnv<'static> {
        PartyEnv {
            me: PartyId(me),
            parties: &PARTIES,
        }
    }

    fn at(t: f64) -> SystemTime {
        SystemTime::new(t).unwrap()
    }

    fn msg(sender: u32, receiver: u32, payload: &[u8]) -> Message {
        Message {
            sender: PartyId(sender),
            receiver: PartyId(receiver),
            payload: payload.to_vec(),
            uid: 0,
        }
    }

    #[test]
    fn initiator_sends_and_retransmits() {
        let p = EchoProtocol::default();
        let mut coins = party_coins(0, PartyId(0));
        let s0 = p.init(&env(0), &[], &mut coins).unwrap();
        let t = p
            .on_trigger(&env(0), &s0, &[], at(0.0), &mut coins)
            .unwrap();
        assert_eq!(t.sends, vec![(PartyId(1), HELLO.to_vec())]);
        assert_eq!(t.timers, vec![at(1.0)]);
        // an early wake-up does not resend
        let early = p
            .on_trigger(&env(0), &t.new_state, &[], at(0.5), &mut coins)
            .unwrap();
        assert!(early.sends.is_empty());
        let again = p
            .on_trigger(&env(0), &t.new_state, &[], at(1.0), &mut coins)
            .unwrap();
        assert_eq!(again.sends.len(), 1);
        let done = p
            .on_trigger(
                &env(0),
                &again.new_state,
                &[msg(1, 0, ACK)],
                at(1.5),
                &mut coins,
            )
            .unwrap();
        assert!(done.terminated);
        assert!(done.sends.is_empty());
    }

    #[test]
    fn responder_acks_once() {
        let p = EchoProtocol::default();
        let mut coins = party_coins(0, PartyId(1));
        let s0 = p.init(&env(1), &[], &mut coins).unwrap();
        let idle = p
            .on_trigger(&env(1), &s0, &[], at(0.0), &mut coins)
            .unwrap();
        assert!(idle.sends.is_empty() && !idle.terminated);
        let t = p
            .on_trigger(&env(1), &s0, &[msg(0, 1, HELLO)], at(2.0), &mut coins)
            .unwrap();
        assert_eq!(t.sends, vec![(PartyId(0), ACK.to_vec())]);
        assert!(t.terminated);
    }
}
