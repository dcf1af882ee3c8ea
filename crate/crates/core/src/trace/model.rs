use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::TraceError;
use crate::time::{ClockOracle, SystemTime};

/// Identifier of one of the fixed set of parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(pub u32);

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// A message held by the message system. `uid` is assigned by the message
/// system and is unique within an execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Message {
    pub sender: PartyId,
    pub receiver: PartyId,
    pub payload: Vec<u8>,
    pub uid: u64,
}

/// One atomic step of one party: at `system_time` the party received
/// `received`, moved to `state` and handed `sent` to the message system.
///
/// `outputs`, `terminated` and `crashed` describe the party after the step.
/// A crash is recorded as an event with empty multisets and `crashed` set;
/// later deliveries to a crashed or terminated party leave its state alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub system_time: SystemTime,
    pub received: Vec<Message>,
    pub party: PartyId,
    pub state: Vec<u8>,
    pub sent: Vec<Message>,
    pub outputs: Vec<Vec<u8>>,
    pub terminated: bool,
    pub crashed: bool,
}

/// Total order key of events within an execution.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub(crate) struct EventKey {
    time: f64,
    party: PartyId,
    min_received: u64,
    min_sent: u64,
    crashed: bool,
}

impl Event {
    pub(crate) fn key(&self) -> EventKey {
        EventKey {
            time: self.system_time.value(),
            party: self.party,
            min_received: self
                .received
                .iter()
                .map(|m| m.uid)
                .min()
                .unwrap_or(u64::MAX),
            min_sent: self.sent.iter().map(|m| m.uid).min().unwrap_or(u64::MAX),
            crashed: self.crashed,
        }
    }

    /// Field-wise equality ignoring the timestamp.
    pub fn same_step(&self, other: &Event) -> bool {
        self.party == other.party
            && self.received == other.received
            && self.state == other.state
            && self.sent == other.sent
            && self.outputs == other.outputs
            && self.terminated == other.terminated
            && self.crashed == other.crashed
    }
}

/// A finite execution: initial states plus the ordered event list, complete
/// up to `horizon` (system time). `clock` names the oracle the timestamps
/// were read from.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub clock: ClockOracle,
    pub parties: Vec<PartyId>,
    pub horizon: SystemTime,
    pub inputs: BTreeMap<PartyId, Vec<u8>>,
    pub initial_states: BTreeMap<PartyId, Vec<u8>>,
    pub events: Vec<Event>,
}

/// Where a message went after being sent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct MessageFate {
    pub uid: u64,
    pub sent_at: f64,
    pub received_at: Option<f64>,
}

impl Execution {
    /// Checks the structural invariants: known parties, non-decreasing
    /// timestamps, strictly increasing event keys, and that every received
    /// uid was sent exactly once, earlier, to that receiver.
    pub fn validate(&self) -> Result<(), TraceError> {
        let parties: BTreeSet<PartyId> = self.parties.iter().copied().collect();
        if parties.len() != self.parties.len() {
            return Err(TraceError::Malformed("duplicate party id".into()));
        }
        for party in &self.parties {
            if !self.initial_states.contains_key(party) || !self.inputs.contains_key(party) {
                return Err(TraceError::Malformed(format!(
                    "no initial state or input for {party}"
                )));
            }
        }
        if let Some(party) = self
            .initial_states
            .keys()
            .chain(self.inputs.keys())
            .find(|p| !parties.contains(p))
        {
            return Err(TraceError::UnknownParty(*party));
        }
        self.message_fates().map(|_| ())
    }

    /// Send/receive times of every message in send order. Validates the
    /// execution along the way.
    pub(crate) fn message_fates(&self) -> Result<Vec<MessageFate>, TraceError> {
        let parties: BTreeSet<PartyId> = self.parties.iter().copied().collect();
        let mut sent: HashMap<u64, (&Message, usize)> = HashMap::new();
        let mut fates: Vec<MessageFate> = Vec::new();
        let mut previous: Option<EventKey> = None;

        for (index, event) in self.events.iter().enumerate() {
            if !parties.contains(&event.party) {
                return Err(TraceError::UnknownParty(event.party));
            }
            let key = event.key();
            if let Some(prev) = previous {
                if key.time < prev.time {
                    return Err(TraceError::TimestampOrder { index });
                }
                if key <= prev {
                    return Err(TraceError::KeyOrder { index });
                }
            }
            previous = Some(key);

            for message in &event.received {
                let Some(&(original, slot)) = sent.get(&message.uid) else {
                    return Err(TraceError::ReceiveWithoutSend {
                        uid: message.uid,
                        index,
                    });
                };
                if original != message || message.receiver != event.party {
                    return Err(TraceError::Malformed(format!(
                        "event {index} receives uid {} which differs from its send",
                        message.uid
                    )));
                }
                let fate = &mut fates[slot];
                if fate.received_at.is_some() {
                    return Err(TraceError::DuplicateReceive {
                        uid: message.uid,
                        index,
                    });
                }
                fate.received_at = Some(event.system_time.value());
            }

            for message in &event.sent {
                if message.sender != event.party {
                    return Err(TraceError::Malformed(format!(
                        "event {index} sends uid {} on behalf of {}",
                        message.uid, message.sender
                    )));
                }
                if !parties.contains(&message.receiver) {
                    return Err(TraceError::UnknownParty(message.receiver));
                }
                if sent.insert(message.uid, (message, fates.len())).is_some() {
                    return Err(TraceError::DuplicateUid {
                        uid: message.uid,
                        index,
                    });
                }
                fates.push(MessageFate {
                    uid: message.uid,
                    sent_at: event.system_time.value(),
                    received_at: None,
                });
            }
        }
        Ok(fates)
    }

    /// Every output record with the party that produced it.
    pub fn outputs(&self) -> impl Iterator<Item = (PartyId, SystemTime, &[u8])> + '_ {
        self.events.iter().flat_map(|e| {
            e.outputs
                .iter()
                .map(move |o| (e.party, e.system_time, o.as_slice()))
        })
    }

    pub fn crashed_parties(&self) -> BTreeSet<PartyId> {
        self.events
            .iter()
            .filter(|e| e.crashed)
            .map(|e| e.party)
            .collect()
    }

    pub fn sent_count(&self) -> usize {
        self.events.iter().map(|e| e.sent.len()).sum()
    }
}

/// True iff `a` and `b` differ only in timestamps: same inputs and initial
/// states, and the same event sequence once times are erased.
pub fn equivalent(a: &Execution, b: &Execution) -> bool {
    a.inputs == b.inputs
        && a.initial_states == b.initial_states
        && a.events.len() == b.events.len()
        && a.events.iter().zip(&b.events).all(|(x, y)| x.same_step(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetimeDirection {
    /// `t ↦ C(t)`
    Apply,
    /// `t ↦ C⁻¹(t)`
    Unapply,
}

/// Maps every timestamp (and the horizon) through `oracle` or its inverse.
///
/// Apply records the new clock as `oracle ∘ clock`. Unapply strips `oracle`
/// from the recorded clock and fails if the clock does not end in it.
pub fn retime(
    e: &Execution,
    oracle: &ClockOracle,
    direction: RetimeDirection,
) -> Result<Execution, TraceError> {
    let clock = match direction {
        RetimeDirection::Apply => e.clock.then(oracle)?,
        RetimeDirection::Unapply => match &e.clock {
            c if *oracle == ClockOracle::Identity => c.clone(),
            c if c == oracle => ClockOracle::Identity,
            ClockOracle::Composed(outer, inner) if **outer == *oracle => (**inner).clone(),
            other => {
                return Err(TraceError::ClockMismatch {
                    recorded: other.clone(),
                    stripped: oracle.clone(),
                })
            }
        },
    };
    let map = |t: SystemTime| -> Result<SystemTime, TraceError> {
        let v = t.value();
        let mapped = match direction {
            RetimeDirection::Apply => oracle.eval_raw(v),
            RetimeDirection::Unapply => oracle.inverse_raw(v),
        };
        Ok(SystemTime::new(mapped)?)
    };

    let mut out = e.clone();
    out.clock = clock;
    out.horizon = map(e.horizon)?;
    for event in &mut out.events {
        event.system_time = map(event.system_time)?;
    }
    let mut previous: Option<EventKey> = None;
    for (index, event) in out.events.iter().enumerate() {
        let key = event.key();
        if matches!(previous, Some(prev) if key <= prev) {
            return Err(TraceError::RetimeOrder { index });
        }
        previous = Some(key);
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn three_step() -> Execution {
        execution(
            ClockOracle::Identity,
            10.0,
            vec![
                event(1.0, 0, vec![], vec![msg(0, 1, 0)]),
                event(4.0, 1, vec![msg(0, 1, 0)], vec![msg(1, 0, 1)]),
                event(9.0, 0, vec![msg(1, 0, 1)], vec![]),
            ],
        )
    }

    #[test]
    fn valid_execution_passes() {
        three_step().validate().unwrap();
        assert_eq!(three_step().sent_count(), 2);
    }

    #[test]
    fn receive_without_send_is_malformed() {
        let mut e = three_step();
        e.events[1].received[0].uid = 42;
        assert_eq!(
            e.validate(),
            Err(TraceError::ReceiveWithoutSend { uid: 42, index: 1 })
        );
    }

    #[test]
    fn duplicate_receive_and_uid_are_rejected() {
        let mut e = three_step();
        e.events[2].received.push(msg(0, 1, 0));
        e.events[2].party = PartyId(1);
        assert!(e.validate().is_err());

        let mut e = three_step();
        e.events[2].sent.push(msg(0, 1, 0));
        assert_eq!(
            e.validate(),
            Err(TraceError::DuplicateUid { uid: 0, index: 2 })
        );
    }

    #[test]
    fn out_of_order_timestamps_are_rejected() {
        let mut e = three_step();
        e.events[2].system_time = SystemTime::new(3.0).unwrap();
        assert_eq!(e.validate(), Err(TraceError::TimestampOrder { index: 2 }));
    }

    #[test]
    fn ties_are_ordered_by_party() {
        let mut e = execution(
            ClockOracle::Identity,
            5.0,
            vec![event(1.0, 1, vec![], vec![]), event(1.0, 0, vec![], vec![])],
        );
        assert_eq!(e.validate(), Err(TraceError::KeyOrder { index: 1 }));
        e.events.swap(0, 1);
        e.validate().unwrap();
    }

    #[test]
    fn equivalence_examples() {
        let e = three_step();
        assert!(equivalent(&e, &e));
        let slowed = retime(&e, &ClockOracle::Sqrt, RetimeDirection::Apply).unwrap();
        assert!(equivalent(&e, &slowed));

        let mut swapped = e.clone();
        swapped.events.swap(0, 1);
        swapped.events[0].system_time = SystemTime::new(1.0).unwrap();
        swapped.events[1].system_time = SystemTime::new(4.0).unwrap();
        assert!(!equivalent(&e, &swapped));
    }

    #[test]
    fn retime_examples() {
        let e = three_step();
        let applied = retime(&e, &ClockOracle::Sqrt, RetimeDirection::Apply).unwrap();
        let times: Vec<f64> = applied
            .events
            .iter()
            .map(|ev| ev.system_time.value())
            .collect();
        assert_eq!(times, vec![1.0, 2.0, 3.0]);
        assert_eq!(applied.clock, ClockOracle::Sqrt);

        let back = retime(&applied, &ClockOracle::Sqrt, RetimeDirection::Unapply).unwrap();
        let times: Vec<f64> = back
            .events
            .iter()
            .map(|ev| ev.system_time.value())
            .collect();
        assert_eq!(times, vec![1.0, 4.0, 9.0]);
        assert!(equivalent(&back, &e));
        assert!((back.horizon.value() - 10.0).abs() < 1e-12);

        let same = retime(&e, &ClockOracle::Identity, RetimeDirection::Apply).unwrap();
        assert_eq!(same, e);
    }

    #[test]
    fn unapply_requires_matching_clock() {
        let e = three_step();
        assert!(matches!(
            retime(&e, &ClockOracle::Sqrt, RetimeDirection::Unapply),
            Err(TraceError::ClockMismatch { .. })
        ));
    }
}
