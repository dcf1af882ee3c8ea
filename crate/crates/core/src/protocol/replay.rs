use std::collections::BTreeMap;

use thiserror::Error;

use super::{PartyRuntime, Protocol, ProtocolError};
use crate::trace::{Event, Execution, PartyId, TraceError};

/// First point where a recorded execution and the protocol disagree.
/// `event` is `None` for the initial states.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub event: Option<usize>,
    pub party: PartyId,
    pub field: &'static str,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("{0}")]
    Diverged(Divergence),
    #[error(transparent)]
    Malformed(#[from] TraceError),
    #[error("protocol failed during replay at event {index}: {source}")]
    Protocol { index: usize, source: ProtocolError },
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.event {
            Some(i) => write!(f, "event {i} ({})", self.party)?,
            None => write!(f, "initial state of {}", self.party)?,
        }
        write!(
            f,
            ": {} expected {} found {}",
            self.field, self.expected, self.found
        )
    }
}

fn diverge<T: std::fmt::Debug>(
    event: Option<usize>,
    party: PartyId,
    field: &'static str,
    expected: T,
    found: T,
) -> ReplayError {
    ReplayError::Diverged(Divergence {
        event,
        party,
        field,
        expected: format!("{expected:?}"),
        found: format!("{found:?}"),
    })
}

/// Checks that `e` is an execution of `protocol` for the given inputs and
/// coin seed: each recorded step is exactly what the transition function
/// produces on the recorded trigger.
pub fn replay<P: Protocol>(
    protocol: &P,
    e: &Execution,
    inputs: &BTreeMap<PartyId, Vec<u8>>,
    seed: u64,
) -> Result<(), ReplayError> {
    e.validate()?;
    let parties = e.parties.as_slice();
    let mut runtimes = BTreeMap::new();
    for &party in parties {
        let input = inputs.get(&party).map(Vec::as_slice).unwrap_or(&[]);
        let recorded_input = e.inputs.get(&party).map(Vec::as_slice).unwrap_or(&[]);
        if input != recorded_input {
            return Err(diverge(None, party, "input", input, recorded_input));
        }
        let rt = PartyRuntime::start(protocol, parties, party, input, seed)
            .map_err(|source| ReplayError::Protocol { index: 0, source })?;
        let expected = protocol.encode_state(&rt.state);
        if e.initial_states[&party] != expected {
            return Err(diverge(
                None,
                party,
                "state",
                hex::encode(expected),
                hex::encode(&e.initial_states[&party]),
            ));
        }
        runtimes.insert(party, rt);
    }

    for (index, event) in e.events.iter().enumerate() {
        let rt = runtimes.get_mut(&event.party).expect("validated party");
        replay_event(protocol, parties, rt, index, event)?;
    }
    Ok(())
}

fn replay_event<P: Protocol>(
    protocol: &P,
    parties: &[PartyId],
    rt: &mut PartyRuntime<P::State>,
    index: usize,
    event: &Event,
) -> Result<(), ReplayError> {
    let at = Some(index);
    let party = event.party;

    if event.crashed && !rt.crashed {
        if !event.received.is_empty() || !event.sent.is_empty() || !event.outputs.is_empty() {
            return Err(diverge(at, party, "crash", "empty step", "non-empty step"));
        }
        rt.crash();
    } else if !event.crashed && rt.crashed {
        return Err(diverge(at, party, "crashed", true, false));
    } else {
        let step = rt
            .trigger(protocol, parties, &event.received, event.system_time)
            .map_err(|source| ReplayError::Protocol { index, source })?;
        let expected_sends: Vec<(u32, String)> = step
            .sends
            .iter()
            .map(|(to, payload)| (to.0, hex::encode(payload)))
            .collect();
        let found_sends: Vec<(u32, String)> = event
            .sent
            .iter()
            .map(|m| (m.receiver.0, hex::encode(&m.payload)))
            .collect();
        if expected_sends != found_sends {
            return Err(diverge(at, party, "sent", expected_sends, found_sends));
        }
        let expected_outputs: Vec<String> = step.outputs.iter().map(hex::encode).collect();
        let found_outputs: Vec<String> = event.outputs.iter().map(hex::encode).collect();
        if expected_outputs != found_outputs {
            return Err(diverge(
                at,
                party,
                "outputs",
                expected_outputs,
                found_outputs,
            ));
        }
    }

    let after = protocol.encode_state(&rt.state);
    if after != event.state {
        return Err(diverge(
            at,
            party,
            "state",
            hex::encode(after),
            hex::encode(&event.state),
        ));
    }
    if rt.terminated != event.terminated {
        return Err(diverge(
            at,
            party,
            "terminated",
            rt.terminated,
            event.terminated,
        ));
    }
    Ok(())
}
