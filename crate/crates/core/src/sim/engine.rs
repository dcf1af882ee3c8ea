use std::collections::BTreeMap;

use ordered_float::OrderedFloat;

use super::{Model, RunConfig, SimError, MIN_LATENCY};
use crate::protocol::{PartyRuntime, Protocol};
use crate::time::{ClockOracle, SystemTime};
use crate::trace::{Event, Execution, Message, PartyId};

pub const DEFAULT_MAX_EVENTS: usize = 1_000_000;

/// A sent message whose delivery time has not been chosen yet.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingDelivery {
    pub message: Message,
    pub sent_real: f64,
    pub deadline_real: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InFlightMessage {
    pub message: Message,
    pub sent_real: f64,
    pub deadline_real: f64,
    pub scheduled_real: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Delivery,
    Timer,
    Crash,
}

type Key = (OrderedFloat<f64>, PartyId, Kind);

/// Discrete-event executor. Occurrences are processed in `(real time,
/// party, kind)` order; deliveries to one party at one instant form a
/// single trigger, as do coinciding timers.
///
/// After every [`Engine::step`] the caller must assign delivery times to
/// [`Engine::take_pending`] messages; this is where adversaries (and the
/// exhaustive enumerator) plug in.
#[derive(Debug)]
pub struct Engine<'p, P: Protocol> {
    protocol: &'p P,
    clock: ClockOracle,
    model: Model,
    parties: Vec<PartyId>,
    horizon_real: f64,
    runtimes: BTreeMap<PartyId, PartyRuntime<P::State>>,
    queue: BTreeMap<Key, Vec<InFlightMessage>>,
    pending: Vec<PendingDelivery>,
    next_uid: u64,
    max_events: usize,
    execution: Execution,
}

impl<P: Protocol> Clone for Engine<'_, P> {
    fn clone(&self) -> Self {
        Self {
            protocol: self.protocol,
            clock: self.clock.clone(),
            model: self.model,
            parties: self.parties.clone(),
            horizon_real: self.horizon_real,
            runtimes: self.runtimes.clone(),
            queue: self.queue.clone(),
            pending: self.pending.clone(),
            next_uid: self.next_uid,
            max_events: self.max_events,
            execution: self.execution.clone(),
        }
    }
}

impl<'p, P: Protocol> Engine<'p, P> {
    pub fn new(protocol: &'p P, config: &RunConfig) -> Result<Self, SimError> {
        if config.parties.is_empty() {
            return Err(SimError::Config("no parties".into()));
        }
        config.adversary.model.validate()?;
        let horizon = SystemTime::new(config.horizon)?;
        let horizon_real = config.clock.inverse(horizon).value();
        if !horizon_real.is_finite() {
            return Err(SimError::Config("horizon must be finite".into()));
        }

        let mut runtimes = BTreeMap::new();
        let mut inputs = BTreeMap::new();
        let mut initial_states = BTreeMap::new();
        for &party in &config.parties {
            let input = config.inputs.get(&party).cloned().unwrap_or_default();
            let rt = PartyRuntime::start(protocol, &config.parties, party, &input, config.seed)?;
            initial_states.insert(party, protocol.encode_state(&rt.state));
            inputs.insert(party, input);
            if runtimes.insert(party, rt).is_some() {
                return Err(SimError::Config(format!("duplicate party {party}")));
            }
        }

        let mut queue: BTreeMap<Key, Vec<InFlightMessage>> = BTreeMap::new();
        for &party in &config.parties {
            queue.insert((OrderedFloat(0.0), party, Kind::Timer), Vec::new());
        }
        for (&party, &at) in &config.adversary.crashes {
            if !runtimes.contains_key(&party) {
                return Err(SimError::Config(format!("crash of unknown party {party}")));
            }
            if !(at.is_finite() && at >= 0.0) {
                return Err(SimError::Config(format!("bad crash time {at} for {party}")));
            }
            if at <= horizon_real {
                queue.insert((OrderedFloat(at), party, Kind::Crash), Vec::new());
            }
        }

        Ok(Self {
            protocol,
            clock: config.clock.clone(),
            model: config.adversary.model,
            parties: config.parties.clone(),
            horizon_real,
            runtimes,
            queue,
            pending: Vec::new(),
            next_uid: 0,
            max_events: config.max_events,
            execution: Execution {
                clock: config.clock.clone(),
                parties: config.parties.clone(),
                horizon,
                inputs,
                initial_states,
                events: Vec::new(),
            },
        })
    }

    pub fn horizon_real(&self) -> f64 {
        self.horizon_real
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn event_count(&self) -> usize {
        self.execution.events.len()
    }

    pub fn execution(&self) -> &Execution {
        &self.execution
    }

    pub fn into_execution(self) -> Execution {
        self.execution
    }

    /// Messages sent by the last step, awaiting a delivery time.
    pub fn take_pending(&mut self) -> Vec<PendingDelivery> {
        std::mem::take(&mut self.pending)
    }

    /// Schedules `pending` for delivery at real time `at`, which must lie
    /// strictly after the send. Deliveries past the horizon stay in flight.
    pub fn deliver_at(&mut self, pending: PendingDelivery, at: f64) -> Result<(), SimError> {
        if at.is_nan() || at <= pending.sent_real {
            return Err(SimError::TimeResolution(pending.sent_real));
        }
        if at > self.horizon_real {
            return Ok(());
        }
        let receiver = pending.message.receiver;
        self.queue
            .entry((OrderedFloat(at), receiver, Kind::Delivery))
            .or_default()
            .push(InFlightMessage {
                message: pending.message,
                sent_real: pending.sent_real,
                deadline_real: pending.deadline_real,
                scheduled_real: at,
            });
        Ok(())
    }

    /// Processes the earliest occurrence. Returns `false` once nothing is
    /// left before the horizon.
    pub fn step(&mut self) -> Result<bool, SimError> {
        let Some(entry) = self.queue.first_entry() else {
            return Ok(false);
        };
        let (OrderedFloat(real), party, kind) = *entry.key();
        if real > self.horizon_real {
            return Ok(false);
        }
        let deliveries = entry.remove();
        if self.execution.events.len() >= self.max_events {
            return Err(SimError::TooManyEvents(self.max_events));
        }
        if real + MIN_LATENCY == real {
            return Err(SimError::TimeResolution(real));
        }
        let now = SystemTime::new(self.clock.eval_raw(real))?;
        let rt = self.runtimes.get_mut(&party).expect("queued party exists");

        let mut received: Vec<Message> = deliveries.into_iter().map(|d| d.message).collect();
        received.sort_by_key(|m| m.uid);

        let step = match kind {
            Kind::Crash => {
                rt.crash();
                Default::default()
            }
            // timers of stopped parties vanish without an event
            Kind::Timer if !rt.is_active() => return Ok(true),
            Kind::Timer | Kind::Delivery => {
                rt.trigger(self.protocol, &self.parties, &received, now)?
            }
        };

        let mut sent = Vec::with_capacity(step.sends.len());
        for (receiver, payload) in step.sends {
            if !self.runtimes.contains_key(&receiver) {
                return Err(SimError::Config(format!(
                    "{party} sent to unknown {receiver}"
                )));
            }
            let message = Message {
                sender: party,
                receiver,
                payload,
                uid: self.next_uid,
            };
            self.next_uid += 1;
            self.pending.push(PendingDelivery {
                message: message.clone(),
                sent_real: real,
                deadline_real: self.model.deadline(real),
            });
            sent.push(message);
        }

        for wake in step.timers {
            let mut wake_real = self.clock.inverse_raw(wake.value());
            if wake_real <= real {
                wake_real = real + MIN_LATENCY;
            }
            if wake_real <= self.horizon_real {
                self.queue
                    .entry((OrderedFloat(wake_real), party, Kind::Timer))
                    .or_default();
            }
        }

        let rt = &self.runtimes[&party];
        self.execution.events.push(Event {
            system_time: now,
            received,
            party,
            state: self.protocol.encode_state(&rt.state),
            sent,
            outputs: step.outputs,
            terminated: rt.terminated,
            crashed: rt.crashed,
        });
        Ok(true)
    }
}
