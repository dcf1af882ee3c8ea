//! Deterministic discrete-event execution of protocols under an adversarial
//! message system constrained by the UL or GST model.

mod engine;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{Protocol, ProtocolError};
use crate::time::{ClockOracle, TimeError};
use crate::trace::{Execution, PartyId};

pub use engine::{Engine, InFlightMessage, PendingDelivery, DEFAULT_MAX_EVENTS};

/// Delay an eager adversary adds to every message, so a send never shares an
/// instant with its own delivery.
pub const EAGER_OFFSET: f64 = 1.0 / (1u64 << 20) as f64;

/// Smallest delay the engine ever schedules. Only matters for bounds below
/// it (Δ = 0), where it stays inside the legality slack.
pub const MIN_LATENCY: f64 = 1.0 / (1u64 << 32) as f64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Time(#[from] TimeError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("simulation exceeded {0} events before the horizon")]
    TooManyEvents(usize),
    #[error("real time {0} is too large to separate a send from its delivery")]
    TimeResolution(f64),
}

/// The timing guarantee the message system must honour. Times are real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Model {
    /// Delivery by `t + delta`.
    Ul { delta: f64 },
    /// Delivery by `max(t, gst) + delta`.
    Gst { delta: f64, gst: f64 },
}

impl Model {
    pub fn delta(&self) -> f64 {
        match *self {
            Model::Ul { delta } | Model::Gst { delta, .. } => delta,
        }
    }

    pub fn deadline(&self, sent_real: f64) -> f64 {
        match *self {
            Model::Ul { delta } => sent_real + delta,
            Model::Gst { delta, gst } => sent_real.max(gst) + delta,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let (delta, gst) = match *self {
            Model::Ul { delta } => (delta, 0.0),
            Model::Gst { delta, gst } => (delta, gst),
        };
        if !(delta.is_finite() && delta >= 0.0 && gst.is_finite() && gst >= 0.0) {
            return Err(SimError::Config(format!(
                "model bounds must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// How the adversary picks a delivery time inside the legal window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Eager,
    MaxDelay,
    /// Uniform over the window, drawn from a stream dedicated to the scheduler.
    Random {
        seed: u64,
    },
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::Eager => f.write_str("eager"),
            Strategy::MaxDelay => f.write_str("max_delay"),
            Strategy::Random { seed } => write!(f, "random({seed})"),
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s.trim() {
            "eager" => Ok(Strategy::Eager),
            "max_delay" => Ok(Strategy::MaxDelay),
            other => other
                .strip_prefix("random(")
                .and_then(|rest| rest.strip_suffix(')'))
                .and_then(|seed| seed.trim().parse().ok())
                .map(|seed| Strategy::Random { seed })
                .ok_or_else(|| SimError::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Earliest and latest delivery the engine will schedule for a message
/// sent at `sent` with model deadline `deadline`.
pub fn delivery_window(sent: f64, deadline: f64) -> (f64, f64) {
    let latest = deadline.max(sent + MIN_LATENCY);
    let earliest = (sent + EAGER_OFFSET).min(latest);
    (earliest, latest)
}

/// Stateful delivery-time chooser for one run.
#[derive(Debug, Clone)]
pub struct Scheduler {
    strategy: Strategy,
    rng: ChaCha8Rng,
}

impl Scheduler {
    pub fn new(strategy: Strategy) -> Self {
        let seed = match strategy {
            Strategy::Random { seed } => seed,
            _ => 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        Self { strategy, rng }
    }

    pub fn choose(&mut self, pending: &PendingDelivery) -> f64 {
        let (earliest, latest) = delivery_window(pending.sent_real, pending.deadline_real);
        match self.strategy {
            Strategy::Eager => earliest,
            Strategy::MaxDelay => latest,
            Strategy::Random { .. } if earliest < latest => self.rng.gen_range(earliest..=latest),
            Strategy::Random { .. } => earliest,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryConfig {
    pub model: Model,
    pub strategy: Strategy,
    /// Real time at which each listed party crashes.
    pub crashes: BTreeMap<PartyId, f64>,
}

impl AdversaryConfig {
    pub fn new(model: Model, strategy: Strategy) -> Self {
        Self {
            model,
            strategy,
            crashes: BTreeMap::new(),
        }
    }

    pub fn with_crash(mut self, party: PartyId, at_real: f64) -> Self {
        self.crashes.insert(party, at_real);
        self
    }
}

/// Everything but the protocol that determines a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub parties: Vec<PartyId>,
    pub inputs: BTreeMap<PartyId, Vec<u8>>,
    pub clock: ClockOracle,
    pub adversary: AdversaryConfig,
    /// System time up to which the trace is complete.
    pub horizon: f64,
    pub seed: u64,
    pub max_events: usize,
}

impl RunConfig {
    pub fn new(
        n: u32,
        clock: ClockOracle,
        adversary: AdversaryConfig,
        horizon: f64,
        seed: u64,
    ) -> Self {
        let parties: Vec<PartyId> = (0..n).map(PartyId).collect();
        Self {
            inputs: parties.iter().map(|p| (*p, Vec::new())).collect(),
            parties,
            clock,
            adversary,
            horizon,
            seed,
            max_events: DEFAULT_MAX_EVENTS,
        }
    }

    pub fn with_inputs(mut self, inputs: impl IntoIterator<Item = Vec<u8>>) -> Self {
        self.inputs = self.parties.iter().copied().zip(inputs).collect();
        self
    }
}

/// Runs `protocol` to the horizon under the configured adversary.
pub fn simulate<P: Protocol>(protocol: &P, config: &RunConfig) -> Result<Execution, SimError> {
    let mut engine = Engine::new(protocol, config)?;
    let mut scheduler = Scheduler::new(config.adversary.strategy);
    while engine.step()? {
        for pending in engine.take_pending() {
            let at = scheduler.choose(&pending);
            engine.deliver_at(pending, at)?;
        }
    }
    Ok(engine.into_execution())
}
