//! The protocol state-machine abstraction and the two protocol transformers.
//!
//! A protocol reacts to triggers: a (possibly empty) multiset of delivered
//! messages together with a single reading of the global clock. Timers are
//! explicit wake-up requests in system time; there is no other way for a
//! protocol to observe time.

mod replay;
mod transform;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::time::{SystemTime, TIME_SLACK};
use crate::trace::{Message, PartyId};

pub use replay::{replay, Divergence, ReplayError};
pub use transform::{run_ignoring_delta, wrap_clock, ClockWrapped, IgnoringDelta};

/// Per-party random stream. Stream 0 of a seed belongs to the scheduler,
/// stream `p + 1` to party `p`.
pub type Coins = ChaCha8Rng;

pub fn party_coins(seed: u64, party: PartyId) -> Coins {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(party.0) + 1);
    rng
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("bad input for {party}: {reason}")]
    BadInput { party: PartyId, reason: String },
    #[error("{party} requested a timer at {wake} but it is already {now}")]
    TimerInPast { party: PartyId, wake: f64, now: f64 },
    #[error("timer at {0} is outside the clock oracle's range")]
    OracleRange(f64),
    #[error("corrupt state: {0}")]
    CorruptState(String),
}

/// What a party sees of the world besides its own state.
#[derive(Debug, Clone, Copy)]
pub struct PartyEnv<'a> {
    pub me: PartyId,
    pub parties: &'a [PartyId],
}

impl PartyEnv<'_> {
    pub fn n(&self) -> usize {
        self.parties.len()
    }

    pub fn others(&self) -> impl Iterator<Item = PartyId> + '_ {
        let me = self.me;
        self.parties.iter().copied().filter(move |p| *p != me)
    }
}

/// The atomic result of one trigger.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub new_state: S,
    pub sends: Vec<(PartyId, Vec<u8>)>,
    pub timers: Vec<SystemTime>,
    pub outputs: Vec<Vec<u8>>,
    pub terminated: bool,
}

impl<S> Transition<S> {
    pub fn to(new_state: S) -> Self {
        Self {
            new_state,
            sends: Vec::new(),
            timers: Vec::new(),
            outputs: Vec::new(),
            terminated: false,
        }
    }

    pub fn send(mut self, to: PartyId, payload: impl Into<Vec<u8>>) -> Self {
        self.sends.push((to, payload.into()));
        self
    }

    pub fn timer(mut self, wake: SystemTime) -> Self {
        self.timers.push(wake);
        self
    }

    pub fn output(mut self, record: impl Into<Vec<u8>>) -> Self {
        self.outputs.push(record.into());
        self
    }

    pub fn terminate(mut self) -> Self {
        self.terminated = true;
        self
    }
}

/// A deterministic protocol: transitions are a function of the state, the
/// delivered messages, the clock reading and the coin stream position.
///
/// Every party is triggered once at time zero with no messages; after that
/// only deliveries and requested timers trigger it.
pub trait Protocol {
    type State: Clone;

    fn name(&self) -> String;

    /// The publicly known eventual delay bound this instance was built for,
    /// if it was designed for the GST model.
    fn declared_delta(&self) -> Option<f64> {
        None
    }

    fn init(
        &self,
        env: &PartyEnv<'_>,
        input: &[u8],
        coins: &mut Coins,
    ) -> Result<Self::State, ProtocolError>;

    fn on_trigger(
        &self,
        env: &PartyEnv<'_>,
        state: &Self::State,
        received: &[Message],
        now: SystemTime,
        coins: &mut Coins,
    ) -> Result<Transition<Self::State>, ProtocolError>;

    /// Canonical encoding: equal states encode to equal bytes.
    fn encode_state(&self, state: &Self::State) -> Vec<u8>;
}

impl<P: Protocol + ?Sized> Protocol for &P {
    type State = P::State;

    fn name(&self) -> String {
        (**self).name()
    }

    fn declared_delta(&self) -> Option<f64> {
        (**self).declared_delta()
    }

    fn init(
        &self,
        env: &PartyEnv<'_>,
        input: &[u8],
        coins: &mut Coins,
    ) -> Result<Self::State, ProtocolError> {
        (**self).init(env, input, coins)
    }

    fn on_trigger(
        &self,
        env: &PartyEnv<'_>,
        state: &Self::State,
        received: &[Message],
        now: SystemTime,
        coins: &mut Coins,
    ) -> Result<Transition<Self::State>, ProtocolError> {
        (**self).on_trigger(env, state, received, now, coins)
    }

    fn encode_state(&self, state: &Self::State) -> Vec<u8> {
        (**self).encode_state(state)
    }
}

/// What a party did in one step, after the runtime applied crash and
/// termination semantics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Step {
    pub sends: Vec<(PartyId, Vec<u8>)>,
    pub timers: Vec<SystemTime>,
    pub outputs: Vec<Vec<u8>>,
}

/// A party's mutable runtime: state plus crash/termination status and its
/// coin stream. Shared by the engine and by replay.
#[derive(Debug, Clone)]
pub struct PartyRuntime<S> {
    pub id: PartyId,
    pub state: S,
    pub terminated: bool,
    pub crashed: bool,
    coins: Coins,
}

impl<S: Clone> PartyRuntime<S> {
    pub fn start<P: Protocol<State = S>>(
        protocol: &P,
        parties: &[PartyId],
        id: PartyId,
        input: &[u8],
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        let mut coins = party_coins(seed, id);
        let env = PartyEnv { me: id, parties };
        let state = protocol.init(&env, input, &mut coins)?;
        Ok(Self {
            id,
            state,
            terminated: false,
            crashed: false,
            coins,
        })
    }

    /// Whether a trigger would reach the protocol at all.
    pub fn is_active(&self) -> bool {
        !self.crashed && !self.terminated
    }

    /// Runs one trigger. Crashed and terminated parties absorb deliveries
    /// without changing state.
    pub fn trigger<P: Protocol<State = S>>(
        &mut self,
        protocol: &P,
        parties: &[PartyId],
        received: &[Message],
        now: SystemTime,
    ) -> Result<Step, ProtocolError> {
        if !self.is_active() {
            return Ok(Step::default());
        }
        let env = PartyEnv {
            me: self.id,
            parties,
        };
        let transition = protocol.on_trigger(&env, &self.state, received, now, &mut self.coins)?;
        let tolerance = TIME_SLACK * now.value().max(1.0);
        if let Some(wake) = transition
            .timers
            .iter()
            .find(|w| w.value() < now.value() - tolerance)
        {
            return Err(ProtocolError::TimerInPast {
                party: self.id,
                wake: wake.value(),
                now: now.value(),
            });
        }
        self.state = transition.new_state;
        self.terminated = transition.terminated;
        Ok(Step {
            sends: transition.sends,
            timers: transition.timers,
            outputs: transition.outputs,
        })
    }

    pub fn crash(&mut self) {
        self.crashed = true;
    }
}
