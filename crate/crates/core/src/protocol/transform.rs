use super::{Coins, PartyEnv, Protocol, ProtocolError, Transition};
use crate::time::{ClockOracle, SystemTime};
use crate::trace::Message;

/// `inner` run behind a clock wrapper: every clock reading `t` handed to the
/// inner protocol is replaced by `oracle(t)`, and every inner timer request
/// `w` becomes an outer request at `oracle⁻¹(w)`.
///
/// State, messages, outputs and coins pass through untouched, so a trace of
/// the wrapped protocol, retimed through `oracle`, is a trace of `inner`.
#[derive(Debug, Clone)]
pub struct ClockWrapped<P> {
    inner: P,
    oracle: ClockOracle,
}

impl<P> ClockWrapped<P> {
    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn oracle(&self) -> &ClockOracle {
        &self.oracle
    }
}

pub fn wrap_clock<P: Protocol>(inner: P, oracle: ClockOracle) -> ClockWrapped<P> {
    ClockWrapped { inner, oracle }
}

impl<P: Protocol> Protocol for ClockWrapped<P> {
    type State = P::State;

    fn name(&self) -> String {
        format!("wrap_clock({},{})", self.inner.name(), self.oracle)
    }

    /// The wrapped protocol targets the UL model, where no bound is supplied.
    fn declared_delta(&self) -> Option<f64> {
        None
    }

    fn init(
        &self,
        env: &PartyEnv<'_>,
        input: &[u8],
        coins: &mut Coins,
    ) -> Result<Self::State, ProtocolError> {
        self.inner.init(env, input, coins)
    }

    fn on_trigger(
        &self,
        env: &PartyEnv<'_>,
        state: &Self::State,
        received: &[Message],
        now: SystemTime,
        coins: &mut Coins,
    ) -> Result<Transition<Self::State>, ProtocolError> {
        let inner_now = SystemTime::new(self.oracle.eval_raw(now.value()))
            .map_err(|_| ProtocolError::OracleRange(now.value()))?;
        let mut transition = self
            .inner
            .on_trigger(env, state, received, inner_now, coins)?;
        for wake in &mut transition.timers {
            *wake = SystemTime::new(self.oracle.inverse_raw(wake.value()))
                .map_err(|_| ProtocolError::OracleRange(wake.value()))?;
        }
        Ok(transition)
    }

    fn encode_state(&self, state: &Self::State) -> Vec<u8> {
        self.inner.encode_state(state)
    }
}

/// A UL-designed protocol executed under a GST scheduler. The model supplies
/// a delay bound; the protocol never reads it. Behaviour is that of `inner`
/// on every trigger.
#[derive(Debug, Clone)]
pub struct IgnoringDelta<P> {
    inner: P,
}

pub fn run_ignoring_delta<P: Protocol>(inner: P) -> IgnoringDelta<P> {
    IgnoringDelta { inner }
}

impl<P: Protocol> Protocol for IgnoringDelta<P> {
    type State = P::State;

    fn name(&self) -> String {
        format!("ignore_delta({})", self.inner.name())
    }

    fn declared_delta(&self) -> Option<f64> {
        None
    }

    fn init(
        &self,
        env: &PartyEnv<'_>,
        input: &[u8],
        coins: &mut Coins,
    ) -> Result<Self::State, ProtocolError> {
        self.inner.init(env, input, coins)
    }

    fn on_trigger(
        &self,
        env: &PartyEnv<'_>,
        state: &Self::State,
        received: &[Message],
        now: SystemTime,
        coins: &mut Coins,
    ) -> Result<Transition<Self::State>, ProtocolError> {
        self.inner.on_trigger(env, state, received, now, coins)
    }

    fn encode_state(&self, state: &Self::State) -> Vec<u8> {
        self.inner.encode_state(state)
    }
}
