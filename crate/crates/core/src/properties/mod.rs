//! Properties as predicates over executions, a retiming falsifier for the
//! time-agnostic claim, and bounded exhaustive enumeration of executions.

mod enumerate;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::time::ClockOracle;
use crate::trace::{retime, Execution, RetimeDirection, TraceError};

pub use enumerate::{
    enumerate_executions, execution_set_included, DelayGrid, EnumerationError, ExecutionSet,
    MAX_BOUND, MAX_FRONTIER,
};

#[derive(Debug, Error)]
pub enum PropertyError {
    #[error("property `{0}` does not claim to be time-agnostic")]
    NotClaimed(String),
    #[error("unknown property `{0}`")]
    Unknown(String),
    #[error("retiming failed: {0}")]
    Retime(#[from] TraceError),
}

type Predicate = Arc<dyn Fn(&Execution) -> bool + Send + Sync>;

/// A named set of allowed executions.
#[derive(Clone)]
pub struct Property {
    name: String,
    claims_time_agnostic: bool,
    predicate: Predicate,
}

impl fmt::Debug for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Property")
            .field("name", &self.name)
            .field("claims_time_agnostic", &self.claims_time_agnostic)
            .finish_non_exhaustive()
    }
}

impl Property {
    pub fn new(
        name: impl Into<String>,
        claims_time_agnostic: bool,
        predicate: impl Fn(&Execution) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            claims_time_agnostic,
            predicate: Arc::new(predicate),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn claims_time_agnostic(&self) -> bool {
        self.claims_time_agnostic
    }

    pub fn with_claim(mut self, claims_time_agnostic: bool) -> Self {
        self.claims_time_agnostic = claims_time_agnostic;
        self
    }

    pub fn check(&self, e: &Execution) -> bool {
        (self.predicate)(e)
    }

    /// Every party without a crash event reaches a terminated event.
    pub fn termination() -> Self {
        Self::new("termination", true, |e| {
            let crashed = e.crashed_parties();
            e.parties
                .iter()
                .filter(|p| !crashed.contains(p))
                .all(|p| e.events.iter().any(|ev| ev.party == *p && ev.terminated))
        })
    }

    /// No two output records differ.
    pub fn agreement() -> Self {
        Self::new("agreement", true, |e| {
            let mut outputs = e.outputs().map(|(_, _, o)| o);
            match outputs.next() {
                None => true,
                Some(first) => outputs.all(|o| o == first),
            }
        })
    }

    /// Every output equals some party's input.
    pub fn validity() -> Self {
        Self::new("validity", true, |e| {
            e.outputs()
                .all(|(_, _, o)| e.inputs.values().any(|i| i.as_slice() == o))
        })
    }

    pub fn message_count(max: usize) -> Self {
        Self::new(format!("message_count:{max}"), true, move |e| {
            e.sent_count() <= max
        })
    }

    /// Every output happens by system time `deadline`. Depends on time, so
    /// it makes no claim unless told to.
    pub fn output_by(deadline: f64) -> Self {
        Self::new(format!("output_by:{deadline}"), false, move |e| {
            e.outputs().all(|(_, t, _)| t.value() <= deadline)
        })
    }

    /// `termination`, `agreement`, `validity`, `message_count:N` or
    /// `output_by:T`.
    pub fn parse(spec: &str) -> Result<Self, PropertyError> {
        let unknown = || PropertyError::Unknown(spec.to_string());
        match spec.split_once(':') {
            None => match spec {
                "termination" => Ok(Self::termination()),
                "agreement" => Ok(Self::agreement()),
                "validity" => Ok(Self::validity()),
                _ => Err(unknown()),
            },
            Some(("message_count", n)) => n.parse().map(Self::message_count).map_err(|_| unknown()),
            Some(("output_by", t)) => match t.parse::<f64>() {
                Ok(t) if t.is_finite() => Ok(Self::output_by(t)),
                _ => Err(unknown()),
            },
            Some(_) => Err(unknown()),
        }
    }
}

pub fn check_property(x: &Property, e: &Execution) -> bool {
    x.check(e)
}

/// The properties shipped with the example protocols.
pub fn shipped_properties(max_messages: usize) -> Vec<Property> {
    vec![
        Property::termination(),
        Property::agreement(),
        Property::validity(),
        Property::message_count(max_messages),
    ]
}

/// The oracle family the falsifier tries by default.
pub fn default_oracles() -> Vec<ClockOracle> {
    vec![
        ClockOracle::Identity,
        ClockOracle::Sqrt,
        ClockOracle::Composed(Box::new(ClockOracle::Sqrt), Box::new(ClockOracle::Sqrt)),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub oracle: ClockOracle,
    pub original: bool,
    pub retimed: bool,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "retiming by {} flips the verdict from {} to {}",
            self.oracle, self.original, self.retimed
        )
    }
}

/// Returns the first oracle whose retiming of `e` changes the verdict of
/// `x`. `None` is evidence, not proof, that `x` ignores time.
pub fn falsify_time_agnostic(
    x: &Property,
    e: &Execution,
    oracles: &[ClockOracle],
) -> Result<Option<Counterexample>, PropertyError> {
    if !x.claims_time_agnostic {
        return Err(PropertyError::NotClaimed(x.name.clone()));
    }
    let original = x.check(e);
    for oracle in oracles {
        let retimed = x.check(&retime(e, oracle, RetimeDirection::Apply)?);
        if retimed != original {
            return Ok(Some(Counterexample {
                oracle: oracle.clone(),
                original,
                retimed,
            }));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::fixtures::*;
    use crate::trace::PartyId;

    fn with_outputs(times_and_values: &[(f64, u32, &[u8])]) -> Execution {
        let events = times_and_values
            .iter()
            .map(|(t, p, v)| {
                let mut ev = event(*t, *p, vec![], vec![]);
                ev.outputs = vec![v.to_vec()];
                ev.terminated = true;
                ev
            })
            .collect();
        let mut e = execution(ClockOracle::Identity, 20.0, events);
        e.inputs.insert(PartyId(0), b"0".to_vec());
        e.inputs.insert(PartyId(1), b"1".to_vec());
        e
    }

    #[test]
    fn termination_ignores_crashed_parties() {
        let e = with_outputs(&[(1.0, 0, b"0")]);
        assert!(!Property::termination().check(&e));
        let mut crashed = e.clone();
        let mut crash = event(2.0, 1, vec![], vec![]);
        crash.crashed = true;
        crashed.events.push(crash);
        assert!(Property::termination().check(&crashed));
    }

    #[test]
    fn agreement_and_validity() {
        let split = with_outputs(&[(1.0, 0, b"0"), (2.0, 1, b"1")]);
        assert!(!check_property(&Property::agreement(), &split));
        assert!(check_property(&Property::validity(), &split));
        let invented = with_outputs(&[(1.0, 0, b"7"), (2.0, 1, b"7")]);
        assert!(check_property(&Property::agreement(), &invented));
        assert!(!check_property(&Property::validity(), &invented));
    }

    #[test]
    fn message_count_counts_sends() {
        let events = (0..12)
            .map(|uid| event(uid as f64, 0, vec![], vec![msg(0, 1, uid)]))
            .collect();
        let e = execution(ClockOracle::Identity, 20.0, events);
        assert!(!Property::message_count(10).check(&e));
        assert!(Property::message_count(12).check(&e));
    }

    #[test]
    fn falsifier_leaves_order_properties_alone() {
        let e = with_outputs(&[(1.0, 0, b"0"), (9.0, 1, b"0")]);
        for x in shipped_properties(3) {
            assert_eq!(
                falsify_time_agnostic(&x, &e, &default_oracles()).unwrap(),
                None
            );
        }
    }

    #[test]
    fn falsifier_catches_time_dependence() {
        let demo = Property::output_by(5.0).with_claim(true);
        let early = with_outputs(&[(4.0, 0, b"0")]);
        assert_eq!(
            falsify_time_agnostic(&demo, &early, &[ClockOracle::Sqrt]).unwrap(),
            None
        );
        let late = with_outputs(&[(16.0, 0, b"0")]);
        let found = falsify_time_agnostic(&demo, &late, &[ClockOracle::Sqrt])
            .unwrap()
            .expect("retimed output lands at 4");
        assert_eq!(found.oracle, ClockOracle::Sqrt);
        assert!(!found.original && found.retimed);
    }

    #[test]
    fn falsifier_requires_a_claim() {
        let e = with_outputs(&[]);
        assert!(matches!(
            falsify_time_agnostic(&Property::output_by(1.0), &e, &default_oracles()),
            Err(PropertyError::NotClaimed(_))
        ));
    }

    #[test]
    fn parses_names() {
        for name in [
            "termination",
            "agreement",
            "validity",
            "message_count:40",
            "output_by:5",
        ] {
            assert_eq!(Property::parse(name).unwrap().name(), name);
        }
        for bad in ["liveness", "message_count:x", "output_by:inf", "foo:1"] {
            assert!(Property::parse(bad).is_err(), "{bad}");
        }
    }
}
