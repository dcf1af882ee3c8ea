use std::collections::BTreeMap;

use thiserror::Error;

use crate::protocol::Protocol;
use crate::sim::{delivery_window, Engine, PendingDelivery, RunConfig, SimError};
use crate::time::TIME_SLACK;
use crate::trace::{order_signature, Execution};

/// Largest event bound the enumerator accepts.
pub const MAX_BOUND: usize = 12;
/// Explored engine states after which enumeration gives up.
pub const MAX_FRONTIER: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum EnumerationError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("frontier exceeded {0} states")]
    Explosion(usize),
    #[error("event bound {0} exceeds {MAX_BOUND}")]
    BoundTooLarge(usize),
    #[error("quantum must be positive and finite, got {0}")]
    BadQuantum(f64),
}

/// Delays the enumerator may pick: the eager minimum plus every positive
/// multiple of `quantum` inside the legal window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayGrid {
    quantum: f64,
}

impl DelayGrid {
    pub fn new(quantum: f64) -> Result<Self, EnumerationError> {
        if quantum.is_finite() && quantum > 0.0 {
            Ok(Self { quantum })
        } else {
            Err(EnumerationError::BadQuantum(quantum))
        }
    }

    /// Half the bound, the documented default.
    pub fn default_for(delta: f64) -> Result<Self, EnumerationError> {
        Self::new(0.5 * delta)
    }

    pub fn quantum(&self) -> f64 {
        self.quantum
    }

    /// Real delivery times offered for one message.
    pub fn options(&self, pending: &PendingDelivery) -> Vec<f64> {
        let sent = pending.sent_real;
        let (earliest, latest) = delivery_window(sent, pending.deadline_real);
        let mut out = vec![earliest];
        for k in 1.. {
            let at = sent + k as f64 * self.quantum;
            if at > latest + TIME_SLACK {
                break;
            }
            let at = at.min(latest);
            if at > *out.last().expect("non-empty") {
                out.push(at);
            }
        }
        out
    }
}

/// Executions keyed by their order signature, one per equivalence class.
#[derive(Debug, Clone, Default)]
pub struct ExecutionSet {
    classes: BTreeMap<Vec<u8>, Execution>,
}

impl ExecutionSet {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Adds `e` unless an equivalent execution is already present.
    pub fn insert(&mut self, e: Execution) -> bool {
        let key = order_signature(&e);
        if self.classes.contains_key(&key) {
            return false;
        }
        self.classes.insert(key, e);
        true
    }

    pub fn contains_equivalent(&self, e: &Execution) -> bool {
        self.classes.contains_key(&order_signature(e))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Execution> {
        self.classes.values()
    }
}

impl FromIterator<Execution> for ExecutionSet {
    fn from_iter<I: IntoIterator<Item = Execution>>(iter: I) -> Self {
        let mut set = Self::default();
        for e in iter {
            set.insert(e);
        }
        set
    }
}

/// True iff every class of `a` has an equivalent member in `b`.
pub fn execution_set_included(a: &ExecutionSet, b: &ExecutionSet) -> bool {
    a.classes.keys().all(|k| b.classes.contains_key(k))
}

struct Search {
    grid: DelayGrid,
    bound: usize,
    explored: usize,
    found: ExecutionSet,
}

impl Search {
    fn run<P: Protocol>(&mut self, mut engine: Engine<'_, P>) -> Result<(), EnumerationError> {
        loop {
            self.explored += 1;
            if self.explored > MAX_FRONTIER {
                return Err(EnumerationError::Explosion(MAX_FRONTIER));
            }
            if engine.event_count() >= self.bound || !engine.step()? {
                self.found.insert(engine.into_execution());
                return Ok(());
            }
            let pending = engine.take_pending();
            if pending.is_empty() {
                continue;
            }
            let options: Vec<Vec<f64>> = pending.iter().map(|p| self.grid.options(p)).collect();
            let mut choice = vec![0usize; pending.len()];
            loop {
                let mut branch = engine.clone();
                for (i, p) in pending.iter().enumerate() {
                    branch.deliver_at(p.clone(), options[i][choice[i]])?;
                }
                self.run(branch)?;
                // odometer over the per-message options
                let mut i = 0;
                while i < choice.len() {
                    choice[i] += 1;
                    if choice[i] < options[i].len() {
                        break;
                    }
                    choice[i] = 0;
                    i += 1;
                }
                if i == choice.len() {
                    return Ok(());
                }
            }
        }
    }
}

/// Every execution of `protocol`, truncated to `bound` events, reachable
/// when each message is delivered at a grid point of its legal window under
/// `config`'s model. The configured strategy is ignored.
pub fn enumerate_executions<P: Protocol>(
    protocol: &P,
    config: &RunConfig,
    grid: DelayGrid,
    bound: usize,
) -> Result<ExecutionSet, EnumerationError> {
    if bound > MAX_BOUND {
        return Err(EnumerationError::BoundTooLarge(bound));
    }
    let mut search = Search {
        grid,
        bound,
        explored: 0,
        found: ExecutionSet::default(),
    };
    search.run(Engine::new(protocol, config)?)?;
    Ok(search.found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::run_ignoring_delta;
    use crate::protocol::testing::Burst;
    use crate::protocols::EchoProtocol;
    use crate::sim::{AdversaryConfig, Model, Strategy};
    use crate::time::ClockOracle;
    use crate::trace::{equivalent, PartyId};

    fn config(n: u32, model: Model) -> RunConfig {
        RunConfig::new(
            n,
            ClockOracle::Identity,
            AdversaryConfig::new(model, Strategy::Eager),
            50.0,
            0,
        )
    }

    #[test]
    fn grid_options() {
        let grid = DelayGrid::new(0.5).unwrap();
        let p = PendingDelivery {
            message: crate::trace::fixtures::msg(0, 1, 0),
            sent_real: 2.0,
            deadline_real: 3.0,
        };
        assert_eq!(
            grid.options(&p),
            vec![2.0 + crate::sim::EAGER_OFFSET, 2.5, 3.0]
        );
        assert!(DelayGrid::new(0.0).is_err());
        assert_eq!(DelayGrid::default_for(2.0).unwrap().quantum(), 1.0);
    }

    #[test]
    fn single_message_has_one_class() {
        let p = Burst {
            senders: vec![PartyId(0)],
            target: PartyId(1),
        };
        let set = enumerate_executions(
            &p,
            &config(2, Model::Ul { delta: 1.0 }),
            DelayGrid::new(0.5).unwrap(),
            6,
        )
        .unwrap();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn two_concurrent_messages_have_three_classes() {
        let p = Burst {
            senders: vec![PartyId(0), PartyId(1)],
            target: PartyId(2),
        };
        let set = enumerate_executions(
            &p,
            &config(3, Model::Ul { delta: 1.0 }),
            DelayGrid::new(1.0).unwrap(),
            8,
        )
        .unwrap();
        assert_eq!(set.len(), 3);
        let shapes: Vec<Vec<usize>> = set
            .iter()
            .map(|e| {
                e.events
                    .iter()
                    .filter(|ev| !ev.received.is_empty())
                    .map(|ev| ev.received.len())
                    .collect()
            })
            .collect();
        assert!(shapes.contains(&vec![2]));
        assert_eq!(shapes.iter().filter(|s| **s == vec![1, 1]).count(), 2);
        let all: Vec<_> = set.iter().collect();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert!(!equivalent(a, b));
            }
        }
    }

    #[test]
    fn gst_classes_inside_ul_classes() {
        let echo = run_ignoring_delta(EchoProtocol::default());
        let grid = DelayGrid::new(0.5).unwrap();
        let gst = enumerate_executions(
            &echo,
            &config(
                2,
                Model::Gst {
                    delta: 1.0,
                    gst: 1.0,
                },
            ),
            grid,
            6,
        )
        .unwrap();
        let ul =
            enumerate_executions(&echo, &config(2, Model::Ul { delta: 2.0 }), grid, 6).unwrap();
        assert!(gst.len() > 1);
        assert!(execution_set_included(&gst, &ul));
        assert!(execution_set_included(&gst, &gst));
        assert!(execution_set_included(&ExecutionSet::default(), &gst));
        // the looser model really does allow more
        assert!(!execution_set_included(&ul, &gst));
    }

    #[test]
    fn guards() {
        let echo = EchoProtocol::default();
        let grid = DelayGrid::new(0.5).unwrap();
        assert!(matches!(
            enumerate_executions(&echo, &config(2, Model::Ul { delta: 1.0 }), grid, 13),
            Err(EnumerationError::BoundTooLarge(13))
        ));
    }
}
