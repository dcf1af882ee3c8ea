//! Legality of executions in the UL and GST models.
//!
//! Executions are timestamped in system time; the model guarantees are
//! stated in real time, so every check converts through the oracle.

use super::model::{Execution, MessageFate};
use super::TraceError;
use crate::time::{ClockOracle, TIME_SLACK};

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Legal,
    Violation(Violation),
}

impl Verdict {
    pub fn is_legal(&self) -> bool {
        matches!(self, Verdict::Legal)
    }
}

/// The first message whose delivery breaks the model bound. Times are real.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub uid: u64,
    pub sent_real: f64,
    pub received_real: Option<f64>,
    pub deadline_real: f64,
}

struct RealFate {
    uid: u64,
    sent: f64,
    received: Option<f64>,
}

fn real_fates(e: &Execution, oracle: &ClockOracle) -> Result<(Vec<RealFate>, f64), TraceError> {
    let fates = e.message_fates()?;
    let to_real = |s: f64| oracle.inverse_raw(s);
    let horizon = to_real(e.horizon.value());
    let fates = fates
        .into_iter()
        .map(
            |MessageFate {
                 uid,
                 sent_at,
                 received_at,
             }| RealFate {
                uid,
                sent: to_real(sent_at),
                received: received_at.map(to_real),
            },
        )
        .collect();
    Ok((fates, horizon))
}

fn check_with(fates: &[RealFate], horizon: f64, deadline: impl Fn(f64) -> f64) -> Verdict {
    for fate in fates {
        let due = deadline(fate.sent);
        let ok = match fate.received {
            Some(r) => r <= due + TIME_SLACK,
            // still in flight: only legal if not yet overdue at the horizon
            None => due > horizon - TIME_SLACK,
        };
        if !ok {
            return Verdict::Violation(Violation {
                uid: fate.uid,
                sent_real: fate.sent,
                received_real: fate.received,
                deadline_real: due,
            });
        }
    }
    Verdict::Legal
}

/// Every message sent at real time `t` is received by `t + delta`.
pub fn check_ul_legal(
    e: &Execution,
    delta: f64,
    oracle: &ClockOracle,
) -> Result<Verdict, TraceError> {
    let (fates, horizon) = real_fates(e, oracle)?;
    Ok(check_with(&fates, horizon, |t| t + delta))
}

/// Every message sent at real time `t` is received by `max(t, gst) + delta`.
pub fn check_gst_legal(
    e: &Execution,
    delta: f64,
    gst: f64,
    oracle: &ClockOracle,
) -> Result<Verdict, TraceError> {
    let (fates, horizon) = real_fates(e, oracle)?;
    Ok(check_with(&fates, horizon, |t| t.max(gst) + delta))
}

/// Smallest stabilization time from `{0} ∪ {r − delta}` (r ranging over
/// receive real times) under which `e` is GST-legal, or `None`.
///
/// Legality is monotone in the stabilization time and constant between
/// consecutive candidates, so the scan starts at the least candidate that
/// satisfies every delivered message.
pub fn find_gst_witness(
    e: &Execution,
    delta: f64,
    oracle: &ClockOracle,
) -> Result<Option<f64>, TraceError> {
    let (fates, horizon) = real_fates(e, oracle)?;
    let mut candidates: Vec<f64> = std::iter::once(0.0)
        .chain(
            fates
                .iter()
                .filter_map(|f| f.received)
                .map(|r| r - delta)
                .filter(|t| *t > 0.0),
        )
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let needed = fates
        .iter()
        .filter_map(|f| {
            let r = f.received?;
            (r > f.sent + delta + TIME_SLACK).then_some(r - delta)
        })
        .fold(0.0f64, f64::max);
    let start = candidates.partition_point(|&t| t < needed);
    Ok(candidates[start..]
        .iter()
        .copied()
        .find(|&gst| check_with(&fates, horizon, |t| t.max(gst) + delta).is_legal()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::fixtures::*;

    fn one_message(clock: ClockOracle, send: f64, recv: f64, horizon: f64) -> Execution {
        execution(
            clock,
            horizon,
            vec![
                event(send, 0, vec![], vec![msg(0, 1, 0)]),
                event(recv, 1, vec![msg(0, 1, 0)], vec![]),
            ],
        )
    }

    fn unreceived(clock: ClockOracle, send: f64, horizon: f64) -> Execution {
        execution(
            clock,
            horizon,
            vec![event(send, 0, vec![], vec![msg(0, 1, 0)])],
        )
    }

    #[test]
    fn ul_examples() {
        let id = ClockOracle::Identity;
        assert!(
            check_ul_legal(&one_message(id.clone(), 0.0, 3.0, 10.0), 3.0, &id)
                .unwrap()
                .is_legal()
        );
        match check_ul_legal(&one_message(id.clone(), 0.0, 3.5, 10.0), 3.0, &id).unwrap() {
            Verdict::Violation(v) => {
                assert_eq!(v.uid, 0);
                assert_eq!(v.deadline_real, 3.0);
            }
            Verdict::Legal => panic!("expected violation"),
        }
        // sqrt: system 1 and 2 are real 1 and 4, and 4 <= 1 + 3
        let sq = ClockOracle::Sqrt;
        assert!(
            check_ul_legal(&one_message(sq.clone(), 1.0, 2.0, 5.0), 3.0, &sq)
                .unwrap()
                .is_legal()
        );
        assert!(
            !check_ul_legal(&one_message(sq.clone(), 1.0, 2.0, 5.0), 2.9, &sq)
                .unwrap()
                .is_legal()
        );
    }

    #[test]
    fn ul_horizon_rule() {
        let id = ClockOracle::Identity;
        // due at 3, horizon 2.5: may still be in flight
        assert!(check_ul_legal(&unreceived(id.clone(), 0.0, 2.5), 3.0, &id)
            .unwrap()
            .is_legal());
        // due at 3, horizon 4: overdue
        assert!(!check_ul_legal(&unreceived(id.clone(), 0.0, 4.0), 3.0, &id)
            .unwrap()
            .is_legal());
    }

    #[test]
    fn gst_examples() {
        let id = ClockOracle::Identity;
        let e = one_message(id.clone(), 0.0, 10.0, 30.0);
        assert!(check_gst_legal(&e, 1.0, 9.0, &id).unwrap().is_legal());
        let late = one_message(id.clone(), 0.0, 10.5, 30.0);
        assert!(!check_gst_legal(&late, 1.0, 9.0, &id).unwrap().is_legal());
        let after = one_message(id.clone(), 20.0, 21.0, 30.0);
        assert!(check_gst_legal(&after, 1.0, 9.0, &id).unwrap().is_legal());
    }

    #[test]
    fn malformed_is_an_error() {
        let id = ClockOracle::Identity;
        let mut e = one_message(id.clone(), 0.0, 1.0, 5.0);
        e.events[0].sent.clear();
        assert!(matches!(
            check_ul_legal(&e, 1.0, &id),
            Err(TraceError::ReceiveWithoutSend { uid: 0, .. })
        ));
        assert!(check_gst_legal(&e, 1.0, 0.0, &id).is_err());
    }

    #[test]
    fn witness_examples() {
        let id = ClockOracle::Identity;
        let sync = one_message(id.clone(), 0.0, 0.5, 5.0);
        assert_eq!(find_gst_witness(&sync, 1.0, &id).unwrap(), Some(0.0));

        let late = one_message(id.clone(), 0.0, 10.0, 30.0);
        assert_eq!(find_gst_witness(&late, 1.0, &id).unwrap(), Some(9.0));
        // brute force over the candidate set agrees
        let brute = [0.0, 9.0]
            .into_iter()
            .find(|&t| check_gst_legal(&late, 1.0, t, &id).unwrap().is_legal());
        assert_eq!(brute, Some(9.0));

        // sent at 0, never received, horizon 100: every candidate is overdue
        let lost = unreceived(id.clone(), 0.0, 100.0);
        assert_eq!(find_gst_witness(&lost, 1.0, &id).unwrap(), None);
    }
}
