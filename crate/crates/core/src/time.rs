//! Clock oracles and the delay arithmetic of the square-root slowdown.
//!
//! A [`ClockOracle`] maps real time to the system time that parties observe.
//! Parties never see the oracle itself, only its answers. The engine keeps
//! real time internally and converts at trigger boundaries.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Additive slack used by every legality comparison.
pub const TIME_SLACK: f64 = 1e-9;

/// Maximum nesting depth of a composed oracle.
pub const MAX_COMPOSE_DEPTH: usize = 8;

/// Above this real time `delay_curve` switches to the cancellation-free form.
pub const STABLE_FORM_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimeError {
    #[error("time value {0} is negative")]
    Negative(f64),
    #[error("time value {0} is not finite")]
    NotFinite(f64),
    #[error("composed clock exceeds depth {MAX_COMPOSE_DEPTH}")]
    TooDeep,
    #[error("unknown clock oracle `{0}`")]
    UnknownOracle(String),
}

fn check_time(value: f64) -> Result<f64, TimeError> {
    if !value.is_finite() {
        Err(TimeError::NotFinite(value))
    } else if value < 0.0 {
        Err(TimeError::Negative(value))
    } else {
        Ok(value)
    }
}

/// A point on the model's ground-truth timeline.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RealTime(f64);

/// A point on the timeline parties observe through the global clock.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SystemTime(f64);

macro_rules! time_newtype {
    ($name:ident) => {
        impl $name {
            pub const ZERO: Self = Self(0.0);

            pub fn new(value: f64) -> Result<Self, TimeError> {
                check_time(value).map(Self)
            }

            pub fn value(self) -> f64 {
                self.0
            }
        }

        impl TryFrom<f64> for $name {
            type Error = TimeError;

            fn try_from(value: f64) -> Result<Self, TimeError> {
                Self::new(value)
            }
        }

        impl From<$name> for f64 {
            fn from(t: $name) -> f64 {
                t.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

time_newtype!(RealTime);
time_newtype!(SystemTime);

/// An increasing continuous map from real time to system time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ClockOracle {
    /// `C(t) = t`
    Identity,
    /// `C(t) = √t`, the slowdown clock.
    Sqrt,
    /// `outer(inner(t))`
    Composed(Box<ClockOracle>, Box<ClockOracle>),
}

impl ClockOracle {
    /// Builds `outer ∘ inner`, rejecting compositions deeper than
    /// [`MAX_COMPOSE_DEPTH`].
    pub fn compose(outer: ClockOracle, inner: ClockOracle) -> Result<Self, TimeError> {
        let composed = ClockOracle::Composed(Box::new(outer), Box::new(inner));
        if composed.depth() > MAX_COMPOSE_DEPTH {
            return Err(TimeError::TooDeep);
        }
        Ok(composed)
    }

    /// `outer ∘ self` with identity factors dropped.
    pub fn then(&self, outer: &ClockOracle) -> Result<Self, TimeError> {
        match (outer, self) {
            (ClockOracle::Identity, inner) => Ok(inner.clone()),
            (outer, ClockOracle::Identity) => Ok(outer.clone()),
            (outer, inner) => Self::compose(outer.clone(), inner.clone()),
        }
    }

    /// Nesting depth; built-in leaves have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            ClockOracle::Identity | ClockOracle::Sqrt => 1,
            ClockOracle::Composed(outer, inner) => 1 + outer.depth().max(inner.depth()),
        }
    }

    /// Evaluates the oracle on an unchecked non-negative value.
    pub(crate) fn eval_raw(&self, t: f64) -> f64 {
        match self {
            ClockOracle::Identity => t,
            ClockOracle::Sqrt => t.sqrt(),
            ClockOracle::Composed(outer, inner) => outer.eval_raw(inner.eval_raw(t)),
        }
    }

    pub(crate) fn inverse_raw(&self, s: f64) -> f64 {
        match self {
            ClockOracle::Identity => s,
            ClockOracle::Sqrt => s * s,
            ClockOracle::Composed(outer, inner) => inner.inverse_raw(outer.inverse_raw(s)),
        }
    }

    pub fn eval(&self, t: RealTime) -> SystemTime {
        SystemTime(self.eval_raw(t.0))
    }

    pub fn inverse(&self, s: SystemTime) -> RealTime {
        RealTime(self.inverse_raw(s.0))
    }
}

impl fmt::Display for ClockOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClockOracle::Identity => f.write_str("identity"),
            ClockOracle::Sqrt => f.write_str("sqrt"),
            ClockOracle::Composed(outer, inner) => write!(f, "compose({outer},{inner})"),
        }
    }
}

impl FromStr for ClockOracle {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, TimeError> {
        let unknown = || TimeError::UnknownOracle(s.to_string());
        let s = s.trim();
        match s {
            "identity" => return Ok(ClockOracle::Identity),
            "sqrt" => return Ok(ClockOracle::Sqrt),
            _ => {}
        }
        let body = s
            .strip_prefix("compose(")
            .and_then(|rest| rest.strip_suffix(')'))
            .ok_or_else(unknown)?;
        // split at the top-level comma
        let mut nesting = 0usize;
        let mut split = None;
        for (i, c) in body.char_indices() {
            match c {
                '(' => nesting += 1,
                ')' => nesting = nesting.checked_sub(1).ok_or_else(unknown)?,
                ',' if nesting == 0 => {
                    split = Some(i);
                    break;
                }
                _ => {}
            }
        }
        let split = split.ok_or_else(unknown)?;
        let outer: ClockOracle = body[..split].parse()?;
        let inner: ClockOracle = body[split + 1..].parse()?;
        ClockOracle::compose(outer, inner)
    }
}

impl Serialize for ClockOracle {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClockOracle {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `C(t)` for a validated real time.
pub fn clock_eval(oracle: &ClockOracle, t: f64) -> Result<SystemTime, TimeError> {
    Ok(oracle.eval(RealTime::new(t)?))
}

/// `C⁻¹(s)` for a validated system time.
pub fn clock_inverse(oracle: &ClockOracle, s: f64) -> Result<RealTime, TimeError> {
    Ok(oracle.inverse(SystemTime::new(s)?))
}

/// The delay a message sent at real time `t` and delivered at `t + delta`
/// appears to take when measured with `oracle`.
pub fn observed_delay(oracle: &ClockOracle, t: f64, delta: f64) -> Result<f64, TimeError> {
    let t = check_time(t)?;
    let delta = check_time(delta)?;
    Ok(oracle.eval_raw(t + delta) - oracle.eval_raw(t))
}

/// `√(t+Δ) − √t` computed as `Δ / (√(t+Δ) + √t)`, free of cancellation.
pub fn observed_delay_sqrt_stable(t: f64, delta: f64) -> Result<f64, TimeError> {
    let t = check_time(t)?;
    let delta = check_time(delta)?;
    if delta == 0.0 {
        return Ok(0.0);
    }
    Ok(delta / ((t + delta).sqrt() + t.sqrt()))
}

/// Least real time from which the square-root clock shows every
/// `delta`-bounded delivery as at most one system-time unit late:
/// `¼·(max{1, Δ} − 1)²`.
pub fn stabilization_real_time(delta: f64) -> Result<RealTime, TimeError> {
    let excess = check_time(delta)?.max(1.0) - 1.0;
    Ok(RealTime(0.25 * excess * excess))
}

/// [`stabilization_real_time`] read on the square-root clock:
/// `½·(max{1, Δ} − 1)`.
pub fn stabilization_system_time(delta: f64) -> Result<SystemTime, TimeError> {
    let excess = check_time(delta)?.max(1.0) - 1.0;
    Ok(SystemTime(0.5 * excess))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracles() -> Vec<ClockOracle> {
        vec![
            ClockOracle::Identity,
            ClockOracle::Sqrt,
            "compose(sqrt,sqrt)".parse().unwrap(),
        ]
    }

    #[test]
    fn eval_examples() {
        assert_eq!(
            clock_eval(&ClockOracle::Identity, 5.0).unwrap().value(),
            5.0
        );
        assert_eq!(clock_eval(&ClockOracle::Sqrt, 4.0).unwrap().value(), 2.0);
        assert_eq!(clock_eval(&ClockOracle::Sqrt, 0.0).unwrap().value(), 0.0);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(clock_inverse(&ClockOracle::Sqrt, 2.0).unwrap().value(), 4.0);
        assert_eq!(
            clock_inverse(&ClockOracle::Identity, 7.5).unwrap().value(),
            7.5
        );
        assert_eq!(clock_inverse(&ClockOracle::Sqrt, 3.0).unwrap().value(), 9.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            clock_eval(&ClockOracle::Sqrt, -1.0),
            Err(TimeError::Negative(-1.0))
        );
        assert!(matches!(
            clock_inverse(&ClockOracle::Sqrt, f64::NAN),
            Err(TimeError::NotFinite(_))
        ));
        assert!(observed_delay(&ClockOracle::Sqrt, f64::INFINITY, 1.0).is_err());
        assert!(stabilization_real_time(-0.5).is_err());
        assert!(RealTime::new(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn observed_delay_examples() {
        assert_eq!(observed_delay(&ClockOracle::Sqrt, 16.0, 9.0).unwrap(), 1.0);
        assert_eq!(observed_delay(&ClockOracle::Sqrt, 0.0, 4.0).unwrap(), 2.0);
        assert_eq!(
            observed_delay(&ClockOracle::Identity, 13.0, 2.5).unwrap(),
            2.5
        );
    }

    #[test]
    fn stabilization_examples() {
        assert_eq!(stabilization_real_time(1.0).unwrap().value(), 0.0);
        assert_eq!(stabilization_real_time(9.0).unwrap().value(), 16.0);
        assert_eq!(stabilization_real_time(0.5).unwrap().value(), 0.0);
        assert_eq!(stabilization_system_time(1.0).unwrap().value(), 0.0);
        assert_eq!(stabilization_system_time(9.0).unwrap().value(), 4.0);
        // ½·49 and √(¼·49²) agree
        assert_eq!(stabilization_system_time(50.0).unwrap().value(), 24.5);
        assert_eq!((0.25f64 * 49.0 * 49.0).sqrt(), 24.5);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for name in [
            "identity",
            "sqrt",
            "compose(sqrt,sqrt)",
            "compose(compose(sqrt,identity),sqrt)",
        ] {
            let oracle: ClockOracle = name.parse().unwrap();
            assert_eq!(oracle.to_string(), name);
        }
        assert!("cube".parse::<ClockOracle>().is_err());
        assert!("compose(sqrt)".parse::<ClockOracle>().is_err());
        assert!("compose(sqrt,sqrt".parse::<ClockOracle>().is_err());
    }

    #[test]
    fn compose_depth_is_bounded() {
        let mut oracle = ClockOracle::Sqrt;
        for _ in 1..MAX_COMPOSE_DEPTH {
            oracle = ClockOracle::compose(ClockOracle::Sqrt, oracle).unwrap();
        }
        assert_eq!(oracle.depth(), MAX_COMPOSE_DEPTH);
        assert_eq!(
            ClockOracle::compose(ClockOracle::Sqrt, oracle),
            Err(TimeError::TooDeep)
        );
    }

    #[test]
    fn then_drops_identity() {
        assert_eq!(
            ClockOracle::Identity.then(&ClockOracle::Sqrt).unwrap(),
            ClockOracle::Sqrt
        );
        assert_eq!(
            ClockOracle::Sqrt.then(&ClockOracle::Identity).unwrap(),
            ClockOracle::Sqrt
        );
        assert_eq!(
            ClockOracle::Sqrt
                .then(&ClockOracle::Sqrt)
                .unwrap()
                .to_string(),
            "compose(sqrt,sqrt)"
        );
    }

    #[test]
    fn built_ins_fix_origin() {
        for o in oracles() {
            assert_eq!(o.eval_raw(0.0), 0.0);
        }
    }

    #[test]
    fn stable_form_matches_direct_form() {
        for &(t, d) in &[(0.0, 4.0), (16.0, 9.0), (1e3, 2.5), (7.0, 0.0)] {
            let direct = observed_delay(&ClockOracle::Sqrt, t, d).unwrap();
            let stable = observed_delay_sqrt_stable(t, d).unwrap();
            assert!((direct - stable).abs() <= 1e-12, "{t} {d}");
        }
    }

    #[test]
    fn delay_vanishes() {
        assert!(observed_delay(&ClockOracle::Sqrt, 1e10, 100.0).unwrap() < 0.001);
    }
}
