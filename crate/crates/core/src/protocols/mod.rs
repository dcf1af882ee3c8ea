//! Example protocols designed for GST with a declared bound of 1, and the
//! name registry the CLI and scenario files use to pick one.

mod agreement;
mod echo;

use std::fmt;
use std::str::FromStr;

pub use agreement::{AgreementMessage, AgreementState, RotatingLeaderAgreement};
pub use echo::{EchoProtocol, EchoState, ACK, HELLO, INITIATOR};

use crate::protocol::{run_ignoring_delta, wrap_clock, Protocol};
use crate::time::ClockOracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    Echo,
    Agreement,
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::Echo => "echo",
            ProtocolKind::Agreement => "agreement",
        })
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "echo" => Ok(ProtocolKind::Echo),
            "agreement" => Ok(ProtocolKind::Agreement),
            other => Err(format!(
                "unknown protocol `{other}` (known: echo, agreement)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Transform {
    #[default]
    None,
    WrapClock(ClockOracle),
    IgnoreDelta,
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::None => f.write_str("none"),
            Transform::WrapClock(o) => write!(f, "wrap_clock({o})"),
            Transform::IgnoreDelta => f.write_str("ignore_delta"),
        }
    }
}

impl FromStr for Transform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "none" => Ok(Transform::None),
            "ignore_delta" => Ok(Transform::IgnoreDelta),
            other => other
                .strip_prefix("wrap_clock(")
                .and_then(|rest| rest.strip_suffix(')'))
                .ok_or_else(|| format!("unknown transform `{other}`"))
                .and_then(|oracle| {
                    oracle
                        .parse()
                        .map(Transform::WrapClock)
                        .map_err(|e| e.to_string())
                }),
        }
    }
}

/// Generic code run against whichever concrete protocol a choice names.
pub trait ProtocolVisitor {
    type Output;
    fn visit<P: Protocol>(self, protocol: &P) -> Self::Output;
}

/// A registered protocol together with the transformer applied to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolChoice {
    pub kind: ProtocolKind,
    pub transform: Transform,
}

impl ProtocolChoice {
    pub fn new(kind: ProtocolKind, transform: Transform) -> Self {
        Self { kind, transform }
    }

    pub fn visit<V: ProtocolVisitor>(&self, visitor: V) -> V::Output {
        match self.kind {
            ProtocolKind::Echo => apply(EchoProtocol::default(), &self.transform, visitor),
            ProtocolKind::Agreement => {
                apply(RotatingLeaderAgreement::default(), &self.transform, visitor)
            }
        }
    }
}

fn apply<P: Protocol, V: ProtocolVisitor>(base: P, transform: &Transform, visitor: V) -> V::Output {
    match transform {
        Transform::None => visitor.visit(&base),
        Transform::WrapClock(oracle) => visitor.visit(&wrap_clock(base, oracle.clone())),
        Transform::IgnoreDelta => visitor.visit(&run_ignoring_delta(base)),
    }
}
