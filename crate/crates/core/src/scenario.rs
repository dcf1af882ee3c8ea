//! Versioned scenario files (TOML) naming a protocol, its transformer, the
//! clock, the adversary and the horizon.
//!
//! ```toml
//! format_version = 1
//! protocol = "agreement"
//! transform = "wrap_clock(sqrt)"
//! parties = 4
//! inputs = ["0a", "0b", "0c", "0d"]
//! clock = "identity"
//! horizon = 4441.0
//! seed = 7
//!
//! [adversary]
//! model = "ul"
//! delta = 50.0
//! strategy = "max_delay"
//!
//! [[crashes]]
//! party = 3
//! at = 12.5
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::properties::{enumerate_executions, DelayGrid, EnumerationError, ExecutionSet};
use crate::protocol::{replay, ReplayError};
use crate::protocols::{ProtocolChoice, ProtocolKind, ProtocolVisitor, Transform};
use crate::sim::{simulate, AdversaryConfig, Model, RunConfig, SimError, Strategy};
use crate::time::{stabilization_real_time, ClockOracle, TimeError};
use crate::trace::{Execution, PartyId};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Time(#[from] TimeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    format_version: u32,
    protocol: String,
    #[serde(default = "default_transform")]
    transform: String,
    parties: u32,
    #[serde(default)]
    inputs: Vec<String>,
    clock: String,
    horizon: f64,
    seed: u64,
    adversary: AdversaryFile,
    #[serde(default)]
    crashes: Vec<CrashFile>,
}

fn default_transform() -> String {
    "none".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdversaryFile {
    model: String,
    delta: f64,
    #[serde(default)]
    gst: f64,
    strategy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CrashFile {
    party: u32,
    at: f64,
}

/// A fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub protocol: ProtocolChoice,
    pub run: RunConfig,
}

/// Real-time horizon that reaches well past stabilization: for echo
/// `stabilization + gst + 10·(Δ + 1)`, four times that for agreement.
pub fn default_horizon_real(kind: ProtocolKind, model: &Model) -> f64 {
    let delta = model.delta();
    let gst = match *model {
        Model::Gst { gst, .. } => gst,
        Model::Ul { .. } => 0.0,
    };
    let stabilization = stabilization_real_time(delta)
        .map(|t| t.value())
        .unwrap_or(0.0);
    let echo = stabilization + gst + 10.0 * (delta + 1.0);
    match kind {
        ProtocolKind::Echo => echo,
        ProtocolKind::Agreement => 4.0 * echo,
    }
}

/// Default inputs: one byte per party holding its index.
pub fn default_inputs(n: u32) -> Vec<Vec<u8>> {
    (0..n).map(|p| vec![p as u8]).collect()
}

impl Scenario {
    /// Builds a scenario whose horizon is [`default_horizon_real`] read on
    /// `clock`.
    pub fn new(
        kind: ProtocolKind,
        transform: Transform,
        n: u32,
        clock: ClockOracle,
        adversary: AdversaryConfig,
        seed: u64,
    ) -> Self {
        let horizon = clock.eval_raw(default_horizon_real(kind, &adversary.model));
        let run = RunConfig::new(n, clock, adversary, horizon, seed).with_inputs(default_inputs(n));
        Self {
            protocol: ProtocolChoice::new(kind, transform),
            run,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text)?;
        let invalid = |m: String| ScenarioError::Invalid(m);
        if file.format_version != SCENARIO_VERSION {
            return Err(invalid(format!(
                "unsupported format_version {}",
                file.format_version
            )));
        }
        if file.parties == 0 {
            return Err(invalid("parties must be positive".into()));
        }
        let kind: ProtocolKind = file.protocol.parse().map_err(invalid)?;
        let transform: Transform = file.transform.parse().map_err(invalid)?;
        let clock: ClockOracle = file.clock.parse()?;
        let model = match file.adversary.model.as_str() {
            "ul" => Model::Ul {
                delta: file.adversary.delta,
            },
            "gst" => Model::Gst {
                delta: file.adversary.delta,
                gst: file.adversary.gst,
            },
            other => return Err(invalid(format!("unknown model `{other}`"))),
        };
        model.validate().map_err(|e| invalid(e.to_string()))?;
        let strategy = match file.adversary.strategy.as_str() {
            "random" => Strategy::Random { seed: file.seed },
            other => other
                .parse::<Strategy>()
                .map_err(|e| invalid(e.to_string()))?,
        };
        let mut adversary = AdversaryConfig::new(model, strategy);
        for crash in &file.crashes {
            if crash.party >= file.parties {
                return Err(invalid(format!("crash of unknown party {}", crash.party)));
            }
            if !(crash.at.is_finite() && crash.at >= 0.0) {
                return Err(invalid(format!("bad crash time {}", crash.at)));
            }
            adversary.crashes.insert(PartyId(crash.party), crash.at);
        }
        let inputs = if file.inputs.is_empty() {
            default_inputs(file.parties)
        } else if file.inputs.len() == file.parties as usize {
            file.inputs
                .iter()
                .map(|h| hex::decode(h).map_err(|e| invalid(format!("input `{h}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            return Err(invalid(format!(
                "{} inputs for {} parties",
                file.inputs.len(),
                file.parties
            )));
        };
        if !(file.horizon.is_finite() && file.horizon >= 0.0) {
            return Err(invalid(format!("bad horizon {}", file.horizon)));
        }
        let run = RunConfig::new(file.parties, clock, adversary, file.horizon, file.seed)
            .with_inputs(inputs);
        Ok(Self {
            protocol: ProtocolChoice::new(kind, transform),
            run,
        })
    }

    pub fn to_toml(&self) -> String {
        let (model, delta, gst) = match self.run.adversary.model {
            Model::Ul { delta } => ("ul", delta, 0.0),
            Model::Gst { delta, gst } => ("gst", delta, gst),
        };
        let file = ScenarioFile {
            format_version: SCENARIO_VERSION,
            protocol: self.protocol.kind.to_string(),
            transform: self.protocol.transform.to_string(),
            parties: self.run.parties.len() as u32,
            inputs: self.run.inputs.values().map(hex::encode).collect(),
            clock: self.run.clock.to_string(),
            horizon: self.run.horizon,
            seed: self.run.seed,
            adversary: AdversaryFile {
                model: model.into(),
                delta,
                gst,
                strategy: self.run.adversary.strategy.to_string(),
            },
            crashes: self
                .run
                .adversary
                .crashes
                .iter()
                .map(|(p, at)| CrashFile {
                    party: p.0,
                    at: *at,
                })
                .collect(),
        };
        toml::to_string(&file).expect("scenario serializes")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        if let Strategy::Random { .. } = self.run.adversary.strategy {
            self.run.adversary.strategy = Strategy::Random { seed };
        }
        self
    }

    pub fn simulate(&self) -> Result<Execution, SimError> {
        struct Run<'a>(&'a RunConfig);
        impl ProtocolVisitor for Run<'_> {
            type Output = Result<Execution, SimError>;
            fn visit<P: crate::protocol::Protocol>(self, p: &P) -> Self::Output {
                simulate(p, self.0)
            }
        }
        self.protocol.visit(Run(&self.run))
    }

    pub fn replay(&self, trace: &Execution) -> Result<(), ReplayError> {
        struct Replay<'a>(&'a Execution, &'a BTreeMap<PartyId, Vec<u8>>, u64);
        impl ProtocolVisitor for Replay<'_> {
            type Output = Result<(), ReplayError>;
            fn visit<P: crate::protocol::Protocol>(self, p: &P) -> Self::Output {
                replay(p, self.0, self.1, self.2)
            }
        }
        self.protocol
            .visit(Replay(trace, &self.run.inputs, self.run.seed))
    }

    pub fn enumerate(
        &self,
        grid: DelayGrid,
        bound: usize,
    ) -> Result<ExecutionSet, EnumerationError> {
        struct Enumerate<'a>(&'a RunConfig, DelayGrid, usize);
        impl ProtocolVisitor for Enumerate<'_> {
            type Output = Result<ExecutionSet, EnumerationError>;
            fn visit<P: crate::protocol::Protocol>(self, p: &P) -> Self::Output {
                enumerate_executions(p, self.0, self.1, self.2)
            }
        }
        self.protocol.visit(Enumerate(&self.run, grid, bound))
    }
}
