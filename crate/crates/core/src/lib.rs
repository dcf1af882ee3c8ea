//! A deterministic simulation laboratory for partially synchronous
//! message-passing protocols.
//!
//! Protocols run on a discrete-event engine against an adversarial message
//! system bound by either the GST or the unknown-latency model, reading a
//! global clock that may run slower than real time. Traces can be checked
//! for model legality, compared up to timing, retimed, replayed and
//! enumerated exhaustively over a delay grid.

pub mod cli;
pub mod curve;
pub mod properties;
pub mod protocol;
pub mod protocols;
pub mod scenario;
pub mod sim;
pub mod time;
pub mod trace;

pub use cli::cli_main;
pub use curve::{curve_csv, delay_curve, CurveRow};
pub use properties::{
    check_property, enumerate_executions, execution_set_included, falsify_time_agnostic, DelayGrid,
    ExecutionSet, Property,
};
pub use protocol::{replay, run_ignoring_delta, wrap_clock, Protocol};
pub use scenario::Scenario;
pub use sim::{simulate, AdversaryConfig, Model, RunConfig, Strategy};
pub use time::{
    clock_eval, clock_inverse, observed_delay, stabilization_real_time, stabilization_system_time,
    ClockOracle, RealTime, SystemTime,
};
pub use trace::{
    check_gst_legal, check_ul_legal, decode, encode, equivalent, find_gst_witness, retime,
    Execution, RetimeDirection,
};
