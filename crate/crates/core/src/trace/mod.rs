//! Executions, their equivalence and retiming, model-legality checks, and
//! the canonical line-oriented trace format.

mod codec;
mod legality;
mod model;

use thiserror::Error;

use crate::time::{ClockOracle, TimeError};

pub use codec::{decode, encode, order_signature, CodecError, FORMAT_VERSION};
pub use legality::{check_gst_legal, check_ul_legal, find_gst_witness, Verdict, Violation};
pub use model::{equivalent, retime, Event, Execution, Message, PartyId, RetimeDirection};

#[cfg(test)]
pub(crate) use model::fixtures;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("event {index} receives uid {uid} that was never sent")]
    ReceiveWithoutSend { uid: u64, index: usize },
    #[error("event {index} receives uid {uid} a second time")]
    DuplicateReceive { uid: u64, index: usize },
    #[error("event {index} reuses uid {uid}")]
    DuplicateUid { uid: u64, index: usize },
    #[error("event {index} has a timestamp earlier than its predecessor")]
    TimestampOrder { index: usize },
    #[error("event {index} is not ordered after its predecessor")]
    KeyOrder { index: usize },
    #[error("unknown party {0}")]
    UnknownParty(PartyId),
    #[error("malformed execution: {0}")]
    Malformed(String),
    #[error("retiming broke the event order at event {index}")]
    RetimeOrder { index: usize },
    #[error("cannot strip {stripped} from recorded clock {recorded}")]
    ClockMismatch {
        recorded: ClockOracle,
        stripped: ClockOracle,
    },
    #[error(transparent)]
    Time(#[from] TimeError),
}
