//! Quorum-based l-mutual inclusion (MUTIN), k-mutual exclusion obtained as
//! its complement, and the (l,k) group critical section composed from the two,
//! together with a deterministic message-passing simulator, trace checkers,
//! a bounded state-space explorer and metrics.

pub mod coterie;
pub mod gcs;
pub mod harness;
pub mod message;
pub mod mutex;
pub mod mutin;
pub mod object;
pub mod simnet;
pub mod system;

pub use coterie::{CoterieAssignment, CoterieKind, ProcessId, Quorum};
pub use gcs::{Complement, Gcs, GcsProcess};
pub use mutin::{Gate, Mutin};
pub use object::{CsObject, CsState, Effect, Effects, Method, Progress, ProtocolError};
pub use simnet::{SimConfig, SimTime};
pub use system::{ConfigError, Mode, ProcessObject, SystemSpec};
