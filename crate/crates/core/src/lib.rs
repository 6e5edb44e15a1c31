//! Simulation and security analysis for mediated semi-quantum key
//! distribution (M-SQKD).
//!
//! Two semi-quantum users, Alice and Bob, share a key with the help of a
//! fully quantum server that may be adversarial. The server distributes a
//! Bell pair, each user either measures-and-resends in the Z basis or
//! reflects, and the server answers with one of four classical messages.
//!
//! The crate is organised bottom-up:
//!
//! - [`qmath`]: small dense complex linear algebra and entropies.
//! - [`channels`]: the two-qubit depolarizing channel and its Pauli twirl.
//! - [`protocol`]: round-by-round simulation, sampling and raw-key stages.
//! - [`stats`]: tallying transcripts and closed-form statistics.
//! - [`keyrate`]: constraint assembly, entropy minimization and key rates.
//! - [`reduction`]: prepare-and-measure vs. entanglement-based equivalence.

pub mod channels;
pub mod error;
pub mod keyrate;
pub mod protocol;
pub mod qmath;
pub mod reduction;
pub mod rng;
pub mod stats;

pub use channels::{ChannelSequence, DepolarizingChannel, TwoQubitPauli};
pub use error::{Error, Result};
pub use keyrate::{ConstraintSet, KeyRateReport};
pub use protocol::{AttackModel, Choice, Mode, ModePolicy, Noise, ProtocolConfig, RoundRecord};
pub use qmath::{DensityMatrix, StateVector};
pub use reduction::{BasisChoice, EquivalenceResult, GeneralAttack};
pub use stats::{Cell, ObservedStats, Tally};
