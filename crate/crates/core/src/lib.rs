//! Time-memory trade-off toolkit for A5/1-shaped stream ciphers.
//!
//! The crate is organized as a pipeline:
//!
//! - [`cipher`]: bit-exact A5/1 plus a width-parameterized family of
//!   three-register majority-clocked ciphers, with state packing,
//!   back-clocking and session-key recovery.
//! - [`tmto`]: rainbow-chain generation with colored reductions, in
//!   fixed-length or distinguished-point mode, and parallel table builds.
//! - [`table_store`]: the endpoint-sorted binary file format, shard
//!   merging, and binary-search lookup by end value.
//! - [`attack`]: the online phase, from keystream windows through table
//!   lookups and false-alarm filtering to state and key recovery.
//! - [`oracle`]: brute-force ground truth for small state spaces, used to
//!   cross-check every probabilistic claim the other modules make.

pub mod attack;
pub mod cipher;
pub mod oracle;
pub mod table_store;
pub mod tmto;

pub use cipher::{CipherSpec, CipherState, FrameNumber, SessionKey};
pub use tmto::{BuiltTable, ChainMode, ChainRecord, TableParams};
