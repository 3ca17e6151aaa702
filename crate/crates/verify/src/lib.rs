//! Independent reference implementations and benchmark data used to check
//! `dln-core` from the outside: a textbook gate table, a standalone circuit
//! interpreter, random circuit generators, a synthetic voice-measurement
//! regression set and discovery of locally stored benchmark CSVs.

pub mod bench;
pub mod oracle;
pub mod synth;
