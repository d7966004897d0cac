//! Library side of the `dialschema` binary, so scripted runs can be driven
//! from tests without spawning a process.

pub mod chat;
pub mod eval;
