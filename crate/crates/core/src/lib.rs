//! Semi-quantum money: a classical bank and a wallet holding simulated
//! quantum states.
//!
//! - [`qsim`]: claw states and a dense statevector oracle.
//! - [`ntcf`]: a hidden-shift claw-free function family with trapdoors.
//! - [`puzzles`]: the 1-of-2 puzzle and its parallel repetition.
//! - [`primitives`]: MAC, encryption and signatures.
//! - [`protocol`]: wallet/bank messages and conversation traits.
//! - [`money_private`]: the private mini and full schemes.
//! - [`money_public`]: the public scheme over a toy quantum lightning.

pub mod money_private;
pub mod money_public;
pub mod ntcf;
pub mod primitives;
pub mod protocol;
pub mod puzzles;
pub mod qsim;
