//! Information-theoretic actuation.
//!
//! An agent acts through single bits. An arithmetic decoder coupled to an
//! action model turns those bits into external actions, which are strings of
//! sub-action symbols closed by a terminal. The crate provides the coder,
//! the action models, tabular finite-horizon MDPs, the internal environment
//! the bit-level agent faces, and exact checks that the internal and external
//! views assign the same values.

pub mod alphabet;
pub mod coder;
pub mod error;
pub mod instances;
pub mod internal;
pub mod mdp;
pub mod model;
pub mod multitask;
pub mod tasks;
pub mod verification;

pub use alphabet::{Symbol, SymbolAlphabet, TERMINAL_TOKEN};
pub use error::{Error, Result};
