//! Text-aware Monte-Carlo search for a micro turn-based strategy game.
//!
//! A value network reads a strategy manual: it picks the sentence most relevant to a
//! candidate action, labels its words as action or state descriptions, and scores the
//! action from joint text and game features. Parameters are relearned from simulated
//! roll-outs at every game step.

pub mod corpus;
pub mod eval;
pub mod features;
pub mod model;
pub mod search;
pub mod simulator;
