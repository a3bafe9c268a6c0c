//! Constraint Handling Rules: rules, programs, and the transition system
//! over states `<goal, store, herbrand, tokens>` with protected variables.
//!
//! The four transitions are *solve* (an equation moves into the Herbrand
//! store), *introduce* (a class constraint moves into the store and creates
//! its propagation tokens), *simplify* (matched head entries are replaced by
//! the rule body) and *propagate* (a token is consumed and the body added).

mod canon;
mod engine;
mod rule;
mod state;

pub use canon::{canonicalize, CanonicalForm};
pub use engine::{
    derive, render_trace, step, tokens_for, DeriveError, Engine, FinalState, SelectionPolicy, Step, TraceStep, Transition, UnsatReason,
    DEFAULT_FUEL,
};
pub use rule::{Body, ChrRule, ClassConstraint, GoalItem, Program, ProgramError, RuleKind};
pub use state::{ChrState, EntryId, StoreEntry, Token};
