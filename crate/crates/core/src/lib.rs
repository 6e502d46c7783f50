//! Classic DEVS with initial total states.
//!
//! - [`formalism`]: atomic and coupled models, total-state validation and
//!   atomic transition semantics.
//! - [`flatten`]: closure under coupling, conserving initialization.
//! - [`simulator`]: the hierarchical abstract simulator and a runner for
//!   flattened models.
//! - [`lang`]: the `.devs` model language.
//! - [`trace`]: exact, line-oriented traces and trace diffing.

#![allow(clippy::result_large_err, clippy::large_enum_variant)]

pub mod flatten;
pub mod formalism;
pub mod lang;
pub mod simulator;
pub mod time;
pub mod trace;

pub use flatten::{flatten, flatten_qinit, Component, FlatAtomic, FlatState, FlattenError};
pub use formalism::{
    AtomicSpec, CoupledSpec, Diagnostic, Endpoint, EventLabel, Model, StateName, TotalState, ValidationError,
};
pub use lang::{parse_model, resolve, serialize_model, ModelDocument, ParseError, ResolveError};
pub use simulator::{run, run_flattened, Engine, FlatSimulation, InputSchedule, SimError, Simulation};
pub use time::{Rational, TimeValue};
pub use trace::{diff_traces, DiffScope, Trace, TraceDiff, TraceEntry};
