//! Mass-interaction physics networks.
//!
//! A model is a network of twelve elementary module kinds: materials that
//! carry a position along a single movement axis, interactions that exert
//! equal and opposite forces on two materials, and observers that record
//! positions or forces. Modules are addressed through hierarchical labels and
//! picker expressions, simulated off-line at a fixed rate, and persisted as a
//! canonical JSON document.

pub mod io;
pub mod kind;
pub mod label;
pub mod network;
pub mod params;
pub mod picker;
pub mod sim;

pub use kind::{Family, ModuleKind, ParamName};
pub use label::{Label, LabelError, LabelIndex, ModuleSet};
pub use network::{BenchPos, InitialState, Issue, Module, ModuleId, Network, NetworkError, StateVar, Strictness, ValidationReport};
pub use params::{ParamValue, Table};
pub use picker::{Picker, PickerSyntaxError};
