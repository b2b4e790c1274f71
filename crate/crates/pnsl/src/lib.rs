//! A small command language for building and editing networks.
//!
//! Scripts are lists of commands made of words, with `$var` and `[script]`
//! substitution and `{braced}` literal text. Besides the control builtins
//! (`set`, `proc`, `if`, `for`, `foreach`, `while`, `expr`, ...) an interpreter
//! carries packages of model commands; the standard set lives in [`commands`].
//!
//! ```
//! let mut s = pnsl::session(pnsl::Workspace::default());
//! let ids = s.eval("module create MAS 3").unwrap();
//! assert_eq!(ids, "1 2 3");
//! assert_eq!(s.ctx.doc.network.len(), 3);
//! ```

pub mod commands;
pub mod expr;
pub mod interp;
pub mod list;
pub mod parse;

pub use commands::{install_document, session, standard_packages, Workspace};
pub use interp::{CommandSpec, Interp, Limits, Package, ScriptError};
pub use parse::{parse, print, ParseError, Pos, Script};
