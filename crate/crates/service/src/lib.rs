//! Session service consumed by the workbench.
//!
//! A [`Service`] owns one model. Requests are answered in arrival order by a
//! single writer; every mutation bumps the session revision and emits a
//! `model-changed` event before the response is sent. Simulations run in the
//! background and report `sim-progress`, then `sim-finished` or `sim-failed`.
//!
//! ```
//! use pnet_service::{protocol::Request, Service};
//! use serde_json::json;
//!
//! let svc = Service::start(pnsl::Workspace::default());
//! let r = svc.handle(Request::new(1, "script.run", json!({"source": "module create MAS 2"})));
//! assert_eq!(r.payload["result"], "1 2");
//! assert_eq!(r.payload["revision"], 2);
//! ```

pub mod edit;
pub mod protocol;
pub mod session;
pub mod transport;

pub use protocol::{Event, EventKind, Outgoing, Request, Response};
pub use session::{Service, ServiceError};
pub use transport::{serve_stdio, serve_ws};
