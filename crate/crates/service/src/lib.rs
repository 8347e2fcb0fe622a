//! HTTP service and command-line front end for the adaptive vocabulary test.
//!
//! - [`store`]: durable, replayable session storage and aggregate statistics.
//! - [`api`]: the `/api/v1` HTTP/JSON interface.
//! - [`cli`]: the `vocabsize` command.

pub mod api;
pub mod cli;
pub mod store;

pub use api::{router, serve, ServerConfig};
pub use store::{BankStatus, Store, StoreError};
