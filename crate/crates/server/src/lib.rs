//! HTTP API and line-oriented REPL over a shared [`pmdb_core::shell::Service`].

pub mod api;
pub mod repl;

pub use api::router;
