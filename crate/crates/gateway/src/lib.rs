//! HTTP gateway, blocking client and CLI for the report ledger.

pub mod api;
pub mod client;
pub mod keyfile;
pub mod local;
pub mod photo;
pub mod server;
