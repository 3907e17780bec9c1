//! HTTP serving for the registry and a client implementing its transport.

mod client;
mod server;

pub use client::HttpTransport;
pub use server::{router, serve_forever, ServerHandle};
