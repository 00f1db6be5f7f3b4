//! Solver daemon: serves residuals, system matrices and Jacobians over a
//! length-prefixed JSON protocol, so training can run against a solver in
//! another process.

mod client;
mod protocol;
mod server;
mod transport;

pub use client::{DaemonClient, DEFAULT_TIMEOUT};
pub use protocol::{
    read_frame, send_json, write_frame, Frame, Request, Response, WireArray, WireCsr, WireError, DEFAULT_MAX_FRAME_BYTES,
    PROTOCOL_VERSION,
};
pub use server::{Problem, ServeOptions, Server, SessionStats};
pub use transport::Endpoint;
