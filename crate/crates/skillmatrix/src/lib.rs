//! Host side of the skillmatrix stack: the topic bus and its socket
//! transports, the inference link, episode recording, file formats and
//! the runtime behind the `skillmatrix` command.

pub mod bench;
pub mod bus;
pub mod cli;
pub mod demo;
pub mod episode;
pub mod formats;
pub mod gateway;
pub mod inference;
pub mod latency;
pub mod net;
pub mod remote;
pub mod runtime;
pub mod stage;
