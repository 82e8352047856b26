//! Request/response link between robots and an inference server.

use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use skillmatrix_core::skills::{InferenceClient, InferenceRequest, InferenceResponse, TransportError};
use skillmatrix_core::wire::{Envelope, Message};

use crate::gateway::{listen, Endpoint};
use crate::latency::Latency;
use crate::net::{read_envelope, write_envelope, NetError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(2);
pub const DEFAULT_ATTEMPTS: u32 = 3;

/// Anything that answers inference requests.
pub trait Policy: Send {
    fn respond(&mut self, request: &InferenceRequest) -> InferenceResponse;
}

impl<F: FnMut(&InferenceRequest) -> InferenceResponse + Send> Policy for F {
    fn respond(&mut self, request: &InferenceRequest) -> InferenceResponse {
        self(request)
    }
}

fn serve_conn(mut stream: TcpStream, policy: Arc<Mutex<dyn Policy>>, latency: Latency) {
    let _ = stream.set_nodelay(true);
    loop {
        let env = match read_envelope(&mut stream) {
            Ok(Some(env)) => env,
            Ok(None) | Err(NetError::Io(_) | NetError::Truncated | NetError::Frame(_)) => return,
            Err(NetError::Body(e)) => Envelope::new(
                0,
                Message::Error {
                    message: format!("bad message: {e}"),
                },
            ),
        };
        // Request leg of the link.
        latency.wait();
        let reply = match env.message {
            Message::InferenceRequest(req) => {
                let resp = policy.lock().expect("policy poisoned").respond(&req);
                Message::InferenceResponse(resp)
            }
            Message::Error { .. } => env.message,
            other => Message::Error {
                message: format!("expected an inference request, got kind {}", other.kind()),
            },
        };
        // Response leg.
        latency.wait();
        if write_envelope(&mut stream, &Envelope::new(env.correlation, reply)).is_err() {
            return;
        }
    }
}

/// Serves `policy` on `addr`, delaying each leg by a sample of `latency`.
/// Requests from all connections share the policy one at a time.
pub fn serve_inference<A: ToSocketAddrs>(addr: A, policy: Arc<Mutex<dyn Policy>>, latency: Latency) -> std::io::Result<Endpoint> {
    listen(addr, move |stream, _| serve_conn(stream, policy.clone(), latency.clone()))
}

/// Client with per-attempt timeout and bounded retries.
///
/// Each failed attempt drops the connection; after `attempts` failures the
/// caller gets a permanent error.
#[derive(Debug)]
pub struct TcpInferenceClient {
    addr: SocketAddr,
    timeout: Duration,
    attempts: u32,
    stream: Option<TcpStream>,
    next: u64,
}

impl TcpInferenceClient {
    pub fn new(addr: SocketAddr) -> Self {
        TcpInferenceClient {
            addr,
            timeout: DEFAULT_TIMEOUT,
            attempts: DEFAULT_ATTEMPTS,
            stream: None,
            next: 1,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_attempts(mut self, attempts: u32) -> Self {
        self.attempts = attempts.max(1);
        self
    }

    /// One try; every error here is retriable.
    pub fn try_once(&mut self, request: &InferenceRequest) -> Result<InferenceResponse, TransportError> {
        let retriable = |e: &dyn std::fmt::Display| TransportError::Retriable(e.to_string());
        if self.stream.is_none() {
            let s = TcpStream::connect_timeout(&self.addr, self.timeout).map_err(|e| retriable(&e))?;
            s.set_nodelay(true).map_err(|e| retriable(&e))?;
            s.set_read_timeout(Some(self.timeout)).map_err(|e| retriable(&e))?;
            s.set_write_timeout(Some(self.timeout)).map_err(|e| retriable(&e))?;
            self.stream = Some(s);
        }
        let c = self.next;
        self.next += 1;
        let stream = self.stream.as_mut().expect("connected above");
        let env = Envelope::new(c, Message::InferenceRequest(request.clone()));
        write_envelope(stream, &env).map_err(|e| retriable(&e))?;
        loop {
            let reply = read_envelope(stream)
                .map_err(|e| retriable(&e))?
                .ok_or_else(|| TransportError::Retriable("connection closed".into()))?;
            // Late replies to abandoned requests are skipped.
            if reply.correlation < c {
                continue;
            }
            return match reply.message {
                Message::InferenceResponse(r) if reply.correlation == c => Ok(r),
                Message::Error { message } => Err(TransportError::Retriable(message)),
                _ => Err(TransportError::Retriable("unexpected reply".into())),
            };
        }
    }
}

impl InferenceClient for TcpInferenceClient {
    fn infer(&mut self, request: &InferenceRequest) -> Result<InferenceResponse, TransportError> {
        let mut last = String::new();
        for _ in 0..self.attempts {
            match self.try_once(request) {
                Ok(r) => return Ok(r),
                Err(e) => {
                    self.stream = None;
                    last = e.to_string();
                }
            }
        }
        Err(TransportError::Permanent(format!(
            "{} attempts to {} failed; last: {last}",
            self.attempts, self.addr
        )))
    }
}
