//! Socket access to the bus: a TCP endpoint carrying frames back to back,
//! and a websocket bridge carrying one frame per binary message for
//! browser clients. Both speak the same envelopes.
//!
//! Client requests: `Subscribe`/`Unsubscribe` a topic, `Publish` a
//! message, `TaskSubmit`, `Teleop` and `Record` commands. Each request is
//! answered with `Ack` or `Error` under the request's correlation id.
//! Messages on subscribed topics arrive as `Publish` with correlation 0.

use std::collections::HashMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{bounded, select, unbounded, Receiver, Sender};
use skillmatrix_core::control::TeleopInput;
use skillmatrix_core::wire::{BusMessage, Envelope, Message, RecordCommand};
use tungstenite::protocol::WebSocket;

use crate::bus::Bus;
use crate::net::{envelope_from_bytes, read_envelope, write_envelope, NetError};

/// Operator commands arriving over a socket.
pub trait CommandHandler: Send + Sync {
    fn submit_task(&self, _robot: u32, _text: &str) -> Result<(), String> {
        Err("task submission not available on this endpoint".into())
    }
    fn teleop(&self, _robot: u32, _input: TeleopInput) -> Result<(), String> {
        Err("teleoperation not available on this endpoint".into())
    }
    fn record(&self, _cmd: RecordCommand) -> Result<(), String> {
        Err("recording not available on this endpoint".into())
    }
}

/// Accepts only bus traffic.
#[derive(Debug, Default, Clone, Copy)]
pub struct BusOnly;

impl CommandHandler for BusOnly {}

struct Forwarder {
    stop: Sender<()>,
    thread: JoinHandle<()>,
}

/// Per-connection state shared by both transports.
struct Session {
    bus: Bus,
    handler: Arc<dyn CommandHandler>,
    out: Sender<Envelope>,
    subs: HashMap<String, Forwarder>,
}

impl Session {
    fn new(bus: Bus, handler: Arc<dyn CommandHandler>, out: Sender<Envelope>) -> Self {
        Session {
            bus,
            handler,
            out,
            subs: HashMap::new(),
        }
    }

    fn reply(&self, correlation: u64, r: Result<(), String>) {
        let message = match r {
            Ok(()) => Message::Ack,
            Err(message) => Message::Error { message },
        };
        let _ = self.out.send(Envelope::new(correlation, message));
    }

    fn subscribe(&mut self, topic: &str) -> Result<(), String> {
        if self.subs.contains_key(topic) {
            return Ok(());
        }
        let sub = self.bus.subscribe(topic).map_err(|e| e.to_string())?;
        let (stop, stopped) = bounded::<()>(1);
        let out = self.out.clone();
        let thread = thread::spawn(move || loop {
            select! {
                recv(sub.receiver()) -> m => match m {
                    Ok(m) => {
                        if out.send(Envelope::new(0, Message::Publish(m))).is_err() {
                            return;
                        }
                    }
                    Err(_) => return,
                },
                recv(stopped) -> _ => return,
            }
        });
        self.subs.insert(topic.into(), Forwarder { stop, thread });
        Ok(())
    }

    fn unsubscribe(&mut self, topic: &str) {
        if let Some(f) = self.subs.remove(topic) {
            let _ = f.stop.send(());
            let _ = f.thread.join();
        }
    }

    fn handle(&mut self, env: Envelope) {
        let c = env.correlation;
        let r = match env.message {
            Message::Subscribe { topic } => self.subscribe(&topic),
            Message::Unsubscribe { topic } => {
                self.unsubscribe(&topic);
                Ok(())
            }
            Message::Publish(m) => self.bus.deliver(m).map_err(|e| e.to_string()),
            Message::TaskSubmit { robot, text } => self.handler.submit_task(robot, &text),
            Message::Teleop { robot, input } => self.handler.teleop(robot, input),
            Message::Record(cmd) => self.handler.record(cmd),
            Message::Ack | Message::Error { .. } => return,
            other => Err(format!("unexpected message kind {}", other.kind())),
        };
        self.reply(c, r);
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let topics: Vec<String> = self.subs.keys().cloned().collect();
        for t in topics {
            self.unsubscribe(&t);
        }
    }
}

/// A listening endpoint running on background threads.
pub struct Endpoint {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl Endpoint {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Endpoint {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds `addr` and hands each accepted stream to `serve` on its own thread.
pub(crate) fn listen<A, F>(addr: A, serve: F) -> std::io::Result<Endpoint>
where
    A: ToSocketAddrs,
    F: Fn(TcpStream, Arc<AtomicBool>) + Send + Sync + 'static,
{
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = shutdown.clone();
    let serve = Arc::new(serve);
    let accept = thread::spawn(move || {
        for stream in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                return;
            }
            let Ok(stream) = stream else { continue };
            let serve = serve.clone();
            let flag = flag.clone();
            thread::spawn(move || serve(stream, flag));
        }
    });
    Ok(Endpoint {
        addr: local,
        shutdown,
        accept: Some(accept),
    })
}

fn serve_tcp(stream: TcpStream, bus: Bus, handler: Arc<dyn CommandHandler>) {
    let _ = stream.set_nodelay(true);
    let Ok(mut writer) = stream.try_clone() else { return };
    let (out, outbox) = unbounded::<Envelope>();
    let write_thread = thread::spawn(move || {
        for env in outbox {
            if write_envelope(&mut writer, &env).is_err() {
                return;
            }
        }
    });
    let mut session = Session::new(bus, handler, out);
    let mut reader = stream;
    loop {
        match read_envelope(&mut reader) {
            Ok(Some(env)) => session.handle(env),
            Ok(None) => break,
            Err(NetError::Body(e)) => session.reply(0, Err(format!("bad message: {e}"))),
            Err(_) => break,
        }
    }
    let _ = reader.shutdown(std::net::Shutdown::Both);
    drop(session);
    let _ = write_thread.join();
}

/// TCP bus endpoint.
pub fn serve_bus<A: ToSocketAddrs>(addr: A, bus: Bus, handler: Arc<dyn CommandHandler>) -> std::io::Result<Endpoint> {
    listen(addr, move |stream, _| serve_tcp(stream, bus.clone(), handler.clone()))
}

fn serve_ws(stream: TcpStream, bus: Bus, handler: Arc<dyn CommandHandler>, shutdown: Arc<AtomicBool>) {
    let Ok(mut ws) = tungstenite::accept(stream) else { return };
    let _ = ws.get_ref().set_read_timeout(Some(Duration::from_millis(10)));
    let (out, outbox) = unbounded::<Envelope>();
    let mut session = Session::new(bus, handler, out);
    while !shutdown.load(Ordering::SeqCst) {
        if flush_outbox(&mut ws, &outbox).is_err() {
            break;
        }
        match ws.read() {
            Ok(tungstenite::Message::Binary(data)) => match envelope_from_bytes(&data) {
                Ok(env) => session.handle(env),
                Err(e) => session.reply(0, Err(format!("bad frame: {e}"))),
            },
            Ok(tungstenite::Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
}

fn flush_outbox(ws: &mut WebSocket<TcpStream>, outbox: &Receiver<Envelope>) -> Result<(), tungstenite::Error> {
    for env in outbox.try_iter() {
        let bytes = env.to_frame().map_err(|e| tungstenite::Error::Io(std::io::Error::other(e)))?;
        ws.write(tungstenite::Message::Binary(bytes))?;
    }
    match ws.flush() {
        Err(tungstenite::Error::Io(e)) if e.kind() == ErrorKind::WouldBlock => Ok(()),
        r => r,
    }
}

/// Websocket bridge for browser clients.
pub fn serve_bridge<A: ToSocketAddrs>(addr: A, bus: Bus, handler: Arc<dyn CommandHandler>) -> std::io::Result<Endpoint> {
    listen(addr, move |stream, flag| serve_ws(stream, bus.clone(), handler.clone(), flag))
}

/// Blocking TCP client of a bus endpoint.
pub struct BusClient {
    writer: TcpStream,
    inbox: Receiver<Envelope>,
    next: u64,
    reader: Option<JoinHandle<()>>,
}

impl BusClient {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> std::io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut reader = stream.try_clone()?;
        let (tx, inbox) = unbounded();
        let reader = thread::spawn(move || {
            while let Ok(Some(env)) = read_envelope(&mut reader) {
                if tx.send(env).is_err() {
                    return;
                }
            }
        });
        Ok(BusClient {
            writer: stream,
            inbox,
            next: 1,
            reader: Some(reader),
        })
    }

    /// Sends a request and returns its correlation id.
    pub fn send(&mut self, message: Message) -> Result<u64, NetError> {
        let c = self.next;
        self.next += 1;
        write_envelope(&mut self.writer, &Envelope::new(c, message))?;
        Ok(c)
    }

    /// Sends a request and waits for its reply, queueing nothing else.
    /// Published messages arriving meanwhile are returned alongside.
    pub fn request(&mut self, message: Message, timeout: Duration) -> Result<(Message, Vec<BusMessage>), NetError> {
        let c = self.send(message)?;
        let mut early = Vec::new();
        loop {
            match self.inbox.recv_timeout(timeout) {
                Ok(env) if env.correlation == c => return Ok((env.message, early)),
                Ok(Envelope {
                    message: Message::Publish(m),
                    ..
                }) => early.push(m),
                Ok(_) => {}
                Err(_) => return Err(NetError::Io(std::io::Error::from(ErrorKind::TimedOut))),
            }
        }
    }

    pub fn subscribe(&mut self, topic: &str) -> Result<Message, NetError> {
        self.request(Message::Subscribe { topic: topic.into() }, Duration::from_secs(2))
            .map(|r| r.0)
    }

    /// Next published message, if one arrives within `timeout`.
    pub fn next_message(&self, timeout: Duration) -> Option<BusMessage> {
        loop {
            match self.inbox.recv_timeout(timeout).ok()? {
                Envelope {
                    message: Message::Publish(m),
                    ..
                } => return Some(m),
                _ => continue,
            }
        }
    }
}

impl Drop for BusClient {
    fn drop(&mut self) {
        let _ = self.writer.shutdown(std::net::Shutdown::Both);
        if let Some(r) = self.reader.take() {
            let _ = r.join();
        }
    }
}
