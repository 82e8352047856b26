//! In-process topic bus. Every `Bus` clone shares one embedded registry;
//! there is no broker thread. Delivery goes through one unbounded channel
//! per subscription, so a subscriber sees messages one at a time and in
//! per-publisher order.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender};
use skillmatrix_core::wire::{BusMessage, Payload};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("malformed topic path {0:?}")]
    BadTopic(String),
    #[error("empty publisher name")]
    BadPublisher,
}

/// Topic paths look like `/robot/1/state`: a leading slash and non-empty
/// segments of ASCII letters, digits, `_`, `-` or `.`.
pub fn validate_topic(topic: &str) -> Result<(), BusError> {
    let bad = || BusError::BadTopic(topic.into());
    let rest = topic.strip_prefix('/').ok_or_else(bad)?;
    if rest.is_empty() {
        return Err(bad());
    }
    for seg in rest.split('/') {
        if seg.is_empty() || !seg.bytes().all(|b| b.is_ascii_alphanumeric() || b"_-.".contains(&b)) {
            return Err(bad());
        }
    }
    Ok(())
}

pub mod topics {
    pub fn state(robot: u32) -> String {
        format!("/robot/{robot}/state")
    }
    pub fn snapshot(robot: u32) -> String {
        format!("/robot/{robot}/snapshot")
    }
    pub fn cmd(robot: u32) -> String {
        format!("/robot/{robot}/cmd")
    }
    pub fn teleop(robot: u32) -> String {
        format!("/robot/{robot}/teleop")
    }
    /// Queue events of submitted tasks, as JSON text.
    pub const TASK_EVENTS: &str = "/tasks/events";
    /// Recorder status changes, as JSON text.
    pub const RECORD_STATUS: &str = "/record/status";
}

struct Slot {
    id: u64,
    tx: Sender<BusMessage>,
}

struct Registry {
    topics: RwLock<HashMap<String, Vec<Slot>>>,
    next_id: AtomicU64,
    epoch: Instant,
}

#[derive(Clone)]
pub struct Bus {
    inner: Arc<Registry>,
}

impl Default for Bus {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for Bus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.inner.topics.read().map(|t| t.len()).unwrap_or(0);
        f.debug_struct("Bus").field("topics", &n).finish()
    }
}

impl Bus {
    pub fn new() -> Self {
        Bus {
            inner: Arc::new(Registry {
                topics: RwLock::new(HashMap::new()),
                next_id: AtomicU64::new(1),
                epoch: Instant::now(),
            }),
        }
    }

    /// Seconds since the bus was created.
    pub fn now(&self) -> f64 {
        self.inner.epoch.elapsed().as_secs_f64()
    }

    pub fn publisher(&self, name: &str) -> Result<Publisher, BusError> {
        if name.is_empty() {
            return Err(BusError::BadPublisher);
        }
        Ok(Publisher {
            bus: self.clone(),
            name: name.into(),
            seqs: HashMap::new(),
        })
    }

    /// Receives every message published on `topic` from now on.
    pub fn subscribe(&self, topic: &str) -> Result<Subscription, BusError> {
        validate_topic(topic)?;
        let (tx, rx) = unbounded();
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        self.inner
            .topics
            .write()
            .expect("bus registry poisoned")
            .entry(topic.into())
            .or_default()
            .push(Slot { id, tx });
        Ok(Subscription {
            bus: self.clone(),
            topic: topic.into(),
            id,
            rx,
        })
    }

    pub fn subscriber_count(&self, topic: &str) -> usize {
        self.inner
            .topics
            .read()
            .expect("bus registry poisoned")
            .get(topic)
            .map_or(0, Vec::len)
    }

    /// Forwards an already stamped message, keeping its publisher and sequence.
    pub fn deliver(&self, msg: BusMessage) -> Result<(), BusError> {
        validate_topic(&msg.topic)?;
        let topics = self.inner.topics.read().expect("bus registry poisoned");
        if let Some(slots) = topics.get(&msg.topic) {
            for s in slots {
                let _ = s.tx.send(msg.clone());
            }
        }
        Ok(())
    }

    fn unsubscribe(&self, topic: &str, id: u64) {
        if let Ok(mut topics) = self.inner.topics.write() {
            if let Some(slots) = topics.get_mut(topic) {
                slots.retain(|s| s.id != id);
                if slots.is_empty() {
                    topics.remove(topic);
                }
            }
        }
    }
}

/// A named source. Sequence numbers count up per topic from 1.
#[derive(Debug)]
pub struct Publisher {
    bus: Bus,
    name: String,
    seqs: HashMap<String, u64>,
}

impl Publisher {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn publish(&mut self, topic: &str, payload: Payload) -> Result<u64, BusError> {
        let t = self.bus.now();
        self.publish_at(topic, payload, t)
    }

    /// Publishes with an explicit timestamp, e.g. simulated time.
    pub fn publish_at(&mut self, topic: &str, payload: Payload, timestamp: f64) -> Result<u64, BusError> {
        validate_topic(topic)?;
        let seq = self.seqs.entry(topic.into()).or_insert(0);
        *seq += 1;
        let seq = *seq;
        self.bus.deliver(BusMessage {
            topic: topic.into(),
            publisher: self.name.clone(),
            seq,
            timestamp,
            payload,
        })?;
        Ok(seq)
    }
}

#[derive(Debug)]
pub struct Subscription {
    bus: Bus,
    topic: String,
    id: u64,
    rx: Receiver<BusMessage>,
}

impl Subscription {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn recv(&self) -> Option<BusMessage> {
        self.rx.recv().ok()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<BusMessage> {
        self.rx.recv_timeout(timeout).ok()
    }

    pub fn try_recv(&self) -> Option<BusMessage> {
        self.rx.try_recv().ok()
    }

    /// Drains everything queued so far.
    pub fn drain(&self) -> Vec<BusMessage> {
        self.rx.try_iter().collect()
    }

    pub fn receiver(&self) -> &Receiver<BusMessage> {
        &self.rx
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.bus.unsubscribe(&self.topic, self.id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(s: &str) -> Payload {
        Payload::Text(s.into())
    }

    fn texts(sub: &Subscription) -> Vec<String> {
        sub.drain()
            .into_iter()
            .map(|m| match m.payload {
                Payload::Text(t) => t,
                other => panic!("unexpected {other:?}"),
            })
            .collect()
    }

    #[test]
    fn topic_paths() {
        assert!(validate_topic("/robot/1/cmd").is_ok());
        for bad in ["", "/", "robot", "/robot//cmd", "/robot/", "/a b", "/ü"] {
            assert!(validate_topic(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn fifo_fanout_and_no_replay() {
        let bus = Bus::new();
        let mut p = bus.publisher("p").unwrap();
        let a = bus.subscribe("/t").unwrap();
        p.publish("/t", text("m1")).unwrap();
        let b = bus.subscribe("/t").unwrap();
        p.publish("/t", text("m2")).unwrap();
        p.publish("/t", text("m3")).unwrap();
        assert_eq!(texts(&a), ["m1", "m2", "m3"]);
        assert_eq!(texts(&b), ["m2", "m3"]);
    }

    #[test]
    fn sequences_are_per_topic() {
        let bus = Bus::new();
        let mut p = bus.publisher("p").unwrap();
        assert_eq!(p.publish("/a", text("x")).unwrap(), 1);
        assert_eq!(p.publish("/b", text("x")).unwrap(), 1);
        assert_eq!(p.publish("/a", text("x")).unwrap(), 2);
        assert!(p.publish("bad", text("x")).is_err());
    }

    #[test]
    fn dropped_subscription_unregisters() {
        let bus = Bus::new();
        let s = bus.subscribe("/t").unwrap();
        assert_eq!(bus.subscriber_count("/t"), 1);
        drop(s);
        assert_eq!(bus.subscriber_count("/t"), 0);
    }
}
