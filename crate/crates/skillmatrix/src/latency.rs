//! Injected link latency.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One-way delay distribution, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LatencyModel {
    Constant { ms: f64 },
    Uniform { min_ms: f64, max_ms: f64 },
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::Constant { ms: 100.0 }
    }
}

impl LatencyModel {
    pub const ZERO: LatencyModel = LatencyModel::Constant { ms: 0.0 };

    pub fn mean_ms(&self) -> f64 {
        match *self {
            LatencyModel::Constant { ms } => ms,
            LatencyModel::Uniform { min_ms, max_ms } => (min_ms + max_ms) / 2.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Duration {
        let ms = match *self {
            LatencyModel::Constant { ms } => ms,
            LatencyModel::Uniform { min_ms, max_ms } if max_ms > min_ms => rng.random_range(min_ms..max_ms),
            LatencyModel::Uniform { min_ms, .. } => min_ms,
        };
        Duration::from_secs_f64(ms.max(0.0) / 1000.0)
    }
}

/// Sampler with its own seeded stream, shareable across threads.
#[derive(Debug, Clone)]
pub struct Latency {
    model: LatencyModel,
    rng: Arc<Mutex<ChaCha8Rng>>,
}

impl Latency {
    pub fn new(model: LatencyModel, seed: u64) -> Self {
        Latency {
            model,
            rng: Arc::new(Mutex::new(ChaCha8Rng::seed_from_u64(seed))),
        }
    }

    pub fn model(&self) -> LatencyModel {
        self.model
    }

    pub fn sample(&self) -> Duration {
        let mut rng = self.rng.lock().expect("latency rng poisoned");
        self.model.sample(&mut *rng)
    }

    /// Sleeps for one sampled delay.
    pub fn wait(&self) {
        let d = self.sample();
        if !d.is_zero() {
            thread::sleep(d);
        }
    }
}

struct Line<T> {
    queue: VecDeque<(Instant, T)>,
    closed: bool,
}

/// Delays items by a sampled latency, preserving send order: an item is
/// never delivered before the one sent ahead of it.
pub struct DelayLine<T: Send + 'static> {
    shared: Arc<(Mutex<Line<T>>, Condvar)>,
    latency: Latency,
    last_due: Option<Instant>,
    worker: Option<JoinHandle<()>>,
}

impl<T: Send + 'static> DelayLine<T> {
    pub fn new(latency: Latency, mut deliver: impl FnMut(T) + Send + 'static) -> Self {
        let shared = Arc::new((
            Mutex::new(Line {
                queue: VecDeque::new(),
                closed: false,
            }),
            Condvar::new(),
        ));
        let s = shared.clone();
        let worker = thread::spawn(move || {
            let (lock, cv) = &*s;
            let mut line = lock.lock().expect("delay line poisoned");
            loop {
                match line.queue.front() {
                    None if line.closed => return,
                    None => line = cv.wait(line).expect("delay line poisoned"),
                    Some(&(due, _)) => {
                        let now = Instant::now();
                        if due <= now {
                            let (_, item) = line.queue.pop_front().expect("front checked");
                            drop(line);
                            deliver(item);
                            line = lock.lock().expect("delay line poisoned");
                        } else {
                            line = cv.wait_timeout(line, due - now).expect("delay line poisoned").0;
                        }
                    }
                }
            }
        });
        DelayLine {
            shared,
            latency,
            last_due: None,
            worker: Some(worker),
        }
    }

    pub fn send(&mut self, item: T) {
        let mut due = Instant::now() + self.latency.sample();
        if let Some(prev) = self.last_due {
            due = due.max(prev);
        }
        self.last_due = Some(due);
        let (lock, cv) = &*self.shared;
        lock.lock().expect("delay line poisoned").queue.push_back((due, item));
        cv.notify_one();
    }
}

impl<T: Send + 'static> Drop for DelayLine<T> {
    /// Delivers whatever is still in flight, then stops the worker.
    fn drop(&mut self) {
        let (lock, cv) = &*self.shared;
        if let Ok(mut line) = lock.lock() {
            line.closed = true;
        }
        cv.notify_one();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
