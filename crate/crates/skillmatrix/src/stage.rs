//! Thread-safe world handle and the stage observer that publishes robot
//! state and camera snapshots at fixed simulated-time rates.

use std::sync::{Arc, Mutex, MutexGuard};

use skillmatrix_core::sim::World;
use skillmatrix_core::skills::WorldAccess;
use skillmatrix_core::wire::Payload;

use crate::bus::{topics, BusError, Publisher};

pub const STATE_RATE_HZ: u32 = 50;
pub const SNAPSHOT_RATE_HZ: u32 = 30;

#[derive(Debug, Clone)]
pub struct SharedWorld(pub Arc<Mutex<World>>);

impl SharedWorld {
    pub fn new(world: World) -> Self {
        SharedWorld(Arc::new(Mutex::new(world)))
    }

    pub fn lock(&self) -> MutexGuard<'_, World> {
        self.0.lock().expect("world lock poisoned")
    }

    pub fn snapshot(&self) -> World {
        self.lock().clone()
    }
}

impl WorldAccess for SharedWorld {
    fn read<T>(&self, f: impl FnOnce(&World) -> T) -> T {
        f(&self.lock())
    }

    fn write<T>(&self, f: impl FnOnce(&mut World) -> T) -> T {
        f(&mut self.lock())
    }
}

/// Number of events of a `rate_hz` schedule that fall in `(0, t]`.
fn due(t: f64, rate_hz: u32) -> u64 {
    // The epsilon absorbs accumulated tick rounding at exact boundaries.
    (t * rate_hz as f64 + 1e-9).floor().max(0.0) as u64
}

/// Publishes on a simulated-time schedule independent of the world tick:
/// every schedule slot that elapsed since the last call yields one message
/// stamped with that slot's time and carrying the current state.
#[derive(Debug)]
pub struct StageObserver {
    publisher: Publisher,
    state_rate: u32,
    snapshot_rate: u32,
    sent_states: u64,
    sent_snapshots: u64,
}

impl StageObserver {
    pub fn new(publisher: Publisher) -> Self {
        Self::with_rates(publisher, STATE_RATE_HZ, SNAPSHOT_RATE_HZ)
    }

    pub fn with_rates(publisher: Publisher, state_rate: u32, snapshot_rate: u32) -> Self {
        StageObserver {
            publisher,
            state_rate,
            snapshot_rate,
            sent_states: 0,
            sent_snapshots: 0,
        }
    }

    /// Publishes everything due up to the world's current time; returns
    /// the number of messages sent.
    pub fn observe(&mut self, world: &World) -> Result<usize, BusError> {
        let t = world.time();
        let mut sent = 0;
        let want = due(t, self.state_rate);
        while self.sent_states < want {
            self.sent_states += 1;
            let stamp = self.sent_states as f64 / self.state_rate as f64;
            for r in &world.robots {
                self.publisher.publish_at(&topics::state(r.id), Payload::State(r.clone()), stamp)?;
                sent += 1;
            }
        }
        let want = due(t, self.snapshot_rate);
        while self.sent_snapshots < want {
            self.sent_snapshots += 1;
            let stamp = self.sent_snapshots as f64 / self.snapshot_rate as f64;
            for r in &world.robots {
                let Ok(snap) = world.camera_view(r.id) else { continue };
                self.publisher.publish_at(&topics::snapshot(r.id), Payload::Snapshot(snap), stamp)?;
                sent += 1;
            }
        }
        Ok(sent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::Bus;
    use skillmatrix_core::control::ControlSignal;
    use skillmatrix_core::sim::{RobotState, RobotVariant, SimParams};

    #[test]
    fn one_second_yields_exact_counts() {
        let bus = Bus::new();
        let states = bus.subscribe(&topics::state(1)).unwrap();
        let snaps = bus.subscribe(&topics::snapshot(1)).unwrap();
        let mut w = World::new(SimParams::default());
        w.robots.push(RobotState::new(1, RobotVariant::Ep, 0.0, 0.0, 0.0));
        let mut obs = StageObserver::new(bus.publisher("stage").unwrap());
        let dt = w.params.dt;
        for _ in 0..30 {
            w.step(&[(1, ControlSignal::default())], dt);
            obs.observe(&w).unwrap();
        }
        let s = states.drain();
        assert_eq!(s.len(), 50);
        assert_eq!(snaps.drain().len(), 30);
        assert!(s.windows(2).all(|p| p[1].seq > p[0].seq && p[1].timestamp > p[0].timestamp));
    }
}
