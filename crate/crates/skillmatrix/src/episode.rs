//! Episode directories and the bus recorder.
//!
//! ```text
//! <root>/<id>/manifest.json   schema, id, variant, codec snapshot, marks
//! <root>/<id>/frames.jsonl    one frame per line, appended and flushed
//! <root>/<id>/PARTIAL         present if recording aborted on a write error
//! ```
//!
//! A crash can only cut the last line of the frame log; loading drops
//! any unterminated tail.

use std::collections::VecDeque;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread::{self, JoinHandle};

use anyhow::{bail, Context, Result};
use crossbeam_channel::{bounded, select, Sender};
use serde::{Deserialize, Serialize};
use skillmatrix_core::codec::CodecConfig;
use skillmatrix_core::data::{Episode, Frame, Segment, EPISODE_SCHEMA};
use skillmatrix_core::sim::{RobotState, RobotVariant};
use skillmatrix_core::wire::{BusMessage, Payload};

use crate::bus::{topics, Bus, Subscription};
use crate::formats::write_atomic;

pub const MANIFEST: &str = "manifest.json";
pub const FRAMES: &str = "frames.jsonl";
pub const PARTIAL: &str = "PARTIAL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub id: String,
    pub variant: RobotVariant,
    pub robot: u32,
    pub dt: f64,
    #[serde(default)]
    pub codec: Option<CodecConfig>,
    /// Set once recording ended normally.
    pub complete: bool,
    pub frames: usize,
    /// False for empty recordings.
    pub valid: bool,
    #[serde(default)]
    pub segments: Vec<Segment>,
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    write_atomic(&dir.join(MANIFEST), &serde_json::to_vec_pretty(m)?)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let p = dir.join(MANIFEST);
    let bytes = fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
    let m: Manifest = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", p.display()))?;
    if m.schema != EPISODE_SCHEMA {
        bail!("{}: unsupported schema {:?}", p.display(), m.schema);
    }
    Ok(m)
}

/// Single-writer, append-only episode recording.
#[derive(Debug)]
pub struct EpisodeWriter {
    dir: PathBuf,
    manifest: Manifest,
    log: BufWriter<File>,
    last_tick: Option<u64>,
}

impl EpisodeWriter {
    pub fn create(root: &Path, id: &str, variant: RobotVariant, robot: u32, dt: f64, codec: Option<CodecConfig>) -> Result<Self> {
        let dir = root.join(id);
        if dir.join(MANIFEST).exists() {
            bail!("episode {} already exists", dir.display());
        }
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let manifest = Manifest {
            schema: EPISODE_SCHEMA.into(),
            id: id.into(),
            variant,
            robot,
            dt,
            codec,
            complete: false,
            frames: 0,
            valid: false,
            segments: Vec::new(),
        };
        write_manifest(&dir, &manifest)?;
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(FRAMES))
            .with_context(|| format!("opening frame log in {}", dir.display()))?;
        Ok(EpisodeWriter {
            dir,
            manifest,
            log: BufWriter::new(log),
            last_tick: None,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn frames(&self) -> usize {
        self.manifest.frames
    }

    /// Appends and flushes one frame. A write failure leaves the partial
    /// marker behind and should end the session.
    pub fn push(&mut self, frame: &Frame) -> Result<()> {
        if self.last_tick.is_some_and(|t| frame.tick <= t) {
            bail!("frame tick {} does not advance", frame.tick);
        }
        let r = (|| -> Result<()> {
            serde_json::to_writer(&mut self.log, frame)?;
            self.log.write_all(b"\n")?;
            self.log.flush()?;
            Ok(())
        })();
        if let Err(e) = r {
            let _ = fs::write(self.dir.join(PARTIAL), format!("{e}\n"));
            return Err(e.context("recording aborted"));
        }
        self.last_tick = Some(frame.tick);
        self.manifest.frames += 1;
        Ok(())
    }

    pub fn finish(mut self, segments: Vec<Segment>) -> Result<Manifest> {
        self.log.flush()?;
        self.manifest.complete = true;
        self.manifest.valid = self.manifest.frames > 0;
        self.manifest.segments = segments;
        write_manifest(&self.dir, &self.manifest)?;
        Ok(self.manifest)
    }
}

/// Loads an episode, dropping an unterminated trailing frame.
pub fn load_episode(dir: &Path) -> Result<(Manifest, Episode)> {
    let m = read_manifest(dir)?;
    let p = dir.join(FRAMES);
    let bytes = fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
    let complete_len = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let mut frames = Vec::new();
    for (i, line) in bytes[..complete_len].split(|&b| b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Frame = serde_json::from_slice(line).with_context(|| format!("{}:{}", p.display(), i + 1))?;
        frames.push(f);
    }
    let ep = Episode {
        id: m.id.clone(),
        variant: m.variant,
        frames,
        segments: m.segments.clone(),
    };
    Ok((m, ep))
}

/// Replaces an episode's marks after checking them against its frames.
pub fn save_marks(dir: &Path, marks: Vec<Segment>) -> Result<()> {
    let (mut m, mut ep) = load_episode(dir)?;
    ep.segments = marks;
    ep.validate()?;
    m.segments = ep.segments;
    write_manifest(dir, &m)
}

/// Episode directories directly under `root`, sorted by name.
pub fn list_episodes(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let rd = fs::read_dir(root).with_context(|| format!("listing {}", root.display()))?;
    for e in rd {
        let p = e?.path();
        if p.join(MANIFEST).is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Default)]
struct Pairing {
    latest: Option<RobotState>,
    pending: VecDeque<(f64, RobotState)>,
}

impl Pairing {
    fn record(&mut self, msg: BusMessage, states: &Subscription, writer: &mut EpisodeWriter, dt: f64) -> Result<()> {
        let Payload::Snapshot(snapshot) = msg.payload else { return Ok(()) };
        let t = msg.timestamp;
        for m in states.drain() {
            if let Payload::State(s) = m.payload {
                self.pending.push_back((m.timestamp, s));
            }
        }
        while self.pending.front().is_some_and(|(ts, _)| *ts <= t + 1e-9) {
            self.latest = self.pending.pop_front().map(|p| p.1);
        }
        let Some(state) = self.latest.clone() else { return Ok(()) };
        writer.push(&Frame {
            tick: (t / dt).round() as u64,
            state,
            snapshot,
            action: None,
        })
    }
}

/// Records one robot's bus topics into an episode: one frame per snapshot,
/// paired with the latest state stamped no later than the snapshot.
pub struct BusRecorder {
    stop: Sender<()>,
    thread: Option<JoinHandle<Result<EpisodeWriter>>>,
}

impl BusRecorder {
    pub fn start(bus: &Bus, robot: u32, mut writer: EpisodeWriter) -> Result<Self> {
        let states = bus.subscribe(&topics::state(robot))?;
        let snaps = bus.subscribe(&topics::snapshot(robot))?;
        let dt = writer.manifest.dt;
        let (stop, stopped) = bounded::<()>(1);
        let thread = thread::spawn(move || {
            let mut pair = Pairing::default();
            loop {
                select! {
                    recv(snaps.receiver()) -> m => {
                        let Ok(m) = m else { break };
                        pair.record(m, &states, &mut writer, dt)?;
                    }
                    recv(stopped) -> _ => {
                        for m in snaps.drain() {
                            pair.record(m, &states, &mut writer, dt)?;
                        }
                        break;
                    }
                }
            }
            Ok(writer)
        });
        Ok(BusRecorder {
            stop,
            thread: Some(thread),
        })
    }

    /// Stops after everything already published is written.
    pub fn stop(mut self, segments: Vec<Segment>) -> Result<Manifest> {
        let _ = self.stop.send(());
        let writer = self
            .thread
            .take()
            .expect("stopped once")
            .join()
            .map_err(|_| anyhow::anyhow!("recorder thread panicked"))??;
        writer.finish(segments)
    }
}

impl Drop for BusRecorder {
    fn drop(&mut self) {
        if let Some(t) = self.thread.take() {
            let _ = self.stop.send(());
            let _ = t.join();
        }
    }
}
