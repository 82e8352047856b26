//! Demonstration data: episodes, skill segmentation, relative actions,
//! interval relabeling, stop-frame augmentation, SFT export and splits.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{encode_action, Action7, CodecConfig, CodecError, TokenSeq, DIM_NAMES};
use crate::math;
use crate::planner::{CONTAINER, OBJECT};
use crate::sim::{RobotState, RobotVariant, SceneSnapshot};

pub const EPISODE_SCHEMA: &str = "skillmatrix.episode/1";
/// Default look-ahead for interval relabeling, in frames.
pub const DEFAULT_INTERVAL: usize = 10;
pub const DEFAULT_STOP_RATIO: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("episode {episode}: ticks not strictly increasing at frame {index}")]
    TicksOutOfOrder { episode: String, index: usize },
    #[error("segment {skill:?} [{start}, {end}] lies outside the episode")]
    OutOfBounds { skill: String, start: u64, end: u64 },
    #[error("overlapping segments: {}", .0.join("; "))]
    Overlap(Vec<String>),
    #[error("clip needs at least {need} frames, has {have}")]
    TooShort { have: usize, need: usize },
    #[error("clip has no stop frame")]
    NoStopFrame,
    #[error("target ratio must lie in (0, 1), got {0}")]
    BadRatio(f64),
    #[error("codec has not been fitted")]
    Unfitted,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("skill {skill:?} has {have} episodes, {need} required")]
    Insufficient { skill: String, have: usize, need: usize },
    #[error("split needs at least one skill and one episode per skill")]
    BadSplit,
    #[error("no episodes found")]
    NoEpisodes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub tick: u64,
    pub state: RobotState,
    pub snapshot: SceneSnapshot,
    /// Raw command recorded alongside the state, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action7>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    #[default]
    Valid,
    Discarded,
}

/// Annotation of a tick interval, both ends inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_tick: u64,
    pub end_tick: u64,
    pub skill: String,
    #[serde(default)]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<String>,
    #[serde(default)]
    pub quality: Quality,
    /// Frames dropped from the start and end of the interval.
    #[serde(default)]
    pub trim_head: usize,
    #[serde(default)]
    pub trim_tail: usize,
}

impl Segment {
    pub fn new(start_tick: u64, end_tick: u64, skill: &str, object: Option<&str>) -> Self {
        Segment {
            start_tick,
            end_tick,
            skill: skill.into(),
            object: object.map(Into::into),
            container: None,
            quality: Quality::Valid,
            trim_head: 0,
            trim_tail: 0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.quality == Quality::Valid
    }

    fn overlaps(&self, other: &Segment) -> bool {
        self.start_tick <= other.end_tick && other.start_tick <= self.end_tick
    }

    /// Skill template with its placeholders filled.
    pub fn prompt(&self) -> String {
        let mut p = self.skill.clone();
        if let Some(o) = &self.object {
            p = p.replacen(OBJECT, o, 1);
        }
        if let Some(c) = &self.container {
            p = p.replacen(CONTAINER, c, 1);
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub variant: RobotVariant,
    pub frames: Vec<Frame>,
    pub segments: Vec<Segment>,
}

impl Episode {
    pub fn new(id: &str, variant: RobotVariant) -> Self {
        Episode {
            id: id.into(),
            variant,
            frames: Vec::new(),
            segments: Vec::new(),
        }
    }

    /// An episode without frames carries nothing to learn from.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        for (i, w) in self.frames.windows(2).enumerate() {
            if w[1].tick <= w[0].tick {
                return Err(DataError::TicksOutOfOrder {
                    episode: self.id.clone(),
                    index: i + 1,
                });
            }
        }
        check_marks(self, &self.segments)
    }

    /// Skill of the first valid segment, used to bucket episodes.
    pub fn primary_skill(&self) -> Option<&str> {
        self.segments.iter().find(|s| s.is_valid()).map(|s| s.skill.as_str())
    }
}

fn check_marks(ep: &Episode, marks: &[Segment]) -> Result<(), DataError> {
    let (first, last) = match (ep.frames.first(), ep.frames.last()) {
        (Some(f), Some(l)) => (f.tick, l.tick),
        _ => (1, 0),
    };
    for m in marks {
        if m.start_tick > m.end_tick || m.start_tick < first || m.end_tick > last {
            return Err(DataError::OutOfBounds {
                skill: m.skill.clone(),
                start: m.start_tick,
                end: m.end_tick,
            });
        }
    }
    let mut conflicts = Vec::new();
    for (i, a) in marks.iter().enumerate() {
        for b in &marks[i + 1..] {
            if a.overlaps(b) {
                conflicts.push(format!(
                    "{} [{}, {}] and {} [{}, {}]",
                    a.skill, a.start_tick, a.end_tick, b.skill, b.start_tick, b.end_tick
                ));
            }
        }
    }
    if conflicts.is_empty() {
        Ok(())
    } else {
        Err(DataError::Overlap(conflicts))
    }
}

/// Frames of one annotated skill segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub episode: String,
    pub variant: RobotVariant,
    pub segment: Segment,
    pub frames: Vec<Frame>,
}

/// Cuts an episode into clips, dropping discarded segments and applying trims.
pub fn segment(episode: &Episode, marks: &[Segment]) -> Result<Vec<Clip>, DataError> {
    check_marks(episode, marks)?;
    let mut clips = Vec::new();
    for m in marks.iter().filter(|m| m.is_valid()) {
        let frames: Vec<Frame> = episode
            .frames
            .iter()
            .filter(|f| f.tick >= m.start_tick && f.tick <= m.end_tick)
            .cloned()
            .collect();
        let end = frames.len().saturating_sub(m.trim_tail);
        let frames = if m.trim_head < end { frames[m.trim_head..end].to_vec() } else { Vec::new() };
        clips.push(Clip {
            episode: episode.id.clone(),
            variant: episode.variant,
            segment: m.clone(),
            frames,
        });
    }
    Ok(clips)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub tick: u64,
    pub action: Action7,
}

/// A clip expressed as per-frame (or look-ahead) action targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelClip {
    pub episode: String,
    pub variant: RobotVariant,
    pub segment: Segment,
    pub steps: Vec<Step>,
}

impl RelClip {
    pub fn stop_count(&self) -> usize {
        self.steps.iter().filter(|s| s.action.stop).count()
    }
}

/// End-effector (EP) or gimbal (S1) coordinates of a state.
fn tool(s: &RobotState) -> (f64, f64) {
    match s.variant {
        RobotVariant::Ep => (s.arm_u, s.arm_v),
        RobotVariant::S1 => (s.gimbal_yaw, s.gimbal_pitch),
    }
}

fn tool_delta(a: &RobotState, b: &RobotState) -> (f64, f64) {
    let (ta, tb) = (tool(a), tool(b));
    match a.variant {
        RobotVariant::Ep => (tb.0 - ta.0, tb.1 - ta.1),
        RobotVariant::S1 => (math::wrap_angle(tb.0 - ta.0), tb.1 - ta.1),
    }
}

/// Relative motion from state `a` to state `b`, expressed in `a`'s chassis frame.
pub fn state_delta(a: &RobotState, b: &RobotState) -> Action7 {
    let (dx, dy) = math::rotate(b.x - a.x, b.y - a.y, -a.yaw);
    let (du, dv) = tool_delta(a, b);
    Action7 {
        stop: false,
        dx,
        dy,
        dyaw: math::wrap_angle(b.yaw - a.yaw),
        du,
        dv,
        gripper: b.gripper_closed,
    }
}

/// Per-frame deltas; the final frame becomes a zero action with the stop flag.
pub fn to_relative(clip: &Clip) -> Result<RelClip, DataError> {
    let n = clip.frames.len();
    if n < 2 {
        return Err(DataError::TooShort { have: n, need: 2 });
    }
    let mut steps: Vec<Step> = clip
        .frames
        .windows(2)
        .map(|w| Step {
            tick: w[0].tick,
            action: state_delta(&w[0].state, &w[1].state),
        })
        .collect();
    let last = &clip.frames[n - 1];
    steps.push(Step {
        tick: last.tick,
        action: Action7 {
            stop: true,
            gripper: last.state.gripper_closed,
            ..Action7::zero()
        },
    });
    Ok(RelClip {
        episode: clip.episode.clone(),
        variant: clip.variant,
        segment: clip.segment.clone(),
        steps,
    })
}

/// Composes per-frame chassis-frame deltas `steps[from..to]`.
fn compose(steps: &[Step], variant: RobotVariant) -> Action7 {
    let (mut x, mut y, mut th) = (0.0, 0.0, 0.0);
    let (mut u, mut v) = (0.0, 0.0);
    for s in steps {
        let (gx, gy) = math::rotate(s.action.dx, s.action.dy, th);
        x += gx;
        y += gy;
        th += s.action.dyaw;
        u += s.action.du;
        v += s.action.dv;
    }
    if variant == RobotVariant::S1 {
        u = math::wrap_angle(u);
    }
    Action7 {
        stop: false,
        dx: x,
        dy: y,
        dyaw: math::wrap_angle(th),
        du: u,
        dv: v,
        gripper: false,
    }
}

/// Replaces each target with the cumulative motion `k` frames ahead (or to
/// the final frame near the end). Stop is set exactly on targets that reach
/// the final frame. `k = 0` leaves per-frame targets unchanged.
pub fn relabel_interval(rel: &RelClip, k: usize) -> Result<RelClip, DataError> {
    let n = rel.steps.len();
    if k == 0 {
        return Ok(rel.clone());
    }
    if n <= k {
        return Err(DataError::TooShort { have: n, need: k + 1 });
    }
    let steps = (0..n)
        .map(|t| {
            let end = (t + k).min(n - 1);
            let mut a = compose(&rel.steps[t..end], rel.variant);
            a.stop = end == n - 1;
            a.gripper = if end > t {
                rel.steps[end - 1].action.gripper
            } else {
                rel.steps[t].action.gripper
            };
            Step {
                tick: rel.steps[t].tick,
                action: a,
            }
        })
        .collect();
    Ok(RelClip {
        steps,
        ..rel.clone()
    })
}

/// Smallest stop-frame count `s >= have` with `s / (non_stop + s) >= ratio`.
pub fn min_stop_frames(non_stop: usize, have: usize, ratio: f64) -> usize {
    let ok = |s: usize| (s as f64) >= ratio * ((non_stop + s) as f64);
    let guess = math::ceil(ratio * non_stop as f64 / (1.0 - ratio)).max(0.0) as usize;
    let mut s = guess.max(have);
    while !ok(s) {
        s += 1;
    }
    while s > have && ok(s - 1) {
        s -= 1;
    }
    s
}

/// Duplicates stop frames in place until they make up `ratio` of the clip.
pub fn augment_stop_frames(rel: &RelClip, ratio: f64) -> Result<RelClip, DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::BadRatio(ratio));
    }
    let have = rel.stop_count();
    if have == 0 {
        return Err(DataError::NoStopFrame);
    }
    let non_stop = rel.steps.len() - have;
    let extra = min_stop_frames(non_stop, have, ratio) - have;
    // Copies per original stop frame, spread round-robin.
    let mut copies = alloc::vec![extra / have; have];
    for c in copies.iter_mut().take(extra % have) {
        *c += 1;
    }
    let mut steps = Vec::with_capacity(rel.steps.len() + extra);
    let mut k = 0;
    for s in &rel.steps {
        steps.push(s.clone());
        if s.action.stop {
            for _ in 0..copies[k] {
                steps.push(s.clone());
            }
            k += 1;
        }
    }
    Ok(RelClip {
        steps,
        ..rel.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftSample {
    pub episode: String,
    /// Observation reference: the frame's tick within the episode.
    pub tick: u64,
    pub prompt: String,
    pub tokens: TokenSeq,
    pub stop: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub interval: usize,
    /// `None` skips stop-frame augmentation.
    pub stop_ratio: Option<f64>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            interval: DEFAULT_INTERVAL,
            stop_ratio: Some(DEFAULT_STOP_RATIO),
        }
    }
}

/// Runs every valid clip through relative encoding, relabeling and
/// augmentation, then tokenizes. Order follows the input.
pub fn export_sft(clips: &[Clip], codec: Option<&CodecConfig>, opts: &PipelineOptions) -> Result<Vec<SftSample>, DataError> {
    let codec = codec.ok_or(DataError::Unfitted)?;
    codec.validate()?;
    let mut out = Vec::new();
    for clip in clips.iter().filter(|c| c.segment.is_valid()) {
        let rel = relabel_interval(&to_relative(clip)?, opts.interval)?;
        let rel = match opts.stop_ratio {
            Some(r) => augment_stop_frames(&rel, r)?,
            None => rel,
        };
        let prompt = clip.segment.prompt();
        for s in &rel.steps {
            out.push(SftSample {
                episode: clip.episode.clone(),
                tick: s.tick,
                prompt: prompt.clone(),
                tokens: encode_action(&s.action, codec)?,
                stop: s.action.stop,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub episodes: usize,
    pub skills: usize,
    pub seed: u64,
    /// Skills to draw from; empty means the ones with the most episodes.
    #[serde(default)]
    pub names: Vec<String>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            episodes: 200,
            skills: 5,
            seed: 1,
            names: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub mini: Vec<String>,
    pub full: Vec<String>,
    pub per_skill: BTreeMap<String, usize>,
}

/// Seeded mini/full split over `(episode id, skill)` pairs. The mini set
/// takes an equal quota per skill (remainder to the first skills) and
/// never repeats an id.
pub fn split(episodes: &[(String, String)], spec: &SplitSpec) -> Result<Split, DataError> {
    if spec.skills == 0 || spec.episodes < spec.skills {
        return Err(DataError::BadSplit);
    }
    // An id listed under several skills counts for the first one only.
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    for (id, skill) in episodes {
        owner.entry(id.as_str()).or_insert(skill.as_str());
    }
    let mut by_skill: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (id, skill) in owner {
        by_skill.entry(skill).or_default().insert(id);
    }
    let chosen: Vec<&str> = if spec.names.is_empty() {
        let mut ranked: Vec<(&str, usize)> = by_skill.iter().map(|(k, v)| (*k, v.len())).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.into_iter().take(spec.skills).map(|(k, _)| k).collect()
    } else {
        spec.names.iter().take(spec.skills).map(String::as_str).collect()
    };
    if chosen.len() < spec.skills {
        let missing = spec.names.get(chosen.len()).cloned().unwrap_or_else(|| String::from("<any>"));
        return Err(DataError::Insufficient {
            skill: missing,
            have: 0,
            need: spec.episodes / spec.skills,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut mini = Vec::with_capacity(spec.episodes);
    let mut per_skill = BTreeMap::new();
    for (i, skill) in chosen.iter().enumerate() {
        let need = spec.episodes / spec.skills + usize::from(i < spec.episodes % spec.skills);
        let pool: Vec<&str> = by_skill.get(skill).map(|s| s.iter().copied().collect()).unwrap_or_default();
        if pool.len() < need {
            return Err(DataError::Insufficient {
                skill: (*skill).into(),
                have: pool.len(),
                need,
            });
        }
        let mut pool = pool;
        pool.shuffle(&mut rng);
        let mut picked: Vec<String> = pool[..need].iter().map(|s| String::from(*s)).collect();
        picked.sort();
        per_skill.insert(String::from(*skill), need);
        mini.extend(picked);
    }
    let full: BTreeSet<&str> = episodes.iter().map(|(id, _)| id.as_str()).collect();
    Ok(Split {
        mini,
        full: full.into_iter().map(String::from).collect(),
        per_skill,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DimStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl DimStats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return DimStats::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        DimStats {
            count: values.len(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std: math::sqrt(var),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SkillStats {
    pub episodes: usize,
    pub clips: usize,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub episodes: usize,
    pub frames: usize,
    pub skills: BTreeMap<String, SkillStats>,
    /// Per continuous dimension, over per-frame relative actions of valid clips.
    pub dims: BTreeMap<String, DimStats>,
}

pub fn stats(episodes: &[Episode]) -> Result<DatasetStats, DataError> {
    if episodes.is_empty() {
        return Err(DataError::NoEpisodes);
    }
    let mut st = DatasetStats {
        episodes: episodes.len(),
        ..DatasetStats::default()
    };
    let mut cols: [Vec<f64>; 5] = Default::default();
    for ep in episodes {
        st.frames += ep.frames.len();
        let mut seen = BTreeSet::new();
        for clip in segment(ep, &ep.segments)? {
            let entry = st.skills.entry(clip.segment.skill.clone()).or_default();
            entry.clips += 1;
            entry.frames += clip.frames.len();
            if seen.insert(clip.segment.skill.clone()) {
                entry.episodes += 1;
            }
            if let Ok(rel) = to_relative(&clip) {
                for s in &rel.steps {
                    for (i, v) in s.action.continuous().iter().enumerate() {
                        cols[i].push(*v);
                    }
                }
            }
        }
    }
    for (i, col) in cols.iter().enumerate() {
        st.dims.insert(DIM_NAMES[i + 1].into(), DimStats::of(col));
    }
    Ok(st)
}
