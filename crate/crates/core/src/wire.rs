//! Binary wire format shared by the inference link, the bus socket
//! transport and the cockpit bridge.
//!
//! Frame layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "RMTX" (52 4D 54 58)
//! 4       1     version (1)
//! 5       4     payload length N (u32)
//! 9       N     payload
//! ```
//!
//! A message payload is `kind: u8`, `correlation: u64`, then the body.
//! Body fields are written in declaration order: `u8`/`bool` as one byte,
//! `u32`/`u64` as fixed-width integers, `f64` as IEEE-754 bits, strings as
//! `u32` byte length plus UTF-8, options as a `0`/`1` byte plus the value,
//! sequences as a `u32` count plus elements, enums as a `u8` tag plus fields.

use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

use crate::codec::TokenSeq;
use crate::control::{ControlSignal, GripperCommand, Hat, TeleopInput};
use crate::sim::{BBox, Detection, RobotState, RobotVariant, SceneSnapshot};
use crate::skills::{InferenceRequest, InferenceResponse};

pub const MAGIC: [u8; 4] = *b"RMTX";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 9;
pub const DEFAULT_MAX_PAYLOAD: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    /// More bytes are needed; not a corruption.
    #[error("incomplete frame: need {needed} more bytes")]
    Incomplete { needed: usize },
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("payload of {len} bytes exceeds limit of {max}")]
    TooLarge { len: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BodyError {
    #[error("body truncated")]
    Truncated,
    #[error("invalid utf-8 in string field")]
    Utf8,
    #[error("unknown {what} tag {tag}")]
    UnknownTag { what: &'static str, tag: u8 },
    #[error("{0} trailing bytes after body")]
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Body(#[from] BodyError),
}

/// Wraps a payload into a frame.
pub fn encode_frame(payload: &[u8], max_payload: usize) -> Result<Vec<u8>, FrameError> {
    if payload.len() > max_payload || payload.len() > u32::MAX as usize {
        return Err(FrameError::TooLarge {
            len: payload.len(),
            max: max_payload,
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Parses one frame from the front of `buf`, returning the payload and the
/// number of bytes consumed. Never reads past the declared length.
pub fn decode_frame(buf: &[u8], max_payload: usize) -> Result<(&[u8], usize), FrameError> {
    let have = buf.len().min(MAGIC.len());
    if buf[..have] != MAGIC[..have] {
        return Err(FrameError::BadMagic);
    }
    if buf.len() < HEADER_LEN {
        return Err(FrameError::Incomplete {
            needed: HEADER_LEN - buf.len(),
        });
    }
    if buf[4] != VERSION {
        return Err(FrameError::UnsupportedVersion(buf[4]));
    }
    let len = u32::from_le_bytes([buf[5], buf[6], buf[7], buf[8]]) as usize;
    if len > max_payload {
        return Err(FrameError::TooLarge { len, max: max_payload });
    }
    let total = HEADER_LEN + len;
    if buf.len() < total {
        return Err(FrameError::Incomplete {
            needed: total - buf.len(),
        });
    }
    Ok((&buf[HEADER_LEN..total], total))
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn bool(&mut self, v: bool) {
        self.buf.push(v as u8);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.buf.extend_from_slice(b);
    }

    pub fn opt<T>(&mut self, v: Option<&T>, f: impl FnOnce(&mut Self, &T)) {
        match v {
            Some(x) => {
                self.u8(1);
                f(self, x);
            }
            None => self.u8(0),
        }
    }

    pub fn put<T: WireCodec>(&mut self, v: &T) {
        v.write(self);
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(&self) -> Result<(), BodyError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(BodyError::Trailing(n)),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], BodyError> {
        if self.remaining() < n {
            return Err(BodyError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, BodyError> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool, BodyError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(BodyError::UnknownTag { what: "bool", tag }),
        }
    }

    pub fn u32(&mut self) -> Result<u32, BodyError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u64(&mut self) -> Result<u64, BodyError> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    pub fn f64(&mut self) -> Result<f64, BodyError> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn str(&mut self) -> Result<String, BodyError> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        core::str::from_utf8(b).map(String::from).map_err(|_| BodyError::Utf8)
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, BodyError> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    pub fn opt<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T, BodyError>) -> Result<Option<T>, BodyError> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(f(self)?)),
            tag => Err(BodyError::UnknownTag { what: "option", tag }),
        }
    }

    pub fn get<T: WireCodec>(&mut self) -> Result<T, BodyError> {
        T::read(self)
    }

    /// Reads a `u32` element count, refusing counts that could not fit in the rest of the body.
    fn count(&mut self, min_elem: usize) -> Result<usize, BodyError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_elem.max(1)) > self.remaining() {
            return Err(BodyError::Truncated);
        }
        Ok(n)
    }
}

/// Types with a fixed body encoding.
pub trait WireCodec: Sized {
    fn write(&self, w: &mut Writer);
    fn read(r: &mut Reader<'_>) -> Result<Self, BodyError>;
}

impl WireCodec for RobotVariant {
    fn write(&self, w: &mut Writer) {
        w.u8(match self {
            RobotVariant::Ep => 0,
            RobotVariant::S1 => 1,
        })
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, BodyError> {
        match r.u8()? {
            0 => Ok(RobotVariant::Ep),
            1 => Ok(RobotVariant::S1),
            tag => Err(BodyError::UnknownTag { what: "variant", tag }),
        }
    }
}

impl WireCodec for RobotState {
    fn write(&self, w: &mut Writer) {
        w.u32(self.id);
        w.put(&self.variant);
        for v in [
            self.x,
            self.y,
            self.yaw,
            self.pitch,
            self.arm_u,
            self.arm_v,
        ] {
            w.f64(v);
        }
        w.bool(self.gripper_closed);
        w.f64(self.gimbal_yaw);
        w.f64(self.gimbal_pitch);
        w.opt(self.held_object.as_ref(), |w, v| w.u32(*v));
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, BodyError> {
        Ok(RobotState {
            id: r.u32()?,
            variant: r.get()?,
            x: r.f64()?,
            y: r.f64()?,
            yaw: r.f64()?,
            pitch: r.f64()?,
            arm_u: r.f64()?,
            arm_v: r.f64()?,
            gripper_closed: r.bool()?,
            gimbal_yaw: r.f64()?,
            gimbal_pitch: r.f64()?,
            held_object: r.opt(|r| r.u32())?,
        })
    }
}

impl WireCodec for Detection {
    fn write(&self, w: &mut Writer) {
        w.u32(self.object_id);
        w.str(&self.name);
        w.f64(self.bbox.x0);
        w.f64(self.bbox.y0);
        w.f64(self.bbox.x1);
        w.f64(self.bbox.y1);
        w.f64(self.distance);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, BodyError> {
        Ok(Detection {
            object_id: r.u32()?,
            name: r.str()?,
            bbox: BBox {
                x0: r.f64()?,
                y0: r.f64()?,
                x1: r.f64()?,
                y1: r.f64()?,
            },
            distance: r.f64()?,
        })
    }
}

impl WireCodec for SceneSnapshot {
    fn write(&self, w: &mut Writer) {
        w.f64(self.timestamp);
        w.u32(self.robot_id);
        w.f64(self.x);
        w.f64(self.y);
        w.f64(self.yaw);
        w.f64(self.pitch);
        w.u32(self.detections.len() as u32);
        for d in &self.detections {
            w.put(d);
        }
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, BodyError> {
        let timestamp = r.f64()?;
        let robot_id = r.u32()?;
        let (x, y, yaw, pitch) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let n = r.count(48)?;
        let mut detections = Vec::with_capacity(n);
        for _ in 0..n {
            detections.push(r.get()?);
        }
        Ok(SceneSnapshot {
            timestamp,
            robot_id,
            x,
            y,
            yaw,
            pitch,
            detections,
        })
    }
}

impl WireCodec for GripperCommand {
    fn write(&self, w: &mut Writer) {
        w.u8(match self {
            GripperCommand::None => 0,
            GripperCommand::Open => 1,
            GripperCommand::Close => 2,
        })
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, BodyError> {
        match r.u8()? {
            0 => Ok(GripperCommand::None),
            1 => Ok(GripperCommand::Open),
            2 => Ok(GripperCommand::Close),
            tag => Err(BodyError::UnknownTag { what: "gripper", tag }),
        }
    }
}

impl WireCodec for ControlSignal {
    fn write(&self, w: &mut Writer) {
        for v in [
            self.vx,
            self.vy,
            self.wz,
            self.arm_du,
            self.arm_dv,
            self.gimbal_dyaw,
            self.gimbal_dpitch,
        ] {
            w.f64(v);
        }
        w.put(&self.gripper);
        w.bool(self.fire);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, BodyError> {
        Ok(ControlSignal {
            vx: r.f64()?,
            vy: r.f64()?,
            wz: r.f64()?,
            arm_du: r.f64()?,
            arm_dv: r.f64()?,
            gimbal_dyaw: r.f64()?,
            gimbal_dpitch: r.f64()?,
            gripper: r.get()?,
            fire: r.bool()?,
        })
    }
}

impl WireCodec for TeleopInput {
    fn write(&self, w: &mut Writer) {
        w.f64(self.timestamp);
        w.f64(self.stick[0]);
        w.f64(self.stick[1]);
        w.bool(self.rotate_left);
        w.bool(self.rotate_right);
        w.u8(match self.hat {
            Hat::Center => 0,
            Hat::Up => 1,
            Hat::Down => 2,
            Hat::Left => 3,
            Hat::Right => 4,
        });
        w.bool(self.primary);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, BodyError> {
        Ok(TeleopInput {
            timestamp: r.f64()?,
            stick: [r.f64()?, r.f64()?],
            rotate_left: r.bool()?,
            rotate_right: r.bool()?,
            hat: match r.u8()? {
                0 => Hat::Center,
                1 => Hat::Up,
                2 => Hat::Down,
                3 => Hat::Left,
                4 => Hat::Right,
                tag => return Err(BodyError::UnknownTag { what: "hat", tag }),
            },
            primary: r.bool()?,
        })
    }
}

impl WireCodec for InferenceRequest {
    fn write(&self, w: &mut Writer) {
        w.str(&self.prompt);
        w.put(&self.snapshot);
        w.put(&self.state);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, BodyError> {
        Ok(InferenceRequest {
            prompt: r.str()?,
            snapshot: r.get()?,
            state: r.get()?,
        })
    }
}

impl WireCodec for InferenceResponse {
    fn write(&self, w: &mut Writer) {
        w.u32(self.tokens.len() as u32);
        for t in &self.tokens {
            w.u32(*t);
        }
        w.opt(self.diagnostic.as_ref(), |w, s| w.str(s));
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, BodyError> {
        let n = r.count(4)?;
        let mut tokens = Vec::with_capacity(n);
        for _ in 0..n {
            tokens.push(r.u32()?);
        }
        Ok(InferenceResponse {
            tokens,
            diagnostic: r.opt(|r| r.str())?,
        })
    }
}

impl WireCodec for TokenSeq {
    fn write(&self, w: &mut Writer) {
        for t in self.0 {
            w.u32(t);
        }
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, BodyError> {
        let mut a = [0u32; 7];
        for t in a.iter_mut() {
            *t = r.u32()?;
        }
        Ok(TokenSeq(a))
    }
}

/// Typed payload carried on bus topics.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    State(RobotState),
    Snapshot(SceneSnapshot),
    Control(ControlSignal),
    Teleop(TeleopInput),
    /// Free-form UTF-8, typically a JSON document.
    Text(String),
    Bytes(Vec<u8>),
}

impl WireCodec for Payload {
    fn write(&self, w: &mut Writer) {
        match self {
            Payload::State(s) => {
                w.u8(0);
                w.put(s);
            }
            Payload::Snapshot(s) => {
                w.u8(1);
                w.put(s);
            }
            Payload::Control(s) => {
                w.u8(2);
                w.put(s);
            }
            Payload::Teleop(s) => {
                w.u8(3);
                w.put(s);
            }
            Payload::Text(s) => {
                w.u8(4);
                w.str(s);
            }
            Payload::Bytes(b) => {
                w.u8(5);
                w.bytes(b);
            }
        }
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, BodyError> {
        Ok(match r.u8()? {
            0 => Payload::State(r.get()?),
            1 => Payload::Snapshot(r.get()?),
            2 => Payload::Control(r.get()?),
            3 => Payload::Teleop(r.get()?),
            4 => Payload::Text(r.str()?),
            5 => Payload::Bytes(r.bytes()?),
            tag => return Err(BodyError::UnknownTag { what: "payload", tag }),
        })
    }
}

/// One published bus message.
#[derive(Debug, Clone, PartialEq)]
pub struct BusMessage {
    pub topic: String,
    pub publisher: String,
    pub seq: u64,
    pub timestamp: f64,
    pub payload: Payload,
}

impl WireCodec for BusMessage {
    fn write(&self, w: &mut Writer) {
        w.str(&self.topic);
        w.str(&self.publisher);
        w.u64(self.seq);
        w.f64(self.timestamp);
        w.put(&self.payload);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, BodyError> {
        Ok(BusMessage {
            topic: r.str()?,
            publisher: r.str()?,
            seq: r.u64()?,
            timestamp: r.f64()?,
            payload: r.get()?,
        })
    }
}

/// Recording commands sent by an operator console.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordCommand {
    Start { robot: u32 },
    Stop,
    Mark {
        start_tick: u64,
        end_tick: u64,
        skill: String,
        object: String,
        valid: bool,
    },
}

impl WireCodec for RecordCommand {
    fn write(&self, w: &mut Writer) {
        match self {
            RecordCommand::Start { robot } => {
                w.u8(0);
                w.u32(*robot);
            }
            RecordCommand::Stop => w.u8(1),
            RecordCommand::Mark {
                start_tick,
                end_tick,
                skill,
                object,
                valid,
            } => {
                w.u8(2);
                w.u64(*start_tick);
                w.u64(*end_tick);
                w.str(skill);
                w.str(object);
                w.bool(*valid);
            }
        }
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, BodyError> {
        Ok(match r.u8()? {
            0 => RecordCommand::Start { robot: r.u32()? },
            1 => RecordCommand::Stop,
            2 => RecordCommand::Mark {
                start_tick: r.u64()?,
                end_tick: r.u64()?,
                skill: r.str()?,
                object: r.str()?,
                valid: r.bool()?,
            },
            tag => return Err(BodyError::UnknownTag { what: "record", tag }),
        })
    }
}

/// Every message that travels inside a frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    InferenceRequest(InferenceRequest),
    InferenceResponse(InferenceResponse),
    Publish(BusMessage),
    Subscribe { topic: String },
    Unsubscribe { topic: String },
    TaskSubmit { robot: u32, text: String },
    Teleop { robot: u32, input: TeleopInput },
    Record(RecordCommand),
    Ack,
    Error { message: String },
}

impl Message {
    pub fn kind(&self) -> u8 {
        match self {
            Message::InferenceRequest(_) => 1,
            Message::InferenceResponse(_) => 2,
            Message::Publish(_) => 3,
            Message::Subscribe { .. } => 4,
            Message::Unsubscribe { .. } => 5,
            Message::TaskSubmit { .. } => 6,
            Message::Teleop { .. } => 7,
            Message::Record(_) => 8,
            Message::Ack => 9,
            Message::Error { .. } => 10,
        }
    }
}

/// A message with its correlation id.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub correlation: u64,
    pub message: Message,
}

impl Envelope {
    pub fn new(correlation: u64, message: Message) -> Self {
        Envelope { correlation, message }
    }

    pub fn to_payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(self.message.kind());
        w.u64(self.correlation);
        match &self.message {
            Message::InferenceRequest(m) => w.put(m),
            Message::InferenceResponse(m) => w.put(m),
            Message::Publish(m) => w.put(m),
            Message::Subscribe { topic } | Message::Unsubscribe { topic } => w.str(topic),
            Message::TaskSubmit { robot, text } => {
                w.u32(*robot);
                w.str(text);
            }
            Message::Teleop { robot, input } => {
                w.u32(*robot);
                w.put(input);
            }
            Message::Record(m) => w.put(m),
            Message::Ack => {}
            Message::Error { message } => w.str(message),
        }
        w.into_bytes()
    }

    pub fn from_payload(payload: &[u8]) -> Result<Self, BodyError> {
        let mut r = Reader::new(payload);
        let kind = r.u8()?;
        let correlation = r.u64()?;
        let message = match kind {
            1 => Message::InferenceRequest(r.get()?),
            2 => Message::InferenceResponse(r.get()?),
            3 => Message::Publish(r.get()?),
            4 => Message::Subscribe { topic: r.str()? },
            5 => Message::Unsubscribe { topic: r.str()? },
            6 => Message::TaskSubmit {
                robot: r.u32()?,
                text: r.str()?,
            },
            7 => Message::Teleop {
                robot: r.u32()?,
                input: r.get()?,
            },
            8 => Message::Record(r.get()?),
            9 => Message::Ack,
            10 => Message::Error { message: r.str()? },
            tag => return Err(BodyError::UnknownTag { what: "message", tag }),
        };
        r.finish()?;
        Ok(Envelope { correlation, message })
    }

    pub fn to_frame(&self) -> Result<Vec<u8>, FrameError> {
        encode_frame(&self.to_payload(), DEFAULT_MAX_PAYLOAD)
    }

    /// Decodes one framed envelope from the front of `buf`.
    pub fn from_frame(buf: &[u8]) -> Result<(Self, usize), WireError> {
        let (payload, used) = decode_frame(buf, DEFAULT_MAX_PAYLOAD)?;
        Ok((Envelope::from_payload(payload)?, used))
    }
}
