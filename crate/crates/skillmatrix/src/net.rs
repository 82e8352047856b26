//! Blocking frame IO over byte streams.

use std::io::{self, ErrorKind, Read, Write};

use skillmatrix_core::wire::{decode_frame, BodyError, Envelope, FrameError, DEFAULT_MAX_PAYLOAD, HEADER_LEN};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("frame: {0}")]
    Frame(#[from] FrameError),
    #[error("body: {0}")]
    Body(#[from] BodyError),
    #[error("connection closed mid-frame")]
    Truncated,
}

impl NetError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, NetError::Io(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
    }
}

fn fill<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool, NetError> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(false),
            Ok(0) => return Err(NetError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

/// Reads one frame payload. `Ok(None)` is a clean end of stream.
pub fn read_payload<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, NetError> {
    let mut header = [0u8; HEADER_LEN];
    if !fill(r, &mut header)? {
        return Ok(None);
    }
    let needed = match decode_frame(&header, DEFAULT_MAX_PAYLOAD) {
        Ok(_) => 0,
        Err(FrameError::Incomplete { needed }) => needed,
        Err(e) => return Err(e.into()),
    };
    let mut payload = vec![0u8; needed];
    if !fill(r, &mut payload)? && needed > 0 {
        return Err(NetError::Truncated);
    }
    Ok(Some(payload))
}

pub fn read_envelope<R: Read>(r: &mut R) -> Result<Option<Envelope>, NetError> {
    match read_payload(r)? {
        Some(p) => Ok(Some(Envelope::from_payload(&p)?)),
        None => Ok(None),
    }
}

pub fn write_envelope<W: Write>(w: &mut W, env: &Envelope) -> Result<(), NetError> {
    w.write_all(&env.to_frame()?)?;
    w.flush()?;
    Ok(())
}

/// Decodes a whole frame held in one buffer, as received over a websocket.
pub fn envelope_from_bytes(buf: &[u8]) -> Result<Envelope, NetError> {
    let (payload, used) = decode_frame(buf, DEFAULT_MAX_PAYLOAD)?;
    if used != buf.len() {
        return Err(NetError::Body(BodyError::Trailing(buf.len() - used)));
    }
    Ok(Envelope::from_payload(payload)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use skillmatrix_core::wire::Message;

    #[test]
    fn stream_roundtrip_and_eof() {
        let a = Envelope::new(7, Message::Ack);
        let b = Envelope::new(8, Message::Subscribe { topic: "/x".into() });
        let mut buf = Vec::new();
        write_envelope(&mut buf, &a).unwrap();
        write_envelope(&mut buf, &b).unwrap();
        let mut r = &buf[..];
        assert_eq!(read_envelope(&mut r).unwrap(), Some(a));
        assert_eq!(read_envelope(&mut r).unwrap(), Some(b));
        assert_eq!(read_envelope(&mut r).unwrap(), None);
    }

    #[test]
    fn cut_stream_is_truncated() {
        let mut buf = Vec::new();
        write_envelope(&mut buf, &Envelope::new(1, Message::Ack)).unwrap();
        buf.pop();
        assert!(matches!(read_envelope(&mut &buf[..]), Err(NetError::Truncated)));
    }

    #[test]
    fn garbage_is_corruption() {
        let buf = [0u8; 12];
        assert!(matches!(read_envelope(&mut &buf[..]), Err(NetError::Frame(FrameError::BadMagic))));
    }
}
