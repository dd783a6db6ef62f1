//! Length-prefixed framing: `u32 BE length ‖ body`.

use std::collections::VecDeque;
use std::io::{self, Read, Write};

use thiserror::Error;

pub const LENGTH_PREFIX: usize = 4;
pub const DEFAULT_MAX_FRAME: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame of {len} bytes exceeds maximum of {max}")]
    TooLarge { len: usize, max: usize },
    #[error("connection closed mid-frame")]
    UnexpectedEof,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub fn encode_frame(body: &[u8], max: usize) -> Result<Vec<u8>, FrameError> {
    if body.len() > max {
        return Err(FrameError::TooLarge { len: body.len(), max });
    }
    let mut out = Vec::with_capacity(LENGTH_PREFIX + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    Ok(out)
}

/// Reassembles frames from arbitrary byte chunks without touching I/O.
///
/// The declared length is checked as soon as the prefix is complete, so an
/// oversized frame is refused before any of its body is buffered.
#[derive(Debug)]
pub struct FrameDecoder {
    max: usize,
    buf: Vec<u8>,
    ready: VecDeque<Vec<u8>>,
    poisoned: bool,
}

impl FrameDecoder {
    pub fn new(max: usize) -> Self {
        FrameDecoder {
            max,
            buf: Vec::new(),
            ready: VecDeque::new(),
            poisoned: false,
        }
    }

    pub fn push(&mut self, mut bytes: &[u8]) -> Result<(), FrameError> {
        if self.poisoned {
            return Err(FrameError::TooLarge { len: 0, max: self.max });
        }
        while !bytes.is_empty() {
            if self.buf.len() < LENGTH_PREFIX {
                let n = (LENGTH_PREFIX - self.buf.len()).min(bytes.len());
                self.buf.extend_from_slice(&bytes[..n]);
                bytes = &bytes[n..];
                if self.buf.len() == LENGTH_PREFIX {
                    let len = self.declared();
                    if len > self.max {
                        self.poisoned = true;
                        return Err(FrameError::TooLarge { len, max: self.max });
                    }
                    self.buf.reserve_exact(len);
                }
            }
            if self.buf.len() >= LENGTH_PREFIX {
                let want = LENGTH_PREFIX + self.declared() - self.buf.len();
                let n = want.min(bytes.len());
                self.buf.extend_from_slice(&bytes[..n]);
                bytes = &bytes[n..];
                if self.buf.len() == LENGTH_PREFIX + self.declared() {
                    let body = self.buf.split_off(LENGTH_PREFIX);
                    self.buf.clear();
                    self.ready.push_back(body);
                }
            }
        }
        Ok(())
    }

    pub fn pop(&mut self) -> Option<Vec<u8>> {
        self.ready.pop_front()
    }

    /// Bytes of an incomplete frame currently held.
    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    fn declared(&self) -> usize {
        u32::from_be_bytes(self.buf[..LENGTH_PREFIX].try_into().expect("4")) as usize
    }
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8], max: usize) -> Result<(), FrameError> {
    w.write_all(&encode_frame(body, max)?)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. `Ok(None)` means the peer closed cleanly between frames.
pub fn read_frame<R: Read>(r: &mut R, max: usize) -> Result<Option<Vec<u8>>, FrameError> {
    let mut prefix = [0u8; LENGTH_PREFIX];
    let mut got = 0;
    while got < LENGTH_PREFIX {
        match r.read(&mut prefix[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(FrameError::UnexpectedEof),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(prefix) as usize;
    if len > max {
        return Err(FrameError::TooLarge { len, max });
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::UnexpectedEof,
        _ => FrameError::Io(e),
    })?;
    Ok(Some(body))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn roundtrip_through_reader() {
        let mut wire = Vec::new();
        write_frame(&mut wire, b"hello", 100).unwrap();
        write_frame(&mut wire, b"", 100).unwrap();
        let mut r = &wire[..];
        assert_eq!(read_frame(&mut r, 100).unwrap().unwrap(), b"hello");
        assert_eq!(read_frame(&mut r, 100).unwrap().unwrap(), b"");
        assert!(read_frame(&mut r, 100).unwrap().is_none());
    }

    #[test]
    fn oversized_rejected_before_body() {
        let mut d = FrameDecoder::new(10);
        let err = d.push(&11u32.to_be_bytes()).unwrap_err();
        assert!(matches!(err, FrameError::TooLarge { len: 11, max: 10 }));
        assert_eq!(d.buffered(), 4);
        assert!(d.push(b"x").is_err());

        let mut r = &[0xFF, 0xFF, 0xFF, 0xFF][..];
        assert!(matches!(read_frame(&mut r, 10), Err(FrameError::TooLarge { .. })));
    }

    #[test]
    fn truncated_stream() {
        let mut r = &[0, 0, 0, 5, 1, 2][..];
        assert!(matches!(read_frame(&mut r, 10), Err(FrameError::UnexpectedEof)));
        let mut r = &[0, 0][..];
        assert!(matches!(read_frame(&mut r, 10), Err(FrameError::UnexpectedEof)));
    }

    #[test]
    fn encode_refuses_large_body() {
        assert!(encode_frame(&[0; 11], 10).is_err());
    }

    proptest! {
        #[test]
        fn decoder_reassembles_any_chunking(
            bodies in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..300), 1..6),
            cuts in proptest::collection::vec(1usize..50, 1..40),
        ) {
            let mut wire = Vec::new();
            for b in &bodies {
                wire.extend(encode_frame(b, 1000).unwrap());
            }
            let mut d = FrameDecoder::new(1000);
            let mut rest = &wire[..];
            let mut out = Vec::new();
            for c in cuts.iter().cycle() {
                if rest.is_empty() { break; }
                let n = (*c).min(rest.len());
                d.push(&rest[..n]).unwrap();
                rest = &rest[n..];
                while let Some(f) = d.pop() { out.push(f); }
            }
            prop_assert_eq!(out, bodies);
            prop_assert_eq!(d.buffered(), 0);
        }
    }
}
