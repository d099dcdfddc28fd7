//! Binary protocol spoken with external predictor processes.
//!
//! Every message is a frame: a little-endian `u32` payload length followed
//! by the payload. Payloads:
//!
//! * request: `MPRQ`, `u32` id, `u16` width, `u16` height, `width*height`
//!   gray bytes, then the packed mask (`ceil(width*height/8)` bytes,
//!   row-major, most significant bit first, bit set = unknown)
//! * response: `MPRS`, `u32` id, `u16` width, `u16` height, `width*height`
//!   gray bytes
//!
//! All integers are little-endian. On connect the server greets with
//! `MPHELLO` and a `u16` version, either raw or wrapped in a frame.

use std::io::{self, Read, Write};

use crate::grid::GridImage;
use crate::{Error, Result};

pub const REQUEST_MAGIC: &[u8; 4] = b"MPRQ";
pub const RESPONSE_MAGIC: &[u8; 4] = b"MPRS";
pub const HELLO_MAGIC: &[u8; 7] = b"MPHELLO";
pub const PROTOCOL_VERSION: u16 = 1;
/// Frames longer than this are rejected as corrupt.
pub const MAX_FRAME: u32 = 64 << 20;

const HEADER: usize = 12;

fn protocol(msg: impl Into<String>) -> Error {
    Error::Protocol(msg.into())
}

fn stream_error(e: io::Error) -> Error {
    Error::Protocol(format!("stream error: {e}"))
}

/// Packs booleans eight per byte, first element in the high bit.
pub fn pack_mask(mask: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; mask.len().div_ceil(8)];
    for (i, &m) in mask.iter().enumerate() {
        if m {
            out[i / 8] |= 0x80 >> (i % 8);
        }
    }
    out
}

pub fn unpack_mask(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect()
}

fn dims_u16(width: usize, height: usize) -> Result<(u16, u16)> {
    match (u16::try_from(width), u16::try_from(height)) {
        (Ok(w), Ok(h)) => Ok((w, h)),
        _ => Err(protocol(format!("image {width}x{height} exceeds u16 dimensions"))),
    }
}

fn header(magic: &[u8; 4], id: u32, w: u16, h: u16, extra: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + extra);
    out.extend_from_slice(magic);
    out.extend_from_slice(&id.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out
}

fn parse_header(payload: &[u8], magic: &[u8; 4]) -> Result<(u32, usize, usize)> {
    if payload.len() < HEADER {
        return Err(protocol(format!(
            "payload of {} bytes is shorter than a header",
            payload.len()
        )));
    }
    if &payload[..4] != magic {
        return Err(protocol(format!("bad magic {:?}", &payload[..4])));
    }
    let id = u32::from_le_bytes(payload[4..8].try_into().unwrap());
    let w = u16::from_le_bytes(payload[8..10].try_into().unwrap()) as usize;
    let h = u16::from_le_bytes(payload[10..12].try_into().unwrap()) as usize;
    Ok((id, w, h))
}

pub fn encode_request(id: u32, image: &GridImage) -> Result<Vec<u8>> {
    let (w, h) = dims_u16(image.width, image.height)?;
    let mask = pack_mask(&image.mask);
    let mut out = header(REQUEST_MAGIC, id, w, h, image.pixels.len() + mask.len());
    out.extend_from_slice(&image.pixels);
    out.extend_from_slice(&mask);
    Ok(out)
}

pub fn decode_request(payload: &[u8]) -> Result<(u32, GridImage)> {
    let (id, w, h) = parse_header(payload, REQUEST_MAGIC)?;
    let n = w * h;
    let expected = HEADER + n + n.div_ceil(8);
    if payload.len() != expected {
        return Err(protocol(format!("request length {} != {expected}", payload.len())));
    }
    let pixels = payload[HEADER..HEADER + n].to_vec();
    let mask = unpack_mask(&payload[HEADER + n..], n);
    Ok((id, GridImage::new(w, h, pixels, mask)?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub id: u32,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn encode_response(response: &Response) -> Result<Vec<u8>> {
    let (w, h) = dims_u16(response.width, response.height)?;
    if response.pixels.len() != response.width * response.height {
        return Err(protocol("response pixel count does not match its dimensions"));
    }
    let mut out = header(RESPONSE_MAGIC, response.id, w, h, response.pixels.len());
    out.extend_from_slice(&response.pixels);
    Ok(out)
}

pub fn decode_response(payload: &[u8]) -> Result<Response> {
    let (id, width, height) = parse_header(payload, RESPONSE_MAGIC)?;
    if payload.len() != HEADER + width * height {
        return Err(protocol(format!(
            "response length {} != {}",
            payload.len(),
            HEADER + width * height
        )));
    }
    Ok(Response {
        id,
        width,
        height,
        pixels: payload[HEADER..].to_vec(),
    })
}

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> Result<()> {
    let len = u32::try_from(payload.len()).map_err(|_| protocol("frame too long"))?;
    w.write_all(&len.to_le_bytes()).map_err(stream_error)?;
    w.write_all(payload).map_err(stream_error)?;
    w.flush().map_err(stream_error)
}

fn read_payload(r: &mut impl Read, len: u32) -> Result<Vec<u8>> {
    if len > MAX_FRAME {
        return Err(protocol(format!("frame length {len} exceeds limit")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf).map_err(stream_error)?;
    Ok(buf)
}

/// Reads one frame; `None` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(protocol("stream ended inside a frame header")),
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(stream_error(e)),
        }
    }
    read_payload(r, u32::from_le_bytes(len)).map(Some)
}

pub fn hello_bytes() -> [u8; 9] {
    let mut out = [0u8; 9];
    out[..7].copy_from_slice(HELLO_MAGIC);
    out[7..].copy_from_slice(&PROTOCOL_VERSION.to_le_bytes());
    out
}

/// Reads the server greeting, raw or framed, and returns its version.
pub fn read_hello(r: &mut impl Read) -> Result<u16> {
    let mut head = [0u8; 4];
    r.read_exact(&mut head).map_err(stream_error)?;
    let body = if &head == b"MPHE" {
        let mut rest = [0u8; 5];
        r.read_exact(&mut rest).map_err(stream_error)?;
        let mut all = head.to_vec();
        all.extend_from_slice(&rest);
        all
    } else {
        read_payload(r, u32::from_le_bytes(head))?
    };
    if body.len() != 9 || &body[..7] != HELLO_MAGIC {
        return Err(protocol("bad greeting"));
    }
    Ok(u16::from_le_bytes([body[7], body[8]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mask_bits_are_msb_first() {
        let mut mask = vec![false; 10];
        mask[0] = true;
        mask[9] = true;
        assert_eq!(pack_mask(&mask), vec![0x80, 0x40]);
        assert_eq!(unpack_mask(&[0x80, 0x40], 10), mask);
    }

    #[test]
    fn request_layout() {
        let image = GridImage::from_pixels(3, 1, vec![0, 127, 255]).unwrap();
        let p = encode_request(0x01020304, &image).unwrap();
        assert_eq!(&p[..4], b"MPRQ");
        assert_eq!(&p[4..8], &[4, 3, 2, 1]);
        assert_eq!(&p[8..12], &[3, 0, 1, 0]);
        assert_eq!(&p[12..15], &[0, 127, 255]);
        assert_eq!(p[15], 0x40);
        assert_eq!(p.len(), 16);
    }

    #[test]
    fn hello_raw_and_framed() {
        let raw = hello_bytes();
        assert_eq!(read_hello(&mut &raw[..]).unwrap(), 1);
        let mut framed = Vec::new();
        write_frame(&mut framed, &raw).unwrap();
        assert_eq!(read_hello(&mut &framed[..]).unwrap(), 1);
        assert!(read_hello(&mut &b"MPHEYYY\x01\x00"[..]).is_err());
    }

    #[test]
    fn truncated_and_oversized_frames_fail() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"hello").unwrap();
        assert_eq!(read_frame(&mut &buf[..]).unwrap().unwrap(), b"hello");
        assert!(read_frame(&mut &buf[..6]).is_err());
        assert!(read_frame(&mut &buf[..2]).is_err());
        assert_eq!(read_frame(&mut &[][..]).unwrap(), None);
        assert!(read_frame(&mut &u32::MAX.to_le_bytes()[..]).is_err());
    }

    #[test]
    fn response_length_is_checked() {
        let r = Response {
            id: 9,
            width: 2,
            height: 2,
            pixels: vec![1, 2, 3, 4],
        };
        let mut p = encode_response(&r).unwrap();
        assert_eq!(decode_response(&p).unwrap(), r);
        p.pop();
        assert!(decode_response(&p).is_err());
        assert!(decode_response(b"MPRQ\0\0\0\0\x01\0\x01\0\0").is_err());
    }

    proptest! {
        #[test]
        fn request_round_trip(w in 1usize..40, h in 1usize..40, id: u32, seed: u64) {
            let mut rng = crate::seed::rng(seed);
            use rand::Rng;
            let pixels: Vec<u8> = (0..w * h).map(|_| [0u8, 127, 255][rng.random_range(0..3)]).collect();
            let image = GridImage::from_pixels(w, h, pixels).unwrap();
            let payload = encode_request(id, &image).unwrap();
            prop_assert_eq!(payload.len(), 12 + w * h + (w * h).div_ceil(8));
            let (got_id, got) = decode_request(&payload).unwrap();
            prop_assert_eq!(got_id, id);
            prop_assert_eq!(got, image);
        }
    }
}
