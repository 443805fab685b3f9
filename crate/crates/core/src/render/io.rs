//! Binary encodings of the per-frame buffers.
//!
//! * colour: PPM `P6`, maxval 255
//! * depth: PFM `Pf`, little-endian (scale `-1.0`), rows bottom-to-top, `+inf` stored as `3.4e38`
//! * instance: PGM `P5`, maxval 65535, big-endian samples
//! * flow: `FLO1`, width and height as u32 LE, row-major `(du, dv)` f32 LE pairs, then
//!   one validity byte per pixel

use std::io::{BufRead, Read};

use super::FrameBuffers;
use crate::{Error, Result};

pub const PFM_INFINITY: f32 = 3.4e38;
pub const FLOW_MAGIC: &[u8; 4] = b"FLO1";

/// Which buffer a file holds; also names its directory and extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Color,
    Depth,
    Instance,
    Flow,
}

impl Pass {
    pub const ALL: [Pass; 4] = [Pass::Color, Pass::Depth, Pass::Instance, Pass::Flow];

    pub fn dir(self) -> &'static str {
        match self {
            Pass::Color => "color",
            Pass::Depth => "depth",
            Pass::Instance => "instance",
            Pass::Flow => "flow",
        }
    }

    pub fn ext(self) -> &'static str {
        match self {
            Pass::Color => "ppm",
            Pass::Depth => "pfm",
            Pass::Instance => "pgm",
            Pass::Flow => "flo",
        }
    }

    /// `{pass}/{frame:06}.{ext}`
    pub fn file_name(self, frame: usize) -> String {
        format!("{}/{:06}.{}", self.dir(), frame, self.ext())
    }

    pub fn encode(self, fb: &FrameBuffers) -> Vec<u8> {
        match self {
            Pass::Color => encode_ppm(fb.width, fb.height, &fb.color),
            Pass::Depth => encode_pfm(fb.width, fb.height, &fb.depth),
            Pass::Instance => encode_pgm16(fb.width, fb.height, &fb.instance),
            Pass::Flow => encode_flow(fb.width, fb.height, &fb.flow, &fb.flow_valid),
        }
    }
}

pub fn encode_ppm(width: usize, height: usize, color: &[[f32; 3]]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.reserve(width * height * 3);
    for px in color {
        for &c in px {
            out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

pub fn encode_pfm(width: usize, height: usize, depth: &[f32]) -> Vec<u8> {
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(width * height * 4);
    for row in (0..height).rev() {
        for &d in &depth[row * width..(row + 1) * width] {
            let v = if d.is_finite() { d } else { PFM_INFINITY };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn encode_pgm16(width: usize, height: usize, ids: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(width * height * 2);
    for &id in ids {
        out.extend_from_slice(&id.to_be_bytes());
    }
    out
}

pub fn encode_flow(width: usize, height: usize, flow: &[[f32; 2]], valid: &[bool]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + width * height * 9);
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    for f in flow {
        out.extend_from_slice(&f[0].to_le_bytes());
        out.extend_from_slice(&f[1].to_le_bytes());
    }
    out.extend(valid.iter().map(|&v| v as u8));
    out
}

fn bad(what: &str) -> Error {
    Error::Mismatch(format!("malformed {what} data"))
}

/// Reads a netpbm-style header of `n` whitespace-separated tokens after the magic.
fn read_header(data: &[u8], magic: &str, n: usize) -> Result<(Vec<String>, usize)> {
    let mut cursor = std::io::Cursor::new(data);
    let mut tokens = Vec::new();
    let mut line = String::new();
    while tokens.len() < n + 1 {
        line.clear();
        if cursor.read_line(&mut line).map_err(|_| bad(magic))? == 0 {
            return Err(bad(magic));
        }
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    if tokens[0] != magic {
        return Err(bad(magic));
    }
    Ok((tokens[1..].to_vec(), cursor.position() as usize))
}

fn dims(tokens: &[String], what: &str) -> Result<(usize, usize)> {
    let w = tokens[0].parse().map_err(|_| bad(what))?;
    let h = tokens[1].parse().map_err(|_| bad(what))?;
    Ok((w, h))
}

pub fn decode_ppm(data: &[u8]) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    let (tok, off) = read_header(data, "P6", 3)?;
    let (w, h) = dims(&tok, "P6")?;
    let body = data.get(off..off + w * h * 3).ok_or_else(|| bad("P6"))?;
    Ok((w, h, body.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()))
}

/// Returns depth rows top-to-bottom with the infinity sentinel decoded.
pub fn decode_pfm(data: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let (tok, off) = read_header(data, "Pf", 3)?;
    let (w, h) = dims(&tok, "Pf")?;
    let body = data.get(off..off + w * h * 4).ok_or_else(|| bad("Pf"))?;
    let raw: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .map(|v| if v >= PFM_INFINITY { f32::INFINITY } else { v })
        .collect();
    let mut out = Vec::with_capacity(w * h);
    for row in (0..h).rev() {
        out.extend_from_slice(&raw[row * w..(row + 1) * w]);
    }
    Ok((w, h, out))
}

pub fn decode_pgm16(data: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let (tok, off) = read_header(data, "P5", 3)?;
    let (w, h) = dims(&tok, "P5")?;
    let body = data.get(off..off + w * h * 2).ok_or_else(|| bad("P5"))?;
    Ok((w, h, body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()))
}

/// `(width, height, flow, validity)` of an encoded flow file.
pub type DecodedFlow = (usize, usize, Vec<[f32; 2]>, Vec<bool>);

pub fn decode_flow(data: &[u8]) -> Result<DecodedFlow> {
    let mut r = data;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("flow"))?;
    if &magic != FLOW_MAGIC {
        return Err(bad("flow"));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(|_| bad("flow"))?;
    let w = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word).map_err(|_| bad("flow"))?;
    let h = u32::from_le_bytes(word) as usize;
    let n = w * h;
    if r.len() != n * 9 {
        return Err(bad("flow"));
    }
    let (vec_bytes, valid_bytes) = r.split_at(n * 8);
    let flow = vec_bytes
        .chunks_exact(8)
        .map(|c| [f32::from_le_bytes([c[0], c[1], c[2], c[3]]), f32::from_le_bytes([c[4], c[5], c[6], c[7]])])
        .collect();
    Ok((w, h, flow, valid_bytes.iter().map(|&b| b != 0).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pfm_header_and_sentinel() {
        let bytes = encode_pfm(2, 2, &[1.0, f32::INFINITY, 3.0, 4.0]);
        assert!(bytes.starts_with(b"Pf\n2 2\n-1.0\n"));
        // bottom row first
        let body = &bytes[12..];
        assert_eq!(f32::from_le_bytes(body[0..4].try_into().unwrap()), 3.0);
        assert_eq!(f32::from_le_bytes(body[12..16].try_into().unwrap()), PFM_INFINITY);
        let (_, _, back) = decode_pfm(&bytes).unwrap();
        assert_eq!(back, vec![1.0, f32::INFINITY, 3.0, 4.0]);
    }

    #[test]
    fn ppm_quantizes() {
        let bytes = encode_ppm(1, 1, &[[0.0, 0.5, 1.0]]);
        assert_eq!(bytes, b"P6\n1 1\n255\n\x00\x80\xff");
    }

    proptest! {
        #[test]
        fn instance_and_flow_round_trip(ids in prop::collection::vec(any::<u16>(), 12),
                                        flow in prop::collection::vec((-50f32..50.0, -50f32..50.0), 12),
                                        valid in prop::collection::vec(any::<bool>(), 12)) {
            let (_, _, back) = decode_pgm16(&encode_pgm16(4, 3, &ids)).unwrap();
            prop_assert_eq!(back, ids);
            let flow: Vec<[f32; 2]> = flow.into_iter().map(|(a, b)| [a, b]).collect();
            let (w, h, f, v) = decode_flow(&encode_flow(4, 3, &flow, &valid)).unwrap();
            prop_assert_eq!((w, h), (4, 3));
            prop_assert_eq!(f, flow);
            prop_assert_eq!(v, valid);
        }
    }
}
