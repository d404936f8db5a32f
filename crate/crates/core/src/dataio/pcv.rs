//! PCV point cloud video container.
//!
//! Header, little-endian: `b"PCV1"`, `u16` version, then `u32` T, N,
//! video count and class count (22 bytes). Each video follows as a `u32`
//! label and `T * N * 3` `f32` coordinates, frame-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::video::PointCloudVideo;

pub const PCV_MAGIC: [u8; 4] = *b"PCV1";
pub const PCV_VERSION: u16 = 1;
pub const PCV_HEADER_BYTES: usize = 22;

/// Labeled videos sharing one frame count and point count.
#[derive(Debug, Clone, PartialEq)]
pub struct PcvDataset {
    pub frames: usize,
    pub points: usize,
    pub num_classes: usize,
    pub videos: Vec<PointCloudVideo>,
}

impl PcvDataset {
    pub fn new(frames: usize, points: usize, num_classes: usize, videos: Vec<PointCloudVideo>) -> Result<Self> {
        if frames == 0 || points == 0 {
            return Err(Error::Config(format!("dataset needs T, N > 0, got T={frames} N={points}")));
        }
        for (i, v) in videos.iter().enumerate() {
            if v.num_frames() != frames || v.num_points() != points {
                return Err(Error::Video(format!(
                    "video {i} is {}x{}, dataset is {frames}x{points}",
                    v.num_frames(),
                    v.num_points()
                )));
            }
            match v.label {
                Some(l) if l < num_classes => {}
                other => {
                    return Err(Error::Video(format!(
                        "video {i} label {other:?} outside {num_classes} classes"
                    )))
                }
            }
        }
        Ok(Self {
            frames,
            points,
            num_classes,
            videos,
        })
    }

    pub fn byte_len(&self) -> usize {
        pcv_byte_len(self.frames, self.points, self.videos.len())
    }
}

pub fn pcv_byte_len(frames: usize, points: usize, videos: usize) -> usize {
    PCV_HEADER_BYTES + videos * (4 + frames * points * 12)
}

fn u32_field(v: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| Error::Config(format!("{what} {v} does not fit in u32")))
}

pub fn encode_pcv(ds: &PcvDataset) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(ds.byte_len());
    out.extend_from_slice(&PCV_MAGIC);
    out.extend_from_slice(&PCV_VERSION.to_le_bytes());
    out.extend_from_slice(&u32_field(ds.frames, "frame count")?);
    out.extend_from_slice(&u32_field(ds.points, "point count")?);
    out.extend_from_slice(&u32_field(ds.videos.len(), "video count")?);
    out.extend_from_slice(&u32_field(ds.num_classes, "class count")?);
    for v in &ds.videos {
        out.extend_from_slice(&u32_field(v.label.unwrap_or(0), "label")?);
        for f in v.frames() {
            for p in f.points() {
                for c in p {
                    out.extend_from_slice(&(*c as f32).to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

fn le_u32(b: &[u8], at: usize) -> usize {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes")) as usize
}

/// Parses a whole file; nothing is returned unless every check passes.
pub fn decode_pcv(bytes: &[u8]) -> Result<PcvDataset> {
    if bytes.len() < PCV_HEADER_BYTES {
        if bytes.len() >= 4 && bytes[..4] != PCV_MAGIC {
            return Err(Error::BadMagic {
                expected: PCV_MAGIC,
                found: bytes[..4].try_into().expect("4 bytes"),
            });
        }
        return Err(Error::Truncated {
            expected: PCV_HEADER_BYTES,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != PCV_MAGIC {
        return Err(Error::BadMagic {
            expected: PCV_MAGIC,
            found: magic,
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != PCV_VERSION {
        return Err(Error::Version {
            expected: PCV_VERSION,
            found: version,
        });
    }
    let (frames, points, count, classes) = (le_u32(bytes, 6), le_u32(bytes, 10), le_u32(bytes, 14), le_u32(bytes, 18));
    let expected = (frames as u128 * points as u128 * 12 + 4) * count as u128 + PCV_HEADER_BYTES as u128;
    if (bytes.len() as u128) < expected {
        return Err(Error::Truncated {
            expected: expected.min(usize::MAX as u128) as usize,
            found: bytes.len(),
        });
    }
    if (bytes.len() as u128) > expected {
        return Err(Error::TrailingData {
            expected: expected as usize,
            found: bytes.len(),
        });
    }
    let mut videos = Vec::with_capacity(count);
    let mut pos = PCV_HEADER_BYTES;
    let read_f32 = |at: usize| f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as f64;
    for _ in 0..count {
        let label = le_u32(bytes, pos);
        pos += 4;
        let mut video = Vec::with_capacity(frames);
        for _ in 0..frames {
            let mut frame: Vec<Point3> = Vec::with_capacity(points);
            for _ in 0..points {
                frame.push([read_f32(pos), read_f32(pos + 4), read_f32(pos + 8)]);
                pos += 12;
            }
            video.push(frame);
        }
        videos.push(PointCloudVideo::from_points(video, Some(label))?);
    }
    PcvDataset::new(frames, points, classes, videos).map_err(|e| Error::Malformed(e.to_string()))
}

pub fn write_pcv(path: &Path, ds: &PcvDataset) -> Result<()> {
    fs::write(path, encode_pcv(ds)?)?;
    Ok(())
}

pub fn read_pcv(path: &Path) -> Result<PcvDataset> {
    decode_pcv(&fs::read(path)?)
}
