//! Local occlusion and temporal resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{knn_point, Point3, PointSet};
use crate::video::PointCloudVideo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropCenter {
    /// A fresh random center in every frame.
    #[default]
    PerFrame,
    /// One center index drawn once and reused in every frame.
    PerVideo,
}

fn drop_frame(frame: &PointSet, center: usize, removed: usize, rng: &mut ChaCha8Rng) -> Result<PointSet> {
    let pts = frame.points();
    let n = pts.len();
    if removed == 0 {
        return Ok(frame.clone());
    }
    let mut gone = vec![false; n];
    for j in knn_point(&pts[center], pts, removed) {
        gone[j] = true;
    }
    let survivors: Vec<Point3> = pts.iter().zip(&gone).filter(|(_, g)| !**g).map(|(p, _)| *p).collect();
    let mut out = survivors.clone();
    while out.len() < n {
        out.push(survivors[rng.random_range(0..survivors.len())]);
    }
    PointSet::new(out)
}

/// Removes the `floor(ratio * N)` points nearest a random center (the center
/// included) and refills the frame by resampling survivors with replacement.
pub fn drop_local(video: &PointCloudVideo, ratio: f64, seed: u64) -> Result<PointCloudVideo> {
    drop_local_with(video, ratio, seed, DropCenter::PerFrame)
}

pub fn drop_local_with(video: &PointCloudVideo, ratio: f64, seed: u64, mode: DropCenter) -> Result<PointCloudVideo> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("drop ratio must lie in (0, 1), got {ratio}")));
    }
    let n = video.num_points();
    let removed = (ratio * n as f64).floor() as usize;
    if removed >= n {
        return Err(Error::Config(format!("drop ratio {ratio} leaves no survivors of {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared = rng.random_range(0..n);
    let mut frames = Vec::with_capacity(video.num_frames());
    for f in video.frames() {
        let center = match mode {
            DropCenter::PerFrame => rng.random_range(0..n),
            DropCenter::PerVideo => shared,
        };
        frames.push(drop_frame(f, center, removed, &mut rng)?);
    }
    let mut out = PointCloudVideo::new(frames, video.label)?;
    out.frame_interval = video.frame_interval;
    Ok(out)
}

/// Frames `offset, offset + step, ...`, `length` of them.
pub fn temporal_subsample(video: &PointCloudVideo, step: usize, length: usize, offset: usize) -> Result<PointCloudVideo> {
    let frames = video.num_frames();
    if step == 0 || length == 0 {
        return Err(Error::Config("subsample step and length must be positive".into()));
    }
    let last = (length - 1)
        .checked_mul(step)
        .and_then(|s| s.checked_add(offset))
        .filter(|&l| l < frames)
        .ok_or_else(|| {
            Error::Config(format!(
                "offset {offset} + step {step} * (length {length} - 1) exceeds {frames} frames"
            ))
        })?;
    let picked = (offset..=last).step_by(step).map(|t| video.frame(t).clone()).collect();
    let mut out = PointCloudVideo::new(picked, video.label)?;
    out.frame_interval = video.frame_interval * step as f64;
    Ok(out)
}
