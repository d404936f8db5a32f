//! Non-parametric per-anchor motion estimation.
//!
//! Anchors are sampled per frame with FPS. Each anchor queries the *next*
//! frame with a ball query, the neighbors are averaged into a synthetic
//! target, and the motion vector is the target minus the anchor. The last
//! frame has no successor and queries itself instead (clamp policy), which
//! yields a within-frame centroid offset rather than zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{ball_query_point, farthest_point_sample, sub, NeighborGroup, Point3, PointSet};
use crate::video::PointCloudVideo;

/// Direction of the estimated motion. `Reverse` negates every vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MotionSign {
    Forward,
    Reverse,
}

impl MotionSign {
    pub fn value(self) -> f64 {
        match self {
            MotionSign::Forward => 1.0,
            MotionSign::Reverse => -1.0,
        }
    }
}

/// Per-frame FPS anchors. Indexed `[frame][anchor]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorTrack {
    pub anchor_indices: Vec<Vec<usize>>,
    pub anchor_coords: Vec<Vec<Point3>>,
}

impl AnchorTrack {
    pub fn num_anchors(&self) -> usize {
        self.anchor_indices.first().map_or(0, Vec::len)
    }

    pub fn num_frames(&self) -> usize {
        self.anchor_indices.len()
    }

    pub fn frame_points(&self, t: usize) -> Result<PointSet> {
        PointSet::new(self.anchor_coords[t].clone())
    }
}

/// Neighbor centroids in the successor frame, `[frame][anchor]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTarget {
    pub coords: Vec<Vec<Point3>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    /// `[frame][anchor]` displacement, already multiplied by `sign`.
    pub vectors: Vec<Vec<Point3>>,
    pub sign: MotionSign,
    /// Marks vectors whose query ball was empty.
    pub fallback: Vec<Vec<bool>>,
}

impl MotionField {
    pub fn zeros(frames: usize, anchors: usize, sign: MotionSign) -> Self {
        Self {
            vectors: vec![vec![[0.0; 3]; anchors]; frames],
            sign,
            fallback: vec![vec![false; anchors]; frames],
        }
    }
}

/// Frame queried by anchors of frame `t`.
pub fn successor(t: usize, frames: usize) -> usize {
    (t + 1).min(frames - 1)
}

pub fn select_anchors(video: &PointCloudVideo, m: usize, seed: u64) -> Result<AnchorTrack> {
    let mut anchor_indices = Vec::with_capacity(video.num_frames());
    let mut anchor_coords = Vec::with_capacity(video.num_frames());
    for frame in video.frames() {
        let idx = farthest_point_sample(frame, m, seed)?;
        anchor_coords.push(idx.iter().map(|&i| frame.points()[i]).collect());
        anchor_indices.push(idx);
    }
    Ok(AnchorTrack {
        anchor_indices,
        anchor_coords,
    })
}

fn check_track(video: &PointCloudVideo, anchors: &AnchorTrack) -> Result<()> {
    if anchors.num_frames() != video.num_frames() {
        return Err(Error::Video(format!(
            "anchor track has {} frames, video has {}",
            anchors.num_frames(),
            video.num_frames()
        )));
    }
    Ok(())
}

/// Ball query of every anchor of frame `t` into frame `successor(t)`.
pub fn cross_frame_query(
    video: &PointCloudVideo,
    anchors: &AnchorTrack,
    k: usize,
    radius: f64,
) -> Result<Vec<Vec<NeighborGroup>>> {
    check_track(video, anchors)?;
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::Radius(radius));
    }
    if k == 0 {
        return Err(Error::ZeroNeighbors);
    }
    let frames = video.num_frames();
    Ok((0..frames)
        .map(|t| {
            let target = video.frame(successor(t, frames)).points();
            anchors.anchor_coords[t]
                .iter()
                .enumerate()
                .map(|(i, c)| ball_query_point(c, i, target, radius, k))
                .collect()
        })
        .collect())
}

/// Mean of the absolute neighbor coordinates; replicated pads count.
pub fn group_centroid(group: &NeighborGroup, target: &[Point3]) -> Point3 {
    let mut acc = [0.0; 3];
    for &j in &group.neighbor_indices {
        for d in 0..3 {
            acc[d] += target[j][d];
        }
    }
    let k = group.neighbor_indices.len() as f64;
    [acc[0] / k, acc[1] / k, acc[2] / k]
}

pub fn aggregate_target(groups: &[Vec<NeighborGroup>], video: &PointCloudVideo) -> SyntheticTarget {
    let frames = video.num_frames();
    let coords = groups
        .iter()
        .enumerate()
        .map(|(t, row)| {
            let target = video.frame(successor(t, frames)).points();
            row.iter().map(|g| group_centroid(g, target)).collect()
        })
        .collect();
    SyntheticTarget { coords }
}

pub fn extract_motion(
    targets: &SyntheticTarget,
    anchors: &AnchorTrack,
    sign: MotionSign,
) -> Result<MotionField> {
    if targets.coords.len() != anchors.num_frames()
        || targets
            .coords
            .iter()
            .zip(&anchors.anchor_coords)
            .any(|(a, b)| a.len() != b.len())
    {
        return Err(Error::Shape {
            op: "extract_motion",
            left: vec![targets.coords.len()],
            right: vec![anchors.num_frames()],
        });
    }
    let s = sign.value();
    let vectors = targets
        .coords
        .iter()
        .zip(&anchors.anchor_coords)
        .map(|(e, d)| {
            e.iter()
                .zip(d)
                .map(|(e, d)| {
                    let x = sub(e, d);
                    [s * x[0], s * x[1], s * x[2]]
                })
                .collect()
        })
        .collect();
    Ok(MotionField {
        vectors,
        sign,
        fallback: vec![vec![false; anchors.num_anchors()]; anchors.num_frames()],
    })
}

/// Anchors of one frame and their motion towards `next`.
pub fn frame_motion(
    anchors: &[Point3],
    next: &[Point3],
    k: usize,
    radius: f64,
    sign: MotionSign,
) -> (Vec<Point3>, Vec<bool>) {
    let s = sign.value();
    anchors
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let g = ball_query_point(c, i, next, radius, k);
            let e = group_centroid(&g, next);
            let x = sub(&e, c);
            ([s * x[0], s * x[1], s * x[2]], g.fallback)
        })
        .unzip()
}

/// Full imitator: anchors, cross-frame query, aggregation, subtraction.
pub fn imitate(
    video: &PointCloudVideo,
    m: usize,
    k: usize,
    radius: f64,
    seed: u64,
    sign: MotionSign,
) -> Result<(AnchorTrack, MotionField)> {
    let anchors = select_anchors(video, m, seed)?;
    let groups = cross_frame_query(video, &anchors, k, radius)?;
    let targets = aggregate_target(&groups, video);
    let mut motion = extract_motion(&targets, &anchors, sign)?;
    motion.fallback = groups
        .iter()
        .map(|row| row.iter().map(|g| g.fallback).collect())
        .collect();
    Ok((anchors, motion))
}
