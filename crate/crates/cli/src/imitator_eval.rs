//! Next-frame prediction quality of the motion imitator.
//!
//! For frame `t`, the first stage's anchor groups are moved by each anchor's
//! motion vector and compared with frame `t + 1` by chamfer distance. The
//! baseline is the same groups left in place.

use pvnext_core::geom::{ball_query_point, chamfer_distance, farthest_point_sample, Point3, PointSet};
use pvnext_core::imitator::{frame_motion, MotionSign};
use pvnext_core::model::{stage_seed, StageConfig};
use pvnext_core::video::PointCloudVideo;
use pvnext_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FrameChamfer {
    pub t: usize,
    pub imitator: f64,
    pub baseline: f64,
    pub mean_motion_norm: f64,
    pub fallback_anchors: usize,
}

pub fn imitator_chamfer(
    video: &PointCloudVideo,
    stage: &StageConfig,
    k: usize,
    sign: MotionSign,
    seed: u64,
) -> Result<Vec<FrameChamfer>> {
    stage.validate()?;
    let frames = video.num_frames();
    if frames < 2 {
        return Err(Error::Video(format!("need at least 2 frames, got {frames}")));
    }
    if k == 0 {
        return Err(Error::ZeroNeighbors);
    }
    let m = stage.anchors_for(video.num_points());
    let seed = stage_seed(seed, 0);
    let mut out = Vec::with_capacity(frames - 1);
    for t in 0..frames - 1 {
        let frame = video.frame(t);
        let pts = frame.points();
        let next = video.frame(t + 1);
        let anchors: Vec<Point3> = farthest_point_sample(frame, m, seed)?.iter().map(|&i| pts[i]).collect();
        let (motion, fallback) = frame_motion(&anchors, next.points(), k, stage.radius, sign);
        let mut moved = Vec::with_capacity(m * stage.nsamples);
        let mut still = Vec::with_capacity(m * stage.nsamples);
        for (i, (c, x)) in anchors.iter().zip(&motion).enumerate() {
            let g = ball_query_point(c, i, pts, stage.radius, stage.nsamples);
            for &j in &g.neighbor_indices {
                let p = pts[j];
                still.push(p);
                moved.push([p[0] + x[0], p[1] + x[1], p[2] + x[2]]);
            }
        }
        let norm = motion
            .iter()
            .map(|x| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt())
            .sum::<f64>()
            / m as f64;
        out.push(FrameChamfer {
            t,
            imitator: chamfer_distance(&PointSet::new(moved)?, next),
            baseline: chamfer_distance(&PointSet::new(still)?, next),
            mean_motion_norm: norm,
            fallback_anchors: fallback.iter().filter(|f| **f).count(),
        });
    }
    Ok(out)
}
