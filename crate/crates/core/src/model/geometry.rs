//! Parameter-free part of a stage: anchors, motion and anchor groups.
//!
//! Geometry depends only on coordinates and the seed, never on weights, so
//! it can be computed once per video and reused across training epochs.

use rayon::prelude::*;

use super::config::{ModelConfig, StageConfig};
use crate::error::{Error, Result};
use crate::geom::{ball_query_point, farthest_point_sample, sub, NeighborGroup, Point3};
use crate::imitator::{frame_motion, successor, AnchorTrack, MotionField, MotionSign};
use crate::probe::{GroupCapture, Probe};
use crate::video::PointCloudVideo;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImitatorSettings {
    pub enabled: bool,
    pub k: usize,
    pub sign: MotionSign,
}

impl ImitatorSettings {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        Self {
            enabled: cfg.imitator_enabled,
            k: cfg.imitator_k,
            sign: cfg.motion_sign,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeometryOptions {
    pub seed: u64,
    /// Compute frames on the rayon pool. Output is identical either way.
    pub parallel: bool,
    /// Run the imitator but replace its output with zeros.
    pub force_zero_motion: bool,
}

impl GeometryOptions {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// FPS seed for a stage; stage 0 uses the run seed unchanged.
pub fn stage_seed(seed: u64, stage: usize) -> u64 {
    seed ^ (stage as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageGeometry {
    pub stage: usize,
    pub m_in: usize,
    pub nsamples: usize,
    pub anchors: AnchorTrack,
    pub motion: MotionField,
    /// `[frame][anchor]` groups into the same frame of the stage input.
    pub groups: Vec<Vec<NeighborGroup>>,
    /// Virtual-frame member coordinates `H'`, `[frame][anchor][member][xyz]`.
    pub shifted_xyz: Vec<f64>,
    /// Row of each member in the stage-input feature matrix (`t * m_in + j`).
    pub member_rows: Vec<usize>,
    /// Scale applied to `shifted_xyz` when it enters the member MLP.
    pub coord_scale: f64,
}

impl StageGeometry {
    pub fn frames(&self) -> usize {
        self.anchors.num_frames()
    }

    pub fn m_out(&self) -> usize {
        self.anchors.num_anchors()
    }

    pub fn members(&self) -> usize {
        self.member_rows.len()
    }

    /// Anchor coordinates, the next stage's input points.
    pub fn output_coords(&self) -> Result<PointCloudVideo> {
        PointCloudVideo::from_points(self.anchors.anchor_coords.clone(), None)
    }
}

/// `H'[i, j] = H[i, j] + X[i]` for `k` members per anchor.
pub fn synthesize_virtual_frame(relative: &[Point3], k: usize, motion: &[Point3]) -> Result<Vec<Point3>> {
    if k == 0 || relative.len() != motion.len() * k {
        return Err(Error::Shape {
            op: "synthesize_virtual_frame",
            left: vec![relative.len()],
            right: vec![motion.len(), k],
        });
    }
    Ok(relative
        .chunks(k)
        .zip(motion)
        .flat_map(|(group, x)| {
            group
                .iter()
                .map(move |h| [h[0] + x[0], h[1] + x[1], h[2] + x[2]])
        })
        .collect())
}

struct FrameGeometry {
    anchor_indices: Vec<usize>,
    anchor_coords: Vec<Point3>,
    motion: Vec<Point3>,
    fallback: Vec<bool>,
    groups: Vec<NeighborGroup>,
}

fn frame_geometry(
    input: &PointCloudVideo,
    t: usize,
    m_out: usize,
    cfg: &StageConfig,
    imitator: ImitatorSettings,
    seed: u64,
    zero_motion: bool,
) -> Result<FrameGeometry> {
    let frame = input.frame(t);
    let anchor_indices = farthest_point_sample(frame, m_out, seed)?;
    let anchor_coords: Vec<Point3> = anchor_indices.iter().map(|&i| frame.points()[i]).collect();
    let (mut motion, fallback) = if imitator.enabled {
        let next = input.frame(successor(t, input.num_frames())).points();
        frame_motion(&anchor_coords, next, imitator.k, cfg.radius, imitator.sign)
    } else {
        (vec![[0.0; 3]; m_out], vec![false; m_out])
    };
    if zero_motion {
        motion.iter_mut().for_each(|x| *x = [0.0; 3]);
    }
    let groups = anchor_coords
        .iter()
        .enumerate()
        .map(|(i, c)| ball_query_point(c, i, frame.points(), cfg.radius, cfg.nsamples))
        .collect();
    Ok(FrameGeometry {
        anchor_indices,
        anchor_coords,
        motion,
        fallback,
        groups,
    })
}

pub fn stage_geometry(
    input: &PointCloudVideo,
    stage: usize,
    cfg: &StageConfig,
    imitator: ImitatorSettings,
    opts: GeometryOptions,
    probe: &mut Probe,
) -> Result<StageGeometry> {
    cfg.validate()?;
    if imitator.enabled && imitator.k == 0 {
        return Err(Error::ZeroNeighbors);
    }
    let frames = input.num_frames();
    let m_in = input.num_points();
    let m_out = cfg.anchors_for(m_in);
    let seed = stage_seed(opts.seed, stage);
    let run = |t: usize| {
        frame_geometry(input, t, m_out, cfg, imitator, seed, opts.force_zero_motion)
    };
    let per_frame: Vec<FrameGeometry> = if opts.parallel {
        (0..frames).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..frames).map(run).collect::<Result<_>>()?
    };

    let k = cfg.nsamples;
    let queries_per_set = (frames * m_out) as u64;
    let sets = if imitator.enabled { 2 } else { 1 };
    probe.ball_queries += sets * queries_per_set;
    probe.distance_evals += (sets + 1) * queries_per_set * m_in as u64;

    let mut shifted_xyz = Vec::with_capacity(frames * m_out * k * 3);
    let mut relative_xyz = Vec::new();
    let mut member_rows = Vec::with_capacity(frames * m_out * k);
    for (t, fg) in per_frame.iter().enumerate() {
        let pts = input.frame(t).points();
        for (i, g) in fg.groups.iter().enumerate() {
            let c = fg.anchor_coords[i];
            let x = fg.motion[i];
            for &j in &g.neighbor_indices {
                let h = sub(&pts[j], &c);
                shifted_xyz.extend_from_slice(&[h[0] + x[0], h[1] + x[1], h[2] + x[2]]);
                if probe.capture_groups {
                    relative_xyz.extend_from_slice(&h);
                }
                member_rows.push(t * m_in + j);
            }
        }
    }
    if probe.capture_groups {
        probe.captures.push(GroupCapture {
            stage,
            relative: relative_xyz,
            shifted: shifted_xyz.clone(),
        });
    }

    let mut anchor_indices = Vec::with_capacity(frames);
    let mut anchor_coords = Vec::with_capacity(frames);
    let mut vectors = Vec::with_capacity(frames);
    let mut fallback = Vec::with_capacity(frames);
    let mut groups = Vec::with_capacity(frames);
    for fg in per_frame {
        anchor_indices.push(fg.anchor_indices);
        anchor_coords.push(fg.anchor_coords);
        vectors.push(fg.motion);
        fallback.push(fg.fallback);
        groups.push(fg.groups);
    }
    Ok(StageGeometry {
        stage,
        m_in,
        nsamples: k,
        anchors: AnchorTrack {
            anchor_indices,
            anchor_coords,
        },
        motion: MotionField {
            vectors,
            sign: imitator.sign,
            fallback,
        },
        groups,
        shifted_xyz,
        member_rows,
        coord_scale: cfg.coord_scale(),
    })
}

/// Geometry of every stage, each fed the previous stage's anchors.
pub fn video_geometry(
    video: &PointCloudVideo,
    cfg: &ModelConfig,
    opts: GeometryOptions,
    probe: &mut Probe,
) -> Result<Vec<StageGeometry>> {
    cfg.validate()?;
    let imitator = ImitatorSettings::from_config(cfg);
    let mut out: Vec<StageGeometry> = Vec::with_capacity(cfg.stages.len());
    for (s, stage_cfg) in cfg.stages.iter().enumerate() {
        let geo = match out.last() {
            None => stage_geometry(video, s, stage_cfg, imitator, opts, probe)?,
            Some(prev) => {
                let coords = prev.output_coords()?;
                stage_geometry(&coords, s, stage_cfg, imitator, opts, probe)?
            }
        };
        out.push(geo);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_frame_adds_anchor_motion() {
        let h = [[0.5, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let out = synthesize_virtual_frame(&h, 2, &[[0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(out, vec![[0.5, 1.0, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(synthesize_virtual_frame(&h, 2, &[[0.0; 3]]).unwrap(), h.to_vec());
        assert!(synthesize_virtual_frame(&h, 3, &[[0.0; 3]]).is_err());
    }

    #[test]
    fn forward_plus_reverse_is_twice_relative() {
        let h = [[0.25, -0.5, 0.125], [1.0, 2.0, -3.0]];
        let x = [[0.1, 0.2, 0.3]];
        let neg = [[-0.1, -0.2, -0.3]];
        let p = synthesize_virtual_frame(&h, 2, &x).unwrap();
        let m = synthesize_virtual_frame(&h, 2, &neg).unwrap();
        for ((a, b), h) in p.iter().zip(&m).zip(&h) {
            for d in 0..3 {
                assert!((a[d] + b[d] - 2.0 * h[d]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stage_seed_keeps_first_stage() {
        assert_eq!(stage_seed(42, 0), 42);
        assert_ne!(stage_seed(42, 1), 42);
    }
}
