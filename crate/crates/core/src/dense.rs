//! Dense temporal-window query baseline.
//!
//! Every anchor of frame `t` queries every frame in `[t - dt, t + dt]`
//! (clipped to the video), each member is embedded by the shared member MLP,
//! and the result is max-pooled over members and then over the window.

use std::ops::Range;

use rayon::prelude::*;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::geom::{ball_query_point, farthest_point_sample, sub, Point3};
use crate::imitator::AnchorTrack;
use crate::model::{
    global_pool, stage_seed, BoundModel, BoundStage, GeometryOptions, ModelConfig, ModelParams, StageConfig,
    StageOutput,
};
use crate::probe::Probe;
use crate::video::PointCloudVideo;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseConfig {
    pub delta_t: usize,
    pub k: usize,
    pub radius: f64,
    pub mlps: Vec<Vec<usize>>,
    pub spatial_stride: usize,
    pub normalize_xyz: bool,
}

impl DenseConfig {
    /// Same widths, group size, radius and stride as a one-step stage.
    pub fn from_stage(stage: &StageConfig, delta_t: usize) -> Self {
        Self {
            delta_t,
            k: stage.nsamples,
            radius: stage.radius,
            mlps: stage.mlps.clone(),
            spatial_stride: stage.spatial_stride,
            normalize_xyz: stage.normalize_xyz,
        }
    }

    pub fn stage(&self) -> StageConfig {
        StageConfig {
            normalize_xyz: self.normalize_xyz,
            ..StageConfig::new(self.mlps.clone(), self.k, self.spatial_stride, self.radius)
        }
    }

    /// Frames queried from frame `t`.
    pub fn window(&self, t: usize, frames: usize) -> Range<usize> {
        t.saturating_sub(self.delta_t)..(t + self.delta_t + 1).min(frames)
    }
}

/// Parameter-free part of a dense stage. Members are ordered by
/// `(frame, anchor, window frame, member)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGeometry {
    pub stage: usize,
    pub m_in: usize,
    pub k: usize,
    pub anchors: AnchorTrack,
    pub xyz: Vec<f64>,
    pub member_rows: Vec<usize>,
    /// Window length of every `(frame, anchor)`, frame-major.
    pub window_lens: Vec<usize>,
    /// Members embedded for each frame's anchors.
    pub frame_members: Vec<u64>,
    pub coord_scale: f64,
}

impl DenseGeometry {
    pub fn frames(&self) -> usize {
        self.anchors.num_frames()
    }

    pub fn m_out(&self) -> usize {
        self.anchors.num_anchors()
    }

    pub fn output_coords(&self) -> Result<PointCloudVideo> {
        PointCloudVideo::from_points(self.anchors.anchor_coords.clone(), None)
    }
}

struct FrameMembers {
    xyz: Vec<f64>,
    rows: Vec<usize>,
    window_lens: Vec<usize>,
}

fn frame_members(input: &PointCloudVideo, t: usize, anchors: &[Point3], cfg: &DenseConfig) -> FrameMembers {
    let frames = input.num_frames();
    let m_in = input.num_points();
    let window = cfg.window(t, frames);
    let mut out = FrameMembers {
        xyz: Vec::with_capacity(anchors.len() * window.len() * cfg.k * 3),
        rows: Vec::with_capacity(anchors.len() * window.len() * cfg.k),
        window_lens: vec![window.len(); anchors.len()],
    };
    for (i, c) in anchors.iter().enumerate() {
        for tau in window.clone() {
            let pts = input.frame(tau).points();
            let g = ball_query_point(c, i, pts, cfg.radius, cfg.k);
            for &j in &g.neighbor_indices {
                out.xyz.extend_from_slice(&sub(&pts[j], c));
                out.rows.push(tau * m_in + j);
            }
        }
    }
    out
}

fn count_frame(probe: &mut Probe, anchors: usize, window: usize, m_in: usize) {
    probe.ball_queries += (anchors * window) as u64;
    probe.distance_evals += (anchors * window * m_in) as u64;
}

pub fn dense_geometry(
    input: &PointCloudVideo,
    stage: usize,
    cfg: &DenseConfig,
    opts: GeometryOptions,
    probe: &mut Probe,
) -> Result<DenseGeometry> {
    cfg.stage().validate()?;
    let frames = input.num_frames();
    let m_in = input.num_points();
    let m_out = cfg.stage().anchors_for(m_in);
    let seed = stage_seed(opts.seed, stage);
    let run = |t: usize| -> Result<(Vec<usize>, Vec<Point3>, FrameMembers)> {
        let frame = input.frame(t);
        let idx = farthest_point_sample(frame, m_out, seed)?;
        let coords: Vec<Point3> = idx.iter().map(|&i| frame.points()[i]).collect();
        let members = frame_members(input, t, &coords, cfg);
        Ok((idx, coords, members))
    };
    let per_frame: Vec<_> = if opts.parallel {
        (0..frames).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..frames).map(run).collect::<Result<_>>()?
    };
    probe.distance_evals += (frames * m_out * m_in) as u64;
    let mut geo = DenseGeometry {
        stage,
        m_in,
        k: cfg.k,
        anchors: AnchorTrack {
            anchor_indices: Vec::with_capacity(frames),
            anchor_coords: Vec::with_capacity(frames),
        },
        xyz: Vec::new(),
        member_rows: Vec::new(),
        window_lens: Vec::with_capacity(frames * m_out),
        frame_members: Vec::with_capacity(frames),
        coord_scale: cfg.stage().coord_scale(),
    };
    for (t, (idx, coords, members)) in per_frame.into_iter().enumerate() {
        count_frame(probe, m_out, cfg.window(t, frames).len(), m_in);
        geo.frame_members.push(members.rows.len() as u64);
        geo.anchors.anchor_indices.push(idx);
        geo.anchors.anchor_coords.push(coords);
        geo.xyz.extend(members.xyz);
        geo.member_rows.extend(members.rows);
        geo.window_lens.extend(members.window_lens);
    }
    Ok(geo)
}

/// Elementwise max over each anchor's run of window rows.
pub fn dense_temporal_pool(g: &mut Graph, per_frame: Var, window_lens: &[usize]) -> Result<Var> {
    g.segment_max(per_frame, window_lens)
}

#[allow(clippy::too_many_arguments)]
fn dense_encode_members(
    g: &mut Graph,
    mut xyz: Vec<f64>,
    scale: f64,
    rows: &[usize],
    window_lens: &[usize],
    input_feats: Option<Var>,
    k: usize,
    stage: &BoundStage,
    probe: &mut Probe,
) -> Result<Var> {
    let members = rows.len();
    if members == 0 || members != window_lens.iter().sum::<usize>() * k {
        return Err(Error::Shape {
            op: "dense_encode",
            left: vec![members, k],
            right: vec![window_lens.iter().sum()],
        });
    }
    if scale != 1.0 {
        xyz.iter_mut().for_each(|v| *v *= scale);
    }
    let coords = g.constant(vec![members, 3], xyz)?;
    let x = match input_feats {
        Some(f) => {
            let gathered = g.gather_rows(f, rows.to_vec())?;
            g.concat_cols(coords, gathered)?
        }
        None => coords,
    };
    let h = stage.member_mlp.forward(g, x)?;
    let c = g.shape(h)[1];
    let grouped = g.reshape(h, vec![members / k, k, c])?;
    let (per_tau, _) = g.max_pool(grouped, 1)?;
    probe.member_embeddings += members as u64;
    let pooled = dense_temporal_pool(g, per_tau, window_lens)?;
    match &stage.pooled_mlp {
        Some(mlp) => mlp.forward(g, pooled),
        None => Ok(pooled),
    }
}

/// Features for the anchors of frame `t`, `[anchors, channels]`.
#[allow(clippy::too_many_arguments)]
pub fn dense_encode_frame(
    g: &mut Graph,
    input: &PointCloudVideo,
    input_feats: Option<Var>,
    t: usize,
    anchors: &[Point3],
    cfg: &DenseConfig,
    stage: &BoundStage,
    probe: &mut Probe,
) -> Result<Var> {
    if t >= input.num_frames() {
        return Err(Error::Index {
            index: t,
            len: input.num_frames(),
        });
    }
    let m = frame_members(input, t, anchors, cfg);
    count_frame(probe, anchors.len(), cfg.window(t, input.num_frames()).len(), input.num_points());
    dense_encode_members(g, m.xyz, cfg.stage().coord_scale(), &m.rows, &m.window_lens, input_feats, cfg.k, stage, probe)
}

pub fn dense_encode(
    g: &mut Graph,
    geo: &DenseGeometry,
    input_feats: Option<Var>,
    stage: &BoundStage,
    probe: &mut Probe,
) -> Result<Var> {
    dense_encode_members(
        g,
        geo.xyz.clone(),
        geo.coord_scale,
        &geo.member_rows,
        &geo.window_lens,
        input_feats,
        geo.k,
        stage,
        probe,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn dense_run_stage(
    g: &mut Graph,
    input: &PointCloudVideo,
    input_feats: Option<Var>,
    stage_index: usize,
    cfg: &DenseConfig,
    stage: &BoundStage,
    opts: GeometryOptions,
    probe: &mut Probe,
) -> Result<(StageOutput, DenseGeometry)> {
    let geo = dense_geometry(input, stage_index, cfg, opts, probe)?;
    let feats = dense_encode(g, &geo, input_feats, stage, probe)?;
    let out = StageOutput {
        coords: geo.output_coords()?,
        feats,
        channels: cfg.stage().out_channels(),
    };
    Ok((out, geo))
}

/// Dense geometry for every stage of `cfg` with window half-width `delta_t`.
pub fn dense_video_geometry(
    video: &PointCloudVideo,
    cfg: &ModelConfig,
    delta_t: usize,
    opts: GeometryOptions,
    probe: &mut Probe,
) -> Result<Vec<DenseGeometry>> {
    cfg.validate()?;
    let mut out: Vec<DenseGeometry> = Vec::with_capacity(cfg.stages.len());
    for (s, stage_cfg) in cfg.stages.iter().enumerate() {
        let dcfg = DenseConfig::from_stage(stage_cfg, delta_t);
        let geo = match out.last() {
            None => dense_geometry(video, s, &dcfg, opts, probe)?,
            Some(prev) => dense_geometry(&prev.output_coords()?, s, &dcfg, opts, probe)?,
        };
        out.push(geo);
    }
    Ok(out)
}

pub fn dense_forward_logits(
    g: &mut Graph,
    geometry: &[DenseGeometry],
    bound: &BoundModel,
    probe: &mut Probe,
) -> Result<Var> {
    if geometry.is_empty() || geometry.len() != bound.stages.len() {
        return Err(Error::Config(format!(
            "{} stage geometries for {} parameter stages",
            geometry.len(),
            bound.stages.len()
        )));
    }
    let mut feats = None;
    for (geo, stage) in geometry.iter().zip(&bound.stages) {
        feats = Some(dense_encode(g, geo, feats, stage, probe)?);
    }
    let last = &geometry[geometry.len() - 1];
    let pooled = global_pool(g, feats.expect("non-empty"), last.frames(), last.m_out())?;
    bound.head.forward(g, pooled)
}

/// Logits of the dense pipeline, sharing the one-step parameter layout.
pub fn dense_classify_with(
    video: &PointCloudVideo,
    cfg: &ModelConfig,
    params: &ModelParams,
    delta_t: usize,
    opts: GeometryOptions,
    probe: &mut Probe,
) -> Result<Vec<f64>> {
    let geometry = dense_video_geometry(video, cfg, delta_t, opts, probe)?;
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let logits = dense_forward_logits(&mut g, &geometry, &bound, probe)?;
    Ok(g.value(logits).to_vec())
}

/// Analytic multiply-adds of the dense pipeline: per stage
/// `M_out * (K * cost(mlp1) * sum_t |window(t)| + T * cost(mlp2))`, plus head.
pub fn dense_count_macs(cfg: &ModelConfig, n: usize, t: usize, delta_t: usize) -> Result<u64> {
    cfg.validate()?;
    let chain = |mut d: usize, widths: &[usize]| {
        widths.iter().fold(0u64, |acc, &w| {
            let m = acc + (d * w) as u64;
            d = w;
            m
        })
    };
    let mut total = 0u64;
    let mut m_in = n;
    for (s, cin) in cfg.stages.iter().zip(cfg.stage_in_channels()) {
        let d = DenseConfig::from_stage(s, delta_t);
        let m_out = s.anchors_for(m_in);
        let slots: usize = (0..t).map(|f| d.window(f, t).len()).sum();
        let member = chain(cin, s.member_mlp());
        let pooled = s.pooled_mlp().map_or(0, |w| chain(s.member_mlp()[s.member_mlp().len() - 1], w));
        total += m_out as u64 * (s.nsamples as u64 * member * slots as u64 + t as u64 * pooled);
        m_in = m_out;
    }
    let mut widths = cfg.head_hidden.clone();
    widths.push(cfg.num_classes);
    Ok(total + chain(cfg.feature_channels(), &widths))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(delta_t: usize) -> DenseConfig {
        DenseConfig {
            delta_t,
            k: 2,
            radius: 0.5,
            mlps: vec![vec![4]],
            spatial_stride: 2,
            normalize_xyz: true,
        }
    }

    #[test]
    fn window_clips_at_ends() {
        let c = cfg(1);
        assert_eq!(c.window(0, 4), 0..2);
        assert_eq!(c.window(1, 4), 0..3);
        assert_eq!(c.window(3, 4), 2..4);
        assert_eq!(cfg(0).window(2, 4), 2..3);
        assert_eq!(cfg(5).window(2, 4), 0..4);
    }

    #[test]
    fn query_count_follows_window_sizes() {
        let frames: Vec<Vec<Point3>> = (0..4)
            .map(|t| (0..16).map(|i| [i as f64 * 0.1, t as f64 * 0.01, 0.0]).collect())
            .collect();
        let video = PointCloudVideo::from_points(frames, None).unwrap();
        let mut probe = Probe::default();
        let geo = dense_geometry(&video, 0, &cfg(1), GeometryOptions::seeded(3), &mut probe).unwrap();
        assert_eq!(geo.m_out(), 8);
        assert_eq!(probe.ball_queries, 8 * (2 + 3 + 3 + 2));
        assert_eq!(geo.frame_members, vec![32, 48, 48, 32]);
    }

    #[test]
    fn zero_window_macs_match_one_step() {
        let cfg = ModelConfig::msr(20);
        let one = crate::model::count_params_and_flops(&cfg, 2048, 16).unwrap().macs;
        assert_eq!(dense_count_macs(&cfg, 2048, 16, 0).unwrap(), one);
        assert!(dense_count_macs(&cfg, 2048, 16, 1).unwrap() > 2 * one);
    }

    #[test]
    fn temporal_pool_single_frame_is_identity() {
        let mut g = Graph::new();
        let x = g.constant(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        let y = dense_temporal_pool(&mut g, x, &[1, 1]).unwrap();
        assert_eq!(g.value(y), g.value(x));
        let z = dense_temporal_pool(&mut g, x, &[2]).unwrap();
        assert_eq!(g.value(z), &[1.0, 0.0, 3.0]);
    }
}
