//! Single-step motion encoder and the stage stack built on it.

use super::config::{ModelConfig, StageConfig};
use super::geometry::{
    stage_geometry, synthesize_virtual_frame, video_geometry, GeometryOptions, ImitatorSettings,
    StageGeometry,
};
use super::params::{BoundModel, BoundStage, ModelParams};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::geom::{ball_query_point, sub, Point3, PointSet};
use crate::probe::Probe;
use crate::video::PointCloudVideo;

/// Anchor coordinates and features produced by a stage. `feats` is a
/// `[frames * anchors, channels]` node, frame-major.
#[derive(Debug, Clone)]
pub struct StageOutput {
    pub coords: PointCloudVideo,
    pub feats: Var,
    pub channels: usize,
}

/// Member MLP on `[scale * xyz ∥ gathered features]`, max over each run of
/// `k` members, then the pooled MLP.
#[allow(clippy::too_many_arguments)]
pub fn encode_members(
    g: &mut Graph,
    mut xyz: Vec<f64>,
    scale: f64,
    rows: &[usize],
    input_feats: Option<Var>,
    k: usize,
    stage: &BoundStage,
    probe: &mut Probe,
) -> Result<Var> {
    let members = rows.len();
    if members == 0 || !members.is_multiple_of(k) || xyz.len() != members * 3 {
        return Err(Error::Shape {
            op: "encode_members",
            left: vec![members, k],
            right: vec![xyz.len()],
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
    let (pooled, _) = g.max_pool(grouped, 1)?;
    probe.member_embeddings += members as u64;
    match &stage.pooled_mlp {
        Some(mlp) => mlp.forward(g, pooled),
        None => Ok(pooled),
    }
}

/// Encodes one frame: a single ball query per anchor into the frame itself,
/// virtual-frame shift by the anchor's motion, member MLP, max over members,
/// pooled MLP. `frame_feats` holds this frame's input feature rows.
#[allow(clippy::too_many_arguments)]
pub fn one_step_encode(
    g: &mut Graph,
    frame: &PointSet,
    frame_feats: Option<Var>,
    anchors: &[usize],
    motion: &[Point3],
    cfg: &StageConfig,
    stage: &BoundStage,
    probe: &mut Probe,
) -> Result<Var> {
    if anchors.len() != motion.len() {
        return Err(Error::Shape {
            op: "one_step_encode",
            left: vec![anchors.len()],
            right: vec![motion.len()],
        });
    }
    let pts = frame.points();
    let mut relative = Vec::with_capacity(anchors.len() * cfg.nsamples);
    let mut rows = Vec::with_capacity(anchors.len() * cfg.nsamples);
    for (i, &a) in anchors.iter().enumerate() {
        let c = *pts.get(a).ok_or(Error::Index {
            index: a,
            len: pts.len(),
        })?;
        let group = ball_query_point(&c, i, pts, cfg.radius, cfg.nsamples);
        for &j in &group.neighbor_indices {
            relative.push(sub(&pts[j], &c));
            rows.push(j);
        }
    }
    probe.ball_queries += anchors.len() as u64;
    probe.distance_evals += (anchors.len() * pts.len()) as u64;
    let shifted = synthesize_virtual_frame(&relative, cfg.nsamples, motion)?;
    let xyz = shifted.iter().flatten().copied().collect();
    encode_members(g, xyz, cfg.coord_scale(), &rows, frame_feats, cfg.nsamples, stage, probe)
}

/// Features of a stage from precomputed geometry.
pub fn encode_stage(
    g: &mut Graph,
    geo: &StageGeometry,
    input_feats: Option<Var>,
    stage: &BoundStage,
    probe: &mut Probe,
) -> Result<Var> {
    encode_members(
        g,
        geo.shifted_xyz.clone(),
        geo.coord_scale,
        &geo.member_rows,
        input_feats,
        geo.nsamples,
        stage,
        probe,
    )
}

/// FPS anchors, imitator motion and one-step encoding for every frame.
#[allow(clippy::too_many_arguments)]
pub fn run_stage(
    g: &mut Graph,
    input: &PointCloudVideo,
    input_feats: Option<Var>,
    stage_index: usize,
    cfg: &StageConfig,
    imitator: ImitatorSettings,
    stage: &BoundStage,
    opts: GeometryOptions,
    probe: &mut Probe,
) -> Result<(StageOutput, StageGeometry)> {
    let geo = stage_geometry(input, stage_index, cfg, imitator, opts, probe)?;
    let feats = encode_stage(g, &geo, input_feats, stage, probe)?;
    let out = StageOutput {
        coords: geo.output_coords()?,
        feats,
        channels: cfg.out_channels(),
    };
    Ok((out, geo))
}

/// Max over anchors, then over frames, of `[frames * anchors, c]` features.
pub fn global_pool(g: &mut Graph, feats: Var, frames: usize, anchors: usize) -> Result<Var> {
    let c = g.shape(feats)[1];
    let cube = g.reshape(feats, vec![frames, anchors, c])?;
    let (per_frame, _) = g.max_pool(cube, 1)?;
    let (video, _) = g.max_pool(per_frame, 0)?;
    g.reshape(video, vec![1, c])
}

/// `[1, num_classes]` logits from precomputed geometry.
pub fn forward_logits(
    g: &mut Graph,
    geometry: &[StageGeometry],
    bound: &BoundModel,
    probe: &mut Probe,
) -> Result<Var> {
    if geometry.len() != bound.stages.len() {
        return Err(Error::Config(format!(
            "{} stage geometries for {} parameter stages",
            geometry.len(),
            bound.stages.len()
        )));
    }
    let mut feats = None;
    for (geo, stage) in geometry.iter().zip(&bound.stages) {
        feats = Some(encode_stage(g, geo, feats, stage, probe)?);
    }
    let last = geometry.last().expect("at least one stage");
    let pooled = global_pool(g, feats.expect("at least one stage"), last.frames(), last.m_out())?;
    bound.head.forward(g, pooled)
}

/// Logits for one video, computed without gradient tracking.
pub fn classify_with(
    video: &PointCloudVideo,
    cfg: &ModelConfig,
    params: &ModelParams,
    opts: GeometryOptions,
    probe: &mut Probe,
) -> Result<Vec<f64>> {
    let geometry = video_geometry(video, cfg, opts, probe)?;
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let logits = forward_logits(&mut g, &geometry, &bound, probe)?;
    Ok(g.value(logits).to_vec())
}

pub fn classify(
    video: &PointCloudVideo,
    cfg: &ModelConfig,
    params: &ModelParams,
    seed: u64,
) -> Result<Vec<f64>> {
    classify_with(video, cfg, params, GeometryOptions::seeded(seed), &mut Probe::default())
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
