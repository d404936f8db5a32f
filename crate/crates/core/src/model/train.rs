use super::encoder::forward_logits;
use super::geometry::{video_geometry, GeometryOptions, StageGeometry};
use super::params::ModelParams;
use crate::autodiff::{Graph, Sgd};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::probe::Probe;
use crate::video::PointCloudVideo;

/// A labeled video with its stage geometry already computed.
#[derive(Debug, Clone)]
pub struct PreparedVideo {
    pub geometry: Vec<StageGeometry>,
    pub label: usize,
}

pub fn prepare_video(
    video: &PointCloudVideo,
    cfg: &ModelConfig,
    opts: GeometryOptions,
    probe: &mut Probe,
) -> Result<PreparedVideo> {
    let label = video
        .label
        .ok_or_else(|| Error::Video("training video has no label".into()))?;
    if label >= cfg.num_classes {
        return Err(Error::Label {
            label,
            classes: cfg.num_classes,
        });
    }
    Ok(PreparedVideo {
        geometry: video_geometry(video, cfg, opts, probe)?,
        label,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub loss: f64,
    pub macs: u64,
    pub peak_bytes: u64,
}

/// Forward, backward and one SGD update on a mini-batch.
pub fn train_step(
    params: &mut ModelParams,
    batch: &[&PreparedVideo],
    sgd: &mut Sgd,
    epoch: usize,
    probe: &mut Probe,
) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let mut logits = Vec::with_capacity(batch.len());
    for v in batch {
        logits.push(forward_logits(&mut g, &v.geometry, &bound, probe)?);
    }
    let stacked = g.concat_rows(&logits)?;
    let labels: Vec<usize> = batch.iter().map(|v| v.label).collect();
    let loss_var = g.softmax_cross_entropy(stacked, &labels)?;
    let loss = g.value(loss_var)[0];
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
    }
    let grads = g.backward(loss_var)?;
    params.store_grads(&bound, &grads)?;
    sgd.step(&mut params.named_tensors_mut(), epoch)?;
    params.zero_grad();
    Ok(StepReport {
        loss,
        macs: g.macs(),
        peak_bytes: g.value_bytes(),
    })
}

/// Untracked logits for a prepared video.
pub fn predict(params: &ModelParams, video: &PreparedVideo, probe: &mut Probe) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let logits = forward_logits(&mut g, &video.geometry, &bound, probe)?;
    Ok(g.value(logits).to_vec())
}
