//! Instrumented timing of the one-step and dense pipelines.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use pvnext_core::autodiff::Graph;
use pvnext_core::dense::{dense_count_macs, dense_forward_logits, dense_run_stage, dense_video_geometry, DenseConfig};
use pvnext_core::model::{
    count_params_and_flops, forward_logits, run_stage, video_geometry, GeometryOptions, ImitatorSettings,
    ModelConfig, ModelParams,
};
use pvnext_core::probe::Probe;
use pvnext_core::video::PointCloudVideo;
use pvnext_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    OneStep,
    Dense,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::OneStep => "onestep",
            Pipeline::Dense => "dense",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "onestep" => Ok(Pipeline::OneStep),
            "dense" => Ok(Pipeline::Dense),
            _ => Err(Error::Config(format!("unknown pipeline `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub cfg: ModelConfig,
    pub delta_t: usize,
    pub warmup: usize,
    pub iters: usize,
    pub seed: u64,
    pub parallel: bool,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub pipeline: Pipeline,
    pub delta_t: usize,
    pub points: usize,
    pub frames: usize,
    pub batch_size: usize,
    pub parallel: bool,
    pub warmup: usize,
    pub iters: usize,
    /// Median wall time of the first stage (geometry and encoding).
    pub stage_ns: u128,
    /// Median wall time of a full forward pass.
    pub forward_ns: u128,
    pub ball_queries: u64,
    pub distance_evals: u64,
    pub member_embeddings: u64,
    /// First-stage members embedded per anchor at an interior frame.
    pub interior_embeddings: u64,
    pub analytic_macs: u64,
    pub graph_macs: u64,
    pub peak_bytes: u64,
    pub checksum: u64,
}

pub fn median_ns(mut samples: Vec<u128>) -> u128 {
    if samples.is_empty() {
        return 0;
    }
    samples.sort_unstable();
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2
    }
}

/// FNV-1a over the bit patterns of `values`.
pub fn checksum(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn geometry_options(opts: &BenchOptions) -> GeometryOptions {
    GeometryOptions {
        seed: opts.seed,
        parallel: opts.parallel,
        force_zero_motion: false,
    }
}

struct Forward {
    logits: Vec<f64>,
    macs: u64,
    peak_bytes: u64,
}

fn forward(pipeline: Pipeline, video: &PointCloudVideo, params: &ModelParams, opts: &BenchOptions, probe: &mut Probe) -> Result<Forward> {
    let geo_opts = geometry_options(opts);
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let logits = match pipeline {
        Pipeline::OneStep => {
            let geo = video_geometry(video, &opts.cfg, geo_opts, probe)?;
            forward_logits(&mut g, &geo, &bound, probe)?
        }
        Pipeline::Dense => {
            let geo = dense_video_geometry(video, &opts.cfg, opts.delta_t, geo_opts, probe)?;
            dense_forward_logits(&mut g, &geo, &bound, probe)?
        }
    };
    Ok(Forward {
        logits: g.value(logits).to_vec(),
        macs: g.macs(),
        peak_bytes: g.value_bytes(),
    })
}

/// First stage only; returns members embedded per anchor at frame `t`.
fn first_stage(
    pipeline: Pipeline,
    video: &PointCloudVideo,
    params: &ModelParams,
    opts: &BenchOptions,
    t: usize,
    probe: &mut Probe,
) -> Result<u64> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let stage = &opts.cfg.stages[0];
    match pipeline {
        Pipeline::OneStep => {
            let imitator = ImitatorSettings::from_config(&opts.cfg);
            let (_, geo) = run_stage(&mut g, video, None, 0, stage, imitator, &bound.stages[0], geometry_options(opts), probe)?;
            Ok((geo.groups[t].iter().map(|gr| gr.neighbor_indices.len()).sum::<usize>() / geo.m_out()) as u64)
        }
        Pipeline::Dense => {
            let dcfg = DenseConfig::from_stage(stage, opts.delta_t);
            let (_, geo) = dense_run_stage(&mut g, video, None, 0, &dcfg, &bound.stages[0], geometry_options(opts), probe)?;
            Ok(geo.frame_members[t] / geo.m_out() as u64)
        }
    }
}

pub fn bench(pipeline: Pipeline, video: &PointCloudVideo, params: &ModelParams, opts: &BenchOptions) -> Result<BenchRecord> {
    if opts.iters == 0 {
        return Err(Error::Config("bench needs at least one timed iteration".into()));
    }
    let (n, t) = (video.num_points(), video.num_frames());
    let interior = t / 2;
    let mut probe = Probe::default();
    let out = forward(pipeline, video, params, opts, &mut probe)?;
    let interior_embeddings = first_stage(pipeline, video, params, opts, interior, &mut Probe::default())?;
    for _ in 0..opts.warmup {
        first_stage(pipeline, video, params, opts, interior, &mut Probe::default())?;
        forward(pipeline, video, params, opts, &mut Probe::default())?;
    }
    let mut stage_samples = Vec::with_capacity(opts.iters);
    let mut forward_samples = Vec::with_capacity(opts.iters);
    for _ in 0..opts.iters {
        let start = Instant::now();
        first_stage(pipeline, video, params, opts, interior, &mut Probe::default())?;
        stage_samples.push(start.elapsed().as_nanos());
        let start = Instant::now();
        forward(pipeline, video, params, opts, &mut Probe::default())?;
        forward_samples.push(start.elapsed().as_nanos());
    }
    let analytic_macs = match pipeline {
        Pipeline::OneStep => count_params_and_flops(&opts.cfg, n, t)?.macs,
        Pipeline::Dense => dense_count_macs(&opts.cfg, n, t, opts.delta_t)?,
    };
    Ok(BenchRecord {
        pipeline,
        delta_t: if pipeline == Pipeline::Dense { opts.delta_t } else { 0 },
        points: n,
        frames: t,
        batch_size: opts.batch_size,
        parallel: opts.parallel,
        warmup: opts.warmup,
        iters: opts.iters,
        stage_ns: median_ns(stage_samples),
        forward_ns: median_ns(forward_samples),
        ball_queries: probe.ball_queries,
        distance_evals: probe.distance_evals,
        member_embeddings: probe.member_embeddings,
        interior_embeddings,
        analytic_macs,
        graph_macs: out.macs,
        peak_bytes: out.peak_bytes,
        checksum: checksum(&out.logits),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median_ns(vec![5, 1, 3]), 3);
        assert_eq!(median_ns(vec![4, 1, 3, 2]), 2);
        assert_eq!(median_ns(vec![]), 0);
    }

    #[test]
    fn checksum_sees_sign_of_zero() {
        assert_ne!(checksum(&[0.0]), checksum(&[-0.0]));
        assert_eq!(checksum(&[1.5, 2.0]), checksum(&[1.5, 2.0]));
    }
}
