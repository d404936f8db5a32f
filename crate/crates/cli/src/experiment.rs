//! Seeded split, training loop and held-out evaluation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pvnext_core::autodiff::{Sgd, SgdSchedule};
use pvnext_core::dataio::{drop_local_with, DropCenter, PcvDataset};
use pvnext_core::model::{
    argmax, predict, prepare_video, train_step, GeometryOptions, ModelConfig, ModelParams, PreparedVideo,
};
use pvnext_core::probe::Probe;
use pvnext_core::video::PointCloudVideo;
use pvnext_core::Result;

/// Per-class shuffle, first half of every class to training.
pub fn stratified_split(labels: &[usize], num_classes: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in 0..num_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let half = idx.len() / 2;
        train.extend_from_slice(&idx[..half]);
        test.extend_from_slice(&idx[half..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

pub fn dataset_split(ds: &PcvDataset, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let labels: Vec<usize> = ds.videos.iter().map(|v| v.label.unwrap_or(usize::MAX)).collect();
    stratified_split(&labels, ds.num_classes, seed)
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub cfg: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub base_lr: f64,
    pub momentum: f64,
    pub parallel: bool,
}

impl TrainOptions {
    pub fn geometry(&self) -> GeometryOptions {
        GeometryOptions {
            seed: self.seed,
            parallel: self.parallel,
            force_zero_motion: false,
        }
    }
}

/// One row of the training log. Counters are cumulative over the run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub ball_queries: u64,
    pub member_embeddings: u64,
    pub macs: u64,
    pub peak_bytes: u64,
    pub wall_ns: u128,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub test: Vec<PreparedVideo>,
}

pub fn prepare_all(
    videos: &[&PointCloudVideo],
    cfg: &ModelConfig,
    opts: GeometryOptions,
    probe: &mut Probe,
) -> Result<Vec<PreparedVideo>> {
    videos.iter().map(|v| prepare_video(v, cfg, opts, probe)).collect()
}

pub fn accuracy(params: &ModelParams, videos: &[PreparedVideo], probe: &mut Probe) -> Result<f64> {
    Ok(confusion(params, videos, probe)?.accuracy())
}

pub fn train_model(
    ds: &PcvDataset,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    opts.cfg.validate()?;
    if opts.batch_size == 0 {
        return Err(pvnext_core::Error::Config("batch size must be positive".into()));
    }
    let (train_idx, test_idx) = dataset_split(ds, opts.seed);
    let mut probe = Probe::default();
    let pick = |idx: &[usize]| idx.iter().map(|&i| &ds.videos[i]).collect::<Vec<_>>();
    let train = prepare_all(&pick(&train_idx), &opts.cfg, opts.geometry(), &mut probe)?;
    let test = prepare_all(&pick(&test_idx), &opts.cfg, opts.geometry(), &mut probe)?;

    let mut params = ModelParams::init(&opts.cfg, opts.seed)?;
    let schedule = SgdSchedule {
        base_lr: opts.base_lr,
        total_epochs: opts.epochs.max(1),
        momentum: opts.momentum,
    };
    let mut sgd = Sgd::new(schedule)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(1);
    let mut history = Vec::with_capacity(opts.epochs);
    let (mut macs, mut peak) = (0u64, 0u64);
    for epoch in 0..opts.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(opts.batch_size) {
            let batch: Vec<&PreparedVideo> = chunk.iter().map(|&i| &train[i]).collect();
            let step = train_step(&mut params, &batch, &mut sgd, epoch, &mut probe)?;
            loss_sum += step.loss * batch.len() as f64;
            seen += batch.len();
            macs += step.macs;
            peak = peak.max(step.peak_bytes);
        }
        let test_accuracy = accuracy(&params, &test, &mut probe)?;
        let rec = EpochRecord {
            epoch: epoch + 1,
            lr: schedule.lr(epoch),
            train_loss: if seen > 0 { loss_sum / seen as f64 } else { 0.0 },
            test_accuracy,
            ball_queries: probe.ball_queries,
            member_embeddings: probe.member_embeddings,
            macs,
            peak_bytes: peak,
            wall_ns: start.elapsed().as_nanos(),
        };
        on_epoch(&rec);
        history.push(rec);
    }
    Ok(TrainOutcome {
        params,
        history,
        train_idx,
        test_idx,
        test,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Confusion {
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.counts.len()).map(|c| self.counts[c][c]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    /// Accuracy restricted to videos whose true class is in `classes`.
    pub fn subset_accuracy(&self, classes: &[usize]) -> f64 {
        let total: usize = classes.iter().map(|&c| self.counts[c].iter().sum::<usize>()).sum();
        let correct: usize = classes.iter().map(|&c| self.counts[c][c]).sum();
        if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        }
    }
}

pub fn confusion(params: &ModelParams, videos: &[PreparedVideo], probe: &mut Probe) -> Result<Confusion> {
    let classes = params.head.out_dim();
    let mut counts = vec![vec![0; classes]; classes];
    for v in videos {
        let logits = predict(params, v, probe)?;
        counts[v.label][argmax(&logits)] += 1;
    }
    Ok(Confusion { counts })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occlusion {
    pub ratio: f64,
    pub seed: u64,
    pub mode: DropCenter,
}

/// Held-out videos of a split, optionally occluded before inference. Video
/// `i` of the split is corrupted with seed `occlusion.seed + i`.
pub fn held_out(
    ds: &PcvDataset,
    split_seed: u64,
    occlusion: Option<Occlusion>,
) -> Result<Vec<PointCloudVideo>> {
    let (_, test_idx) = dataset_split(ds, split_seed);
    test_idx
        .iter()
        .enumerate()
        .map(|(i, &vi)| {
            let v = &ds.videos[vi];
            match occlusion {
                Some(o) => drop_local_with(v, o.ratio, o.seed.wrapping_add(i as u64), o.mode),
                None => Ok(v.clone()),
            }
        })
        .collect()
}
