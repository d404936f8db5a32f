//! Subcommand drivers. Every CSV starts with a `schema` column naming its
//! layout version; columns are only ever appended in a new version.

use std::fs::File;
use std::path::{Path, PathBuf};

use csv::Writer;

use pvnext_core::dataio::{
    generate_synthetic, read_pcv, synthesize_video, write_pcv, MotionClass, PcvDataset, SyntheticSpec,
};
use pvnext_core::model::{
    load_checkpoint, read_checkpoint, save_checkpoint, GeometryOptions, ModelConfig, ModelParams,
};
use pvnext_core::probe::Probe;
use pvnext_core::Error;

use crate::args::{check_ratio, BenchArgs, EvalArgs, ImitatorEvalArgs, PipelineArg, SynthArgs, TrainArgs};
use crate::bench::{bench, BenchOptions, BenchRecord, Pipeline};
use crate::error::{CliError, CliResult};
use crate::experiment::{confusion, held_out, prepare_all, train_model, Confusion, EpochRecord, Occlusion, TrainOptions};
use crate::imitator_eval::imitator_chamfer;

pub const TRAIN_SCHEMA: &str = "pvnext.train.v1";
pub const EVAL_SCHEMA: &str = "pvnext.confusion.v1";
pub const IMITATOR_SCHEMA: &str = "pvnext.imitator.v1";
pub const BENCH_SCHEMA: &str = "pvnext.bench.v1";

pub const TRAIN_COLUMNS: [&str; 12] = [
    "schema",
    "run_id",
    "epoch",
    "lr",
    "train_loss",
    "test_accuracy",
    "ball_queries",
    "member_embeddings",
    "macs",
    "peak_bytes",
    "wall_ns",
    "batch_size",
];

pub const IMITATOR_COLUMNS: [&str; 9] = [
    "schema",
    "row",
    "video",
    "label",
    "t",
    "imitator_chamfer",
    "baseline_chamfer",
    "mean_motion_norm",
    "fallback_anchors",
];

pub const BENCH_COLUMNS: [&str; 22] = [
    "schema",
    "run_id",
    "pipeline",
    "preset",
    "delta_t",
    "points",
    "frames",
    "batch_size",
    "parallel",
    "warmup",
    "iters",
    "stage_wall_ns",
    "forward_wall_ns",
    "ball_queries",
    "distance_evals",
    "member_embeddings",
    "interior_embeddings_per_anchor",
    "analytic_macs",
    "analytic_flops",
    "graph_macs",
    "peak_bytes",
    "checksum",
];

fn writer(path: &Path) -> CliResult<Writer<File>> {
    Ok(Writer::from_path(path)?)
}

/// Stable identifier of a run: config digest prefix and seed.
pub fn run_id(cfg: &ModelConfig, seed: u64) -> String {
    let d = cfg.digest();
    format!("{:02x}{:02x}{:02x}{:02x}-s{seed}", d[0], d[1], d[2], d[3])
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<PcvDataset> {
    let ds = generate_synthetic(&args.spec())?;
    write_pcv(&args.out, &ds)?;
    println!(
        "wrote {} videos ({} classes, T={}, N={}) to {} ({} bytes)",
        ds.videos.len(),
        ds.num_classes,
        ds.frames,
        ds.points,
        args.out.display(),
        ds.byte_len()
    );
    Ok(ds)
}

fn train_row(run: &str, r: &EpochRecord, batch_size: usize) -> Vec<String> {
    vec![
        TRAIN_SCHEMA.into(),
        run.into(),
        r.epoch.to_string(),
        format!("{:e}", r.lr),
        format!("{:e}", r.train_loss),
        format!("{:.6}", r.test_accuracy),
        r.ball_queries.to_string(),
        r.member_embeddings.to_string(),
        r.macs.to_string(),
        r.peak_bytes.to_string(),
        r.wall_ns.to_string(),
        batch_size.to_string(),
    ]
}

pub fn metrics_path(args: &TrainArgs) -> PathBuf {
    args.metrics.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".csv");
        PathBuf::from(p)
    })
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<Vec<EpochRecord>> {
    let ds = read_pcv(&args.data)?;
    let cfg = args.model.config(ds.num_classes)?;
    let opts = TrainOptions {
        cfg: cfg.clone(),
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        base_lr: args.lr,
        momentum: args.momentum,
        parallel: args.parallel,
    };
    let run = run_id(&cfg, args.seed);
    let mut w = writer(&metrics_path(args))?;
    w.write_record(TRAIN_COLUMNS)?;
    let mut csv_err = None;
    let outcome = train_model(&ds, &opts, |r| {
        let res = w.write_record(train_row(&run, r, args.batch_size)).and_then(|_| Ok(w.flush()?));
        if let Err(e) = res {
            csv_err.get_or_insert(e);
        }
        println!(
            "epoch {:>3}  lr {:.5}  loss {:.4}  test acc {:.4}",
            r.epoch, r.lr, r.train_loss, r.test_accuracy
        );
    });
    w.flush().map_err(csv::Error::from)?;
    if let Some(e) = csv_err {
        return Err(e.into());
    }
    let outcome = outcome?;
    save_checkpoint(&args.out, &cfg, &outcome.params)?;
    let acc = outcome.history.last().map_or(f64::NAN, |r| r.test_accuracy);
    println!("run {run}: {} epochs, test accuracy {acc:.4}, checkpoint {}", args.epochs, args.out.display());
    Ok(outcome.history)
}

pub fn write_confusion(path: &Path, c: &Confusion) -> CliResult<()> {
    let classes = c.counts.len();
    let mut w = writer(path)?;
    let mut header = vec!["schema".to_string(), "true_label".into(), "count".into(), "correct".into()];
    header.extend((0..classes).map(|p| format!("pred_{p}")));
    w.write_record(&header)?;
    for (t, row) in c.counts.iter().enumerate() {
        let mut rec = vec![EVAL_SCHEMA.to_string(), t.to_string(), row.iter().sum::<usize>().to_string(), row[t].to_string()];
        rec.extend(row.iter().map(usize::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<Confusion> {
    let ds = read_pcv(&args.data)?;
    let cfg = args.model.config(ds.num_classes)?;
    let params = load_checkpoint(&args.checkpoint, &cfg)?;
    let occlusion = args
        .occlude_ratio
        .map(|r| {
            check_ratio(r).map(|ratio| Occlusion {
                ratio,
                seed: args.occlude_seed,
                mode: args.occlude_center.into(),
            })
        })
        .transpose()?;
    let videos = held_out(&ds, args.seed, occlusion)?;
    let opts = GeometryOptions {
        seed: args.seed,
        parallel: args.parallel,
        force_zero_motion: false,
    };
    let mut probe = Probe::default();
    let refs: Vec<_> = videos.iter().collect();
    let prepared = prepare_all(&refs, &cfg, opts, &mut probe)?;
    let c = confusion(&params, &prepared, &mut probe)?;
    if let Some(out) = &args.out {
        write_confusion(out, &c)?;
    }
    let mode = match occlusion {
        Some(o) => format!("occluded (ratio {}, seed {})", o.ratio, o.seed),
        None => "clean".into(),
    };
    println!("{mode}: accuracy {:.4} ({}/{})", c.accuracy(), c.correct(), c.total());
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImitatorSummary {
    pub imitator: f64,
    pub baseline: f64,
    pub rows: usize,
}

impl ImitatorSummary {
    /// Relative improvement of the imitator over the baseline.
    pub fn reduction(&self) -> f64 {
        1.0 - self.imitator / self.baseline
    }
}

pub fn cmd_imitator_eval(args: &ImitatorEvalArgs) -> CliResult<ImitatorSummary> {
    let ds = read_pcv(&args.data)?;
    let cfg = args.model.config(ds.num_classes)?;
    if let Some(ck) = &args.checkpoint {
        if read_checkpoint(ck)?.digest != cfg.digest() {
            return Err(Error::DigestMismatch.into());
        }
    }
    let stage = &cfg.stages[0];
    let mut w = writer(&args.out)?;
    w.write_record(IMITATOR_COLUMNS)?;
    let (mut sum_i, mut sum_b, mut sum_n, mut rows) = (0.0, 0.0, 0.0, 0usize);
    for (vi, v) in ds.videos.iter().enumerate() {
        let label = v.label.unwrap_or(0);
        if !args.labels.is_empty() && !args.labels.contains(&label) {
            continue;
        }
        for r in imitator_chamfer(v, stage, cfg.imitator_k, cfg.motion_sign, args.seed)? {
            w.write_record([
                IMITATOR_SCHEMA.to_string(),
                "frame".into(),
                vi.to_string(),
                label.to_string(),
                r.t.to_string(),
                format!("{:e}", r.imitator),
                format!("{:e}", r.baseline),
                format!("{:e}", r.mean_motion_norm),
                r.fallback_anchors.to_string(),
            ])?;
            sum_i += r.imitator;
            sum_b += r.baseline;
            sum_n += r.mean_motion_norm;
            rows += 1;
        }
    }
    let n = rows.max(1) as f64;
    let summary = ImitatorSummary {
        imitator: sum_i / n,
        baseline: sum_b / n,
        rows,
    };
    w.write_record([
        IMITATOR_SCHEMA.to_string(),
        "summary".into(),
        String::new(),
        String::new(),
        String::new(),
        format!("{:e}", summary.imitator),
        format!("{:e}", summary.baseline),
        format!("{:e}", sum_n / n),
        String::new(),
    ])?;
    w.flush().map_err(csv::Error::from)?;
    println!(
        "{rows} transitions: imitator chamfer {:.4e}, baseline {:.4e}, reduction {:.1}%",
        summary.imitator,
        summary.baseline,
        100.0 * summary.reduction()
    );
    if sum_n / n < 1e-3 {
        println!("note: motion is near zero, so both chamfers measure within-frame spread only");
    }
    Ok(summary)
}

fn bench_row(run: &str, preset: &str, r: &BenchRecord) -> Vec<String> {
    vec![
        BENCH_SCHEMA.into(),
        run.into(),
        r.pipeline.to_string(),
        preset.into(),
        r.delta_t.to_string(),
        r.points.to_string(),
        r.frames.to_string(),
        r.batch_size.to_string(),
        r.parallel.to_string(),
        r.warmup.to_string(),
        r.iters.to_string(),
        r.stage_ns.to_string(),
        r.forward_ns.to_string(),
        r.ball_queries.to_string(),
        r.distance_evals.to_string(),
        r.member_embeddings.to_string(),
        r.interior_embeddings.to_string(),
        r.analytic_macs.to_string(),
        (2 * r.analytic_macs).to_string(),
        r.graph_macs.to_string(),
        r.peak_bytes.to_string(),
        format!("{:016x}", r.checksum),
    ]
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<Vec<BenchRecord>> {
    let cfg = args.model().config(args.classes)?;
    let video = match &args.data {
        Some(p) => read_pcv(p)?
            .videos
            .into_iter()
            .next()
            .ok_or_else(|| CliError::Config(format!("{} has no videos", p.display())))?,
        None => {
            let spec = SyntheticSpec {
                classes: vec![MotionClass::TranslateX],
                n_points: args.points,
                t_frames: args.frames,
                videos_per_class: 1,
                seed: args.seed,
                ..SyntheticSpec::default()
            };
            synthesize_video(&spec, MotionClass::TranslateX, 0, 0)?
        }
    };
    let params = ModelParams::init(&cfg, args.seed)?;
    let opts = BenchOptions {
        cfg: cfg.clone(),
        delta_t: args.delta_t,
        warmup: args.warmup,
        iters: args.iters,
        seed: args.seed,
        parallel: args.parallel,
        batch_size: args.batch_size,
    };
    let pipelines = match args.pipeline {
        PipelineArg::Onestep => vec![Pipeline::OneStep],
        PipelineArg::Dense => vec![Pipeline::Dense],
        PipelineArg::Both => vec![Pipeline::OneStep, Pipeline::Dense],
    };
    let run = run_id(&cfg, args.seed);
    let mut w = writer(&args.out)?;
    w.write_record(BENCH_COLUMNS)?;
    let mut out = Vec::new();
    for p in pipelines {
        let rec = bench(p, &video, &params, &opts)?;
        w.write_record(bench_row(&run, &args.preset, &rec))?;
        println!(
            "{:<8} dt={} stage {:.3} ms  forward {:.3} ms  queries {}  embeddings {}  macs {}",
            rec.pipeline.name(),
            rec.delta_t,
            rec.stage_ns as f64 / 1e6,
            rec.forward_ns as f64 / 1e6,
            rec.ball_queries,
            rec.member_embeddings,
            rec.analytic_macs
        );
        out.push(rec);
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(out)
}
