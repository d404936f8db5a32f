//! Encoder and dense baseline against a loop-by-loop reference, plus the
//! counter and ablation identities.

#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use pvnext_core::autodiff::{Graph, MlpBlock};
use pvnext_core::dense::{dense_classify_with, dense_video_geometry, DenseConfig};
use pvnext_core::geom::{fps_start, Point3};
use pvnext_core::imitator::MotionSign;
use pvnext_core::model::{
    classify_with, encode_members, encode_stage, one_step_encode, stage_seed, video_geometry, GeometryOptions,
    ModelConfig, ModelParams, StageConfig,
};
use pvnext_core::probe::Probe;
use pvnext_core::video::PointCloudVideo;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixed(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x0e5),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn d2(a: &Point3, b: &Point3) -> f64 {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

fn drifting_video(n: usize, frames: usize, seed: u64) -> PointCloudVideo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step: Point3 = std::array::from_fn(|_| rng.random_range(-0.08..0.08));
    let base: Vec<Point3> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0.0..0.8))).collect();
    let frames = (0..frames)
        .map(|t| {
            base.iter()
                .map(|p| std::array::from_fn(|d| p[d] + step[d] * t as f64 + rng.random_range(-0.01..0.01)))
                .collect()
        })
        .collect();
    PointCloudVideo::from_points(frames, Some(0)).unwrap()
}

fn two_stage(classes: usize) -> ModelConfig {
    ModelConfig {
        stages: vec![
            StageConfig::new(vec![vec![8]], 6, 4, 0.25),
            StageConfig::new(vec![vec![8], vec![8, 12]], 4, 2, 0.5),
        ],
        head_hidden: vec![10],
        ..ModelConfig::micro(classes)
    }
}

// ---------------------------------------------------------------------------
// Loop-by-loop reference

fn mlp(block: &MlpBlock, x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    let last = block.layers.len() - 1;
    for (li, l) in block.layers.iter().enumerate() {
        let (w, b) = (l.weight.values(), l.bias.values());
        let mut out = vec![0.0; l.out_dim];
        for o in 0..l.out_dim {
            let mut acc = b[o];
            for i in 0..l.in_dim {
                acc += w[o * l.in_dim + i] * v[i];
            }
            out[o] = if li < last || block.final_activation { acc.max(0.0) } else { acc };
        }
        v = out;
    }
    v
}

fn ball(c: &Point3, pts: &[Point3], r: f64, k: usize) -> Vec<usize> {
    let inside: Vec<usize> = (0..pts.len()).filter(|&j| d2(&pts[j], c) <= r * r).collect();
    let mut out: Vec<usize>;
    if inside.is_empty() {
        let mut best = 0;
        for j in 1..pts.len() {
            if d2(&pts[j], c) < d2(&pts[best], c) {
                best = j;
            }
        }
        out = vec![best];
    } else {
        out = inside.into_iter().take(k).collect();
    }
    let first = out[0];
    out.resize(k, first);
    out
}

fn elementwise_max(acc: &mut Vec<f64>, v: Vec<f64>) {
    if acc.is_empty() {
        *acc = v;
    } else {
        for (a, b) in acc.iter_mut().zip(v) {
            if b > *a {
                *a = b;
            }
        }
    }
}

/// `Some(dt)` runs the dense window; `None` the one-step path.
fn reference_logits(video: &PointCloudVideo, cfg: &ModelConfig, params: &ModelParams, seed: u64, dense: Option<usize>) -> Vec<f64> {
    let mut coords: Vec<Vec<Point3>> = video.frames().iter().map(|f| f.points().to_vec()).collect();
    let mut feats: Option<Vec<Vec<f64>>> = None;
    let frames = coords.len();
    for (s, (stage, p)) in cfg.stages.iter().zip(&params.stages).enumerate() {
        let m_in = coords[0].len();
        let m_out = (m_in / stage.spatial_stride).max(1);
        let scale = if stage.normalize_xyz { 1.0 / stage.radius } else { 1.0 };
        let mut next_coords = Vec::new();
        let mut next_feats = Vec::new();
        for t in 0..frames {
            let pts = &coords[t];
            let start = fps_start(m_in, stage_seed(seed, s));
            let mut chosen = vec![start];
            while chosen.len() < m_out {
                let mut best = (f64::NEG_INFINITY, 0);
                for i in 0..m_in {
                    if chosen.contains(&i) {
                        continue;
                    }
                    let d = chosen.iter().map(|&c| d2(&pts[i], &pts[c])).fold(f64::INFINITY, f64::min);
                    if d > best.0 {
                        best = (d, i);
                    }
                }
                chosen.push(best.1);
            }
            let anchors: Vec<Point3> = chosen.iter().map(|&i| pts[i]).collect();
            for c in &anchors {
                let embed = |tau: usize, x: Point3| -> Vec<f64> {
                    let mut pooled = Vec::new();
                    for j in ball(c, &coords[tau], stage.radius, stage.nsamples) {
                        let q = coords[tau][j];
                        let mut row: Vec<f64> = (0..3).map(|d| (q[d] - c[d] + x[d]) * scale).collect();
                        if let Some(f) = &feats {
                            row.extend_from_slice(&f[tau * m_in + j]);
                        }
                        elementwise_max(&mut pooled, mlp(&p.member_mlp, &row));
                    }
                    pooled
                };
                let pooled = match dense {
                    None => {
                        let mut x = [0.0; 3];
                        if cfg.imitator_enabled {
                            let target = &coords[(t + 1).min(frames - 1)];
                            let g = ball(c, target, stage.radius, cfg.imitator_k);
                            for d in 0..3 {
                                let e = g.iter().map(|&j| target[j][d]).sum::<f64>() / g.len() as f64;
                                x[d] = cfg.motion_sign.value() * (e - c[d]);
                            }
                        }
                        embed(t, x)
                    }
                    Some(dt) => {
                        let mut acc = Vec::new();
                        for tau in t.saturating_sub(dt)..(t + dt + 1).min(frames) {
                            elementwise_max(&mut acc, embed(tau, [0.0; 3]));
                        }
                        acc
                    }
                };
                next_feats.push(match &p.pooled_mlp {
                    Some(m) => mlp(m, &pooled),
                    None => pooled,
                });
            }
            next_coords.push(anchors);
        }
        coords = next_coords;
        feats = Some(next_feats);
    }
    let mut global = Vec::new();
    for f in feats.unwrap() {
        elementwise_max(&mut global, f);
    }
    mlp(&params.head, &global)
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol * x.abs().max(1.0), "{a:?} vs {b:?}");
    }
}

#[test]
fn one_step_matches_reference() {
    for (i, cfg) in [ModelConfig::micro(4), two_stage(3)].into_iter().enumerate() {
        for imitator in [true, false] {
            for sign in [MotionSign::Forward, MotionSign::Reverse] {
                let cfg = ModelConfig { imitator_enabled: imitator, motion_sign: sign, ..cfg.clone() };
                let video = drifting_video(40, 5, 10 + i as u64);
                let params = ModelParams::init(&cfg, 3).unwrap();
                let got = classify_with(&video, &cfg, &params, GeometryOptions::seeded(7), &mut Probe::default()).unwrap();
                assert_close(&got, &reference_logits(&video, &cfg, &params, 7, None), 1e-12);
            }
        }
    }
}

#[test]
fn dense_matches_reference() {
    for (i, cfg) in [ModelConfig::micro(4), two_stage(3)].into_iter().enumerate() {
        for dt in 0..3 {
            let video = drifting_video(40, 5, 20 + i as u64);
            let params = ModelParams::init(&cfg, 4).unwrap();
            let got = dense_classify_with(&video, &cfg, &params, dt, GeometryOptions::seeded(8), &mut Probe::default()).unwrap();
            assert_close(&got, &reference_logits(&video, &cfg, &params, 8, Some(dt)), 1e-12);
        }
    }
}

#[test]
fn per_frame_encoding_matches_cached_stage() {
    let cfg = ModelConfig::micro(2);
    let video = drifting_video(32, 4, 1);
    let params = ModelParams::init(&cfg, 1).unwrap();
    let geo = video_geometry(&video, &cfg, GeometryOptions::seeded(2), &mut Probe::default()).unwrap();
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let whole = encode_stage(&mut g, &geo[0], None, &bound.stages[0], &mut Probe::default()).unwrap();
    let all = g.value(whole).to_vec();
    let (m, c) = (geo[0].m_out(), cfg.stages[0].out_channels());
    for t in 0..video.num_frames() {
        let per = one_step_encode(
            &mut g,
            video.frame(t),
            None,
            &geo[0].anchors.anchor_indices[t],
            &geo[0].motion.vectors[t],
            &cfg.stages[0],
            &bound.stages[0],
            &mut Probe::default(),
        )
        .unwrap();
        assert_eq!(g.value(per), &all[t * m * c..(t + 1) * m * c]);
    }
}

proptest! {
    #![proptest_config(fixed(24))]

    #[test]
    fn ball_query_count_is_two_per_anchor_frame(
        n in 16usize..80,
        frames in 1usize..6,
        seed in any::<u64>(),
        imitator in any::<bool>(),
    ) {
        let cfg = ModelConfig { imitator_enabled: imitator, ..two_stage(3) };
        let video = drifting_video(n, frames, seed);
        let mut probe = Probe::default();
        video_geometry(&video, &cfg, GeometryOptions::seeded(seed), &mut probe).unwrap();
        let per = if imitator { 2 } else { 1 };
        let want: usize = cfg.stage_points(n).iter().map(|m| m * frames * per).sum();
        prop_assert_eq!(probe.ball_queries, want as u64);
    }

    #[test]
    fn imitator_off_equals_zero_motion_bitwise(n in 16usize..64, frames in 2usize..5, seed in any::<u64>()) {
        let video = drifting_video(n, frames, seed);
        let on = two_stage(3);
        let off = ModelConfig { imitator_enabled: false, ..on.clone() };
        let params = ModelParams::init(&on, seed).unwrap();
        let zero = GeometryOptions { force_zero_motion: true, ..GeometryOptions::seeded(seed) };
        let a = classify_with(&video, &off, &params, GeometryOptions::seeded(seed), &mut Probe::default()).unwrap();
        let b = classify_with(&video, &on, &params, zero, &mut Probe::default()).unwrap();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn forward_plus_reverse_groups_is_twice_relative(n in 16usize..64, frames in 2usize..5, seed in any::<u64>()) {
        let video = drifting_video(n, frames, seed);
        let capture = |sign| {
            let cfg = ModelConfig { motion_sign: sign, ..two_stage(3) };
            let mut probe = Probe::capturing();
            video_geometry(&video, &cfg, GeometryOptions::seeded(seed), &mut probe).unwrap();
            probe.captures
        };
        let (fwd, rev) = (capture(MotionSign::Forward), capture(MotionSign::Reverse));
        prop_assert_eq!(fwd.len(), 2);
        for (f, r) in fwd.iter().zip(&rev) {
            prop_assert_eq!(&f.relative, &r.relative);
            for ((a, b), h) in f.shifted.iter().zip(&r.shifted).zip(&f.relative) {
                prop_assert!((a + b - 2.0 * h).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn dense_zero_window_equals_zero_motion_bitwise(n in 16usize..64, frames in 1usize..5, seed in any::<u64>()) {
        let video = drifting_video(n, frames, seed);
        let cfg = ModelConfig { imitator_enabled: false, ..two_stage(3) };
        let params = ModelParams::init(&cfg, seed).unwrap();
        let opts = GeometryOptions::seeded(seed);
        let a = classify_with(&video, &cfg, &params, opts, &mut Probe::default()).unwrap();
        let b = dense_classify_with(&video, &cfg, &params, 0, opts, &mut Probe::default()).unwrap();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn dense_counts_follow_window_law(n in 16usize..64, frames in 1usize..9, dt in 0usize..4, seed in any::<u64>()) {
        let cfg = ModelConfig::micro(2);
        let video = drifting_video(n, frames, seed);
        let mut probe = Probe::default();
        let geo = dense_video_geometry(&video, &cfg, dt, GeometryOptions::seeded(seed), &mut probe).unwrap();
        let d = DenseConfig::from_stage(&cfg.stages[0], dt);
        let m = cfg.stages[0].anchors_for(n);
        let windows: Vec<usize> = (0..frames).map(|t| d.window(t, frames).len()).collect();
        prop_assert_eq!(probe.ball_queries, (m * windows.iter().sum::<usize>()) as u64);
        let k = cfg.stages[0].nsamples;
        for t in 0..frames {
            prop_assert_eq!(geo[0].frame_members[t], (m * k * windows[t]) as u64);
            if t >= dt && t + dt < frames {
                prop_assert_eq!(windows[t], 2 * dt + 1);
            }
        }
    }

    #[test]
    fn duplicated_member_leaves_features_unchanged(seed in any::<u64>(), groups in 1usize..6, k in 1usize..5, dup in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stage_cfg = StageConfig::new(vec![vec![6], vec![5]], k, 1, 0.3);
        let cfg = ModelConfig { stages: vec![stage_cfg], ..ModelConfig::micro(2) };
        let params = ModelParams::init(&cfg, seed).unwrap();
        let xyz: Vec<f64> = (0..groups * k * 3).map(|_| rng.random_range(-0.3..0.3)).collect();
        let dup = dup % k;
        let mut xyz2 = Vec::new();
        for g in 0..groups {
            let group = &xyz[g * k * 3..(g + 1) * k * 3];
            xyz2.extend_from_slice(group);
            xyz2.extend_from_slice(&group[dup * 3..dup * 3 + 3]);
        }
        let run = |xyz: Vec<f64>, k: usize| {
            let mut g = Graph::new();
            let bound = params.bind(&mut g, false);
            let rows = vec![0; xyz.len() / 3];
            let out = encode_members(&mut g, xyz, 1.0, &rows, None, k, &bound.stages[0], &mut Probe::default()).unwrap();
            g.value(out).to_vec()
        };
        prop_assert_eq!(run(xyz, k), run(xyz2, k + 1));
    }

    #[test]
    fn parallel_geometry_is_bitwise_sequential(n in 16usize..64, frames in 1usize..6, seed in any::<u64>()) {
        let video = drifting_video(n, frames, seed);
        let cfg = two_stage(3);
        let seq = video_geometry(&video, &cfg, GeometryOptions::seeded(seed), &mut Probe::default()).unwrap();
        let par = video_geometry(&video, &cfg, GeometryOptions { parallel: true, ..GeometryOptions::seeded(seed) }, &mut Probe::default()).unwrap();
        prop_assert_eq!(seq, par);
    }
}

#[test]
fn forward_is_deterministic() {
    let cfg = two_stage(3);
    let params = ModelParams::init(&cfg, 5).unwrap();
    let video = drifting_video(48, 4, 5);
    let run = || classify_with(&video, &cfg, &params, GeometryOptions::seeded(5), &mut Probe::default()).unwrap();
    let a: Vec<u64> = run().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = run().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
}

#[test]
fn member_embeddings_scale_with_window_on_interior_frames() {
    let cfg = ModelConfig { imitator_enabled: true, ..ModelConfig::micro(2) };
    let video = drifting_video(64, 9, 3);
    let one = video_geometry(&video, &cfg, GeometryOptions::seeded(1), &mut Probe::default()).unwrap();
    let per_frame = (one[0].m_out() * cfg.stages[0].nsamples) as u64;
    for dt in 1..=3 {
        let dense = dense_video_geometry(&video, &cfg, dt, GeometryOptions::seeded(1), &mut Probe::default()).unwrap();
        for t in dt..video.num_frames() - dt {
            assert_eq!(dense[0].frame_members[t], (2 * dt as u64 + 1) * per_frame);
        }
    }
}
