//! Central-difference checks of every graph operation and of the full model.

#![allow(clippy::needless_range_loop)]

use pvnext_core::autodiff::{Graph, Tensor, Var};
use pvnext_core::geom::Point3;
use pvnext_core::model::{
    forward_logits, video_geometry, GeometryOptions, ModelConfig, ModelParams, StageConfig, StageGeometry,
};
use pvnext_core::probe::Probe;
use pvnext_core::video::PointCloudVideo;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const OP_TOL: f64 = 1e-4;
const MODEL_TOL: f64 = 1e-3;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Values bounded away from zero so ReLU kinks stay outside `±H`.
fn off_kink(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = random(shape, rng);
    for v in t.values_mut() {
        if v.abs() < 0.05 {
            *v += 0.1_f64.copysign(*v);
        }
    }
    t
}

/// Builds `op`, contracts its output with a fixed random vector and returns
/// the scalar.
fn scalar(g: &mut Graph, y: Var, proj: &[f64]) -> Var {
    let n: usize = g.shape(y).iter().product();
    assert_eq!(n, proj.len());
    if n == 1 {
        return y;
    }
    let flat = g.reshape(y, vec![1, n]).unwrap();
    let w = g.constant(vec![1, n], proj.to_vec()).unwrap();
    let b = g.constant(vec![1], vec![0.0]).unwrap();
    let z = g.linear(flat, w, b).unwrap();
    g.mean(z)
}

fn check_op<F>(name: &str, inputs: &[Tensor], op: F)
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |ins: &[Tensor], proj: &[f64]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.leaf(t, false)).collect();
        let y = op(&mut g, &vars);
        let s = scalar(&mut g, y, proj);
        g.value(s)[0]
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t, true)).collect();
    let y = op(&mut g, &vars);
    let n: usize = g.shape(y).iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let proj: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let s = scalar(&mut g, y, &proj);
    let grads = g.backward(s).unwrap();

    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; input.len()]);
        for e in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].values_mut()[e] += H;
            let mut minus = inputs.to_vec();
            minus[k].values_mut()[e] -= H;
            let numeric = (eval(&plus, &proj) - eval(&minus, &proj)) / (2.0 * H);
            worst = worst.max(rel_err(analytic[e], numeric));
        }
    }
    assert!(worst <= OP_TOL, "{name}: worst relative error {worst:e}");
}

#[test]
fn linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ins = [random(vec![3, 4], &mut rng), random(vec![2, 4], &mut rng), random(vec![2], &mut rng)];
    check_op("linear", &ins, |g, v| g.linear(v[0], v[1], v[2]).unwrap());
}

#[test]
fn relu() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    check_op("relu", &[off_kink(vec![3, 5], &mut rng)], |g, v| g.relu(v[0]));
}

#[test]
fn add_and_sub() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ins = [random(vec![2, 3], &mut rng), random(vec![2, 3], &mut rng)];
    check_op("add", &ins, |g, v| g.add(v[0], v[1]).unwrap());
    check_op("sub", &ins, |g, v| g.sub(v[0], v[1]).unwrap());
}

#[test]
fn add_same_operand_twice() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    check_op("add(x, x)", &[random(vec![2, 2], &mut rng)], |g, v| g.add(v[0], v[0]).unwrap());
}

#[test]
fn reshape() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    check_op("reshape", &[random(vec![2, 6], &mut rng)], |g, v| g.reshape(v[0], vec![3, 2, 2]).unwrap());
}

#[test]
fn max_pool_every_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(vec![2, 3, 4], &mut rng);
    for axis in 0..3 {
        check_op(&format!("max_pool axis {axis}"), std::slice::from_ref(&x), |g, v| g.max_pool(v[0], axis).unwrap().0);
    }
}

#[test]
fn segment_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    check_op("segment_max", &[random(vec![6, 3], &mut rng)], |g, v| g.segment_max(v[0], &[1, 3, 2]).unwrap());
}

#[test]
fn mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    check_op("mean", &[random(vec![4, 3], &mut rng)], |g, v| g.mean(v[0]));
}

#[test]
fn gather_rows_with_repeats() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    check_op("gather_rows", &[random(vec![3, 2], &mut rng)], |g, v| g.gather_rows(v[0], vec![0, 2, 2, 1, 0]).unwrap());
}

#[test]
fn concats() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let ins = [random(vec![3, 2], &mut rng), random(vec![3, 4], &mut rng)];
    check_op("concat_cols", &ins, |g, v| g.concat_cols(v[0], v[1]).unwrap());
    let ins = [random(vec![1, 3], &mut rng), random(vec![2, 3], &mut rng), random(vec![1, 3], &mut rng)];
    check_op("concat_rows", &ins, |g, v| g.concat_rows(v).unwrap());
}

#[test]
fn softmax_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut logits = random(vec![3, 4], &mut rng);
    logits.values_mut().iter_mut().for_each(|v| *v *= 4.0);
    check_op("softmax_cross_entropy", &[logits], |g, v| g.softmax_cross_entropy(v[0], &[2, 0, 3]).unwrap());
}

#[test]
fn composed_mlp_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let ins = [
        random(vec![5, 3], &mut rng),
        random(vec![4, 3], &mut rng),
        off_kink(vec![4], &mut rng),
        random(vec![2, 4], &mut rng),
        random(vec![2], &mut rng),
    ];
    check_op("mlp chain", &ins, |g, v| {
        let h = g.linear(v[0], v[1], v[2]).unwrap();
        let h = g.relu(h);
        let o = g.linear(h, v[3], v[4]).unwrap();
        let grouped = g.reshape(o, vec![5, 1, 2]).unwrap();
        let (p, _) = g.max_pool(grouped, 1).unwrap();
        g.softmax_cross_entropy(p, &[0, 1, 1, 0, 1]).unwrap()
    });
}

fn tiny_video(n: usize, frames: usize, rng: &mut ChaCha8Rng, label: usize) -> PointCloudVideo {
    let drift: Point3 = std::array::from_fn(|_| rng.random_range(-0.05..0.05));
    let base: Vec<Point3> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0.0..0.6))).collect();
    let frames = (0..frames)
        .map(|t| {
            base.iter()
                .map(|p| std::array::from_fn(|d| p[d] + drift[d] * t as f64 + rng.random_range(-0.01..0.01)))
                .collect()
        })
        .collect();
    PointCloudVideo::from_points(frames, Some(label)).unwrap()
}

fn batch_loss(params: &ModelParams, geos: &[Vec<StageGeometry>], labels: &[usize], track: bool) -> (Graph, Var, Vec<Var>) {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, track);
    let logits: Vec<Var> = geos
        .iter()
        .map(|geo| forward_logits(&mut g, geo, &bound, &mut Probe::default()).unwrap())
        .collect();
    let stacked = g.concat_rows(&logits).unwrap();
    let loss = g.softmax_cross_entropy(stacked, labels).unwrap();
    (g, loss, bound.vars())
}

fn check_model(cfg: &ModelConfig, n: usize, frames: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let videos: Vec<PointCloudVideo> = (0..2).map(|i| tiny_video(n, frames, &mut rng, i)).collect();
    let geos: Vec<Vec<StageGeometry>> = videos
        .iter()
        .map(|v| video_geometry(v, cfg, GeometryOptions::seeded(seed), &mut Probe::default()).unwrap())
        .collect();
    let labels = [0, 1];
    let mut params = ModelParams::init(cfg, seed).unwrap();
    // Non-zero biases so every layer's bias gradient is exercised off the origin.
    for (_, t) in params.named_tensors_mut() {
        if t.shape().len() == 1 {
            t.values_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.2..0.2));
        }
    }

    let (g, loss, vars) = batch_loss(&params, &geos, &labels, true);
    let grads = g.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| grads.get(v).unwrap().to_vec()).collect();

    let mut worst: f64 = 0.0;
    for p in 0..analytic.len() {
        for e in 0..analytic[p].len() {
            let value_at = |delta: f64| {
                let mut q = params.clone();
                q.named_tensors_mut()[p].1.values_mut()[e] += delta;
                let (g, loss, _) = batch_loss(&q, &geos, &labels, false);
                g.value(loss)[0]
            };
            let numeric = (value_at(H) - value_at(-H)) / (2.0 * H);
            worst = worst.max(rel_err(analytic[p][e], numeric));
        }
    }
    worst
}

fn micro_check_config(imitator: bool) -> ModelConfig {
    ModelConfig {
        stages: vec![StageConfig::new(vec![vec![6], vec![8]], 4, 4, 0.3)],
        num_classes: 3,
        imitator_enabled: imitator,
        head_hidden: vec![8],
        ..ModelConfig::micro(3)
    }
}

#[test]
fn end_to_end_one_stage() {
    for imitator in [true, false] {
        let worst = check_model(&micro_check_config(imitator), 16, 3, 21);
        assert!(worst <= MODEL_TOL, "imitator {imitator}: worst relative error {worst:e}");
    }
}

#[test]
fn end_to_end_two_stages_through_gathered_features() {
    let cfg = ModelConfig {
        stages: vec![
            StageConfig::new(vec![vec![4]], 4, 2, 0.3),
            StageConfig::new(vec![vec![6], vec![6]], 3, 2, 0.5),
        ],
        head_hidden: vec![],
        ..micro_check_config(true)
    };
    let worst = check_model(&cfg, 16, 3, 22);
    assert!(worst <= MODEL_TOL, "worst relative error {worst:e}");
}
