//! Seeded synthetic motion classes.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::pcv::PcvDataset;
use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::video::PointCloudVideo;

pub const TRANSLATE_STEP: f64 = 0.05;
pub const ROTATE_STEP_DEG: f64 = 6.0;
pub const OSCILLATE_AMPLITUDE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionClass {
    Static,
    TranslateX,
    TranslateY,
    RotateZ,
    OscillateScale,
    Zigzag,
}

impl MotionClass {
    pub const ALL: [MotionClass; 6] = [
        MotionClass::Static,
        MotionClass::TranslateX,
        MotionClass::TranslateY,
        MotionClass::RotateZ,
        MotionClass::OscillateScale,
        MotionClass::Zigzag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MotionClass::Static => "static",
            MotionClass::TranslateX => "translate_x",
            MotionClass::TranslateY => "translate_y",
            MotionClass::RotateZ => "rotate_z",
            MotionClass::OscillateScale => "oscillate_scale",
            MotionClass::Zigzag => "zigzag",
        }
    }

    /// Position of `p` at frame `t` of `frames`, relative to the base shape
    /// with centroid `c`.
    pub fn apply(self, p: &Point3, c: &Point3, t: usize, frames: usize) -> Point3 {
        let tf = t as f64;
        match self {
            MotionClass::Static => *p,
            MotionClass::TranslateX => [p[0] + TRANSLATE_STEP * tf, p[1], p[2]],
            MotionClass::TranslateY => [p[0], p[1] + TRANSLATE_STEP * tf, p[2]],
            MotionClass::RotateZ => {
                let (s, co) = (ROTATE_STEP_DEG.to_radians() * tf).sin_cos();
                let (x, y) = (p[0] - c[0], p[1] - c[1]);
                [c[0] + co * x - s * y, c[1] + s * x + co * y, p[2]]
            }
            MotionClass::OscillateScale => {
                let k = 1.0 + OSCILLATE_AMPLITUDE * (2.0 * PI * tf / frames as f64).sin();
                [c[0] + k * (p[0] - c[0]), c[1] + k * (p[1] - c[1]), c[2] + k * (p[2] - c[2])]
            }
            MotionClass::Zigzag => [p[0] + zigzag_offset(t, frames), p[1], p[2]],
        }
    }
}

/// Net x displacement after `t` frames moving +x, then -x, alternating every
/// `ceil(frames / 4)` frames.
pub fn zigzag_offset(t: usize, frames: usize) -> f64 {
    let leg = frames.div_ceil(4).max(1);
    (0..t)
        .map(|s| if (s / leg).is_multiple_of(2) { TRANSLATE_STEP } else { -TRANSLATE_STEP })
        .sum()
}

impl fmt::Display for MotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MotionClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown motion class `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: Vec<MotionClass>,
    pub n_points: usize,
    pub t_frames: usize,
    pub videos_per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Compact clusters making up the base shape.
    pub parts: usize,
    /// Standard deviation of points around their cluster center.
    pub part_spread: f64,
    /// Minimum distance between cluster centers.
    pub part_separation: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: MotionClass::ALL.to_vec(),
            n_points: 128,
            t_frames: 16,
            videos_per_class: 40,
            noise_sigma: 0.002,
            seed: 0,
            parts: 6,
            part_spread: 0.003,
            part_separation: 0.4,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() || self.n_points == 0 || self.t_frames == 0 || self.parts == 0 {
            return Err(Error::Config(
                "synthetic spec needs classes, points, frames and parts".into(),
            ));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("part_spread", self.part_spread),
            ("part_separation", self.part_separation),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

fn base_shape(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    let mut centers: Vec<Point3> = Vec::with_capacity(spec.parts);
    let draw = |rng: &mut ChaCha8Rng| -> Point3 { std::array::from_fn(|_| rng.random_range(0.15..0.85)) };
    while centers.len() < spec.parts {
        let mut c = draw(rng);
        for _ in 0..1000 {
            let ok = centers
                .iter()
                .all(|o| crate::geom::sq_dist(o, &c) >= spec.part_separation * spec.part_separation);
            if ok {
                break;
            }
            c = draw(rng);
        }
        centers.push(c);
    }
    let spread = Normal::new(0.0, spec.part_spread).expect("validated spread");
    (0..spec.n_points)
        .map(|i| {
            let c = centers[i % spec.parts];
            std::array::from_fn(|d| (c[d] + spread.sample(rng)).clamp(0.0, 1.0))
        })
        .collect()
}

fn centroid(points: &[Point3]) -> Point3 {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for d in 0..3 {
            c[d] += p[d];
        }
    }
    c.map(|v| v / n)
}

/// One video of `class` from its own random stream.
pub fn synthesize_video(spec: &SyntheticSpec, class: MotionClass, label: usize, stream: u64) -> Result<PointCloudVideo> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let base = base_shape(spec, &mut rng);
    let c = centroid(&base);
    let jitter = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let frames = (0..spec.t_frames)
        .map(|t| {
            base.iter()
                .map(|p| {
                    let q = class.apply(p, &c, t, spec.t_frames);
                    std::array::from_fn(|d| {
                        let n = if spec.noise_sigma > 0.0 { jitter.sample(&mut rng) } else { 0.0 };
                        q[d] + n
                    })
                })
                .collect()
        })
        .collect();
    PointCloudVideo::from_points(frames, Some(label))
}

/// `videos_per_class` videos per class, class-major; labels are class
/// positions in `spec.classes`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<PcvDataset> {
    spec.validate()?;
    let mut videos = Vec::with_capacity(spec.classes.len() * spec.videos_per_class);
    for (label, &class) in spec.classes.iter().enumerate() {
        for v in 0..spec.videos_per_class {
            let stream = (label * spec.videos_per_class + v) as u64;
            videos.push(synthesize_video(spec, class, label, stream)?);
        }
    }
    PcvDataset::new(spec.t_frames, spec.n_points, spec.classes.len(), videos)
}
