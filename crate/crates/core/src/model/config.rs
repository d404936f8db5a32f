use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imitator::MotionSign;

/// One encoder stage. `mlps[0]` runs on every group member, `mlps[1]` (when
/// present) on the pooled vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub mlps: Vec<Vec<usize>>,
    pub nsamples: usize,
    pub spatial_stride: usize,
    pub radius: f64,
    /// Divide member coordinates by `radius` before the member MLP.
    #[serde(default = "default_true")]
    pub normalize_xyz: bool,
}

fn default_true() -> bool {
    true
}

impl StageConfig {
    pub fn new(mlps: Vec<Vec<usize>>, nsamples: usize, spatial_stride: usize, radius: f64) -> Self {
        Self {
            mlps,
            nsamples,
            spatial_stride,
            radius,
            normalize_xyz: true,
        }
    }

    /// Factor applied to member coordinates on entry to the member MLP.
    pub fn coord_scale(&self) -> f64 {
        if self.normalize_xyz {
            1.0 / self.radius
        } else {
            1.0
        }
    }

    pub fn member_mlp(&self) -> &[usize] {
        &self.mlps[0]
    }

    pub fn pooled_mlp(&self) -> Option<&[usize]> {
        self.mlps.get(1).map(Vec::as_slice)
    }

    pub fn out_channels(&self) -> usize {
        *self
            .mlps
            .last()
            .and_then(|m| m.last())
            .expect("validated stage has widths")
    }

    /// `max(1, floor(m_in / stride))`.
    pub fn anchors_for(&self, m_in: usize) -> usize {
        (m_in / self.spatial_stride).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mlps.is_empty() || self.mlps.len() > 2 {
            return Err(Error::Config("a stage has one or two MLP width lists".into()));
        }
        if self.mlps.iter().any(|m| m.is_empty() || m.contains(&0)) {
            return Err(Error::Config("MLP widths must be positive".into()));
        }
        if self.nsamples == 0 || self.spatial_stride == 0 {
            return Err(Error::Config("nsamples and spatial_stride must be positive".into()));
        }
        if !self.radius.is_finite() || self.radius <= 0.0 {
            return Err(Error::Radius(self.radius));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub stages: Vec<StageConfig>,
    pub num_classes: usize,
    pub imitator_k: usize,
    pub imitator_enabled: bool,
    pub motion_sign: MotionSign,
    pub head_hidden: Vec<usize>,
}

impl ModelConfig {
    fn with_stages(stages: Vec<StageConfig>, num_classes: usize) -> Self {
        Self {
            stages,
            num_classes,
            imitator_k: 3,
            imitator_enabled: true,
            motion_sign: MotionSign::Forward,
            head_hidden: vec![256],
        }
    }

    /// Three stages for MSR-Action3D-style input.
    pub fn msr(num_classes: usize) -> Self {
        Self::with_stages(
            vec![
                StageConfig::new(vec![vec![64]], 48, 32, 0.2),
                StageConfig::new(vec![vec![128], vec![128, 256]], 32, 8, 0.4),
                StageConfig::new(vec![vec![512], vec![512, 1024]], 8, 2, 0.4),
            ],
            num_classes,
        )
    }

    /// Five stages for NTU-RGBD-style input.
    pub fn ntu(num_classes: usize) -> Self {
        Self::with_stages(
            vec![
                StageConfig::new(vec![vec![64]], 32, 8, 0.1),
                StageConfig::new(vec![vec![128], vec![128, 256]], 48, 8, 0.2),
                StageConfig::new(vec![vec![128], vec![128, 256]], 16, 1, 0.4),
                StageConfig::new(vec![vec![128], vec![128, 256]], 24, 1, 0.4),
                StageConfig::new(vec![vec![512], vec![512, 1024]], 32, 4, 0.8),
            ],
            num_classes,
        )
    }

    /// Single small stage, cheap enough for finite differences and desk-scale
    /// training.
    pub fn micro(num_classes: usize) -> Self {
        Self::with_stages(
            vec![StageConfig::new(vec![vec![16], vec![16, 32]], 8, 4, 0.3)],
            num_classes,
        )
    }

    pub fn preset(name: &str, num_classes: usize) -> Result<Self> {
        match name {
            "msr" => Ok(Self::msr(num_classes)),
            "micro" => Ok(Self::micro(num_classes)),
            "ntu" => Ok(Self::ntu(num_classes)),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("model needs at least one stage".into()));
        }
        for s in &self.stages {
            s.validate()?;
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        if self.imitator_k == 0 {
            return Err(Error::ZeroNeighbors);
        }
        if self.head_hidden.contains(&0) {
            return Err(Error::Config("head widths must be positive".into()));
        }
        Ok(())
    }

    /// Anchor count per stage for `n` input points.
    pub fn stage_points(&self, n: usize) -> Vec<usize> {
        let mut m = n;
        self.stages
            .iter()
            .map(|s| {
                m = s.anchors_for(m);
                m
            })
            .collect()
    }

    /// Input channel count seen by each stage's member MLP (xyz included).
    pub fn stage_in_channels(&self) -> Vec<usize> {
        let mut c = 0;
        self.stages
            .iter()
            .map(|s| {
                let cin = 3 + c;
                c = s.out_channels();
                cin
            })
            .collect()
    }

    pub fn feature_channels(&self) -> usize {
        self.stages.last().map_or(0, StageConfig::out_channels)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).into()
    }
}
