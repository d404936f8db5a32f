use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::autodiff::{BoundMlp, Gradients, Graph, MlpBlock, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StageParams {
    pub member_mlp: MlpBlock,
    pub pooled_mlp: Option<MlpBlock>,
}

/// Learned weights for every stage plus the classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub stages: Vec<StageParams>,
    pub head: MlpBlock,
}

#[derive(Debug, Clone)]
pub struct BoundStage {
    pub member_mlp: BoundMlp,
    pub pooled_mlp: Option<BoundMlp>,
}

#[derive(Debug, Clone)]
pub struct BoundModel {
    pub stages: Vec<BoundStage>,
    pub head: BoundMlp,
}

impl BoundModel {
    /// Graph handles in the same order as [`ModelParams::named_tensors`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for s in &self.stages {
            out.extend(s.member_mlp.vars());
            if let Some(p) = &s.pooled_mlp {
                out.extend(p.vars());
            }
        }
        out.extend(self.head.vars());
        out
    }
}

fn layer_names(prefix: &str, mlp: &MlpBlock, out: &mut Vec<String>) {
    for i in 0..mlp.layers.len() {
        out.push(format!("{prefix}.{i}.weight"));
        out.push(format!("{prefix}.{i}.bias"));
    }
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stages = Vec::with_capacity(cfg.stages.len());
        for (s, cin) in cfg.stages.iter().zip(cfg.stage_in_channels()) {
            let member_mlp = MlpBlock::init(cin, s.member_mlp(), true, &mut rng)?;
            let pooled_mlp = match s.pooled_mlp() {
                Some(w) => Some(MlpBlock::init(member_mlp.out_dim(), w, true, &mut rng)?),
                None => None,
            };
            stages.push(StageParams {
                member_mlp,
                pooled_mlp,
            });
        }
        let mut widths = cfg.head_hidden.clone();
        widths.push(cfg.num_classes);
        let head = MlpBlock::init(cfg.feature_channels(), &widths, false, &mut rng)?;
        Ok(Self { stages, head })
    }

    fn mlps(&self) -> Vec<(String, &MlpBlock)> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            out.push((format!("stage{i}.mlp1"), &s.member_mlp));
            if let Some(p) = &s.pooled_mlp {
                out.push((format!("stage{i}.mlp2"), p));
            }
        }
        out.push(("head".to_string(), &self.head));
        out
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (prefix, mlp) in self.mlps() {
            layer_names(&prefix, mlp, &mut names);
        }
        names
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let names = self.names();
        let tensors = self.mlps().into_iter().flat_map(|(_, m)| m.tensors());
        names.into_iter().zip(tensors).collect()
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let names = self.names();
        let mut tensors: Vec<&mut Tensor> = Vec::new();
        for s in &mut self.stages {
            tensors.extend(s.member_mlp.tensors_mut());
            if let Some(p) = &mut s.pooled_mlp {
                tensors.extend(p.tensors_mut());
            }
        }
        tensors.extend(self.head.tensors_mut());
        names.into_iter().zip(tensors).collect()
    }

    pub fn param_count(&self) -> usize {
        self.mlps().iter().map(|(_, m)| m.param_count()).sum()
    }

    pub fn bind(&self, g: &mut Graph, track: bool) -> BoundModel {
        BoundModel {
            stages: self
                .stages
                .iter()
                .map(|s| BoundStage {
                    member_mlp: s.member_mlp.bind(g, track),
                    pooled_mlp: s.pooled_mlp.as_ref().map(|p| p.bind(g, track)),
                })
                .collect(),
            head: self.head.bind(g, track),
        }
    }

    /// Copies the adjoints of `bound` into each tensor's gradient buffer.
    pub fn store_grads(&mut self, bound: &BoundModel, grads: &Gradients) -> Result<()> {
        let vars = bound.vars();
        for ((_, t), v) in self.named_tensors_mut().into_iter().zip(vars) {
            let g = grads
                .get(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.len()]);
            t.set_grad(g)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for (_, t) in self.named_tensors_mut() {
            t.zero_grad();
        }
    }

    /// Rebuilds parameters for `cfg` from named tensors, checking every name
    /// and shape against a fresh initialization.
    pub fn from_named(cfg: &ModelConfig, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let mut params = Self::init(cfg, 0)?;
        let expected = params.names();
        if expected.len() != tensors.len() {
            return Err(Error::Malformed(format!(
                "expected {} parameter records, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((name, slot), (got_name, t)) in params.named_tensors_mut().into_iter().zip(tensors) {
            if name != got_name {
                return Err(Error::Malformed(format!("expected `{name}`, found `{got_name}`")));
            }
            if slot.shape() != t.shape() {
                return Err(Error::Shape {
                    op: "load parameter",
                    left: slot.shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
            *slot = t.with_requires_grad();
        }
        Ok(params)
    }
}
