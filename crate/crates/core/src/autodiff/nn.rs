use rand::Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Affine map `x -> W x + b` with `W: [out_dim, in_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearLayer {
    /// Glorot-uniform weights in `±sqrt(6 / (in + out))`, zero bias.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self::from_parts(
            Tensor::new(vec![out_dim, in_dim], w)?,
            Tensor::zeros(vec![out_dim])?,
        )
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        let ws = weight.shape().to_vec();
        if ws.len() != 2 || bias.shape() != [ws[0]] {
            return Err(Error::Shape {
                op: "linear layer",
                left: ws,
                right: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            in_dim: ws[1],
            out_dim: ws[0],
            weight: weight.with_requires_grad(),
            bias: bias.with_requires_grad(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    pub fn bind(&self, g: &mut Graph, track: bool) -> BoundLinear {
        BoundLinear {
            weight: g.leaf(&self.weight, track),
            bias: g.leaf(&self.bias, track),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Var,
}

impl BoundLinear {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        g.linear(x, self.weight, self.bias)
    }
}

/// Stack of affine layers with ReLU between consecutive layers, and after the
/// last one when `final_activation` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpBlock {
    pub layers: Vec<LinearLayer>,
    pub final_activation: bool,
}

impl MlpBlock {
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        widths: &[usize],
        final_activation: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut d = in_dim;
        for &w in widths {
            layers.push(LinearLayer::init(d, w, rng)?);
            d = w;
        }
        Self::new(layers, final_activation)
    }

    pub fn new(layers: Vec<LinearLayer>, final_activation: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Shape {
                    op: "mlp chain",
                    left: vec![pair[0].out_dim],
                    right: vec![pair[1].in_dim],
                });
            }
        }
        Ok(Self {
            layers,
            final_activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LinearLayer::param_count).sum()
    }

    /// Multiply-adds for one input row.
    pub fn macs_per_row(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| (l.in_dim * l.out_dim) as u64)
            .sum()
    }

    pub fn bind(&self, g: &mut Graph, track: bool) -> BoundMlp {
        BoundMlp {
            layers: self.layers.iter().map(|l| l.bind(g, track)).collect(),
            final_activation: self.final_activation,
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }
}

#[derive(Debug, Clone)]
pub struct BoundMlp {
    pub layers: Vec<BoundLinear>,
    pub final_activation: bool,
}

impl BoundMlp {
    pub fn forward(&self, g: &mut Graph, mut x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, x)?;
            if i < last || self.final_activation {
                x = g.relu(x);
            }
        }
        Ok(x)
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|l| [l.weight, l.bias])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_respects_glorot_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = LinearLayer::init(3, 64, &mut rng).unwrap();
        let bound = (6.0f64 / 67.0).sqrt();
        assert!(l.weight.values().iter().all(|w| w.abs() <= bound));
        assert!(l.bias.values().iter().all(|&b| b == 0.0));
        assert_eq!(l.param_count(), 256);
    }

    #[test]
    fn mlp_rejects_broken_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = LinearLayer::init(2, 3, &mut rng).unwrap();
        let b = LinearLayer::init(4, 1, &mut rng).unwrap();
        assert!(MlpBlock::new(vec![a, b], false).is_err());
    }
}
