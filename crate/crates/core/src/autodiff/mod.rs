//! Minimal reverse-mode engine: just the operations the encoder needs.

mod graph;
mod nn;
mod optim;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use nn::{BoundLinear, BoundMlp, LinearLayer, MlpBlock};
pub use optim::{Sgd, SgdSchedule};
pub use tensor::Tensor;

use crate::error::Result;

/// Applies a layer to a batch outside of any larger graph.
pub fn forward_linear(x: &Tensor, layer: &LinearLayer) -> Result<Tensor> {
    let mut g = Graph::new();
    let xv = g.leaf(x, false);
    let bound = layer.bind(&mut g, false);
    let y = bound.forward(&mut g, xv)?;
    Ok(g.tensor(y))
}

/// Max over `axis` with the winning position per output element.
pub fn maxpool_over_axis(x: &Tensor, axis: usize) -> Result<(Tensor, Vec<usize>)> {
    let mut g = Graph::new();
    let xv = g.leaf(x, false);
    let (y, arg) = g.max_pool(xv, axis)?;
    Ok((g.tensor(y), arg))
}

pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut g = Graph::new();
    let z = g.leaf(logits, false);
    let l = g.softmax_cross_entropy(z, labels)?;
    Ok(g.value(l)[0])
}
