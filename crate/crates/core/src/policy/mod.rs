//! The stochastic policy: a fully connected ReLU network from a constant
//! context vector to one distribution per design-parameter head.
//!
//! Because the context never changes, one forward pass yields the
//! distribution for the whole batch. Gradients are computed in two stages:
//! the objective is differentiated in the heads' natural parameters (see
//! [`DistributionSet::add_log_prob_grad`] and friends), then
//! [`PolicyParams::backward`] carries that through the head
//! parameterization and the network.

mod checkpoint;
mod dist;

pub use dist::{DistributionSet, Head, BETA_CLAMP};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::HeadKind;
use crate::error::{Error, Result};
use crate::special::{sigmoid, softplus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub input_width: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            input_width: 512,
            hidden_width: 4096,
            hidden_layers: 3,
        }
    }
}

impl PolicyConfig {
    pub fn desk(hidden_width: usize) -> Self {
        PolicyConfig {
            hidden_width,
            ..Default::default()
        }
    }
}

/// The fixed network input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextState(pub Vec<f64>);

impl ContextState {
    pub fn ones(width: usize) -> Self {
        ContextState(vec![1.0; width])
    }
}

/// Network weights, stored flat: for each layer the `rows × cols`
/// row-major weight matrix followed by `rows` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    shapes: Vec<(usize, usize)>,
    data: Vec<f64>,
    heads: Vec<HeadKind>,
}

/// Activations saved by [`PolicyParams::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    // inputs[l] is the input to layer l; the last entry is the raw output
    inputs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn raw_output(&self) -> &[f64] {
        self.inputs.last().expect("at least the input")
    }
}

fn layer_widths(config: &PolicyConfig, heads: &[HeadKind]) -> Vec<usize> {
    let mut w = vec![config.input_width];
    w.extend(std::iter::repeat_n(config.hidden_width, config.hidden_layers));
    w.push(heads.iter().map(|h| h.width()).sum());
    w
}

impl PolicyParams {
    /// Weights drawn uniformly from `±1/√fan_in`.
    pub fn init<R: Rng + ?Sized>(config: &PolicyConfig, heads: &[HeadKind], rng: &mut R) -> Self {
        let mut p = Self::zeros(config, heads);
        let mut off = 0;
        for &(rows, cols) in &p.shapes.clone() {
            let bound = 1.0 / (cols as f64).sqrt();
            for v in &mut p.data[off..off + rows * cols + rows] {
                *v = rng.random_range(-bound..=bound);
            }
            off += rows * cols + rows;
        }
        p
    }

    pub fn zeros(config: &PolicyConfig, heads: &[HeadKind]) -> Self {
        let widths = layer_widths(config, heads);
        let shapes: Vec<(usize, usize)> = widths.windows(2).map(|w| (w[1], w[0])).collect();
        let n = shapes.iter().map(|(r, c)| r * c + r).sum();
        PolicyParams {
            shapes,
            data: vec![0.0; n],
            heads: heads.to_vec(),
        }
    }

    pub(crate) fn from_parts(shapes: Vec<(usize, usize)>, data: Vec<f64>, heads: Vec<HeadKind>) -> Result<Self> {
        let n: usize = shapes.iter().map(|(r, c)| r * c + r).sum();
        if n != data.len() {
            return Err(Error::Shape {
                context: "policy parameters",
                expected: n,
                actual: data.len(),
            });
        }
        for w in shapes.windows(2) {
            if w[1].1 != w[0].0 {
                return Err(Error::Config(format!("layer widths do not chain: {:?} then {:?}", w[0], w[1])));
            }
        }
        let out = shapes.last().map_or(0, |s| s.0);
        let want: usize = heads.iter().map(|h| h.width()).sum();
        if out != want {
            return Err(Error::Shape {
                context: "policy output width",
                expected: want,
                actual: out,
            });
        }
        Ok(PolicyParams { shapes, data, heads })
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn heads(&self) -> &[HeadKind] {
        &self.heads
    }

    pub fn input_width(&self) -> usize {
        self.shapes.first().map_or(0, |s| s.1)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn forward(&self, s0: &ContextState) -> Result<DistributionSet> {
        Ok(self.forward_cached(s0)?.0)
    }

    pub fn forward_cached(&self, s0: &ContextState) -> Result<(DistributionSet, ForwardCache)> {
        if s0.0.len() != self.input_width() {
            return Err(Error::Shape {
                context: "context width",
                expected: self.input_width(),
                actual: s0.0.len(),
            });
        }
        let mut inputs = vec![s0.0.clone()];
        let mut off = 0;
        let last = self.shapes.len() - 1;
        for (l, &(rows, cols)) in self.shapes.iter().enumerate() {
            let w = &self.data[off..off + rows * cols];
            let b = &self.data[off + rows * cols..off + rows * cols + rows];
            let x = inputs.last().expect("input present");
            let mut z: Vec<f64> = w
                .chunks_exact(cols)
                .zip(b)
                .map(|(row, bias)| bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    context: "forward",
                    layer: l,
                });
            }
            if l < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(z);
            off += rows * cols + rows;
        }
        let cache = ForwardCache { inputs };
        Ok((self.heads_from_raw(cache.raw_output()), cache))
    }

    /// `α, β = 1 + softplus(raw)` for Beta heads, softmax for categorical.
    fn heads_from_raw(&self, raw: &[f64]) -> DistributionSet {
        let mut off = 0;
        let heads = self
            .heads
            .iter()
            .map(|kind| {
                let w = kind.width();
                let r = &raw[off..off + w];
                off += w;
                match kind {
                    HeadKind::Beta => Head::beta(1.0 + softplus(r[0]), 1.0 + softplus(r[1])),
                    HeadKind::Categorical(_) => Head::from_logits(r),
                }
            })
            .collect();
        DistributionSet::new(heads)
    }

    /// Maps a gradient in the heads' natural parameters (layout as in
    /// [`DistributionSet::width`]) to a gradient over all weights.
    pub fn backward(&self, cache: &ForwardCache, natural_grad: &[f64]) -> Result<Vec<f64>> {
        let raw = cache.raw_output();
        if natural_grad.len() != raw.len() {
            return Err(Error::Shape {
                context: "backward",
                expected: raw.len(),
                actual: natural_grad.len(),
            });
        }
        let mut delta = natural_grad.to_vec();
        let mut off = 0;
        for kind in &self.heads {
            if let HeadKind::Beta = kind {
                delta[off] *= sigmoid(raw[off]);
                delta[off + 1] *= sigmoid(raw[off + 1]);
            }
            off += kind.width();
        }

        let mut grad = vec![0.0; self.data.len()];
        let mut end = self.data.len();
        for l in (0..self.shapes.len()).rev() {
            let (rows, cols) = self.shapes[l];
            let start = end - rows * cols - rows;
            let x = &cache.inputs[l];
            let (gw, gb) = grad[start..end].split_at_mut(rows * cols);
            for ((grow, gbias), &d) in gw.chunks_exact_mut(cols).zip(gb.iter_mut()).zip(&delta) {
                *gbias = d;
                if d != 0.0 {
                    grow.iter_mut().zip(x).for_each(|(g, xi)| *g = d * xi);
                }
            }
            if l > 0 {
                let w = &self.data[start..start + rows * cols];
                let mut prev = vec![0.0; cols];
                for (row, &d) in w.chunks_exact(cols).zip(&delta) {
                    if d != 0.0 {
                        prev.iter_mut().zip(row).for_each(|(p, wv)| *p += d * wv);
                    }
                }
                // ReLU: x is the post-activation of layer l−1
                prev.iter_mut().zip(x).for_each(|(p, &xi)| {
                    if xi <= 0.0 {
                        *p = 0.0
                    }
                });
                delta = prev;
            }
            end = start;
        }
        if let Some(l) = grad.iter().position(|g| !g.is_finite()) {
            let layer = self.layer_of(l);
            return Err(Error::Numeric {
                context: "backward",
                layer,
            });
        }
        Ok(grad)
    }

    fn layer_of(&self, flat_index: usize) -> usize {
        let mut off = 0;
        for (l, (r, c)) in self.shapes.iter().enumerate() {
            off += r * c + r;
            if flat_index < off {
                return l;
            }
        }
        self.shapes.len()
    }
}
