use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{conv2d_backward, conv2d_forward, ConvCache, ConvGeometry};
use super::dense::{dense_backward, dense_forward, flatten, relu_backward, relu_forward};
use super::layer::{FeatureShape, LayerSpec};
use super::loss::softmax;
use super::pool::{owa_pool_backward, owa_pool_forward, PoolCache};
use super::Tensor;
use crate::error::{Error, Result};
use crate::layouts::ModelLayout;
use crate::quantifiers::Quantifier;

/// A layer with its trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv {
        geometry: ConvGeometry,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Pool {
        window: (usize, usize),
        quantifier: Quantifier,
    },
    Relu,
    Flatten,
    Dense {
        inputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
}

impl Layer {
    fn parameters(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Conv { weights, bias, .. } | Layer::Dense { weights, bias, .. } => Some((weights, bias)),
            _ => None,
        }
    }
}

/// Per-layer state recorded by [`Network::forward_train`].
#[derive(Debug)]
pub enum LayerCache {
    Conv(ConvCache),
    Pool(PoolCache),
    Relu(Tensor),
    Flatten(Vec<usize>),
    Dense(Tensor),
}

/// A feed-forward network instantiated from a [`ModelLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layout: ModelLayout,
    layers: Vec<Layer>,
}

fn glorot(rng: &mut ChaCha8Rng, len: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-limit..limit)).collect()
}

impl Network {
    /// Instantiates `layout` with Glorot-uniform weights drawn from `seed`
    /// and zero biases.
    pub fn new(layout: &ModelLayout, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = layout.input_shape();
        let mut layers = Vec::with_capacity(layout.layers().len());
        for spec in layout.layers() {
            let layer = match (spec, shape) {
                (
                    LayerSpec::Conv2d {
                        out_channels,
                        kernel,
                        stride,
                        padding,
                    },
                    FeatureShape::Map { channels, .. },
                ) => {
                    let geometry = ConvGeometry {
                        in_channels: channels,
                        out_channels: *out_channels,
                        kernel: *kernel,
                        stride: *stride,
                        padding: *padding,
                    };
                    Layer::Conv {
                        weights: glorot(&mut rng, geometry.weight_len(), geometry.fan_in(), geometry.fan_out()),
                        bias: vec![0.0; *out_channels],
                        geometry,
                    }
                }
                (LayerSpec::OwaPool { window, quantifier }, _) => Layer::Pool {
                    window: *window,
                    quantifier: *quantifier,
                },
                (LayerSpec::Relu, _) => Layer::Relu,
                (LayerSpec::Flatten, _) => Layer::Flatten,
                (LayerSpec::Dense { units }, FeatureShape::Flat(inputs)) => Layer::Dense {
                    inputs,
                    weights: glorot(&mut rng, units * inputs, inputs, *units),
                    bias: vec![0.0; *units],
                },
                (spec, shape) => {
                    return Err(Error::invalid(
                        "layout",
                        format!("layer {spec:?} cannot follow shape {shape:?}"),
                    ))
                }
            };
            shape = spec
                .output_shape(shape)
                .map_err(|reason| Error::invalid("layout", reason))?;
            layers.push(layer);
        }
        Ok(Network {
            layout: layout.clone(),
            layers,
        })
    }

    /// Rebuilds a network from a layout and its flat parameter buffers
    /// (weights then bias for every parameterized layer, in order).
    pub fn from_parameters(layout: &ModelLayout, parameters: Vec<Vec<f64>>) -> Result<Self> {
        let mut net = Network::new(layout, 0)?;
        let expected: Vec<usize> = net.parameters().iter().map(|p| p.len()).collect();
        let got: Vec<usize> = parameters.iter().map(Vec::len).collect();
        if expected != got {
            return Err(Error::Checkpoint(format!(
                "parameter sizes {got:?} do not match the layout ({expected:?})"
            )));
        }
        for (dst, src) in net.parameters_mut().into_iter().zip(parameters) {
            dst.copy_from_slice(&src);
        }
        Ok(net)
    }

    pub fn layout(&self) -> &ModelLayout {
        &self.layout
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Parameter buffers in a fixed order: for every parameterized layer,
    /// its weights then its bias.
    pub fn parameters(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .filter_map(Layer::parameters)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::Conv { weights, bias, .. } | Layer::Dense { weights, bias, .. } = layer {
                out.push(weights.as_mut_slice());
                out.push(bias.as_mut_slice());
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let expected = self.layout.input_shape().batched(input.batch());
        if input.shape() != expected {
            return Err(Error::invalid(
                "input",
                format!("expected shape {expected:?}, got {:?}", input.shape()),
            ));
        }
        Ok(())
    }

    /// Logits for a `[B, 1, V, S]` batch.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv {
                    geometry,
                    weights,
                    bias,
                } => conv2d_forward(&x, weights, bias, geometry)?.0,
                Layer::Pool { window, quantifier } => owa_pool_forward(&x, *window, quantifier)?.0,
                Layer::Relu => relu_forward(&x),
                Layer::Flatten => flatten(x)?,
                Layer::Dense { weights, bias, .. } => dense_forward(&x, weights, bias)?,
            };
        }
        Ok(x)
    }

    /// Class probabilities, `[B, K]`.
    pub fn predict_proba(&self, input: &Tensor) -> Result<Tensor> {
        softmax(&self.forward(input)?)
    }

    /// Forward pass that keeps what [`Network::backward`] needs.
    pub fn forward_train(&self, input: &Tensor) -> Result<(Tensor, Vec<LayerCache>)> {
        self.check_input(input)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv {
                    geometry,
                    weights,
                    bias,
                } => {
                    let (out, cache) = conv2d_forward(&x, weights, bias, geometry)?;
                    caches.push(LayerCache::Conv(cache));
                    out
                }
                Layer::Pool { window, quantifier } => {
                    let (out, cache) = owa_pool_forward(&x, *window, quantifier)?;
                    caches.push(LayerCache::Pool(cache));
                    out
                }
                Layer::Relu => {
                    let out = relu_forward(&x);
                    caches.push(LayerCache::Relu(x));
                    out
                }
                Layer::Flatten => {
                    caches.push(LayerCache::Flatten(x.shape().to_vec()));
                    flatten(x)?
                }
                Layer::Dense { weights, bias, .. } => {
                    let out = dense_forward(&x, weights, bias)?;
                    caches.push(LayerCache::Dense(x));
                    out
                }
            };
        }
        Ok((x, caches))
    }

    /// Parameter gradients, ordered like [`Network::parameters`].
    pub fn backward(&self, grad_logits: Tensor, caches: Vec<LayerCache>) -> Result<Vec<Vec<f64>>> {
        if caches.len() != self.layers.len() {
            return Err(Error::invalid("caches", "cache count does not match the layer count"));
        }
        let mut grads = Vec::new();
        let mut g = grad_logits;
        for (idx, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            g = match (layer, cache) {
                (Layer::Conv { geometry, weights, .. }, LayerCache::Conv(cache)) => {
                    let (gi, gw, gb) = conv2d_backward(&g, &cache, weights, geometry)?;
                    grads.push(gb);
                    grads.push(gw);
                    gi
                }
                (Layer::Pool { window, quantifier }, LayerCache::Pool(cache)) => {
                    owa_pool_backward(&g, &cache, *window, quantifier)?
                }
                (Layer::Relu, LayerCache::Relu(input)) => relu_backward(&g, &input)?,
                (Layer::Flatten, LayerCache::Flatten(shape)) => g.reshape(shape)?,
                (Layer::Dense { weights, .. }, LayerCache::Dense(input)) => {
                    let (gi, gw, gb) = dense_backward(&g, &input, weights)?;
                    grads.push(gb);
                    grads.push(gw);
                    gi
                }
                _ => {
                    return Err(Error::invalid(
                        "caches",
                        format!("cache of layer {idx} has the wrong kind"),
                    ))
                }
            };
        }
        grads.reverse();
        Ok(grads)
    }
}
