use serde::{Deserialize, Serialize};

use super::conv::Padding;
use crate::error::{Error, Result};
use crate::quantifiers::Quantifier;

/// One entry of a network layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: Padding,
    },
    OwaPool {
        window: (usize, usize),
        quantifier: Quantifier,
    },
    Relu,
    Flatten,
    Dense {
        units: usize,
    },
}

/// Per-example activation shape flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureShape {
    Map {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat(usize),
}

impl FeatureShape {
    pub fn len(&self) -> usize {
        match *self {
            FeatureShape::Map {
                channels,
                height,
                width,
            } => channels * height * width,
            FeatureShape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tensor shape for a batch of `batch` examples.
    pub fn batched(&self, batch: usize) -> Vec<usize> {
        match *self {
            FeatureShape::Map {
                channels,
                height,
                width,
            } => vec![batch, channels, height, width],
            FeatureShape::Flat(n) => vec![batch, n],
        }
    }
}

impl LayerSpec {
    /// Notation used by the layout tables, or `None` for layers those
    /// tables leave implicit (activations, flattening).
    pub fn stage_label(&self) -> Option<String> {
        match self {
            LayerSpec::Conv2d { out_channels, .. } => Some(format!("Conv({out_channels})")),
            LayerSpec::OwaPool { window, quantifier } => {
                Some(format!("{}({} \u{d7} {})", quantifier.pool_name(), window.0, window.1))
            }
            LayerSpec::Dense { units } => Some(format!("FC({units})")),
            LayerSpec::Relu | LayerSpec::Flatten => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if *out_channels == 0 || kernel.0 == 0 || kernel.1 == 0 || *stride == 0 {
                    return Err(Error::invalid(
                        "layer",
                        "convolution channels, kernel extents and stride must be at least 1",
                    ));
                }
            }
            LayerSpec::OwaPool { window, quantifier } => {
                if window.0 == 0 || window.1 == 0 {
                    return Err(Error::invalid("layer", "pool window extents must be at least 1"));
                }
                quantifier.validate()?;
            }
            LayerSpec::Dense { units } if *units == 0 => {
                return Err(Error::invalid("layer", "dense unit count must be at least 1"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Shape produced by this layer, or a reason why `input` is not accepted.
    pub fn output_shape(&self, input: FeatureShape) -> std::result::Result<FeatureShape, String> {
        use FeatureShape::*;
        match (self, input) {
            (
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                },
                Map { height, width, .. },
            ) => {
                let axis = |extent: usize, k: usize| match padding {
                    Padding::Same => Ok(extent.div_ceil(*stride)),
                    Padding::Valid if extent >= k => Ok((extent - k) / stride + 1),
                    Padding::Valid => Err(format!("extent {extent} is smaller than kernel {k}")),
                };
                Ok(Map {
                    channels: *out_channels,
                    height: axis(height, kernel.0)?,
                    width: axis(width, kernel.1)?,
                })
            }
            (
                LayerSpec::OwaPool { window, .. },
                Map {
                    channels,
                    height,
                    width,
                },
            ) => {
                let (h, w) = (height / window.0, width / window.1);
                if h == 0 {
                    return Err(format!("height collapses from {height} to 0"));
                }
                if w == 0 {
                    return Err(format!("width collapses from {width} to 0"));
                }
                Ok(Map {
                    channels,
                    height: h,
                    width: w,
                })
            }
            (LayerSpec::Relu, shape) => Ok(shape),
            (LayerSpec::Flatten, shape) => Ok(Flat(shape.len())),
            (LayerSpec::Dense { units }, Flat(_)) => Ok(Flat(*units)),
            (LayerSpec::Dense { .. }, Map { .. }) => Err("dense layer needs a flattened input".into()),
            (_, Flat(_)) => Err("spatial layer after flattening".into()),
        }
    }
}
