//! The three named network layouts compared in the pooling experiments.
//!
//! Pool windows are (height over the variable axis) x (width over the time
//! axis). Every convolution is 3x3, stride 1, zero "same" padding, followed by
//! a ReLU; hidden dense layers are followed by a ReLU; a flatten is inserted
//! before the first dense layer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{FeatureShape, LayerSpec, Padding};
use crate::quantifiers::Quantifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutName {
    Model7,
    Model3,
    Lenet5,
}

impl LayoutName {
    pub const ALL: [LayoutName; 3] = [LayoutName::Model7, LayoutName::Model3, LayoutName::Lenet5];

    pub fn as_str(self) -> &'static str {
        match self {
            LayoutName::Model7 => "model7",
            LayoutName::Model3 => "model3",
            LayoutName::Lenet5 => "lenet5",
        }
    }
}

impl fmt::Display for LayoutName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayoutName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "model7" => Ok(LayoutName::Model7),
            "model3" => Ok(LayoutName::Model3),
            "lenet5" => Ok(LayoutName::Lenet5),
            _ => Err(Error::invalid(
                "layout",
                format!("unknown layout `{s}` (expected model7, model3 or lenet5)"),
            )),
        }
    }
}

/// Stages as written in the layout table, before activations and flattening
/// are filled in.
#[derive(Debug, Clone, Copy)]
enum Stage {
    Conv(usize),
    Pool(usize, usize),
    Fc(usize),
}

fn stages(name: LayoutName, classes: usize) -> Vec<Stage> {
    use Stage::*;
    match name {
        LayoutName::Model7 => vec![
            Conv(64),
            Conv(64),
            Pool(2, 2),
            Conv(128),
            Pool(2, 1),
            Fc(300),
            Fc(classes),
        ],
        LayoutName::Model3 => vec![Conv(128), Conv(128), Conv(128), Pool(2, 1), Fc(300), Fc(classes)],
        LayoutName::Lenet5 => vec![Conv(6), Pool(2, 2), Conv(16), Pool(2, 2), Fc(120), Fc(84), Fc(classes)],
    }
}

/// A fully specified network layout for `[B, 1, variables, window]` inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLayout {
    name: LayoutName,
    quantifier: Quantifier,
    variables: usize,
    window: usize,
    classes: usize,
    layers: Vec<LayerSpec>,
}

impl ModelLayout {
    pub fn name(&self) -> LayoutName {
        self.name
    }

    pub fn quantifier(&self) -> Quantifier {
        self.quantifier
    }

    pub fn variables(&self) -> usize {
        self.variables
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> FeatureShape {
        FeatureShape::Map {
            channels: 1,
            height: self.variables,
            width: self.window,
        }
    }

    /// Layers that appear in the layout table (convolutions, pools, dense).
    pub fn table_stages(&self) -> Vec<&LayerSpec> {
        self.layers.iter().filter(|l| l.stage_label().is_some()).collect()
    }

    /// Table notation, e.g. `Conv(6)-MaxPool(2 × 2)-...-FC(6)`.
    pub fn describe(&self) -> String {
        self.layers
            .iter()
            .filter_map(LayerSpec::stage_label)
            .collect::<Vec<_>>()
            .join("-")
    }

    /// Activation shape after every layer.
    pub fn shapes(&self) -> Vec<FeatureShape> {
        let mut shape = self.input_shape();
        self.layers
            .iter()
            .map(|l| {
                shape = l.output_shape(shape).expect("layout was validated at construction");
                shape
            })
            .collect()
    }
}

/// Builds the named layout for `variables x window` inputs and `classes`
/// output classes, checking that every pooling stage keeps a non-empty map.
pub fn build_layout(
    name: LayoutName,
    q: Quantifier,
    variables: usize,
    window: usize,
    classes: usize,
) -> Result<ModelLayout> {
    q.validate()?;
    if variables == 0 || window == 0 {
        return Err(Error::invalid("input", "variables and window size must be at least 1"));
    }
    if classes == 0 {
        return Err(Error::invalid("classes", "at least one class is required"));
    }
    let table = stages(name, classes);
    let mut layers = Vec::new();
    let mut flattened = false;
    for (idx, stage) in table.iter().enumerate() {
        match *stage {
            Stage::Conv(out_channels) => {
                layers.push(LayerSpec::Conv2d {
                    out_channels,
                    kernel: (3, 3),
                    stride: 1,
                    padding: Padding::Same,
                });
                layers.push(LayerSpec::Relu);
            }
            Stage::Pool(h, w) => layers.push(LayerSpec::OwaPool {
                window: (h, w),
                quantifier: q,
            }),
            Stage::Fc(units) => {
                if !flattened {
                    layers.push(LayerSpec::Flatten);
                    flattened = true;
                }
                layers.push(LayerSpec::Dense { units });
                if idx + 1 < table.len() {
                    layers.push(LayerSpec::Relu);
                }
            }
        }
    }

    let mut shape = FeatureShape::Map {
        channels: 1,
        height: variables,
        width: window,
    };
    let mut stage_no = 0;
    for layer in &layers {
        if let Some(label) = layer.stage_label() {
            stage_no += 1;
            shape = layer.output_shape(shape).map_err(|reason| {
                Error::invalid(
                    "input",
                    format!("{name} on a {variables}x{window} input fails at stage {stage_no} ({label}): {reason}"),
                )
            })?;
        } else {
            shape = layer
                .output_shape(shape)
                .map_err(|reason| Error::invalid("layout", reason))?;
        }
    }

    Ok(ModelLayout {
        name,
        quantifier: q,
        variables,
        window,
        classes,
        layers,
    })
}

/// Trainable scalar count: kernels, biases and dense weights.
pub fn parameter_count(layout: &ModelLayout) -> usize {
    let mut shape = layout.input_shape();
    let mut total = 0;
    for layer in layout.layers() {
        match (layer, shape) {
            (
                LayerSpec::Conv2d {
                    out_channels, kernel, ..
                },
                FeatureShape::Map { channels, .. },
            ) => {
                total += out_channels * channels * kernel.0 * kernel.1 + out_channels;
            }
            (LayerSpec::Dense { units }, FeatureShape::Flat(inputs)) => {
                total += units * inputs + units;
            }
            _ => {}
        }
        shape = layer.output_shape(shape).expect("layout was validated at construction");
    }
    total
}
