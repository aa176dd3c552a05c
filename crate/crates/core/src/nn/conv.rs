//! 2-D cross-correlation lowered to a matrix product (im2col).

use serde::{Deserialize, Serialize};

use super::gemm::{gemm, MatRef};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zero padding so that `out = ceil(in / stride)`.
    Same,
    /// No padding; `out = (in - kernel) / stride + 1`.
    Valid,
}

/// Shape parameters of a convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: Padding,
}

impl ConvGeometry {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.patch_len()
    }

    /// Rows of the lowered input matrix: `in_channels * kh * kw`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }

    pub fn fan_in(&self) -> usize {
        self.patch_len()
    }

    pub fn fan_out(&self) -> usize {
        self.out_channels * self.kernel.0 * self.kernel.1
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid("channels", "channel counts must be at least 1"));
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 {
            return Err(Error::invalid("kernel", "kernel extents must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride", "stride must be at least 1"));
        }
        Ok(())
    }

    /// Output extent and leading pad along one axis.
    fn axis(&self, input: usize, kernel: usize) -> Result<(usize, usize)> {
        match self.padding {
            Padding::Same => {
                let out = input.div_ceil(self.stride);
                let total = ((out - 1) * self.stride + kernel).saturating_sub(input);
                Ok((out, total / 2))
            }
            Padding::Valid => {
                if input < kernel {
                    return Err(Error::invalid(
                        "input",
                        format!("extent {input} is smaller than kernel extent {kernel}"),
                    ));
                }
                Ok(((input - kernel) / self.stride + 1, 0))
            }
        }
    }

    /// Output `(height, width)` for an input of `(height, width)`.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((self.axis(h, self.kernel.0)?.0, self.axis(w, self.kernel.1)?.0))
    }
}

/// State kept by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    input_shape: [usize; 4],
    output_hw: (usize, usize),
    pads: (usize, usize),
    /// Lowered input, `patch_len x (B * Ho * Wo)` row-major.
    cols: Vec<f64>,
}

/// Output positions `o` in `0..out` whose input coordinate
/// `o * stride + offset - pad` lies inside `0..input`.
fn valid_range(out: usize, stride: usize, offset: usize, pad: usize, input: usize) -> std::ops::Range<usize> {
    let lo = pad.saturating_sub(offset).div_ceil(stride);
    let hi = if input + pad > offset {
        ((input + pad - offset - 1) / stride + 1).min(out)
    } else {
        0
    };
    lo..hi.max(lo)
}

fn im2col(input: &Tensor, geom: &ConvGeometry, out_hw: (usize, usize), pads: (usize, usize)) -> Vec<f64> {
    let [b, c, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    let (kh, kw) = geom.kernel;
    let (ho, wo) = out_hw;
    let s = geom.stride;
    let n = b * ho * wo;
    let data = input.data();
    let mut cols = vec![0.0; geom.patch_len() * n];
    for ci in 0..c {
        for dy in 0..kh {
            let rows = valid_range(ho, s, dy, pads.0, h);
            for dx in 0..kw {
                let xs = valid_range(wo, s, dx, pads.1, w);
                let row = (ci * kh + dy) * kw + dx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for bi in 0..b {
                    let plane = &data[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                    for oy in rows.clone() {
                        let iy = oy * s + dy - pads.0;
                        let src_row = &plane[iy * w..(iy + 1) * w];
                        let dst_row = &mut dst[(bi * ho + oy) * wo..(bi * ho + oy + 1) * wo];
                        if s == 1 {
                            let ix = xs.start + dx - pads.1;
                            dst_row[xs.clone()].copy_from_slice(&src_row[ix..ix + xs.len()]);
                        } else {
                            for ox in xs.clone() {
                                dst_row[ox] = src_row[ox * s + dx - pads.1];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], geom: &ConvGeometry, cache: &ConvCache) -> Vec<f64> {
    let [b, c, h, w] = cache.input_shape;
    let (kh, kw) = geom.kernel;
    let (ho, wo) = cache.output_hw;
    let s = geom.stride;
    let pads = cache.pads;
    let n = b * ho * wo;
    let mut grad = vec![0.0; b * c * h * w];
    for ci in 0..c {
        for dy in 0..kh {
            let rows = valid_range(ho, s, dy, pads.0, h);
            for dx in 0..kw {
                let xs = valid_range(wo, s, dx, pads.1, w);
                let row = (ci * kh + dy) * kw + dx;
                let src = &cols[row * n..(row + 1) * n];
                for bi in 0..b {
                    let plane = &mut grad[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                    for oy in rows.clone() {
                        let iy = oy * s + dy - pads.0;
                        let src_row = &src[(bi * ho + oy) * wo..(bi * ho + oy + 1) * wo];
                        let dst_row = &mut plane[iy * w..(iy + 1) * w];
                        for ox in xs.clone() {
                            dst_row[ox * s + dx - pads.1] += src_row[ox];
                        }
                    }
                }
            }
        }
    }
    grad
}

/// Cross-correlates `input` (`[B, Cin, H, W]`) with `weights`
/// (`[Cout, Cin, kh, kw]` row-major) and adds `bias` (`[Cout]`).
pub fn conv2d_forward(
    input: &Tensor,
    weights: &[f64],
    bias: &[f64],
    geom: &ConvGeometry,
) -> Result<(Tensor, ConvCache)> {
    geom.validate()?;
    let (b, c, h, w) = input.dims4()?;
    if c != geom.in_channels {
        return Err(Error::invalid(
            "input",
            format!("expected {} channels, got {c}", geom.in_channels),
        ));
    }
    if weights.len() != geom.weight_len() || bias.len() != geom.out_channels {
        return Err(Error::invalid(
            "weights",
            "kernel or bias length does not match the geometry",
        ));
    }
    let (ho, pad_h) = geom.axis(h, geom.kernel.0)?;
    let (wo, pad_w) = geom.axis(w, geom.kernel.1)?;
    let cols = im2col(input, geom, (ho, wo), (pad_h, pad_w));
    let n = b * ho * wo;
    let k = geom.patch_len();
    let cout = geom.out_channels;
    let mut product = vec![0.0; cout * n];
    gemm(
        MatRef::row_major(weights, cout, k),
        MatRef::row_major(&cols, k, n),
        0.0,
        &mut product,
    );
    let plane = ho * wo;
    let mut out = vec![0.0; b * cout * plane];
    for co in 0..cout {
        let src = &product[co * n..(co + 1) * n];
        for bi in 0..b {
            let dst = &mut out[(bi * cout + co) * plane..(bi * cout + co + 1) * plane];
            for (d, s) in dst.iter_mut().zip(&src[bi * plane..(bi + 1) * plane]) {
                *d = s + bias[co];
            }
        }
    }
    let cache = ConvCache {
        input_shape: [b, c, h, w],
        output_hw: (ho, wo),
        pads: (pad_h, pad_w),
        cols,
    };
    Ok((Tensor::new(vec![b, cout, ho, wo], out)?, cache))
}

/// Gradients of a convolution: `(grad_input, grad_weights, grad_bias)`.
pub fn conv2d_backward(
    grad_out: &Tensor,
    cache: &ConvCache,
    weights: &[f64],
    geom: &ConvGeometry,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let [b, _, _, _] = cache.input_shape;
    let (ho, wo) = cache.output_hw;
    let cout = geom.out_channels;
    if grad_out.shape() != [b, cout, ho, wo] {
        return Err(Error::invalid(
            "grad_out",
            format!("expected shape {:?}, got {:?}", [b, cout, ho, wo], grad_out.shape()),
        ));
    }
    let n = b * ho * wo;
    let k = geom.patch_len();
    let plane = ho * wo;

    // [B, Cout, Ho, Wo] -> [Cout, B*Ho*Wo]
    let g = grad_out.data();
    let mut gmat = vec![0.0; cout * n];
    for co in 0..cout {
        for bi in 0..b {
            gmat[co * n + bi * plane..co * n + (bi + 1) * plane]
                .copy_from_slice(&g[(bi * cout + co) * plane..(bi * cout + co + 1) * plane]);
        }
    }

    let grad_bias: Vec<f64> = gmat.chunks(n).map(|row| row.iter().sum()).collect();

    let mut grad_weights = vec![0.0; cout * k];
    gemm(
        MatRef::row_major(&gmat, cout, n),
        MatRef::row_major(&cache.cols, k, n).t(),
        0.0,
        &mut grad_weights,
    );

    let mut grad_cols = vec![0.0; k * n];
    gemm(
        MatRef::row_major(weights, cout, k).t(),
        MatRef::row_major(&gmat, cout, n),
        0.0,
        &mut grad_cols,
    );
    let grad_input = col2im(&grad_cols, geom, cache);
    Ok((
        Tensor::new(cache.input_shape.to_vec(), grad_input)?,
        grad_weights,
        grad_bias,
    ))
}
