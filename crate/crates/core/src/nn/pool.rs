//! Linguistic OWA pooling.
//!
//! Each non-overlapping `ph x pw` patch of a feature map is replaced by the
//! OWA aggregate of its values, with weights generated by a RIM quantifier.
//! Max and average pooling are the `ThereExists` and `Average` special cases.

use super::Tensor;
use crate::error::{Error, Result};
use crate::quantifiers::{rim_weights, weighted_by_rank, Quantifier};

/// Sort permutations recorded by [`owa_pool_forward`].
///
/// For output cell `c`, `perms[c * n + r]` is the patch-local index
/// (`dy * pw + dx`) of the value with rank `r` (0 = largest).
#[derive(Debug, Clone, PartialEq)]
pub struct PoolCache {
    input_shape: [usize; 4],
    output_shape: [usize; 4],
    window: (usize, usize),
    perms: Vec<u16>,
}

impl PoolCache {
    pub fn window(&self) -> (usize, usize) {
        self.window
    }

    pub fn input_shape(&self) -> [usize; 4] {
        self.input_shape
    }

    /// Rank-to-patch permutation of output cell `cell` (flat index into the output).
    pub fn permutation(&self, cell: usize) -> &[u16] {
        let n = self.window.0 * self.window.1;
        &self.perms[cell * n..(cell + 1) * n]
    }
}

/// Stable descending insertion sort of `order` by `values`; ties keep
/// ascending index order.
fn sort_patch(values: &[f64], order: &mut [u16]) {
    for (i, slot) in order.iter_mut().enumerate() {
        *slot = i as u16;
    }
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && values[order[j - 1] as usize] < values[order[j] as usize] {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
}

fn validate_window(window: (usize, usize)) -> Result<usize> {
    if window.0 == 0 || window.1 == 0 {
        return Err(Error::invalid("window", "pool extents must be at least 1"));
    }
    let n = window.0 * window.1;
    if n > u16::MAX as usize {
        return Err(Error::invalid(
            "window",
            format!("pool window of {n} cells is too large"),
        ));
    }
    Ok(n)
}

/// Pools `input` (`[B, C, H, W]`) into `[B, C, H / ph, W / pw]` (floor).
pub fn owa_pool_forward(input: &Tensor, window: (usize, usize), q: &Quantifier) -> Result<(Tensor, PoolCache)> {
    let n = validate_window(window)?;
    let (b, c, h, w) = input.dims4()?;
    let (ph, pw) = window;
    if h < ph || w < pw {
        return Err(Error::invalid(
            "window",
            format!("pool window {ph}x{pw} exceeds input extent {h}x{w}"),
        ));
    }
    let weights = rim_weights(q, n)?;
    let weights = weights.as_slice();
    let (ho, wo) = (h / ph, w / pw);
    let data = input.data();
    let mut out = Vec::with_capacity(b * c * ho * wo);
    let mut perms = vec![0u16; b * c * ho * wo * n];
    let mut patch = vec![0.0; n];
    let mut cell = 0;
    for plane in data.chunks_exact(h * w) {
        for oy in 0..ho {
            for ox in 0..wo {
                for dy in 0..ph {
                    let row = (oy * ph + dy) * w + ox * pw;
                    patch[dy * pw..(dy + 1) * pw].copy_from_slice(&plane[row..row + pw]);
                }
                let order = &mut perms[cell * n..(cell + 1) * n];
                sort_patch(&patch, order);
                out.push(weighted_by_rank(weights, &patch, order));
                cell += 1;
            }
        }
    }
    let cache = PoolCache {
        input_shape: [b, c, h, w],
        output_shape: [b, c, ho, wo],
        window,
        perms,
    };
    Ok((Tensor::new(vec![b, c, ho, wo], out)?, cache))
}

/// Routes `grad_out` back through the cached sort: the input holding rank
/// `r` in its patch receives `grad_out * w_r`. Cells dropped by the floor
/// division get zero gradient.
pub fn owa_pool_backward(
    grad_out: &Tensor,
    cache: &PoolCache,
    window: (usize, usize),
    q: &Quantifier,
) -> Result<Tensor> {
    if window != cache.window {
        return Err(Error::invalid(
            "window",
            format!("cache was built with window {:?}, got {window:?}", cache.window),
        ));
    }
    if grad_out.shape() != cache.output_shape {
        return Err(Error::invalid(
            "grad_out",
            format!("expected shape {:?}, got {:?}", cache.output_shape, grad_out.shape()),
        ));
    }
    let n = validate_window(window)?;
    let weights = rim_weights(q, n)?;
    let weights = weights.as_slice();
    let [_, _, h, w] = cache.input_shape;
    let [_, _, ho, wo] = cache.output_shape;
    let (ph, pw) = window;
    let mut grad = Tensor::zeros(cache.input_shape.to_vec());
    let gin = grad.data_mut();
    let g = grad_out.data();
    for (plane_idx, gplane) in g.chunks_exact(ho * wo).enumerate() {
        let base = plane_idx * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let cell = plane_idx * ho * wo + oy * wo + ox;
                let upstream = gplane[oy * wo + ox];
                for (rank, &local) in cache.permutation(cell).iter().enumerate() {
                    let (dy, dx) = (local as usize / pw, local as usize % pw);
                    gin[base + (oy * ph + dy) * w + ox * pw + dx] += upstream * weights[rank];
                }
            }
        }
    }
    Ok(grad)
}
