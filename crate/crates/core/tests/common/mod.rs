//! Reference implementations and checkers shared by the integration tests
//! and the acceptance suite. Everything here is written from the
//! definitions, independent of the library code it is compared against.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use owapool::dataprep::{FaultAnnotation, FaultClass, MonitoringSeries};
use owapool::harness::Metrics;
use owapool::nn::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, owa_pool_backward, owa_pool_forward, relu_backward,
    relu_forward, softmax_cross_entropy, ConvGeometry, Padding, Tensor,
};
use owapool::quantifiers::Quantifier;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const GRAD_TRIALS: usize = 100;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// `n` values at least 0.08 apart, in random order.
pub fn tie_free(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.1 - n as f64 * 0.05).collect();
    v.shuffle(rng);
    v.iter().map(|x| x + rng.random_range(0.0..0.02)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `||a - n|| / max(||a||, ||n||)` over a whole gradient.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let keep = probe[i];
            probe[i] = keep + FD_STEP;
            let up = f(&probe);
            probe[i] = keep - FD_STEP;
            let down = f(&probe);
            probe[i] = keep;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// One convolution trial on a random geometry; worst relative error over
/// the input, kernel and bias gradients.
pub fn conv_trial(rng: &mut impl Rng) -> f64 {
    let b = rng.random_range(1..=2);
    let cin = rng.random_range(1..=3);
    let cout = rng.random_range(1..=3);
    let kernel = (rng.random_range(1..=3), rng.random_range(1..=3));
    let h = rng.random_range(kernel.0..=5);
    let w = rng.random_range(kernel.1..=5);
    let geom = ConvGeometry {
        in_channels: cin,
        out_channels: cout,
        kernel,
        stride: rng.random_range(1..=2),
        padding: if rng.random_bool(0.5) {
            Padding::Same
        } else {
            Padding::Valid
        },
    };
    let x = uniform(rng, b * cin * h * w, -1.0, 1.0);
    let k = uniform(rng, geom.weight_len(), -1.0, 1.0);
    let bias = uniform(rng, cout, -1.0, 1.0);
    let shape = vec![b, cin, h, w];
    let run = |x: &[f64], k: &[f64], bias: &[f64]| {
        conv2d_forward(&Tensor::new(shape.clone(), x.to_vec()).unwrap(), k, bias, &geom).unwrap()
    };
    let (out, cache) = run(&x, &k, &bias);
    let r = uniform(rng, out.len(), -1.0, 1.0);
    let grad_out = Tensor::new(out.shape().to_vec(), r.clone()).unwrap();
    let (gx, gk, gb) = conv2d_backward(&grad_out, &cache, &k, &geom).unwrap();
    let nx = numeric_gradient(&x, |x| dot(run(x, &k, &bias).0.data(), &r));
    let nk = numeric_gradient(&k, |k| dot(run(&x, k, &bias).0.data(), &r));
    let nb = numeric_gradient(&bias, |bias| dot(run(&x, &k, bias).0.data(), &r));
    relative_error(gx.data(), &nx)
        .max(relative_error(&gk, &nk))
        .max(relative_error(&gb, &nb))
}

/// One pooling trial with tie-free patches; the input may have rows or
/// columns that the window does not cover.
pub fn pool_trial(rng: &mut impl Rng, q: &Quantifier) -> f64 {
    let windows = [(2, 2), (2, 1), (1, 2), (3, 2), (2, 3), (3, 3)];
    let window = windows[rng.random_range(0..windows.len())];
    let b = rng.random_range(1..=2);
    let c = rng.random_range(1..=3);
    let h = window.0 * rng.random_range(1..=3) + rng.random_range(0..window.0);
    let w = window.1 * rng.random_range(1..=3) + rng.random_range(0..window.1);
    let shape = vec![b, c, h, w];
    let x = tie_free(rng, b * c * h * w);
    let run = |x: &[f64]| owa_pool_forward(&Tensor::new(shape.clone(), x.to_vec()).unwrap(), window, q).unwrap();
    let (out, cache) = run(&x);
    let r = uniform(rng, out.len(), -1.0, 1.0);
    let gx = owa_pool_backward(
        &Tensor::new(out.shape().to_vec(), r.clone()).unwrap(),
        &cache,
        window,
        q,
    )
    .unwrap();
    let nx = numeric_gradient(&x, |x| dot(run(x).0.data(), &r));
    relative_error(gx.data(), &nx)
}

pub fn dense_trial(rng: &mut impl Rng) -> f64 {
    let b = rng.random_range(1..=4);
    let inputs = rng.random_range(1..=8);
    let outputs = rng.random_range(1..=6);
    let x = uniform(rng, b * inputs, -1.0, 1.0);
    let wts = uniform(rng, inputs * outputs, -1.0, 1.0);
    let bias = uniform(rng, outputs, -1.0, 1.0);
    let run = |x: &[f64], wts: &[f64], bias: &[f64]| {
        dense_forward(&Tensor::new(vec![b, inputs], x.to_vec()).unwrap(), wts, bias).unwrap()
    };
    let r = uniform(rng, b * outputs, -1.0, 1.0);
    let input = Tensor::new(vec![b, inputs], x.clone()).unwrap();
    let (gx, gw, gb) = dense_backward(&Tensor::new(vec![b, outputs], r.clone()).unwrap(), &input, &wts).unwrap();
    let nx = numeric_gradient(&x, |x| dot(run(x, &wts, &bias).data(), &r));
    let nw = numeric_gradient(&wts, |wts| dot(run(&x, wts, &bias).data(), &r));
    let nb = numeric_gradient(&bias, |bias| dot(run(&x, &wts, bias).data(), &r));
    relative_error(gx.data(), &nx)
        .max(relative_error(&gw, &nw))
        .max(relative_error(&gb, &nb))
}

/// ReLU trial with inputs kept away from the kink.
pub fn relu_trial(rng: &mut impl Rng) -> f64 {
    let n = rng.random_range(1..=24);
    let x: Vec<f64> = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    let shape = vec![1, 1, 1, n];
    let input = Tensor::new(shape.clone(), x.clone()).unwrap();
    let r = uniform(rng, n, -1.0, 1.0);
    let gx = relu_backward(&Tensor::new(shape.clone(), r.clone()).unwrap(), &input).unwrap();
    let nx = numeric_gradient(&x, |x| {
        dot(
            relu_forward(&Tensor::new(shape.clone(), x.to_vec()).unwrap()).data(),
            &r,
        )
    });
    relative_error(gx.data(), &nx)
}

pub fn softmax_xent_trial(rng: &mut impl Rng) -> f64 {
    let b = rng.random_range(1..=4);
    let k = rng.random_range(2..=6);
    let logits = uniform(rng, b * k, -3.0, 3.0);
    let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
    let loss = |z: &[f64]| {
        softmax_cross_entropy(&Tensor::new(vec![b, k], z.to_vec()).unwrap(), &labels)
            .unwrap()
            .0
    };
    let (_, grad) = softmax_cross_entropy(&Tensor::new(vec![b, k], logits.clone()).unwrap(), &labels).unwrap();
    relative_error(grad.data(), &numeric_gradient(&logits, loss))
}

/// Worst error over `trials` runs of `trial`.
pub fn worst(trials: usize, seed: u64, mut trial: impl FnMut(&mut ChaCha8Rng) -> f64) -> f64 {
    let mut rng = rng(seed);
    (0..trials).map(|_| trial(&mut rng)).fold(0.0, f64::max)
}

/// Plain max pooling over a single patch.
pub fn reference_max(patch: &[f64]) -> f64 {
    let mut m = patch[0];
    for &x in &patch[1..] {
        if x > m {
            m = x;
        }
    }
    m
}

pub fn reference_mean(patch: &[f64]) -> f64 {
    patch.iter().sum::<f64>() / patch.len() as f64
}

/// A `len x 1` series with values `0..len`, annotated when `onset` is set.
pub fn ramp_series(len: usize, onset: Option<usize>) -> MonitoringSeries {
    MonitoringSeries::new(
        "ramp",
        vec!["x".into()],
        15.0,
        (0..len).map(|t| t.to_string()).collect(),
        (0..len).map(|t| t as f64).collect(),
        onset.map(|onset| FaultAnnotation {
            class: FaultClass::Kla,
            onset,
            magnitude: 1.0,
        }),
    )
    .unwrap()
}

/// Windows by enumeration: every start `s` with `s % step == 0` and
/// `s + size <= len`, labelled faulty when any covered index is at or past
/// the onset.
pub fn brute_windows(len: usize, size: usize, step: usize, onset: Option<usize>) -> Vec<(usize, bool)> {
    (0..len)
        .filter(|s| s % step == 0 && s + size <= len)
        .map(|s| (s, onset.is_some_and(|o| (s..s + size).any(|t| t >= o))))
        .collect()
}

/// Counts and ratios recomputed pair by pair.
pub struct Recount {
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

pub fn recount(truth: &[usize], predicted: &[usize], k: usize) -> Recount {
    let pairs: Vec<(usize, usize)> = truth.iter().copied().zip(predicted.iter().copied()).collect();
    let confusion = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| pairs.iter().filter(|&&p| p == (i, j)).count() as u64)
                .collect()
        })
        .collect();
    let correct = pairs.iter().filter(|(t, p)| t == p).count();
    let mut sums = [0.0; 3];
    let mut present = 0;
    for c in 0..k {
        let tp = pairs.iter().filter(|&&(t, p)| t == c && p == c).count() as f64;
        let fp = pairs.iter().filter(|&&(t, p)| t != c && p == c).count() as f64;
        let fnn = pairs.iter().filter(|&&(t, p)| t == c && p != c).count() as f64;
        if tp + fp + fnn == 0.0 {
            continue;
        }
        present += 1;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
        let f1 = if tp > 0.0 {
            2.0 * tp / (2.0 * tp + fp + fnn)
        } else {
            0.0
        };
        sums[0] += precision;
        sums[1] += recall;
        sums[2] += f1;
    }
    let avg = |s: f64| if present == 0 { 0.0 } else { s / present as f64 };
    Recount {
        confusion,
        accuracy: if pairs.is_empty() {
            0.0
        } else {
            correct as f64 / pairs.len() as f64
        },
        macro_precision: avg(sums[0]),
        macro_recall: avg(sums[1]),
        macro_f1: avg(sums[2]),
    }
}

/// Whether `m` agrees with the recount: counts exactly, ratios to 1e-12.
pub fn metrics_agree(m: &Metrics, r: &Recount) -> bool {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    m.confusion == r.confusion
        && close(m.accuracy, r.accuracy)
        && close(m.macro_precision, r.macro_precision)
        && close(m.macro_recall, r.macro_recall)
        && close(m.macro_f1, r.macro_f1)
}

/// Random labels with a skew, so that some classes go missing.
pub fn random_labels(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    let top = rng.random_range(1..=k);
    (0..n).map(|_| rng.random_range(0..top)).collect()
}
