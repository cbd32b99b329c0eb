//! Shared test support: random model generation and independent oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tinyad_core::modelio::{validate, Extents, LayerSpec, Model, ModelSpec};
use tinyad_core::tensor::{Shape, Tensor};

pub struct GeneratedCase {
    pub model: Model,
    pub input: Tensor,
}

fn rand_weights(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f32> {
    let scale = 1.0 / (fan_in.max(1) as f32).sqrt();
    (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()
}

/// One random sequential CNN: 1-3 conv layers (regular, depthwise with
/// K in {1,2}, pointwise) with occasional relu/maxpool between, then an
/// optional dense tail. The final convolution keeps a time extent of at
/// least `min_final_extent` so all patch counts in the suite stay feasible.
pub fn random_model(rng: &mut ChaCha8Rng, min_final_extent: usize) -> GeneratedCase {
    loop {
        if let Some(case) = try_random_model(rng, min_final_extent) {
            return case;
        }
    }
}

fn try_random_model(rng: &mut ChaCha8Rng, min_final_extent: usize) -> Option<GeneratedCase> {
    let rank = if rng.gen_bool(0.5) { 1 } else { 2 };
    let input_shape = if rank == 1 {
        let l = if rng.gen_bool(0.2) { 1200 } else { rng.gen_range(40..=400) };
        Shape::new_1d(1, l)
    } else {
        Shape::new_2d(1, rng.gen_range(8..=24), rng.gen_range(16..=64))
    };

    let mut layers = Vec::new();
    let mut cur = input_shape.clone();
    let conv_count = rng.gen_range(1..=3);
    for _ in 0..conv_count {
        // optional pooling before the conv
        if rng.gen_bool(0.25) {
            let k = rng.gen_range(2..=3usize);
            if cur.spatial.iter().all(|&e| e >= k * 2) {
                let kernel = if rank == 1 { vec![k] } else { vec![1, k] };
                layers.push(LayerSpec::MaxPool {
                    kernel: Extents::PerAxis(kernel),
                    stride: None,
                });
                cur = shape_after(&layers, &input_shape)?;
            }
        }
        let kind = rng.gen_range(0..3);
        match kind {
            0 => {
                let f = rng.gen_range(1..=8usize);
                let kernel: Vec<usize> = cur
                    .spatial
                    .iter()
                    .map(|&e| rng.gen_range(1..=5usize.min(e)))
                    .collect();
                let k_elems: usize = kernel.iter().product();
                let stride = rng.gen_range(1..=2usize);
                let w = rand_weights(rng, cur.channels * f * k_elems, cur.channels * k_elems);
                layers.push(LayerSpec::RegularConv {
                    kernel: Extents::PerAxis(kernel),
                    stride: if stride == 1 { None } else { Some(Extents::Scalar(stride)) },
                    out_channels: f,
                    weights: w,
                    bias: rand_weights(rng, f, 1),
                });
            }
            1 => {
                let mult = rng.gen_range(1..=2usize);
                let kernel: Vec<usize> = cur
                    .spatial
                    .iter()
                    .map(|&e| rng.gen_range(1..=5usize.min(e)))
                    .collect();
                let k_elems: usize = kernel.iter().product();
                let w = rand_weights(rng, mult * cur.channels * k_elems, k_elems);
                layers.push(LayerSpec::DepthwiseConv {
                    kernel: Extents::PerAxis(kernel),
                    stride: None,
                    multiplier: mult,
                    weights: w,
                    bias: rand_weights(rng, mult * cur.channels, 1),
                });
            }
            _ => {
                let f = rng.gen_range(1..=8usize);
                let w = rand_weights(rng, cur.channels * f, cur.channels);
                layers.push(LayerSpec::PointwiseConv {
                    out_channels: f,
                    weights: w,
                    bias: rand_weights(rng, f, 1),
                });
            }
        }
        cur = shape_after(&layers, &input_shape)?;
        if rng.gen_bool(0.4) {
            layers.push(LayerSpec::Relu {});
        }
    }

    // the final conv output must be wide enough to split
    if *cur.spatial.last().unwrap() < min_final_extent {
        return None;
    }

    if rng.gen_bool(0.5) {
        let units = rng.gen_range(1..=8usize);
        let n_in = cur.element_count();
        if n_in * units <= 200_000 {
            layers.push(LayerSpec::Dense {
                units,
                weights: rand_weights(rng, n_in * units, n_in),
                bias: rand_weights(rng, units, 1),
            });
            layers.push(LayerSpec::Relu {});
            layers.push(LayerSpec::Dense {
                units: 1,
                weights: rand_weights(rng, units, units),
                bias: rand_weights(rng, 1, 1),
            });
        }
    }

    let mut shape_vec = vec![input_shape.channels];
    shape_vec.extend(&input_shape.spatial);
    let model =
        validate(ModelSpec { format_version: 1, input_shape: shape_vec, layers }).ok()?;
    let n = input_shape.element_count();
    let data = rand_weights(rng, n, 1);
    let input = Tensor::new(input_shape, data).unwrap();
    Some(GeneratedCase { model, input })
}

fn shape_after(layers: &[LayerSpec], input: &Shape) -> Option<Shape> {
    let mut shape_vec = vec![input.channels];
    shape_vec.extend(&input.spatial);
    let spec = ModelSpec { format_version: 1, input_shape: shape_vec, layers: layers.to_vec() };
    validate(spec).ok().map(|m| m.output_shape().clone())
}

/// Direct nested-loop convolution, independent of the im2col path.
pub fn conv_oracle(x: &Tensor, layer: &LayerSpec) -> Tensor {
    let LayerSpec::RegularConv { kernel, stride, out_channels, weights, bias } = layer else {
        panic!("oracle needs a regular conv");
    };
    let rank = x.shape().rank();
    let k = match kernel {
        Extents::Scalar(k) => vec![*k; rank],
        Extents::PerAxis(v) => v.clone(),
    };
    let s = match stride {
        Some(Extents::Scalar(s)) => vec![*s; rank],
        Some(Extents::PerAxis(v)) => v.clone(),
        None => vec![1; rank],
    };
    let n_i = x.shape().channels;
    let n_o = *out_channels;
    match rank {
        1 => {
            let l = x.shape().spatial[0];
            let out_l = (l - k[0]) / s[0] + 1;
            let mut out = vec![0.0f32; n_o * out_l];
            for o in 0..n_o {
                for p in 0..out_l {
                    let mut acc = f64::from(bias[o]);
                    for i in 0..n_i {
                        for d in 0..k[0] {
                            let w = weights[(o * n_i + i) * k[0] + d];
                            acc += f64::from(w) * f64::from(x.at(i, &[p * s[0] + d]));
                        }
                    }
                    out[o * out_l + p] = acc as f32;
                }
            }
            Tensor::new(Shape::new_1d(n_o, out_l), out).unwrap()
        }
        2 => {
            let (h, w) = (x.shape().spatial[0], x.shape().spatial[1]);
            let (kh, kw) = (k[0], k[1]);
            let (sh, sw) = (s[0], s[1]);
            let oh = (h - kh) / sh + 1;
            let ow = (w - kw) / sw + 1;
            let mut out = vec![0.0f32; n_o * oh * ow];
            for o in 0..n_o {
                for ph in 0..oh {
                    for pw in 0..ow {
                        let mut acc = f64::from(bias[o]);
                        for i in 0..n_i {
                            for dh in 0..kh {
                                for dw in 0..kw {
                                    let wv =
                                        weights[((o * n_i + i) * kh + dh) * kw + dw];
                                    acc += f64::from(wv)
                                        * f64::from(x.at(i, &[ph * sh + dh, pw * sw + dw]));
                                }
                            }
                        }
                        out[(o * oh + ph) * ow + pw] = acc as f32;
                    }
                }
            }
            Tensor::new(Shape::new_2d(n_o, oh, ow), out).unwrap()
        }
        _ => unreachable!(),
    }
}

/// A random regular conv layer plus matching input for the oracle checks.
pub fn random_conv_case(rng: &mut ChaCha8Rng) -> (Tensor, LayerSpec) {
    let rank = if rng.gen_bool(0.5) { 1 } else { 2 };
    let shape = if rank == 1 {
        Shape::new_1d(rng.gen_range(1..=4), rng.gen_range(4..=30))
    } else {
        Shape::new_2d(rng.gen_range(1..=4), rng.gen_range(4..=12), rng.gen_range(4..=12))
    };
    let kernel: Vec<usize> =
        shape.spatial.iter().map(|&e| rng.gen_range(1..=e.min(5))).collect();
    let stride = rng.gen_range(1..=2usize);
    let n_o = rng.gen_range(1..=5usize);
    let k_elems: usize = kernel.iter().product();
    let weights = rand_weights(rng, shape.channels * n_o * k_elems, shape.channels * k_elems);
    let bias = rand_weights(rng, n_o, 1);
    let data = rand_weights(rng, shape.element_count(), 1);
    let x = Tensor::new(shape, data).unwrap();
    let layer = LayerSpec::RegularConv {
        kernel: Extents::PerAxis(kernel),
        stride: if stride == 1 { None } else { Some(Extents::Scalar(stride)) },
        out_channels: n_o,
        weights,
        bias,
    };
    (x, layer)
}
