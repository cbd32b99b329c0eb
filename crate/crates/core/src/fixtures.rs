//! Benchmark fixtures: the five dataset configurations (kernel size and
//! filter counts), deterministic random weights, synthetic labeled series,
//! and reference pipeline timings.
//!
//! The separable fixture trunk is
//! `conv -> relu -> depthwise(K=2) -> maxpool(time/8) -> pointwise`,
//! followed by a tail of `relu -> global maxpool -> dense(16) -> relu ->
//! dense(1)`. 1-D configs consume a raw window of 1200 samples; 2-D configs
//! consume a 22-row tri-domain feature matrix. Dense widths are fixture
//! choices, not reproductions of any published model size.

use crate::error::Result;
use crate::features::{DomainSet, FeatureRecipe};
use crate::modelio::{validate, Extents, LayerSpec, Model, ModelSpec};
use crate::pipeline::SeriesDataset;
use crate::tensor::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Time-axis pooling factor between the depthwise and pointwise stages.
pub const FIXTURE_POOL: usize = 8;

pub const FIXTURE_DENSE_UNITS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureInput {
    /// Raw 1-D window.
    Raw { window: usize },
    /// Tri-domain feature matrix of a window.
    TriDomain { window: usize, subwindow: usize, stride: usize },
}

impl FixtureInput {
    pub fn recipe(&self) -> Option<FeatureRecipe> {
        match self {
            FixtureInput::Raw { .. } => None,
            FixtureInput::TriDomain { window, subwindow, stride } => Some(FeatureRecipe {
                window: *window,
                subwindow: *subwindow,
                stride: *stride,
                domains: DomainSet::TRI,
            }),
        }
    }

    pub fn input_shape(&self) -> Shape {
        match self {
            FixtureInput::Raw { window } => Shape::new_1d(1, *window),
            FixtureInput::TriDomain { .. } => self.recipe().unwrap().matrix_shape(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrunkConfig {
    pub name: &'static str,
    /// Convolution kernel, one or two extents.
    pub kernel: Vec<usize>,
    /// Filters of the regular-convolution counterpart.
    pub regular_filters: usize,
    /// Pointwise output filters of the separable variant.
    pub separable_filters: usize,
    /// Depthwise multiplier of the separable variant. The 1-D rows double
    /// their filter count instead and use a standard depthwise stage (K=1);
    /// the 2-D rows keep filters equal and double through K=2.
    pub multiplier: usize,
    pub input: FixtureInput,
}

/// The five benchmark configurations.
pub fn configs() -> Vec<TrunkConfig> {
    vec![
        TrunkConfig {
            name: "yahoo",
            kernel: vec![4, 4],
            regular_filters: 32,
            separable_filters: 32,
            multiplier: 2,
            input: FixtureInput::TriDomain { window: 200, subwindow: 8, stride: 1 },
        },
        TrunkConfig {
            name: "swat1",
            kernel: vec![5, 5],
            regular_filters: 64,
            separable_filters: 64,
            multiplier: 2,
            input: FixtureInput::TriDomain { window: 1200, subwindow: 8, stride: 1 },
        },
        TrunkConfig {
            name: "swat2",
            kernel: vec![3],
            regular_filters: 32,
            separable_filters: 64,
            multiplier: 1,
            input: FixtureInput::Raw { window: 1200 },
        },
        TrunkConfig {
            name: "swat3",
            kernel: vec![3],
            regular_filters: 64,
            separable_filters: 128,
            multiplier: 1,
            input: FixtureInput::Raw { window: 1200 },
        },
        TrunkConfig {
            name: "skab",
            kernel: vec![3],
            regular_filters: 16,
            separable_filters: 32,
            multiplier: 1,
            input: FixtureInput::Raw { window: 1200 },
        },
    ]
}

pub fn config(name: &str) -> Option<TrunkConfig> {
    configs().into_iter().find(|c| c.name == name)
}

fn weights(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f32> {
    let scale = 1.0 / (fan_in as f32).sqrt();
    (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()
}

fn small_bias(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-0.05..=0.05)).collect()
}

fn regular_conv(rng: &mut ChaCha8Rng, kernel: &[usize], n_i: usize, n_o: usize) -> LayerSpec {
    let k_elems: usize = kernel.iter().product();
    LayerSpec::RegularConv {
        kernel: Extents::PerAxis(kernel.to_vec()),
        stride: None,
        out_channels: n_o,
        weights: weights(rng, n_i * n_o * k_elems, n_i * k_elems),
        bias: small_bias(rng, n_o),
    }
}

fn depthwise_conv(rng: &mut ChaCha8Rng, kernel: &[usize], n_i: usize, mult: usize) -> LayerSpec {
    let k_elems: usize = kernel.iter().product();
    LayerSpec::DepthwiseConv {
        kernel: Extents::PerAxis(kernel.to_vec()),
        stride: None,
        multiplier: mult,
        weights: weights(rng, mult * n_i * k_elems, k_elems),
        bias: small_bias(rng, mult * n_i),
    }
}

fn pointwise_conv(rng: &mut ChaCha8Rng, n_i: usize, n_o: usize) -> LayerSpec {
    LayerSpec::PointwiseConv {
        out_channels: n_o,
        weights: weights(rng, n_i * n_o, n_i),
        bias: small_bias(rng, n_o),
    }
}

fn dense(rng: &mut ChaCha8Rng, n_in: usize, units: usize) -> LayerSpec {
    LayerSpec::Dense {
        units,
        weights: weights(rng, n_in * units, n_in),
        bias: small_bias(rng, units),
    }
}

/// Time-axis pooling kernel: `[q]` for 1-D, `[1, q]` for 2-D.
fn time_pool(rank: usize, q: usize) -> LayerSpec {
    let kernel = if rank == 1 { vec![q] } else { vec![1, q] };
    LayerSpec::MaxPool { kernel: Extents::PerAxis(kernel), stride: None }
}

fn global_pool(spatial: &[usize]) -> LayerSpec {
    LayerSpec::MaxPool { kernel: Extents::PerAxis(spatial.to_vec()), stride: None }
}

/// The depthwise-separable fixture for a configuration.
pub fn separable_model(cfg: &TrunkConfig, seed: u64) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = cfg.input.input_shape();
    let rank = input.rank();
    let k = &cfg.kernel;
    let f1 = cfg.regular_filters;
    let f2 = cfg.separable_filters;

    let mut layers = vec![
        regular_conv(&mut rng, k, input.channels, f1),
        LayerSpec::Relu {},
        depthwise_conv(&mut rng, k, f1, cfg.multiplier),
        time_pool(rank, FIXTURE_POOL),
        pointwise_conv(&mut rng, cfg.multiplier * f1, f2),
        LayerSpec::Relu {},
    ];
    // shape bookkeeping to size the global pool and dense stage
    let mut spec = ModelSpec {
        format_version: 1,
        input_shape: shape_vec(&input),
        layers: layers.clone(),
    };
    let partial = validate(spec.clone())?;
    let pw_out = partial.output_shape().clone();
    layers.push(global_pool(&pw_out.spatial));
    layers.push(dense(&mut rng, f2, FIXTURE_DENSE_UNITS));
    layers.push(LayerSpec::Relu {});
    layers.push(dense(&mut rng, FIXTURE_DENSE_UNITS, 1));
    spec.layers = layers;
    validate(spec)
}

/// The regular-convolution counterpart: same trunk with one regular
/// convolution of `separable_filters` outputs in place of the
/// depthwise/pointwise pair.
pub fn regular_model(cfg: &TrunkConfig, seed: u64) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = cfg.input.input_shape();
    let rank = input.rank();
    let k = &cfg.kernel;
    let f1 = cfg.regular_filters;
    let f2 = cfg.separable_filters;

    let mut layers = vec![
        regular_conv(&mut rng, k, input.channels, f1),
        LayerSpec::Relu {},
        regular_conv(&mut rng, k, f1, f2),
        time_pool(rank, FIXTURE_POOL),
        LayerSpec::Relu {},
    ];
    let mut spec = ModelSpec {
        format_version: 1,
        input_shape: shape_vec(&input),
        layers: layers.clone(),
    };
    let partial = validate(spec.clone())?;
    let conv_out = partial.output_shape().clone();
    layers.push(global_pool(&conv_out.spatial));
    layers.push(dense(&mut rng, f2, FIXTURE_DENSE_UNITS));
    layers.push(LayerSpec::Relu {});
    layers.push(dense(&mut rng, FIXTURE_DENSE_UNITS, 1));
    spec.layers = layers;
    validate(spec)
}

/// One depthwise-separable stage and its same-output regular convolution,
/// both over a `regular_filters`-channel input. Used for parameter/MAC
/// ratio comparisons.
pub fn stage_pair(cfg: &TrunkConfig, seed: u64) -> Result<(Model, Model)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = cfg.input.input_shape();
    let rank = input.rank();
    let f1 = cfg.regular_filters;
    let f2 = cfg.separable_filters;

    // stage input: the trunk after the first convolution
    let mut stage_spatial = Vec::with_capacity(rank);
    for (axis, &e) in input.spatial.iter().enumerate() {
        stage_spatial.push(e - cfg.kernel[axis.min(cfg.kernel.len() - 1)] + 1);
    }
    let stage_input = Shape { channels: f1, spatial: stage_spatial };

    let separable = validate(ModelSpec {
        format_version: 1,
        input_shape: shape_vec(&stage_input),
        layers: vec![
            depthwise_conv(&mut rng, &cfg.kernel, f1, cfg.multiplier),
            pointwise_conv(&mut rng, cfg.multiplier * f1, f2),
        ],
    })?;
    let regular = validate(ModelSpec {
        format_version: 1,
        input_shape: shape_vec(&stage_input),
        layers: vec![regular_conv(&mut rng, &cfg.kernel, f1, f2)],
    })?;
    Ok((separable, regular))
}

fn shape_vec(shape: &Shape) -> Vec<usize> {
    let mut v = vec![shape.channels];
    v.extend(&shape.spatial);
    v
}

/// A synthetic raw window with mixed periodic content.
pub fn synthetic_window(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (0..len)
        .map(|t| {
            let t = t as f64;
            (t / 23.0 + phase).sin() + 0.4 * (t / 7.0).cos() + rng.gen_range(-0.1..0.1)
        })
        .collect()
}

/// A model input tensor for a configuration: the raw window or its
/// tri-domain feature matrix.
pub fn fixture_input(cfg: &TrunkConfig, seed: u64) -> Result<Tensor> {
    match &cfg.input {
        FixtureInput::Raw { window } => {
            let z = synthetic_window(*window, seed);
            Tensor::new(Shape::new_1d(1, *window), z.iter().map(|&v| v as f32).collect())
        }
        FixtureInput::TriDomain { window, .. } => {
            let z = synthetic_window(*window, seed);
            let recipe = cfg.input.recipe().unwrap();
            Ok(crate::features::build_feature_matrix(&z, &recipe)?.tensor)
        }
    }
}

/// A labeled synthetic series: smooth periodic base plus injected spike
/// anomalies.
pub fn synthetic_series(n: usize, anomaly_rate: f64, seed: u64) -> SeriesDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n);
    let mut labels = vec![0u8; n];
    for t in 0..n {
        let t_f = t as f64;
        let base = (t_f / 31.0).sin() + 0.5 * (t_f / 11.0).cos();
        values.push(base + rng.gen_range(-0.05..0.05));
    }
    let anomalies = ((n as f64) * anomaly_rate) as usize;
    for _ in 0..anomalies {
        let t = rng.gen_range(0..n);
        let magnitude: f64 = rng.gen_range(2.0..4.0);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        values[t] += sign * magnitude;
        labels[t] = 1;
    }
    SeriesDataset::from_rows((0..n).map(|i| i as f64).collect(), values, labels)
        .expect("non-empty synthetic series")
}

/// Reference single/multi-thread pipeline timings (milliseconds) for the
/// five configurations: (name, single, multi, prep, fwd).
pub fn reference_pipeline_rows() -> [(&'static str, f64, f64, f64, f64); 5] {
    [
        ("yahoo", 110.77, 73.88, 56.19, 48.16),
        ("swat1", 87.45, 65.64, 49.33, 31.45),
        ("swat2", 52.01, 39.83, 29.33, 15.42),
        ("swat3", 76.42, 47.12, 34.40, 35.70),
        ("skab", 116.68, 97.64, 97.64, 12.14),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_configs_build_and_patch() {
        for cfg in configs() {
            let model = separable_model(&cfg, 7).unwrap();
            let plan = crate::scheduler::plan_patches(&model, 3).unwrap();
            assert_eq!(plan.patches, 3, "{}", cfg.name);
            let reg = regular_model(&cfg, 7).unwrap();
            assert_eq!(reg.output_shape().element_count(), 1);
            assert_eq!(model.output_shape().element_count(), 1);
        }
    }

    #[test]
    fn swat2_trunk_extents() {
        let cfg = config("swat2").unwrap();
        let model = separable_model(&cfg, 1).unwrap();
        let extents: Vec<usize> =
            model.layer_io.iter().map(|io| io.output.spatial.last().copied().unwrap()).collect();
        // conv 1198, relu, dw 1196, pool 149, pw 149, relu, global pool 1,
        // dense/relu/dense
        assert_eq!(&extents[..7], &[1198, 1198, 1196, 149, 149, 149, 1]);
    }

    #[test]
    fn fixture_inputs_match_model_shapes() {
        for cfg in configs() {
            let model = separable_model(&cfg, 3).unwrap();
            let input = fixture_input(&cfg, 3).unwrap();
            assert_eq!(input.shape(), model.input_shape(), "{}", cfg.name);
        }
    }

    #[test]
    fn synthetic_series_has_labels() {
        let ds = synthetic_series(2000, 0.01, 42);
        let positives: usize = ds.labels.iter().map(|&l| l as usize).sum();
        assert!(positives > 0 && positives < 60);
        assert_eq!(ds.len(), 2000);
    }

    #[test]
    fn deterministic_generation() {
        let cfg = config("skab").unwrap();
        let a = separable_model(&cfg, 11).unwrap();
        let b = separable_model(&cfg, 11).unwrap();
        assert_eq!(a.spec, b.spec);
    }
}
