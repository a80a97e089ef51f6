//! The dual-pixel deblurring encoder-decoder and its input variants.
//!
//! Layout for `depth = D` and `base_filters = F`:
//!
//! * E-Block i (1..=D): two 3x3 conv + ReLU with `F·2^(i-1)` filters, then
//!   2x2 max pooling. The last E-Block applies dropout before pooling.
//! * Bottleneck: two 3x3 conv + ReLU with `F·2^D` filters, then dropout.
//! * D-Block j (1..=D), mirroring encoder level `D+1-j`: up-convolution
//!   (nearest 2x upsample + 2x2 conv), concatenation with the encoder map
//!   (encoder channels first), two 3x3 conv + ReLU.
//! * Head: 1x1 conv to three channels followed by a sigmoid.
//!
//! The network is fully convolutional; any input whose spatial dims are
//! multiples of `2^D` is accepted.

mod adapt;
pub mod checkpoint;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{he_init, zero_bias, Eager, Graph, Padding, Scalar, ShapeGraph, Tensor4};

pub use adapt::{adapt_input, ViewSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputVariant {
    /// Left and right views, six channels.
    Dual,
    /// Combined view only, three channels.
    Single,
    /// Left, right and combined views, nine channels.
    Triple,
}

impl InputVariant {
    pub fn channels(self) -> usize {
        match self {
            InputVariant::Dual => 6,
            InputVariant::Single => 3,
            InputVariant::Triple => 9,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InputVariant::Dual => "dual",
            InputVariant::Single => "single",
            InputVariant::Triple => "triple",
        }
    }
}

impl fmt::Display for InputVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dual" => Ok(Self::Dual),
            "single" => Ok(Self::Single),
            "triple" => Ok(Self::Triple),
            other => Err(Error::Config(format!("unknown input variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_variant: InputVariant,
    pub base_filters: usize,
    pub depth: usize,
    pub dropout_rate: f64,
    pub patch_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_variant: InputVariant::Dual,
            base_filters: 64,
            depth: 4,
            dropout_rate: 0.4,
            patch_size: 512,
        }
    }
}

impl ModelConfig {
    /// The reduced configuration used for desk-scale runs.
    pub fn reduced(input_variant: InputVariant, base_filters: usize, depth: usize, patch_size: usize) -> Self {
        Self {
            input_variant,
            base_filters,
            depth,
            patch_size,
            ..Self::default()
        }
    }

    pub fn input_channels(&self) -> usize {
        self.input_variant.channels()
    }

    /// Spatial dims must be multiples of this.
    pub fn multiple(&self) -> usize {
        1 << self.depth
    }

    pub fn filters(&self, level: usize) -> usize {
        self.base_filters << (level - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_filters == 0 || self.depth == 0 || self.depth > 8 {
            return Err(Error::Config(format!(
                "base_filters {} / depth {} out of range",
                self.base_filters, self.depth
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.patch_size == 0 || self.patch_size % self.multiple() != 0 {
            return Err(Error::Config(format!(
                "patch size {} is not divisible by 2^depth = {}",
                self.patch_size,
                self.multiple()
            )));
        }
        Ok(())
    }

    /// Checks that an input of the given size can pass through the network.
    pub fn check_input(&self, height: usize, width: usize, channels: usize) -> Result<()> {
        if channels != self.input_channels() {
            return Err(Error::Config(format!(
                "{} variant expects {} input channels, got {channels}",
                self.input_variant,
                self.input_channels()
            )));
        }
        let m = self.multiple();
        if height == 0 || width == 0 || height % m != 0 || width % m != 0 {
            let up = |v: usize| v.div_ceil(m).max(1) * m - v;
            return Err(Error::IndivisibleInput {
                height,
                width,
                multiple: m,
                pad_height: up(height),
                pad_width: up(width),
            });
        }
        Ok(())
    }

    /// Names and shapes of every parameter, in build order.
    pub fn param_shapes(&self) -> Vec<(String, [usize; 4])> {
        let mut out = Vec::new();
        let mut conv = |name: String, k: usize, cin: usize, cout: usize| {
            out.push((format!("{name}.weight"), [k, k, cin, cout]));
            out.push((format!("{name}.bias"), [1, 1, 1, cout]));
        };
        let mut cin = self.input_channels();
        for i in 1..=self.depth {
            let f = self.filters(i);
            conv(format!("enc{i}.conv1"), 3, cin, f);
            conv(format!("enc{i}.conv2"), 3, f, f);
            cin = f;
        }
        let fb = self.filters(self.depth + 1);
        conv("bottleneck.conv1".into(), 3, cin, fb);
        conv("bottleneck.conv2".into(), 3, fb, fb);
        cin = fb;
        for j in 1..=self.depth {
            let f = self.filters(self.depth + 1 - j);
            conv(format!("dec{j}.up"), 2, cin, f);
            conv(format!("dec{j}.conv1"), 3, 2 * f, f);
            conv(format!("dec{j}.conv2"), 3, f, f);
            cin = f;
        }
        conv("head".into(), 1, cin, 3);
        out
    }
}

/// Named weights of one network, in build order.
#[derive(Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    tensors: Vec<(String, Tensor4<T>)>,
}

impl<T: Scalar> fmt::Debug for ModelParams<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelParams")
            .field("config", &self.config)
            .field("tensors", &self.tensors.len())
            .field("count", &self.count())
            .finish()
    }
}

/// Per-parameter seed derived from the model seed.
fn param_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// He-initialised parameters for `config`; biases start at zero.
pub fn build<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    config.validate()?;
    let tensors = config
        .param_shapes()
        .into_iter()
        .enumerate()
        .map(|(i, (name, shape))| {
            let t = if name.ends_with(".bias") {
                zero_bias(shape[3])
            } else {
                he_init(shape, param_seed(seed, i))
            };
            (name, t)
        })
        .collect();
    Ok(ModelParams {
        config: *config,
        tensors,
    })
}

impl<T: Scalar> ModelParams<T> {
    /// Assembles parameters from named tensors, checking them against the
    /// shapes `config` requires.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<(String, Tensor4<T>)>) -> Result<Self> {
        config.validate()?;
        let want = config.param_shapes();
        if want.len() != tensors.len() {
            return Err(Error::Config(format!(
                "shape mismatch: {} variant/config needs {} tensors, got {}",
                config.input_variant,
                want.len(),
                tensors.len()
            )));
        }
        for ((wn, ws), (n, t)) in want.iter().zip(&tensors) {
            if wn != n || *ws != t.shape() {
                return Err(Error::Config(format!(
                    "shape mismatch for `{n}`: expected `{wn}` {ws:?}, found {:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn tensors(&self) -> &[(String, Tensor4<T>)] {
        &self.tensors
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    /// Mutable `(name, tensor)` pairs in build order.
    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor4<T>)> {
        self.tensors.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor4<T>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Total number of scalar weights.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config,
            tensors: self.tensors.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
        }
    }
}

fn dropout_seed(seed: u64, site: u64) -> u64 {
    param_seed(seed, 1_000_000 + site as usize)
}

/// Registers every parameter with `graph`, in build order.
pub fn bind_params<'a, T: Scalar, G: Graph<'a, T>>(graph: &mut G, params: &'a ModelParams<T>) -> Vec<G::Value> {
    params.tensors.iter().map(|(_, t)| graph.param(t)).collect()
}

/// Runs the network on `graph` with parameters previously registered by
/// [`bind_params`]. `training` enables dropout, seeded by `seed`.
pub fn forward_graph<'a, T: Scalar, G: Graph<'a, T>>(
    graph: &mut G,
    params: &'a ModelParams<T>,
    bound: &[G::Value],
    input: G::Value,
    input_shape: [usize; 4],
    training: bool,
    seed: u64,
) -> Result<G::Value> {
    let cfg = &params.config;
    cfg.check_input(input_shape[1], input_shape[2], input_shape[3])?;
    if bound.len() != params.tensors.len() {
        return Err(Error::Config(format!(
            "{} bound parameters for a model with {}",
            bound.len(),
            params.tensors.len()
        )));
    }
    let lookup = |name: &str| -> Result<(&G::Value, &G::Value)> {
        let i = params
            .tensors
            .iter()
            .position(|(n, _)| n.strip_suffix(".weight") == Some(name))
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}.weight`")))?;
        Ok((&bound[i], &bound[i + 1]))
    };
    let conv_relu = |g: &mut G, x: &G::Value, name: &str| -> Result<G::Value> {
        let (w, b) = lookup(name)?;
        let y = g.conv2d(x, w, b, Padding::same(3, 3))?;
        Ok(g.relu(&y))
    };

    let mut skips = Vec::with_capacity(cfg.depth);
    let mut x = input;
    for i in 1..=cfg.depth {
        x = conv_relu(graph, &x, &format!("enc{i}.conv1"))?;
        x = conv_relu(graph, &x, &format!("enc{i}.conv2"))?;
        if i == cfg.depth {
            x = graph.dropout(&x, cfg.dropout_rate, dropout_seed(seed, 0), training)?;
        }
        let pooled = graph.maxpool2x2(&x)?;
        skips.push(x);
        x = pooled;
    }
    x = conv_relu(graph, &x, "bottleneck.conv1")?;
    x = conv_relu(graph, &x, "bottleneck.conv2")?;
    x = graph.dropout(&x, cfg.dropout_rate, dropout_seed(seed, 1), training)?;

    for j in 1..=cfg.depth {
        let (w, b) = lookup(&format!("dec{j}.up"))?;
        let up = graph.upconv2x(&x, w, b)?;
        let skip = skips.pop().expect("one skip per level");
        let cat = graph.concat_channels(&skip, &up)?;
        drop(skip);
        x = conv_relu(graph, &cat, &format!("dec{j}.conv1"))?;
        x = conv_relu(graph, &x, &format!("dec{j}.conv2"))?;
    }
    let (w, b) = lookup("head")?;
    let y = graph.conv2d(&x, w, b, Padding::same(1, 1))?;
    Ok(graph.sigmoid(&y))
}

/// Inference-mode forward pass.
pub fn forward<T: Scalar>(params: &ModelParams<T>, input: &Tensor4<T>) -> Result<Tensor4<T>> {
    forward_mode(params, input, false, 0)
}

pub fn forward_mode<T: Scalar>(
    params: &ModelParams<T>,
    input: &Tensor4<T>,
    training: bool,
    seed: u64,
) -> Result<Tensor4<T>> {
    let mut g = Eager;
    let bound = bind_params(&mut g, params);
    let x = <Eager as Graph<T>>::input(&mut g, input.clone());
    let y = forward_graph(&mut g, params, &bound, x, input.shape(), training, seed)?;
    Ok(y.into_owned())
}

/// Shape propagation through the layer graph without computing anything.
pub fn trace_shapes<T: Scalar>(params: &ModelParams<T>, input_shape: [usize; 4]) -> Result<ShapeGraph> {
    let mut g = ShapeGraph::default();
    let bound = bind_params(&mut g, params);
    let out = forward_graph(&mut g, params, &bound, input_shape, input_shape, false, 0)?;
    g.events.push(crate::tensor::ShapeEvent {
        op: "output",
        inputs: vec![],
        output: out,
    });
    Ok(g)
}
