//! Architecture identifiers and the layer plans they expand to.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::Shape;

/// Width of the dense ReLU head inserted between flatten and output in the
/// convolutional families.
pub const DEFAULT_CONV_HEAD: usize = 20;
pub const FULLY_CONNECTED_WIDTH: usize = 94;
pub const FULLY_CONNECTED_DEPTH: usize = 4;
pub const SUM_NET_WIDTH: usize = 16;
pub const KERNEL_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    VggLike,
    MegaVggLike,
    FullyConnected,
    SumNet,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::VggLike,
        Family::MegaVggLike,
        Family::FullyConnected,
        Family::SumNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::VggLike => "vgg_like",
            Family::MegaVggLike => "mega_vgg_like",
            Family::FullyConnected => "fully_connected",
            Family::SumNet => "sum_net",
        }
    }

    pub fn is_conv(self) -> bool {
        matches!(self, Family::VggLike | Family::MegaVggLike)
    }

    /// Channel counts of the two convolutional blocks.
    pub fn default_channels(self) -> Option<[usize; 2]> {
        match self {
            Family::VggLike => Some([26, 52]),
            Family::MegaVggLike => Some([119, 238]),
            _ => None,
        }
    }

    pub fn default_hidden(self) -> usize {
        match self {
            Family::VggLike | Family::MegaVggLike => DEFAULT_CONV_HEAD,
            Family::FullyConnected => FULLY_CONNECTED_WIDTH,
            Family::SumNet => SUM_NET_WIDTH,
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Padding {
    /// No padding; each 3x3 convolution shrinks height and width by 2.
    #[default]
    Valid,
    /// Zero padding of one pixel; convolutions preserve height and width.
    Same,
}

impl Padding {
    fn name(self) -> &'static str {
        match self {
            Padding::Valid => "valid",
            Padding::Same => "same",
        }
    }

    pub(crate) fn amount(self) -> usize {
        match self {
            Padding::Valid => 0,
            Padding::Same => KERNEL_SIZE / 2,
        }
    }
}

/// An architecture family plus optional width overrides.
///
/// The canonical text form is the family name, optionally followed by
/// `:` and comma-separated overrides, e.g.
/// `vgg_like:channels=4x6,hidden=5,padding=same` or `fully_connected:hidden=60`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ArchitectureId {
    pub family: Family,
    /// Conv block channel counts; ignored by dense families.
    pub channels: Option<[usize; 2]>,
    /// Dense hidden width (the head width for conv families).
    pub hidden: Option<usize>,
    pub padding: Padding,
}

impl ArchitectureId {
    pub const fn new(family: Family) -> Self {
        ArchitectureId {
            family,
            channels: None,
            hidden: None,
            padding: Padding::Valid,
        }
    }

    pub fn with_channels(mut self, block1: usize, block2: usize) -> Self {
        self.channels = Some([block1, block2]);
        self
    }

    pub fn with_hidden(mut self, width: usize) -> Self {
        self.hidden = Some(width);
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn channels(&self) -> [usize; 2] {
        self.channels
            .or_else(|| self.family.default_channels())
            .unwrap_or([0, 0])
    }

    pub fn hidden(&self) -> usize {
        self.hidden.unwrap_or_else(|| self.family.default_hidden())
    }

    /// Drops overrides that equal the family defaults so that equal
    /// architectures print identically.
    pub fn canonical(mut self) -> Self {
        if !self.family.is_conv() {
            self.channels = None;
            self.padding = Padding::Valid;
        }
        if self.channels == self.family.default_channels() {
            self.channels = None;
        }
        if self.hidden == Some(self.family.default_hidden()) {
            self.hidden = None;
        }
        self
    }

    /// Expands to the layer plan for a given input shape, validating that
    /// every layer receives a non-empty input.
    pub fn plan(&self, input: Shape) -> Result<Vec<LayerSpec>> {
        if input.is_empty() {
            return Err(Error::Config(format!("empty input shape {input}")));
        }
        let hidden = self.hidden();
        if hidden == 0 {
            return Err(Error::Config(format!("{self}: hidden width must be positive")));
        }
        let mut plan = Vec::new();
        match self.family {
            Family::SumNet => {
                plan.push(LayerSpec::Sum { inputs: input.len() });
                plan.push(LayerSpec::Dense {
                    inputs: 1,
                    outputs: hidden,
                    bias: true,
                });
                plan.push(LayerSpec::Relu { len: hidden });
                plan.push(LayerSpec::Dense {
                    inputs: hidden,
                    outputs: 1,
                    bias: true,
                });
            }
            Family::FullyConnected => {
                plan.push(LayerSpec::Flatten { len: input.len() });
                let mut width = input.len();
                for _ in 0..FULLY_CONNECTED_DEPTH {
                    plan.push(LayerSpec::Dense {
                        inputs: width,
                        outputs: hidden,
                        bias: true,
                    });
                    plan.push(LayerSpec::Relu { len: hidden });
                    width = hidden;
                }
                plan.push(LayerSpec::Dense {
                    inputs: width,
                    outputs: 1,
                    bias: true,
                });
            }
            Family::VggLike | Family::MegaVggLike => {
                let [c1, c2] = self.channels();
                if c1 == 0 || c2 == 0 {
                    return Err(Error::Config(format!("{self}: channel counts must be positive")));
                }
                let pad = self.padding.amount();
                let mut shape = input;
                let mut conv_index = 0;
                for (block, channels) in [c1, c2].into_iter().enumerate() {
                    for _ in 0..2 {
                        conv_index += 1;
                        let out_h = (shape.height + 2 * pad).checked_sub(KERNEL_SIZE - 1);
                        let out_w = (shape.width + 2 * pad).checked_sub(KERNEL_SIZE - 1);
                        let output = match (out_h, out_w) {
                            (Some(h), Some(w)) if h > 0 && w > 0 => Shape::new(h, w, channels),
                            _ => {
                                return Err(Error::Config(format!(
                                    "{self}: layer conv{conv_index} cannot apply a {k}x{k} {p} \
                                     convolution to a {shape} input (from network input {input})",
                                    k = KERNEL_SIZE,
                                    p = self.padding.name(),
                                )))
                            }
                        };
                        plan.push(LayerSpec::Conv2d {
                            input: shape,
                            output,
                            pad,
                        });
                        plan.push(LayerSpec::Relu { len: output.len() });
                        shape = output;
                    }
                    if shape.height < 2 || shape.width < 2 {
                        return Err(Error::Config(format!(
                            "{self}: layer pool{} cannot 2x2 max-pool a {shape} input (from network input {input})",
                            block + 1
                        )));
                    }
                    let pooled = Shape::new(shape.height / 2, shape.width / 2, shape.channels);
                    plan.push(LayerSpec::MaxPool {
                        input: shape,
                        output: pooled,
                    });
                    shape = pooled;
                }
                plan.push(LayerSpec::Flatten { len: shape.len() });
                plan.push(LayerSpec::Dense {
                    inputs: shape.len(),
                    outputs: hidden,
                    bias: true,
                });
                plan.push(LayerSpec::Relu { len: hidden });
                plan.push(LayerSpec::Dense {
                    inputs: hidden,
                    outputs: 1,
                    bias: true,
                });
            }
        }
        Ok(plan)
    }

    /// Total number of trainable parameters for the given input shape.
    pub fn param_count(&self, input: Shape) -> Result<usize> {
        Ok(self.plan(input)?.iter().map(LayerSpec::param_count).sum())
    }
}

impl From<Family> for ArchitectureId {
    fn from(family: Family) -> Self {
        ArchitectureId::new(family)
    }
}

impl fmt::Display for ArchitectureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let canon = self.canonical();
        f.write_str(canon.family.name())?;
        let mut parts = Vec::new();
        if let Some([a, b]) = canon.channels {
            parts.push(format!("channels={a}x{b}"));
        }
        if let Some(h) = canon.hidden {
            parts.push(format!("hidden={h}"));
        }
        if canon.padding != Padding::Valid {
            parts.push(format!("padding={}", canon.padding.name()));
        }
        if !parts.is_empty() {
            write!(f, ":{}", parts.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for ArchitectureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut arch = ArchitectureId::new(name.parse()?);
        for part in rest.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad architecture override `{part}`")))?;
            let bad = || Error::Config(format!("bad value for `{key}` in `{s}`"));
            match key {
                "channels" => {
                    let (a, b) = value.split_once('x').ok_or_else(bad)?;
                    arch.channels = Some([a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?]);
                }
                "hidden" => arch.hidden = Some(value.parse().map_err(|_| bad())?),
                "padding" => {
                    arch.padding = match value {
                        "valid" => Padding::Valid,
                        "same" => Padding::Same,
                        _ => return Err(bad()),
                    }
                }
                _ => return Err(Error::Config(format!("unknown architecture override `{key}`"))),
            }
        }
        Ok(arch.canonical())
    }
}

/// One layer of an expanded plan. Parameter blocks are laid out weights
/// first, then biases; conv weights are `[ky][kx][in][out]` and dense weights
/// `[in][out]`, both row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d { input: Shape, output: Shape, pad: usize },
    Relu { len: usize },
    MaxPool { input: Shape, output: Shape },
    Flatten { len: usize },
    Dense { inputs: usize, outputs: usize, bias: bool },
    Sum { inputs: usize },
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { input, output, .. } => {
                KERNEL_SIZE * KERNEL_SIZE * input.channels * output.channels + output.channels
            }
            LayerSpec::Dense {
                inputs,
                outputs,
                bias,
            } => inputs * outputs + if bias { outputs } else { 0 },
            _ => 0,
        }
    }

    pub fn weight_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { input, output, .. } => {
                KERNEL_SIZE * KERNEL_SIZE * input.channels * output.channels
            }
            LayerSpec::Dense { inputs, outputs, .. } => inputs * outputs,
            _ => 0,
        }
    }

    /// Glorot fan-in and fan-out, if the layer has weights.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Conv2d { input, output, .. } => {
                let field = KERNEL_SIZE * KERNEL_SIZE;
                Some((field * input.channels, field * output.channels))
            }
            LayerSpec::Dense { inputs, outputs, .. } => Some((inputs, outputs)),
            _ => None,
        }
    }

    pub fn input_len(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { input, .. } | LayerSpec::MaxPool { input, .. } => input.len(),
            LayerSpec::Relu { len } | LayerSpec::Flatten { len } => len,
            LayerSpec::Dense { inputs, .. } | LayerSpec::Sum { inputs } => inputs,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { output, .. } | LayerSpec::MaxPool { output, .. } => output.len(),
            LayerSpec::Relu { len } | LayerSpec::Flatten { len } => len,
            LayerSpec::Dense { outputs, .. } => outputs,
            LayerSpec::Sum { .. } => 1,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv",
            LayerSpec::Relu { .. } => "relu",
            LayerSpec::MaxPool { .. } => "pool",
            LayerSpec::Flatten { .. } => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Sum { .. } => "sum",
        }
    }
}

impl TryFrom<String> for ArchitectureId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ArchitectureId> for String {
    fn from(v: ArchitectureId) -> String {
        v.to_string()
    }
}
