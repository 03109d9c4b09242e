use std::ops::Range;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::{ArchitectureId, LayerSpec, KERNEL_SIZE};
use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::linalg;

/// Layered network with a scalar output and a flat parameter vector.
///
/// Parameters are stored in layer order; within a layer, weights come before
/// biases, each block row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Option<ArchitectureId>,
    input_shape: Shape,
    layers: Vec<LayerSpec>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

/// Outputs of every layer from one forward pass.
///
/// `outputs[0]` is the flattened input and `outputs[i + 1]` the output of
/// layer `i`; the last entry holds the scalar network output.
#[derive(Debug, Clone)]
pub struct Activations {
    outputs: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> f64 {
        self.outputs.last().expect("at least one layer")[0]
    }

    /// Output of layer `i` (zero-based).
    pub fn layer(&self, i: usize) -> &[f64] {
        &self.outputs[i + 1]
    }

    /// Hidden layer outputs, excluding the input and the scalar output.
    pub fn hidden(&self) -> &[Vec<f64>] {
        let n = self.outputs.len();
        &self.outputs[1..n - 1]
    }

    /// Input to the final layer, `h_{L-1}`. `None` when the network is a
    /// single layer acting directly on the image.
    pub fn last_hidden(&self) -> Option<&[f64]> {
        let n = self.outputs.len();
        (n > 2).then(|| self.outputs[n - 2].as_slice())
    }
}

impl Network {
    /// Builds `arch` for `input_shape` with Glorot-uniform weights and zero
    /// biases drawn from a generator seeded with `seed`.
    pub fn build(arch: ArchitectureId, input_shape: Shape, seed: u64) -> Result<Self> {
        let layers = arch.plan(input_shape)?;
        let mut net = Network::from_layers(input_shape, layers, None)?;
        net.arch = Some(arch.canonical());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (i, layer) in net.layers.iter().enumerate() {
            let Some((fan_in, fan_out)) = layer.fans() else {
                continue;
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let start = net.offsets[i];
            for w in &mut net.params[start..start + layer.weight_count()] {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(net)
    }

    /// Network from an explicit layer list. With `params == None` every
    /// parameter starts at zero.
    pub fn from_layers(
        input_shape: Shape,
        layers: Vec<LayerSpec>,
        params: Option<Vec<f64>>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        let mut width = input_shape.len();
        for (i, layer) in layers.iter().enumerate() {
            if layer.input_len() != width {
                return Err(Error::Config(format!(
                    "layer {i} ({}) expects {} inputs but receives {width}",
                    layer.kind_name(),
                    layer.input_len()
                )));
            }
            width = layer.output_len();
        }
        if width != 1 {
            return Err(Error::Config(format!(
                "network output must be scalar, final layer produces {width} values"
            )));
        }
        let mut offsets = Vec::with_capacity(layers.len() + 1);
        let mut total = 0;
        for layer in &layers {
            offsets.push(total);
            total += layer.param_count();
        }
        offsets.push(total);
        let params = match params {
            Some(p) if p.len() != total => {
                return Err(Error::Config(format!(
                    "layer list has {total} parameters, got a vector of {}",
                    p.len()
                )))
            }
            Some(p) => p,
            None => vec![0.0; total],
        };
        Ok(Network {
            arch: None,
            input_shape,
            layers,
            offsets,
            params,
        })
    }

    pub fn arch(&self) -> Option<ArchitectureId> {
        self.arch
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Input(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Range of layer `i`'s block in the flat parameter vector.
    pub fn layer_params(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Width of `h_{L-1}`, if the network has a hidden layer.
    pub fn last_hidden_len(&self) -> Option<usize> {
        let n = self.layers.len();
        (n > 1).then(|| self.layers[n - 1].input_len())
    }

    fn check_input(&self, image: &Image) -> Result<()> {
        if image.shape() != self.input_shape {
            return Err(Error::Input(format!(
                "image shape {} does not match network input {}",
                image.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    pub fn forward(&self, image: &Image) -> Result<Activations> {
        self.check_input(image)?;
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(image.data().to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = outputs.last().expect("nonempty");
            let params = &self.params[self.layer_params(i)];
            let out = layer_forward(layer, input, params);
            outputs.push(out);
        }
        Ok(Activations { outputs })
    }

    pub fn output(&self, image: &Image) -> Result<f64> {
        Ok(self.forward(image)?.output())
    }

    /// Gradient of the scalar output with respect to every parameter, in
    /// flattening order.
    pub fn grad_params(&self, image: &Image) -> Result<Vec<f64>> {
        let acts = self.forward(image)?;
        let mut grad = vec![0.0; self.params.len()];
        self.backward(&acts, &mut grad);
        Ok(grad)
    }

    /// Forward pass plus gradient, sharing the activations.
    pub fn forward_with_grad(&self, image: &Image) -> Result<(Activations, Vec<f64>)> {
        let acts = self.forward(image)?;
        let mut grad = vec![0.0; self.params.len()];
        self.backward(&acts, &mut grad);
        Ok((acts, grad))
    }

    /// Writes `d f / d theta` into `grad`, overwriting every parameter block.
    pub fn backward(&self, acts: &Activations, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer length");
        // Input gradients are only needed down to the first parameterized layer.
        let first_param = self
            .layers
            .iter()
            .position(|l| l.param_count() > 0)
            .unwrap_or(self.layers.len());
        let mut delta = vec![1.0];
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let range = self.layer_params(i);
            let need_input = i > first_param;
            delta = layer_backward(
                layer,
                &acts.outputs[i],
                &acts.outputs[i + 1],
                &self.params[range.clone()],
                &delta,
                &mut grad[range],
                need_input,
            );
            if !need_input {
                break;
            }
        }
    }

    /// 1 iff `f(x) > 0`; a zero output is class 0.
    pub fn predict_class(&self, image: &Image) -> Result<u8> {
        Ok(u8::from(self.output(image)? > 0.0))
    }
}

/// Free-function form of [`Network::build`].
pub fn build_network(arch: ArchitectureId, input_shape: Shape, seed: u64) -> Result<Network> {
    Network::build(arch, input_shape, seed)
}

fn layer_forward(layer: &LayerSpec, input: &[f64], params: &[f64]) -> Vec<f64> {
    match *layer {
        LayerSpec::Conv2d { input: ishape, output, pad } => {
            let (weights, bias) = params.split_at(layer.weight_count());
            conv_forward(input, ishape, output, pad, weights, bias)
        }
        LayerSpec::Relu { .. } => input.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect(),
        LayerSpec::MaxPool { input: ishape, output } => {
            let mut out = vec![0.0; output.len()];
            for oy in 0..output.height {
                for ox in 0..output.width {
                    for c in 0..output.channels {
                        let (_, best) = pool_argmax(input, ishape, oy, ox, c);
                        out[(oy * output.width + ox) * output.channels + c] = best;
                    }
                }
            }
            out
        }
        LayerSpec::Flatten { .. } => input.to_vec(),
        LayerSpec::Dense { inputs, outputs, bias } => {
            let (weights, b) = params.split_at(inputs * outputs);
            let mut out = if bias { b.to_vec() } else { vec![0.0; outputs] };
            for (i, &x) in input.iter().enumerate() {
                if x != 0.0 {
                    linalg::axpy(x, &weights[i * outputs..(i + 1) * outputs], &mut out);
                }
            }
            out
        }
        LayerSpec::Sum { .. } => vec![input.iter().sum()],
    }
}

/// Index (into the pool input) and value of the first maximal element of a
/// 2x2 window, scanning row-major.
#[inline]
fn pool_argmax(input: &[f64], shape: Shape, oy: usize, ox: usize, c: usize) -> (usize, f64) {
    let mut best_idx = usize::MAX;
    let mut best = f64::NEG_INFINITY;
    for dy in 0..2 {
        for dx in 0..2 {
            let idx = ((2 * oy + dy) * shape.width + 2 * ox + dx) * shape.channels + c;
            if best_idx == usize::MAX || input[idx] > best {
                best_idx = idx;
                best = input[idx];
            }
        }
    }
    (best_idx, best)
}

/// Input row/column for kernel tap `k` at output position `o`, if in bounds.
#[inline]
fn tap(o: usize, k: usize, pad: usize, extent: usize) -> Option<usize> {
    (o + k).checked_sub(pad).filter(|&i| i < extent)
}

fn conv_forward(
    input: &[f64],
    ishape: Shape,
    oshape: Shape,
    pad: usize,
    weights: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let (ci_n, co_n) = (ishape.channels, oshape.channels);
    let mut out = vec![0.0; oshape.len()];
    for oy in 0..oshape.height {
        for ox in 0..oshape.width {
            let o = &mut out[(oy * oshape.width + ox) * co_n..][..co_n];
            o.copy_from_slice(bias);
            for ky in 0..KERNEL_SIZE {
                let Some(iy) = tap(oy, ky, pad, ishape.height) else {
                    continue;
                };
                for kx in 0..KERNEL_SIZE {
                    let Some(ix) = tap(ox, kx, pad, ishape.width) else {
                        continue;
                    };
                    let px = &input[(iy * ishape.width + ix) * ci_n..][..ci_n];
                    let wk = &weights[(ky * KERNEL_SIZE + kx) * ci_n * co_n..][..ci_n * co_n];
                    for (ci, &a) in px.iter().enumerate() {
                        if a != 0.0 {
                            linalg::axpy(a, &wk[ci * co_n..][..co_n], o);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Backpropagates `delta` (gradient w.r.t. the layer output) through one
/// layer, writing the parameter gradient and returning the input gradient
/// (empty when `need_input` is false).
fn layer_backward(
    layer: &LayerSpec,
    input: &[f64],
    output: &[f64],
    params: &[f64],
    delta: &[f64],
    grad: &mut [f64],
    need_input: bool,
) -> Vec<f64> {
    match *layer {
        LayerSpec::Conv2d { input: ishape, output: oshape, pad } => {
            let wcount = layer.weight_count();
            let (gw, gb) = grad.split_at_mut(wcount);
            let weights = &params[..wcount];
            conv_backward(input, ishape, oshape, pad, weights, delta, gw, gb, need_input)
        }
        LayerSpec::Relu { .. } => output
            .iter()
            .zip(delta)
            .map(|(&y, &d)| if y > 0.0 { d } else { 0.0 })
            .collect(),
        LayerSpec::MaxPool { input: ishape, output: oshape } => {
            let mut dx = vec![0.0; ishape.len()];
            for oy in 0..oshape.height {
                for ox in 0..oshape.width {
                    for c in 0..oshape.channels {
                        let (idx, _) = pool_argmax(input, ishape, oy, ox, c);
                        dx[idx] += delta[(oy * oshape.width + ox) * oshape.channels + c];
                    }
                }
            }
            dx
        }
        LayerSpec::Flatten { .. } => delta.to_vec(),
        LayerSpec::Dense { inputs, outputs, bias } => {
            let (gw, gb) = grad.split_at_mut(inputs * outputs);
            for (i, &x) in input.iter().enumerate() {
                let row = &mut gw[i * outputs..(i + 1) * outputs];
                if x == 0.0 {
                    row.fill(0.0);
                } else {
                    for (g, &d) in row.iter_mut().zip(delta) {
                        *g = x * d;
                    }
                }
            }
            if bias {
                gb.copy_from_slice(delta);
            }
            if !need_input {
                return Vec::new();
            }
            let weights = &params[..inputs * outputs];
            (0..inputs)
                .map(|i| linalg::dot(&weights[i * outputs..(i + 1) * outputs], delta))
                .collect()
        }
        LayerSpec::Sum { inputs } => vec![delta[0]; inputs],
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    ishape: Shape,
    oshape: Shape,
    pad: usize,
    weights: &[f64],
    delta: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    need_input: bool,
) -> Vec<f64> {
    let (ci_n, co_n) = (ishape.channels, oshape.channels);
    gw.fill(0.0);
    gb.fill(0.0);
    let mut dx = if need_input {
        vec![0.0; ishape.len()]
    } else {
        Vec::new()
    };
    for oy in 0..oshape.height {
        for ox in 0..oshape.width {
            let d = &delta[(oy * oshape.width + ox) * co_n..][..co_n];
            if d.iter().all(|&v| v == 0.0) {
                continue;
            }
            linalg::axpy(1.0, d, gb);
            for ky in 0..KERNEL_SIZE {
                let Some(iy) = tap(oy, ky, pad, ishape.height) else {
                    continue;
                };
                for kx in 0..KERNEL_SIZE {
                    let Some(ix) = tap(ox, kx, pad, ishape.width) else {
                        continue;
                    };
                    let pixel = (iy * ishape.width + ix) * ci_n;
                    let block = (ky * KERNEL_SIZE + kx) * ci_n * co_n;
                    for ci in 0..ci_n {
                        let a = input[pixel + ci];
                        if a != 0.0 {
                            linalg::axpy(a, d, &mut gw[block + ci * co_n..][..co_n]);
                        }
                    }
                    if need_input {
                        for ci in 0..ci_n {
                            dx[pixel + ci] += linalg::dot(&weights[block + ci * co_n..][..co_n], d);
                        }
                    }
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::arch::Family;

    fn dense(inputs: usize, outputs: usize, bias: bool) -> LayerSpec {
        LayerSpec::Dense {
            inputs,
            outputs,
            bias,
        }
    }

    #[test]
    fn dot_product_network() {
        let net = Network::from_layers(Shape::new(1, 2, 1), vec![dense(2, 1, false)], Some(vec![1.0, 2.0]))
            .unwrap();
        let x = Image::new(Shape::new(1, 2, 1), vec![3.0, 4.0]).unwrap();
        assert_eq!(net.output(&x).unwrap(), 11.0);
        assert!(net.forward(&x).unwrap().last_hidden().is_none());
    }

    #[test]
    fn single_neuron_gradient() {
        let net = Network::from_layers(
            Shape::new(1, 2, 1),
            vec![dense(2, 1, true)],
            Some(vec![1.0, -1.0, 0.0]),
        )
        .unwrap();
        let x = Image::new(Shape::new(1, 2, 1), vec![2.0, 1.0]).unwrap();
        assert_eq!(net.grad_params(&x).unwrap(), vec![2.0, 1.0, 1.0]);
    }

    #[test]
    fn sum_net_initialization() {
        let net = Network::build(Family::SumNet.into(), Shape::new(28, 28, 1), 7).unwrap();
        assert_eq!(net.param_count(), 49);
        // sum layer has no params; dense(1->16) weights 0..16, biases 16..32,
        // dense(16->1) weights 32..48, bias 48.
        assert!(net.params()[16..32].iter().all(|&b| b == 0.0));
        assert_eq!(net.params()[48], 0.0);
        let limit = (6.0f64 / 17.0).sqrt();
        assert!(net.params()[..16].iter().all(|w| w.abs() <= limit));
        assert!(net.params()[..16].iter().any(|&w| w != 0.0));
    }

    #[test]
    fn sum_net_zero_image() {
        let shape = Shape::new(2, 2, 1);
        let mut net = Network::build(Family::SumNet.into(), shape, 0).unwrap();
        for i in [1, 3] {
            let range = net.layer_params(i);
            let wcount = net.layers()[i].weight_count();
            net.params_mut()[range.start..range.start + wcount].fill(1.0);
        }
        let acts = net.forward(&Image::zeros(shape)).unwrap();
        assert!(acts.layer(1).iter().all(|&a| a == 0.0));
        assert_eq!(acts.output(), 0.0);
    }

    #[test]
    fn sum_net_first_layer_gradient_is_pixel_sum_times_downstream() {
        let shape = Shape::new(2, 2, 1);
        let net = Network::build(Family::SumNet.into(), shape, 3).unwrap();
        let x = Image::filled(shape, 1.0);
        let grad = net.grad_params(&x).unwrap();
        let p = net.params();
        // Hand chain rule: h = relu(w1 * s + b1), f = w2 . h + b2 with s = 4.
        for u in 0..16 {
            let pre = p[u] * 4.0 + p[16 + u];
            let downstream = if pre > 0.0 { p[32 + u] } else { 0.0 };
            assert_eq!(grad[u], 4.0 * downstream);
            assert_eq!(grad[16 + u], downstream);
            assert_eq!(grad[32 + u], pre.max(0.0));
        }
        assert_eq!(grad[48], 1.0);
    }

    #[test]
    fn build_is_deterministic_in_seed() {
        let shape = Shape::new(28, 28, 1);
        let a = Network::build(Family::FullyConnected.into(), shape, 11).unwrap();
        let b = Network::build(Family::FullyConnected.into(), shape, 11).unwrap();
        let c = Network::build(Family::FullyConnected.into(), shape, 12).unwrap();
        assert_eq!(a.param_count(), 100_675);
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn shape_mismatch_is_input_error() {
        let net = Network::build(Family::SumNet.into(), Shape::new(4, 4, 1), 0).unwrap();
        let err = net.forward(&Image::zeros(Shape::new(4, 5, 1))).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        assert!(matches!(net.grad_params(&Image::zeros(Shape::new(5, 4, 1))), Err(Error::Input(_))));
    }

    #[test]
    fn predict_class_thresholds_at_zero() {
        let mut net = Network::from_layers(Shape::new(1, 1, 1), vec![dense(1, 1, false)], Some(vec![1.0])).unwrap();
        let one = Image::filled(Shape::new(1, 1, 1), 1.0);
        for (w, class) in [(5.0, 1), (-0.1, 0), (0.0, 0)] {
            net.params_mut()[0] = w;
            assert_eq!(net.predict_class(&one).unwrap(), class);
        }
    }

    #[test]
    fn max_pool_ties_route_to_first_element() {
        let shape = Shape::new(2, 2, 1);
        let layers = vec![
            LayerSpec::MaxPool {
                input: shape,
                output: Shape::new(1, 1, 1),
            },
            LayerSpec::Flatten { len: 1 },
            dense(1, 1, false),
        ];
        let net = Network::from_layers(shape, layers, Some(vec![2.0])).unwrap();
        let x = Image::filled(shape, 0.5);
        let acts = net.forward(&x).unwrap();
        assert_eq!(acts.output(), 1.0);
        // Gradient wrt the dense weight equals the pooled value.
        assert_eq!(net.grad_params(&x).unwrap(), vec![0.5]);
    }
}
