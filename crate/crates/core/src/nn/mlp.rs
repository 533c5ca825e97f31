//! Fully connected feed-forward network over a flat parameter vector.
//!
//! Weights are stored row-major with shape `(out, in)`, followed by the bias
//! of the same layer. A network is the pair `(MlpSpec, ParamVector)`; the
//! spec owns no parameters so that live and target copies share one spec.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Output nonlinearity. `Bounded` is a tanh affinely mapped onto `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutputActivation {
    Identity,
    Bounded { lo: f64, hi: f64 },
}

impl OutputActivation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::Bounded { lo, hi } => {
                let t = z.tanh();
                (lo + (hi - lo) * 0.5 * (t + 1.0)).clamp(lo, hi)
            }
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Bounded { lo, hi } => {
                let t = z.tanh();
                0.5 * (hi - lo) * (1.0 - t * t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width first, output width last.
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(
        layer_widths: Vec<usize>,
        hidden_activation: Activation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        let spec = Self {
            layer_widths,
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least an input and an output layer, got {} widths",
                self.layer_widths.len()
            )));
        }
        if let Some(pos) = self.layer_widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidSpec(format!("layer {pos} has zero width")));
        }
        if let OutputActivation::Bounded { lo, hi } = self.output_activation {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidSpec(format!(
                    "bounded output interval [{lo}, {hi}] is empty or non-finite"
                )));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }

    pub fn layout(&self) -> ParamLayout {
        let mut layers = Vec::with_capacity(self.layer_widths.len() - 1);
        let mut offset = 0;
        for pair in self.layer_widths.windows(2) {
            let (cols, rows) = (pair[0], pair[1]);
            let weights = offset..offset + rows * cols;
            let bias = weights.end..weights.end + rows;
            offset = bias.end;
            layers.push(LayerSlots {
                rows,
                cols,
                weights,
                bias,
            });
        }
        ParamLayout {
            layers,
            len: offset,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths.windows(2).map(|p| p[1] * (p[0] + 1)).sum()
    }
}

/// Index ranges of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSlots {
    pub rows: usize,
    pub cols: usize,
    pub weights: Range<usize>,
    pub bias: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub layers: Vec<LayerSlots>,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Uniform in `±1/sqrt(fan_in)` for every weight and bias of a layer.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Self {
        let layout = spec.layout();
        let mut values = vec![0.0; layout.len];
        for layer in &layout.layers {
            let bound = 1.0 / (layer.cols as f64).sqrt();
            for v in &mut values[layer.weights.start..layer.bias.end] {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        Self { values }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Per-layer values recorded by a forward pass, consumed by backward.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`.
    pub activations: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has an input")
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParamVector,
    pub input: Vec<f64>,
}

/// A spec with its layout precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layout: ParamLayout,
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        Ok(Self { spec, layout })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.len
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.layout.len {
            return Err(Error::Dimension {
                layer: "parameter vector".into(),
                expected: self.layout.len,
                actual: params.len(),
            });
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.spec.input_width() {
            return Err(Error::Dimension {
                layer: "layer 0 (input)".into(),
                expected: self.spec.input_width(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.check_input(input)?;
        let mut current = input.to_vec();
        let mut next = Vec::new();
        let last = self.layout.layers.len() - 1;
        for (l, slots) in self.layout.layers.iter().enumerate() {
            affine(&params.values, slots, &current, &mut next);
            if l == last {
                let out = self.spec.output_activation;
                next.iter_mut().for_each(|z| *z = out.apply(*z));
            } else {
                let act = self.spec.hidden_activation;
                next.iter_mut().for_each(|z| *z = act.apply(*z));
            }
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    /// Forward pass of a single-output network.
    pub fn forward_scalar(&self, params: &ParamVector, input: &[f64]) -> Result<f64> {
        let out = self.forward(params, input)?;
        if out.len() != 1 {
            return Err(Error::Dimension {
                layer: format!("layer {} (output)", self.layout.layers.len()),
                expected: 1,
                actual: out.len(),
            });
        }
        Ok(out[0])
    }

    /// Scalar outputs for inputs that share `input[..n-1]` and take each value
    /// of `last` as their final component.
    pub fn forward_sweep_last_input(
        &self,
        params: &ParamVector,
        input: &[f64],
        last: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.check_input(input)?;
        if self.spec.output_width() != 1 {
            return Err(Error::Dimension {
                layer: format!("layer {} (output)", self.layout.layers.len()),
                expected: 1,
                actual: self.spec.output_width(),
            });
        }
        let n_in = input.len();
        let first = &self.layout.layers[0];
        let mut shared = input.to_vec();
        shared[n_in - 1] = 0.0;
        let mut z0 = Vec::new();
        affine(&params.values, first, &shared, &mut z0);
        let w = &params.values[first.weights.clone()];
        let column: Vec<f64> = (0..first.rows).map(|r| w[r * first.cols + n_in - 1]).collect();

        // Columns of `h` are the sweep points; rows are units.
        let n = last.len();
        let hidden = self.spec.hidden_activation;
        let mut h: Vec<f64> = Vec::with_capacity(first.rows * n);
        for (z, c) in z0.iter().zip(&column) {
            h.extend(last.iter().map(|x| z + c * x));
        }
        let last_layer = self.layout.layers.len() - 1;
        for (l, slots) in self.layout.layers.iter().enumerate() {
            if l > 0 {
                let w = &params.values[slots.weights.clone()];
                let mut z = vec![0.0; slots.rows * n];
                // SAFETY: all three buffers are dense row-major matrices
                // of the dimensions passed alongside them.
                unsafe {
                    matrixmultiply::dgemm(
                        slots.rows,
                        slots.cols,
                        n,
                        1.0,
                        w.as_ptr(),
                        slots.cols as isize,
                        1,
                        h.as_ptr(),
                        n as isize,
                        1,
                        0.0,
                        z.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
                for (row, &bias) in z.chunks_exact_mut(n).zip(&params.values[slots.bias.clone()]) {
                    row.iter_mut().for_each(|v| *v += bias);
                }
                h = z;
            }
            if l == last_layer {
                let act = self.spec.output_activation;
                h.iter_mut().for_each(|v| *v = act.apply(*v));
            } else {
                h.iter_mut().for_each(|v| *v = hidden.apply(*v));
            }
        }
        Ok(h)
    }

    pub fn forward_trace(&self, params: &ParamVector, input: &[f64]) -> Result<ForwardTrace> {
        self.check_params(params)?;
        self.check_input(input)?;
        let n = self.layout.layers.len();
        let mut activations = Vec::with_capacity(n + 1);
        let mut pre_activations = Vec::with_capacity(n);
        activations.push(input.to_vec());
        for (l, slots) in self.layout.layers.iter().enumerate() {
            let mut z = Vec::new();
            affine(&params.values, slots, &activations[l], &mut z);
            let y: Vec<f64> = if l == n - 1 {
                z.iter()
                    .map(|&v| self.spec.output_activation.apply(v))
                    .collect()
            } else {
                z.iter()
                    .map(|&v| self.spec.hidden_activation.apply(v))
                    .collect()
            };
            pre_activations.push(z);
            activations.push(y);
        }
        Ok(ForwardTrace {
            activations,
            pre_activations,
        })
    }

    /// Gradients of `output_grad · output` with respect to the parameters and
    /// the input.
    pub fn backward(
        &self,
        params: &ParamVector,
        input: &[f64],
        output_grad: &[f64],
    ) -> Result<Gradients> {
        let trace = self.forward_trace(params, input)?;
        self.backward_from_trace(params, &trace, output_grad)
    }

    pub fn backward_from_trace(
        &self,
        params: &ParamVector,
        trace: &ForwardTrace,
        output_grad: &[f64],
    ) -> Result<Gradients> {
        let mut grad = ParamVector::zeros(self.layout.len);
        let input = self.backward_accumulate(params, trace, output_grad, &mut grad)?;
        Ok(Gradients {
            params: grad,
            input,
        })
    }

    /// Adds the parameter gradient into `grad`; returns the input gradient.
    pub fn backward_accumulate(
        &self,
        params: &ParamVector,
        trace: &ForwardTrace,
        output_grad: &[f64],
        grad: &mut ParamVector,
    ) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.check_params(grad)?;
        let n = self.layout.layers.len();
        if output_grad.len() != self.spec.output_width() {
            return Err(Error::Dimension {
                layer: format!("layer {n} (output gradient)"),
                expected: self.spec.output_width(),
                actual: output_grad.len(),
            });
        }
        let out_act = self.spec.output_activation;
        let mut delta: Vec<f64> = output_grad
            .iter()
            .zip(&trace.pre_activations[n - 1])
            .map(|(g, &z)| g * out_act.derivative(z))
            .collect();

        for l in (0..n).rev() {
            let slots = &self.layout.layers[l];
            let a_prev = &trace.activations[l];
            let w = &params.values[slots.weights.clone()];
            {
                let gw = &mut grad.values[slots.weights.clone()];
                for (r, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut gw[r * slots.cols..(r + 1) * slots.cols];
                    for (g, &a) in row.iter_mut().zip(a_prev) {
                        *g += d * a;
                    }
                }
            }
            for (g, d) in grad.values[slots.bias.clone()].iter_mut().zip(&delta) {
                *g += d;
            }

            let mut prev = vec![0.0; slots.cols];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &w[r * slots.cols..(r + 1) * slots.cols];
                for (p, &wv) in prev.iter_mut().zip(row) {
                    *p += d * wv;
                }
            }
            if l > 0 {
                let act = self.spec.hidden_activation;
                for ((p, &z), &y) in prev
                    .iter_mut()
                    .zip(&trace.pre_activations[l - 1])
                    .zip(&trace.activations[l])
                {
                    *p *= act.derivative(z, y);
                }
            }
            delta = prev;
        }
        Ok(delta)
    }
}

#[inline]
fn affine(values: &[f64], slots: &LayerSlots, input: &[f64], out: &mut Vec<f64>) {
    let w = &values[slots.weights.clone()];
    let b = &values[slots.bias.clone()];
    out.clear();
    out.extend(
        w.chunks_exact(slots.cols)
            .zip(b)
            .map(|(row, &bias)| bias + dot(row, input)),
    );
}

/// Four independent partial sums so the loop pipelines and vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn forward(spec: &MlpSpec, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
    Mlp::new(spec.clone())?.forward(params, input)
}

pub fn backward(
    spec: &MlpSpec,
    params: &ParamVector,
    input: &[f64],
    output_grad: &[f64],
) -> Result<(ParamVector, Vec<f64>)> {
    let g = Mlp::new(spec.clone())?.backward(params, input, output_grad)?;
    Ok((g.params, g.input))
}
