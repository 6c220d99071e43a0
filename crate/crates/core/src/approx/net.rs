//! Flat-parameter feed-forward network with exact manual backprop.
//!
//! Parameter layout per linear layer: weights (row-major, fan_out × fan_in)
//! followed by biases. When the first hidden layer is layer-normalized, its
//! gain and shift vectors follow that layer's biases. The output layer is
//! always linear.

use rand::Rng;

use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    fn deriv(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub activation: Activation,
    pub layer_norm_first: bool,
    pub layer_norm_tanh: bool,
}

/// One linear layer's slice offsets into the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct LayerSeg {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

impl NetSpec {
    pub fn new(input: usize, hidden: Vec<usize>, output: usize, activation: Activation) -> Self {
        Self {
            input,
            hidden,
            output,
            activation,
            layer_norm_first: false,
            layer_norm_tanh: false,
        }
    }

    pub fn with_layer_norm(mut self, layer_norm_first: bool, layer_norm_tanh: bool) -> Self {
        self.layer_norm_first = layer_norm_first;
        self.layer_norm_tanh = layer_norm_tanh;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::InvalidParameter("net widths must be positive".into()));
        }
        if self.layer_norm_first && self.hidden.is_empty() {
            return Err(Error::InvalidParameter(
                "layer_norm_first requires at least one hidden layer".into(),
            ));
        }
        if self.layer_norm_tanh && !self.layer_norm_first {
            return Err(Error::InvalidParameter(
                "layer_norm_tanh requires layer_norm_first".into(),
            ));
        }
        Ok(())
    }

    /// (fan_in, fan_out) of every linear layer, input to output.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.input;
        for &h in &self.hidden {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims.push((fan_in, self.output));
        dims
    }

    fn segments(&self) -> (Vec<LayerSeg>, Option<(usize, usize, usize)>) {
        let mut segs = Vec::new();
        let mut ln = None;
        let mut off = 0;
        for (l, (fan_in, fan_out)) in self.layer_dims().into_iter().enumerate() {
            let w = off;
            let b = w + fan_in * fan_out;
            off = b + fan_out;
            segs.push(LayerSeg { w, b, fan_in, fan_out });
            if l == 0 && self.layer_norm_first {
                ln = Some((off, off + fan_out, fan_out));
                off += 2 * fan_out;
            }
        }
        (segs, ln)
    }

    pub fn param_count(&self) -> usize {
        // Layer-norm params sit between layer 0 and layer 1 in the layout, so
        // the last layer's bias end is always the total.
        let (segs, _) = self.segments();
        let last = segs.last().unwrap();
        last.b + last.fan_out
    }

    /// Offset range of the output layer's bias. Used to seed policy heads
    /// with a chosen initial scale.
    pub fn output_bias_range(&self) -> std::ops::Range<usize> {
        let (segs, _) = self.segments();
        let last = segs.last().unwrap();
        last.b..last.b + last.fan_out
    }
}

/// Everything the matching [`backward`] pass needs from a forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    /// Pre-activation of each linear layer.
    zs: Vec<Vec<f64>>,
    /// Post-activation output of each layer; the last entry is the net output.
    acts: Vec<Vec<f64>>,
    ln: Option<LnCache>,
}

#[derive(Debug, Clone)]
struct LnCache {
    inv_std: f64,
    xhat: Vec<f64>,
    /// Layer-norm output (gain ⊙ xhat + shift), the activation input.
    u: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

fn linear(params: &[f64], seg: LayerSeg, input: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(seg.fan_out);
    for o in 0..seg.fan_out {
        let row = &params[seg.w + o * seg.fan_in..seg.w + (o + 1) * seg.fan_in];
        let mut acc = params[seg.b + o];
        for (w, x) in row.iter().zip(input) {
            acc += w * x;
        }
        out.push(acc);
    }
    out
}

/// Deterministic forward pass returning the output and a cache sufficient for
/// exact backprop.
pub fn forward(spec: &NetSpec, params: &[f64], input: &[f64]) -> Result<ForwardCache> {
    if input.len() != spec.input {
        return Err(Error::DimensionMismatch { expected: spec.input, got: input.len() });
    }
    if params.len() != spec.param_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.param_count(),
            got: params.len(),
        });
    }
    let (segs, ln_seg) = spec.segments();
    let n_layers = segs.len();
    let mut zs = Vec::with_capacity(n_layers);
    let mut acts = Vec::with_capacity(n_layers);
    let mut ln_cache = None;

    let mut cur = input.to_vec();
    for (l, seg) in segs.iter().enumerate() {
        let z = linear(params, *seg, &cur);
        let is_output = l == n_layers - 1;
        let h = if is_output {
            z.clone()
        } else if l == 0 && spec.layer_norm_first {
            let (gain_off, shift_off, width) = ln_seg.unwrap();
            let mean = z.iter().sum::<f64>() / width as f64;
            let var = z.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
            let inv_std = 1.0 / (var + LN_EPS).sqrt();
            let xhat: Vec<f64> = z.iter().map(|&v| (v - mean) * inv_std).collect();
            let u: Vec<f64> = xhat
                .iter()
                .enumerate()
                .map(|(i, &xh)| params[gain_off + i] * xh + params[shift_off + i])
                .collect();
            let act = if spec.layer_norm_tanh { Activation::Tanh } else { spec.activation };
            let h: Vec<f64> = u.iter().map(|&v| act.apply(v)).collect();
            ln_cache = Some(LnCache { inv_std, xhat, u });
            h
        } else {
            z.iter().map(|&v| spec.activation.apply(v)).collect()
        };
        zs.push(z);
        acts.push(h.clone());
        cur = h;
    }

    Ok(ForwardCache { input: input.to_vec(), zs, acts, ln: ln_cache })
}

/// Exact gradient of `⟨output_grad, forward(input)⟩` with respect to the
/// parameters (accumulated into `grad`) and the input (returned).
pub fn backward(
    spec: &NetSpec,
    params: &[f64],
    cache: &ForwardCache,
    output_grad: &[f64],
    grad: &mut [f64],
) -> Result<Vec<f64>> {
    if output_grad.len() != spec.output {
        return Err(Error::DimensionMismatch { expected: spec.output, got: output_grad.len() });
    }
    if grad.len() != params.len() || params.len() != spec.param_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.param_count(),
            got: grad.len(),
        });
    }
    let (segs, ln_seg) = spec.segments();
    let n_layers = segs.len();

    // Gradient with respect to the current layer's pre-activation.
    let mut g_z = output_grad.to_vec();
    for l in (0..n_layers).rev() {
        let seg = segs[l];
        let layer_input: &[f64] = if l == 0 { &cache.input } else { &cache.acts[l - 1] };
        for o in 0..seg.fan_out {
            let gz = g_z[o];
            grad[seg.b + o] += gz;
            let row = &mut grad[seg.w + o * seg.fan_in..seg.w + (o + 1) * seg.fan_in];
            for (g, x) in row.iter_mut().zip(layer_input) {
                *g += gz * x;
            }
        }
        // Propagate to the previous layer's output.
        let mut g_h = vec![0.0; seg.fan_in];
        for o in 0..seg.fan_out {
            let gz = g_z[o];
            let row = &params[seg.w + o * seg.fan_in..seg.w + (o + 1) * seg.fan_in];
            for (gh, w) in g_h.iter_mut().zip(row) {
                *gh += gz * w;
            }
        }
        if l == 0 {
            return Ok(g_h);
        }
        let prev = l - 1;
        if prev == 0 && spec.layer_norm_first {
            let ln = cache.ln.as_ref().expect("layer-norm cache present");
            let (gain_off, shift_off, width) = ln_seg.unwrap();
            let act = if spec.layer_norm_tanh { Activation::Tanh } else { spec.activation };
            let g_u: Vec<f64> = g_h
                .iter()
                .zip(&ln.u)
                .map(|(&gh, &u)| gh * act.deriv(u))
                .collect();
            let mut g_xhat = vec![0.0; width];
            for i in 0..width {
                grad[gain_off + i] += g_u[i] * ln.xhat[i];
                grad[shift_off + i] += g_u[i];
                g_xhat[i] = g_u[i] * params[gain_off + i];
            }
            let n = width as f64;
            let mean_gx = g_xhat.iter().sum::<f64>() / n;
            let mean_gx_xhat =
                g_xhat.iter().zip(&ln.xhat).map(|(&g, &x)| g * x).sum::<f64>() / n;
            g_z = (0..width)
                .map(|i| ln.inv_std * (g_xhat[i] - mean_gx - ln.xhat[i] * mean_gx_xhat))
                .collect();
        } else {
            g_z = g_h
                .iter()
                .zip(&cache.zs[prev])
                .map(|(&gh, &z)| gh * spec.activation.deriv(z))
                .collect();
        }
    }
    unreachable!("loop returns at layer 0");
}

/// Glorot-uniform weights, zero biases, unit layer-norm gains.
pub fn init_params<R: Rng>(spec: &NetSpec, rng: &mut R) -> Vec<f64> {
    let (segs, ln_seg) = spec.segments();
    let mut params = vec![0.0; spec.param_count()];
    for seg in &segs {
        let limit = (6.0 / (seg.fan_in + seg.fan_out) as f64).sqrt();
        for w in &mut params[seg.w..seg.w + seg.fan_in * seg.fan_out] {
            *w = rng.random_range(-limit..limit);
        }
    }
    if let Some((gain_off, _, width)) = ln_seg {
        for g in &mut params[gain_off..gain_off + width] {
            *g = 1.0;
        }
    }
    params
}
