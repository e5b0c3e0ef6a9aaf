//! Small fully connected networks with exact backpropagation.
//!
//! Parameters are flattened layer by layer: the weight matrix of a layer
//! (row-major, `out x in`) followed by its bias vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Softplus,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Softplus => softplus(z),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative in terms of the pre-activation `z` and output `a`.
    /// ReLU uses the subgradient 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(z),
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Softplus => "softplus",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "softplus" => Some(Activation::Softplus),
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: Vec<f64>,
}

/// Activations recorded during a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Cache {
    /// `pre[l]` is the pre-activation of layer `l`.
    pre: Vec<Vec<f64>>,
    /// `post[0]` is the input; `post[l + 1]` is the output of layer `l`.
    post: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn input(&self) -> &[f64] {
        &self.post[0]
    }
}

impl Mlp {
    pub fn param_count_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: Vec<usize>, hidden: Activation, output: Activation) -> Self {
        let n = Self::param_count_for(&sizes);
        Self {
            sizes,
            hidden,
            output,
            params: vec![0.0; n],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(
        sizes: Vec<usize>,
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(sizes, hidden, output);
        let mut offset = 0;
        for l in 0..net.layers() {
            let (n_in, n_out) = (net.sizes[l], net.sizes[l + 1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            for w in &mut net.params[offset..offset + n_in * n_out] {
                *w = rng.random_range(-limit..limit);
            }
            offset += n_in * n_out + n_out;
        }
        net
    }

    pub fn from_params(
        sizes: Vec<usize>,
        hidden: Activation,
        output: Activation,
        params: Vec<f64>,
    ) -> Option<Self> {
        if sizes.len() < 2 || params.len() != Self::param_count_for(&sizes) {
            return None;
        }
        Some(Self {
            sizes,
            hidden,
            output,
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("network has layers")
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut offset = 0;
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let act = self.activation(l);
            cur = (0..n_out)
                .map(|o| {
                    let z = b[o] + dot(&w[o * n_in..(o + 1) * n_in], &cur);
                    act.apply(z)
                })
                .collect();
            offset += n_in * n_out + n_out;
        }
        cur
    }

    pub fn forward_cached(&self, x: &[f64], cache: &mut Cache) {
        cache.pre.resize(self.layers(), Vec::new());
        cache.post.resize(self.layers() + 1, Vec::new());
        cache.post[0].clear();
        cache.post[0].extend_from_slice(x);
        let mut offset = 0;
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let act = self.activation(l);
            let (before, after) = cache.post.split_at_mut(l + 1);
            let input = &before[l];
            let pre = &mut cache.pre[l];
            let post = &mut after[0];
            pre.clear();
            post.clear();
            for o in 0..n_out {
                let z = b[o] + dot(&w[o * n_in..(o + 1) * n_in], input);
                pre.push(z);
                post.push(act.apply(z));
            }
            offset += n_in * n_out + n_out;
        }
    }

    /// Backpropagates `d_pre_out`, the gradient with respect to the output
    /// layer's pre-activation. Parameter gradients are accumulated into
    /// `param_grad` (if given); the input gradient is returned.
    pub fn backward_pre(
        &self,
        cache: &Cache,
        d_pre_out: &[f64],
        mut param_grad: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let mut delta = d_pre_out.to_vec();
        let mut offset_end = self.params.len();
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let offset = offset_end - (n_in * n_out + n_out);
            let w = &self.params[offset..offset + n_in * n_out];
            let input = &cache.post[l];
            if let Some(g) = param_grad.as_deref_mut() {
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        let row = &mut g[offset + o * n_in..offset + (o + 1) * n_in];
                        for (gi, xi) in row.iter_mut().zip(input) {
                            *gi += d * xi;
                        }
                    }
                    g[offset + n_in * n_out + o] += d;
                }
            }
            let mut d_in = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for (di, wi) in d_in.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *di += d * wi;
                    }
                }
            }
            if l > 0 {
                let act = self.hidden;
                for (i, di) in d_in.iter_mut().enumerate() {
                    *di *= act.derivative(cache.pre[l - 1][i], cache.post[l][i]);
                }
            }
            delta = d_in;
            offset_end = offset;
        }
        delta
    }

    /// Backpropagates a gradient with respect to the network output.
    pub fn backward(
        &self,
        cache: &Cache,
        d_out: &[f64],
        param_grad: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let last = self.layers() - 1;
        let d_pre: Vec<f64> = d_out
            .iter()
            .enumerate()
            .map(|(o, d)| d * self.output.derivative(cache.pre[last][o], cache.post[last + 1][o]))
            .collect();
        self.backward_pre(cache, &d_pre, param_grad)
    }

    /// Jacobian of the outputs with respect to the inputs, row-major
    /// `output_dim x input_dim`.
    pub fn input_jacobian(&self, x: &[f64]) -> Vec<f64> {
        let mut cache = Cache::default();
        self.forward_cached(x, &mut cache);
        self.input_jacobian_cached(&cache)
    }

    pub fn input_jacobian_cached(&self, cache: &Cache) -> Vec<f64> {
        let (n_out, n_in) = (self.output_dim(), self.input_dim());
        let mut jac = vec![0.0; n_out * n_in];
        let mut unit = vec![0.0; n_out];
        for o in 0..n_out {
            unit.iter_mut().for_each(|u| *u = 0.0);
            unit[o] = 1.0;
            let row = self.backward(cache, &unit, None);
            jac[o * n_in..(o + 1) * n_in].copy_from_slice(&row);
        }
        jac
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
