//! A small MLP encoder with hand-derived backpropagation, ending in a linear
//! layer followed by L2 normalization, and the two-network arrangement: a
//! trained query encoder plus a key copy that trails it by momentum and never
//! receives gradient.

use crate::error::{Error, Result};
use crate::rng::RngKey;
use crate::vecspace::{l2_normalize, RawVector, UnitVector};

/// One dense layer, `fan_out x fan_in` weights in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Weights of an encoder: dense layers with a rectifier between them and
/// nothing after the last (normalization happens in `forward`).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<Layer>,
}

impl EncoderParams {
    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").fan_out
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].fan_in];
        sizes.extend(self.layers.iter().map(|l| l.fan_out));
        sizes
    }

    fn same_shape(&self, other: &EncoderParams) -> Option<usize> {
        if self.layers.len() != other.layers.len() {
            return Some(self.layers.len().min(other.layers.len()));
        }
        for (i, (a, b)) in self.layers.iter().zip(&other.layers).enumerate() {
            if a.fan_in != b.fan_in || a.fan_out != b.fan_out {
                return Some(i);
            }
        }
        None
    }
}

/// Initialize an encoder: weights uniform and zero-mean, scaled by
/// 1/sqrt(fan_in); biases zero. Deterministic per key.
pub fn init(layer_sizes: &[usize], seed: RngKey) -> Result<EncoderParams> {
    if layer_sizes.len() < 2 {
        return Err(Error::BadShape(format!(
            "need at least 2 layer sizes, got {}",
            layer_sizes.len()
        )));
    }
    if let Some(&bad) = layer_sizes.iter().find(|&&s| s == 0) {
        return Err(Error::BadShape(format!("layer size must be positive, got {bad}")));
    }
    use rand::Rng;
    let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
    for (idx, pair) in layer_sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let mut rng = seed.child(idx as u64).stream();
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = (0..fan_in * fan_out)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
            .collect();
        layers.push(Layer {
            weight,
            bias: vec![0.0; fan_out],
            fan_in,
            fan_out,
        });
    }
    Ok(EncoderParams { layers })
}

/// Intermediates of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    pub input: RawVector,
    /// Pre-activation of each layer.
    pub pre_activations: Vec<Vec<f64>>,
    /// Pre-normalization output of the final layer.
    pub z: Vec<f64>,
    pub z_norm: f64,
    pub output: UnitVector,
}

/// Run the encoder: dense layers with ReLU in between, then L2-normalize the
/// final linear output.
#[allow(clippy::needless_range_loop)]
pub fn forward(params: &EncoderParams, x: &RawVector) -> Result<(UnitVector, ForwardTape)> {
    if x.dim() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            got: x.dim(),
        });
    }
    let n_layers = params.layers.len();
    let mut pre_activations = Vec::with_capacity(n_layers);
    let mut activation: Vec<f64> = x.coords().to_vec();
    for (idx, layer) in params.layers.iter().enumerate() {
        let mut pre = layer.bias.clone();
        for o in 0..layer.fan_out {
            let row = &layer.weight[o * layer.fan_in..(o + 1) * layer.fan_in];
            let mut acc = 0.0;
            for (w, a) in row.iter().zip(&activation) {
                acc += w * a;
            }
            pre[o] += acc;
        }
        pre_activations.push(pre.clone());
        activation = if idx + 1 < n_layers {
            pre.iter().map(|&v| v.max(0.0)).collect()
        } else {
            pre
        };
    }
    let z = activation;
    let z_norm = z.iter().map(|c| c * c).sum::<f64>().sqrt();
    let output = l2_normalize(&RawVector::new(z.clone())?)?;
    Ok((
        output.clone(),
        ForwardTape {
            input: x.clone(),
            pre_activations,
            z,
            z_norm,
            output,
        },
    ))
}

/// Gradients with the same shape as [`EncoderParams`].
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub layers: Vec<Layer>,
}

impl EncoderGrads {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        EncoderGrads {
            layers: params
                .layers
                .iter()
                .map(|l| Layer {
                    weight: vec![0.0; l.weight.len()],
                    bias: vec![0.0; l.bias.len()],
                    fan_in: l.fan_in,
                    fan_out: l.fan_out,
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &EncoderGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.iter_mut().zip(&b.weight) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            for x in &mut l.weight {
                *x *= c;
            }
            for x in &mut l.bias {
                *x *= c;
            }
        }
    }
}

/// Backpropagate `upstream` (the loss gradient at the normalized output)
/// through the tape. Returns parameter gradients and the gradient at the
/// input.
///
/// The normalization Jacobian (I - zz^T)/|z| is applied first; a rectifier
/// gate sits between layers.
#[allow(clippy::needless_range_loop)]
pub fn backward(
    params: &EncoderParams,
    tape: &ForwardTape,
    upstream: &RawVector,
) -> Result<(EncoderGrads, RawVector)> {
    let d = params.output_dim();
    if upstream.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: upstream.dim(),
        });
    }
    // Through the normalization: delta_z = (u - (u . zhat) zhat) / |z|.
    let zhat = tape.output.coords();
    let radial: f64 = upstream.coords().iter().zip(zhat).map(|(u, z)| u * z).sum();
    let mut delta: Vec<f64> = upstream
        .coords()
        .iter()
        .zip(zhat)
        .map(|(u, z)| (u - radial * z) / tape.z_norm)
        .collect();

    let mut grads = EncoderGrads::zeros_like(params);
    let n_layers = params.layers.len();
    for l in (0..n_layers).rev() {
        let layer = &params.layers[l];
        // Input to this layer: x for the first, rectified pre-activation of
        // the previous one otherwise.
        let input: Vec<f64> = if l == 0 {
            tape.input.coords().to_vec()
        } else {
            tape.pre_activations[l - 1]
                .iter()
                .map(|&v| v.max(0.0))
                .collect()
        };
        let g = &mut grads.layers[l];
        for o in 0..layer.fan_out {
            for i in 0..layer.fan_in {
                g.weight[o * layer.fan_in + i] = delta[o] * input[i];
            }
            g.bias[o] = delta[o];
        }
        let mut propagated = vec![0.0; layer.fan_in];
        for o in 0..layer.fan_out {
            let row = &layer.weight[o * layer.fan_in..(o + 1) * layer.fan_in];
            for (p, w) in propagated.iter_mut().zip(row) {
                *p += delta[o] * w;
            }
        }
        if l > 0 {
            for (p, pre) in propagated.iter_mut().zip(&tape.pre_activations[l - 1]) {
                if *pre <= 0.0 {
                    *p = 0.0;
                }
            }
        }
        delta = propagated;
    }
    Ok((grads, RawVector::new(delta)?))
}

/// Apply one SGD step: `w -= lr * g`.
pub fn apply_gradients(params: &mut EncoderParams, grads: &EncoderGrads, lr: f64) {
    for (l, g) in params.layers.iter_mut().zip(&grads.layers) {
        for (w, gw) in l.weight.iter_mut().zip(&g.weight) {
            *w -= lr * gw;
        }
        for (b, gb) in l.bias.iter_mut().zip(&g.bias) {
            *b -= lr * gb;
        }
    }
}

/// The query encoder and its momentum-trailed key copy.
#[derive(Debug, Clone)]
pub struct EncoderPair {
    pub query: EncoderParams,
    pub key: EncoderParams,
    pub momentum: f64,
}

impl EncoderPair {
    /// Start with the key as an exact copy of the query.
    pub fn new(query: EncoderParams, momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::ConfigInvalid(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        let key = query.clone();
        Ok(EncoderPair {
            query,
            key,
            momentum,
        })
    }

    /// Rebuild a pair from checkpointed parameters.
    pub fn from_parts(query: EncoderParams, key: EncoderParams, momentum: f64) -> Result<Self> {
        if let Some(layer) = query.same_shape(&key) {
            return Err(Error::ShapeMismatch(layer));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::ConfigInvalid(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        Ok(EncoderPair {
            query,
            key,
            momentum,
        })
    }

    /// `key <- m*key + (1-m)*query`; the query is untouched. Computed in the
    /// incremental form `key += (1-m)*(query - key)` so equal parameters are
    /// an exact fixed point.
    pub fn momentum_update(&mut self) -> Result<()> {
        if let Some(layer) = self.query.same_shape(&self.key) {
            return Err(Error::ShapeMismatch(layer));
        }
        let step = 1.0 - self.momentum;
        for (kl, ql) in self.key.layers.iter_mut().zip(&self.query.layers) {
            for (kw, qw) in kl.weight.iter_mut().zip(&ql.weight) {
                *kw += step * (qw - *kw);
            }
            for (kb, qb) in kl.bias.iter_mut().zip(&ql.bias) {
                *kb += step * (qb - *kb);
            }
        }
        Ok(())
    }
}
