use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{Observation, NUM_ACTIONS, OBS_LEN};

pub const CHECKPOINT_FORMAT: &str = "selfil-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Observation bytes scaled to `[0, 1]` per channel (object / 10,
/// color / 5, state / 2).
pub fn features(obs: &Observation) -> Vec<f64> {
    const SCALE: [f64; 3] = [1.0 / 10.0, 1.0 / 5.0, 1.0 / 2.0];
    obs.0
        .iter()
        .enumerate()
        .map(|(i, &b)| b as f64 * SCALE[i % 3])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub actions: usize,
}

impl Dims {
    /// 147 -> 64 -> 64 -> (7 logits, 1 value).
    pub const GRID: Dims = Dims {
        input: OBS_LEN,
        hidden: 64,
        actions: NUM_ACTIONS,
    };

    fn layout(&self) -> Layout {
        let (i, h, a) = (self.input, self.hidden, self.actions);
        let w1 = 0;
        let b1 = w1 + h * i;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let wp = b2 + h;
        let bp = wp + a * h;
        let wv = bp + a;
        let bv = wv + h;
        Layout {
            w1,
            b1,
            w2,
            b2,
            wp,
            bp,
            wv,
            bv,
            len: bv + 1,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().len
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    wp: usize,
    bp: usize,
    wv: usize,
    bv: usize,
    len: usize,
}

/// All weights in one flat vector: `W1 (h x in), b1, W2 (h x h), b2,
/// Wpi (a x h), bpi, Wv (h), bv`, matrices row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    dims: Dims,
    data: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub logits: Vec<f64>,
    pub value: f64,
}

impl PolicyParams {
    pub fn zeros(dims: Dims) -> Self {
        PolicyParams {
            dims,
            data: vec![0.0; dims.num_params()],
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` weights, zero biases; the actor head is
    /// scaled by 0.01 so the initial policy is close to uniform.
    pub fn init<R: Rng>(dims: Dims, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims);
        let l = dims.layout();
        let (i, h, a) = (dims.input, dims.hidden, dims.actions);
        let mut fill = |data: &mut [f64], fan_in: usize, gain: f64| {
            let bound = gain / (fan_in as f64).sqrt();
            for w in data {
                *w = rng.gen_range(-bound..bound);
            }
        };
        fill(&mut p.data[l.w1..l.w1 + h * i], i, 1.0);
        fill(&mut p.data[l.w2..l.w2 + h * h], h, 1.0);
        fill(&mut p.data[l.wp..l.wp + a * h], h, 0.01);
        fill(&mut p.data[l.wv..l.wv + h], h, 1.0);
        p
    }

    pub fn from_flat(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                dims.num_params(),
                data.len()
            )));
        }
        Ok(PolicyParams { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        let Dims {
            input: n_in,
            hidden: h,
            actions: a,
        } = self.dims;
        debug_assert_eq!(x.len(), n_in);
        let l = self.dims.layout();
        let d = &self.data;
        let mut h1 = vec![0.0; h];
        for (j, out) in h1.iter_mut().enumerate() {
            let row = &d[l.w1 + j * n_in..l.w1 + (j + 1) * n_in];
            *out = (d[l.b1 + j] + dot(row, x)).tanh();
        }
        let mut h2 = vec![0.0; h];
        for (j, out) in h2.iter_mut().enumerate() {
            let row = &d[l.w2 + j * h..l.w2 + (j + 1) * h];
            *out = (d[l.b2 + j] + dot(row, &h1)).tanh();
        }
        let mut logits = vec![0.0; a];
        for (k, out) in logits.iter_mut().enumerate() {
            let row = &d[l.wp + k * h..l.wp + (k + 1) * h];
            *out = d[l.bp + k] + dot(row, &h2);
        }
        let value = d[l.bv] + dot(&d[l.wv..l.wv + h], &h2);
        ForwardCache {
            h1,
            h2,
            logits,
            value,
        }
    }

    /// `(logits, value)` for one input vector; non-finite output is an error.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        if x.len() != self.dims.input {
            return Err(Error::Shape(format!(
                "input of length {} for a {}-input network",
                x.len(),
                self.dims.input
            )));
        }
        let c = self.forward_cached(x);
        if !c.value.is_finite() || c.logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite(
                "network output (diverged parameters?)".into(),
            ));
        }
        Ok((c.logits, c.value))
    }

    pub fn forward_obs(&self, obs: &Observation) -> Result<(Vec<f64>, f64)> {
        self.forward(&features(obs))
    }

    /// Accumulates into `grad` the gradient of a scalar loss whose partial
    /// derivatives w.r.t. this sample's logits and value are given.
    pub fn backward(
        &self,
        x: &[f64],
        cache: &ForwardCache,
        d_logits: &[f64],
        d_value: f64,
        grad: &mut [f64],
    ) {
        let Dims {
            input: n_in,
            hidden: h,
            actions: a,
        } = self.dims;
        let l = self.dims.layout();
        let d = &self.data;

        let mut d_h2 = vec![0.0; h];
        for k in 0..a {
            let g = d_logits[k];
            if g == 0.0 {
                continue;
            }
            grad[l.bp + k] += g;
            let w = &d[l.wp + k * h..l.wp + (k + 1) * h];
            let gw = &mut grad[l.wp + k * h..l.wp + (k + 1) * h];
            for j in 0..h {
                gw[j] += g * cache.h2[j];
                d_h2[j] += g * w[j];
            }
        }
        if d_value != 0.0 {
            grad[l.bv] += d_value;
            for j in 0..h {
                grad[l.wv + j] += d_value * cache.h2[j];
                d_h2[j] += d_value * d[l.wv + j];
            }
        }

        let d_z2: Vec<f64> = (0..h)
            .map(|j| d_h2[j] * (1.0 - cache.h2[j] * cache.h2[j]))
            .collect();
        let mut d_h1 = vec![0.0; h];
        for j in 0..h {
            let g = d_z2[j];
            grad[l.b2 + j] += g;
            let w = &d[l.w2 + j * h..l.w2 + (j + 1) * h];
            let gw = &mut grad[l.w2 + j * h..l.w2 + (j + 1) * h];
            for i in 0..h {
                gw[i] += g * cache.h1[i];
                d_h1[i] += g * w[i];
            }
        }

        for j in 0..h {
            let g = d_h1[j] * (1.0 - cache.h1[j] * cache.h1[j]);
            grad[l.b1 + j] += g;
            let gw = &mut grad[l.w1 + j * n_in..l.w1 + (j + 1) * n_in];
            for i in 0..n_in {
                gw[i] += g * x[i];
            }
        }
    }

    /// Checkpoint as a JSON object holding named layer tensors.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let l = self.dims.layout();
        let Dims {
            input: i,
            hidden: h,
            actions: a,
        } = self.dims;
        let layer = |name: &str, start: usize, shape: Vec<usize>| {
            let n: usize = shape.iter().product();
            LayerTensor {
                name: name.to_string(),
                shape,
                data: self.data[start..start + n].to_vec(),
            }
        };
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            dims: self.dims,
            layers: vec![
                layer("trunk.0.weight", l.w1, vec![h, i]),
                layer("trunk.0.bias", l.b1, vec![h]),
                layer("trunk.1.weight", l.w2, vec![h, h]),
                layer("trunk.1.bias", l.b2, vec![h]),
                layer("actor.weight", l.wp, vec![a, h]),
                layer("actor.bias", l.bp, vec![a]),
                layer("critic.weight", l.wv, vec![1, h]),
                layer("critic.bias", l.bv, vec![1]),
            ],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Shape(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let reference = PolicyParams::zeros(ck.dims).to_checkpoint();
        if reference.layers.len() != ck.layers.len() {
            return Err(Error::Shape("layer count mismatch".into()));
        }
        let mut data = Vec::with_capacity(ck.dims.num_params());
        for (want, got) in reference.layers.iter().zip(&ck.layers) {
            if want.name != got.name || want.shape != got.shape || got.data.len() != want.data.len()
            {
                return Err(Error::Shape(format!(
                    "layer {} does not match its shape",
                    got.name
                )));
            }
            data.extend_from_slice(&got.data);
        }
        PolicyParams::from_flat(ck.dims, data)
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_checkpoint(&ck)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dims: Dims,
    pub layers: Vec<LayerTensor>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
