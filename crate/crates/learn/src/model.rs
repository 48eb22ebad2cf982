//! Parameters and forward/backward passes of the latent encoder and its
//! three heads (domain discriminator, contrastive projection, classifier).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::LearnError;

/// Affine map `y = x W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            w: Array2::zeros((inputs, outputs)),
            b: Array1::zeros(outputs),
        }
    }

    /// Uniform in `±1/sqrt(inputs)` for weights and bias.
    pub fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let k = 1.0 / (inputs as f64).sqrt();
        Linear {
            w: Array2::from_shape_simple_fn((inputs, outputs), || rng.random_range(-k..k)),
            b: Array1::from_shape_simple_fn(outputs, || rng.random_range(-k..k)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.w += &x.t().dot(&dy);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.w *= c;
        self.b *= c;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub latent: usize,
    pub domains: usize,
    pub projection: usize,
    pub classes: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            input: crate::encode::DEFAULT_DIM,
            hidden: 512,
            latent: 256,
            domains: 3,
            projection: 128,
            classes: 2,
        }
    }
}

/// Parameter groups: θ (encoder), ψ (domain head), φ (projection), π (classifier).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Theta,
    Psi,
    Phi,
    Pi,
}

pub const TENSOR_NAMES: [(&str, ParamGroup); 10] = [
    ("encoder.0.weight", ParamGroup::Theta),
    ("encoder.0.bias", ParamGroup::Theta),
    ("encoder.1.weight", ParamGroup::Theta),
    ("encoder.1.bias", ParamGroup::Theta),
    ("domain_head.weight", ParamGroup::Psi),
    ("domain_head.bias", ParamGroup::Psi),
    ("projection.weight", ParamGroup::Phi),
    ("projection.bias", ParamGroup::Phi),
    ("classifier.weight", ParamGroup::Pi),
    ("classifier.bias", ParamGroup::Pi),
];

/// All trainable parameters. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub enc1: Linear,
    pub enc2: Linear,
    pub domain: Linear,
    pub proj: Linear,
    pub cls: Linear,
}

/// Encoder activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    pub z1: Array2<f64>,
    pub a1: Array2<f64>,
    pub h: Array2<f64>,
}

impl ModelState {
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelState {
            enc1: Linear::init(dims.input, dims.hidden, &mut rng),
            enc2: Linear::init(dims.hidden, dims.latent, &mut rng),
            domain: Linear::init(dims.latent, dims.domains, &mut rng),
            proj: Linear::init(dims.latent, dims.projection, &mut rng),
            cls: Linear::init(dims.latent, dims.classes, &mut rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |l: &Linear| Linear::zeros(l.inputs(), l.outputs());
        ModelState {
            enc1: z(&self.enc1),
            enc2: z(&self.enc2),
            domain: z(&self.domain),
            proj: z(&self.proj),
            cls: z(&self.cls),
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input: self.enc1.inputs(),
            hidden: self.enc1.outputs(),
            latent: self.enc2.outputs(),
            domains: self.domain.outputs(),
            projection: self.proj.outputs(),
            classes: self.cls.outputs(),
        }
    }

    fn linears(&self) -> [&Linear; 5] {
        [&self.enc1, &self.enc2, &self.domain, &self.proj, &self.cls]
    }

    fn linears_mut(&mut self) -> [&mut Linear; 5] {
        [&mut self.enc1, &mut self.enc2, &mut self.domain, &mut self.proj, &mut self.cls]
    }

    /// Flat views of every tensor, in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.linears()
            .into_iter()
            .flat_map(|l| {
                [
                    l.w.as_slice().expect("standard layout"),
                    l.b.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.linears_mut()
            .into_iter()
            .flat_map(|l| {
                [
                    l.w.as_slice_mut().expect("standard layout"),
                    l.b.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `h = W2 relu(W1 x + b1) + b2`.
    pub fn encode(&self, x: ArrayView2<f64>) -> EncoderCache {
        let z1 = self.enc1.forward(x);
        let a1 = z1.mapv(|v| v.max(0.0));
        let h = self.enc2.forward(a1.view());
        EncoderCache { z1, a1, h }
    }

    pub fn latents(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.encode(x).h
    }

    /// Backpropagates `dh` through the encoder, accumulating into `grad`.
    pub fn encoder_backward(&self, x: ArrayView2<f64>, cache: &EncoderCache, dh: ArrayView2<f64>, grad: &mut ModelState) {
        let da1 = self.enc2.backward(cache.a1.view(), dh, &mut grad.enc2);
        let mut dz1 = da1;
        dz1.zip_mut_with(&cache.z1, |d, z| {
            if *z <= 0.0 {
                *d = 0.0;
            }
        });
        self.enc1.backward(x, dz1.view(), &mut grad.enc1);
    }

    /// Class probabilities for each row of `x`.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let logits = self.cls.forward(self.latents(x).view());
        softmax_rows(logits.view())
    }

    /// Predicted class and probabilities per row.
    pub fn infer(&self, x: ArrayView2<f64>) -> Vec<(usize, Vec<f64>)> {
        self.predict_proba(x)
            .rows()
            .into_iter()
            .map(|p| (argmax(p.as_slice().expect("row")), p.to_vec()))
            .collect()
    }

    pub fn check_input(&self, x: ArrayView2<f64>) -> Result<(), LearnError> {
        if x.ncols() != self.enc1.inputs() {
            return Err(LearnError::Shape(format!(
                "input has {} columns, model expects {}",
                x.ncols(),
                self.enc1.inputs()
            )));
        }
        Ok(())
    }
}

pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// `log softmax` of one row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Index of the largest value; the first one on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
