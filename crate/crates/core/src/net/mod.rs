//! Gated fusion of two feature channels followed by the multi-label
//! feed-forward classifier.
//!
//! Layout (hybrid mode):
//!
//! ```text
//! x1 ─ g1 ⊙ ─┐
//!            + ─ dense 1024 relu ─ dropout ─ 512 relu ─ 256 relu ─ 128 relu ─ 20 sigmoid
//! x2 ─ g2 ⊙ ─┘
//! ```
//!
//! Single-channel modes feed `x1` straight into the first dense layer.

mod checkpoint;
mod gradcheck;
mod scaler;
mod train;

use ndarray::{Array1, Array2, ArrayView2, Axis, NdFloat, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::icd9::GROUP_COUNT;

pub use checkpoint::{Checkpoint, CheckpointError, TensorRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{
    gradient_check, gradient_check_with, relative_error, GradCheckOptions, GradCheckReport, TensorCheck,
};
pub use scaler::{ChannelScaler, Scaler};
pub use train::{predict_scores, train_model, Dataset, EpochRecord, TrainConfig, TrainOutcome};

/// Hidden layer widths after the fusion stage.
pub const HIDDEN_LAYERS: [usize; 4] = [1024, 512, 256, 128];
pub const DEFAULT_DROPOUT: f64 = 0.2;
/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the loss.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{what}: expected width {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("row counts differ: {0} inputs vs {1} targets")]
    RowMismatch(usize, usize),
    #[error("hybrid model needs a second input channel")]
    MissingChannel,
    #[error("single-channel model was given a second input channel")]
    UnexpectedChannel,
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("loss became non-finite at epoch {epoch}, batch {batch} (last finite loss {last_loss})")]
    NonFiniteLoss { epoch: usize, batch: usize, last_loss: f64 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

/// Floating-point element type of the network.
pub trait Scalar: NdFloat + Default {
    const DTYPE: &'static str;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    const BYTES: usize;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Two channels combined as `g1 ⊙ x1 + g2 ⊙ x2`.
    Gated,
    /// One channel, no fusion stage.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_width: usize,
    pub fusion: Fusion,
    pub hidden: Vec<usize>,
    pub outputs: usize,
    /// Dropout rate applied after the first hidden layer while training.
    pub dropout: f64,
}

impl Architecture {
    pub fn hybrid(input_width: usize) -> Self {
        Architecture {
            input_width,
            fusion: Fusion::Gated,
            hidden: HIDDEN_LAYERS.to_vec(),
            outputs: GROUP_COUNT,
            dropout: DEFAULT_DROPOUT,
        }
    }

    pub fn single(input_width: usize) -> Self {
        Architecture {
            fusion: Fusion::Single,
            ..Self::hybrid(input_width)
        }
    }

    /// `(fan_in, fan_out)` of every dense layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_width];
        widths.extend(&self.hidden);
        widths.push(self.outputs);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionGates<F> {
    pub first: Array1<F>,
    pub second: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    /// `fan_in x fan_out`.
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

/// Network parameters. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub arch: Architecture,
    pub gates: Option<FusionGates<F>>,
    pub layers: Vec<Dense<F>>,
}

pub type Gradients<F> = ModelParams<F>;

/// One or two row-aligned input matrices.
#[derive(Debug, Clone, Copy)]
pub struct Inputs<'a, F> {
    pub primary: ArrayView2<'a, F>,
    pub secondary: Option<ArrayView2<'a, F>>,
}

impl<'a, F> Inputs<'a, F> {
    pub fn single(primary: ArrayView2<'a, F>) -> Self {
        Inputs {
            primary,
            secondary: None,
        }
    }

    pub fn pair(primary: ArrayView2<'a, F>, secondary: ArrayView2<'a, F>) -> Self {
        Inputs {
            primary,
            secondary: Some(secondary),
        }
    }

    pub fn rows(&self) -> usize {
        self.primary.nrows()
    }
}

/// Activations kept from a forward pass for backpropagation.
struct Trace<F> {
    fused: Array2<F>,
    pre: Vec<Array2<F>>,
    post: Vec<Array2<F>>,
    mask: Option<Array2<F>>,
    probs: Array2<F>,
}

fn relu<F: Scalar>(z: &Array2<F>) -> Array2<F> {
    z.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// Mean binary cross-entropy over every entry, probabilities clamped.
pub fn bce_loss<F: Scalar>(probs: ArrayView2<F>, targets: ArrayView2<F>) -> F {
    let lo = F::from_f64(PROB_CLAMP);
    let hi = F::one() - lo;
    let n = F::from_f64(probs.len() as f64);
    let mut total = F::zero();
    Zip::from(&probs).and(&targets).for_each(|&p, &y| {
        let p = p.max(lo).min(hi);
        total = total - (y * p.ln() + (F::one() - y) * (F::one() - p).ln());
    });
    total / n
}

impl<F: Scalar> ModelParams<F> {
    /// Gates at 0.5, weights uniform in ±sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(arch, &mut rng)
    }

    pub fn init_with<R: Rng>(arch: Architecture, rng: &mut R) -> Self {
        let gates = (arch.fusion == Fusion::Gated).then(|| FusionGates {
            first: Array1::from_elem(arch.input_width, F::from_f64(0.5)),
            second: Array1::from_elem(arch.input_width, F::from_f64(0.5)),
        });
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight =
                    Array2::from_shape_simple_fn((fan_in, fan_out), || F::from_f64(rng.random_range(-limit..limit)));
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        ModelParams { arch, gates, layers }
    }

    /// Glorot weights with biases drawn from ±0.1 and gates from [0.25, 0.75].
    ///
    /// Zero biases leave pre-activations of dead units exactly on the ReLU
    /// kink, where finite differences disagree with any subgradient, so
    /// gradient checks start from this instead.
    pub fn perturbed<R: Rng>(arch: Architecture, rng: &mut R) -> Self {
        let mut p = Self::init_with(arch, rng);
        if let Some(g) = &mut p.gates {
            g.first.mapv_inplace(|_| F::from_f64(rng.random_range(0.25..0.75)));
            g.second.mapv_inplace(|_| F::from_f64(rng.random_range(0.25..0.75)));
        }
        for l in &mut p.layers {
            l.bias.mapv_inplace(|_| F::from_f64(rng.random_range(-0.1..0.1)));
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            arch: self.arch.clone(),
            gates: self.gates.as_ref().map(|g| FusionGates {
                first: Array1::zeros(g.first.len()),
                second: Array1::zeros(g.second.len()),
            }),
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Array2::zeros(l.weight.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    /// Named flat views of every tensor, gates first, then `dense{i}.weight` / `dense{i}.bias`.
    pub fn tensors(&self) -> Vec<(String, &[F])> {
        let mut out = Vec::new();
        if let Some(g) = &self.gates {
            out.push(("gate1".to_string(), g.first.as_slice().expect("contiguous")));
            out.push(("gate2".to_string(), g.second.as_slice().expect("contiguous")));
        }
        for (i, l) in self.layers.iter().enumerate() {
            out.push((
                format!("dense{}.weight", i + 1),
                l.weight.as_slice().expect("contiguous"),
            ));
            out.push((format!("dense{}.bias", i + 1), l.bias.as_slice().expect("contiguous")));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [F])> {
        let mut out = Vec::new();
        if let Some(g) = &mut self.gates {
            out.push(("gate1".to_string(), g.first.as_slice_mut().expect("contiguous")));
            out.push(("gate2".to_string(), g.second.as_slice_mut().expect("contiguous")));
        }
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((
                format!("dense{}.weight", i + 1),
                l.weight.as_slice_mut().expect("contiguous"),
            ));
            out.push((
                format!("dense{}.bias", i + 1),
                l.bias.as_slice_mut().expect("contiguous"),
            ));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    fn check_inputs(&self, inputs: &Inputs<F>) -> Result<(), NetError> {
        let width = self.arch.input_width;
        let check = |m: &ArrayView2<F>, what| {
            if m.ncols() != width {
                return Err(NetError::DimensionMismatch {
                    what,
                    expected: width,
                    found: m.ncols(),
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(NetError::NonFinite(what));
            }
            Ok(())
        };
        check(&inputs.primary, "first input channel")?;
        match (&self.gates, &inputs.secondary) {
            (Some(_), Some(x2)) => {
                if x2.nrows() != inputs.primary.nrows() {
                    return Err(NetError::RowMismatch(inputs.primary.nrows(), x2.nrows()));
                }
                check(x2, "second input channel")
            }
            (Some(_), None) => Err(NetError::MissingChannel),
            (None, Some(_)) => Err(NetError::UnexpectedChannel),
            (None, None) => Ok(()),
        }
    }

    fn fuse(&self, inputs: &Inputs<F>) -> Array2<F> {
        match (&self.gates, inputs.secondary) {
            (Some(g), Some(x2)) => &inputs.primary * &g.first + &(&x2 * &g.second),
            _ => inputs.primary.to_owned(),
        }
    }

    /// Inverted-dropout mask for the first hidden layer: entries are 0 or `1 / (1 - rate)`.
    pub fn dropout_mask<R: Rng>(&self, rows: usize, rng: &mut R) -> Option<Array2<F>> {
        let rate = self.arch.dropout;
        if rate <= 0.0 {
            return None;
        }
        let keep = F::from_f64(1.0 / (1.0 - rate));
        let width = self.arch.hidden.first().copied().unwrap_or(self.arch.outputs);
        Some(Array2::from_shape_simple_fn((rows, width), || {
            if rng.random::<f64>() < rate {
                F::zero()
            } else {
                keep
            }
        }))
    }

    fn trace(&self, inputs: &Inputs<F>, mask: Option<Array2<F>>) -> Trace<F> {
        let fused = self.fuse(inputs);
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Array2<F>> = Vec::with_capacity(last);
        let mut probs = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { &fused } else { &post[i - 1] };
            let z = input.dot(&layer.weight) + &layer.bias;
            if i == last {
                probs = Some(z.mapv(sigmoid));
            } else {
                let mut a = relu(&z);
                if let (0, Some(m)) = (i, &mask) {
                    a *= m;
                }
                post.push(a);
            }
            pre.push(z);
        }
        Trace {
            fused,
            pre,
            post,
            mask,
            probs: probs.expect("at least one layer"),
        }
    }

    /// Batch forward pass. With `dropout` set, a fresh mask is drawn from the
    /// generator; without it the pass is deterministic.
    pub fn forward_batch<R: Rng>(&self, inputs: Inputs<F>, dropout: Option<&mut R>) -> Result<Array2<F>, NetError> {
        self.check_inputs(&inputs)?;
        let mask = dropout.and_then(|rng| self.dropout_mask(inputs.rows(), rng));
        Ok(self.trace(&inputs, mask).probs)
    }

    /// Inference-mode forward pass (no dropout).
    pub fn predict(&self, inputs: Inputs<F>) -> Result<Array2<F>, NetError> {
        self.forward_batch::<ChaCha8Rng>(inputs, None)
    }

    /// Single-sample forward pass returning one probability per output.
    pub fn forward<R: Rng>(&self, x1: &[F], x2: Option<&[F]>, training: bool, rng: &mut R) -> Result<Vec<F>, NetError> {
        let a = ArrayView2::from_shape((1, x1.len()), x1).expect("row view");
        let b = x2.map(|x| ArrayView2::from_shape((1, x.len()), x).expect("row view"));
        let inputs = Inputs {
            primary: a,
            secondary: b,
        };
        let out = if training {
            self.forward_batch(inputs, Some(rng))?
        } else {
            self.predict(inputs)?
        };
        Ok(out.into_raw_vec_and_offset().0)
    }

    /// Mean BCE loss, optionally under a fixed dropout mask.
    pub fn loss(&self, inputs: Inputs<F>, targets: ArrayView2<F>, mask: Option<&Array2<F>>) -> Result<F, NetError> {
        self.check_inputs(&inputs)?;
        self.check_targets(&inputs, &targets)?;
        let trace = self.trace(&inputs, mask.cloned());
        Ok(bce_loss(trace.probs.view(), targets))
    }

    fn check_targets(&self, inputs: &Inputs<F>, targets: &ArrayView2<F>) -> Result<(), NetError> {
        if targets.nrows() != inputs.rows() {
            return Err(NetError::RowMismatch(inputs.rows(), targets.nrows()));
        }
        if targets.ncols() != self.arch.outputs {
            return Err(NetError::DimensionMismatch {
                what: "targets",
                expected: self.arch.outputs,
                found: targets.ncols(),
            });
        }
        Ok(())
    }

    /// Loss and its exact gradient with respect to every parameter.
    pub fn loss_and_gradients(
        &self,
        inputs: Inputs<F>,
        targets: ArrayView2<F>,
        mask: Option<&Array2<F>>,
    ) -> Result<(F, Gradients<F>), NetError> {
        self.check_inputs(&inputs)?;
        self.check_targets(&inputs, &targets)?;
        let trace = self.trace(&inputs, mask.cloned());
        let loss = bce_loss(trace.probs.view(), targets);

        let lo = F::from_f64(PROB_CLAMP);
        let hi = F::one() - lo;
        let n = F::from_f64(trace.probs.len() as f64);
        // d(loss)/dz for the output layer; zero where the clamp is active.
        let mut delta = Array2::zeros(trace.probs.dim());
        Zip::from(&mut delta)
            .and(&trace.probs)
            .and(&targets)
            .for_each(|d, &p, &y| {
                *d = if p >= lo && p <= hi { (p - y) / n } else { F::zero() };
            });

        let mut grads = self.zeros_like();
        for i in (0..self.layers.len()).rev() {
            let input = if i == 0 { &trace.fused } else { &trace.post[i - 1] };
            grads.layers[i].weight = input.t().dot(&delta);
            grads.layers[i].bias = delta.sum_axis(Axis(0));
            let mut upstream = delta.dot(&self.layers[i].weight.t());
            if i == 0 {
                if let (Some(g), Some(x2)) = (&mut grads.gates, inputs.secondary) {
                    g.first = (&upstream * &inputs.primary).sum_axis(Axis(0));
                    g.second = (&upstream * &x2).sum_axis(Axis(0));
                }
                break;
            }
            if let (1, Some(m)) = (i, &trace.mask) {
                upstream *= m;
            }
            Zip::from(&mut upstream).and(&trace.pre[i - 1]).for_each(|u, &z| {
                if z <= F::zero() {
                    *u = F::zero();
                }
            });
            delta = upstream;
        }
        Ok((loss, grads))
    }

    /// `params -= learning_rate * grads`.
    pub fn sgd_step(&mut self, grads: &Gradients<F>, learning_rate: F) {
        if let (Some(g), Some(d)) = (&mut self.gates, &grads.gates) {
            g.first.scaled_add(-learning_rate, &d.first);
            g.second.scaled_add(-learning_rate, &d.second);
        }
        for (l, d) in self.layers.iter_mut().zip(&grads.layers) {
            l.weight.scaled_add(-learning_rate, &d.weight);
            l.bias.scaled_add(-learning_rate, &d.bias);
        }
    }

    /// Same parameters in another precision.
    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        let c1 = |a: &Array1<F>| a.mapv(|v| G::from_f64(v.to_f64()));
        let c2 = |a: &Array2<F>| a.mapv(|v| G::from_f64(v.to_f64()));
        ModelParams {
            arch: self.arch.clone(),
            gates: self.gates.as_ref().map(|g| FusionGates {
                first: c1(&g.first),
                second: c1(&g.second),
            }),
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: c2(&l.weight),
                    bias: c1(&l.bias),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn small_arch(fusion: Fusion) -> Architecture {
        Architecture {
            input_width: 6,
            fusion,
            hidden: vec![10, 8, 7, 5],
            outputs: 4,
            dropout: 0.2,
        }
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn layer_shapes_match_the_design() {
        let p = ModelParams::<f32>::init(Architecture::hybrid(200), 1);
        let shapes: Vec<_> = p.layers.iter().map(|l| l.weight.dim()).collect();
        assert_eq!(
            shapes,
            vec![(200, 1024), (1024, 512), (512, 256), (256, 128), (128, 20)]
        );
        let g = p.gates.as_ref().unwrap();
        assert_eq!((g.first.len(), g.second.len()), (200, 200));
        assert!(g.first.iter().chain(g.second.iter()).all(|&v| v == 0.5));
        assert!(p.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        assert_eq!(p.arch.dropout, 0.2);
        let tfidf = ModelParams::<f32>::init(Architecture::single(1000), 1);
        assert!(tfidf.gates.is_none());
        assert_eq!(tfidf.layers[0].weight.dim(), (1000, 1024));
    }

    #[test]
    fn zero_weights_give_one_half() {
        let mut p = ModelParams::<f64>::init(Architecture::hybrid(200), 3);
        p = p.zeros_like();
        let x = random_matrix(3, 200, 1);
        let out = p.predict(Inputs::pair(x.view(), x.view())).unwrap();
        assert!(out.iter().all(|&v| v == 0.5));
        assert_eq!(out.dim(), (3, 20));
    }

    #[test]
    fn identity_gate_passes_first_channel() {
        let mut p = ModelParams::<f64>::init(small_arch(Fusion::Gated), 4);
        let g = p.gates.as_mut().unwrap();
        g.first.fill(1.0);
        g.second.fill(0.0);
        let x1 = random_matrix(5, 6, 2);
        let x2 = random_matrix(5, 6, 3);
        let fused = p.fuse(&Inputs::pair(x1.view(), x2.view()));
        assert_eq!(fused, x1);
        let other = random_matrix(5, 6, 99);
        let a = p.predict(Inputs::pair(x1.view(), x2.view())).unwrap();
        let b = p.predict(Inputs::pair(x1.view(), other.view())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inference_is_deterministic_and_training_is_not() {
        let p = ModelParams::<f64>::init(small_arch(Fusion::Single), 5);
        let x = random_matrix(1, 6, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let row = x.row(0).to_vec();
        let a = p.forward(&row, None, false, &mut rng).unwrap();
        let b = p.forward(&row, None, false, &mut rng).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
        let draws: Vec<Vec<f64>> = (0..8).map(|_| p.forward(&row, None, true, &mut rng).unwrap()).collect();
        assert!(draws.iter().any(|d| d != &a));
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = ModelParams::<f64>::init(small_arch(Fusion::Gated), 5);
        let x = random_matrix(2, 6, 1);
        assert_eq!(p.predict(Inputs::single(x.view())), Err(NetError::MissingChannel));
        let narrow = random_matrix(2, 5, 1);
        assert!(matches!(
            p.predict(Inputs::pair(x.view(), narrow.view())),
            Err(NetError::DimensionMismatch { .. })
        ));
        let mut bad = x.clone();
        bad[[1, 1]] = f64::NAN;
        assert!(matches!(
            p.predict(Inputs::pair(bad.view(), x.view())),
            Err(NetError::NonFinite(_))
        ));
        let s = ModelParams::<f64>::init(small_arch(Fusion::Single), 5);
        assert_eq!(
            s.predict(Inputs::pair(x.view(), x.view())),
            Err(NetError::UnexpectedChannel)
        );
    }

    #[test]
    fn gate_gradient_vanishes_for_zero_channel() {
        let p = ModelParams::<f64>::init(small_arch(Fusion::Gated), 6);
        let x1 = Array2::zeros((4, 6));
        let x2 = random_matrix(4, 6, 8);
        let y = random_matrix(4, 4, 9).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let (_, g) = p
            .loss_and_gradients(Inputs::pair(x1.view(), x2.view()), y.view(), None)
            .unwrap();
        let gates = g.gates.unwrap();
        assert!(gates.first.iter().all(|&v| v == 0.0));
        assert!(gates.second.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn one_small_step_lowers_the_loss() {
        for seed in 0..5 {
            let mut p = ModelParams::<f64>::init(Architecture::hybrid(200), seed);
            let x1 = random_matrix(1, 200, seed + 10);
            let x2 = random_matrix(1, 200, seed + 20);
            let y = random_matrix(1, 20, seed + 30).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let inputs = Inputs::pair(x1.view(), x2.view());
            let (before, g) = p.loss_and_gradients(inputs, y.view(), None).unwrap();
            p.sgd_step(&g, 1e-4);
            let after = p.loss(inputs, y.view(), None).unwrap();
            assert!(after < before, "seed {seed}: {after} >= {before}");
        }
    }

    #[test]
    fn loss_matches_definition() {
        let probs = ndarray::array![[0.9, 0.2], [1.0, 0.0]];
        let y = ndarray::array![[1.0, 0.0], [1.0, 1.0]];
        let expected = -((0.9f64).ln() + (0.8f64).ln() + (1.0 - PROB_CLAMP).ln() + PROB_CLAMP.ln()) / 4.0;
        assert!((bce_loss(probs.view(), y.view()) - expected).abs() < 1e-12);
    }
}
