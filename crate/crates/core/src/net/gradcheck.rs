use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Gradients, Inputs, ModelParams, NetError};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Entries checked per tensor; smaller tensors are checked in full.
    pub samples_per_tensor: usize,
    pub seed: u64,
    /// Hold this dropout mask fixed for both the analytic and numeric passes.
    pub dropout_mask: Option<Array2<f64>>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-4,
            samples_per_tensor: 32,
            seed: 0,
            dropout_mask: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_relative_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares backpropagated gradients with central differences.
pub fn gradient_check(
    params: &ModelParams<f64>,
    inputs: Inputs<f64>,
    targets: ArrayView2<f64>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, NetError> {
    gradient_check_with(params, inputs, targets, opts, |_| {})
}

/// Like [`gradient_check`], with `adjust` applied to the analytic gradients
/// before comparison.
pub fn gradient_check_with(
    params: &ModelParams<f64>,
    inputs: Inputs<f64>,
    targets: ArrayView2<f64>,
    opts: &GradCheckOptions,
    adjust: impl FnOnce(&mut Gradients<f64>),
) -> Result<GradCheckReport, NetError> {
    let mask = opts.dropout_mask.as_ref();
    let (_, mut grads) = params.loss_and_gradients(inputs, targets, mask)?;
    adjust(&mut grads);
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(name, t)| (name, t.to_vec()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = params.clone();
    let mut tensors = Vec::with_capacity(analytic.len());
    for (t, (name, grad)) in analytic.iter().enumerate() {
        let len = grad.len();
        let picks: Vec<usize> = if len <= opts.samples_per_tensor {
            (0..len).collect()
        } else {
            let mut v = sample(&mut rng, len, opts.samples_per_tensor).into_vec();
            v.sort_unstable();
            v
        };
        let mut check = TensorCheck {
            name: name.clone(),
            checked: picks.len(),
            max_relative_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for &i in &picks {
            let original = probe.tensors()[t].1[i];
            probe.tensors_mut()[t].1[i] = original + opts.epsilon;
            let plus = probe.loss(inputs, targets, mask)?;
            probe.tensors_mut()[t].1[i] = original - opts.epsilon;
            let minus = probe.loss(inputs, targets, mask)?;
            probe.tensors_mut()[t].1[i] = original;
            let numeric = (plus - minus) / (2.0 * opts.epsilon);
            let err = relative_error(grad[i], numeric);
            if i == picks[0] || err > check.max_relative_error {
                check.max_relative_error = err;
                check.worst_index = i;
                check.analytic = grad[i];
                check.numeric = numeric;
            }
        }
        tensors.push(check);
    }
    let max_relative_error = tensors.iter().map(|c| c.max_relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_relative_error,
        tensors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Architecture, Fusion};
    use rand::Rng;

    fn setup(seed: u64) -> (ModelParams<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
        let arch = Architecture {
            input_width: 12,
            fusion: Fusion::Gated,
            hidden: vec![16, 12, 10, 8],
            outputs: 5,
            dropout: 0.2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ModelParams::perturbed(arch, &mut rng);
        let x1 = Array2::from_shape_simple_fn((8, 12), || rng.random_range(-1.0..1.0));
        let x2 = Array2::from_shape_simple_fn((8, 12), || rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_simple_fn((8, 5), || if rng.random_bool(0.4) { 1.0 } else { 0.0 });
        (p, x1, x2, y)
    }

    #[test]
    fn analytic_gradients_agree_with_differences() {
        for seed in 0..3 {
            let (p, x1, x2, y) = setup(seed);
            let report = gradient_check(
                &p,
                Inputs::pair(x1.view(), x2.view()),
                y.view(),
                &GradCheckOptions::default(),
            )
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "{:?}", report.worst());
            assert_eq!(report.tensors.len(), 12);
        }
    }

    #[test]
    fn fixed_dropout_mask_is_checked_too() {
        let (p, x1, x2, y) = setup(9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let opts = GradCheckOptions {
            dropout_mask: p.dropout_mask(8, &mut rng),
            ..GradCheckOptions::default()
        };
        let report = gradient_check(&p, Inputs::pair(x1.view(), x2.view()), y.view(), &opts).unwrap();
        assert!(report.max_relative_error < 1e-4, "{:?}", report.worst());
    }

    #[test]
    fn corrupted_layer_is_caught() {
        let (p, x1, x2, y) = setup(4);
        let report = gradient_check_with(
            &p,
            Inputs::pair(x1.view(), x2.view()),
            y.view(),
            &GradCheckOptions::default(),
            |g| g.layers[2].weight.mapv_inplace(|v| v * 2.0),
        )
        .unwrap();
        assert!(report.max_relative_error > 1e-2);
        assert_eq!(report.worst().unwrap().name, "dense3.weight");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-12, 0.0) - 1e-4).abs() < 1e-18);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
