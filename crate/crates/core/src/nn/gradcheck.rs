//! Central finite-difference verification of reverse-mode gradients.

use super::{ParamStore, Tape, Tensor, Var};
use crate::media::SeededRng;

/// Worst disagreement found for one checked tensor.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

/// Settings for [`check_gradients`].
#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// At most this many entries per tensor are perturbed.
    pub max_entries: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_entries: 48,
            seed: 0,
        }
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-9 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

fn probe_indices(len: usize, max: usize, rng: &mut SeededRng) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        (0..max).map(|_| rng.below(0, len)).collect()
    }
}

/// Checks d(sum(r * f(inputs, params)))/d(every input and parameter) for a
/// fixed random projection `r`.
pub fn check_gradients<F>(
    store: &ParamStore<f64>,
    inputs: &[Tensor<f64>],
    forward: F,
    cfg: GradCheckConfig,
) -> Vec<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>, &[Var]) -> Var,
{
    let mut rng = SeededRng::new(cfg.seed);
    let run = |store: &ParamStore<f64>, inputs: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let out = forward(&mut tape, store, &vars);
        (tape, vars, out)
    };

    let (tape, vars, out) = run(store, inputs);
    let proj: Vec<f64> = (0..tape.value(out).len()).map(|_| rng.normal() as f64).collect();
    let loss = |store: &ParamStore<f64>, inputs: &[Tensor<f64>]| -> f64 {
        let (tape, _, out) = run(store, inputs);
        tape.value(out).data().iter().zip(&proj).map(|(a, b)| a * b).sum()
    };
    let seed = Tensor::new(tape.value(out).shape().to_vec(), proj.clone());
    let mut grad_store = store.clone();
    grad_store.zero_grads();
    let grads = tape.backward(&[(out, seed)], &mut grad_store);

    let mut reports = Vec::new();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        let mut worst = 0.0f64;
        let idx = probe_indices(inputs[k].len(), cfg.max_entries, &mut rng);
        for &j in &idx {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += cfg.eps;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= cfg.eps;
            let numeric = (loss(store, &plus) - loss(store, &minus)) / (2.0 * cfg.eps);
            worst = worst.max(rel_err(analytic.data()[j], numeric));
        }
        reports.push(GradCheckReport {
            name: format!("input{k}"),
            checked: idx.len(),
            max_rel_err: worst,
        });
    }
    for id in store.ids() {
        let analytic = grad_store.grad(id).clone();
        let mut worst = 0.0f64;
        let idx = probe_indices(store.value(id).len(), cfg.max_entries, &mut rng);
        for &j in &idx {
            let mut plus = store.clone();
            plus.value_mut(id).data_mut()[j] += cfg.eps;
            let mut minus = store.clone();
            minus.value_mut(id).data_mut()[j] -= cfg.eps;
            let numeric = (loss(&plus, inputs) - loss(&minus, inputs)) / (2.0 * cfg.eps);
            worst = worst.max(rel_err(analytic.data()[j], numeric));
        }
        reports.push(GradCheckReport {
            name: store.name(id).to_string(),
            checked: idx.len(),
            max_rel_err: worst,
        });
    }
    reports
}

/// Largest relative error across reports.
pub fn worst(reports: &[GradCheckReport]) -> f64 {
    reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max)
}
