use rand::RngCore;

use crate::data::epoch_order;
use crate::error::{Error, Result};
use crate::generator::{adam_step, AdamState};
use crate::ndgrad::{backward, forward, forward_trace, Activation, LayerSpec, MlpParams, Rng, Tensor};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifierConfig<T = f64> {
    pub hidden: usize,
    pub num_classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: T,
    pub seed: u64,
}

impl<T: Scalar> Default for ClassifierConfig<T> {
    fn default() -> Self {
        ClassifierConfig {
            hidden: 256,
            num_classes: 10,
            epochs: 50,
            batch_size: 100,
            lr: T::of(1e-3),
            seed: 0,
        }
    }
}

/// One-hidden-layer relu network producing class logits.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams<T = f64> {
    pub specs: Vec<LayerSpec>,
    pub params: MlpParams<T>,
}

impl<T: Scalar> ClassifierParams<T> {
    pub fn logits(&self, inputs: &Tensor<T>) -> Result<Tensor<T>> {
        forward(&self.specs, &self.params, inputs)
    }
}

/// Softmax cross-entropy gradient with respect to the logits, averaged over the batch.
fn softmax_ce_grad<T: Scalar>(logits: &Tensor<T>, labels: &[u8]) -> Tensor<T> {
    let (b, c) = (logits.rows(), logits.cols());
    let mut g = Tensor::zeros(&[b, c]);
    let inv_b = 1.0 / b as f64;
    for (i, &label) in labels.iter().enumerate().take(b) {
        let row = logits.row(i);
        let m = row.iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.f64()));
        let exps: Vec<f64> = row.iter().map(|v| (v.f64() - m).exp()).collect();
        let s: f64 = exps.iter().sum();
        for (j, out) in g.row_mut(i).iter_mut().enumerate() {
            let target = if j == label as usize { 1.0 } else { 0.0 };
            *out = T::of((exps[j] / s - target) * inv_b);
        }
    }
    g
}

/// Trains an `inputs.cols() → hidden → num_classes` classifier with Adam on
/// softmax cross-entropy. Each epoch visits every sample once in a shuffled
/// order; the last batch may be smaller.
pub fn train_classifier<T: Scalar>(
    inputs: &Tensor<T>,
    labels: &[u8],
    cfg: &ClassifierConfig<T>,
) -> Result<ClassifierParams<T>> {
    let (n, d) = inputs.ensure_matrix("classifier inputs")?;
    if labels.len() != n {
        return Err(Error::dim(format!("{} labels for {n} inputs", labels.len())));
    }
    if cfg.batch_size == 0 || cfg.hidden == 0 || cfg.num_classes < 2 {
        return Err(Error::param("classifier needs batch_size, hidden >= 1 and at least 2 classes"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= cfg.num_classes) {
        return Err(Error::param(format!("label {bad} out of range")));
    }
    let first = labels.first().copied();
    if labels.iter().all(|&l| Some(l) == first) {
        return Err(Error::Training("classifier needs at least two distinct classes".into()));
    }

    let specs = vec![
        LayerSpec::new(d, cfg.hidden, Activation::Relu),
        LayerSpec::new(cfg.hidden, cfg.num_classes, Activation::Identity),
    ];
    let mut params = MlpParams::init(&specs, &mut Rng::stream(cfg.seed, 0));
    let mut adam = AdamState::new(&params);
    for epoch in 0..cfg.epochs {
        let shuffle_seed = Rng::stream(cfg.seed, epoch as u64 + 1).next_u64();
        let order = epoch_order(n, shuffle_seed, true);
        for chunk in order.chunks(cfg.batch_size) {
            let x = inputs.select_rows(chunk);
            let y: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let trace = forward_trace(&specs, &params, &x)?;
            let upstream = softmax_ce_grad(trace.output(), &y);
            let (grads, _) = backward(&specs, &params, &trace, &upstream, true)?;
            adam_step(&mut params, &grads.expect("requested"), &mut adam, cfg.lr)?;
        }
    }
    if !params.is_finite() {
        return Err(Error::Training("classifier weights became non-finite".into()));
    }
    Ok(ClassifierParams { specs, params })
}

/// Classifier on latent codes; identical to [`train_classifier`].
pub fn train_latent_classifier<T: Scalar>(
    latents: &Tensor<T>,
    labels: &[u8],
    cfg: &ClassifierConfig<T>,
) -> Result<ClassifierParams<T>> {
    train_classifier(latents, labels, cfg)
}

/// Fraction of rows whose arg-max (lowest index on ties) equals the label.
pub fn accuracy_from_logits<T: Scalar>(logits: &Tensor<T>, labels: &[u8]) -> Result<f64> {
    let (b, _) = logits.ensure_matrix("logits")?;
    if labels.len() != b || b == 0 {
        return Err(Error::dim(format!("{} labels for {b} logit rows", labels.len())));
    }
    let hits = (0..b)
        .filter(|&i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best == labels[i] as usize
        })
        .count();
    Ok(hits as f64 / b as f64)
}

pub fn eval_classifier<T: Scalar>(params: &ClassifierParams<T>, inputs: &Tensor<T>, labels: &[u8]) -> Result<f64> {
    accuracy_from_logits(&params.logits(inputs)?, labels)
}
