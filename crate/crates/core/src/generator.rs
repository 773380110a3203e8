//! Top-down generator `G(z)`, the complete-data log-likelihood and the
//! maximum-likelihood parameter update.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ndgrad::{backward, forward, forward_trace, validate_specs, Activation, LayerSpec, MlpParams, Tensor};
use crate::scalar::Scalar;
use crate::ssprior::{log_density_sum, PriorParams};

/// Network weights `θ` of the generator.
pub type GeneratorParams<T = f64> = MlpParams<T>;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig<T = f64> {
    pub latent_dim: usize,
    pub layers: Vec<LayerSpec>,
    /// Standard deviation `σ` of the Gaussian observation noise.
    pub obs_noise_sigma: T,
    pub output_dim: usize,
}

impl<T: Scalar> GeneratorConfig<T> {
    /// ReLU hidden layers followed by a sigmoid output layer.
    pub fn mlp(latent_dim: usize, hidden: &[usize], output_dim: usize, obs_noise_sigma: T) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = latent_dim;
        for &h in hidden {
            layers.push(LayerSpec::new(prev, h, Activation::Relu));
            prev = h;
        }
        layers.push(LayerSpec::new(prev, output_dim, Activation::Sigmoid));
        let cfg = GeneratorConfig {
            latent_dim,
            layers,
            obs_noise_sigma,
            output_dim,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 200 → 400 (ReLU) → 784 (sigmoid), `σ = 0.3`.
    pub fn mnist() -> Self {
        Self::mlp(200, &[400], 784, T::of(0.3)).expect("valid default")
    }

    pub fn validate(&self) -> Result<()> {
        validate_specs(&self.layers)?;
        if self.layers[0].in_dim != self.latent_dim {
            return Err(Error::param(format!(
                "first layer expects {} inputs but latent_dim is {}",
                self.layers[0].in_dim, self.latent_dim
            )));
        }
        let out = self.layers.last().expect("non-empty").out_dim;
        if out != self.output_dim {
            return Err(Error::param(format!(
                "last layer produces {out} outputs but output_dim is {}",
                self.output_dim
            )));
        }
        if !(self.obs_noise_sigma > T::zero()) || !self.obs_noise_sigma.is_finite() {
            return Err(Error::param("observation noise sigma must be positive"));
        }
        Ok(())
    }

    /// `D · log(√(2π) σ)`, the normalizer of the D-dimensional Gaussian likelihood.
    pub fn log_normalizer(&self) -> T {
        T::of(self.output_dim as f64 * ((2.0 * PI).sqrt() * self.obs_noise_sigma.f64()).ln())
    }

    /// Layer stack as `in x out:act` items joined by commas, e.g.
    /// `200x400:relu,400x784:sigmoid`.
    pub fn layers_string(&self) -> String {
        self.layers
            .iter()
            .map(|l| format!("{}x{}:{}", l.in_dim, l.out_dim, l.activation.name()))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_layers(s: &str) -> Result<Vec<LayerSpec>> {
        s.split(',')
            .map(|item| {
                let bad = || Error::param(format!("bad layer description {item:?}"));
                let (dims, act) = item.trim().split_once(':').ok_or_else(bad)?;
                let (i, o) = dims.split_once('x').ok_or_else(bad)?;
                Ok(LayerSpec::new(
                    i.parse().map_err(|_| bad())?,
                    o.parse().map_err(|_| bad())?,
                    Activation::parse(act).ok_or_else(bad)?,
                ))
            })
            .collect()
    }
}

fn check_latents<T: Scalar>(z: &Tensor<T>, config: &GeneratorConfig<T>) -> Result<()> {
    let (_, k) = z.ensure_matrix("latent batch")?;
    if k != config.latent_dim {
        return Err(Error::dim(format!(
            "latent batch has {k} dimensions, generator expects {}",
            config.latent_dim
        )));
    }
    Ok(())
}

fn check_pair<T: Scalar>(x: &Tensor<T>, z: &Tensor<T>, config: &GeneratorConfig<T>) -> Result<()> {
    check_latents(z, config)?;
    let (b, d) = x.ensure_matrix("image batch")?;
    if d != config.output_dim || b != z.rows() {
        return Err(Error::dim(format!(
            "images {:?} do not pair with latents {:?} for output_dim {}",
            x.shape(),
            z.shape(),
            config.output_dim
        )));
    }
    Ok(())
}

/// Mean image `G(z)` for each latent row. No observation noise is added.
pub fn decode<T: Scalar>(
    z: &Tensor<T>,
    params: &GeneratorParams<T>,
    config: &GeneratorConfig<T>,
) -> Result<Tensor<T>> {
    check_latents(z, config)?;
    forward(&config.layers, params, z)
}

/// Per-sample `log p(x, z) = -‖x - G(z)‖²/(2σ²) + Σ_k log p_ss(z_k) - D log(√(2π)σ)`.
pub fn complete_loglik<T: Scalar>(
    x: &Tensor<T>,
    z: &Tensor<T>,
    params: &GeneratorParams<T>,
    prior: &PriorParams<T>,
    config: &GeneratorConfig<T>,
) -> Result<Vec<T>> {
    check_pair(x, z, config)?;
    let mean = forward(&config.layers, params, z)?;
    let scale = T::one() / (T::of(2.0) * config.obs_noise_sigma * config.obs_noise_sigma);
    let norm = config.log_normalizer();
    Ok((0..x.rows())
        .map(|b| {
            let sq: T = x.row(b).iter().zip(mean.row(b)).map(|(&a, &g)| (a - g) * (a - g)).sum();
            -sq * scale + log_density_sum(z.row(b), prior) - norm
        })
        .collect())
}

/// Gradient with respect to `θ` of the batch-mean complete-data
/// log-likelihood at fixed latents (ascent direction).
///
/// Only the reconstruction term depends on `θ`; the prior and the normalizer
/// contribute nothing.
pub fn param_grad<T: Scalar>(
    x: &Tensor<T>,
    z_map: &Tensor<T>,
    params: &GeneratorParams<T>,
    config: &GeneratorConfig<T>,
) -> Result<GeneratorParams<T>> {
    check_pair(x, z_map, config)?;
    let trace = forward_trace(&config.layers, params, z_map)?;
    let b = x.rows();
    let factor = T::one() / (config.obs_noise_sigma * config.obs_noise_sigma * T::of(b as f64));
    let out = trace.output();
    let upstream = Tensor::matrix(
        b,
        config.output_dim,
        x.data().iter().zip(out.data()).map(|(&xv, &g)| (xv - g) * factor).collect(),
    )?;
    let (grads, _) = backward(&config.layers, params, &trace, &upstream, true)?;
    Ok(grads.expect("requested"))
}

/// Adam moments and hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f64> {
    /// First moments, one buffer per parameter tensor in declaration order.
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments with `β1 = 0.9`, `β2 = 0.999`, `ε = 1e-8`.
    pub fn new(params: &MlpParams<T>) -> Self {
        Self::with_hyper(params, T::of(0.9), T::of(0.999), T::of(1e-8))
    }

    pub fn with_hyper(params: &MlpParams<T>, beta1: T, beta2: T, eps: T) -> Self {
        let zeros: Vec<Vec<T>> = params.tensors().map(|t| vec![T::zero(); t.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn matches(&self, params: &MlpParams<T>) -> bool {
        self.m.len() == self.v.len()
            && params.tensors().count() == self.m.len()
            && params
                .tensors()
                .zip(self.m.iter().zip(&self.v))
                .all(|(p, (m, v))| p.len() == m.len() && p.len() == v.len())
    }
}

/// One bias-corrected Adam descent step on `grads` (the gradient of the loss
/// to minimize). To ascend a log-likelihood pass its negated gradient.
pub fn adam_step<T: Scalar>(
    params: &mut MlpParams<T>,
    grads: &MlpParams<T>,
    state: &mut AdamState<T>,
    lr: T,
) -> Result<()> {
    if !state.matches(params) || params.num_params() != grads.num_params() {
        return Err(Error::dim("optimizer state, parameters and gradients differ in layout"));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    for ((p, g), (m, v)) in params
        .tensors_mut()
        .zip(grads.tensors())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = b1 * *mv + (T::one() - b1) * gv;
            *vv = b2 * *vv + (T::one() - b2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::ndgrad::{Layer, Rng};

    fn tiny_config() -> GeneratorConfig {
        GeneratorConfig::mlp(3, &[5], 4, 0.3).unwrap()
    }

    fn random_batch(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.normal(0.0, scale)).collect()).unwrap()
    }

    #[test]
    fn zero_params_decode_to_half() {
        let cfg = tiny_config();
        let params = MlpParams::zeros(&cfg.layers);
        let z = random_batch(&mut Rng::new(1), 2, 3, 1.0);
        let out = decode(&z, &params, &cfg).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn zero_first_layer_gives_constant_output() {
        let cfg = tiny_config();
        let mut params = MlpParams::init(&cfg.layers, &mut Rng::new(2));
        for w in params.layers[0].weights.data_mut() {
            *w = 0.0;
        }
        let a = decode(&Tensor::zeros(&[1, 3]), &params, &cfg).unwrap();
        let b = decode(&random_batch(&mut Rng::new(3), 1, 3, 2.0), &params, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decode_matches_hand_rolled_forward() {
        let cfg = tiny_config();
        let params = MlpParams::init(&cfg.layers, &mut Rng::new(4));
        let z = random_batch(&mut Rng::new(5), 3, 3, 1.0);
        let out = decode(&z, &params, &cfg).unwrap();
        let Layer { weights: w0, bias: b0 } = &params.layers[0];
        let Layer { weights: w1, bias: b1 } = &params.layers[1];
        for s in 0..3 {
            let h: Vec<f64> = (0..5)
                .map(|j| {
                    let pre = b0.data()[j] + (0..3).map(|i| z.row(s)[i] * w0.data()[i * 5 + j]).sum::<f64>();
                    pre.max(0.0)
                })
                .collect();
            for o in 0..4 {
                let pre = b1.data()[o] + (0..5).map(|j| h[j] * w1.data()[j * 4 + o]).sum::<f64>();
                let y = 1.0 / (1.0 + (-pre).exp());
                assert!((out.row(s)[o] - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn loglik_of_perfect_reconstruction() {
        let cfg = tiny_config();
        let params = MlpParams::init(&cfg.layers, &mut Rng::new(6));
        let prior = PriorParams::with_alpha1(0.2).unwrap();
        let z = random_batch(&mut Rng::new(7), 2, 3, 0.5);
        let x = decode(&z, &params, &cfg).unwrap();
        let ll = complete_loglik(&x, &z, &params, &prior, &cfg).unwrap();
        for (b, v) in ll.iter().enumerate() {
            let expected = log_density_sum(z.row(b), &prior) - cfg.log_normalizer();
            assert_eq!(*v, expected);
        }
    }

    #[test]
    fn standard_prior_at_origin() {
        let cfg = GeneratorConfig::mlp(2, &[], 3, 0.3).unwrap();
        let params = MlpParams::zeros(&cfg.layers);
        let prior = PriorParams::with_alpha1(1.0).unwrap();
        let z = Tensor::zeros(&[1, 2]);
        let x = Tensor::full(&[1, 3], 0.5);
        let ll = complete_loglik(&x, &z, &params, &prior, &cfg).unwrap()[0];
        let prior_part = ll + cfg.log_normalizer();
        assert!((prior_part - 2.0 * (-0.5 * (2.0 * PI).ln())).abs() < 1e-14);
    }

    #[test]
    fn loglik_matches_scalar_formula() {
        let cfg = tiny_config();
        let params = MlpParams::init(&cfg.layers, &mut Rng::new(8));
        let prior = PriorParams::with_alpha1(0.05).unwrap();
        let mut rng = Rng::new(9);
        let z = random_batch(&mut rng, 2, 3, 0.7);
        let x = Tensor::matrix(2, 4, (0..8).map(|_| rng.uniform()).collect()).unwrap();
        let g = decode(&z, &params, &cfg).unwrap();
        let ll = complete_loglik(&x, &z, &params, &prior, &cfg).unwrap();
        for b in 0..2 {
            let mut v = 0.0;
            for d in 0..4 {
                v -= (x.row(b)[d] - g.row(b)[d]).powi(2) / (2.0 * 0.09);
            }
            for &zk in z.row(b) {
                let n1 = (-zk * zk / 2.0).exp() / (2.0 * PI).sqrt();
                let n2 = (-zk * zk / 0.2).exp() / (2.0 * PI * 0.1).sqrt();
                v += (0.05 * n1 + 0.95 * n2).ln();
            }
            v -= 4.0 * ((2.0 * PI).sqrt() * 0.3).ln();
            assert!((ll[b] - v).abs() <= 1e-10);
        }
    }

    #[test]
    fn grad_vanishes_at_perfect_fit() {
        let cfg = tiny_config();
        let params = MlpParams::init(&cfg.layers, &mut Rng::new(10));
        let z = random_batch(&mut Rng::new(11), 4, 3, 1.0);
        let x = decode(&z, &params, &cfg).unwrap();
        assert_eq!(param_grad(&x, &z, &params, &cfg).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn doubling_sigma_quarters_gradient() {
        let mut cfg = tiny_config();
        let params = MlpParams::init(&cfg.layers, &mut Rng::new(12));
        let mut rng = Rng::new(13);
        let z = random_batch(&mut rng, 3, 3, 1.0);
        let x = Tensor::matrix(3, 4, (0..12).map(|_| rng.uniform()).collect()).unwrap();
        let g1 = param_grad(&x, &z, &params, &cfg).unwrap();
        cfg.obs_noise_sigma = 0.6;
        let g2 = param_grad(&x, &z, &params, &cfg).unwrap();
        for (a, b) in g1.tensors().zip(g2.tensors()) {
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((u / 4.0 - v).abs() <= 1e-15 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn batch_grad_is_mean_of_sample_grads() {
        let cfg = tiny_config();
        let params = MlpParams::init(&cfg.layers, &mut Rng::new(14));
        let mut rng = Rng::new(15);
        let z = random_batch(&mut rng, 5, 3, 1.0);
        let x = Tensor::matrix(5, 4, (0..20).map(|_| rng.uniform()).collect()).unwrap();
        let batch = param_grad(&x, &z, &params, &cfg).unwrap();
        let mut mean = MlpParams::zeros(&cfg.layers);
        for s in 0..5 {
            let g = param_grad(&x.select_rows(&[s]), &z.select_rows(&[s]), &params, &cfg).unwrap();
            for (acc, t) in mean.tensors_mut().zip(g.tensors()) {
                for (a, v) in acc.data_mut().iter_mut().zip(t.data()) {
                    *a += v / 5.0;
                }
            }
        }
        assert!(batch.max_abs_diff(&mean) <= 1e-10);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let cfg = tiny_config();
        let mut params = MlpParams::init(&cfg.layers, &mut Rng::new(16));
        let before = params.clone();
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &MlpParams::zeros(&cfg.layers), &mut state, 1e-3).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.t, 1);
    }

    fn scalar_params(v: f64) -> MlpParams {
        MlpParams {
            layers: vec![Layer {
                weights: Tensor::matrix(1, 1, vec![v]).unwrap(),
                bias: Tensor::vector(vec![0.0]),
            }],
        }
    }

    #[test]
    fn adam_first_step_is_sign_step() {
        let mut params = scalar_params(0.0);
        let mut state = AdamState::new(&params);
        let mut grads = scalar_params(2.0);
        grads.layers[0].bias.data_mut()[0] = 0.0;
        adam_step(&mut params, &grads, &mut state, 1e-4).unwrap();
        let step = params.layers[0].weights.data()[0];
        assert!((step - (-1e-4 * 2.0 / (2.0 + 1e-8))).abs() < 1e-18);
        assert!((step + 1e-4).abs() < 1e-12);
    }

    #[test]
    fn adam_three_step_trace() {
        // minimize f(w) = (w - 3)² from w = 0 with lr 0.1; expected iterates
        // computed offline by executing the bias-corrected recurrence
        let expected = [0.09999999983333335, 0.19989729258521102, 0.29961847654925267];
        let mut params = scalar_params(0.0);
        let mut state = AdamState::new(&params);
        for w in expected {
            let pw = params.layers[0].weights.data()[0];
            let mut grads = scalar_params(2.0 * (pw - 3.0));
            grads.layers[0].bias.data_mut()[0] = 0.0;
            adam_step(&mut params, &grads, &mut state, 0.1).unwrap();
            assert!((params.layers[0].weights.data()[0] - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn layer_string_round_trip() {
        let cfg = GeneratorConfig::<f64>::mnist();
        assert_eq!(cfg.layers_string(), "200x400:relu,400x784:sigmoid");
        assert_eq!(GeneratorConfig::<f64>::parse_layers(&cfg.layers_string()).unwrap(), cfg.layers);
        assert!(GeneratorConfig::<f64>::parse_layers("3x4:tanh").is_err());
    }
}
