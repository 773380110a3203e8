//! Latent inference: penalized gradient descent on
//! `‖x - G(z)‖²/(2σ²) - Σ_k log p_ss(z_k)`, optionally with Langevin noise.
//!
//! Every call starts from a fresh initialization (zeros by default); no chain
//! state survives between calls.

use crate::error::{Error, Result};
use crate::generator::{GeneratorConfig, GeneratorParams};
use crate::ndgrad::{backward, forward, forward_trace, Rng, Tensor};
use crate::scalar::Scalar;
use crate::ssprior::{log_density_sum, PriorParams, StableCoeffs};

/// Any latent coordinate beyond this magnitude aborts inference.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InitMode {
    Zero,
    Gaussian,
    SpikeSlab,
}

impl InitMode {
    pub fn name(self) -> &'static str {
        match self {
            InitMode::Zero => "zero",
            InitMode::Gaussian => "gaussian",
            InitMode::SpikeSlab => "spike_slab",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zero" => Some(InitMode::Zero),
            "gaussian" => Some(InitMode::Gaussian),
            "spike_slab" => Some(InitMode::SpikeSlab),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InferenceConfig<T = f64> {
    pub steps: usize,
    /// Langevin step size `s`; the gradient step is `s²/2`.
    pub step_size: T,
    pub noise_enabled: bool,
    pub init_mode: InitMode,
}

impl<T: Scalar> Default for InferenceConfig<T> {
    fn default() -> Self {
        InferenceConfig {
            steps: 30,
            step_size: T::of(0.1),
            noise_enabled: false,
            init_mode: InitMode::Zero,
        }
    }
}

impl<T: Scalar> InferenceConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::param("inference needs at least one step"));
        }
        if !(self.step_size > T::zero()) || !self.step_size.is_finite() {
            return Err(Error::param("inference step size must be positive"));
        }
        Ok(())
    }
}

/// Latent codes for a batch plus each sample's penalized objective at those codes.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBatch<T = f64> {
    pub values: Tensor<T>,
    pub objective: Vec<T>,
}

/// Per-sample `‖x - G(z)‖²/(2σ²) - Σ_k log p_ss(z_k)`; inference minimizes this.
pub fn penalized_objective<T: Scalar>(
    x: &Tensor<T>,
    z: &Tensor<T>,
    params: &GeneratorParams<T>,
    prior: &PriorParams<T>,
    gen: &GeneratorConfig<T>,
) -> Result<Vec<T>> {
    let mean = forward(&gen.layers, params, z)?;
    if mean.shape() != x.shape() {
        return Err(Error::dim(format!(
            "decoded batch {:?} does not match images {:?}",
            mean.shape(),
            x.shape()
        )));
    }
    let scale = T::one() / (T::of(2.0) * gen.obs_noise_sigma * gen.obs_noise_sigma);
    Ok((0..x.rows())
        .map(|b| {
            let sq: T = x.row(b).iter().zip(mean.row(b)).map(|(&a, &g)| (a - g) * (a - g)).sum();
            sq * scale - log_density_sum(z.row(b), prior)
        })
        .collect())
}

/// Starting latents `z_0` for a batch of `batch` samples.
pub fn init_latents<T: Scalar>(
    batch: usize,
    latent_dim: usize,
    prior: &PriorParams<T>,
    mode: InitMode,
    rng: &mut Rng,
) -> Tensor<T> {
    let n = batch * latent_dim;
    let data = match mode {
        InitMode::Zero => vec![T::zero(); n],
        InitMode::Gaussian => (0..n).map(|_| T::of(rng.standard_normal())).collect(),
        InitMode::SpikeSlab => {
            let (a1, s1, s2) = (
                prior.alpha1().f64(),
                prior.sigma1_sq().f64().sqrt(),
                prior.sigma2_sq().f64().sqrt(),
            );
            (0..n)
                .map(|_| {
                    let std = if rng.uniform() < a1 { s1 } else { s2 };
                    T::of(rng.normal(0.0, std))
                })
                .collect()
        }
    };
    Tensor::matrix(batch, latent_dim, data).expect("sized above")
}

fn check_inputs<T: Scalar>(z: &Tensor<T>, x: &Tensor<T>, gen: &GeneratorConfig<T>) -> Result<()> {
    let (bz, k) = z.ensure_matrix("latent batch")?;
    let (bx, d) = x.ensure_matrix("image batch")?;
    if k != gen.latent_dim || d != gen.output_dim || bz != bx {
        return Err(Error::dim(format!(
            "latents {:?} and images {:?} do not fit a {}→{} generator",
            z.shape(),
            x.shape(),
            gen.latent_dim,
            gen.output_dim
        )));
    }
    Ok(())
}

/// One update of `z` in place. `step` is only used for error reporting.
#[allow(clippy::too_many_arguments)]
fn step_in_place<T: Scalar>(
    z: &mut Tensor<T>,
    x: &Tensor<T>,
    params: &GeneratorParams<T>,
    coeffs: &StableCoeffs<T>,
    gen: &GeneratorConfig<T>,
    cfg: &InferenceConfig<T>,
    rng: &mut Rng,
    step: usize,
) -> Result<()> {
    let trace = forward_trace(&gen.layers, params, z)?;
    let inv_var = T::one() / (gen.obs_noise_sigma * gen.obs_noise_sigma);
    let residual = Tensor::matrix(
        x.rows(),
        gen.output_dim,
        trace
            .output()
            .data()
            .iter()
            .zip(x.data())
            .map(|(&g, &xv)| (g - xv) * inv_var)
            .collect(),
    )?;
    let (_, recon_grad) = backward(&gen.layers, params, &trace, &residual, false)?;

    let s = cfg.step_size;
    let eta = s * s * T::of(0.5);
    let limit = T::of(DIVERGENCE_LIMIT);
    let k = gen.latent_dim;
    for (idx, (zv, &gr)) in z.data_mut().iter_mut().zip(recon_grad.data()).enumerate() {
        let grad = gr - coeffs.grad(*zv);
        let mut next = *zv - eta * grad;
        if cfg.noise_enabled {
            next += s * T::of(rng.standard_normal());
        }
        if !grad.is_finite() || !next.is_finite() || next.abs() > limit {
            return Err(Error::Divergence { sample: idx / k, step });
        }
        *zv = next;
    }
    Ok(())
}

/// Single update `z ← z - (s²/2)·∂/∂z[objective] + s·ε` (noise only when
/// enabled). The returned objective is evaluated at the new latents.
pub fn inference_step<T: Scalar>(
    z: &LatentBatch<T>,
    x: &Tensor<T>,
    params: &GeneratorParams<T>,
    prior: &PriorParams<T>,
    gen: &GeneratorConfig<T>,
    cfg: &InferenceConfig<T>,
    rng: &mut Rng,
) -> Result<LatentBatch<T>> {
    check_inputs(&z.values, x, gen)?;
    let mut values = z.values.clone();
    step_in_place(&mut values, x, params, &prior.coeffs(), gen, cfg, rng, 0)?;
    let objective = penalized_objective(x, &values, params, prior, gen)?;
    Ok(LatentBatch { values, objective })
}

/// Runs `cfg.steps` updates from the given starting latents.
pub fn infer_from<T: Scalar>(
    z0: Tensor<T>,
    x: &Tensor<T>,
    params: &GeneratorParams<T>,
    prior: &PriorParams<T>,
    gen: &GeneratorConfig<T>,
    cfg: &InferenceConfig<T>,
    rng: &mut Rng,
) -> Result<LatentBatch<T>> {
    cfg.validate()?;
    check_inputs(&z0, x, gen)?;
    let coeffs = prior.coeffs();
    let mut values = z0;
    for step in 0..cfg.steps {
        step_in_place(&mut values, x, params, &coeffs, gen, cfg, rng, step)?;
    }
    let objective = penalized_objective(x, &values, params, prior, gen)?;
    Ok(LatentBatch { values, objective })
}

/// Fresh initialization per `cfg.init_mode`, then `cfg.steps` updates.
pub fn infer_map<T: Scalar>(
    x: &Tensor<T>,
    params: &GeneratorParams<T>,
    prior: &PriorParams<T>,
    gen: &GeneratorConfig<T>,
    cfg: &InferenceConfig<T>,
    rng: &mut Rng,
) -> Result<LatentBatch<T>> {
    let z0 = init_latents(x.rows(), gen.latent_dim, prior, cfg.init_mode, rng);
    infer_from(z0, x, params, prior, gen, cfg, rng)
}

#[cfg(test)]
#[allow(clippy::too_many_arguments)]
mod tests {
    use super::*;
    use crate::ndgrad::{Activation, Layer, LayerSpec, MlpParams};

    fn small_gen() -> GeneratorConfig {
        GeneratorConfig::mlp(4, &[6], 5, 0.3).unwrap()
    }

    fn images(rng: &mut Rng, b: usize, d: usize) -> Tensor {
        Tensor::matrix(b, d, (0..b * d).map(|_| rng.uniform()).collect()).unwrap()
    }

    #[test]
    fn origin_is_fixed_point_with_zero_first_layer() {
        let gen = small_gen();
        let mut params = MlpParams::init(&gen.layers, &mut Rng::new(1));
        for w in params.layers[0].weights.data_mut() {
            *w = 0.0;
        }
        let prior = PriorParams::with_alpha1(0.01).unwrap();
        let x = images(&mut Rng::new(2), 3, 5);
        let z0 = LatentBatch {
            values: Tensor::zeros(&[3, 4]),
            objective: vec![0.0; 3],
        };
        let cfg = InferenceConfig::default();
        let z1 = inference_step(&z0, &x, &params, &prior, &gen, &cfg, &mut Rng::new(3)).unwrap();
        assert!(z1.values.data().iter().all(|&v| v == 0.0));
        let cfg1 = InferenceConfig { steps: 1, ..cfg };
        let out = infer_map(&x, &params, &prior, &gen, &cfg1, &mut Rng::new(3)).unwrap();
        assert!(out.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noise_increment_has_step_size_std() {
        // zero weights and alpha1 = 1 at z = 0: both gradient terms vanish, so
        // each coordinate moves by s·ε only
        let gen = GeneratorConfig::mlp(1000, &[], 2, 0.3).unwrap();
        let params = MlpParams::zeros(&gen.layers);
        let prior = PriorParams::with_alpha1(1.0).unwrap();
        let cfg = InferenceConfig {
            noise_enabled: true,
            ..InferenceConfig::default()
        };
        let x = Tensor::full(&[100, 2], 0.5);
        let z0 = LatentBatch {
            values: Tensor::zeros(&[100, 1000]),
            objective: vec![0.0; 100],
        };
        let z1 = inference_step(&z0, &x, &params, &prior, &gen, &cfg, &mut Rng::new(4)).unwrap();
        let n = z1.values.len() as f64;
        let mean = z1.values.sum() / n;
        let std = (z1.values.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 0.1).abs() <= 0.003, "std {std}");
    }

    /// Objective and gradient descent written out with explicit loops for a
    /// linear generator `G(z) = zW + b` under a standard normal prior.
    fn quadratic_oracle(z0: &[f64], x: &[f64], w: &[f64], b: &[f64], k: usize, d: usize, sigma: f64, eta: f64, steps: usize) -> Vec<(Vec<f64>, f64)> {
        let objective = |z: &[f64]| {
            let mut v = 0.0;
            for j in 0..d {
                let g = b[j] + (0..k).map(|i| z[i] * w[i * d + j]).sum::<f64>();
                v += (x[j] - g).powi(2) / (2.0 * sigma * sigma);
            }
            v + z.iter().map(|zi| 0.5 * zi * zi + 0.5 * (2.0 * std::f64::consts::PI).ln()).sum::<f64>()
        };
        let mut z = z0.to_vec();
        let mut trace = Vec::new();
        for _ in 0..steps {
            let r: Vec<f64> = (0..d)
                .map(|j| (b[j] + (0..k).map(|i| z[i] * w[i * d + j]).sum::<f64>() - x[j]) / (sigma * sigma))
                .collect();
            let grad: Vec<f64> = (0..k).map(|i| (0..d).map(|j| r[j] * w[i * d + j]).sum::<f64>() + z[i]).collect();
            for i in 0..k {
                z[i] -= eta * grad[i];
            }
            trace.push((z.clone(), objective(&z)));
        }
        trace
    }

    #[test]
    fn linear_gaussian_matches_closed_form_descent() {
        let (k, d, sigma) = (3, 4, 0.3);
        let gen = GeneratorConfig {
            latent_dim: k,
            layers: vec![LayerSpec::new(k, d, Activation::Identity)],
            obs_noise_sigma: sigma,
            output_dim: d,
        };
        let mut rng = Rng::new(5);
        let w: Vec<f64> = (0..k * d).map(|_| rng.normal(0.0, 0.3)).collect();
        let b: Vec<f64> = (0..d).map(|_| rng.normal(0.0, 0.1)).collect();
        let x: Vec<f64> = (0..d).map(|_| rng.uniform()).collect();
        let params = MlpParams {
            layers: vec![Layer {
                weights: Tensor::matrix(k, d, w.clone()).unwrap(),
                bias: Tensor::vector(b.clone()),
            }],
        };
        let prior = PriorParams::with_alpha1(1.0).unwrap();
        let cfg = InferenceConfig::default();
        let oracle = quadratic_oracle(&[0.0; 3], &x, &w, &b, k, d, sigma, 0.005, 30);

        let xt = Tensor::matrix(1, d, x).unwrap();
        let mut z = LatentBatch {
            values: Tensor::zeros(&[1, k]),
            objective: penalized_objective(&xt, &Tensor::zeros(&[1, k]), &params, &prior, &gen).unwrap(),
        };
        let mut rng = Rng::new(0);
        for (zo, fo) in &oracle {
            let prev = z.objective[0];
            z = inference_step(&z, &xt, &params, &prior, &gen, &cfg, &mut rng).unwrap();
            assert!(z.objective[0] <= prev);
            for (a, e) in z.values.data().iter().zip(zo) {
                assert!((a - e).abs() <= 1e-10);
            }
            assert!((z.objective[0] - fo).abs() <= 1e-10);
        }
    }

    #[test]
    fn deterministic_without_noise() {
        let gen = small_gen();
        let params = MlpParams::init(&gen.layers, &mut Rng::new(6));
        let prior = PriorParams::with_alpha1(0.05).unwrap();
        let x = images(&mut Rng::new(7), 4, 5);
        let cfg = InferenceConfig::default();
        let a = infer_map(&x, &params, &prior, &gen, &cfg, &mut Rng::new(8)).unwrap();
        let b = infer_map(&x, &params, &prior, &gen, &cfg, &mut Rng::new(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_equivariance() {
        let gen = small_gen();
        let params = MlpParams::init(&gen.layers, &mut Rng::new(9));
        let prior = PriorParams::with_alpha1(0.05).unwrap();
        let x = images(&mut Rng::new(10), 5, 5);
        let cfg = InferenceConfig::default();
        let a = infer_map(&x, &params, &prior, &gen, &cfg, &mut Rng::new(0)).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let b = infer_map(&x.select_rows(&perm), &params, &prior, &gen, &cfg, &mut Rng::new(0)).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for (u, v) in b.values.row(i).iter().zip(a.values.row(p)) {
                assert!((u - v).abs() <= 1e-12);
            }
            assert!((b.objective[i] - a.objective[p]).abs() <= 1e-12);
        }
    }

    #[test]
    fn divergence_reports_sample() {
        let gen = GeneratorConfig {
            latent_dim: 2,
            layers: vec![LayerSpec::new(2, 3, Activation::Identity)],
            obs_noise_sigma: 0.3,
            output_dim: 3,
        };
        let params = MlpParams {
            layers: vec![Layer {
                weights: Tensor::full(&[2, 3], 1e4),
                bias: Tensor::zeros(&[3]),
            }],
        };
        let prior = PriorParams::with_alpha1(1.0).unwrap();
        let mut x = Tensor::zeros(&[2, 3]);
        x.row_mut(1).copy_from_slice(&[1.0, 1.0, 1.0]);
        let cfg = InferenceConfig::default();
        let err = infer_map(&x, &params, &prior, &gen, &cfg, &mut Rng::new(0)).unwrap_err();
        assert!(matches!(err, Error::Divergence { sample: 1, .. }), "{err:?}");
    }

    #[test]
    fn init_modes() {
        let prior = PriorParams::with_alpha1(0.5).unwrap();
        let mut rng = Rng::new(11);
        assert_eq!(init_latents::<f64>(2, 3, &prior, InitMode::Zero, &mut rng).max_abs(), 0.0);
        let g = init_latents::<f64>(200, 50, &prior, InitMode::Gaussian, &mut rng);
        let var = g.data().iter().map(|v| v * v).sum::<f64>() / g.len() as f64;
        assert!((var - 1.0).abs() < 0.05);
        let s = init_latents::<f64>(200, 50, &prior, InitMode::SpikeSlab, &mut rng);
        let var = s.data().iter().map(|v| v * v).sum::<f64>() / s.len() as f64;
        // mixture variance 0.5·1 + 0.5·0.1
        assert!((var - 0.55).abs() < 0.04, "{var}");
        for m in [InitMode::Zero, InitMode::Gaussian, InitMode::SpikeSlab] {
            assert_eq!(InitMode::parse(m.name()), Some(m));
        }
    }

    #[test]
    fn rejects_zero_steps() {
        let gen = small_gen();
        let params = MlpParams::zeros(&gen.layers);
        let prior = PriorParams::with_alpha1(0.5).unwrap();
        let cfg = InferenceConfig {
            steps: 0,
            ..InferenceConfig::default()
        };
        let x = Tensor::zeros(&[1, 5]);
        assert!(matches!(
            infer_map(&x, &params, &prior, &gen, &cfg, &mut Rng::new(0)),
            Err(Error::Parameter(_))
        ));
    }
}
