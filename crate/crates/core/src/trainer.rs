//! Alternating training loop: per batch, infer latents from a cold start,
//! then take one Adam step on the generator. The sparsity level is decayed at
//! the start of every epoch and injected as the prior's live `alpha1`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::RngCore;

use crate::checkpoint::Checkpoint;
use crate::data::{batch_iter, IdxDataset};
use crate::error::{Error, Result};
use crate::generator::{adam_step, decode, param_grad, AdamState, GeneratorConfig};
use crate::inference::{infer_from, init_latents, InferenceConfig};
use crate::metrics::active_fraction;
use crate::ndgrad::{MlpParams, Rng};
use crate::scalar::Scalar;
use crate::ssprior::PriorParams;

/// Threshold on `|z_k|` used for the per-epoch active fraction.
pub const ACTIVE_THRESHOLD: f64 = 0.2;

pub const METRICS_HEADER: &str = "epoch,alpha_c,loglik,mse,active_fraction";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig<T = f64> {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: T,
    pub sparsity_initial: T,
    pub sparsity_decay: T,
    pub sparsity_threshold: T,
    pub seed: u64,
    /// Skip the decay and hold the prior at `sparsity_threshold` from the
    /// first epoch.
    pub constant_sparsity: bool,
    /// Add Langevin noise during latent inference.
    pub langevin_noise: bool,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 100,
            lr: T::of(1e-4),
            sparsity_initial: T::one(),
            sparsity_decay: T::of(0.033),
            sparsity_threshold: T::of(0.01),
            seed: 0,
            constant_sparsity: false,
            langevin_noise: false,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let (a0, at) = (self.sparsity_initial, self.sparsity_threshold);
        if !(T::zero() < at && at <= a0 && a0 <= T::one()) {
            return Err(Error::param(format!(
                "need 0 < sparsity_threshold ({at}) <= sparsity_initial ({a0}) <= 1"
            )));
        }
        if !(self.sparsity_decay >= T::zero()) || !self.sparsity_decay.is_finite() {
            return Err(Error::param("sparsity_decay must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size must be at least 1"));
        }
        if !(self.lr > T::zero()) || !self.lr.is_finite() {
            return Err(Error::param("learning rate must be positive"));
        }
        Ok(())
    }

    /// Sparsity level before the first epoch's decay.
    pub fn starting_alpha(&self) -> T {
        if self.constant_sparsity {
            self.sparsity_threshold
        } else {
            self.sparsity_initial
        }
    }

    /// Inference settings used during training.
    pub fn training_inference(&self, base: &InferenceConfig<T>) -> InferenceConfig<T> {
        InferenceConfig {
            noise_enabled: self.langevin_noise,
            ..*base
        }
    }
}

/// One decay step, clamped so the level never undershoots the threshold.
pub fn decay_sparsity<T: Scalar>(alpha_c: T, gamma: T, alpha_t: T) -> T {
    if alpha_c > alpha_t {
        (alpha_c - gamma).max(alpha_t)
    } else {
        alpha_c
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics<T = f64> {
    pub epoch: usize,
    pub alpha_c: T,
    /// Mean complete-data log-likelihood at the inferred latents.
    pub loglik: T,
    /// Mean per-pixel squared reconstruction error.
    pub mse: T,
    pub active_fraction: T,
}

impl<T: Scalar> EpochMetrics<T> {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?}",
            self.epoch,
            self.alpha_c.f64(),
            self.loglik.f64(),
            self.mse.f64(),
            self.active_fraction.f64()
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport<T = f64> {
    pub metrics: EpochMetrics<T>,
    pub batches: usize,
    /// Hash of every starting latent buffer used this epoch.
    pub init_checksum: u64,
}

/// Random stream layout under one master seed: stream 0 initializes the
/// weights, epoch `e` (1-based) shuffles with stream `2e` and runs inference
/// with stream `2e + 1`.
pub fn init_stream(seed: u64) -> Rng {
    Rng::stream(seed, 0)
}

fn epoch_streams(seed: u64, epoch: usize) -> (u64, Rng) {
    let e = epoch as u64;
    let shuffle_seed = Rng::stream(seed, 2 * e).next_u64();
    (shuffle_seed, Rng::stream(seed, 2 * e + 1))
}

/// Fresh training state: initialized weights, zero optimizer moments, and
/// the starting sparsity level.
pub fn init_checkpoint<T: Scalar>(
    generator: GeneratorConfig<T>,
    sigma1_sq: T,
    sigma2_sq: T,
    cfg: &TrainConfig<T>,
) -> Result<Checkpoint<T>> {
    generator.validate()?;
    cfg.validate()?;
    let prior = PriorParams::new(cfg.starting_alpha(), sigma1_sq, sigma2_sq)?;
    let params = MlpParams::init(&generator.layers, &mut init_stream(cfg.seed));
    let adam = AdamState::new(&params);
    Ok(Checkpoint {
        generator,
        prior,
        params,
        adam,
        epoch: 0,
        seed: cfg.seed,
    })
}

fn fnv1a<T: Scalar>(mut h: u64, values: &[T]) -> u64 {
    for v in values {
        for byte in v.f64().to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Runs one epoch and advances `state` in place.
pub fn train_epoch<T: Scalar>(
    dataset: &IdxDataset<T>,
    state: &mut Checkpoint<T>,
    cfg: &TrainConfig<T>,
    inference: &InferenceConfig<T>,
) -> Result<EpochReport<T>> {
    if dataset.is_empty() {
        return Err(Error::Training("dataset is empty".into()));
    }
    cfg.validate()?;
    let inf = cfg.training_inference(inference);
    inf.validate()?;
    let gen = state.generator.clone();
    if dataset.pixel_count() != gen.output_dim {
        return Err(Error::dim(format!(
            "dataset images have {} pixels, generator emits {}",
            dataset.pixel_count(),
            gen.output_dim
        )));
    }

    let epoch = state.epoch + 1;
    let alpha_c = if cfg.constant_sparsity {
        state.prior.alpha1()
    } else {
        decay_sparsity(state.prior.alpha1(), cfg.sparsity_decay, cfg.sparsity_threshold)
    };
    let prior = state.prior.set_alpha1(alpha_c)?;

    let (shuffle_seed, mut rng) = epoch_streams(state.seed, epoch);
    let batches = batch_iter(dataset, cfg.batch_size, shuffle_seed, true)?;
    let n_batches = batches.len();
    let mut params = state.params.clone();
    let mut adam = state.adam.clone();
    let (mut ll_sum, mut mse_sum, mut active_sum) = (0.0f64, 0.0f64, 0.0f64);
    let mut samples = 0usize;
    let mut checksum = 0xcbf2_9ce4_8422_2325u64;

    for (bi, batch) in batches.enumerate() {
        let x = &batch.pixels;
        let z0 = init_latents(x.rows(), gen.latent_dim, &prior, inf.init_mode, &mut rng);
        checksum = fnv1a(checksum, z0.data());
        let z = infer_from(z0, x, &params, &prior, &gen, &inf, &mut rng).map_err(|e| match e {
            Error::Divergence { sample, step } => Error::TrainingDivergence {
                epoch,
                batch: bi,
                sample,
                step,
            },
            other => other,
        })?;

        let mean = decode(&z.values, &params, &gen)?;
        let norm = gen.log_normalizer().f64();
        ll_sum += z.objective.iter().map(|o| -o.f64() - norm).sum::<f64>();
        mse_sum += x
            .data()
            .iter()
            .zip(mean.data())
            .map(|(&a, &g)| (a - g).f64().powi(2))
            .sum::<f64>()
            / gen.output_dim as f64;
        active_sum += active_fraction(&z.values, T::of(ACTIVE_THRESHOLD))?.f64() * x.rows() as f64;
        samples += x.rows();

        let mut grads = param_grad(x, &z.values, &params, &gen)?;
        grads.scale(-T::one());
        adam_step(&mut params, &grads, &mut adam, cfg.lr)?;
        if !params.is_finite() {
            return Err(Error::Training(format!(
                "non-finite generator weights after epoch {epoch} batch {bi}"
            )));
        }
    }

    state.params = params;
    state.adam = adam;
    state.prior = prior;
    state.epoch = epoch;
    let s = samples.max(1) as f64;
    Ok(EpochReport {
        metrics: EpochMetrics {
            epoch,
            alpha_c,
            loglik: T::of(ll_sum / s),
            mse: T::of(mse_sum / s),
            active_fraction: T::of(active_sum / s),
        },
        batches: n_batches,
        init_checksum: checksum,
    })
}

/// CSV sink for per-epoch metrics; every row is flushed as it is written.
pub struct MetricsLog {
    out: BufWriter<File>,
}

impl MetricsLog {
    /// Creates the file (truncating) and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_HEADER}")?;
        out.flush()?;
        Ok(MetricsLog { out })
    }

    /// Opens an existing log for appending, as when resuming.
    pub fn append(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Self::create(path);
        }
        let file = std::fs::OpenOptions::new().append(true).open(path)?;
        Ok(MetricsLog { out: BufWriter::new(file) })
    }

    pub fn write<T: Scalar>(&mut self, m: &EpochMetrics<T>) -> Result<()> {
        writeln!(self.out, "{}", m.csv_row())?;
        self.out.flush()?;
        Ok(())
    }
}

/// Runs epochs until `state.epoch == cfg.epochs`, calling `on_epoch` after each.
pub fn train<T: Scalar>(
    dataset: &IdxDataset<T>,
    state: &mut Checkpoint<T>,
    cfg: &TrainConfig<T>,
    inference: &InferenceConfig<T>,
    mut on_epoch: impl FnMut(&EpochReport<T>, &Checkpoint<T>) -> Result<()>,
) -> Result<Vec<EpochReport<T>>> {
    let mut reports = Vec::new();
    while state.epoch < cfg.epochs {
        let report = train_epoch(dataset, state, cfg, inference)?;
        on_epoch(&report, state)?;
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::Tensor;

    fn toy_data(n: usize, d: usize, seed: u64) -> IdxDataset {
        let mut rng = Rng::new(seed);
        let px = (0..n * d).map(|_| (rng.uniform() * 255.0).floor() / 255.0).collect();
        IdxDataset::new(Tensor::matrix(n, d, px).unwrap(), None, 1, d).unwrap()
    }

    fn toy_setup(seed: u64) -> (IdxDataset, Checkpoint, TrainConfig, InferenceConfig) {
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            lr: 1e-2,
            seed,
            ..TrainConfig::default()
        };
        let gen = GeneratorConfig::mlp(3, &[5], 6, 0.3).unwrap();
        let state = init_checkpoint(gen, 1.0, 0.1, &cfg).unwrap();
        (toy_data(10, 6, 9), state, cfg, InferenceConfig { steps: 5, ..Default::default() })
    }

    #[test]
    fn decay_examples() {
        assert!((decay_sparsity(1.0f64, 0.033, 0.01) - 0.967).abs() < 1e-15);
        assert_eq!(decay_sparsity(0.02, 0.033, 0.01), 0.01);
        assert_eq!(decay_sparsity(0.01, 0.033, 0.01), 0.01);
        let mut a = 1.0;
        for _ in 0..30 {
            a = decay_sparsity(a, 0.033, 0.01);
        }
        assert_eq!(a, 0.01);
    }

    #[test]
    fn schedule_reaches_threshold_at_epoch_30() {
        let cfg = TrainConfig::<f64>::default();
        let epochs = ((cfg.sparsity_initial - cfg.sparsity_threshold) / cfg.sparsity_decay).ceil() as usize;
        assert_eq!(epochs, 30);
        let mut a = cfg.sparsity_initial;
        for e in 1..=40 {
            let next = decay_sparsity(a, cfg.sparsity_decay, cfg.sparsity_threshold);
            assert!(next <= a && next >= cfg.sparsity_threshold);
            assert_eq!(next == cfg.sparsity_threshold, e >= 30, "epoch {e}: {next}");
            a = next;
        }
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::<f64>::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { sparsity_threshold: 0.0, ..ok }.validate().is_err());
        assert!(TrainConfig { sparsity_initial: 1.5, ..ok }.validate().is_err());
        assert!(TrainConfig { sparsity_threshold: 0.5, sparsity_initial: 0.4, ..ok }.validate().is_err());
        assert!(TrainConfig { sparsity_decay: -0.1, ..ok }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn data_at_generator_mean_is_stationary() {
        let (_, mut state, cfg, inf) = toy_setup(3);
        let z = Tensor::zeros(&[4, 3]);
        let x = decode(&z, &state.params, &state.generator).unwrap();
        let ds = IdxDataset::new(x, None, 1, 6).unwrap();
        let before = state.params.clone();
        for _ in 0..3 {
            train_epoch(&ds, &mut state, &cfg, &inf).unwrap();
        }
        assert!(state.params.max_abs_diff(&before) < 1e-6);
    }

    #[test]
    fn deterministic_under_seed() {
        let run = || {
            let (ds, mut state, cfg, inf) = toy_setup(5);
            let r = train(&ds, &mut state, &cfg, &inf, |_, _| Ok(())).unwrap();
            (r, state)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (ds, mut full, cfg, inf) = toy_setup(11);
        let reports = train(&ds, &mut full, &cfg, &inf, |_, _| Ok(())).unwrap();

        let (_, mut half, _, _) = toy_setup(11);
        train_epoch(&ds, &mut half, &cfg, &inf).unwrap();
        let mut resumed = Checkpoint::<f64>::from_bytes(&half.to_bytes()).unwrap();
        let second = train_epoch(&ds, &mut resumed, &cfg, &inf).unwrap();
        assert_eq!(second, reports[1]);
        assert_eq!(resumed, full);
    }

    #[test]
    fn alpha_schedule_and_cold_start() {
        let (ds, mut state, cfg, inf) = toy_setup(2);
        let cfg = TrainConfig { epochs: 35, ..cfg };
        let reports = train(&ds, &mut state, &cfg, &inf, |_, _| Ok(())).unwrap();
        let zero_sum = fnv1a(0xcbf2_9ce4_8422_2325u64, &[0.0f64; 2 * 4 * 3]);
        let mut prev = 1.0;
        for r in &reports {
            assert!(r.metrics.alpha_c <= prev && r.metrics.alpha_c >= 0.01);
            prev = r.metrics.alpha_c;
            // Zero init: every epoch starts from the same all-zero buffers.
            assert_eq!(r.init_checksum, zero_sum);
            assert_eq!(r.batches, 2);
        }
        assert!((reports[0].metrics.alpha_c - 0.967f64).abs() < 1e-12);
        assert!(reports[28].metrics.alpha_c > 0.01);
        assert_eq!(reports[29].metrics.alpha_c, 0.01);
    }

    #[test]
    fn constant_sparsity_holds_threshold() {
        let (ds, _, cfg, inf) = toy_setup(4);
        let cfg = TrainConfig { constant_sparsity: true, sparsity_threshold: 0.2, ..cfg };
        let mut state = init_checkpoint(GeneratorConfig::mlp(3, &[5], 6, 0.3).unwrap(), 1.0, 0.1, &cfg).unwrap();
        let reports = train(&ds, &mut state, &cfg, &inf, |_, _| Ok(())).unwrap();
        assert!(reports.iter().all(|r| r.metrics.alpha_c == 0.2));
    }

    #[test]
    fn divergence_carries_context() {
        let (ds, mut state, cfg, _) = toy_setup(6);
        let inf = InferenceConfig { steps: 400, step_size: 50.0, ..Default::default() };
        match train_epoch(&ds, &mut state, &cfg, &inf) {
            Err(Error::TrainingDivergence { epoch, batch, .. }) => {
                assert_eq!((epoch, batch), (1, 0));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn metrics_log_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut log = MetricsLog::create(&path).unwrap();
        log.write(&EpochMetrics { epoch: 1, alpha_c: 0.967, loglik: -1.5, mse: 0.25, active_fraction: 0.5 })
            .unwrap();
        drop(log);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "epoch,alpha_c,loglik,mse,active_fraction\n1,0.967,-1.5,0.25,0.5\n");
    }
}
