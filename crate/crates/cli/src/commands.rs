//! Experiment drivers behind each subcommand. Every driver reads a validated
//! [`RunConfig`], writes its artifacts under the output directory, and returns
//! the headline numbers so callers can check them without parsing files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ssgen::checkpoint::Checkpoint;
use ssgen::data::{corrupt_gaussian, load_idx, IdxDataset};
use ssgen::generator::decode;
use ssgen::inference::infer_map;
use ssgen::metrics::{
    active_fraction, class_activation_map, eval_classifier, export_image_grid, mean_psnr, mean_ssim,
    train_classifier, train_latent_classifier, write_latent_csv, ActivationMap,
};
use ssgen::ndgrad::{backprop_mlp, forward, Activation, LayerSpec, MlpParams, Rng, Tensor};
use ssgen::ssprior::{
    density, grad_log_density_direct, grad_log_density_posterior, log_density, posterior_component, PriorParams,
};
use ssgen::trainer::{init_checkpoint, train as run_training, EpochMetrics, MetricsLog};

use crate::config::RunConfig;
use crate::error::CliError;

/// Random stream ids for evaluation, disjoint from the training streams
/// (which use ids `0..=2·epochs+1`).
const EVAL_STREAM: u64 = 1 << 40;
const CORRUPT_STREAM: u64 = 2 << 40;

/// Rows inferred per call during evaluation.
const EVAL_CHUNK: usize = 500;

/// Fixed output subdirectories.
pub struct Layout {
    pub root: PathBuf,
    pub checkpoints: PathBuf,
    pub grids: PathBuf,
    pub tables: PathBuf,
    pub logs: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Layout {
            root: root.to_path_buf(),
            checkpoints: root.join("checkpoints"),
            grids: root.join("grids"),
            tables: root.join("tables"),
            logs: root.join("logs"),
        }
    }

    /// Creates the directories and echoes the effective config as `config.txt`.
    pub fn prepare(cfg: &RunConfig) -> Result<Self, CliError> {
        let layout = Layout::new(&cfg.out_dir());
        for d in [&layout.checkpoints, &layout.grids, &layout.tables, &layout.logs] {
            fs::create_dir_all(d)?;
        }
        fs::write(layout.root.join("config.txt"), cfg.to_text())?;
        Ok(layout)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

pub fn load_split(cfg: &RunConfig, split: Split, labels: bool) -> Result<IdxDataset, CliError> {
    let dir = cfg.data_dir();
    let images = dir.join(format!("{}-images-idx3-ubyte", split.name()));
    let label_path = dir.join(format!("{}-labels-idx1-ubyte", split.name()));
    if !images.exists() {
        return Err(CliError::Data(format!("missing {}", images.display())));
    }
    if labels && !label_path.exists() {
        return Err(CliError::Data(format!("missing {}", label_path.display())));
    }
    let ds = load_idx(&images, labels.then_some(label_path.as_path())).map_err(|e| match e {
        ssgen::Error::Io(io) => CliError::Data(format!("{}: {io}", images.display())),
        other => CliError::Data(other.to_string()),
    })?;
    let limit: usize = cfg.get(match split {
        Split::Train => "train_limit",
        Split::Test => "test_limit",
    })?;
    let ds = if limit > 0 { ds.head(limit) } else { ds };
    if ds.is_empty() {
        return Err(CliError::Data(format!("{} split is empty", split.name())));
    }
    Ok(ds)
}

/// Loads the evaluation checkpoint and checks it against the configured shape.
pub fn load_model(cfg: &RunConfig, output_dim: usize) -> Result<Checkpoint, CliError> {
    let path = cfg.checkpoint_path();
    if !path.exists() {
        return Err(CliError::Checkpoint(format!("missing {}", path.display())));
    }
    let ckpt = Checkpoint::load(&path).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    check_shape(cfg, &ckpt, output_dim)?;
    Ok(ckpt)
}

fn check_shape(cfg: &RunConfig, ckpt: &Checkpoint, output_dim: usize) -> Result<(), CliError> {
    let want = cfg.generator(output_dim)?;
    let have = &ckpt.generator;
    if have.latent_dim != want.latent_dim {
        return Err(CliError::Config(format!(
            "checkpoint has latent_dim {} but config asks for {}",
            have.latent_dim, want.latent_dim
        )));
    }
    if have.layers != want.layers || have.obs_noise_sigma != want.obs_noise_sigma {
        return Err(CliError::Config(format!(
            "checkpoint generator {} (sigma {}) differs from config {} (sigma {})",
            have.layers_string(),
            have.obs_noise_sigma,
            want.layers_string(),
            want.obs_noise_sigma
        )));
    }
    Ok(())
}

/// MAP latents for every row of `x`, inferred in chunks.
pub fn infer_all(cfg: &RunConfig, model: &Checkpoint, x: &Tensor, stream: u64) -> Result<Tensor, CliError> {
    let inf = cfg.inference()?;
    let mut rng = Rng::stream(model.seed, EVAL_STREAM + stream);
    let k = model.generator.latent_dim;
    let mut out = Vec::with_capacity(x.rows() * k);
    let idx: Vec<usize> = (0..x.rows()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let z = infer_map(&x.select_rows(chunk), &model.params, &model.prior, &model.generator, &inf, &mut rng)?;
        out.extend_from_slice(z.values.data());
    }
    Ok(Tensor::matrix(x.rows(), k, out)?)
}

fn grid_shape(n: usize) -> (usize, usize) {
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    (n.div_ceil(cols).max(1), cols)
}

fn export_head(images: &Tensor, ds: &IdxDataset, count: usize, path: &Path) -> Result<(), CliError> {
    let n = count.min(images.rows()).max(1);
    let idx: Vec<usize> = (0..n).collect();
    let (r, c) = grid_shape(n);
    export_image_grid(&images.select_rows(&idx), ds.rows, ds.cols, r, c, path)?;
    Ok(())
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

fn labels_of(ds: &IdxDataset) -> Result<&[u8], CliError> {
    ds.labels
        .as_deref()
        .ok_or_else(|| CliError::Data("labels are required for this command".into()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub epochs: Vec<EpochMetrics>,
    pub checkpoint: PathBuf,
}

pub fn train(cfg: &RunConfig) -> Result<TrainSummary, CliError> {
    let layout = Layout::prepare(cfg)?;
    let ds = load_split(cfg, Split::Train, false)?;
    let tc = cfg.train()?;
    let inf = cfg.inference()?;
    let gen = cfg.generator(ds.pixel_count())?;
    let latest = layout.checkpoints.join("latest.ckpt");
    let log_path = layout.logs.join("metrics.csv");

    let resume = cfg.get::<bool>("resume")? && latest.exists();
    let (mut state, mut log) = if resume {
        let ckpt = Checkpoint::load(&latest).map_err(|e| CliError::Checkpoint(format!("{}: {e}", latest.display())))?;
        check_shape(cfg, &ckpt, ds.pixel_count())?;
        if ckpt.seed != tc.seed {
            return Err(CliError::Config(format!("checkpoint seed {} differs from config seed {}", ckpt.seed, tc.seed)));
        }
        (ckpt, MetricsLog::append(&log_path)?)
    } else {
        let s1 = cfg.get("sigma1_sq")?;
        let s2 = cfg.get("sigma2_sq")?;
        let state = init_checkpoint(gen, s1, s2, &tc).map_err(|e| CliError::Config(e.to_string()))?;
        (state, MetricsLog::create(&log_path)?)
    };

    let reports = run_training(&ds, &mut state, &tc, &inf, |r, s| {
        log.write(&r.metrics)?;
        s.save(&latest)?;
        let m = &r.metrics;
        eprintln!(
            "epoch {:>3}  alpha {:.3}  loglik {:.2}  mse {:.5}  active {:.3}",
            m.epoch, m.alpha_c, m.loglik, m.mse, m.active_fraction
        );
        Ok(())
    })?;
    let final_path = layout.checkpoints.join("final.ckpt");
    state.save(&final_path)?;
    state.save(&latest)?;
    Ok(TrainSummary {
        epochs: reports.into_iter().map(|r| r.metrics).collect(),
        checkpoint: final_path,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconstructSummary {
    pub images: usize,
    pub mean_psnr: f64,
    pub mean_mse: f64,
    pub active_fraction: f64,
}

pub fn reconstruct(cfg: &RunConfig) -> Result<ReconstructSummary, CliError> {
    let layout = Layout::prepare(cfg)?;
    let ds = load_split(cfg, Split::Test, false)?;
    let model = load_model(cfg, ds.pixel_count())?;
    let z = infer_all(cfg, &model, &ds.images, 0)?;
    let recon = decode(&z, &model.params, &model.generator)?;
    let mse = ds.images.data().iter().zip(recon.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / ds.images.len() as f64;
    let summary = ReconstructSummary {
        images: ds.len(),
        mean_psnr: mean_psnr(&ds.images, &recon)?,
        mean_mse: mse,
        active_fraction: active_fraction(&z, cfg.get("active_threshold")?)?,
    };
    fs::write(
        layout.tables.join("reconstruct.csv"),
        format!(
            "images,mean_psnr_db,mean_mse,active_fraction\n{},{},{},{}\n",
            summary.images,
            f(summary.mean_psnr),
            f(summary.mean_mse),
            f(summary.active_fraction)
        ),
    )?;
    let count = cfg.get("grid_images")?;
    export_head(&ds.images, &ds, count, &layout.grids.join("reconstruct_original.pgm"))?;
    export_head(&recon, &ds, count, &layout.grids.join("reconstruct_model.pgm"))?;
    Ok(summary)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenoiseRow {
    pub sigma: f64,
    /// SSIM between the corrupted input and its reconstruction.
    pub ssim_noisy: f64,
    /// SSIM between the clean image and the reconstruction of its corrupted copy.
    pub ssim_clean: f64,
    pub psnr_clean: f64,
}

fn corrupted(ds: &IdxDataset, sigma: f64, seed: u64, stream: u64) -> Result<Tensor, CliError> {
    let mut rng = Rng::stream(seed, CORRUPT_STREAM + stream);
    Ok(corrupt_gaussian(&ds.all(), sigma, &mut rng)?.pixels)
}

pub fn denoise(cfg: &RunConfig) -> Result<Vec<DenoiseRow>, CliError> {
    let layout = Layout::prepare(cfg)?;
    let ds = load_split(cfg, Split::Test, false)?;
    let model = load_model(cfg, ds.pixel_count())?;
    let seed: u64 = cfg.get("seed")?;
    let count = cfg.get("grid_images")?;
    let mut rows = Vec::new();
    let mut table = String::from("sigma,ssim_noisy_recon,ssim_clean_recon,psnr_clean_recon\n");
    for (i, sigma) in cfg.list("noise_levels")?.into_iter().enumerate() {
        let noisy = corrupted(&ds, sigma, seed, i as u64)?;
        let z = infer_all(cfg, &model, &noisy, 1 + i as u64)?;
        let recon = decode(&z, &model.params, &model.generator)?;
        let row = DenoiseRow {
            sigma,
            ssim_noisy: mean_ssim(&noisy, &recon, ds.rows, ds.cols)?,
            ssim_clean: mean_ssim(&ds.images, &recon, ds.rows, ds.cols)?,
            psnr_clean: mean_psnr(&ds.images, &recon)?,
        };
        writeln!(table, "{},{},{},{}", f(sigma), f(row.ssim_noisy), f(row.ssim_clean), f(row.psnr_clean)).unwrap();
        export_head(&noisy, &ds, count, &layout.grids.join(format!("denoise_{sigma}_noisy.pgm")))?;
        export_head(&recon, &ds, count, &layout.grids.join(format!("denoise_{sigma}_model.pgm")))?;
        rows.push(row);
    }
    fs::write(layout.tables.join("denoise.csv"), table)?;
    Ok(rows)
}

/// Values a traversed coordinate takes.
pub fn traversal_values() -> Vec<f64> {
    (0..8).map(|i| -3.0 + 6.0 * i as f64 / 7.0).collect()
}

/// For each chosen test image, varies its most active coordinates one at a
/// time. Each grid row starts with the plain reconstruction, followed by the
/// eight traversal steps.
pub fn traverse(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let layout = Layout::prepare(cfg)?;
    let ds = load_split(cfg, Split::Test, false)?;
    let model = load_model(cfg, ds.pixel_count())?;
    let samples = cfg.get::<usize>("traverse_samples")?.min(ds.len());
    let dims: usize = cfg.get("traverse_dims")?;
    let threshold: f64 = cfg.get("active_threshold")?;
    let idx: Vec<usize> = (0..samples).collect();
    let z = infer_all(cfg, &model, &ds.images.select_rows(&idx), 0)?;
    let values = traversal_values();
    let mut table = String::from("sample,row,dim,inferred_value\n");
    let mut paths = Vec::new();
    for s in 0..samples {
        let row = z.row(s);
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()).then(a.cmp(&b)));
        let active = order.iter().filter(|&&d| row[d].abs() > threshold).count().max(1);
        let chosen = &order[..dims.min(active).max(1)];
        let mut codes = Vec::new();
        for (r, &d) in chosen.iter().enumerate() {
            writeln!(table, "{s},{r},{d},{}", f(row[d])).unwrap();
            codes.extend_from_slice(row);
            for &v in &values {
                let mut zz = row.to_vec();
                zz[d] = v;
                codes.extend(zz);
            }
        }
        let n = chosen.len() * (values.len() + 1);
        let decoded = decode(&Tensor::matrix(n, row.len(), codes)?, &model.params, &model.generator)?;
        let path = layout.grids.join(format!("traverse_{s}.pgm"));
        export_image_grid(&decoded, ds.rows, ds.cols, chosen.len(), values.len() + 1, &path)?;
        paths.push(path);
    }
    fs::write(layout.tables.join("traverse.csv"), table)?;
    Ok(paths)
}

pub fn heatmap(cfg: &RunConfig) -> Result<ActivationMap, CliError> {
    let layout = Layout::prepare(cfg)?;
    let ds = load_split(cfg, Split::Test, true)?;
    let model = load_model(cfg, ds.pixel_count())?;
    let z = infer_all(cfg, &model, &ds.images, 0)?;
    let map = class_activation_map(&z, labels_of(&ds)?, cfg.get("active_threshold")?, 10)?;
    fs::write(layout.tables.join("heatmap.csv"), map.to_csv())?;
    let k = model.generator.latent_dim;
    let mut pixels = Vec::with_capacity(10 * k);
    for row in &map.rows {
        match row {
            Some(r) => pixels.extend_from_slice(r),
            None => pixels.extend(std::iter::repeat_n(0.0, k)),
        }
    }
    export_image_grid(&Tensor::matrix(1, 10 * k, pixels)?, 10, k, 1, 1, &layout.grids.join("heatmap.pgm"))?;
    Ok(map)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatentAccuracy {
    pub latent_dim: usize,
    pub train_images: usize,
    pub test_images: usize,
    pub accuracy: f64,
}

fn classifier_error(e: ssgen::Error) -> CliError {
    match e {
        ssgen::Error::Training(m) => CliError::Data(m),
        other => other.into(),
    }
}

pub fn classify_latent(cfg: &RunConfig) -> Result<LatentAccuracy, CliError> {
    let layout = Layout::prepare(cfg)?;
    let train_ds = load_split(cfg, Split::Train, true)?;
    let n: usize = cfg.get("classifier_train")?;
    let train_ds = if n > 0 { train_ds.head(n) } else { train_ds };
    let test_ds = load_split(cfg, Split::Test, true)?;
    let model = load_model(cfg, train_ds.pixel_count())?;
    let z_train = infer_all(cfg, &model, &train_ds.images, 10)?;
    let z_test = infer_all(cfg, &model, &test_ds.images, 11)?;
    let clf = train_latent_classifier(&z_train, labels_of(&train_ds)?, &cfg.classifier()?).map_err(classifier_error)?;
    let result = LatentAccuracy {
        latent_dim: model.generator.latent_dim,
        train_images: train_ds.len(),
        test_images: test_ds.len(),
        accuracy: eval_classifier(&clf, &z_test, labels_of(&test_ds)?)?,
    };
    fs::write(
        layout.tables.join("classify_latent.csv"),
        format!(
            "latent_dim,train_images,test_images,accuracy\n{},{},{},{}\n",
            result.latent_dim,
            result.train_images,
            result.test_images,
            f(result.accuracy)
        ),
    )?;
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoisyAccuracy {
    pub sigma: f64,
    /// Classifier applied to reconstructions of the corrupted images.
    pub reconstructed: f64,
    /// Classifier applied to the corrupted images directly.
    pub direct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisySummary {
    pub clean: f64,
    pub rows: Vec<NoisyAccuracy>,
}

/// An image classifier trained on clean training images scores the
/// reconstructions of corrupted test images, averaged over `noise_runs`
/// independent corruptions per level.
pub fn classify_noisy(cfg: &RunConfig) -> Result<NoisySummary, CliError> {
    let layout = Layout::prepare(cfg)?;
    let train_ds = load_split(cfg, Split::Train, true)?;
    let test_ds = load_split(cfg, Split::Test, true)?;
    let model = load_model(cfg, train_ds.pixel_count())?;
    let clf = train_classifier(&train_ds.images, labels_of(&train_ds)?, &cfg.classifier()?).map_err(classifier_error)?;
    let labels = labels_of(&test_ds)?;
    let seed: u64 = cfg.get("seed")?;
    let runs = cfg.get::<usize>("noise_runs")?.max(1);
    let clean = eval_classifier(&clf, &test_ds.images, labels)?;
    let mut table = String::from("sigma,accuracy_reconstructed,accuracy_noisy\n");
    writeln!(table, "0.0,,{}", f(clean)).unwrap();
    let mut rows = Vec::new();
    for (i, sigma) in cfg.list("noise_levels")?.into_iter().enumerate() {
        let (mut rec, mut direct) = (0.0, 0.0);
        for r in 0..runs {
            let stream = 100 + (i * runs + r) as u64;
            let noisy = corrupted(&test_ds, sigma, seed, stream)?;
            let z = infer_all(cfg, &model, &noisy, stream)?;
            let recon = decode(&z, &model.params, &model.generator)?;
            rec += eval_classifier(&clf, &recon, labels)?;
            direct += eval_classifier(&clf, &noisy, labels)?;
        }
        let row = NoisyAccuracy {
            sigma,
            reconstructed: rec / runs as f64,
            direct: direct / runs as f64,
        };
        writeln!(table, "{},{},{}", f(sigma), f(row.reconstructed), f(row.direct)).unwrap();
        rows.push(row);
    }
    fs::write(layout.tables.join("classify_noisy.csv"), table)?;
    Ok(NoisySummary { clean, rows })
}

pub fn export_latents(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let layout = Layout::prepare(cfg)?;
    let ds = load_split(cfg, Split::Test, true)?;
    let model = load_model(cfg, ds.pixel_count())?;
    let z = infer_all(cfg, &model, &ds.images, 0)?;
    let path = layout.tables.join("latents.csv");
    write_latent_csv(&path, &z, ds.labels.as_deref())?;
    Ok(path)
}

/// Largest deviations found by the numerical self-checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MathReport {
    /// Direct vs posterior-weighted prior gradient, absolute.
    pub gradient_forms: f64,
    /// `|p(C1|z) + p(C2|z) - 1|`.
    pub posterior_sum: f64,
    /// `|∫p - 1|` over `[-12, 12]`.
    pub normalization: f64,
    /// Prior gradient vs central differences, relative.
    pub prior_fd: f64,
    /// Network parameter and input gradients vs central differences, relative.
    pub network_fd: f64,
}

impl MathReport {
    pub fn passes(&self) -> bool {
        self.gradient_forms <= 1e-9
            && self.posterior_sum <= 1e-12
            && self.normalization <= 1e-6
            && self.prior_fd <= 1e-5
            && self.network_fd <= 1e-5
    }

    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("prior gradient forms     max |diff| = {:.3e} (limit 1e-9)", self.gradient_forms),
            format!("posterior components     max |sum-1| = {:.3e} (limit 1e-12)", self.posterior_sum),
            format!("prior normalization      max |mass-1| = {:.3e} (limit 1e-6)", self.normalization),
            format!("prior finite differences max rel err = {:.3e} (limit 1e-5)", self.prior_fd),
            format!("network finite diffs     max rel err = {:.3e} (limit 1e-5)", self.network_fd),
        ]
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

pub fn verify_math() -> Result<MathReport, CliError> {
    let alphas = [0.01, 0.2, 0.5, 1.0];
    let grid: Vec<f64> = (0..1000).map(|i| -5.0 + 10.0 * i as f64 / 999.0).collect();
    let (mut forms, mut post) = (0.0f64, 0.0f64);
    for &a in &alphas {
        let p = PriorParams::with_alpha1(a)?;
        for &z in &grid {
            forms = forms.max((grad_log_density_direct(z, &p) - grad_log_density_posterior(z, &p)).abs());
            let s = posterior_component(1, z, &p)? + posterior_component(2, z, &p)?;
            post = post.max((s - 1.0).abs());
        }
    }

    let mut norm = 0.0f64;
    for a in [0.01, 0.5, 1.0] {
        let p = PriorParams::with_alpha1(a)?;
        let n = 20_000;
        let h = 24.0 / n as f64;
        let mut s = density(-12.0, &p) + density(12.0, &p);
        for i in 1..n {
            s += density(-12.0 + i as f64 * h, &p) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        norm = norm.max((s * h / 3.0 - 1.0).abs());
    }

    const H: f64 = 1e-6;
    let mut rng = Rng::new(99);
    let mut prior_fd = 0.0f64;
    for _ in 0..100 {
        let p = PriorParams::with_alpha1(0.01 + 0.99 * rng.uniform())?;
        let z = rng.normal(0.0, 3.0);
        let fd = (log_density(z + H, &p) - log_density(z - H, &p)) / (2.0 * H);
        prior_fd = prior_fd.max(rel_err(grad_log_density_direct(z, &p), fd));
    }

    let specs = [LayerSpec::new(2, 4, Activation::Relu), LayerSpec::new(4, 3, Activation::Sigmoid)];
    let mut net_fd = 0.0f64;
    let gauss = |rng: &mut Rng, r: usize, c: usize| {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.standard_normal()).collect()).expect("sized")
    };
    for _ in 0..100 {
        let params = MlpParams::init(&specs, &mut rng);
        let z = gauss(&mut rng, 3, 2);
        let up = gauss(&mut rng, 3, 3);
        let value = |p: &MlpParams, zz: &Tensor| -> f64 {
            let out = forward(&specs, p, zz).expect("shapes fixed");
            out.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
        };
        let (gp, gz) = backprop_mlp(&specs, &params, &z, &up)?;
        for i in 0..z.len() {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp.data_mut()[i] += H;
            zm.data_mut()[i] -= H;
            let fd = (value(&params, &zp) - value(&params, &zm)) / (2.0 * H);
            net_fd = net_fd.max(rel_err(gz.data()[i], fd));
        }
        for (t, g) in gp.tensors().enumerate() {
            for i in 0..g.len() {
                let shifted = |d: f64| {
                    let mut p = params.clone();
                    p.tensors_mut().nth(t).expect("tensor").data_mut()[i] += d;
                    value(&p, &z)
                };
                let fd = (shifted(H) - shifted(-H)) / (2.0 * H);
                net_fd = net_fd.max(rel_err(g.data()[i], fd));
            }
        }
    }

    Ok(MathReport {
        gradient_forms: forms,
        posterior_sum: post,
        normalization: norm,
        prior_fd,
        network_fd: net_fd,
    })
}
