//! Run configuration: `key=value` lines with `#` comments, every key checked
//! against a fixed schema, then `--key value` overrides on top.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ssgen::generator::GeneratorConfig;
use ssgen::inference::{InferenceConfig, InitMode};
use ssgen::metrics::ClassifierConfig;
use ssgen::trainer::TrainConfig;

use crate::error::CliError;

/// `(key, default, meaning)` for every accepted setting.
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("data_dir", "data/mnist", "directory holding {train,test}-{images-idx3,labels-idx1}-ubyte"),
    ("train_limit", "0", "use only the first N training images (0 = all)"),
    ("test_limit", "0", "use only the first N test images (0 = all)"),
    ("out_dir", "runs/default", "output root; checkpoints/, grids/, tables/, logs/ live here"),
    ("checkpoint", "", "checkpoint to evaluate (default <out_dir>/checkpoints/final.ckpt)"),
    ("latent_dim", "200", "latent dimension K"),
    ("hidden", "400", "hidden width of the generator"),
    ("obs_noise_sigma", "0.3", "observation noise standard deviation"),
    ("sigma1_sq", "1.0", "variance of the wide prior component"),
    ("sigma2_sq", "0.1", "variance of the narrow prior component"),
    ("epochs", "60", "training epochs"),
    ("batch_size", "100", "training batch size"),
    ("lr", "0.0001", "Adam learning rate for the generator"),
    ("sparsity_initial", "1.0", "starting sparsity level"),
    ("sparsity_decay", "0.033", "per-epoch decrement of the sparsity level"),
    ("sparsity_threshold", "0.01", "final sparsity level"),
    ("constant_sparsity", "false", "hold the sparsity level at sparsity_threshold"),
    ("langevin_noise", "false", "inject Langevin noise during latent inference"),
    ("resume", "false", "continue from <out_dir>/checkpoints/latest.ckpt if present"),
    ("seed", "0", "master random seed"),
    ("infer_steps", "30", "latent inference steps"),
    ("step_size", "0.1", "Langevin step size s"),
    ("init_mode", "zero", "latent initialization: zero, gaussian or spike_slab"),
    ("active_threshold", "0.2", "|z| above this counts as active"),
    ("noise_levels", "0.3,0.5,0.7", "comma-separated corruption standard deviations"),
    ("noise_runs", "5", "independent corruption draws averaged by classify-noisy"),
    ("grid_images", "64", "images per exported grid (square-ish tiling)"),
    ("traverse_samples", "4", "test images used by traverse"),
    ("traverse_dims", "8", "most active latent dimensions varied per image"),
    ("classifier_train", "3000", "training images for classify-latent (0 = all)"),
    ("classifier_hidden", "256", "hidden width of both classifiers"),
    ("classifier_epochs", "50", "classifier training epochs"),
    ("classifier_batch", "100", "classifier batch size"),
    ("classifier_lr", "0.001", "classifier Adam learning rate"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: SCHEMA.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn known(key: &str) -> bool {
    SCHEMA.iter().any(|(k, _, _)| *k == key)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !known(key) {
            return Err(CliError::Config(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are ignored.
    pub fn merge_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value, got {raw:?}", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.merge_text(&text)
    }

    /// Applies `--key value` or `--key=value` pairs.
    pub fn merge_flags(&mut self, args: &[String]) -> Result<(), CliError> {
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let flag = arg
                .strip_prefix("--")
                .ok_or_else(|| CliError::Config(format!("expected --key, got {arg:?}")))?;
            match flag.split_once('=') {
                Some((k, v)) => self.set(k, v)?,
                None => {
                    let v = it
                        .next()
                        .ok_or_else(|| CliError::Config(format!("--{flag} needs a value")))?;
                    self.set(flag, v)?;
                }
            }
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("schema key")
    }

    pub fn get<V: FromStr>(&self, key: &str) -> Result<V, CliError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| CliError::Config(format!("invalid value {raw:?} for {key}")))
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.raw(key)
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("invalid number {s:?} in {key}")))
            })
            .collect()
    }

    /// Effective settings in schema order, one `key=value` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _, _) in SCHEMA {
            writeln!(out, "{k}={}", self.raw(k)).unwrap();
        }
        out
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out_dir"))
    }

    pub fn data_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("data_dir"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        match self.raw("checkpoint") {
            "" => self.out_dir().join("checkpoints").join("final.ckpt"),
            p => PathBuf::from(p),
        }
    }

    /// Generator shape for images of `output_dim` pixels.
    pub fn generator(&self, output_dim: usize) -> Result<GeneratorConfig, CliError> {
        let cfg = GeneratorConfig::mlp(
            self.get("latent_dim")?,
            &[self.get("hidden")?],
            output_dim,
            self.get("obs_noise_sigma")?,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train(&self) -> Result<TrainConfig, CliError> {
        let cfg = TrainConfig {
            epochs: self.get("epochs")?,
            batch_size: self.get("batch_size")?,
            lr: self.get("lr")?,
            sparsity_initial: self.get("sparsity_initial")?,
            sparsity_decay: self.get("sparsity_decay")?,
            sparsity_threshold: self.get("sparsity_threshold")?,
            seed: self.get("seed")?,
            constant_sparsity: self.get("constant_sparsity")?,
            langevin_noise: self.get("langevin_noise")?,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Inference settings for evaluation; noise follows `langevin_noise` so a
    /// model is evaluated the way it was trained.
    pub fn inference(&self) -> Result<InferenceConfig, CliError> {
        let mode = self.raw("init_mode");
        let cfg = InferenceConfig {
            steps: self.get("infer_steps")?,
            step_size: self.get("step_size")?,
            noise_enabled: self.get("langevin_noise")?,
            init_mode: InitMode::parse(mode)
                .ok_or_else(|| CliError::Config(format!("unknown init_mode {mode:?}")))?,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn classifier(&self) -> Result<ClassifierConfig, CliError> {
        Ok(ClassifierConfig {
            hidden: self.get("classifier_hidden")?,
            num_classes: 10,
            epochs: self.get("classifier_epochs")?,
            batch_size: self.get("classifier_batch")?,
            lr: self.get("classifier_lr")?,
            seed: self.get("seed")?,
        })
    }

    /// Checks every typed view so errors surface before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        self.generator(784)?;
        self.train()?;
        self.inference()?;
        self.classifier()?;
        for key in ["train_limit", "test_limit", "noise_runs", "grid_images", "traverse_samples", "traverse_dims", "classifier_train"] {
            self.get::<usize>(key)?;
        }
        self.get::<bool>("resume")?;
        let t: f64 = self.get("active_threshold")?;
        if !(t >= 0.0) {
            return Err(CliError::Config("active_threshold must be non-negative".into()));
        }
        if self.list("noise_levels")?.iter().any(|s| !(*s >= 0.0)) {
            return Err(CliError::Config("noise_levels must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.get::<usize>("latent_dim").unwrap(), 200);
        assert_eq!(c.list("noise_levels").unwrap(), vec![0.3, 0.5, 0.7]);
    }

    #[test]
    fn file_then_flags() {
        let mut c = RunConfig::default();
        c.merge_text("# comment\nepochs = 5  # trailing\n\nseed=3\n").unwrap();
        c.merge_flags(&["--epochs".into(), "7".into(), "--lr=0.01".into()]).unwrap();
        assert_eq!(c.get::<usize>("epochs").unwrap(), 7);
        assert_eq!(c.get::<u64>("seed").unwrap(), 3);
        assert_eq!(c.raw("lr"), "0.01");
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut c = RunConfig::default();
        assert!(matches!(c.merge_text("epoch=3"), Err(CliError::Config(_))));
        assert!(matches!(c.merge_text("epochs"), Err(CliError::Config(_))));
        assert!(matches!(c.merge_flags(&["--epochs".into()]), Err(CliError::Config(_))));
        c.set("epochs", "many").unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.set("seed", "42").unwrap();
        let mut d = RunConfig::default();
        d.merge_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
    }
}
