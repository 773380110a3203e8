//! Image quality scores, sparsity statistics, small classifiers for latent
//! codes and images, and file exports for inspection.

mod classifier;
mod export;
mod quality;
mod sparsity;

pub use classifier::{
    accuracy_from_logits, eval_classifier, train_classifier, train_latent_classifier, ClassifierConfig,
    ClassifierParams,
};
pub use export::{export_image_grid, grid_pixels, read_pgm, write_latent_csv, Pgm};
pub use quality::{mean_psnr, mean_ssim, psnr, psnr_from_mse, ssim, ssim_window, PSNR_CAP, SSIM_WINDOW};
pub use sparsity::{active_fraction, class_activation_map, ActivationMap};
