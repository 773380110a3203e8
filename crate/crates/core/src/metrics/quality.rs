use crate::error::{Error, Result};
use crate::ndgrad::Tensor;
use crate::scalar::Scalar;

/// Returned by [`psnr`] when the two images are identical.
pub const PSNR_CAP: f64 = 99.0;

/// Side length of the square SSIM window.
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 1e-4;
const C2: f64 = 9e-4;

fn same_len<T>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::dim(format!("images have {} and {} pixels", x.len(), y.len())));
    }
    Ok(())
}

/// `10·log10(1/mse)` with peak 1.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub fn psnr<T: Scalar>(x: &[T], y: &[T]) -> Result<f64> {
    same_len(x, y)?;
    let mse = x.iter().zip(y).map(|(&a, &b)| (a.f64() - b.f64()).powi(2)).sum::<f64>() / x.len() as f64;
    Ok(psnr_from_mse(mse))
}

/// Mean of per-row PSNR over two `N × D` batches.
pub fn mean_psnr<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Result<f64> {
    if x.shape() != y.shape() || x.rows() == 0 {
        return Err(Error::dim(format!("batches {:?} and {:?} differ", x.shape(), y.shape())));
    }
    let mut total = 0.0;
    for i in 0..x.rows() {
        total += psnr(x.row(i), y.row(i))?;
    }
    Ok(total / x.rows() as f64)
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn ssim_window() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable valid-mode filtering of a `rows × cols` image.
fn filter(img: &[f64], rows: usize, cols: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let oc = cols - SSIM_WINDOW + 1;
    let or = rows - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; rows * oc];
    for r in 0..rows {
        for c in 0..oc {
            horiz[r * oc + c] = (0..SSIM_WINDOW).map(|k| w[k] * img[r * cols + c + k]).sum();
        }
    }
    let mut out = vec![0.0; or * oc];
    for r in 0..or {
        for c in 0..oc {
            out[r * oc + c] = (0..SSIM_WINDOW).map(|k| w[k] * horiz[(r + k) * oc + c]).sum();
        }
    }
    out
}

/// Single-scale SSIM of two grayscale images in `[0, 1]`, averaged over all
/// window positions that fit entirely inside the image.
pub fn ssim<T: Scalar>(x: &[T], y: &[T], rows: usize, cols: usize) -> Result<f64> {
    same_len(x, y)?;
    if x.len() != rows * cols {
        return Err(Error::dim(format!("{} pixels is not {rows}×{cols}", x.len())));
    }
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::param(format!(
            "{rows}×{cols} image is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} window"
        )));
    }
    let w = ssim_window();
    let xf: Vec<f64> = x.iter().map(|v| v.f64()).collect();
    let yf: Vec<f64> = y.iter().map(|v| v.f64()).collect();
    let prod = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p * q).collect() };
    let mx = filter(&xf, rows, cols, &w);
    let my = filter(&yf, rows, cols, &w);
    let mxx = filter(&prod(&xf, &xf), rows, cols, &w);
    let myy = filter(&prod(&yf, &yf), rows, cols, &w);
    let mxy = filter(&prod(&xf, &yf), rows, cols, &w);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = mxx[i] - ux * ux;
        let vy = myy[i] - uy * uy;
        let cxy = mxy[i] - ux * uy;
        total += ((2.0 * ux * uy + C1) * (2.0 * cxy + C2)) / ((ux * ux + uy * uy + C1) * (vx + vy + C2));
    }
    Ok(total / mx.len() as f64)
}

/// Mean of per-row SSIM over two `N × (rows·cols)` batches.
pub fn mean_ssim<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, rows: usize, cols: usize) -> Result<f64> {
    if x.shape() != y.shape() || x.rows() == 0 {
        return Err(Error::dim(format!("batches {:?} and {:?} differ", x.shape(), y.shape())));
    }
    let mut total = 0.0;
    for i in 0..x.rows() {
        total += ssim(x.row(i), y.row(i), rows, cols)?;
    }
    Ok(total / x.rows() as f64)
}
