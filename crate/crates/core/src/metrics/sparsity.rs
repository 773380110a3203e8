use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ndgrad::Tensor;
use crate::scalar::Scalar;

/// Mean over samples of the share of coordinates with `|z_k| > threshold`.
pub fn active_fraction<T: Scalar>(z: &Tensor<T>, threshold: T) -> Result<T> {
    if !(threshold >= T::zero()) {
        return Err(Error::param("activation threshold must be non-negative"));
    }
    let (b, k) = z.ensure_matrix("latents")?;
    if b == 0 || k == 0 {
        return Ok(T::zero());
    }
    let active = z.data().iter().filter(|v| v.abs() > threshold).count();
    Ok(T::of(active as f64 / (b * k) as f64))
}

/// Per-class mean of binarized latent codes.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMap<T = f64> {
    /// Indexed by class id; `None` when no sample carries that label.
    pub rows: Vec<Option<Vec<T>>>,
    pub threshold: T,
}

impl<T: Scalar> ActivationMap<T> {
    /// CSV with header `class,z0,..,z{K-1}`; absent classes are omitted.
    pub fn to_csv(&self) -> String {
        let k = self.rows.iter().flatten().map(Vec::len).next().unwrap_or(0);
        let mut out = String::from("class");
        for j in 0..k {
            write!(out, ",z{j}").unwrap();
        }
        out.push('\n');
        for (c, row) in self.rows.iter().enumerate() {
            if let Some(row) = row {
                write!(out, "{c}").unwrap();
                for v in row {
                    write!(out, ",{:?}", v.f64()).unwrap();
                }
                out.push('\n');
            }
        }
        out
    }
}

pub fn class_activation_map<T: Scalar>(
    latents: &Tensor<T>,
    labels: &[u8],
    threshold: T,
    num_classes: usize,
) -> Result<ActivationMap<T>> {
    let (b, k) = latents.ensure_matrix("latents")?;
    if labels.len() != b {
        return Err(Error::dim(format!("{} labels for {b} latent rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
        return Err(Error::param(format!("label {bad} out of range for {num_classes} classes")));
    }
    let mut sums = vec![vec![0usize; k]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (i, &l) in labels.iter().enumerate() {
        counts[l as usize] += 1;
        for (s, v) in sums[l as usize].iter_mut().zip(latents.row(i)) {
            *s += usize::from(v.abs() > threshold);
        }
    }
    let rows = sums
        .into_iter()
        .zip(counts)
        .map(|(s, n)| (n > 0).then(|| s.into_iter().map(|c| T::of(c as f64 / n as f64)).collect()))
        .collect();
    Ok(ActivationMap { rows, threshold })
}
