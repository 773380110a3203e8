use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ndgrad::Tensor;
use crate::scalar::Scalar;

/// Separator value between tiles.
const SEPARATOR: u8 = 255;

/// An 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn quantize<T: Scalar>(v: T) -> u8 {
    (v.f64() * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Tiles `N × (h·w)` images row-major into a `grid_rows × grid_cols` panel
/// with 1-pixel separators. Unused cells stay black.
pub fn grid_pixels<T: Scalar>(
    images: &Tensor<T>,
    h: usize,
    w: usize,
    grid_rows: usize,
    grid_cols: usize,
) -> Result<Pgm> {
    let (n, d) = images.ensure_matrix("images")?;
    if d != h * w {
        return Err(Error::dim(format!("{d} pixels per image is not {h}×{w}")));
    }
    if grid_rows * grid_cols < n || grid_rows == 0 || grid_cols == 0 {
        return Err(Error::param(format!("{grid_rows}×{grid_cols} grid cannot hold {n} images")));
    }
    let width = grid_cols * w + grid_cols - 1;
    let height = grid_rows * h + grid_rows - 1;
    let mut pixels = vec![SEPARATOR; width * height];
    for gr in 0..grid_rows {
        for gc in 0..grid_cols {
            let idx = gr * grid_cols + gc;
            let (top, left) = (gr * (h + 1), gc * (w + 1));
            for r in 0..h {
                for c in 0..w {
                    pixels[(top + r) * width + left + c] =
                        if idx < n { quantize(images.row(idx)[r * w + c]) } else { 0 };
                }
            }
        }
    }
    Ok(Pgm { width, height, pixels })
}

/// Writes the tiled panel as a binary PGM (`P5`, maxval 255).
pub fn export_image_grid<T: Scalar>(
    images: &Tensor<T>,
    h: usize,
    w: usize,
    grid_rows: usize,
    grid_cols: usize,
    path: &Path,
) -> Result<()> {
    let pgm = grid_pixels(images, h, w, grid_rows, grid_cols)?;
    let mut bytes = format!("P5\n{} {}\n255\n", pgm.width, pgm.height).into_bytes();
    bytes.extend_from_slice(&pgm.pixels);
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a binary PGM with maxval 255 and no comments.
pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("PGM header ends early".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM field {s:?}")));
    if fields[0] != "P5" || num(&fields[3])? != 255 {
        return Err(Error::Format("only P5 files with maxval 255 are supported".into()));
    }
    let (width, height) = (num(&fields[1])?, num(&fields[2])?);
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() != width * height {
        return Err(Error::Framing(format!(
            "PGM body holds {} bytes, header implies {}",
            body.len(),
            width * height
        )));
    }
    Ok(Pgm { width, height, pixels: body.to_vec() })
}

/// One row per sample: `label,z0,..,z{K-1}`, label left empty when unknown.
pub fn write_latent_csv<T: Scalar>(path: &Path, latents: &Tensor<T>, labels: Option<&[u8]>) -> Result<()> {
    let (n, k) = latents.ensure_matrix("latents")?;
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::dim(format!("{} labels for {n} latent rows", l.len())));
        }
    }
    let mut out = String::from("label");
    for j in 0..k {
        write!(out, ",z{j}").unwrap();
    }
    out.push('\n');
    for i in 0..n {
        if let Some(l) = labels {
            write!(out, "{}", l[i]).unwrap();
        }
        for v in latents.row(i) {
            write!(out, ",{:?}", v.f64()).unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
