use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Shape2D, Tensor};

fn chw(img: &Tensor, op: &str) -> Result<(usize, usize, usize)> {
    match *img.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::shape(format!("{op} expects a CHW image, got {:?}", img.shape()))),
    }
}

/// Reverse column order in every row of every channel.
pub fn horizontal_flip(img: &Tensor) -> Result<Tensor> {
    let (_, _, w) = chw(img, "horizontal_flip")?;
    let mut out = img.clone();
    for row in out.data_mut().chunks_exact_mut(w) {
        row.reverse();
    }
    Ok(out)
}

/// `clamp(c·(img − mean) + mean + b, 0, 1)` with the mean taken over all pixels.
pub fn adjust_lighting(img: &Tensor, brightness: f32, contrast: f32) -> Result<Tensor> {
    if contrast <= 0.0 {
        return Err(Error::config(format!("contrast factor must be positive, got {contrast}")));
    }
    let mean = (img.data().iter().map(|&v| v as f64).sum::<f64>() / img.len() as f64) as f32;
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = (contrast * (*v - mean) + mean + brightness).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Bilinear sample at continuous index coordinates; taps outside the
/// plane read as zero.
fn sample_zero_padded(plane: &[f32], h: usize, w: usize, y: f32, x: f32) -> f32 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let (y0, x0) = (y0 as isize, x0 as isize);
    let at = |yy: isize, xx: isize| -> f32 {
        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
            0.0
        } else {
            plane[yy as usize * w + xx as usize]
        }
    };
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
    let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Parameters of an affine warp about the image center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    /// Horizontal magnification; above 1 enlarges content.
    pub scale_x: f32,
    pub scale_y: f32,
    pub shear_degrees: f32,
    /// Translation as a fraction of width and height.
    pub translate: (f32, f32),
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        scale_x: 1.0,
        scale_y: 1.0,
        shear_degrees: 0.0,
        translate: (0.0, 0.0),
    };
}

/// Warp `img` by `p ↦ center + A·(p − center) + t` with
/// `A = [[sx, sx·tan θ], [0, sy]]`, implemented by inverse mapping each
/// output pixel and sampling bilinearly. Samples outside the source are zero.
pub fn affine_transform(img: &Tensor, params: AffineParams) -> Result<Tensor> {
    let (_, h, w) = chw(img, "affine_transform")?;
    let AffineParams {
        scale_x: sx,
        scale_y: sy,
        shear_degrees,
        translate: (tx, ty),
    } = params;
    if !(sx > 0.0 && sy > 0.0) {
        return Err(Error::config(format!("affine scales must be positive, got {sx}, {sy}")));
    }
    let shear = shear_degrees.to_radians().tan();
    let (cx, cy) = (w as f32 / 2.0, h as f32 / 2.0);
    let (dx, dy) = (tx * w as f32, ty * h as f32);
    let mut out = Tensor::zeros(img.shape());
    for (src, dst) in img.data().chunks_exact(h * w).zip(out.data_mut().chunks_exact_mut(h * w)) {
        for y in 0..h {
            for x in 0..w {
                // Pixel centers live at index + 0.5 in continuous coordinates.
                let ox = x as f32 + 0.5 - cx - dx;
                let oy = y as f32 + 0.5 - cy - dy;
                let iy = oy / sy;
                let ix = ox / sx - shear * iy;
                dst[y * w + x] = sample_zero_padded(src, h, w, iy + cy - 0.5, ix + cx - 0.5);
            }
        }
    }
    Ok(out)
}

/// Copy an `out`-sized window at `(top, left)` of the image zero-padded by `pad`.
pub fn crop_at(img: &Tensor, out: Shape2D, pad: usize, top: usize, left: usize) -> Result<Tensor> {
    let (c, h, w) = chw(img, "crop")?;
    if top + out.height > h + 2 * pad || left + out.width > w + 2 * pad {
        return Err(Error::shape(format!(
            "crop {out} at ({top}, {left}) exceeds padded input {}x{}",
            h + 2 * pad,
            w + 2 * pad
        )));
    }
    let mut data = Vec::with_capacity(c * out.area());
    for plane in img.data().chunks_exact(h * w) {
        for y in 0..out.height {
            let sy = (top + y) as isize - pad as isize;
            for x in 0..out.width {
                let sx = (left + x) as isize - pad as isize;
                let inside = sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w;
                data.push(if inside { plane[sy as usize * w + sx as usize] } else { 0.0 });
            }
        }
    }
    Tensor::from_vec(&[c, out.height, out.width], data)
}

/// Uniformly drawn top-left corner for [`crop_at`].
pub fn random_crop_offset<R: Rng + ?Sized>(
    input: Shape2D,
    out: Shape2D,
    pad: usize,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let (ph, pw) = (input.height + 2 * pad, input.width + 2 * pad);
    if out.height > ph || out.width > pw {
        return Err(Error::shape(format!("crop {out} larger than padded input {ph}x{pw}")));
    }
    Ok((rng.random_range(0..=ph - out.height), rng.random_range(0..=pw - out.width)))
}

/// Zero-pad by `pad`, then crop `out` at a uniformly random offset.
pub fn random_crop<R: Rng + ?Sized>(img: &Tensor, out: Shape2D, pad: usize, rng: &mut R) -> Result<Tensor> {
    let (_, h, w) = chw(img, "random_crop")?;
    let (top, left) = random_crop_offset(Shape2D { height: h, width: w }, out, pad, rng)?;
    crop_at(img, out, pad, top, left)
}

/// Largest centered region with `out`'s aspect ratio, resized to `out`.
pub fn center_crop(img: &Tensor, out: Shape2D) -> Result<Tensor> {
    let (_, h, w) = chw(img, "center_crop")?;
    let scale = (h as f64 / out.height as f64).min(w as f64 / out.width as f64);
    let rh = ((out.height as f64 * scale).round() as usize).clamp(1, h);
    let rw = ((out.width as f64 * scale).round() as usize).clamp(1, w);
    let region = Shape2D { height: rh, width: rw };
    let cropped = if rh == h && rw == w {
        img.clone()
    } else {
        crop_at(img, region, 0, (h - rh) / 2, (w - rw) / 2)?
    };
    cropped.bilinear_resize(out)
}
