//! Dense row-major tensors.
//!
//! Images are stored batch × channel × height × width. A tensor carries a
//! precision tag: `Half16` tensors hold `f32` values that are exactly
//! representable as IEEE binary16, so arithmetic is done in `f32` and the
//! result rounded back.

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Precision {
    Full32,
    Half16,
}

/// Spatial extent of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape2D {
    pub height: usize,
    pub width: usize,
}

impl Shape2D {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape(format!(
                "image extent must be positive, got {height}x{width}"
            )));
        }
        Ok(Shape2D { height, width })
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side)
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

impl std::fmt::Display for Shape2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

impl std::str::FromStr for Shape2D {
    type Err = Error;

    /// Accepts `HxW` or a single side length for square images.
    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(format!("invalid image size `{s}`")))
        };
        match s.split_once(['x', 'X']) {
            Some((h, w)) => Shape2D::new(parse(h)?, parse(w)?),
            None => Shape2D::square(parse(s)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    precision: Precision,
}

fn check_extents(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::shape("tensor shape must have at least one extent"));
    }
    if let Some(pos) = shape.iter().position(|&e| e == 0) {
        return Err(Error::shape(format!(
            "extent {pos} of shape {shape:?} is zero"
        )));
    }
    Ok(shape.iter().product())
}

/// Round an `f32` to the nearest binary16 value (ties to even), returned as `f32`.
/// Magnitudes past the binary16 range saturate to infinity.
#[inline]
pub fn round_to_half(x: f32) -> f32 {
    f16::from_f32(x).to_f32()
}

pub(crate) fn round_slice_to_half(values: &mut [f32]) {
    for v in values {
        *v = round_to_half(*v);
    }
}

impl Tensor {
    /// A tensor filled with `value`.
    pub fn full(shape: &[usize], value: f32) -> Result<Self> {
        let len = check_extents(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
            precision: Precision::Full32,
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let len = check_extents(shape)?;
        if len != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            precision: Precision::Full32,
        })
    }

    /// Zero tensor for shapes already known to be valid.
    ///
    /// Panics if any extent is zero.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0).expect("zero extent in internal tensor shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable view of the values. Writers of `Half16` tensors are
    /// responsible for keeping the values binary16-representable.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len = check_extents(shape)?;
        if len != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, value: f32) {
        let value = match self.precision {
            Precision::Full32 => value,
            Precision::Half16 => round_to_half(value),
        };
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn elementwise(&self, other: &Tensor, op: ElementwiseOp) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "elementwise {op:?} on {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let f = match op {
            ElementwiseOp::Add => |a: f32, b: f32| a + b,
            ElementwiseOp::Sub => |a: f32, b: f32| a - b,
            ElementwiseOp::Mul => |a: f32, b: f32| a * b,
        };
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        let precision = if self.precision == Precision::Half16
            && other.precision == Precision::Half16
        {
            Precision::Half16
        } else {
            Precision::Full32
        };
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
            precision: Precision::Full32,
        }
        .cast(precision))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(other, ElementwiseOp::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(other, ElementwiseOp::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(other, ElementwiseOp::Mul)
    }

    pub fn scale(&self, s: f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| v * s).collect(),
            precision: Precision::Full32,
        }
        .cast(self.precision)
    }

    /// Rank-2 matrix product `[m,k] × [k,n] → [m,n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(Error::shape(format!(
                "matmul needs rank-2 operands, got {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dimensions differ: {:?} × {:?}",
                self.shape, other.shape
            )));
        }
        // f64 accumulation, rounded once per output element.
        let mut acc = vec![0.0f64; m * n];
        for i in 0..m {
            let row = &mut acc[i * n..(i + 1) * n];
            for p in 0..k {
                let a_ip = self.data[i * k + p] as f64;
                for (c, &b) in row.iter_mut().zip(&other.data[p * n..(p + 1) * n]) {
                    *c += a_ip * b as f64;
                }
            }
        }
        Tensor::from_vec(&[m, n], acc.into_iter().map(|v| v as f32).collect())
    }

    /// Round every value to `target`. `Full32 → Half16` rounds to nearest
    /// even and saturates out-of-range magnitudes to ±infinity; `Half16 →
    /// Full32` is exact.
    pub fn cast(&self, target: Precision) -> Tensor {
        let mut out = self.clone();
        out.cast_in_place(target);
        out
    }

    pub(crate) fn cast_in_place(&mut self, target: Precision) {
        if target == Precision::Half16 && self.precision == Precision::Full32 {
            round_slice_to_half(&mut self.data);
        }
        self.precision = target;
    }

    /// Copy `src`'s values into `self`, rounding to `self`'s precision.
    pub(crate) fn assign_from(&mut self, src: &Tensor) {
        debug_assert_eq!(self.shape, src.shape);
        self.data.copy_from_slice(&src.data);
        if self.precision == Precision::Half16 {
            round_slice_to_half(&mut self.data);
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bilinear resize of a CHW image using half-pixel-center alignment:
    /// output pixel `i` samples source coordinate `(i + 0.5)·in/out − 0.5`,
    /// clamped into the image.
    pub fn bilinear_resize(&self, out: Shape2D) -> Result<Tensor> {
        if self.rank() != 3 {
            return Err(Error::shape(format!(
                "bilinear_resize expects a CHW image, got {:?}",
                self.shape
            )));
        }
        let (c, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        if h == out.height && w == out.width {
            return Ok(self.clone());
        }
        let rows = sample_positions(h, out.height);
        let cols = sample_positions(w, out.width);
        let mut data = Vec::with_capacity(c * out.area());
        for plane in self.data.chunks_exact(h * w) {
            for &(y0, y1, fy) in &rows {
                let r0 = &plane[y0 * w..(y0 + 1) * w];
                let r1 = &plane[y1 * w..(y1 + 1) * w];
                for &(x0, x1, fx) in &cols {
                    let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                    let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
                    data.push(top + (bottom - top) * fy);
                }
            }
        }
        Ok(Tensor {
            shape: vec![c, out.height, out.width],
            data,
            precision: Precision::Full32,
        }
        .cast(self.precision))
    }
}

/// For each output index: (low source index, high source index, fraction).
fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, (pos - lo as f64) as f32)
        })
        .collect()
}

/// `c[m,n] += a[m,k] · b[k,n]`
pub(crate) fn gemm_nn(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_ip * bv;
            }
        }
    }
}

/// `c[m,n] += a[m,k] · b[n,k]ᵀ`
pub(crate) fn gemm_nt(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            c[i * n + j] += dot(a_row, b_row);
        }
    }
}

/// `c[m,n] += a[k,m]ᵀ · b[k,n]`
pub(crate) fn gemm_tn(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &a_pi) in a_row.iter().enumerate() {
            if a_pi == 0.0 {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_pi * bv;
            }
        }
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    // Eight independent partial sums so the loop vectorizes.
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        for l in 0..8 {
            acc[l] += a[i * 8 + l] * b[i * 8 + l];
        }
    }
    let mut sum = acc.iter().sum::<f32>();
    for i in chunks * 8..a.len() {
        sum += a[i] * b[i];
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], v: &[f32]) -> Tensor {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn create() {
        let z = Tensor::full(&[2, 2], 0.0).unwrap();
        assert_eq!(z.data(), &[0.0; 4]);
        assert_eq!(z.precision(), Precision::Full32);
        assert_eq!(t(&[3], &[1., 2., 3.]).data(), &[1., 2., 3.]);
        assert!(matches!(
            Tensor::from_vec(&[2, 3], vec![0.0; 5]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(Tensor::full(&[2, 0], 1.0), Err(Error::Shape(_))));
        assert!(matches!(Tensor::full(&[], 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn elementwise_examples() {
        let a = t(&[2], &[1., 2.]);
        let b = t(&[2], &[3., 4.]);
        assert_eq!(a.add(&b).unwrap().data(), &[4., 6.]);
        let x = t(&[3], &[0.3, -2.0, 7.5]);
        let zeros = Tensor::zeros(&[3]);
        assert_eq!(x.mul(&zeros).unwrap().data(), &[0.0, -0.0, 0.0]);
        assert!(x.sub(&x).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(matches!(a.add(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn scale_examples() {
        assert_eq!(t(&[2], &[2., 4.]).scale(0.5).data(), &[1., 2.]);
        let x = t(&[3], &[0.1, -3.0, 9.0]);
        assert_eq!(x.scale(1.0), x);
        assert!(x.scale(0.0).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_small() {
        let id = t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let m = t(&[3, 2], &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(id.matmul(&m).unwrap(), m);
        let a = t(&[1, 2], &[1., 2.]);
        let b = t(&[2, 1], &[3., 4.]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
        assert!(matches!(a.matmul(&a), Err(Error::Shape(_))));
    }

    fn naive_matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0f64; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] as f64 * b[p * n + j] as f64;
                }
            }
        }
        c
    }

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, &[7, 5]);
        let b = random(&mut rng, &[5, 4]);
        let c = a.matmul(&b).unwrap();
        let oracle = naive_matmul(a.data(), b.data(), 7, 5, 4);
        for (x, y) in c.data().iter().zip(oracle) {
            assert!((*x as f64 - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn transposed_kernels_agree_with_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (m, k, n) = (6, 9, 5);
        let a = random(&mut rng, &[m, k]);
        let b = random(&mut rng, &[k, n]);
        let expect = a.matmul(&b).unwrap();
        let transpose = |x: &Tensor, r: usize, c: usize| {
            let mut out = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = x.data()[i * c + j];
                }
            }
            out
        };
        let mut c1 = vec![0.0; m * n];
        gemm_nt(m, k, n, a.data(), &transpose(&b, k, n), &mut c1);
        let mut c2 = vec![0.0; m * n];
        gemm_tn(m, k, n, &transpose(&a, m, k), b.data(), &mut c2);
        for ((x, y), z) in expect.data().iter().zip(&c1).zip(&c2) {
            assert!((x - y).abs() < 1e-5 && (x - z).abs() < 1e-5);
        }
    }

    #[test]
    fn cast_examples() {
        let one = t(&[1], &[1.0]).cast(Precision::Half16);
        assert_eq!(one.data(), &[1.0]);
        assert_eq!(one.precision(), Precision::Half16);
        // Spacing of binary16 at 1.0 is 2^-10, so 1e-4 rounds away.
        let near = t(&[1], &[1.0 + 1e-4]).cast(Precision::Half16);
        assert_eq!(near.data(), &[1.0]);
        let x = t(&[3], &[0.1, 3.14159, -1234.567]);
        let h = x.cast(Precision::Half16);
        let back = h.cast(Precision::Full32).cast(Precision::Half16);
        assert_eq!(
            h.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let big = t(&[2], &[70000.0, -1e9]).cast(Precision::Half16);
        assert_eq!(big.data(), &[f32::INFINITY, f32::NEG_INFINITY]);
    }

    #[test]
    fn half_arithmetic_stays_representable() {
        let a = t(&[2], &[1.0, 0.1]).cast(Precision::Half16);
        let b = t(&[2], &[1e-4, 0.2]).cast(Precision::Half16);
        let c = a.add(&b).unwrap();
        assert_eq!(c.precision(), Precision::Half16);
        assert_eq!(c.data()[0], 1.0);
        for v in c.data() {
            assert_eq!(*v, round_to_half(*v));
        }
    }

    #[test]
    fn resize_identity_and_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, &[3, 5, 7]);
        let same = x.bilinear_resize(Shape2D::new(5, 7).unwrap()).unwrap();
        assert_eq!(same, x);
        let c = Tensor::full(&[2, 4, 4], 0.7).unwrap();
        for (h, w) in [(1, 1), (3, 9), (8, 8), (13, 2)] {
            let r = c.bilinear_resize(Shape2D::new(h, w).unwrap()).unwrap();
            assert_eq!(r.shape(), &[2, h, w]);
            assert!(r.data().iter().all(|v| (v - 0.7).abs() <= 1e-6));
        }
        assert!(matches!(
            t(&[4], &[0.; 4]).bilinear_resize(Shape2D::square(2).unwrap()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn resize_two_by_two_to_three_by_three() {
        // Source coordinates for out=3, in=2: -1/6 → 0, 1/2, 7/6 → 1.
        let x = t(&[1, 2, 2], &[0., 1., 2., 3.]);
        let r = x.bilinear_resize(Shape2D::square(3).unwrap()).unwrap();
        let expect = [0.0, 0.5, 1.0, 1.0, 1.5, 2.0, 2.0, 2.5, 3.0];
        for (a, b) in r.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-6, "{:?}", r.data());
        }
    }

    #[test]
    fn shape2d_parsing() {
        assert_eq!("32x24".parse::<Shape2D>().unwrap(), Shape2D::new(32, 24).unwrap());
        assert_eq!("16".parse::<Shape2D>().unwrap(), Shape2D::square(16).unwrap());
        assert!("0x4".parse::<Shape2D>().is_err());
        assert!("axb".parse::<Shape2D>().is_err());
    }

    proptest! {
        #[test]
        fn add_commutes_and_associates(v in proptest::collection::vec(-1.0f32..1.0, 3 * 8)) {
            let a = t(&[8], &v[..8]);
            let b = t(&[8], &v[8..16]);
            let c = t(&[8], &v[16..]);
            prop_assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
            let l = a.add(&b).unwrap().add(&c).unwrap();
            let r = a.add(&b.add(&c).unwrap()).unwrap();
            prop_assert!(l.max_abs_diff(&r) <= 1e-6);
        }

        #[test]
        fn matmul_matches_oracle(m in 1usize..=32, k in 1usize..=32, n in 1usize..=32, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(&mut rng, &[m, k]);
            let b = random(&mut rng, &[k, n]);
            let c = a.matmul(&b).unwrap();
            let oracle = naive_matmul(a.data(), b.data(), m, k, n);
            for (x, y) in c.data().iter().zip(oracle) {
                prop_assert!((*x as f64 - y).abs() <= 1e-6);
            }
        }

        #[test]
        fn half_rounding_error_is_within_half_spacing(x in -65504.0f32..65504.0) {
            let h = round_to_half(x);
            // binary16 spacing at |x|: 2^(e-10) for normals, 2^-24 for subnormals.
            let ax = x.abs();
            let spacing = if ax < 6.103_515_6e-5 {
                2f32.powi(-24)
            } else {
                2f32.powi(ax.log2().floor() as i32 - 10)
            };
            prop_assert!((h - x).abs() <= spacing / 2.0);
        }
    }
}
