//! Reference standard, depthwise and pointwise convolutions with MAC counters.
//!
//! All convolutions keep the spatial size: the input is implicitly zero padded
//! by `(lk - 1) / 2` on every border. The MAC counter includes the multiplies
//! against padding, so a standard layer always reports `lk² · m · n · h · w`.
//!
//! Layouts:
//! - [`Tensor3`]: `(y * w + x) * c + ch`
//! - [`Kernel4`]: `((i * lk + j) * m + ch_in) * n + ch_out`
//! - [`DepthwiseKernel`]: `(i * lk + j) * m + ch`
//! - [`PointwiseKernel`]: `ch_in * n + ch_out`
//!
//! `i` indexes kernel rows and `j` kernel columns.

use std::io::{self, Read, Write};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConvError {
    #[error("input has {input} channels but the kernel expects {kernel}")]
    ChannelMismatch { input: usize, kernel: usize },
    #[error("kernel size {0} is even; only odd kernels are supported")]
    EvenKernel(usize),
    #[error("expected {expected} values, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("zero-sized dimension")]
    ZeroDim,
    #[error("bad UVK1 data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn check_data(data: &[f64], expected: usize) -> Result<(), ConvError> {
    if data.len() != expected {
        return Err(ConvError::Length {
            expected,
            actual: data.len(),
        });
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(ConvError::NonFinite(i));
    }
    Ok(())
}

fn check_kernel_size(lk: usize) -> Result<(), ConvError> {
    if lk == 0 {
        Err(ConvError::ZeroDim)
    } else if lk.is_multiple_of(2) {
        Err(ConvError::EvenKernel(lk))
    } else {
        Ok(())
    }
}

fn random_values(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Feature map of `h` rows, `w` columns and `c` channels, channel-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self, ConvError> {
        if h == 0 || w == 0 || c == 0 {
            return Err(ConvError::ZeroDim);
        }
        check_data(&data, h * w * c)?;
        Ok(Tensor3 { h, w, c, data })
    }

    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Tensor3 {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn random(rng: &mut impl Rng, h: usize, w: usize, c: usize) -> Self {
        Tensor3 {
            h,
            w,
            c,
            data: random_values(rng, h * w * c),
        }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.data[(y * self.w + x) * self.c + ch]
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!((self.h, self.w, self.c), (other.h, other.w, other.c), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Standard convolution weights, `lk × lk × m × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel4 {
    lk: usize,
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl Kernel4 {
    pub fn new(lk: usize, m: usize, n: usize, data: Vec<f64>) -> Result<Self, ConvError> {
        check_kernel_size(lk)?;
        if m == 0 || n == 0 {
            return Err(ConvError::ZeroDim);
        }
        check_data(&data, lk * lk * m * n)?;
        Ok(Kernel4 { lk, m, n, data })
    }

    pub fn random(rng: &mut impl Rng, lk: usize, m: usize, n: usize) -> Self {
        Kernel4 {
            lk,
            m,
            n,
            data: random_values(rng, lk * lk * m * n),
        }
    }

    /// 1×1 kernel mapping channel `i` to channel `i`.
    pub fn identity(m: usize) -> Self {
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            data[i * m + i] = 1.0;
        }
        Kernel4 { lk: 1, m, n: m, data }
    }

    pub fn lk(&self) -> usize {
        self.lk
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, ch_in: usize, ch_out: usize) -> f64 {
        self.data[((i * self.lk + j) * self.m + ch_in) * self.n + ch_out]
    }
}

/// One `lk × lk` spatial filter per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseKernel {
    lk: usize,
    m: usize,
    data: Vec<f64>,
}

impl DepthwiseKernel {
    pub fn new(lk: usize, m: usize, data: Vec<f64>) -> Result<Self, ConvError> {
        check_kernel_size(lk)?;
        if m == 0 {
            return Err(ConvError::ZeroDim);
        }
        check_data(&data, lk * lk * m)?;
        Ok(DepthwiseKernel { lk, m, data })
    }

    pub fn random(rng: &mut impl Rng, lk: usize, m: usize) -> Self {
        DepthwiseKernel {
            lk,
            m,
            data: random_values(rng, lk * lk * m),
        }
    }

    pub fn lk(&self) -> usize {
        self.lk
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, ch: usize) -> f64 {
        self.data[(i * self.lk + j) * self.m + ch]
    }
}

/// 1×1 cross-channel weights, `m × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseKernel {
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl PointwiseKernel {
    pub fn new(m: usize, n: usize, data: Vec<f64>) -> Result<Self, ConvError> {
        if m == 0 || n == 0 {
            return Err(ConvError::ZeroDim);
        }
        check_data(&data, m * n)?;
        Ok(PointwiseKernel { m, n, data })
    }

    pub fn random(rng: &mut impl Rng, m: usize, n: usize) -> Self {
        PointwiseKernel {
            m,
            n,
            data: random_values(rng, m * n),
        }
    }

    pub fn identity(m: usize) -> Self {
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            data[i * m + i] = 1.0;
        }
        PointwiseKernel { m, n: m, data }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, ch_in: usize, ch_out: usize) -> f64 {
        self.data[ch_in * self.n + ch_out]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvOutput {
    pub tensor: Tensor3,
    /// Multiply-accumulates performed, padding positions included.
    pub macs: u64,
}

fn check_channels(input: usize, kernel: usize) -> Result<(), ConvError> {
    if input != kernel {
        return Err(ConvError::ChannelMismatch { input, kernel });
    }
    Ok(())
}

/// Input row/column under kernel tap `k` for output coordinate `p`, or `None` in the padding.
#[inline]
fn tap(p: usize, k: usize, pad: usize, len: usize) -> Option<usize> {
    let idx = (p + k).checked_sub(pad)?;
    (idx < len).then_some(idx)
}

pub fn conv2d_standard(input: &Tensor3, kernel: &Kernel4) -> Result<ConvOutput, ConvError> {
    check_kernel_size(kernel.lk)?;
    check_channels(input.c, kernel.m)?;
    let (h, w, m, n, lk) = (input.h, input.w, kernel.m, kernel.n, kernel.lk);
    let pad = (lk - 1) / 2;
    let mut out = Tensor3::zeros(h, w, n);
    let mut macs = 0u64;
    for y in 0..h {
        for x in 0..w {
            let acc = &mut out.data[(y * w + x) * n..(y * w + x + 1) * n];
            for i in 0..lk {
                for j in 0..lk {
                    macs += (m * n) as u64;
                    let (Some(iy), Some(ix)) = (tap(y, i, pad, h), tap(x, j, pad, w)) else {
                        continue;
                    };
                    let pixel = &input.data[(iy * w + ix) * m..(iy * w + ix + 1) * m];
                    let taps = &kernel.data[(i * lk + j) * m * n..(i * lk + j + 1) * m * n];
                    for (ch_in, &v) in pixel.iter().enumerate() {
                        let weights = &taps[ch_in * n..(ch_in + 1) * n];
                        for (a, &k) in acc.iter_mut().zip(weights) {
                            *a += k * v;
                        }
                    }
                }
            }
        }
    }
    Ok(ConvOutput { tensor: out, macs })
}

pub fn depthwise_conv(input: &Tensor3, dk: &DepthwiseKernel) -> Result<ConvOutput, ConvError> {
    check_kernel_size(dk.lk)?;
    check_channels(input.c, dk.m)?;
    let (h, w, m, lk) = (input.h, input.w, dk.m, dk.lk);
    let pad = (lk - 1) / 2;
    let mut out = Tensor3::zeros(h, w, m);
    let mut macs = 0u64;
    for y in 0..h {
        for x in 0..w {
            let acc = &mut out.data[(y * w + x) * m..(y * w + x + 1) * m];
            for i in 0..lk {
                for j in 0..lk {
                    macs += m as u64;
                    let (Some(iy), Some(ix)) = (tap(y, i, pad, h), tap(x, j, pad, w)) else {
                        continue;
                    };
                    let pixel = &input.data[(iy * w + ix) * m..(iy * w + ix + 1) * m];
                    let taps = &dk.data[(i * lk + j) * m..(i * lk + j + 1) * m];
                    for ((a, &v), &k) in acc.iter_mut().zip(pixel).zip(taps) {
                        *a += k * v;
                    }
                }
            }
        }
    }
    Ok(ConvOutput { tensor: out, macs })
}

pub fn pointwise_conv(input: &Tensor3, pk: &PointwiseKernel) -> Result<ConvOutput, ConvError> {
    check_channels(input.c, pk.m)?;
    let (h, w, m, n) = (input.h, input.w, pk.m, pk.n);
    let mut out = Tensor3::zeros(h, w, n);
    for (pixel, acc) in input.data.chunks_exact(m).zip(out.data.chunks_exact_mut(n)) {
        for (ch_in, &v) in pixel.iter().enumerate() {
            for (a, &k) in acc.iter_mut().zip(&pk.data[ch_in * n..(ch_in + 1) * n]) {
                *a += k * v;
            }
        }
    }
    Ok(ConvOutput {
        tensor: out,
        macs: (m * n * h * w) as u64,
    })
}

/// Depthwise filtering followed by pointwise combination.
pub fn separable_conv(input: &Tensor3, dk: &DepthwiseKernel, pk: &PointwiseKernel) -> Result<ConvOutput, ConvError> {
    check_channels(dk.m, pk.m)?;
    let filtered = depthwise_conv(input, dk)?;
    let combined = pointwise_conv(&filtered.tensor, pk)?;
    Ok(ConvOutput {
        tensor: combined.tensor,
        macs: filtered.macs + combined.macs,
    })
}

/// Rank-one standard kernel `K[i,j,m,n] = dk[i,j,m] · pk[m,n]` equivalent to the separable pair.
pub fn compose_separable_kernel(dk: &DepthwiseKernel, pk: &PointwiseKernel) -> Result<Kernel4, ConvError> {
    check_channels(dk.m, pk.m)?;
    let (lk, m, n) = (dk.lk, dk.m, pk.n);
    let mut data = Vec::with_capacity(lk * lk * m * n);
    for i in 0..lk {
        for j in 0..lk {
            for ch in 0..m {
                let d = dk.get(i, j, ch);
                data.extend(pk.data[ch * n..(ch + 1) * n].iter().map(|&p| d * p));
            }
        }
    }
    Ok(Kernel4 { lk, m, n, data })
}

const UVK_MAGIC: &[u8; 4] = b"UVK1";

/// Dimensions plus flat values, as stored in a UVK1 file.
#[derive(Debug, Clone, PartialEq)]
pub struct UvkArray {
    pub dims: Vec<u32>,
    pub data: Vec<f64>,
}

impl UvkArray {
    pub fn write_to(&self, mut out: impl Write) -> Result<(), ConvError> {
        out.write_all(UVK_MAGIC)?;
        out.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for d in &self.dims {
            out.write_all(&d.to_le_bytes())?;
        }
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(8 + 4 * self.dims.len() + 8 * self.data.len());
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from(mut input: impl Read) -> Result<Self, ConvError> {
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        if &word != UVK_MAGIC {
            return Err(ConvError::Format(format!("bad magic {word:?}")));
        }
        input.read_exact(&mut word)?;
        let rank = u32::from_le_bytes(word) as usize;
        if rank > 8 {
            return Err(ConvError::Format(format!("rank {rank} too large")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            input.read_exact(&mut word)?;
            dims.push(u32::from_le_bytes(word));
        }
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or_else(|| ConvError::Format("dimension product overflows".into()))?;
        let mut raw = Vec::new();
        input.read_to_end(&mut raw)?;
        if raw.len() != len * 8 {
            return Err(ConvError::Format(format!(
                "expected {} payload bytes, found {}",
                len * 8,
                raw.len()
            )));
        }
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(UvkArray { dims, data })
    }

    fn expect_rank(&self, rank: usize) -> Result<(), ConvError> {
        if self.dims.len() != rank {
            return Err(ConvError::Format(format!(
                "expected rank {rank}, found {}",
                self.dims.len()
            )));
        }
        Ok(())
    }
}

impl From<&Tensor3> for UvkArray {
    fn from(t: &Tensor3) -> Self {
        UvkArray {
            dims: vec![t.h as u32, t.w as u32, t.c as u32],
            data: t.data.clone(),
        }
    }
}

impl TryFrom<UvkArray> for Tensor3 {
    type Error = ConvError;
    fn try_from(a: UvkArray) -> Result<Self, ConvError> {
        a.expect_rank(3)?;
        Tensor3::new(a.dims[0] as usize, a.dims[1] as usize, a.dims[2] as usize, a.data)
    }
}

impl From<&Kernel4> for UvkArray {
    fn from(k: &Kernel4) -> Self {
        UvkArray {
            dims: vec![k.lk as u32, k.lk as u32, k.m as u32, k.n as u32],
            data: k.data.clone(),
        }
    }
}

impl TryFrom<UvkArray> for Kernel4 {
    type Error = ConvError;
    fn try_from(a: UvkArray) -> Result<Self, ConvError> {
        a.expect_rank(4)?;
        if a.dims[0] != a.dims[1] {
            return Err(ConvError::Format("kernel is not square".into()));
        }
        Kernel4::new(a.dims[0] as usize, a.dims[2] as usize, a.dims[3] as usize, a.data)
    }
}

impl From<&DepthwiseKernel> for UvkArray {
    fn from(k: &DepthwiseKernel) -> Self {
        UvkArray {
            dims: vec![k.lk as u32, k.lk as u32, k.m as u32],
            data: k.data.clone(),
        }
    }
}

impl TryFrom<UvkArray> for DepthwiseKernel {
    type Error = ConvError;
    fn try_from(a: UvkArray) -> Result<Self, ConvError> {
        a.expect_rank(3)?;
        if a.dims[0] != a.dims[1] {
            return Err(ConvError::Format("kernel is not square".into()));
        }
        DepthwiseKernel::new(a.dims[0] as usize, a.dims[2] as usize, a.data)
    }
}

impl From<&PointwiseKernel> for UvkArray {
    fn from(k: &PointwiseKernel) -> Self {
        UvkArray {
            dims: vec![k.m as u32, k.n as u32],
            data: k.data.clone(),
        }
    }
}

impl TryFrom<UvkArray> for PointwiseKernel {
    type Error = ConvError;
    fn try_from(a: UvkArray) -> Result<Self, ConvError> {
        a.expect_rank(2)?;
        PointwiseKernel::new(a.dims[0] as usize, a.dims[1] as usize, a.data)
    }
}

/// Naive zero-padded convolution written independently of the layout-aware
/// kernels above. Used as the brute-force oracle by tests and the self check.
pub mod oracle {
    use super::{DepthwiseKernel, Kernel4, PointwiseKernel, Tensor3};

    fn padded(input: &Tensor3, y: i64, x: i64, ch: usize) -> f64 {
        if y < 0 || x < 0 || y >= input.h() as i64 || x >= input.w() as i64 {
            0.0
        } else {
            input.get(y as usize, x as usize, ch)
        }
    }

    pub fn standard(input: &Tensor3, kernel: &Kernel4) -> Tensor3 {
        let (h, w, n, lk) = (input.h(), input.w(), kernel.n(), kernel.lk());
        let r = (lk / 2) as i64;
        let mut data = Vec::with_capacity(h * w * n);
        for p in 0..h as i64 {
            for q in 0..w as i64 {
                for o in 0..n {
                    let mut sum = 0.0;
                    for di in -r..=r {
                        for dj in -r..=r {
                            for ch in 0..kernel.m() {
                                let k = kernel.get((di + r) as usize, (dj + r) as usize, ch, o);
                                sum += k * padded(input, p + di, q + dj, ch);
                            }
                        }
                    }
                    data.push(sum);
                }
            }
        }
        Tensor3::new(h, w, n, data).unwrap()
    }

    pub fn depthwise(input: &Tensor3, dk: &DepthwiseKernel) -> Tensor3 {
        let (h, w, m, lk) = (input.h(), input.w(), dk.m(), dk.lk());
        let r = (lk / 2) as i64;
        let mut data = Vec::with_capacity(h * w * m);
        for p in 0..h as i64 {
            for q in 0..w as i64 {
                for ch in 0..m {
                    let mut sum = 0.0;
                    for di in -r..=r {
                        for dj in -r..=r {
                            sum += dk.get((di + r) as usize, (dj + r) as usize, ch) * padded(input, p + di, q + dj, ch);
                        }
                    }
                    data.push(sum);
                }
            }
        }
        Tensor3::new(h, w, m, data).unwrap()
    }

    pub fn pointwise(input: &Tensor3, pk: &PointwiseKernel) -> Tensor3 {
        let (h, w, n) = (input.h(), input.w(), pk.n());
        let mut data = Vec::with_capacity(h * w * n);
        for y in 0..h {
            for x in 0..w {
                for o in 0..n {
                    data.push((0..pk.m()).map(|ch| input.get(y, x, ch) * pk.get(ch, o)).sum());
                }
            }
        }
        Tensor3::new(h, w, n, data).unwrap()
    }
}

/// Outcome of one randomized convolution property.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub passed: bool,
    pub trials: usize,
    pub max_abs_diff: f64,
    pub detail: String,
}

/// Runs the oracle, factorization and MAC-count properties on `trials`
/// random instances each, with kernels up to 7×7 and at most 8×8×4 inputs.
pub fn self_check(seed: u64, trials: usize) -> Vec<PropertyCheck> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-9;
    let mut diffs = [0.0f64; 4];
    let mut mac_failures = Vec::new();
    for t in 0..trials {
        let lk = [1, 3, 5, 7][rng.random_range(0..4)];
        let (h, w) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let (m, n) = (rng.random_range(1..=4), rng.random_range(1..=5));
        let input = Tensor3::random(&mut rng, h, w, m);
        let kernel = Kernel4::random(&mut rng, lk, m, n);
        let dk = DepthwiseKernel::random(&mut rng, lk, m);
        let pk = PointwiseKernel::random(&mut rng, m, n);

        let std_out = conv2d_standard(&input, &kernel).expect("shapes agree");
        diffs[0] = diffs[0].max(std_out.tensor.max_abs_diff(&oracle::standard(&input, &kernel)));
        let dw = depthwise_conv(&input, &dk).expect("shapes agree");
        diffs[1] = diffs[1].max(dw.tensor.max_abs_diff(&oracle::depthwise(&input, &dk)));
        let pw = pointwise_conv(&input, &pk).expect("shapes agree");
        diffs[2] = diffs[2].max(pw.tensor.max_abs_diff(&oracle::pointwise(&input, &pk)));
        let sep = separable_conv(&input, &dk, &pk).expect("shapes agree");
        let composed = compose_separable_kernel(&dk, &pk).expect("shapes agree");
        let via_standard = conv2d_standard(&input, &composed).expect("shapes agree");
        diffs[3] = diffs[3].max(sep.tensor.max_abs_diff(&via_standard.tensor));

        let px = (h * w) as u64;
        let (lk2, m, n) = (lk as u64 * lk as u64, m as u64, n as u64);
        let expected = [
            (std_out.macs, lk2 * m * n * px),
            (dw.macs, lk2 * m * px),
            (pw.macs, m * n * px),
            (sep.macs, (lk2 * m + m * n) * px),
        ];
        // separable/standard MACs must equal 1/n + 1/lk² exactly
        let ratio_ok =
            (sep.macs as u128) * (n as u128) * (lk2 as u128) == (std_out.macs as u128) * (lk2 as u128 + n as u128);
        if expected.iter().any(|(got, want)| got != want) || !ratio_ok {
            mac_failures.push(t);
        }
    }
    let by_diff = |name, d: f64| PropertyCheck {
        name,
        passed: d <= tol,
        trials,
        max_abs_diff: d,
        detail: format!("max |diff| {d:.3e}, tolerance {tol:e}"),
    };
    vec![
        by_diff("standard-vs-oracle", diffs[0]),
        by_diff("depthwise-vs-oracle", diffs[1]),
        by_diff("pointwise-vs-oracle", diffs[2]),
        by_diff("factorization", diffs[3]),
        PropertyCheck {
            name: "mac-exactness",
            passed: mac_failures.is_empty(),
            trials,
            max_abs_diff: 0.0,
            detail: if mac_failures.is_empty() {
                "all MAC counts exact".to_string()
            } else {
                format!("MAC mismatch in trials {mac_failures:?}")
            },
        },
    ]
}
