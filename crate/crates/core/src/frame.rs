//! Grayscale frames, square patches, NCC scoring and binary PGM I/O.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Per-pixel variance at or below this is treated as a featureless patch.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame must be at least 1x1, got {width}x{height}")]
    EmptyFrame { width: usize, height: usize },
    #[error("expected {expected} pixels, got {actual}")]
    PixelCount { expected: usize, actual: usize },
    #[error("pixel {index} has luminance {value} outside [0, 1]")]
    LuminanceRange { index: usize, value: f64 },
    #[error("patch half-size must be >= 1")]
    InvalidHalf,
    #[error("window of half-size {half} around ({x}, {y}) leaves the {width}x{height} frame")]
    OutOfBounds {
        x: i64,
        y: i64,
        half: usize,
        width: usize,
        height: usize,
    },
    #[error("patch dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("PGM data truncated: expected {expected} bytes, found {actual}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("no .pgm frames found in {0}")]
    EmptySequence(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FrameError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        FrameError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A row-major grayscale image with luminance in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    seq: u64,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, seq: u64) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::EmptyFrame { width, height });
        }
        if pixels.len() != width * height {
            return Err(FrameError::PixelCount {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        if let Some((index, &value)) = pixels.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(FrameError::LuminanceRange { index, value });
        }
        Ok(Frame {
            width,
            height,
            pixels,
            seq,
        })
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel, clamped into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        seq: u64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, FrameError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Frame::new(width, height, pixels, seq)
    }

    pub fn uniform(width: usize, height: usize, value: f64, seq: u64) -> Result<Self, FrameError> {
        Frame::new(width, height, vec![value; width * height], seq)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn with_seq(mut self, seq: u64) -> Self {
        self.seq = seq;
        self
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    /// True when the `(2h+1)`-square window around `center` lies inside the frame.
    pub fn window_fits(&self, center: PatchCenter, half: usize) -> bool {
        let h = half as i64;
        center.x - h >= 0 && center.y - h >= 0 && center.x + h < self.width as i64 && center.y + h < self.height as i64
    }
}

/// Integer pixel position; `y` grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchCenter {
    pub x: i64,
    pub y: i64,
}

impl PatchCenter {
    pub const fn new(x: i64, y: i64) -> Self {
        PatchCenter { x, y }
    }
}

/// An odd-sized square window copied out of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    center: PatchCenter,
    half: usize,
    pixels: Vec<f64>,
}

impl Patch {
    pub fn new(center: PatchCenter, half: usize, pixels: Vec<f64>) -> Result<Self, FrameError> {
        if half == 0 {
            return Err(FrameError::InvalidHalf);
        }
        let side = 2 * half + 1;
        if pixels.len() != side * side {
            return Err(FrameError::PixelCount {
                expected: side * side,
                actual: pixels.len(),
            });
        }
        Ok(Patch { center, half, pixels })
    }

    pub fn center(&self) -> PatchCenter {
        self.center
    }

    pub fn half(&self) -> usize {
        self.half
    }

    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

pub fn extract_patch(frame: &Frame, center: PatchCenter, half: usize) -> Result<Patch, FrameError> {
    if half == 0 {
        return Err(FrameError::InvalidHalf);
    }
    if !frame.window_fits(center, half) {
        return Err(FrameError::OutOfBounds {
            x: center.x,
            y: center.y,
            half,
            width: frame.width,
            height: frame.height,
        });
    }
    let side = 2 * half + 1;
    let x0 = center.x as usize - half;
    let y0 = center.y as usize - half;
    let mut pixels = Vec::with_capacity(side * side);
    for y in y0..y0 + side {
        pixels.extend_from_slice(&frame.row(y)[x0..x0 + side]);
    }
    Ok(Patch { center, half, pixels })
}

/// Zero-mean normalized cross-correlation of two equally sized patches.
///
/// Returns 0 when either patch is featureless (per-pixel variance at or below
/// [`VARIANCE_FLOOR`]).
pub fn correlation(a: &Patch, b: &Patch) -> Result<f64, FrameError> {
    if a.half != b.half {
        return Err(FrameError::DimensionMismatch {
            left: a.side(),
            right: b.side(),
        });
    }
    Ok(ncc(&a.pixels, &b.pixels))
}

pub(crate) fn ncc(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= VARIANCE_FLOOR * n || sbb <= VARIANCE_FLOOR * n {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

fn skip_ws_and_comments(data: &[u8], mut pos: usize) -> usize {
    while pos < data.len() {
        match data[pos] {
            b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => pos += 1,
            b'#' => {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            }
            _ => break,
        }
    }
    pos
}

fn header_number(data: &[u8], pos: &mut usize, what: &str) -> Result<usize, FrameError> {
    *pos = skip_ws_and_comments(data, *pos);
    let start = *pos;
    while *pos < data.len() && data[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(FrameError::MalformedHeader(format!("missing {what}")));
    }
    std::str::from_utf8(&data[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| FrameError::MalformedHeader(format!("unparsable {what}")))
}

/// Decodes a binary (P5) PGM with maxval 255.
pub fn decode_pgm(data: &[u8], seq: u64) -> Result<Frame, FrameError> {
    if data.len() < 2 || &data[..2] != b"P5" {
        return Err(FrameError::MalformedHeader("magic is not P5".into()));
    }
    let mut pos = 2;
    let width = header_number(data, &mut pos, "width")?;
    let height = header_number(data, &mut pos, "height")?;
    let maxval = header_number(data, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(FrameError::MalformedHeader(format!(
            "maxval {maxval} unsupported, expected 255"
        )));
    }
    if width == 0 || height == 0 {
        return Err(FrameError::MalformedHeader(format!("zero dimension {width}x{height}")));
    }
    match data.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(FrameError::MalformedHeader("missing whitespace after maxval".into())),
    }
    let expected = width * height;
    let body = &data[pos..];
    if body.len() < expected {
        return Err(FrameError::TruncatedData {
            expected,
            actual: body.len(),
        });
    }
    let pixels = body[..expected].iter().map(|&b| f64::from(b) / 255.0).collect();
    Frame::new(width, height, pixels, seq)
}

pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend(frame.pixels.iter().map(|&v| (v * 255.0).round() as u8));
    out
}

pub fn read_frame_pgm(path: impl AsRef<Path>) -> Result<Frame, FrameError> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| FrameError::io(path, e))?;
    decode_pgm(&data, 0)
}

pub fn write_frame_pgm(frame: &Frame, path: impl AsRef<Path>) -> Result<(), FrameError> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| FrameError::io(path, e))?;
    file.write_all(&encode_pgm(frame)).map_err(|e| FrameError::io(path, e))
}

/// File name used for frame `seq` inside a sequence directory (1-based numbering).
pub fn sequence_file_name(seq: u64) -> String {
    format!("frame_{:06}.pgm", seq + 1)
}

/// Reads every `.pgm` in `dir`, ordered lexicographically by file name.
/// Frames are assigned `seq` 0, 1, 2, ... in that order.
pub fn read_sequence(dir: impl AsRef<Path>) -> Result<Vec<Frame>, FrameError> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| FrameError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "pgm"))
        .collect();
    if paths.is_empty() {
        return Err(FrameError::EmptySequence(dir.to_path_buf()));
    }
    paths.sort();
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| read_frame_pgm(p).map(|f| f.with_seq(i as u64)))
        .collect()
}

pub fn write_sequence(frames: &[Frame], dir: impl AsRef<Path>) -> Result<(), FrameError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| FrameError::io(dir, e))?;
    for frame in frames {
        write_frame_pgm(frame, dir.join(sequence_file_name(frame.seq)))?;
    }
    Ok(())
}
