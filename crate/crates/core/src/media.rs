//! Frame ingestion: binary PPM/PGM decoding, bilinear resize, and
//! conversion to a normalized network input.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Interleaved 8-bit RGB, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRGB {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageRGB {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Geometry(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != 3 * width * height {
            return Err(Error::Usage(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                3 * width * height,
                pixels.len()
            )));
        }
        Ok(ImageRGB {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(3 * width * height)
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Binary PPM (P6) encoding, maxval 255.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRGB> {
    let bytes = std::fs::read(path)?;
    decode_pnm(&bytes)
}

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderParser<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::format(start, format!("{what} out of range")))
    }
}

/// Decodes P6 (RGB) or P5 (grayscale, replicated to RGB) with maxval 255.
pub fn decode_pnm(bytes: &[u8]) -> Result<ImageRGB> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => {
            return Err(Error::format(
                0,
                "not a binary PPM/PGM file (expected P6 or P5)",
            ))
        }
    };
    let mut p = HeaderParser { bytes, pos: 2 };
    let width = p.number("width")?;
    let height = p.number("height")?;
    let maxval_at = p.pos;
    let maxval = p.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(2, format!("empty image {width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::format(
            maxval_at,
            format!("unsupported maxval {maxval}, only 255 is accepted"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(p.pos) {
        Some(c) if c.is_ascii_whitespace() => p.pos += 1,
        _ => return Err(Error::format(p.pos, "missing whitespace after maxval")),
    }
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format(2, "image dimensions overflow"))?;
    let available = bytes.len() - p.pos;
    if available < needed {
        return Err(Error::format(
            p.pos,
            format!("short raster: expected {needed} bytes, found {available}"),
        ));
    }
    let raster = &bytes[p.pos..p.pos + needed];
    let pixels = if channels == 3 {
        raster.to_vec()
    } else {
        raster.iter().flat_map(|&g| [g, g, g]).collect()
    };
    ImageRGB::new(width, height, pixels)
}

/// Source coordinate and the two neighbouring taps for output index `o`,
/// using half-pixel centres and clamping at the edges.
fn sample_axis(o: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let src = ((o as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(in_len - 1);
    let i1 = (i0 + 1).min(in_len - 1);
    let frac = if i0 == in_len - 1 {
        0.0
    } else {
        src - i0 as f64
    };
    (i0, i1, frac)
}

/// Bilinear resize with half-pixel sampling, clamped edges, rounding to
/// the nearest integer.
pub fn resize_bilinear(img: &ImageRGB, out_w: usize, out_h: usize) -> Result<ImageRGB> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Usage(format!(
            "resize target must be positive, got {out_w}x{out_h}"
        )));
    }
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let xs: Vec<_> = (0..out_w)
        .map(|x| sample_axis(x, img.width, out_w))
        .collect();
    let mut pixels = Vec::with_capacity(3 * out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, fy) = sample_axis(y, img.height, out_h);
        for &(x0, x1, fx) in &xs {
            let p00 = img.pixel(x0, y0);
            let p01 = img.pixel(x1, y0);
            let p10 = img.pixel(x0, y1);
            let p11 = img.pixel(x1, y1);
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p01[c] as f64 * fx;
                let bottom = p10[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageRGB::new(out_w, out_h, pixels)
}

/// `3 x H x W` tensor with each channel mapped to `[-1, 1]` by
/// `v / 127.5 - 1`, channel order R, G, B.
pub fn normalize_to_tensor(img: &ImageRGB) -> Tensor {
    let (w, h) = (img.width, img.height);
    Tensor::from_fn(3, h, w, |c, y, x| {
        (img.pixels[3 * (y * w + x) + c] as f64 / 127.5 - 1.0) as f32
    })
    .expect("image dimensions are positive")
}

/// Load, resize to `size x size`, and normalize.
pub fn prepare_frame(path: impl AsRef<Path>, size: usize) -> Result<Tensor> {
    let img = load_image(path)?;
    Ok(normalize_to_tensor(&resize_bilinear(&img, size, size)?))
}
