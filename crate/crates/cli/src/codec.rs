//! Binary PPM/PGM codec (P5 grayscale, P6 color, maxval 255).
//!
//! Pixels map to bytes as `round(v * 255)` and back as `b / 255`, so a
//! saved-then-loaded image reproduces its quantized values exactly.

use std::fs;
use std::path::Path;

use dmt_core::{Error, ImageTensor, Result};

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ppm(image: &ImageTensor) -> Result<Vec<u8>> {
    let (h, w, c) = image.shape();
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => {
            return Err(Error::InvalidInput(format!(
                "PPM stores 1 or 3 channels, image has {c}"
            )))
        }
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend(image.pixels().iter().map(|&v| quantize(v)));
    Ok(out)
}

struct Header<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.buf.get(self.pos) {
            if b == b'#' {
                while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format(format!("PPM header: missing {what}")));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("PPM header: bad {what}")))
    }
}

pub fn decode_ppm(buf: &[u8]) -> Result<ImageTensor> {
    let channels = match buf.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::Format("unsupported image magic (expected P5 or P6)".into())),
    };
    let mut hdr = Header { buf, pos: 2 };
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    let maxval = hdr.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval} (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format("PPM image has a zero dimension".into()));
    }
    match buf.get(hdr.pos) {
        Some(b) if b.is_ascii_whitespace() => hdr.pos += 1,
        _ => return Err(Error::Format("truncated PPM header".into())),
    }
    let len = width * height * channels;
    let data = &buf[hdr.pos..];
    if data.len() < len {
        return Err(Error::Format(format!(
            "truncated PPM data: expected {len} bytes, found {}",
            data.len()
        )));
    }
    let pixels = data[..len].iter().map(|&b| b as f64 / 255.0).collect();
    ImageTensor::new(height, width, channels, pixels)
}

pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let buf = fs::read(path).map_err(|e| Error::from(e).context(path.display()))?;
    decode_ppm(&buf).map_err(|e| e.context(path.display()))
}

pub fn save_image(image: &ImageTensor, path: &Path) -> Result<()> {
    fs::write(path, encode_ppm(image)?).map_err(|e| Error::from(e).context(path.display()))
}
