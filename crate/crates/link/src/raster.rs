//! 8-bit grayscale images with binary PGM (P5) import and export.

use std::io::{self, BufRead, Write};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRaster {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities.
    pub data: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("not a binary PGM (P5) file")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    BadHeader(&'static str),
    #[error("only 8-bit PGM is supported (maxval {0})")]
    UnsupportedDepth(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl FrameRaster {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample at continuous coordinates where pixel `(i, j)` covers
    /// `[i, i+1) x [j, j+1)` and its value sits at the center. Outside the
    /// image returns `background`.
    pub fn sample_bilinear(&self, x: f64, y: f64, background: f64) -> f64 {
        let fx = x - 0.5;
        let fy = y - 0.5;
        if !(fx > -1.0 && fy > -1.0 && fx < self.width as f64 && fy < self.height as f64) {
            return background;
        }
        let x0 = fx.floor();
        let y0 = fy.floor();
        let (ax, ay) = (fx - x0, fy - y0);
        let at = |xi: f64, yi: f64| -> f64 {
            if xi < 0.0 || yi < 0.0 || xi >= self.width as f64 || yi >= self.height as f64 {
                background
            } else {
                f64::from(self.get(xi as usize, yi as usize))
            }
        };
        let top = at(x0, y0) * (1.0 - ax) + at(x0 + 1.0, y0) * ax;
        let bottom = at(x0, y0 + 1.0) * (1.0 - ax) + at(x0 + 1.0, y0 + 1.0) * ax;
        top * (1.0 - ay) + bottom * ay
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| f64::from(*v)).sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Self, PgmError> {
        let mut magic = [0u8; 2];
        r.read_exact(&mut magic)?;
        if &magic != b"P5" {
            return Err(PgmError::BadMagic);
        }
        let mut fields = [0u32; 3];
        for f in fields.iter_mut() {
            *f = read_header_number(&mut r)?;
        }
        let [width, height, maxval] = fields;
        if maxval == 0 || maxval > 255 {
            return Err(PgmError::UnsupportedDepth(maxval));
        }
        let (width, height) = (width as usize, height as usize);
        if width == 0 || height == 0 {
            return Err(PgmError::BadHeader("zero dimension"));
        }
        let mut data = vec![0u8; width * height];
        r.read_exact(&mut data)?;
        if maxval != 255 {
            for v in data.iter_mut() {
                *v = ((u32::from(*v) * 255 + maxval / 2) / maxval) as u8;
            }
        }
        Ok(Self { width, height, data })
    }
}

/// Reads one decimal header field, skipping whitespace and `#` comments, and
/// consumes the single whitespace byte that terminates it.
fn read_header_number<R: BufRead>(r: &mut R) -> Result<u32, PgmError> {
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)?;
        match byte[0] {
            b'#' => {
                let mut skip = Vec::new();
                r.read_until(b'\n', &mut skip)?;
            }
            c if c.is_ascii_whitespace() => {}
            c if c.is_ascii_digit() => break,
            _ => return Err(PgmError::BadHeader("expected a number")),
        }
    }
    let mut value: u32 = 0;
    loop {
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add(u32::from(byte[0] - b'0')))
            .ok_or(PgmError::BadHeader("number too large"))?;
        r.read_exact(&mut byte)?;
        if byte[0].is_ascii_whitespace() {
            return Ok(value);
        }
        if !byte[0].is_ascii_digit() {
            return Err(PgmError::BadHeader("expected a number"));
        }
    }
}
