use std::fmt;

use crate::graph::BoundingBox;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RasterError {
    #[error("raster {width}x{height} has no pixels")]
    Empty { width: u32, height: u32 },
    #[error("expected {expected} pixels, got {actual}")]
    PixelCount { expected: usize, actual: usize },
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("region {region} lies outside the {width}x{height} raster")]
    OutOfBounds { region: BoundingBox, width: u32, height: u32 },
}

/// Row-major 8-bit grayscale image.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RasterImage({}x{})", self.width, self.height)
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::Empty { width, height });
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(RasterError::PixelCount { expected, actual: pixels.len() });
        }
        Ok(RasterImage { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self, RasterError> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub(crate) fn set(&mut self, x: u32, y: u32, v: u8) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = v;
    }

    /// Number of pixels that differ from `background`.
    pub fn ink(&self, background: u8) -> usize {
        self.pixels.iter().filter(|&&p| p != background).count()
    }

    /// Copy of the pixels under `region`, without resampling.
    pub fn sub_image(&self, region: BoundingBox) -> Result<RasterImage, RasterError> {
        if !region.fits_within(self.width, self.height) {
            return Err(RasterError::OutOfBounds { region, width: self.width, height: self.height });
        }
        let mut pixels = Vec::with_capacity(region.w as usize * region.h as usize);
        for y in region.y..region.y + region.h {
            let start = y as usize * self.width as usize + region.x as usize;
            pixels.extend_from_slice(&self.pixels[start..start + region.w as usize]);
        }
        RasterImage::new(region.w, region.h, pixels)
    }

    /// Binary PGM (P5) with maxval 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<RasterImage, RasterError> {
        let bad = |m: &str| RasterError::Pgm(m.to_string());
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // Skip whitespace and comments between header fields.
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(_) => break,
                    None => return Err(bad("truncated header")),
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
                pos += 1;
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
        }
        if fields[0] != "P5" {
            return Err(bad("missing P5 magic"));
        }
        let num = |s: &str| s.parse::<u32>().map_err(|_| RasterError::Pgm(format!("bad number {s:?}")));
        let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(bad("only 8-bit maxval is supported"));
        }
        // Exactly one whitespace byte separates the header from the data.
        if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
            return Err(bad("truncated header"));
        }
        RasterImage::new(width, height, bytes[pos + 1..].to_vec())
    }
}
