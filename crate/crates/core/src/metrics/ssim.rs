use super::raster::RasterImage;

/// Side of the square comparison window.
pub const WINDOW: u32 = 8;
/// `(0.01 * 255)^2`
pub const C1: f64 = 6.5025;
/// `(0.03 * 255)^2`
pub const C2: f64 = 58.5225;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SsimError {
    #[error("cannot compare a {}x{} raster with a {}x{} raster", .left.0, .left.1, .right.0, .right.1)]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("a {width}x{height} raster has no {WINDOW}x{WINDOW} window")]
    TooSmall { width: u32, height: u32 },
}

/// Summed-area table with one row and column of zero padding.
struct Integral {
    stride: usize,
    sums: Vec<u64>,
}

impl Integral {
    fn new(w: usize, h: usize, value: impl Fn(usize, usize) -> u64) -> Integral {
        let stride = w + 1;
        let mut sums = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            for x in 0..w {
                row += value(x, y);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Integral { stride, sums }
    }

    fn window(&self, x: usize, y: usize, n: usize) -> i128 {
        let at = |x: usize, y: usize| self.sums[y * self.stride + x] as i128;
        at(x + n, y + n) - at(x, y + n) - at(x + n, y) + at(x, y)
    }
}

/// Mean structural similarity over every 8x8 window (stride 1, uniform
/// weights). Window statistics are accumulated in exact integer arithmetic,
/// so the result does not depend on argument order.
pub fn ssim(a: &RasterImage, b: &RasterImage) -> Result<f64, SsimError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(SsimError::DimensionMismatch { left: (a.width(), a.height()), right: (b.width(), b.height()) });
    }
    if a.width() < WINDOW || a.height() < WINDOW {
        return Err(SsimError::TooSmall { width: a.width(), height: a.height() });
    }
    let (w, h) = (a.width() as usize, a.height() as usize);
    let (pa, pb) = (a.pixels(), b.pixels());
    let px = |p: &[u8], x: usize, y: usize| u64::from(p[y * w + x]);
    let sa = Integral::new(w, h, |x, y| px(pa, x, y));
    let sb = Integral::new(w, h, |x, y| px(pb, x, y));
    let saa = Integral::new(w, h, |x, y| px(pa, x, y).pow(2));
    let sbb = Integral::new(w, h, |x, y| px(pb, x, y).pow(2));
    let sab = Integral::new(w, h, |x, y| px(pa, x, y) * px(pb, x, y));

    let n = WINDOW as usize;
    let count = (n * n) as i128;
    let norm = (count * count) as f64;
    let mut total = 0.0f64;
    for y in 0..=h - n {
        for x in 0..=w - n {
            let (ta, tb) = (sa.window(x, y, n), sb.window(x, y, n));
            let mu_a = ta as f64 / count as f64;
            let mu_b = tb as f64 / count as f64;
            let var_a = (count * saa.window(x, y, n) - ta * ta) as f64 / norm;
            let var_b = (count * sbb.window(x, y, n) - tb * tb) as f64 / norm;
            let cov = (count * sab.window(x, y, n) - ta * tb) as f64 / norm;
            let num = (2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2);
            let den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2);
            total += num / den;
        }
    }
    Ok(total / ((w - n + 1) * (h - n + 1)) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_one() {
        let img = RasterImage::new(16, 12, (0..192).map(|i| (i * 37 % 256) as u8).collect()).unwrap();
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn black_against_white() {
        let a = RasterImage::filled(64, 64, 0).unwrap();
        let b = RasterImage::filled(64, 64, 255).unwrap();
        let expected = C1 / (255.0 * 255.0 + C1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 9.9990e-5).abs() < 1e-8);
    }

    #[test]
    fn mismatch_names_both_sizes() {
        let a = RasterImage::filled(8, 8, 0).unwrap();
        let b = RasterImage::filled(9, 8, 0).unwrap();
        assert_eq!(ssim(&a, &b).unwrap_err().to_string(), "cannot compare a 8x8 raster with a 9x8 raster");
        let small = RasterImage::filled(7, 20, 0).unwrap();
        assert_eq!(ssim(&small, &small), Err(SsimError::TooSmall { width: 7, height: 20 }));
    }

    #[test]
    fn symmetric_bit_for_bit() {
        let a = RasterImage::new(10, 10, (0..100).map(|i| (i * 13 % 251) as u8).collect()).unwrap();
        let b = RasterImage::new(10, 10, (0..100).map(|i| (i * 7 % 241) as u8).collect()).unwrap();
        assert_eq!(ssim(&a, &b).unwrap().to_bits(), ssim(&b, &a).unwrap().to_bits());
    }
}
