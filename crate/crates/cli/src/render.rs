//! Raster output: escape-time backgrounds, overdrawn rays, grayscale masks.

use crate::input::ImageFormat;
use num_complex::Complex64;
use std::io::Write;
use std::path::Path;
use tessera::potential::green;
use tessera::puzzle::{GridMask, GridSpec};
use tessera::MonicPolynomial;

pub struct Canvas {
    pub grid: GridSpec,
    /// Row-major RGB.
    pub rgb: Vec<[u8; 3]>,
}

impl Canvas {
    /// Escape-time shading from the Green function; K(f) is dark.
    pub fn escape_time(f: &MonicPolynomial, grid: GridSpec) -> Self {
        let rgb = (0..grid.nx * grid.ny)
            .map(|k| {
                let g = green(f, grid.pixel(k % grid.nx, k / grid.nx));
                if g <= 0.0 {
                    [24, 24, 32]
                } else {
                    // bands of constant log2 G, i.e. of constant escape time
                    let t = (-g.log2()).clamp(0.0, 40.0) / 40.0;
                    let v = (255.0 * (1.0 - t).powf(3.0)) as u8;
                    [v, v, 255u8.saturating_sub(v / 3)]
                }
            })
            .collect();
        Canvas { grid, rgb }
    }

    pub fn from_mask(mask: &GridMask) -> Self {
        let rgb = mask.bits.iter().map(|&b| if b { [255; 3] } else { [0; 3] }).collect();
        Canvas { grid: mask.grid, rgb }
    }

    fn to_pixel(&self, z: Complex64) -> (f64, f64) {
        let g = &self.grid;
        let x = (z.re - g.x_min) / (g.x_max - g.x_min) * g.nx as f64 - 0.5;
        let y = (g.y_max - z.im) / (g.y_max - g.y_min) * g.ny as f64 - 0.5;
        (x, y)
    }

    fn plot(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.grid.nx && (y as usize) < self.grid.ny {
            let k = y as usize * self.grid.nx + x as usize;
            self.rgb[k] = c;
        }
    }

    /// Polyline through the points, sampled at sub-pixel spacing.
    pub fn polyline(&mut self, pts: &[Complex64], c: [u8; 3]) {
        for w in pts.windows(2) {
            let (x0, y0) = self.to_pixel(w[0]);
            let (x1, y1) = self.to_pixel(w[1]);
            let n = ((x1 - x0).abs().max((y1 - y0).abs()) * 2.0).ceil().clamp(1.0, 1e5) as usize;
            for s in 0..=n {
                let t = s as f64 / n as f64;
                self.plot((x0 + t * (x1 - x0)).round() as i64, (y0 + t * (y1 - y0)).round() as i64, c);
            }
        }
    }

    pub fn dot(&mut self, z: Complex64, radius: i64, c: [u8; 3]) {
        let (x, y) = self.to_pixel(z);
        let (x, y) = (x.round() as i64, y.round() as i64);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if dx * dx + dy * dy <= radius * radius {
                    self.plot(x + dx, y + dy, c);
                }
            }
        }
    }

    pub fn write(&self, path: &Path, format: ImageFormat) -> std::io::Result<()> {
        let (w, h) = (self.grid.nx as u32, self.grid.ny as u32);
        match format {
            ImageFormat::Png => {
                let buf: Vec<u8> = self.rgb.iter().flatten().copied().collect();
                let img = image::RgbImage::from_raw(w, h, buf).expect("buffer matches grid");
                img.save_with_format(path, image::ImageFormat::Png).map_err(std::io::Error::other)
            }
            ImageFormat::Pgm => {
                let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
                write!(out, "P5\n{w} {h}\n255\n")?;
                let gray: Vec<u8> = self
                    .rgb
                    .iter()
                    .map(|p| ((299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32) / 1000) as u8)
                    .collect();
                out.write_all(&gray)?;
                out.flush()
            }
        }
    }
}
