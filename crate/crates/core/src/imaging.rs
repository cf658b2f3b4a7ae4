//! Grayscale rasters in the unit interval, PNG I/O, bilinear resizing and
//! finite-difference gradients.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{Error, Result};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "raster holds {} values, expected {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from `f(x, y)`, clamping values into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn transposed(&self) -> GrayImage {
        let mut data = Vec::with_capacity(self.data.len());
        for x in 0..self.width {
            for y in 0..self.height {
                data.push(self.get(x, y));
            }
        }
        GrayImage {
            width: self.height,
            height: self.width,
            data,
        }
    }

    /// Rotation by 90 degrees clockwise.
    pub fn rotated_cw(&self) -> GrayImage {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                // (x, y) -> (h - 1 - y, x) in an h-wide image
                data[x * h + (h - 1 - y)] = self.get(x, y);
            }
        }
        GrayImage {
            width: h,
            height: w,
            data,
        }
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Writes an 8-bit grayscale PNG (values rounded to the nearest level).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: Vec<u8> = self.data.iter().map(|v| (v * 255.0).round() as u8).collect();
        let img = ImageBuffer::<Luma<u8>, _>::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer size matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
    }
}

const BT601: [f32; 3] = [0.299, 0.587, 0.114];

fn luma8(rgb: &[u8]) -> f32 {
    (BT601[0] * rgb[0] as f32 + BT601[1] * rgb[1] as f32 + BT601[2] * rgb[2] as f32) / 255.0
}

fn luma16(rgb: &[u16]) -> f32 {
    (BT601[0] * rgb[0] as f32 + BT601[1] * rgb[1] as f32 + BT601[2] * rgb[2] as f32) / 65535.0
}

/// Converts a decoded image to unit-interval luma.
pub fn from_dynamic(img: DynamicImage, origin: &Path) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let err = |message: String| Error::Image {
        path: origin.to_path_buf(),
        message,
    };
    if w == 0 || h == 0 {
        return Err(err("zero-dimension image".into()));
    }
    let data: Vec<f32> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| p.0[0] as f32 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(b) => b.pixels().map(|p| p.0[0] as f32 / 65535.0).collect(),
        DynamicImage::ImageRgb8(b) => b.pixels().map(|p| luma8(&p.0)).collect(),
        DynamicImage::ImageRgba8(b) => b.pixels().map(|p| luma8(&p.0[..3])).collect(),
        DynamicImage::ImageRgb16(b) => b.pixels().map(|p| luma16(&p.0)).collect(),
        DynamicImage::ImageRgba16(b) => b.pixels().map(|p| luma16(&p.0[..3])).collect(),
        other => {
            return Err(err(format!("unsupported pixel format {:?}", other.color())));
        }
    };
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    GrayImage::new(w, h, data).map_err(|e| err(e.to_string()))
}

pub fn load_image(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes, path)
}

pub fn decode_png(bytes: &[u8], origin: &Path) -> Result<GrayImage> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(|e| {
        Error::Image {
            path: origin.to_path_buf(),
            message: e.to_string(),
        }
    })?;
    from_dynamic(img, origin)
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    let v = a + t * (b - a);
    v.clamp(a.min(b), a.max(b))
}

/// Bilinear resampling with pixel-center alignment.
pub fn resize(img: &GrayImage, new_width: usize, new_height: usize) -> Result<GrayImage> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::invalid("resize target must be at least 1x1"));
    }
    if new_width == img.width && new_height == img.height {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / new_width as f64;
    let sy = img.height as f64 / new_height as f64;
    let sample = |pos: f64, len: usize| -> (usize, usize, f32) {
        let p = pos.clamp(0.0, (len - 1) as f64);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, (p - i0 as f64) as f32)
    };
    let cols: Vec<_> = (0..new_width)
        .map(|x| sample((x as f64 + 0.5) * sx - 0.5, img.width))
        .collect();
    let mut data = Vec::with_capacity(new_width * new_height);
    for y in 0..new_height {
        let (y0, y1, ty) = sample((y as f64 + 0.5) * sy - 0.5, img.height);
        for &(x0, x1, tx) in &cols {
            let top = lerp(img.get(x0, y0), img.get(x1, y0), tx);
            let bottom = lerp(img.get(x0, y1), img.get(x1, y1), tx);
            data.push(lerp(top, bottom, ty));
        }
    }
    GrayImage::new(new_width, new_height, data)
}

/// Horizontal and vertical derivatives of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f32>,
    pub gy: Vec<f32>,
}

impl Gradients {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.gx[i], self.gy[i])
    }

    pub fn magnitude(&self, x: usize, y: usize) -> f32 {
        let (gx, gy) = self.at(x, y);
        gx.hypot(gy)
    }

    pub fn orientation(&self, x: usize, y: usize) -> f32 {
        let (gx, gy) = self.at(x, y);
        gy.atan2(gx)
    }
}

/// Central differences `(I[x+1] - I[x-1]) / 2` inside, one-sided at the border.
pub fn gradients(img: &GrayImage) -> Result<Gradients> {
    let (w, h) = (img.width, img.height);
    if w < 3 || h < 3 {
        return Err(Error::invalid(format!("gradients need at least 3x3 pixels, got {w}x{h}")));
    }
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        let out = &mut gx[y * w..(y + 1) * w];
        out[0] = row[1] - row[0];
        out[w - 1] = row[w - 1] - row[w - 2];
        for x in 1..w - 1 {
            out[x] = 0.5 * (row[x + 1] - row[x - 1]);
        }
    }
    for y in 0..h {
        let (up, down, scale) = match y {
            0 => (0, 1, 1.0),
            y if y == h - 1 => (h - 2, h - 1, 1.0),
            y => (y - 1, y + 1, 0.5),
        };
        for x in 0..w {
            gy[y * w + x] = scale * (img.data[down * w + x] - img.data[up * w + x]);
        }
    }
    Ok(Gradients {
        width: w,
        height: h,
        gx,
        gy,
    })
}
