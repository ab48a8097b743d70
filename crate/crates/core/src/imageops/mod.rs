//! Image representation, color conversion, resampling, patches and
//! augmentation.

mod augment;
mod filter;
pub mod io;
mod resize;
mod scale;

pub use augment::{augment, Augment, Rotation};
pub(crate) use filter::blur_plane;
pub use filter::{gaussian_blur, gaussian_taps};
pub use resize::{resize, resize_by, Interpolation};
pub use scale::Scale;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColorSpace {
    Rgb,
    Y,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Rgb => 3,
            ColorSpace::Y => 1,
        }
    }
}

/// Planar (channel-major) raster with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    space: ColorSpace,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image from planar data, clamping every value into `[0, 1]`.
    pub fn new(height: usize, width: usize, space: ColorSpace, mut data: Vec<f64>) -> Result<Self> {
        let expect = height * width * space.channels();
        if data.len() != expect {
            return Err(Error::shape(
                "Image::new",
                format!(
                    "{height}x{width}x{} needs {expect} values, got {}",
                    space.channels(),
                    data.len()
                ),
            ));
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite { op: "Image::new" });
        }
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(Image {
            height,
            width,
            space,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, space: ColorSpace, value: f64) -> Self {
        Image {
            height,
            width,
            space,
            data: vec![value.clamp(0.0, 1.0); height * width * space.channels()],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        space: ColorSpace,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * space.channels());
        for c in 0..space.channels() {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x).clamp(0.0, 1.0));
                }
            }
        }
        Image {
            height,
            width,
            space,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.space.channels()
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.space == other.space
    }

    /// Applies `f` to every sample and re-clamps.
    pub fn map(&self, mut f: impl FnMut(usize, f64) -> f64) -> Image {
        let plane = self.height * self.width;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i / plane, v).clamp(0.0, 1.0))
            .collect();
        Image { data, ..*self }
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Image> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::InvalidArgument(format!(
                "crop ({x},{y},{w},{h}) outside {}x{}",
                self.width, self.height
            )));
        }
        Ok(Image::from_fn(h, w, self.space, |c, yy, xx| {
            self.get(c, y + yy, x + xx)
        }))
    }

    /// Bilinear sample at continuous pixel-center coordinates, clamping
    /// coordinates to the image.
    pub fn sample_clamped(&self, c: usize, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        self.sample_bilinear_unchecked(c, x, y)
    }

    /// Bilinear sample; `None` when the point lies outside the pixel-center
    /// hull.
    pub fn sample_bilinear(&self, c: usize, x: f64, y: f64) -> Option<f64> {
        const EPS: f64 = 1e-9;
        if x < -EPS
            || y < -EPS
            || x > (self.width - 1) as f64 + EPS
            || y > (self.height - 1) as f64 + EPS
        {
            return None;
        }
        Some(self.sample_bilinear_unchecked(
            c,
            x.clamp(0.0, (self.width - 1) as f64),
            y.clamp(0.0, (self.height - 1) as f64),
        ))
    }

    fn sample_bilinear_unchecked(&self, c: usize, x: f64, y: f64) -> f64 {
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        if fx == 0.0 && fy == 0.0 {
            return self.get(c, y0, x0);
        }
        let top = self.get(c, y0, x0) * (1.0 - fx) + self.get(c, y0, x1) * fx;
        let bot = self.get(c, y1, x0) * (1.0 - fx) + self.get(c, y1, x1) * fx;
        top * (1.0 - fy) + bot * fy
    }
}

/// BT.601 studio-swing offsets and weights (inputs and outputs in `[0,1]`).
pub const Y_OFFSET: f64 = 16.0;
pub const Y_WEIGHTS: [f64; 3] = [65.481, 128.553, 24.966];

/// Luma convention for [`to_y_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LumaRange {
    /// `Y = (16 + 65.481 R + 128.553 G + 24.966 B) / 255`.
    #[default]
    Studio,
    /// `Y = 0.299 R + 0.587 G + 0.114 B`.
    Full,
}

pub fn to_y(img: &Image) -> Result<Image> {
    to_y_with(img, LumaRange::Studio)
}

pub fn to_y_with(img: &Image, range: LumaRange) -> Result<Image> {
    if img.space() != ColorSpace::Rgb {
        return Err(Error::InvalidArgument(format!(
            "to_y needs an RGB image, got {} channel(s)",
            img.channels()
        )));
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let data = (0..r.len())
        .map(|i| match range {
            LumaRange::Studio => {
                (Y_OFFSET + Y_WEIGHTS[0] * r[i] + Y_WEIGHTS[1] * g[i] + Y_WEIGHTS[2] * b[i]) / 255.0
            }
            LumaRange::Full => 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i],
        })
        .collect();
    Image::new(img.height(), img.width(), ColorSpace::Y, data)
}

/// `to_y` for RGB input, identity for Y input.
pub fn luma(img: &Image) -> Image {
    match img.space() {
        ColorSpace::Y => img.clone(),
        ColorSpace::Rgb => to_y(img).expect("rgb input"),
    }
}

/// Top-left origins of a sliding-window patch layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub size: usize,
    pub stride: usize,
    /// `(x, y)` top-left corners, row-major.
    pub origins: Vec<(usize, usize)>,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, size: usize, stride: usize) -> Result<Self> {
        if size == 0 || stride == 0 {
            return Err(Error::InvalidArgument(
                "patch size and stride must be positive".into(),
            ));
        }
        let axis = |len: usize| -> Vec<usize> {
            (0..)
                .map(|i| i * stride)
                .take_while(|&o| o + size <= len)
                .collect()
        };
        let xs = axis(width);
        let origins = axis(height)
            .into_iter()
            .flat_map(|y| xs.iter().map(move |&x| (x, y)))
            .collect();
        Ok(PatchGrid {
            size,
            stride,
            origins,
        })
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

pub fn extract_patches(img: &Image, size: usize, stride: usize) -> Result<(PatchGrid, Vec<Image>)> {
    let grid = PatchGrid::new(img.height(), img.width(), size, stride)?;
    let patches = grid
        .origins
        .iter()
        .map(|&(x, y)| img.crop(x, y, size, size))
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, patches))
}

#[cfg(test)]
mod tests;
