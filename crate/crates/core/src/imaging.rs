//! Height x width x channel images with values in [0, 1], plus PNG I/O and
//! the sRGB transfer curve.

use std::path::Path;

use image::{ColorType, DynamicImage, ImageBuffer, ImageReader, Luma, Rgb};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// Rec. 709 luma weights.
pub const LUMA_709: [f32; 3] = [0.2126, 0.7152, 0.0722];

#[derive(Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl std::fmt::Debug for ImageTensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ImageTensor({}x{}x{})", self.height, self.width, self.channels)
    }
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Data(format!(
                "image buffer of {} values does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Copy of the `h x w` window whose top-left corner is `(y, x)`.
    pub fn crop(&self, y: usize, x: usize, h: usize, w: usize) -> Self {
        assert!(y + h <= self.height && x + w <= self.width, "crop out of bounds");
        let c = self.channels;
        let mut data = Vec::with_capacity(h * w * c);
        for row in y..y + h {
            let start = (row * self.width + x) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Self {
            height: h,
            width: w,
            channels: c,
            data,
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.height, self.width, self.channels, |y, x, c| {
            self.get(y, self.width - 1 - x, c)
        })
    }

    pub fn channel(&self, c: usize) -> Self {
        Self::from_fn(self.height, self.width, 1, |y, x, _| self.get(y, x, c))
    }

    /// Single-channel images are replicated to three channels; three-channel
    /// images are returned unchanged.
    pub fn to_rgb(&self) -> Result<Self> {
        match self.channels {
            3 => Ok(self.clone()),
            1 => Ok(Self::from_fn(self.height, self.width, 3, |y, x, _| self.get(y, x, 0))),
            c => Err(Error::Data(format!("cannot convert {c}-channel image to RGB"))),
        }
    }

    /// Rec. 709 luma of an RGB image; single-channel images pass through.
    pub fn luma(&self) -> Self {
        if self.channels == 1 {
            return self.clone();
        }
        Self::from_fn(self.height, self.width, 1, |y, x, _| {
            (0..3).map(|c| LUMA_709[c] * self.get(y, x, c)).sum()
        })
    }

    /// Stacks images with equal spatial size along the channel axis.
    pub fn stack_channels(images: &[&ImageTensor]) -> Result<Self> {
        let Some(first) = images.first() else {
            return Err(Error::Data("no images to stack".into()));
        };
        let (h, w) = (first.height, first.width);
        if images.iter().any(|im| im.height != h || im.width != w) {
            return Err(Error::Data("channel stacking needs equal image sizes".into()));
        }
        let channels = images.iter().map(|im| im.channels).sum();
        let mut data = Vec::with_capacity(h * w * channels);
        for p in 0..h * w {
            for im in images {
                data.extend_from_slice(&im.data[p * im.channels..(p + 1) * im.channels]);
            }
        }
        Ok(Self {
            height: h,
            width: w,
            channels,
            data,
        })
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor4<T> {
        Tensor4::from_vec(
            [1, self.height, self.width, self.channels],
            self.data.iter().map(|&v| T::lit(v as f64)).collect(),
        )
        .expect("length matches shape")
    }

    pub fn from_tensor<T: Scalar>(t: &Tensor4<T>, batch: usize) -> Self {
        let [_, h, w, c] = t.shape();
        let item = h * w * c;
        Self {
            height: h,
            width: w,
            channels: c,
            data: t.data()[batch * item..(batch + 1) * item]
                .iter()
                .map(|v| v.as_f64() as f32)
                .collect(),
        }
    }

    pub fn srgb_to_linear(&self) -> Self {
        self.map(srgb_to_linear)
    }

    pub fn linear_to_srgb(&self) -> Self {
        self.map(linear_to_srgb)
    }

    /// Rounds every value to the nearest level of a `bits`-bit encoding.
    pub fn quantize(&self, bits: u8) -> Self {
        let max = ((1u32 << bits) - 1) as f32;
        self.map(|v| (v.clamp(0.0, 1.0) * max).round() / max)
    }
}

pub fn srgb_to_linear(v: f32) -> f32 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(v: f32) -> f32 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

fn image_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Loads a PNG and normalises by `2^depth - 1`. Returns the image and its
/// bit depth. Grey images load with one channel, colour images with three
/// (alpha is dropped).
pub fn load_image_with_depth(path: &Path) -> Result<(ImageTensor, u8)> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| image_err(path, e.to_string()))?;
    let grey = matches!(
        img.color(),
        ColorType::L8 | ColorType::La8 | ColorType::L16 | ColorType::La16
    );
    let depth = match img.color() {
        ColorType::L8 | ColorType::La8 | ColorType::Rgb8 | ColorType::Rgba8 => 8,
        ColorType::L16 | ColorType::La16 | ColorType::Rgb16 | ColorType::Rgba16 => 16,
        other => return Err(image_err(path, format!("unsupported pixel format {other:?}"))),
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let image = match (grey, depth) {
        (true, 16) => from_u16(h, w, 1, img.to_luma16().into_raw()),
        (false, 16) => from_u16(h, w, 3, img.to_rgb16().into_raw()),
        (true, _) => from_u8(h, w, 1, img.to_luma8().into_raw()),
        (false, _) => from_u8(h, w, 3, img.to_rgb8().into_raw()),
    };
    Ok((image, depth))
}

/// Loads a PNG, optionally insisting on a declared bit depth.
pub fn load_image(path: &Path, expected_depth: Option<u8>) -> Result<ImageTensor> {
    let (img, depth) = load_image_with_depth(path)?;
    if let Some(want) = expected_depth {
        if want != depth {
            return Err(image_err(
                path,
                format!("bit depth {depth} does not match declared {want}"),
            ));
        }
    }
    Ok(img)
}

fn from_u16(h: usize, w: usize, c: usize, raw: Vec<u16>) -> ImageTensor {
    ImageTensor {
        height: h,
        width: w,
        channels: c,
        data: raw.into_iter().map(|v| v as f32 / 65535.0).collect(),
    }
}

fn from_u8(h: usize, w: usize, c: usize, raw: Vec<u8>) -> ImageTensor {
    ImageTensor {
        height: h,
        width: w,
        channels: c,
        data: raw.into_iter().map(|v| v as f32 / 255.0).collect(),
    }
}

/// Writes a 1- or 3-channel image as an 8- or 16-bit PNG.
pub fn save_image(path: &Path, image: &ImageTensor, bit_depth: u8) -> Result<()> {
    let (w, h) = (image.width as u32, image.height as u32);
    let dynamic = match (image.channels, bit_depth) {
        (1, 16) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, to_u16(image)).expect("buffer size"),
        ),
        (3, 16) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, to_u16(image)).expect("buffer size"),
        ),
        (1, 8) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, to_u8(image)).expect("buffer size"),
        ),
        (3, 8) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, to_u8(image)).expect("buffer size"),
        ),
        (c, d) => {
            return Err(image_err(
                path,
                format!("cannot encode {c}-channel image at {d} bits"),
            ))
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    dynamic
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e.to_string()))
}

fn to_u16(image: &ImageTensor) -> Vec<u16> {
    image
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect()
}

fn to_u8(image: &ImageTensor) -> Vec<u8> {
    image
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> ImageTensor {
        ImageTensor::from_fn(7, 5, 3, |y, x, c| ((y * 5 + x) * 3 + c) as f32 / 104.0)
    }

    #[test]
    fn png16_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = ImageTensor::from_fn(9, 11, 3, |y, x, c| {
            ((y * 7919 + x * 104_729 + c * 31) % 65536) as f32 / 65535.0
        });
        save_image(&path, &img, 16).unwrap();
        let (back, depth) = load_image_with_depth(&path).unwrap();
        assert_eq!(depth, 16);
        assert_eq!(back, img);
        assert!(load_image(&path, Some(8)).is_err());
    }

    #[test]
    fn png8_max_loads_as_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.png");
        save_image(&path, &ImageTensor::filled(2, 2, 1, 1.0), 8).unwrap();
        let img = load_image(&path, Some(8)).unwrap();
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn quantizing_to_8_bit_is_bounded() {
        let img = ImageTensor::from_fn(16, 16, 3, |y, x, c| {
            ((y * 4099 + x * 37 + c * 11) % 65536) as f32 / 65535.0
        });
        let q = img.quantize(8);
        let mae = img
            .data()
            .iter()
            .zip(q.data())
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / img.data().len() as f64;
        assert!(mae <= 1.0 / 255.0);
    }

    #[test]
    fn srgb_curve_round_trips() {
        for i in 0..=100 {
            let v = i as f32 / 100.0;
            assert!((linear_to_srgb(srgb_to_linear(v)) - v).abs() < 1e-5);
        }
    }

    #[test]
    fn crop_and_stack() {
        let img = ramp();
        let c = img.crop(2, 1, 3, 2);
        assert_eq!(c.get(0, 0, 1), img.get(2, 1, 1));
        assert_eq!(c.get(2, 1, 2), img.get(4, 2, 2));
        let s = ImageTensor::stack_channels(&[&img, &img.channel(0)]).unwrap();
        assert_eq!(s.channels(), 4);
        assert_eq!(s.get(3, 3, 3), img.get(3, 3, 0));
        let g = img.channel(1).to_rgb().unwrap();
        assert_eq!(g.get(1, 1, 0), g.get(1, 1, 2));
    }
}
