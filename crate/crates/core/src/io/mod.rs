//! File formats and the core raster types: Lab images, likelihood stacks,
//! skeletons and label maps.

mod lab;
pub mod pft;
mod skeleton;

use std::path::Path;

use image::{ColorType, GrayImage, ImageReader, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};

pub use lab::srgb_to_lab;
pub use pft::{read_pft, write_pft, Tensor};
pub use skeleton::{read_skeleton, ImageSize, PartLine, Skeleton};

/// Row-major Lab image, three `f64` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageLab {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ImageLab {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("image has a zero dimension".into()));
        }
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} Lab image needs {} values, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(l) = data.chunks_exact(3).map(|p| p[0]).find(|l| !(0.0..=100.0).contains(l)) {
            return Err(Error::InvalidInput(format!("lightness {l} outside [0, 100]")));
        }
        Ok(ImageLab { width, height, data })
    }

    /// Builds an image where every pixel has the same Lab color.
    pub fn uniform(width: usize, height: usize, lab: [f64; 3]) -> Result<Self> {
        let data = (0..width * height).flat_map(|_| lab).collect();
        Self::new(width, height, data)
    }

    pub fn from_srgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} RGB buffer needs {} bytes, got {}",
                width * height * 3,
                rgb.len()
            )));
        }
        let data = rgb
            .chunks_exact(3)
            .flat_map(|p| srgb_to_lab([p[0], p[1], p[2]]))
            .collect();
        Self::new(width, height, data)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn pixel(&self, index: usize) -> [f64; 3] {
        let p = &self.data[index * 3..index * 3 + 3];
        [p[0], p[1], p[2]]
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixel(y * self.width + x)
    }
}

/// Loads an 8-bit RGB PNG and converts it to Lab.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageLab> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader
        .decode()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if decoded.color() != ColorType::Rgb8 {
        return Err(Error::Format(format!(
            "{}: expected 8-bit RGB, found {:?}",
            path.display(),
            decoded.color()
        )));
    }
    let rgb = decoded.into_rgb8();
    ImageLab::from_srgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
}

pub fn save_rgb_png(path: impl AsRef<Path>, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let img = RgbImage::from_raw(width as u32, height as u32, rgb.to_vec())
        .ok_or_else(|| Error::DimensionMismatch("rgb buffer size".into()))?;
    img.save(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Per-pixel class likelihoods, stored as `f32` in height × width × labels order.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodStack {
    pub width: usize,
    pub height: usize,
    pub n_labels: usize,
    pub data: Vec<f32>,
}

impl LikelihoodStack {
    pub fn new(width: usize, height: usize, n_labels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("likelihood stack has a zero dimension".into()));
        }
        if n_labels < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 labels, got {n_labels}")));
        }
        if data.len() != width * height * n_labels {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width}x{n_labels} stack needs {} values, got {}",
                width * height * n_labels,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("likelihood {v} outside [0, 1]")));
        }
        Ok(LikelihoodStack {
            width,
            height,
            n_labels,
            data,
        })
    }

    #[inline]
    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn pixel(&self, index: usize) -> &[f32] {
        &self.data[index * self.n_labels..(index + 1) * self.n_labels]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            dims: vec![self.height, self.width, self.n_labels],
            data: self.data.clone(),
        }
    }

    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        match tensor.dims[..] {
            [h, w, n] => Self::new(w, h, n, tensor.data),
            _ => Err(Error::Format(format!(
                "likelihood tensor must have rank 3, got dims {:?}",
                tensor.dims
            ))),
        }
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<LikelihoodStack> {
    LikelihoodStack::from_tensor(read_pft(path)?)
}

pub fn write_tensor(stack: &LikelihoodStack, path: impl AsRef<Path>) -> Result<()> {
    write_pft(&stack.to_tensor(), path)
}

/// Per-pixel class indices; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} label map needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(LabelMap { width, height, data })
    }

    pub fn max_label(&self) -> u8 {
        self.data.iter().copied().max().unwrap_or(0)
    }
}

pub fn write_label_png(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = GrayImage::from_raw(labels.width as u32, labels.height as u32, labels.data.clone())
        .ok_or_else(|| Error::DimensionMismatch("label buffer size".into()))?;
    img.save(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn read_label_png(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let decoded = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if decoded.color() != ColorType::L8 {
        return Err(Error::Format(format!(
            "{}: label maps must be 8-bit grayscale, found {:?}",
            path.display(),
            decoded.color()
        )));
    }
    let gray = decoded.into_luma8();
    LabelMap::new(gray.width() as usize, gray.height() as usize, gray.into_raw())
}

const PALETTE: [[u8; 3]; 8] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

pub fn label_color(label: u8) -> [u8; 3] {
    if (label as usize) < PALETTE.len() {
        PALETTE[label as usize]
    } else {
        // golden-ratio hue walk for large label sets
        let h = (label as f64 * 0.618_033_988_75).fract();
        let c = |o: f64| ((((h + o) * std::f64::consts::TAU).sin() * 0.5 + 0.5) * 255.0) as u8;
        [c(0.0), c(1.0 / 3.0), c(2.0 / 3.0)]
    }
}

/// Blends the label palette over a grayscale rendition of the image's lightness.
pub fn write_overlay_png(labels: &LabelMap, image: &ImageLab, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if labels.width != image.width || labels.height != image.height {
        return Err(Error::DimensionMismatch("overlay: labels and image differ in size".into()));
    }
    let mut img = RgbImage::new(labels.width as u32, labels.height as u32);
    for (i, (&label, px)) in labels.data.iter().zip(img.pixels_mut()).enumerate() {
        let gray = image.pixel(i)[0] / 100.0 * 255.0;
        let color = label_color(label);
        let alpha = if label == 0 { 0.0 } else { 0.55 };
        *px = Rgb(color.map(|c| (gray * (1.0 - alpha) + c as f64 * alpha).round() as u8));
    }
    img.save(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Writes a `[0, 1]` scalar field as an 8-bit grayscale PNG.
pub fn write_gray_png(width: usize, height: usize, values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut img = GrayImage::new(width as u32, height as u32);
    for (v, px) in values.iter().zip(img.pixels_mut()) {
        *px = Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8]);
    }
    img.save(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn likelihood_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.pft");
        let data: Vec<f32> = (0..12).map(|i| i as f32 / 11.0).collect();
        let stack = LikelihoodStack::new(2, 2, 3, data).unwrap();
        write_tensor(&stack, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back, stack);
        write_tensor(&back, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn uniform_sevenths_roundtrip_without_renormalizing() {
        let v = 1.0f32 / 7.0;
        let stack = LikelihoodStack::new(4, 4, 7, vec![v; 4 * 4 * 7]).unwrap();
        let back = LikelihoodStack::from_tensor(Tensor::from_bytes(&stack.to_tensor().to_bytes()).unwrap()).unwrap();
        assert!(back.data.iter().all(|x| x.to_bits() == v.to_bits()));
    }

    #[test]
    fn stack_rejects_out_of_range() {
        assert!(LikelihoodStack::new(1, 1, 2, vec![0.5, 1.5]).is_err());
        assert!(LikelihoodStack::new(1, 1, 1, vec![0.5]).is_err());
    }

    #[test]
    fn png_load_converts_to_lab() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        save_rgb_png(&path, 2, 1, &[0, 0, 0, 255, 255, 255]).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.pixel(0), [0.0, 0.0, 0.0]);
        assert!((img.pixel(1)[0] - 100.0).abs() < 0.01);
    }

    #[test]
    fn png_gray_is_rejected_as_image() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        write_label_png(&LabelMap::new(2, 2, vec![0, 1, 2, 3]).unwrap(), &path).unwrap();
        assert!(matches!(load_image(&path), Err(Error::Format(_))));
        assert_eq!(read_label_png(&path).unwrap().data, vec![0, 1, 2, 3]);
    }

    #[test]
    fn missing_image_is_io_error() {
        assert!(matches!(load_image("/nonexistent/x.png"), Err(Error::Io { .. })));
    }
}
