//! Row-major raster container and the on-disk formats used for guidance
//! assets: PFM (little-endian float, 1 or 3 channels) for depth and
//! direction maps, PNG for colors, semantic ids (paletted) and instance ids
//! (16-bit gray).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::SemanticId;

/// A `width × height` grid, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Image {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Image { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn pixels(&self) -> &[T] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Image<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

pub type DepthMap = Image<f64>;
pub type SemanticMap = Image<SemanticId>;
pub type InstanceMap = Image<u32>;
pub type RgbImage = Image<[f64; 3]>;

/// Texel types that can be resampled. Continuous channels blend bilinearly;
/// label channels take the heaviest tap.
pub trait Texel: Copy + Send + Sync {
    fn blend(taps: [(Self, f64); 4]) -> Self;
}

impl Texel for f64 {
    fn blend(taps: [(Self, f64); 4]) -> Self {
        // Invalid depth (inf) is never averaged into finite neighbours.
        if taps.iter().any(|(v, w)| *w > 0.0 && !v.is_finite()) {
            return heaviest(taps);
        }
        taps.iter().map(|(v, w)| v * w).sum()
    }
}

impl Texel for [f64; 3] {
    fn blend(taps: [(Self, f64); 4]) -> Self {
        let mut out = [0.0; 3];
        for (v, w) in taps {
            for c in 0..3 {
                out[c] += v[c] * w;
            }
        }
        out
    }
}

impl Texel for SemanticId {
    fn blend(taps: [(Self, f64); 4]) -> Self {
        heaviest(taps)
    }
}

impl Texel for u32 {
    fn blend(taps: [(Self, f64); 4]) -> Self {
        heaviest(taps)
    }
}

fn heaviest<T: Copy>(taps: [(T, f64); 4]) -> T {
    let mut best = 0;
    for i in 1..4 {
        if taps[i].1 > taps[best].1 {
            best = i;
        }
    }
    taps[best].0
}

impl<T: Texel> Image<T> {
    /// Bilinear lookup at continuous coordinates where pixel `(i, j)` covers
    /// `[i, i+1) × [j, j+1)`. Coordinates are clamped to the border; with
    /// `wrap_x` the horizontal axis wraps around instead.
    pub fn sample(&self, x: f64, y: f64, wrap_x: bool) -> T {
        let fx = x - 0.5;
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (x0, x1, tx) = if wrap_x {
            let x0 = fx.floor();
            let t = fx - x0;
            let w = self.width as i64;
            let i0 = (x0 as i64).rem_euclid(w) as usize;
            (i0, (i0 + 1) % self.width, t)
        } else {
            let fx = fx.clamp(0.0, (self.width - 1) as f64);
            let x0 = fx.floor() as usize;
            (x0, (x0 + 1).min(self.width - 1), fx - x0 as f64)
        };
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(self.height - 1);
        let ty = fy - y0 as f64;
        T::blend([
            (self.get(x0, y0), (1.0 - tx) * (1.0 - ty)),
            (self.get(x1, y0), tx * (1.0 - ty)),
            (self.get(x0, y1), (1.0 - tx) * ty),
            (self.get(x1, y1), tx * ty),
        ])
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_pfm_raw(path: &Path, width: usize, height: usize, channels: usize, rows: impl Fn(usize, &mut Vec<f32>)) -> Result<()> {
    let mut w = create(path)?;
    let tag = if channels == 3 { "PF" } else { "Pf" };
    let mut bytes = format!("{tag}\n{width} {height}\n-1.0\n").into_bytes();
    let mut row = Vec::with_capacity(width * channels);
    // PFM stores the bottom row first.
    for y in (0..height).rev() {
        row.clear();
        rows(y, &mut row);
        for v in &row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Single-channel PFM; +∞ is written as-is.
pub fn write_pfm(path: impl AsRef<Path>, img: &Image<f64>) -> Result<()> {
    write_pfm_raw(path.as_ref(), img.width, img.height, 1, |y, row| {
        row.extend((0..img.width).map(|x| img.get(x, y) as f32));
    })
}

pub fn write_pfm3(path: impl AsRef<Path>, img: &Image<[f64; 3]>) -> Result<()> {
    write_pfm_raw(path.as_ref(), img.width, img.height, 3, |y, row| {
        for x in 0..img.width {
            row.extend(img.get(x, y).iter().map(|&v| v as f32));
        }
    })
}

fn read_pfm_raw(path: &Path) -> Result<(usize, usize, usize, Vec<f32>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Parse(format!("{}: {m}", path.display()));
    // Header: three whitespace-terminated tokens lines.
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match fields[0].as_str() {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(bad("not a PFM file")),
    };
    let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f32 = fields[3].parse().map_err(|_| bad("bad scale"))?;
    let little = scale < 0.0;
    let n = width * height * channels;
    if bytes.len() < pos + 4 * n {
        return Err(bad("truncated data"));
    }
    let mut data = vec![0f32; n];
    for (y_file, chunk) in bytes[pos..pos + 4 * n].chunks_exact(4 * width * channels).enumerate() {
        let y = height - 1 - y_file;
        for (k, b) in chunk.chunks_exact(4).enumerate() {
            let arr = [b[0], b[1], b[2], b[3]];
            data[y * width * channels + k] = if little {
                f32::from_le_bytes(arr)
            } else {
                f32::from_be_bytes(arr)
            };
        }
    }
    Ok((width, height, channels, data))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Image<f64>> {
    let path = path.as_ref();
    let (w, h, c, data) = read_pfm_raw(path)?;
    if c != 1 {
        return Err(Error::Parse(format!("{}: expected 1 channel, found {c}", path.display())));
    }
    Image::from_vec(w, h, data.into_iter().map(f64::from).collect())
}

pub fn read_pfm3(path: impl AsRef<Path>) -> Result<Image<[f64; 3]>> {
    let path = path.as_ref();
    let (w, h, c, data) = read_pfm_raw(path)?;
    if c != 3 {
        return Err(Error::Parse(format!("{}: expected 3 channels, found {c}", path.display())));
    }
    let px = data
        .chunks_exact(3)
        .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
        .collect();
    Image::from_vec(w, h, px)
}

fn png_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}: png: {e}", path.display()))
}

/// Semantic ids as an 8-bit paletted PNG; the palette index is the class id.
pub fn write_semantic_png(path: impl AsRef<Path>, img: &SemanticMap) -> Result<()> {
    let path = path.as_ref();
    let mut file = create(path)?;
    let mut enc = png::Encoder::new(&mut file, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    let palette: Vec<u8> = SemanticId::all().flat_map(|s| s.color()).collect();
    enc.set_palette(palette);
    let mut writer = enc.write_header().map_err(|e| png_err(path, e))?;
    let data: Vec<u8> = img.data.iter().map(|s| s.id()).collect();
    writer.write_image_data(&data).map_err(|e| png_err(path, e))
}

pub fn read_semantic_png(path: impl AsRef<Path>) -> Result<SemanticMap> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    if info.color_type != png::ColorType::Indexed && info.color_type != png::ColorType::Grayscale
        || info.bit_depth != png::BitDepth::Eight
    {
        return Err(png_err(path, "semantic maps must be 8-bit indexed or gray"));
    }
    let data = buf[..info.buffer_size()]
        .iter()
        .map(|&v| SemanticId::new(v).ok_or_else(|| png_err(path, format!("class id {v} out of range"))))
        .collect::<Result<Vec<_>>>()?;
    Image::from_vec(info.width as usize, info.height as usize, data)
}

/// Colors in [0, 1] as 8-bit RGB.
pub fn write_rgb_png(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    let mut file = create(path)?;
    let mut enc = png::Encoder::new(&mut file, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| png_err(path, e))?;
    let data: Vec<u8> = img
        .data
        .iter()
        .flat_map(|p| p.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect();
    writer.write_image_data(&data).map_err(|e| png_err(path, e))
}

/// Instance ids as 16-bit gray PNG. Ids above `u16::MAX` are an error.
pub fn write_instance_png(path: impl AsRef<Path>, img: &InstanceMap) -> Result<()> {
    let path = path.as_ref();
    if let Some(bad) = img.data.iter().find(|&&v| v > u16::MAX as u32) {
        return Err(Error::ShapeMismatch(format!("instance id {bad} does not fit 16 bits")));
    }
    let mut file = create(path)?;
    let mut enc = png::Encoder::new(&mut file, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(|e| png_err(path, e))?;
    let data: Vec<u8> = img.data.iter().flat_map(|&v| (v as u16).to_be_bytes()).collect();
    writer.write_image_data(&data).map_err(|e| png_err(path, e))
}
