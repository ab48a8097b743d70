//! 8-bit PNG load/save. Load maps `v -> v/255`; save rounds half-up.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::error::{Error, Result};

use super::{ColorSpace, Image};

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Interleaved 8-bit samples (gray or RGB).
pub fn to_bytes(img: &Image) -> Vec<u8> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut out = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.push(quantize(img.get(ch, y, x)));
            }
        }
    }
    out
}

pub fn from_bytes(height: usize, width: usize, space: ColorSpace, bytes: &[u8]) -> Result<Image> {
    let c = space.channels();
    if bytes.len() != height * width * c {
        return Err(Error::shape(
            "from_bytes",
            format!("{} bytes for {height}x{width}x{c}", bytes.len()),
        ));
    }
    Ok(Image::from_fn(height, width, space, |ch, y, x| {
        f64::from(bytes[(y * width + x) * c + ch]) / 255.0
    }))
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, img.width() as u32, img.height() as u32);
        enc.set_color(match img.space() {
            ColorSpace::Rgb => png::ColorType::Rgb,
            ColorSpace::Y => png::ColorType::Grayscale,
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&to_bytes(img))?;
    }
    Ok(buf)
}

/// Writes atomically (temp file, then rename).
pub fn save_png(path: &Path, img: &Image) -> Result<()> {
    write_atomic(path, &encode_png(img)?)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`,
/// creating parent directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_png(path: &Path) -> Result<Image> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(f));
    let mut reader = decoder.read_info()?;
    let mut buf = vec![
        0;
        reader.output_buffer_size().ok_or_else(|| {
            Error::InvalidArgument(format!("{}: image too large", path.display()))
        })?
    ];
    let info = reader.next_frame(&mut buf)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::InvalidArgument(format!(
            "{}: only 8-bit PNG is supported",
            path.display()
        )));
    }
    let space = match info.color_type {
        png::ColorType::Rgb => ColorSpace::Rgb,
        png::ColorType::Grayscale => ColorSpace::Y,
        other => {
            return Err(Error::InvalidArgument(format!(
                "{}: unsupported PNG color type {other:?}",
                path.display()
            )))
        }
    };
    buf.truncate(info.buffer_size());
    from_bytes(info.height as usize, info.width as usize, space, &buf)
}
