//! Frame and field file formats.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use byteorder::{LittleEndian, WriteBytesExt};
use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, Luma};
use iris_core::simulator::MotionField;
use iris_core::{Frame, FrameStack};

const FRAME_EXTENSIONS: [&str; 2] = ["png", "pgm"];

/// Reads an image as grayscale intensities in `[0, 1]`. Color images are
/// reduced with the Rec. 601 luma weights.
pub fn read_gray(path: &Path) -> Result<Frame> {
    let img = ImageReader::open(path)
        .with_context(|| format!("cannot open {}", path.display()))?
        .with_guessed_format()?
        .decode()
        .with_context(|| format!("cannot decode {}", path.display()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let frame = match img {
        DynamicImage::ImageLuma8(g) => Frame::from_fn(h, w, |i, j| g.get_pixel(j as u32, i as u32)[0] as f64 / 255.0),
        DynamicImage::ImageLumaA8(g) => Frame::from_fn(h, w, |i, j| g.get_pixel(j as u32, i as u32)[0] as f64 / 255.0),
        DynamicImage::ImageLuma16(g) => {
            Frame::from_fn(h, w, |i, j| g.get_pixel(j as u32, i as u32)[0] as f64 / 65535.0)
        }
        DynamicImage::ImageLumaA16(g) => {
            Frame::from_fn(h, w, |i, j| g.get_pixel(j as u32, i as u32)[0] as f64 / 65535.0)
        }
        other => {
            let rgb = other.to_rgb32f();
            Frame::from_fn(h, w, |i, j| {
                let p = rgb.get_pixel(j as u32, i as u32);
                (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).clamp(0.0, 1.0)
            })
        }
    };
    Ok(frame)
}

/// 8-bit grayscale conversion, rounding to the nearest level.
pub fn to_gray8(frame: &Frame) -> GrayImage {
    let (rows, cols) = frame.shape();
    GrayImage::from_fn(cols as u32, rows as u32, |x, y| {
        let v = frame[(y as usize, x as usize)].clamp(0.0, 1.0);
        Luma([(v * 255.0).round() as u8])
    })
}

pub fn write_png(path: &Path, frame: &Frame) -> Result<()> {
    to_gray8(frame)
        .save_with_format(path, ImageFormat::Png)
        .with_context(|| format!("cannot write {}", path.display()))
}

/// Frame files of a directory in lexicographic order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot read directory {}", dir.display()))? {
        let path = entry?.path();
        let known = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if path.is_file() && known {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        bail!("no PNG or PGM frames in {}", dir.display());
    }
    Ok(files)
}

/// Loads every frame of a directory; all frames must share one size.
pub fn read_stack(dir: &Path) -> Result<(FrameStack, Vec<PathBuf>)> {
    let files = list_frames(dir)?;
    let frames = files.iter().map(|f| read_gray(f)).collect::<Result<Vec<_>>>()?;
    let expected = frames[0].shape();
    let offending: Vec<String> = files
        .iter()
        .zip(&frames)
        .filter(|(_, f)| f.shape() != expected)
        .map(|(p, f)| format!("{} ({}x{})", p.display(), f.nrows(), f.ncols()))
        .collect();
    if !offending.is_empty() {
        bail!(
            "mixed frame dimensions: {} is {}x{} but these differ: {}",
            files[0].display(),
            expected.0,
            expected.1,
            offending.join(", ")
        );
    }
    Ok((FrameStack::new(frames)?, files))
}

/// Writes a motion field as `IRMF`, rows and cols as little-endian `u32`,
/// then `u` and `v` as column-major little-endian `f64`.
pub fn write_field(path: &Path, field: &MotionField) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("cannot write {}", path.display()))?);
    out.write_all(b"IRMF")?;
    out.write_u32::<LittleEndian>(field.u.nrows() as u32)?;
    out.write_u32::<LittleEndian>(field.u.ncols() as u32)?;
    for v in field.u.iter().chain(field.v.iter()) {
        out.write_f64::<LittleEndian>(*v)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}
