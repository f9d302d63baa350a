//! Raster and field files.
//!
//! Native layout (all little-endian):
//!
//! | offset | size | content                          |
//! |--------|------|----------------------------------|
//! | 0      | 8    | magic `DIHMRAW\0`                |
//! | 8      | 2    | version (u16, currently 1)       |
//! | 10     | 1    | channel kind: 0 real, 1 complex  |
//! | 11     | 1    | reserved, 0                      |
//! | 12     | 4    | width (u32)                      |
//! | 16     | 4    | height (u32)                     |
//! | 20     | 8    | pitch in meters (f64)            |
//! | 28     | ...  | row-major f32 samples; complex samples interleaved re, im |
//!
//! Ordinary 8/16-bit grayscale images are also accepted and scaled to [0, 1].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{ImageBuffer, Luma};
use num_complex::Complex64;

use crate::field::{ComplexField, Raster};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DIHMRAW\0";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    Real,
    Complex,
}

/// Contents of a native raster file.
#[derive(Clone, Debug, PartialEq)]
pub enum Stored {
    Real(Raster),
    Complex(ComplexField),
}

fn write_header(out: &mut impl Write, kind: ChannelKind, w: usize, h: usize, pitch: f64) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&[matches!(kind, ChannelKind::Complex) as u8, 0])?;
    out.write_all(&(w as u32).to_le_bytes())?;
    out.write_all(&(h as u32).to_le_bytes())?;
    out.write_all(&pitch.to_le_bytes())?;
    Ok(())
}

pub fn write_raster(path: impl AsRef<Path>, r: &Raster) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_header(&mut out, ChannelKind::Real, r.width(), r.height(), r.pitch())?;
    for &v in r.values() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_field(path: impl AsRef<Path>, f: &ComplexField) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_header(&mut out, ChannelKind::Complex, f.width(), f.height(), f.pitch())?;
    for v in f.values() {
        out.write_all(&(v.re as f32).to_le_bytes())?;
        out.write_all(&(v.im as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_native(path: impl AsRef<Path>) -> Result<Stored> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!("{}: truncated header", path.display()),
        )));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::format(path, "bad magic bytes"));
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let kind = match bytes[10] {
        0 => ChannelKind::Real,
        1 => ChannelKind::Complex,
        k => return Err(Error::format(path, format!("unknown channel kind {k}"))),
    };
    let w = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let pitch = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let per = if kind == ChannelKind::Complex { 2 } else { 1 };
    let need = HEADER_LEN + 4 * per * w * h;
    if bytes.len() < need {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!("{}: expected {need} bytes, found {}", path.display(), bytes.len()),
        )));
    }
    let floats: Vec<f64> = bytes[HEADER_LEN..need]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(match kind {
        ChannelKind::Real => Stored::Real(Raster::new(w, h, pitch, floats)?),
        ChannelKind::Complex => Stored::Complex(ComplexField::new(
            w,
            h,
            pitch,
            floats.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect(),
        )?),
    })
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    match read_native(path.as_ref())? {
        Stored::Real(r) => Ok(r),
        Stored::Complex(_) => Err(Error::format(path.as_ref(), "expected a real raster, found complex")),
    }
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ComplexField> {
    match read_native(path.as_ref())? {
        Stored::Complex(f) => Ok(f),
        Stored::Real(r) => Ok(r.to_complex()),
    }
}

fn is_native(path: &Path) -> Result<bool> {
    let mut head = [0u8; 8];
    let mut f = File::open(path)?;
    let n = f.read(&mut head)?;
    Ok(n == 8 && &head == MAGIC)
}

/// Reads an 8/16-bit grayscale (or color, converted to luma) image scaled to [0, 1].
pub fn read_image(path: impl AsRef<Path>, pitch: f64) -> Result<Raster> {
    let img = image::open(path.as_ref())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<f64> = match img {
        image::DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        image::DynamicImage::ImageLumaA16(_)
        | image::DynamicImage::ImageRgb16(_)
        | image::DynamicImage::ImageRgba16(_) => img
            .to_luma16()
            .pixels()
            .map(|p| p.0[0] as f64 / 65535.0)
            .collect(),
        other => other.to_luma8().pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
    };
    Raster::new(w, h, pitch, values)
}

/// Native file if the magic matches, otherwise a grayscale image at `pitch`.
pub fn read_any_raster(path: impl AsRef<Path>, pitch: f64) -> Result<Raster> {
    if is_native(path.as_ref())? {
        read_raster(path)
    } else {
        read_image(path, pitch)
    }
}

/// Writes a 16-bit grayscale PNG mapping `[lo, hi]` onto the full range.
pub fn write_image16(path: impl AsRef<Path>, r: &Raster, lo: f64, hi: f64) -> Result<()> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(r.width() as u32, r.height() as u32, |x, y| {
        let v = ((r.get(x as usize, y as usize) - lo) / span).clamp(0.0, 1.0);
        Luma([(v * 65535.0).round() as u16])
    });
    buf.save(path)?;
    Ok(())
}

/// Writes an 8-bit grayscale image mapping `[lo, hi]` onto 0..=255.
pub fn write_image8(path: impl AsRef<Path>, r: &Raster, lo: f64, hi: f64) -> Result<()> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_fn(r.width() as u32, r.height() as u32, |x, y| {
        let v = ((r.get(x as usize, y as usize) - lo) / span).clamp(0.0, 1.0);
        Luma([(v * 255.0).round() as u8])
    });
    buf.save(path)?;
    Ok(())
}
