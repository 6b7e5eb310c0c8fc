//! PNG and raw `VPRX` raster files.
//!
//! `VPRX` layout, little-endian throughout: the magic `VPRX`, then width,
//! height and channels as `u32`, then every sample as `f64` in planar
//! row-major order.

use std::io::{Read, Write};
use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use super::{Dims, Raster, RasterError};
use crate::fsutil::write_atomic;

pub const RASTER_MAGIC: &[u8; 4] = b"VPRX";

pub fn encode_vprx(r: &Raster, out: &mut impl Write) -> std::io::Result<()> {
    out.write_all(RASTER_MAGIC)?;
    for d in [r.width(), r.height(), r.channels()] {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in r.as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn decode_vprx(input: &mut impl Read) -> Result<Raster, RasterError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != RASTER_MAGIC {
        return Err(RasterError::Format(format!("bad magic {magic:?}")));
    }
    let mut word = [0u8; 4];
    let mut dims = [0usize; 3];
    for d in &mut dims {
        input.read_exact(&mut word)?;
        *d = u32::from_le_bytes(word) as usize;
    }
    let dims = Dims::new(dims[0], dims[1], dims[2]);
    let mut bytes = vec![0u8; dims.len() * 8];
    input.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Raster::from_vec(dims, data)
}

pub fn write_vprx(r: &Raster, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let mut buf = Vec::with_capacity(16 + r.len() * 8);
    encode_vprx(r, &mut buf)?;
    write_atomic(path.as_ref(), &buf)?;
    Ok(())
}

pub fn read_vprx(path: impl AsRef<Path>) -> Result<Raster, RasterError> {
    let bytes = std::fs::read(path)?;
    decode_vprx(&mut bytes.as_slice())
}

/// Reads an 8-bit PNG into `[0, 1]`. Grayscale files give one channel, every
/// other colour type is converted to RGB (alpha dropped).
pub fn read_png(path: impl AsRef<Path>) -> Result<Raster, RasterError> {
    let img = image::open(path)?;
    let is_gray = matches!(
        img.color(),
        image::ColorType::L8 | image::ColorType::La8 | image::ColorType::L16 | image::ColorType::La16
    );
    if is_gray {
        let g = img.to_luma8();
        let dims = Dims::new(g.width() as usize, g.height() as usize, 1);
        Raster::from_vec(dims, g.as_raw().iter().map(|&v| v as f64 / 255.0).collect())
    } else {
        let rgb = img.to_rgb8();
        let dims = Dims::new(rgb.width() as usize, rgb.height() as usize, 3);
        let raw = rgb.as_raw();
        Ok(Raster::from_fn(dims, |x, y, c| raw[(y * dims.width + x) * 3 + c] as f64 / 255.0))
    }
}

fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn write_png(r: &Raster, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let (w, h) = (r.width() as u32, r.height() as u32);
    let img = match r.channels() {
        1 => DynamicImage::ImageLuma8(
            GrayImage::from_raw(w, h, r.as_slice().iter().map(|&v| quantize(v)).collect())
                .expect("buffer sized from dims"),
        ),
        3 => {
            let mut buf = Vec::with_capacity(r.len());
            for y in 0..r.height() {
                for x in 0..r.width() {
                    for c in 0..3 {
                        buf.push(quantize(r.get(x, y, c)));
                    }
                }
            }
            DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, buf).expect("buffer sized from dims"))
        }
        c => return Err(RasterError::UnsupportedChannels(c)),
    };
    let mut bytes = std::io::Cursor::new(Vec::new());
    img.write_to(&mut bytes, image::ImageFormat::Png)?;
    write_atomic(path.as_ref(), bytes.get_ref())?;
    Ok(())
}

/// Dispatches on extension: `.vprx` is lossless, anything else is PNG.
pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster, RasterError> {
    let path = path.as_ref();
    if has_vprx_extension(path) {
        read_vprx(path)
    } else {
        read_png(path)
    }
}

pub fn write_raster(r: &Raster, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    if has_vprx_extension(path) {
        write_vprx(r, path)
    } else {
        write_png(r, path)
    }
}

fn has_vprx_extension(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("vprx"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vprx_round_trip_is_lossless() {
        let r = Raster::random_normal(Dims::new(5, 3, 3), 8);
        let mut buf = Vec::new();
        encode_vprx(&r, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"VPRX");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 5);
        assert_eq!(buf.len(), 16 + 45 * 8);
        assert_eq!(decode_vprx(&mut buf.as_slice()).unwrap(), r);
    }

    #[test]
    fn vprx_rejects_bad_magic() {
        let buf = b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00\x01\x00\x00\x00";
        assert!(matches!(decode_vprx(&mut buf.as_slice()), Err(RasterError::Format(_))));
    }

    #[test]
    fn png_quantization_rounds_half_up_and_clamps() {
        assert_eq!(quantize(0.5 / 255.0), 1);
        assert_eq!(quantize(-0.3), 0);
        assert_eq!(quantize(1.7), 255);
        assert_eq!(quantize(128.0 / 255.0), 128);
    }

    #[test]
    fn png_round_trip_on_eight_bit_values() {
        let dir = tempfile::tempdir().unwrap();
        for channels in [1, 3] {
            let r = Raster::from_fn(Dims::new(7, 4, channels), |x, y, c| ((x * 31 + y * 7 + c * 50) % 256) as f64 / 255.0);
            let path = dir.path().join(format!("img{channels}.png"));
            write_png(&r, &path).unwrap();
            let back = read_png(&path).unwrap();
            assert_eq!(back.dims(), r.dims());
            assert!(back.dist(&r) < 1e-12);
        }
    }
}
