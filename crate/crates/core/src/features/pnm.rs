use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{invalid, Result};

use super::Frame;

/// Reads any PNM image (P6 expected) as a frame with values `k / 255`.
pub fn read_ppm(path: impl AsRef<Path>) -> Result<Frame> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    Frame::new(h as usize, w as usize, data)
}

/// Writes a binary P6 pixmap, quantizing each channel to `round(255 v)`.
pub fn write_ppm(path: impl AsRef<Path>, frame: &Frame) -> Result<()> {
    let bytes: Vec<u8> = frame.data().iter().map(|&v| (v * 255.0).round() as u8).collect();
    let file = BufWriter::new(File::create(path)?);
    PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(
            &bytes,
            frame.width() as u32,
            frame.height() as u32,
            ExtendedColorType::Rgb8,
        )?;
    Ok(())
}

/// Writes a 16-bit binary P5 graymap of `values` scaled so the maximum maps
/// to 65535 (an all-zero map stays zero).
pub fn write_pgm16(path: impl AsRef<Path>, height: usize, width: usize, values: &[f64]) -> Result<()> {
    if values.len() != height * width {
        return Err(invalid("graymap size does not match its values"));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    // The pnm encoder only takes 8-bit graymaps, so the 16-bit form is
    // written directly: ASCII header, then big-endian samples.
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{width} {height}\n65535\n")?;
    for &v in values {
        w.write_all(&((v.max(0.0) * scale).round() as u16).to_be_bytes())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_is_exact_on_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.ppm");
        let f = Frame::from_fn(8, 9, |i, j| {
            let k = ((i * 9 + j) * 3 % 256) as f64 / 255.0;
            [k, 1.0 - k, 0.5f64.min(k)]
        })
        .unwrap();
        let q = Frame::new(8, 9, f.data().iter().map(|v| (v * 255.0).round() / 255.0).collect()).unwrap();
        write_ppm(&path, &q).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..2], b"P6");
        assert_eq!(read_ppm(&path).unwrap(), q);
    }

    #[test]
    fn pgm16_header_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        write_pgm16(&path, 1, 2, &[2.0, 4.0]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..2], b"P5");
        assert!(String::from_utf8_lossy(&bytes).contains("65535"));
        // Big-endian samples: 32768 (rounded half of 65535) then 65535.
        assert_eq!(&bytes[bytes.len() - 4..], &[0x80, 0x00, 0xff, 0xff]);
    }
}
