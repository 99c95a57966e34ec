//! Map outputs: 8-bit grayscale PNGs and plain CSV grids.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};

/// Linear map of `[lo, hi]` onto `0..=255`, clamped; NaN maps to 0.
pub fn to_gray(values: &[f64], lo: f64, hi: f64) -> Vec<u8> {
    values
        .iter()
        .map(|v| {
            if v.is_nan() {
                return 0;
            }
            let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            (t * 255.0).round() as u8
        })
        .collect()
}

pub fn write_png_gray(path: &Path, pixels: &[u8], height: usize, width: usize) -> Result<()> {
    if pixels.len() != height * width {
        return Err(Error::ShapeMismatch(format!(
            "{} pixels for a {height}x{width} image",
            pixels.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let to_err = |e: png::EncodingError| Error::format(path, e.to_string());
    let mut writer = enc.write_header().map_err(to_err)?;
    writer.write_image_data(pixels).map_err(to_err)?;
    writer.finish().map_err(to_err)
}

/// NDVI-style map: -1 is black, +1 is white.
pub fn write_index_png(path: &Path, values: &[f64], height: usize, width: usize) -> Result<()> {
    write_png_gray(path, &to_gray(values, -1.0, 1.0), height, width)
}

pub fn write_mask_png(path: &Path, mask: &[bool], height: usize, width: usize) -> Result<()> {
    let px: Vec<u8> = mask.iter().map(|m| if *m { 255 } else { 0 }).collect();
    write_png_gray(path, &px, height, width)
}

/// One line per row, comma-separated.
pub fn format_grid_csv<T: std::fmt::Display>(values: &[T], width: usize) -> String {
    let mut out = String::new();
    for row in values.chunks(width.max(1)) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_grid_csv<T: std::fmt::Display>(path: &Path, values: &[T], width: usize) -> Result<()> {
    fs::write(path, format_grid_csv(values, width)).map_err(|e| Error::io(path, e))
}

/// Reads a grid written by [`write_grid_csv`]; returns `(values, height, width)`.
pub fn read_grid_csv(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let (mut height, mut width) = (0, None);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::format(path, format!("'{}' is not a number", s.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::format(path, "rows have different lengths"))
            }
            _ => {}
        }
        values.extend(row);
        height += 1;
    }
    let width = width.ok_or_else(|| Error::format(path, "empty grid"))?;
    Ok((values, height, width))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_mapping() {
        assert_eq!(
            to_gray(&[-1.0, 0.0, 1.0, 2.0, -3.0, f64::NAN], -1.0, 1.0),
            vec![0, 128, 255, 255, 0, 0]
        );
    }

    #[test]
    fn png_decodes_back() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        write_index_png(&p, &[-1.0, 1.0, 0.0, 1.0, -1.0, 0.5], 2, 3).unwrap();
        let dec = png::Decoder::new(std::io::BufReader::new(File::open(&p).unwrap()));
        let mut reader = dec.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (3, 2));
        assert_eq!(&buf[..6], &[0, 255, 128, 255, 0, 191]);
    }

    #[test]
    fn grid_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let v = [0.1, -0.25, 3.0, 4.5, 1e-9, 7.0];
        write_grid_csv(&p, &v, 3).unwrap();
        assert_eq!(read_grid_csv(&p).unwrap(), (v.to_vec(), 2, 3));
    }
}
