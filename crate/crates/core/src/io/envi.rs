//! ENVI-style cubes: a text `.hdr` next to a raw band-sequential body.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::spectral::{DataCube, Unit, WavelengthGrid};

/// Parsed header fields. Keys are lower-cased; unknown keys are kept verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct EnviHeader {
    pub samples: usize,
    pub lines: usize,
    pub bands: usize,
    pub header_offset: usize,
    pub data_type: u32,
    pub interleave: String,
    pub byte_order: u8,
    pub wavelengths: Option<Vec<f64>>,
    pub integration_time_ms: Option<f64>,
    pub unit: Option<Unit>,
    pub other: BTreeMap<String, String>,
}

fn bytes_per_value(data_type: u32) -> Option<usize> {
    match data_type {
        1 => Some(1),
        2 | 12 => Some(2),
        3 | 4 | 13 => Some(4),
        5 | 14 | 15 => Some(8),
        _ => None,
    }
}

fn parse_fields(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ENVI") {
        return Err(Error::format(path, "header must start with 'ENVI'"));
    }
    let mut fields = BTreeMap::new();
    let mut pending: Option<(String, String)> = None;
    for line in lines {
        if let Some((key, mut value)) = pending.take() {
            value.push(' ');
            value.push_str(line.trim());
            if line.contains('}') {
                fields.insert(key, value);
            } else {
                pending = Some((key, value));
            }
            continue;
        }
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::format(
                path,
                format!("malformed header line '{line}'"),
            ));
        };
        let (key, value) = (key.trim().to_ascii_lowercase(), value.trim().to_string());
        if value.starts_with('{') && !value.contains('}') {
            pending = Some((key, value));
        } else {
            fields.insert(key, value);
        }
    }
    if let Some((key, _)) = pending {
        return Err(Error::format(
            path,
            format!("unterminated brace list for '{key}'"),
        ));
    }
    Ok(fields)
}

fn brace_list(value: &str) -> Vec<&str> {
    value
        .trim()
        .trim_start_matches('{')
        .trim_end_matches('}')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn read_header(path: &Path) -> Result<EnviHeader> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_header(&text, path)
}

pub fn parse_header(text: &str, path: &Path) -> Result<EnviHeader> {
    let mut f = parse_fields(text, path)?;
    let mut take_num = |key: &str, required: bool| -> Result<Option<f64>> {
        match f.remove(key) {
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::format(path, format!("field '{key}' is not a number: '{v}'"))),
            None if required => Err(Error::format(path, format!("missing field '{key}'"))),
            None => Ok(None),
        }
    };
    let dim = |v: Option<f64>, key: &str| -> Result<usize> {
        let v = v.expect("required");
        if v < 1.0 || v.fract() != 0.0 {
            return Err(Error::format(
                path,
                format!("field '{key}' must be a positive integer"),
            ));
        }
        Ok(v as usize)
    };
    let samples = dim(take_num("samples", true)?, "samples")?;
    let lines = dim(take_num("lines", true)?, "lines")?;
    let bands = dim(take_num("bands", true)?, "bands")?;
    let data_type = take_num("data type", true)?.expect("required") as u32;
    let header_offset = take_num("header offset", false)?.unwrap_or(0.0) as usize;
    let byte_order = take_num("byte order", false)?.unwrap_or(0.0) as u8;
    let integration_time_ms = take_num("integration_time_ms", false)?;
    let interleave = f
        .remove("interleave")
        .unwrap_or_else(|| "bsq".into())
        .to_ascii_lowercase();
    let unit = match f.remove("unit") {
        Some(u) => Some(
            Unit::parse(&u).ok_or_else(|| Error::format(path, format!("unknown unit '{u}'")))?,
        ),
        None => None,
    };
    let wavelengths = match f.remove("wavelength") {
        Some(list) => Some(
            brace_list(&list)
                .into_iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::format(path, format!("bad wavelength '{s}'")))
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    if let Some(w) = &wavelengths {
        if w.len() != bands {
            return Err(Error::format(
                path,
                format!("{} wavelengths listed for {bands} bands", w.len()),
            ));
        }
    }
    Ok(EnviHeader {
        samples,
        lines,
        bands,
        header_offset,
        data_type,
        interleave,
        byte_order,
        wavelengths,
        integration_time_ms,
        unit,
        other: f,
    })
}

/// Header path for a data file: same stem, `.hdr` extension.
pub fn header_path(data: &Path) -> PathBuf {
    data.with_extension("hdr")
}

fn data_path_for(header: &Path) -> Result<PathBuf> {
    for ext in ["raw", "img", "dat", "bsq"] {
        let p = header.with_extension(ext);
        if p.exists() {
            return Ok(p);
        }
    }
    let bare = header.with_extension("");
    if bare.exists() {
        return Ok(bare);
    }
    Err(Error::format(
        header,
        "no data file (.raw, .img, .dat, .bsq) next to header",
    ))
}

/// Resolves `path` (header or data file) to `(header, data)`.
pub fn cube_paths(path: &Path) -> Result<(PathBuf, PathBuf)> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("hdr"))
    {
        Ok((path.to_path_buf(), data_path_for(path)?))
    } else {
        Ok((header_path(path), path.to_path_buf()))
    }
}

fn decode(bytes: &[u8], data_type: u32, big_endian: bool) -> Vec<f64> {
    macro_rules! conv {
        ($t:ty, $n:expr) => {
            bytes
                .chunks_exact($n)
                .map(|c| {
                    let a: [u8; $n] = c.try_into().expect("chunk size");
                    (if big_endian {
                        <$t>::from_be_bytes(a)
                    } else {
                        <$t>::from_le_bytes(a)
                    }) as f64
                })
                .collect()
        };
    }
    match data_type {
        1 => bytes.iter().map(|b| *b as f64).collect(),
        2 => conv!(i16, 2),
        3 => conv!(i32, 4),
        4 => conv!(f32, 4),
        5 => conv!(f64, 8),
        12 => conv!(u16, 2),
        13 => conv!(u32, 4),
        14 => conv!(i64, 8),
        15 => conv!(u64, 8),
        _ => unreachable!("checked by caller"),
    }
}

/// Reads a BSQ cube. `path` may name the header or the data file.
pub fn read_cube(path: &Path) -> Result<DataCube> {
    let (hdr_path, data_path) = cube_paths(path)?;
    let h = read_header(&hdr_path)?;
    if h.interleave != "bsq" {
        return Err(Error::format(
            &hdr_path,
            format!("unsupported interleave '{}' (only bsq)", h.interleave),
        ));
    }
    let bpv = bytes_per_value(h.data_type).ok_or_else(|| {
        Error::format(&hdr_path, format!("unsupported data type {}", h.data_type))
    })?;
    let wavelengths = h
        .wavelengths
        .clone()
        .ok_or_else(|| Error::format(&hdr_path, "missing field 'wavelength'"))?;
    let t = h
        .integration_time_ms
        .ok_or_else(|| Error::format(&hdr_path, "missing field 'integration_time_ms'"))?;
    let grid =
        WavelengthGrid::new(wavelengths).map_err(|e| Error::format(&hdr_path, e.to_string()))?;

    let raw = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let n = h.samples * h.lines * h.bands;
    let expected = h.header_offset + n * bpv;
    if raw.len() != expected {
        return Err(Error::format(
            &data_path,
            format!(
                "body is {} bytes, header implies {expected} ({}x{}x{} of {bpv}-byte values)",
                raw.len(),
                h.lines,
                h.samples,
                h.bands
            ),
        ));
    }
    let bsq = decode(&raw[h.header_offset..], h.data_type, h.byte_order == 1);
    let plane = h.lines * h.samples;
    let mut bip = vec![0.0; n];
    for b in 0..h.bands {
        for p in 0..plane {
            bip[p * h.bands + b] = bsq[b * plane + p];
        }
    }
    DataCube::new(
        h.lines,
        h.samples,
        grid,
        bip,
        t,
        h.unit.unwrap_or(Unit::DigitalCounts),
    )
    .map_err(|e| Error::format(&data_path, e.to_string()))
}

/// Writes `cube` as little-endian f64 BSQ to `path` and its header next to it.
pub fn write_cube(path: &Path, cube: &DataCube) -> Result<()> {
    let (hdr_path, data_path) = cube_paths(path)?;
    let (h, w, b) = (cube.height(), cube.width(), cube.bands());
    let wl: Vec<String> = cube
        .grid()
        .centers()
        .iter()
        .map(|c| c.to_string())
        .collect();
    let header = format!(
        "ENVI\nsamples = {w}\nlines = {h}\nbands = {b}\nheader offset = 0\nfile type = ENVI Standard\ndata type = 5\ninterleave = bsq\nbyte order = 0\nwavelength units = Nanometers\nwavelength = {{{}}}\nintegration_time_ms = {}\nunit = {}\n",
        wl.join(", "),
        cube.integration_time(),
        cube.unit().as_str()
    );
    let mut body = Vec::with_capacity(h * w * b * 8);
    for band in 0..b {
        for px in cube.pixels() {
            body.extend_from_slice(&px[band].to_le_bytes());
        }
    }
    if let Some(dir) = data_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&hdr_path, header).map_err(|e| Error::io(&hdr_path, e))?;
    fs::write(&data_path, body).map_err(|e| Error::io(&data_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> DataCube {
        let g = WavelengthGrid::new(vec![660.0, 670.4347826086956, 680.8695652173913]).unwrap();
        let v: Vec<f64> = (0..2 * 4 * 3).map(|i| (i as f64).sqrt() * 0.1).collect();
        DataCube::new(2, 4, g, v, 0.5, Unit::Reflectance).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.raw");
        let c = cube();
        write_cube(&path, &c).unwrap();
        assert_eq!(read_cube(&path).unwrap(), c);
        assert_eq!(read_cube(&dir.path().join("a.hdr")).unwrap(), c);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.raw");
        write_cube(&path, &cube()).unwrap();
        let hdr = fs::read_to_string(header_path(&path)).unwrap();
        let hdr = hdr
            .replace("bands = 3", "bands = 4")
            .replace("wavelength = {", "wavelength = {650, ");
        fs::write(header_path(&path), hdr).unwrap();
        assert!(matches!(read_cube(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn other_interleave_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.raw");
        write_cube(&path, &cube()).unwrap();
        let hdr = fs::read_to_string(header_path(&path))
            .unwrap()
            .replace("bsq", "bil");
        fs::write(header_path(&path), hdr).unwrap();
        assert!(read_cube(&path)
            .unwrap_err()
            .to_string()
            .contains("interleave"));
    }

    #[test]
    fn parses_full_sensor_header() {
        let wl: Vec<String> = (0..33)
            .map(|i| format!("{}", 660.0 + 31.0 * i as f64))
            .collect();
        let text = format!(
            "ENVI\ndescription = {{stacked\n  vnir + swir}}\nsamples = 1666\nlines = 1012\nbands = 33\nheader offset = 0\ndata type = 12\ninterleave = bsq\nbyte order = 0\nwavelength = {{\n {},\n {} }}\n",
            wl[..16].join(", "),
            wl[16..].join(", ")
        );
        let h = parse_header(&text, Path::new("x.hdr")).unwrap();
        assert_eq!((h.lines, h.samples, h.bands), (1012, 1666, 33));
        assert_eq!(h.wavelengths.unwrap().len(), 33);
        assert_eq!(h.data_type, 12);
        assert!(h.other.contains_key("description"));
    }

    #[test]
    fn reads_integer_types() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("u.raw");
        let vals: [u16; 4] = [1, 2, 300, 4095];
        let mut bytes = Vec::new();
        for v in vals {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&data, bytes).unwrap();
        fs::write(
            header_path(&data),
            "ENVI\nsamples = 2\nlines = 1\nbands = 2\ndata type = 12\ninterleave = bsq\nwavelength = {700, 710}\nintegration_time_ms = 1\n",
        )
        .unwrap();
        let c = read_cube(&data).unwrap();
        // band-sequential: band 0 = [1, 2], band 1 = [300, 4095]
        assert_eq!(c.pixel(0, 0), &[1.0, 300.0]);
        assert_eq!(c.pixel(0, 1), &[2.0, 4095.0]);
        assert_eq!(c.unit(), Unit::DigitalCounts);
    }
}
