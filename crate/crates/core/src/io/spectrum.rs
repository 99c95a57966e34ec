//! Spectrum CSV: `# key=value` metadata lines, a `wavelength_nm,counts` header,
//! then one row per channel.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{Spectrum, Unit, WavelengthGrid};

pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spectrum(&text, path)
}

pub fn parse_spectrum(text: &str, path: &Path) -> Result<Spectrum> {
    let mut integration_time = None;
    let mut unit = Unit::DigitalCounts;
    let mut saw_header = false;
    let (mut wl, mut values) = (Vec::new(), Vec::new());
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.split_once('=') {
                match k.trim() {
                    "integration_time_ms" => {
                        integration_time = Some(v.trim().parse::<f64>().map_err(|_| {
                            Error::format(
                                path,
                                format!("line {}: bad integration_time_ms '{}'", n + 1, v.trim()),
                            )
                        })?)
                    }
                    "unit" => {
                        unit = Unit::parse(v.trim()).ok_or_else(|| {
                            Error::format(
                                path,
                                format!("line {}: unknown unit '{}'", n + 1, v.trim()),
                            )
                        })?
                    }
                    _ => {}
                }
            }
            continue;
        }
        if !saw_header {
            if line.replace(' ', "") != "wavelength_nm,counts" {
                return Err(Error::format(
                    path,
                    format!("line {}: expected header 'wavelength_nm,counts'", n + 1),
                ));
            }
            saw_header = true;
            continue;
        }
        let mut cols = line.split(',');
        let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::format(
                path,
                format!("line {}: expected two columns", n + 1),
            ));
        };
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| {
                Error::format(
                    path,
                    format!("line {}: '{}' is not a number", n + 1, s.trim()),
                )
            })
        };
        wl.push(parse(a)?);
        values.push(parse(b)?);
    }
    if wl.is_empty() {
        return Err(Error::format(path, "no spectrum rows"));
    }
    let t = integration_time
        .ok_or_else(|| Error::format(path, "missing '# integration_time_ms=' line"))?;
    let grid = WavelengthGrid::new(wl).map_err(|e| Error::format(path, e.to_string()))?;
    Spectrum::new(grid, values, t, unit).map_err(|e| Error::format(path, e.to_string()))
}

pub fn format_spectrum(s: &Spectrum) -> String {
    let mut out = format!(
        "# integration_time_ms={}\n# unit={}\nwavelength_nm,counts\n",
        s.integration_time(),
        s.unit().as_str()
    );
    for (w, v) in s.grid().centers().iter().zip(s.values()) {
        let _ = writeln!(out, "{w},{v}");
    }
    out
}

pub fn write_spectrum(path: &Path, s: &Spectrum) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, format_spectrum(s)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let g = WavelengthGrid::linspace(500.0, 1100.0, 256).unwrap();
        let v: Vec<f64> = (0..256)
            .map(|i| 1000.0 + (i as f64 * 0.37).sin() * 321.123456789)
            .collect();
        let s = Spectrum::new(g, v, 0.5, Unit::DigitalCounts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_spectrum(&p, &s).unwrap();
        let back = read_spectrum(&p).unwrap();
        assert_eq!(back.len(), 256);
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_bad_files() {
        let p = Path::new("x.csv");
        assert!(parse_spectrum("", p).is_err());
        assert!(parse_spectrum("# integration_time_ms=1\nwavelength_nm,counts\n", p).is_err());
        assert!(parse_spectrum(
            "# integration_time_ms=1\nwavelength_nm,counts\n510,1\n500,2\n",
            p
        )
        .is_err());
        assert!(parse_spectrum(
            "# integration_time_ms=1\nwavelength_nm,counts\n500,abc\n",
            p
        )
        .is_err());
        assert!(parse_spectrum("# integration_time_ms=1\nwl,counts\n500,1\n", p).is_err());
        assert!(parse_spectrum("wavelength_nm,counts\n500,1\n", p).is_err());
        let ok = parse_spectrum(
            "# integration_time_ms=2.5\nwavelength_nm,counts\n500,1\n510,2\n",
            p,
        )
        .unwrap();
        assert_eq!(ok.integration_time(), 2.5);
        assert_eq!(ok.unit(), Unit::DigitalCounts);
    }
}
