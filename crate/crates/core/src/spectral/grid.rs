use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered set of band center wavelengths in nanometers.
///
/// Centers are strictly increasing and positive. Two grids are equal only when
/// every center matches exactly; no tolerance is applied anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WavelengthGrid {
    centers: Vec<f64>,
}

impl WavelengthGrid {
    pub fn new(centers: Vec<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidGrid(
                "grid must contain at least one wavelength".into(),
            ));
        }
        if let Some(bad) = centers.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "wavelength {bad} is not a positive finite value"
            )));
        }
        if let Some(w) = centers.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "wavelengths must be strictly increasing ({} followed by {})",
                w[0], w[1]
            )));
        }
        Ok(Self { centers })
    }

    /// `count` evenly spaced centers from `start` to `end` inclusive.
    pub fn linspace(start: f64, end: f64, count: usize) -> Result<Self> {
        match count {
            0 => Err(Error::InvalidGrid(
                "grid must contain at least one wavelength".into(),
            )),
            1 => Self::new(vec![start]),
            _ => {
                let step = (end - start) / (count - 1) as f64;
                Self::new((0..count).map(|i| start + step * i as f64).collect())
            }
        }
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.centers[0]
    }

    pub fn max(&self) -> f64 {
        self.centers[self.centers.len() - 1]
    }

    /// Index of the center closest to `wavelength`, ties toward the lower index.
    pub fn nearest_index(&self, wavelength: f64) -> usize {
        let mut best = 0;
        let mut best_dist = (self.centers[0] - wavelength).abs();
        for (i, c) in self.centers.iter().enumerate().skip(1) {
            let d = (c - wavelength).abs();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        best
    }

    /// Nearest band to `wavelength`, rejected when the distance exceeds half the
    /// spacing to the neighbouring center on the side of the request.
    pub fn lookup_band(&self, wavelength: f64) -> Result<usize> {
        let idx = self.nearest_index(wavelength);
        let center = self.centers[idx];
        let dist = (center - wavelength).abs();
        if dist == 0.0 {
            return Ok(idx);
        }
        let n = self.centers.len();
        let toward = if wavelength > center {
            idx + 1
        } else {
            idx.wrapping_sub(1)
        };
        let spacing = if toward < n {
            (self.centers[toward] - center).abs()
        } else if n > 1 {
            // request lies beyond the grid edge; use the interior gap
            let inner = if idx == 0 { 1 } else { idx - 1 };
            (self.centers[inner] - center).abs()
        } else {
            0.0
        };
        if dist <= 0.5 * spacing {
            Ok(idx)
        } else {
            Err(Error::MissingBand {
                requested: wavelength,
                nearest: center,
            })
        }
    }

    /// Sub-grid made of the centers at `indices` (must stay strictly increasing).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.centers[i]).collect())
    }
}

impl fmt::Display for WavelengthGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} bands [{}..{}] nm",
            self.len(),
            self.min(),
            self.max()
        )
    }
}

impl TryFrom<Vec<f64>> for WavelengthGrid {
    type Error = Error;

    fn try_from(centers: Vec<f64>) -> Result<Self> {
        Self::new(centers)
    }
}

impl From<WavelengthGrid> for Vec<f64> {
    fn from(grid: WavelengthGrid) -> Self {
        grid.centers
    }
}

pub(crate) fn ensure_same_grid(expected: &WavelengthGrid, found: &WavelengthGrid) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::GridMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        })
    }
}

/// Nearest-wavelength correspondence from a spectrometer grid to a camera grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMapping {
    source_grid: WavelengthGrid,
    target_grid: WavelengthGrid,
    indices: Vec<usize>,
}

impl BandMapping {
    pub fn source_grid(&self) -> &WavelengthGrid {
        &self.source_grid
    }

    pub fn target_grid(&self) -> &WavelengthGrid {
        &self.target_grid
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Source wavelengths picked for each target band.
    ///
    /// Two target bands may share one source channel on a coarse source grid,
    /// so this is a plain list rather than a [`WavelengthGrid`].
    pub fn calibration_wavelengths(&self) -> Vec<f64> {
        self.indices
            .iter()
            .map(|&i| self.source_grid.centers[i])
            .collect()
    }
}

/// Maps every target band to the index of the closest source wavelength.
///
/// The source grid must span the full target range. Equidistant candidates
/// resolve to the lower source index.
pub fn build_band_mapping(source: &WavelengthGrid, target: &WavelengthGrid) -> Result<BandMapping> {
    let uncovered: Vec<f64> = target
        .centers()
        .iter()
        .copied()
        .filter(|&t| t < source.min() || t > source.max())
        .collect();
    if !uncovered.is_empty() {
        return Err(Error::SpanViolation {
            source_min: source.min(),
            source_max: source.max(),
            uncovered,
        });
    }

    let src = source.centers();
    let mut indices = Vec::with_capacity(target.len());
    // both grids are sorted, so a single forward sweep finds each nearest index
    let mut a = 0;
    for &t in target.centers() {
        while a + 1 < src.len() && (src[a + 1] - t).abs() < (src[a] - t).abs() {
            a += 1;
        }
        indices.push(a);
    }

    Ok(BandMapping {
        source_grid: source.clone(),
        target_grid: target.clone(),
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(v: &[f64]) -> WavelengthGrid {
        WavelengthGrid::new(v.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(WavelengthGrid::new(vec![]).is_err());
        assert!(WavelengthGrid::new(vec![500.0, 500.0]).is_err());
        assert!(WavelengthGrid::new(vec![510.0, 500.0]).is_err());
        assert!(WavelengthGrid::new(vec![0.0, 500.0]).is_err());
        assert!(WavelengthGrid::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn nearest_neighbour_mapping() {
        let m = build_band_mapping(&grid(&[500.0, 510.0, 520.0]), &grid(&[508.0])).unwrap();
        assert_eq!(m.indices(), &[1]);
        assert_eq!(m.calibration_wavelengths(), vec![510.0]);
    }

    #[test]
    fn identity_mapping() {
        let g = grid(&[500.0, 510.0, 520.0, 530.0]);
        let m = build_band_mapping(&g, &g).unwrap();
        assert_eq!(m.indices(), &[0, 1, 2, 3]);
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let m = build_band_mapping(&grid(&[500.0, 510.0]), &grid(&[505.0])).unwrap();
        assert_eq!(m.indices(), &[0]);
    }

    #[test]
    fn span_violation_names_uncovered() {
        let err =
            build_band_mapping(&grid(&[500.0, 600.0]), &grid(&[450.0, 550.0, 650.0])).unwrap_err();
        match err {
            Error::SpanViolation { uncovered, .. } => assert_eq!(uncovered, vec![450.0, 650.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lookup_band_rejects_far_requests() {
        let g = grid(&[660.0, 670.0, 680.0]);
        assert_eq!(g.lookup_band(661.0).unwrap(), 0);
        assert_eq!(g.lookup_band(684.0).unwrap(), 2);
        assert_eq!(g.lookup_band(685.0).unwrap(), 2);
        assert!(g.lookup_band(686.0).is_err());
        assert!(g.lookup_band(600.0).is_err());
    }

    fn brute_force(src: &[f64], t: f64) -> usize {
        let mut best = 0;
        for a in 0..src.len() {
            if (src[a] - t).abs() < (src[best] - t).abs() {
                best = a;
            }
        }
        best
    }

    fn sorted_grid(raw: Vec<f64>) -> Vec<f64> {
        let mut v = raw;
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    }

    proptest! {
        #[test]
        fn mapping_matches_exhaustive_argmin(
            src in prop::collection::vec(400.0f64..1800.0, 2..80),
            tgt in prop::collection::vec(0.0f64..1.0, 1..30),
        ) {
            let src = sorted_grid(src);
            prop_assume!(src.len() >= 2);
            let lo = src[0];
            let hi = src[src.len() - 1];
            let tgt = sorted_grid(tgt.into_iter().map(|u| lo + u * (hi - lo)).collect());
            let s = WavelengthGrid::new(src.clone()).unwrap();
            let t = WavelengthGrid::new(tgt.clone()).unwrap();
            let m = build_band_mapping(&s, &t).unwrap();
            for (b, &tw) in tgt.iter().enumerate() {
                prop_assert_eq!(m.indices()[b], brute_force(&src, tw));
            }
        }
    }
}
