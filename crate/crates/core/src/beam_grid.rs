//! DFT beam dictionary over an azimuth × elevation grid.
//!
//! A beam `b_{h,v}` is the Kronecker product of a horizontal steering vector
//! (phase `-2π (d_H/λ) k sin φ cos θ`, `k = 0..M_H`) and a vertical one
//! (phase `-2π (d_V/λ) k cos φ`, `k = 0..M_V`), each scaled to unit norm.
//! Here `θ` and `φ` are the *formula angles*: `φ` is measured from the array's
//! vertical axis and `θ` from its horizontal axis.
//!
//! Grids are usually specified with broadside angles instead (azimuth from
//! boresight, elevation above the horizon). [`AngleConvention::Broadside`]
//! maps those onto formula angles with `θ = π/2 - azimuth` and
//! `φ = π/2 - elevation`, so the horizontal phase becomes
//! `cos(elevation) sin(azimuth)` and the vertical one `sin(elevation)`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform rectangular antenna array at the base station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub m_h: usize,
    pub m_v: usize,
    pub d_h_over_lambda: f64,
    pub d_v_over_lambda: f64,
}

impl ArrayGeometry {
    pub fn new(m_h: usize, m_v: usize, d_h_over_lambda: f64, d_v_over_lambda: f64) -> Result<Self> {
        let geometry = Self {
            m_h,
            m_v,
            d_h_over_lambda,
            d_v_over_lambda,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// Half-wavelength spacing in both directions.
    pub fn half_wavelength(m_h: usize, m_v: usize) -> Result<Self> {
        Self::new(m_h, m_v, 0.5, 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_h == 0 || self.m_v == 0 {
            return Err(Error::InvalidParameter(format!(
                "antenna counts must be positive, got {}x{}",
                self.m_h, self.m_v
            )));
        }
        if !(self.d_h_over_lambda > 0.0 && self.d_v_over_lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "antenna spacings must be positive, got {} and {}",
                self.d_h_over_lambda, self.d_v_over_lambda
            )));
        }
        Ok(())
    }

    pub fn num_antennas(&self) -> usize {
        self.m_h * self.m_v
    }
}

/// How the angles of an [`AngleGrid`] map onto the beam formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleConvention {
    /// Angles are used verbatim as the formula's `θ` and `φ`.
    Formula,
    /// Azimuth from boresight and elevation above the horizon.
    #[default]
    Broadside,
}

impl AngleConvention {
    /// Converts an (azimuth, elevation) pair in this convention to formula angles `(θ, φ)`.
    pub fn to_formula(self, azimuth: f64, elevation: f64) -> (f64, f64) {
        match self {
            AngleConvention::Formula => (azimuth, elevation),
            AngleConvention::Broadside => (FRAC_PI_2 - azimuth, FRAC_PI_2 - elevation),
        }
    }
}

/// Evenly spaced azimuth and elevation angles, in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    azimuths: Vec<f64>,
    elevations: Vec<f64>,
    convention: AngleConvention,
}

impl AngleGrid {
    pub fn new(
        azimuths: Vec<f64>,
        elevations: Vec<f64>,
        convention: AngleConvention,
    ) -> Result<Self> {
        check_even_spacing("azimuth", &azimuths)?;
        check_even_spacing("elevation", &elevations)?;
        Ok(Self {
            azimuths,
            elevations,
            convention,
        })
    }

    /// Builds a grid from degrees: `count` azimuths starting at `start` with
    /// step `step`, plus an explicit elevation list.
    pub fn from_degrees(
        azimuth_start: f64,
        azimuth_step: f64,
        azimuth_count: usize,
        elevations: &[f64],
        convention: AngleConvention,
    ) -> Result<Self> {
        let azimuths = (0..azimuth_count)
            .map(|n| (azimuth_start + azimuth_step * n as f64).to_radians())
            .collect();
        let elevations = elevations.iter().map(|e| e.to_radians()).collect();
        Self::new(azimuths, elevations, convention)
    }

    /// The 16 × 4 grid: azimuth `-56.25° + 7.5° n`, elevation `{0, 7.5, 15, 22.5}°`.
    pub fn standard_64() -> Self {
        Self::from_degrees(
            -56.25,
            7.5,
            16,
            &[0.0, 7.5, 15.0, 22.5],
            AngleConvention::Broadside,
        )
        .expect("standard grid is valid")
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }

    pub fn convention(&self) -> AngleConvention {
        self.convention
    }

    /// Grid step, or `None` for a single angle.
    pub fn azimuth_spacing(&self) -> Option<f64> {
        spacing(&self.azimuths)
    }

    pub fn elevation_spacing(&self) -> Option<f64> {
        spacing(&self.elevations)
    }
}

fn spacing(angles: &[f64]) -> Option<f64> {
    (angles.len() >= 2).then(|| angles[1] - angles[0])
}

fn check_even_spacing(name: &str, angles: &[f64]) -> Result<()> {
    if angles.is_empty() {
        return Err(Error::InvalidParameter(format!("{name} list is empty")));
    }
    if angles.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name} list has non-finite entries"
        )));
    }
    if let Some(step) = spacing(angles) {
        if step <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "{name} list is not strictly increasing"
            )));
        }
        let tol = 1e-9 * step.max(1.0);
        for w in angles.windows(2) {
            if ((w[1] - w[0]) - step).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "{name} list is not evenly spaced"
                )));
            }
        }
    }
    Ok(())
}

/// Azimuth/elevation index pair of a beam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BeamCoord {
    pub h: usize,
    pub v: usize,
}

impl BeamCoord {
    pub fn new(h: usize, v: usize) -> Self {
        Self { h, v }
    }
}

/// Shape of a beam grid: `n_azimuth × n_elevation`, flattened row-major over
/// `(v, h)`, i.e. `index = v * n_azimuth + h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub n_azimuth: usize,
    pub n_elevation: usize,
}

impl GridShape {
    pub fn len(&self) -> usize {
        self.n_azimuth * self.n_elevation
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, coord: BeamCoord) -> usize {
        debug_assert!(coord.h < self.n_azimuth && coord.v < self.n_elevation);
        coord.v * self.n_azimuth + coord.h
    }

    pub fn coord_of(&self, index: usize) -> BeamCoord {
        debug_assert!(index < self.len());
        BeamCoord {
            h: index % self.n_azimuth,
            v: index / self.n_azimuth,
        }
    }
}

/// Unit-norm DFT beam for formula angles `(azimuth θ, elevation φ)`.
///
/// The result is the Kronecker product `horizontal ⊗ vertical`, so entry
/// `k * M_V + l` pairs horizontal element `k` with vertical element `l`.
pub fn make_dft_beam(geometry: &ArrayGeometry, azimuth: f64, elevation: f64) -> Vec<Complex64> {
    let horizontal = steering(
        geometry.m_h,
        geometry.d_h_over_lambda * elevation.sin() * azimuth.cos(),
    );
    let vertical = steering(geometry.m_v, geometry.d_v_over_lambda * elevation.cos());
    let mut beam = Vec::with_capacity(geometry.num_antennas());
    for h in &horizontal {
        for v in &vertical {
            beam.push(h * v);
        }
    }
    beam
}

fn steering(count: usize, phase_per_element: f64) -> Vec<Complex64> {
    let scale = 1.0 / (count as f64).sqrt();
    (0..count)
        .map(|k| Complex64::from_polar(scale, -2.0 * PI * phase_per_element * k as f64))
        .collect()
}

/// The beam dictionary. Immutable once built.
#[derive(Debug, Clone)]
pub struct BeamGrid {
    geometry: ArrayGeometry,
    angles: AngleGrid,
    shape: GridShape,
    beams: Vec<Vec<Complex64>>,
}

impl BeamGrid {
    /// Builds every beam; `beams[index_of(h, v)]` points at `(azimuths[h], elevations[v])`.
    pub fn build(geometry: ArrayGeometry, angles: AngleGrid) -> Result<Self> {
        geometry.validate()?;
        let shape = GridShape {
            n_azimuth: angles.azimuths.len(),
            n_elevation: angles.elevations.len(),
        };
        let beams = (0..shape.len())
            .map(|i| {
                let c = shape.coord_of(i);
                let (theta, phi) = angles
                    .convention
                    .to_formula(angles.azimuths[c.h], angles.elevations[c.v]);
                make_dft_beam(&geometry, theta, phi)
            })
            .collect();
        Ok(Self {
            geometry,
            angles,
            shape,
            beams,
        })
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn angles(&self) -> &AngleGrid {
        &self.angles
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn beam(&self, index: usize) -> &[Complex64] {
        &self.beams[index]
    }

    pub fn beams(&self) -> &[Vec<Complex64>] {
        &self.beams
    }

    pub fn index_of(&self, coord: BeamCoord) -> usize {
        self.shape.index_of(coord)
    }

    pub fn coord_of(&self, index: usize) -> BeamCoord {
        self.shape.coord_of(index)
    }

    /// Default metric weights: `ℓ_V = 1` and `ℓ_H = (elevation step / azimuth step)²`,
    /// so that one index step in either direction spans the same angular distance.
    pub fn default_metric(&self) -> BeamIndexMetric {
        let ell_h = match (
            self.angles.azimuth_spacing(),
            self.angles.elevation_spacing(),
        ) {
            (Some(az), Some(el)) => (el / az).powi(2),
            _ => 1.0,
        };
        BeamIndexMetric { ell_h, ell_v: 1.0 }
    }
}

/// Weighted Euclidean distance between beam indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamIndexMetric {
    pub ell_h: f64,
    pub ell_v: f64,
}

impl Default for BeamIndexMetric {
    fn default() -> Self {
        Self {
            ell_h: 1.0,
            ell_v: 1.0,
        }
    }
}

impl BeamIndexMetric {
    /// `sqrt((h - h')² / ℓ_H + (v - v')² / ℓ_V)`.
    pub fn distance(&self, a: BeamCoord, b: BeamCoord) -> f64 {
        let dh = a.h as f64 - b.h as f64;
        let dv = a.v as f64 - b.v as f64;
        (dh * dh / self.ell_h + dv * dv / self.ell_v).sqrt()
    }
}

/// Hermitian inner product `⟨a, b⟩ = Σ conj(a_k) b_k`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn norm(v: &[Complex64]) -> f64 {
        v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn single_antenna_beam_is_one() {
        let g = ArrayGeometry::half_wavelength(1, 1).unwrap();
        let b = make_dft_beam(&g, 0.3, 1.1);
        assert_eq!(b.len(), 1);
        assert_abs_diff_eq!(b[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b[0].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn two_element_endfire_beam() {
        let g = ArrayGeometry::new(2, 1, 0.5, 0.5).unwrap();
        let b = make_dft_beam(&g, 0.0, FRAC_PI_2);
        let s = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(b[0].re, s, epsilon = 1e-12);
        assert_abs_diff_eq!(b[1].re, -s, epsilon = 1e-12);
        assert_abs_diff_eq!(b[1].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn entries_have_equal_modulus() {
        let g = ArrayGeometry::half_wavelength(4, 4).unwrap();
        let b = make_dft_beam(&g, 0.4, 1.2);
        assert_abs_diff_eq!(norm(&b), 1.0, epsilon = 1e-12);
        for c in &b {
            assert_abs_diff_eq!(c.norm(), 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn standard_grid_has_64_beams() {
        let grid = BeamGrid::build(
            ArrayGeometry::half_wavelength(8, 8).unwrap(),
            AngleGrid::standard_64(),
        )
        .unwrap();
        assert_eq!(grid.len(), 64);
        assert_eq!(
            grid.shape(),
            GridShape {
                n_azimuth: 16,
                n_elevation: 4
            }
        );
        assert_abs_diff_eq!(
            grid.angles().azimuths()[0],
            (-56.25f64).to_radians(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            grid.angles().azimuths()[15],
            56.25f64.to_radians(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn single_and_small_grids() {
        let g = ArrayGeometry::half_wavelength(2, 2).unwrap();
        let one = BeamGrid::build(
            g,
            AngleGrid::new(vec![0.1], vec![0.2], AngleConvention::Formula).unwrap(),
        )
        .unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(
            one.default_metric(),
            BeamIndexMetric {
                ell_h: 1.0,
                ell_v: 1.0
            }
        );

        let angles =
            AngleGrid::from_degrees(0.0, 10.0, 3, &[0.0, 5.0], AngleConvention::Broadside).unwrap();
        let grid = BeamGrid::build(g, angles).unwrap();
        assert_eq!(grid.len(), 6);
        let mut seen = [false; 6];
        for h in 0..3 {
            for v in 0..2 {
                let i = grid.index_of(BeamCoord::new(h, v));
                assert!(!seen[i]);
                seen[i] = true;
                assert_eq!(grid.coord_of(i), BeamCoord::new(h, v));
            }
        }
        // azimuth step 10°, elevation step 5°
        assert_abs_diff_eq!(grid.default_metric().ell_h, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn beams_follow_index_layout() {
        let g = ArrayGeometry::half_wavelength(4, 2).unwrap();
        let angles =
            AngleGrid::from_degrees(-10.0, 10.0, 3, &[0.0, 10.0], AngleConvention::Broadside)
                .unwrap();
        let grid = BeamGrid::build(g, angles.clone()).unwrap();
        let c = BeamCoord::new(2, 1);
        let (t, p) =
            AngleConvention::Broadside.to_formula(angles.azimuths()[2], angles.elevations()[1]);
        assert_eq!(
            grid.beam(grid.index_of(c)),
            make_dft_beam(&g, t, p).as_slice()
        );
        assert_eq!(grid.index_of(c), 5);
    }

    #[test]
    fn rejects_bad_angle_lists() {
        assert!(AngleGrid::new(vec![], vec![0.0], AngleConvention::Formula).is_err());
        assert!(AngleGrid::new(vec![0.0, 0.1, 0.3], vec![0.0], AngleConvention::Formula).is_err());
        assert!(AngleGrid::new(vec![0.2, 0.1], vec![0.0], AngleConvention::Formula).is_err());
        assert!(ArrayGeometry::new(0, 1, 0.5, 0.5).is_err());
        assert!(ArrayGeometry::new(1, 1, 0.0, 0.5).is_err());
    }

    #[test]
    fn distance_examples() {
        let unit = BeamIndexMetric::default();
        assert_eq!(
            unit.distance(BeamCoord::new(3, 1), BeamCoord::new(3, 1)),
            0.0
        );
        assert_abs_diff_eq!(
            unit.distance(BeamCoord::new(0, 0), BeamCoord::new(3, 4)),
            5.0,
            epsilon = 1e-12
        );
        let m = BeamIndexMetric {
            ell_h: 4.0,
            ell_v: 1.0,
        };
        assert_abs_diff_eq!(
            m.distance(BeamCoord::new(2, 0), BeamCoord::new(0, 0)),
            1.0,
            epsilon = 1e-12
        );
    }

    fn coord() -> impl Strategy<Value = BeamCoord> {
        (0usize..16, 0usize..4).prop_map(|(h, v)| BeamCoord::new(h, v))
    }

    proptest! {
        #[test]
        fn grid_beams_are_unit_norm(m_h in 1usize..9, m_v in 1usize..9, d in 0.1f64..1.0) {
            let g = ArrayGeometry::new(m_h, m_v, d, d).unwrap();
            let grid = BeamGrid::build(g, AngleGrid::standard_64()).unwrap();
            for b in grid.beams() {
                prop_assert!((norm(b) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn inner_product_modulus_is_symmetric(i in 0usize..64, j in 0usize..64) {
            let grid = BeamGrid::build(ArrayGeometry::half_wavelength(8, 8).unwrap(), AngleGrid::standard_64()).unwrap();
            let ab = inner(grid.beam(i), grid.beam(j));
            let ba = inner(grid.beam(j), grid.beam(i));
            prop_assert_eq!(ab.norm(), ba.conj().norm());
            prop_assert_eq!(ab, ba.conj());
        }

        #[test]
        fn index_bijection(h in 0usize..16, v in 0usize..4) {
            let shape = GridShape { n_azimuth: 16, n_elevation: 4 };
            prop_assert_eq!(shape.coord_of(shape.index_of(BeamCoord::new(h, v))), BeamCoord::new(h, v));
        }

        #[test]
        fn metric_axioms(a in coord(), b in coord(), c in coord(), lh in 0.1f64..10.0, lv in 0.1f64..10.0) {
            let m = BeamIndexMetric { ell_h: lh, ell_v: lv };
            prop_assert_eq!(m.distance(a, a), 0.0);
            prop_assert_eq!(m.distance(a, b), m.distance(b, a));
            prop_assert!(m.distance(a, c) <= m.distance(a, b) + m.distance(b, c) + 1e-12);
        }
    }
}
