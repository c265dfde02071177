//! Array layouts, capture gains, receive correlation and external noise.
//!
//! All three receive architectures share the same physical aperture. The
//! metasurface is a set of microstrips spaced half a wavelength apart, each
//! carrying a row of sub-wavelength unit cells; the hybrid and digital arrays
//! are patch grids at half-wavelength pitch.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sinc;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Solid angle occupied by external noise sources (half space).
pub const NOISE_SOLID_ANGLE: f64 = 2.0 * std::f64::consts::PI;

/// Typical patch gain used for the default effective area, in dBi.
pub const PATCH_GAIN_DBI: f64 = 6.0;
pub const PATCH_EFFICIENCY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchitectureKind {
    Dma,
    Pchp,
    Dpa,
}

impl ArchitectureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchitectureKind::Dma => "dma",
            ArchitectureKind::Pchp => "pchp",
            ArchitectureKind::Dpa => "dpa",
        }
    }
}

impl fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchitectureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dma" => Ok(ArchitectureKind::Dma),
            "pchp" => Ok(ArchitectureKind::Pchp),
            "dpa" => Ok(ArchitectureKind::Dpa),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Physical aperture in carrier wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aperture {
    pub width: f64,
    pub height: f64,
}

impl Default for Aperture {
    fn default() -> Self {
        Aperture {
            width: 2.0,
            height: 8.0,
        }
    }
}

/// Element pitches in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pitch {
    /// Patch spacing and microstrip spacing.
    pub element: f64,
    /// Unit-cell pitch along a microstrip.
    pub cell: f64,
}

impl Default for Pitch {
    fn default() -> Self {
        Pitch {
            element: 0.5,
            cell: 1.0 / 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    pub kind: ArchitectureKind,
    pub positions: Vec<[f64; 3]>,
    /// Contiguous element ranges, one per RF chain.
    pub groups: Vec<Range<usize>>,
    pub element_effective_area: f64,
    pub wavelength: f64,
    /// Unit-cell pitch in meters (metasurface only, zero otherwise).
    pub cell_pitch: f64,
}

impl ArrayLayout {
    pub fn new(
        kind: ArchitectureKind,
        positions: Vec<[f64; 3]>,
        groups: Vec<Range<usize>>,
        element_effective_area: f64,
        wavelength: f64,
    ) -> Result<Self> {
        let layout = ArrayLayout {
            kind,
            positions,
            groups,
            element_effective_area,
            wavelength,
            cell_pitch: 0.0,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn num_elements(&self) -> usize {
        self.positions.len()
    }

    pub fn num_chains(&self) -> usize {
        self.groups.len()
    }

    pub fn group_of(&self, element: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&element))
    }

    pub fn with_effective_area(mut self, area: f64) -> Result<Self> {
        if !(area > 0.0) {
            return Err(Error::Config(format!("effective area must be positive, got {area}")));
        }
        self.element_effective_area = area;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::Config("layout has no elements".into()));
        }
        if !(self.element_effective_area > 0.0) {
            return Err(Error::Config("effective area must be positive".into()));
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::Config("wavelength must be positive".into()));
        }
        let mut next = 0;
        for g in &self.groups {
            if g.start != next || g.end <= g.start {
                return Err(Error::Config(format!(
                    "element groups must partition 0..{n} into contiguous non-empty ranges"
                )));
            }
            next = g.end;
        }
        if next != n {
            return Err(Error::Config(format!(
                "element groups cover {next} elements, layout has {n}"
            )));
        }
        Ok(())
    }
}

pub fn wavelength(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

/// Isotropic reference area `λ²/4π`.
pub fn isotropic_area(wavelength: f64) -> f64 {
    wavelength * wavelength / (4.0 * std::f64::consts::PI)
}

/// Default patch effective area with the 90% efficiency folded in.
pub fn default_patch_area(wavelength: f64) -> f64 {
    PATCH_EFFICIENCY * 10f64.powf(PATCH_GAIN_DBI / 10.0) * isotropic_area(wavelength)
}

fn count_along(extent: f64, pitch: f64) -> usize {
    (extent / pitch + 1e-9).floor() as usize
}

/// Builds the element layout for one architecture.
///
/// The metasurface uses one microstrip per RF chain-share: `width / element`
/// strips, each with `height / cell` cells. The patch array covers the same
/// aperture on an `element`-pitch grid, grouped column by column. The digital
/// array has exactly one patch per RF chain on a line.
pub fn build_layout(
    kind: ArchitectureKind,
    aperture: Aperture,
    rf_chains: usize,
    wavelength: f64,
    pitch: Pitch,
) -> Result<ArrayLayout> {
    if !(aperture.width > 0.0 && aperture.height > 0.0) {
        return Err(Error::Config("aperture dimensions must be positive".into()));
    }
    if rf_chains == 0 {
        return Err(Error::Config("at least one RF chain is required".into()));
    }
    let lam = wavelength;
    let (positions, per_group, area, cell_pitch) = match kind {
        ArchitectureKind::Dma => {
            let strips = count_along(aperture.width, pitch.element);
            let cells = count_along(aperture.height, pitch.cell);
            if strips == 0 || cells == 0 {
                return Err(Error::Config("aperture too small for a single unit cell".into()));
            }
            if strips % rf_chains != 0 {
                return Err(Error::Config(format!(
                    "{strips} microstrips cannot be split evenly across {rf_chains} RF chains"
                )));
            }
            let mut pos = Vec::with_capacity(strips * cells);
            for s in 0..strips {
                for c in 0..cells {
                    pos.push([
                        (s as f64 + 0.5) * pitch.element * lam,
                        (c as f64 + 0.5) * pitch.cell * lam,
                        0.0,
                    ]);
                }
            }
            // a unit cell behaves as a current sheet: effective area equals physical area
            let area = pitch.element * pitch.cell * lam * lam;
            (pos, strips * cells / rf_chains, area, pitch.cell * lam)
        }
        ArchitectureKind::Pchp => {
            let cols = count_along(aperture.width, pitch.element);
            let rows = count_along(aperture.height, pitch.element);
            let n = cols * rows;
            if n == 0 {
                return Err(Error::Config("aperture too small for a single patch".into()));
            }
            if n % rf_chains != 0 {
                return Err(Error::Config(format!(
                    "{n} patches cannot be split evenly across {rf_chains} RF chains"
                )));
            }
            let mut pos = Vec::with_capacity(n);
            for c in 0..cols {
                for r in 0..rows {
                    pos.push([
                        (c as f64 + 0.5) * pitch.element * lam,
                        (r as f64 + 0.5) * pitch.element * lam,
                        0.0,
                    ]);
                }
            }
            (pos, n / rf_chains, default_patch_area(lam), 0.0)
        }
        ArchitectureKind::Dpa => {
            let pos = (0..rf_chains)
                .map(|i| [(i as f64 + 0.5) * pitch.element * lam, 0.5 * pitch.element * lam, 0.0])
                .collect();
            (pos, 1, default_patch_area(lam), 0.0)
        }
    };
    let groups = (0..rf_chains).map(|g| g * per_group..(g + 1) * per_group).collect();
    let mut layout = ArrayLayout::new(kind, positions, groups, area, wavelength)?;
    layout.cell_pitch = cell_pitch;
    Ok(layout)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptureModel {
    pub efficiency: f64,
    pub isotropic_area: f64,
}

impl CaptureModel {
    pub fn new(efficiency: f64, wavelength: f64) -> Self {
        CaptureModel {
            efficiency,
            isotropic_area: isotropic_area(wavelength),
        }
    }

    /// Captured power relative to an isotropic antenna.
    pub fn power_gain(&self, effective_area: f64) -> f64 {
        self.efficiency * effective_area / self.isotropic_area
    }

    pub fn amplitude(&self, effective_area: f64) -> f64 {
        self.power_gain(effective_area).sqrt()
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Raw `sinc(2 d_ij / λ)` kernel without PSD repair.
pub fn sinc_correlation(layout: &ArrayLayout) -> DMatrix<f64> {
    let n = layout.num_elements();
    let p = &layout.positions;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            sinc(2.0 * distance(&p[i], &p[j]) / layout.wavelength)
        }
    })
}

/// Receive correlation for a 3D isotropic scattering field.
///
/// Negative eigenvalues (floating-point noise on dense grids) are clipped to
/// zero and the diagonal is renormalized to one.
pub fn receive_correlation(layout: &ArrayLayout) -> DMatrix<f64> {
    let raw = sinc_correlation(layout);
    let eig = raw.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return raw;
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(l.max(0.0));
    }
    let clipped = &scaled * v.transpose();
    let d: Vec<f64> = (0..clipped.nrows()).map(|i| clipped[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    let n = clipped.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            0.5 * (clipped[(i, j)] + clipped[(j, i)]) / (d[i] * d[j])
        }
    })
}

/// External noise power captured by an element, `k T B (A/λ²) ΔΩ`.
pub fn antenna_noise_power(effective_area: f64, bandwidth: f64, temperature: f64, wavelength: f64) -> f64 {
    BOLTZMANN * temperature * bandwidth * effective_area / (wavelength * wavelength) * NOISE_SOLID_ANGLE
}
