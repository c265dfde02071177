//! Metasurface front end: unit-cell resonance, coupling cap, microstrip
//! propagation and the constrained wave-domain combiner `G = W P`.

use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ArrayLayout;
use crate::linalg::{scale_columns, CMat, CVec, J};

/// Free-space wave impedance in ohms.
pub const ETA0: f64 = 376.730_313_668;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitCellParams {
    /// Coupling factor `F_m`, m³.
    pub coupling: f64,
    /// Quality factor `Q_m`.
    pub quality: f64,
    /// Resonance angular frequency, rad/s.
    pub resonance: f64,
}

impl UnitCellParams {
    pub fn damping(&self) -> f64 {
        self.resonance / (2.0 * self.quality)
    }
}

/// Lorentzian magnetic polarizability at angular frequency `omega`.
pub fn lorentzian_polarizability(p: &UnitCellParams, omega: f64) -> Complex64 {
    let num = p.coupling * omega * omega;
    let den = Complex64::new(p.resonance * p.resonance - omega * omega, p.damping() * omega);
    num / den
}

/// Peak dipole moment reached at resonance, `2 Q F k0² η0`.
pub fn max_dipole_moment(p: &UnitCellParams, wavelength: f64) -> f64 {
    let k0 = 2.0 * std::f64::consts::PI / wavelength;
    2.0 * p.quality * p.coupling * k0 * k0 * ETA0
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicrostripParams {
    /// Attenuation `α_w`, 1/m.
    pub attenuation: f64,
    /// Guided wavenumber `β_w`, 1/m.
    pub wavenumber: f64,
    /// Distance of each cell from its RF-chain end, meters.
    pub feed_distances: Vec<f64>,
}

impl MicrostripParams {
    /// Cell `j` of every strip sits `j · pitch` from the feed (`j` counted from one).
    pub fn along_strips(layout: &ArrayLayout, attenuation: f64, wavenumber: f64) -> Self {
        let mut feed_distances = vec![0.0; layout.num_elements()];
        for g in &layout.groups {
            for (j, idx) in g.clone().enumerate() {
                feed_distances[idx] = (j + 1) as f64 * layout.cell_pitch;
            }
        }
        MicrostripParams {
            attenuation,
            wavenumber,
            feed_distances,
        }
    }
}

/// Diagonal of the propagation matrix, `exp(-(α + jβ) d)` per cell.
pub fn propagation_matrix(ms: &MicrostripParams) -> CVec {
    CVec::from_iterator(
        ms.feed_distances.len(),
        ms.feed_distances
            .iter()
            .map(|&d| (-Complex64::new(ms.attenuation, ms.wavenumber) * d).exp()),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DmaMode {
    /// Lorentzian phase modulation.
    Lpm,
    /// Binary amplitude modulation.
    Bam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmaWeights {
    /// `M × N`, block diagonal over the layout groups.
    pub matrix: CMat,
    pub mode: DmaMode,
    pub m_max: f64,
}

impl DmaWeights {
    /// Builds the block-diagonal matrix, one weight per element.
    pub fn from_blocks(groups: &[Range<usize>], weights: &[Complex64], mode: DmaMode, m_max: f64) -> Self {
        let n = groups.last().map_or(0, |g| g.end);
        let mut matrix = CMat::zeros(groups.len(), n);
        for (i, g) in groups.iter().enumerate() {
            for j in g.clone() {
                matrix[(i, j)] = weights[j];
            }
        }
        DmaWeights { matrix, mode, m_max }
    }

    /// Worst violation of the block support and the constraint set.
    pub fn constraint_violation(&self, groups: &[Range<usize>]) -> f64 {
        let center = J * (self.m_max / 2.0);
        let mut worst = 0.0f64;
        for (i, row) in self.matrix.row_iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                let err = if !groups[i].contains(&j) {
                    w.norm()
                } else {
                    match self.mode {
                        DmaMode::Lpm => ((w - center).norm() - self.m_max / 2.0).abs(),
                        DmaMode::Bam => w.norm().min((w - self.m_max).norm()),
                    }
                };
                worst = worst.max(err);
            }
        }
        worst
    }
}

/// `G = W · diag(p)`.
pub fn wave_domain_combiner(weights: &CMat, propagation: &CVec) -> Result<CMat> {
    if weights.ncols() != propagation.len() {
        return Err(Error::dims(
            "wave-domain combiner",
            format!("{} propagation entries", weights.ncols()),
            propagation.len(),
        ));
    }
    Ok(scale_columns(weights, propagation))
}

/// Nearest point on the Lorentzian circle (center `j m/2`, radius `m/2`).
/// The center itself maps to `φ = 0`, i.e. `m (j + 1) / 2`.
pub fn project_lorentzian(z: Complex64, m_max: f64) -> Complex64 {
    let center = J * (m_max / 2.0);
    let offset = z - center;
    let r = offset.norm();
    if r < 1e-300 {
        return lorentzian_point(Complex64::new(1.0, 0.0), m_max);
    }
    center + offset * (m_max / 2.0 / r)
}

/// Maps a unit-circle phasor `e^{jφ}` onto the Lorentzian circle, `m (j + e^{jφ}) / 2`.
pub fn lorentzian_point(unit: Complex64, m_max: f64) -> Complex64 {
    (J + unit) * (m_max / 2.0)
}

/// Closest of `{0, m_max}`; ties go to `m_max`.
pub fn project_bam(z: Complex64, m_max: f64) -> Complex64 {
    if (z - m_max).norm() <= z.norm() {
        Complex64::new(m_max, 0.0)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Unit-modulus phasor of `z`; zero maps to phase zero.
pub fn unit_phasor(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r > 0.0 && r.is_finite() {
        z / r
    } else {
        Complex64::new(1.0, 0.0)
    }
}
