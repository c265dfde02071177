//! Kronecker Rayleigh channels, pathloss and receiver noise levels.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{receive_correlation, ArrayLayout, CaptureModel, BOLTZMANN};
use crate::linalg::{sqrt_psd, CMat};

/// Log-distance pathloss `PL_dB = slope·log10(d) + intercept + freq_coeff·log10(f_GHz)`.
///
/// Defaults are the urban-microcell NLoS hexagonal-layout fit with a 10 m base
/// station height folded into the slope and intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathlossModel {
    pub slope: f64,
    pub intercept: f64,
    pub freq_coeff: f64,
    pub min_distance: f64,
    pub max_distance: f64,
}

impl Default for PathlossModel {
    fn default() -> Self {
        // (44.9 - 6.55 log10 h) log10 d + 34.46 + 5.83 log10 h + 23 log10(f/5), h = 10 m
        PathlossModel {
            slope: 38.35,
            intercept: 24.213_689_900_271_564,
            freq_coeff: 23.0,
            min_distance: 10.0,
            max_distance: 2000.0,
        }
    }
}

impl PathlossModel {
    pub fn loss_db(&self, distance: f64, carrier_hz: f64) -> Result<f64> {
        if !(distance >= self.min_distance && distance <= self.max_distance) {
            return Err(Error::Config(format!(
                "distance {distance} m outside pathloss validity range [{}, {}] m",
                self.min_distance, self.max_distance
            )));
        }
        Ok(self.slope * distance.log10() + self.intercept + self.freq_coeff * (carrier_hz / 1e9).log10())
    }

    /// Linear power gain, capped at one.
    pub fn gain(&self, distance: f64, carrier_hz: f64) -> Result<f64> {
        Ok(10f64.powf(-self.loss_db(distance, carrier_hz)? / 10.0).min(1.0))
    }
}

/// Free-function form of [`PathlossModel::gain`] with the default coefficients.
pub fn pathloss_umi_nlos(distance: f64, carrier_hz: f64) -> Result<f64> {
    PathlossModel::default().gain(distance, carrier_hz)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserDrop {
    pub distances: Vec<f64>,
    pub gains: Vec<f64>,
    pub seed: u64,
}

impl UserDrop {
    pub fn from_distances(distances: Vec<f64>, model: &PathlossModel, carrier_hz: f64) -> Result<Self> {
        let gains = distances
            .iter()
            .map(|&d| model.gain(d, carrier_hz))
            .collect::<Result<Vec<_>>>()?;
        Ok(UserDrop {
            distances,
            gains,
            seed: 0,
        })
    }

    /// Drops `users` uniformly over the ring `inner..outer` meters.
    pub fn sample(
        users: usize,
        inner: f64,
        outer: f64,
        model: &PathlossModel,
        carrier_hz: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(inner > 0.0 && outer >= inner) {
            return Err(Error::Config(format!("invalid user ring [{inner}, {outer}] m")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let distances = (0..users)
            .map(|_| {
                let u: f64 = rng.random();
                (inner * inner + u * (outer * outer - inner * inner)).sqrt()
            })
            .collect();
        let mut drop = Self::from_distances(distances, model, carrier_hz)?;
        drop.seed = seed;
        Ok(drop)
    }

    pub fn mean_gain(&self) -> f64 {
        if self.gains.is_empty() {
            0.0
        } else {
            self.gains.iter().sum::<f64>() / self.gains.len() as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// `N × K`; includes pathloss and element capture amplitude.
    pub h: CMat,
    pub rx_correlation: Arc<DMatrix<f64>>,
    pub gains: Vec<f64>,
}

/// Precomputed Kronecker sampler for one layout.
#[derive(Debug, Clone)]
pub struct KroneckerSampler {
    rx_correlation: Arc<DMatrix<f64>>,
    rx_sqrt: CMat,
    capture_amplitude: f64,
}

impl KroneckerSampler {
    pub fn new(layout: &ArrayLayout, capture: CaptureModel) -> Self {
        Self::from_correlation(
            receive_correlation(layout),
            capture.amplitude(layout.element_effective_area),
        )
    }

    pub fn from_correlation(rx_correlation: DMatrix<f64>, capture_amplitude: f64) -> Self {
        let rx_sqrt = sqrt_psd(&rx_correlation).map(|v| Complex64::new(v, 0.0));
        KroneckerSampler {
            rx_correlation: Arc::new(rx_correlation),
            rx_sqrt,
            capture_amplitude,
        }
    }

    pub fn rx_correlation(&self) -> &Arc<DMatrix<f64>> {
        &self.rx_correlation
    }

    pub fn num_elements(&self) -> usize {
        self.rx_sqrt.nrows()
    }

    /// `H = c · Σ_rx^{1/2} Ĥ diag(√β)` with `Ĥ` i.i.d. `CN(0, 1)`.
    pub fn sample<R: Rng + ?Sized>(&self, drop: &UserDrop, rng: &mut R) -> ChannelRealization {
        let n = self.num_elements();
        let k = drop.gains.len();
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let white = CMat::from_fn(n, k, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        });
        let mut h = &self.rx_sqrt * white;
        for (j, mut col) in h.column_iter_mut().enumerate() {
            col *= Complex64::new(self.capture_amplitude * drop.gains[j].sqrt(), 0.0);
        }
        ChannelRealization {
            h,
            rx_correlation: Arc::clone(&self.rx_correlation),
            gains: drop.gains.clone(),
        }
    }
}

/// One-shot convenience around [`KroneckerSampler`].
pub fn sample_channel<R: Rng + ?Sized>(
    layout: &ArrayLayout,
    capture: CaptureModel,
    drop: &UserDrop,
    rng: &mut R,
) -> ChannelRealization {
    KroneckerSampler::new(layout, capture).sample(drop, rng)
}

/// Input-referred RF-chain noise, `k T B (F - 1)`.
pub fn rf_noise_power(bandwidth: f64, temperature: f64, noise_figure_db: f64) -> f64 {
    BOLTZMANN * temperature * bandwidth * (10f64.powf(noise_figure_db / 10.0) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// External noise per element of the layout in use.
    pub antenna: f64,
    pub rf: f64,
}

impl NoiseSpec {
    pub fn external_covariance(&self, rx_correlation: &DMatrix<f64>) -> DMatrix<f64> {
        rx_correlation * self.antenna
    }
}
