//! Partially-connected hybrid phased array and fully digital array.

use std::ops::Range;

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dma::unit_phasor;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, hermitian_map, CMat};

/// Loss of an ideal 2-way split, recovered by coherent combining.
pub const INHERENT_SPLIT_DB: f64 = 3.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageRule {
    /// `⌈log2 N_s⌉` two-way stages.
    Log2,
    /// One two-way stage per element of the subarray.
    PerElement,
}

impl StageRule {
    pub fn stages(self, subarray: usize) -> u32 {
        match self {
            StageRule::Log2 => (subarray.max(1) as f64).log2().ceil() as u32,
            StageRule::PerElement => subarray as u32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PchpLossBudget {
    pub phase_shifter_db: f64,
    pub wilkinson_il_db: f64,
    pub stages: u32,
    /// Apply the full insertion loss per stage instead of only the excess over the split.
    pub strict: bool,
}

impl PchpLossBudget {
    pub fn new(phase_shifter_db: f64, wilkinson_il_db: f64, subarray: usize, rule: StageRule) -> Self {
        PchpLossBudget {
            phase_shifter_db,
            wilkinson_il_db,
            stages: rule.stages(subarray),
            strict: false,
        }
    }

    pub fn lossless(subarray: usize) -> Self {
        Self::new(0.0, INHERENT_SPLIT_DB, subarray, StageRule::Log2)
    }
}

/// Amplitude factor a signal path picks up through phase shifter and combiner tree.
pub fn pchp_loss_amplitude(budget: &PchpLossBudget) -> f64 {
    let per_stage_db = if budget.strict {
        budget.wilkinson_il_db
    } else {
        budget.wilkinson_il_db - INHERENT_SPLIT_DB
    };
    10f64.powf(-budget.phase_shifter_db / 20.0) * 10f64.powf(-per_stage_db / 20.0).powi(budget.stages as i32)
}

/// Gain of the ideal combining tree, `(1/√2)^stages`.
pub fn combining_tree_gain(stages: u32) -> f64 {
    std::f64::consts::FRAC_1_SQRT_2.powi(stages as i32)
}

/// One ideal two-way combining stage.
pub fn wilkinson_stage(x1: Complex64, x2: Complex64) -> Complex64 {
    (x1 + x2) * std::f64::consts::FRAC_1_SQRT_2
}

#[derive(Debug, Clone, PartialEq)]
pub struct PchpWeights {
    /// `M × N` block diagonal; every supported entry has modulus `amplitude`.
    pub matrix: CMat,
    pub amplitude: f64,
}

impl PchpWeights {
    pub fn constraint_violation(&self, groups: &[Range<usize>]) -> f64 {
        let mut worst = 0.0f64;
        for (i, row) in self.matrix.row_iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                let err = if groups[i].contains(&j) {
                    (w.norm() - self.amplitude).abs()
                } else {
                    w.norm()
                };
                worst = worst.max(err);
            }
        }
        worst
    }
}

/// Phase-only projection of a target analog matrix onto the subarray structure.
pub fn pchp_analog_update(target: &CMat, groups: &[Range<usize>], amplitude: f64) -> PchpWeights {
    let mut matrix = CMat::zeros(target.nrows(), target.ncols());
    for (i, g) in groups.iter().enumerate() {
        for j in g.clone() {
            matrix[(i, j)] = unit_phasor(target[(i, j)]) * amplitude;
        }
    }
    PchpWeights { matrix, amplitude }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearReceiver {
    Mrc,
    Zf,
}

/// Hermitian inverse that falls back to a ridge when the condition number exceeds 1e12.
pub(crate) fn regularized_inverse(a: &CMat, context: &str) -> CMat {
    let eig = hermitian_eigenvalues(a);
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if max > 0.0 && min > max * 1e-12 {
        return hermitian_map(a, |l| 1.0 / l);
    }
    let n = a.nrows();
    let trace: f64 = (0..n).map(|i| a[(i, i)].re).sum();
    let ridge = (1e-12 * trace / n.max(1) as f64).max(f64::MIN_POSITIVE);
    warn!("{context}: ill-conditioned matrix (λmin={min:e}, λmax={max:e}), adding ridge {ridge:e}");
    let reg = a + CMat::identity(n, n) * Complex64::new(ridge, 0.0);
    hermitian_map(&reg, |l| if l > 0.0 { 1.0 / l } else { 0.0 })
}

/// Digital `K × N` combiner for the fully digital array.
///
/// MRC is the whitened matched filter `Hᴴ Σ⁻¹`; ZF is `(Hᴴ Σ⁻¹ H)⁻¹ Hᴴ Σ⁻¹`.
pub fn dpa_combiner(h: &CMat, noise_covariance: &CMat, mode: LinearReceiver) -> Result<CMat> {
    let n = h.nrows();
    if noise_covariance.shape() != (n, n) {
        return Err(Error::dims("digital combiner", format!("{n}x{n} noise covariance"), format!("{:?}", noise_covariance.shape())));
    }
    let sigma_inv = regularized_inverse(noise_covariance, "noise covariance");
    let matched = h.adjoint() * &sigma_inv;
    match mode {
        LinearReceiver::Mrc => Ok(matched),
        LinearReceiver::Zf => {
            if h.ncols() > n {
                return Err(Error::dims("zero forcing", format!("at most {n} users"), h.ncols()));
            }
            let gram = &matched * h;
            Ok(regularized_inverse(&gram, "zero-forcing gram") * matched)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        })
    }

    #[test]
    fn loss_amplitude_examples() {
        assert_relative_eq!(pchp_loss_amplitude(&PchpLossBudget::lossless(16)), 1.0, max_relative = 1e-15);
        let b = PchpLossBudget::new(5.0, 3.9, 16, StageRule::Log2);
        assert_eq!(b.stages, 4);
        assert_relative_eq!(pchp_loss_amplitude(&b), 0.37325015779572057, max_relative = 1e-12);
        assert!((pchp_loss_amplitude(&b) - 0.374).abs() < 1e-3);
        let b32 = PchpLossBudget::new(5.0, 3.9, 32, StageRule::Log2);
        assert_relative_eq!(
            pchp_loss_amplitude(&b32),
            pchp_loss_amplitude(&b) * 10f64.powf(-0.89 / 20.0),
            max_relative = 1e-12
        );
        assert_eq!(StageRule::Log2.stages(12), 4);
        assert_eq!(StageRule::PerElement.stages(16), 16);
        let strict = PchpLossBudget { strict: true, ..b };
        assert_relative_eq!(
            pchp_loss_amplitude(&strict),
            10f64.powf(-5.0 / 20.0) * 10f64.powf(-4.0 * 3.9 / 20.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn stage_preserves_power_of_uncorrelated_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 50_000;
        let mut p_in = 0.0;
        let mut p_out = 0.0;
        for _ in 0..trials {
            let x = gaussian(1, 2, &mut rng);
            p_in += x[(0, 0)].norm_sqr() + x[(0, 1)].norm_sqr();
            p_out += wilkinson_stage(x[(0, 0)], x[(0, 1)]).norm_sqr();
        }
        assert!((p_out / p_in - 0.5).abs() < 0.02);
        // coherent inputs: output power equals total input power
        let x = Complex64::new(0.3, -0.4);
        assert_relative_eq!(wilkinson_stage(x, x).norm_sqr(), 2.0 * x.norm_sqr(), max_relative = 1e-12);
        assert_relative_eq!(combining_tree_gain(4), 0.25, max_relative = 1e-15);
    }

    #[test]
    fn pchp_fixed_point_and_tie_break() {
        let groups = vec![0..2, 2..4];
        let amp = 0.4;
        let t = pchp_analog_update(
            &CMat::from_fn(2, 4, |i, j| {
                if groups[i].contains(&j) {
                    Complex64::from_polar(amp, j as f64)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
            &groups,
            amp,
        );
        let again = pchp_analog_update(&t.matrix, &groups, amp);
        assert!(frobenius(&(&again.matrix - &t.matrix)) < 1e-15);
        assert!(t.constraint_violation(&groups) < 1e-12);
        let zero = pchp_analog_update(&CMat::zeros(2, 4), &groups, amp);
        assert_eq!(zero.matrix[(0, 0)], Complex64::new(amp, 0.0));
        assert_eq!(zero.matrix[(0, 3)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn zf_identity_and_residual() {
        let id = CMat::identity(3, 3);
        let g = dpa_combiner(&id, &id, LinearReceiver::Zf).unwrap();
        assert!(frobenius(&(g - &id)) < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let h = gaussian(8, 2, &mut rng);
            let a = gaussian(8, 8, &mut rng);
            let sigma = &a * a.adjoint() + CMat::identity(8, 8);
            let g = dpa_combiner(&h, &sigma, LinearReceiver::Zf).unwrap();
            assert!(frobenius(&(g * &h - CMat::identity(2, 2))) < 1e-10);
        }
    }

    #[test]
    fn zf_rank_deficient_is_regularized() {
        let mut h = CMat::zeros(4, 2);
        h[(0, 0)] = Complex64::new(1.0, 0.0);
        h[(0, 1)] = Complex64::new(1.0, 0.0);
        let g = dpa_combiner(&h, &CMat::identity(4, 4), LinearReceiver::Zf).unwrap();
        assert!(g.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        assert!(dpa_combiner(&CMat::zeros(2, 3), &CMat::identity(2, 2), LinearReceiver::Zf).is_err());
    }

    #[test]
    fn mrc_beats_random_combiners() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = gaussian(6, 1, &mut rng);
        let sigma = CMat::identity(6, 6);
        let g = dpa_combiner(&h, &sigma, LinearReceiver::Mrc).unwrap();
        let snr = |g: &CMat| (g * &h)[(0, 0)].norm_sqr() / (g * g.adjoint())[(0, 0)].re;
        let best = snr(&g);
        for _ in 0..100 {
            let mut r = gaussian(1, 6, &mut rng);
            r *= Complex64::new(frobenius(&g) / frobenius(&r), 0.0);
            assert!(snr(&r) <= best + 1e-12);
        }
    }
}
