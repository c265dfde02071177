//! Holographic combiner design.
//!
//! A desired combiner is computed as if a fully digital array sat at the
//! aperture. The constrained analog stage and the digital combiner are then
//! fitted to it in turn, minimizing `‖G_des − W_D W_NW W_A P‖_F`, where `W_NW`
//! whitens the noise seen at the RF chains for the current analog weights.

use std::fmt::Write as _;
use std::ops::Range;

use log::debug;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::NoiseSpec;
use crate::dma::{lorentzian_point, project_bam, unit_phasor, DmaMode, DmaWeights};
use crate::error::{Error, Result};
use crate::linalg::{J, frobenius, hermitian_eigenvalues, hermitian_map, is_finite, pinv, scale_columns, CMat, CVec};
use crate::rival::{dpa_combiner, pchp_analog_update, regularized_inverse, LinearReceiver, PchpWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mapper {
    /// Non-zero mapper: entry-wise fit of `(G_D)† G_des P⁻¹`.
    Nzm,
    /// Closed-form per-entry least squares.
    Cfm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DigitalMode {
    SingleUser,
    MultiUser,
}

/// The link a combiner is designed for.
#[derive(Debug, Clone, Copy)]
pub struct LinkModel<'a> {
    /// `N × K`.
    pub channel: &'a CMat,
    /// `N × N` receive correlation.
    pub rx_correlation: &'a CMat,
    pub noise: NoiseSpec,
    /// Elements feeding each RF chain.
    pub groups: &'a [Range<usize>],
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalogFrontend {
    Dma { mode: DmaMode, m_max: f64, propagation: CVec },
    /// Phase shifters with a common path amplitude, followed by the ideal combining tree.
    Pchp { amplitude: f64, tree_gain: f64 },
}

impl AnalogFrontend {
    /// Diagonal of the fixed stage that follows the weights.
    pub fn propagation(&self, n: usize) -> CVec {
        match self {
            AnalogFrontend::Dma { propagation, .. } => propagation.clone(),
            AnalogFrontend::Pchp { tree_gain, .. } => CVec::from_element(n, Complex64::new(*tree_gain, 0.0)),
        }
    }

    /// Maps an unconstrained target weight matrix onto the feasible set.
    ///
    /// Lorentzian rows are first rotated by the common phase that maximizes
    /// the coherent gain `|Σ_j conj(t_j) |p_j|² w_j|` toward the row's target;
    /// the digital combiner absorbs any per-chain phase, so the fit is unchanged.
    pub fn project(&self, target: &CMat, groups: &[Range<usize>]) -> AnalogWeights {
        match self {
            AnalogFrontend::Dma { mode, m_max, propagation } => {
                let (mode, m_max) = (*mode, *m_max);
                let mut w = vec![Complex64::new(0.0, 0.0); target.ncols()];
                for (i, g) in groups.iter().enumerate() {
                    let rotation = match mode {
                        DmaMode::Lpm => {
                            let a: Complex64 = g.clone().map(|j| target[(i, j)].conj() * propagation[j].norm_sqr()).sum();
                            unit_phasor(J * a)
                        }
                        DmaMode::Bam => Complex64::new(1.0, 0.0),
                    };
                    for j in g.clone() {
                        let t = target[(i, j)];
                        w[j] = match mode {
                            DmaMode::Lpm => lorentzian_point(rotation * unit_phasor(t), m_max),
                            DmaMode::Bam => project_bam(t, m_max),
                        };
                    }
                }
                AnalogWeights::Dma(DmaWeights::from_blocks(groups, &w, mode, m_max))
            }
            AnalogFrontend::Pchp { amplitude, .. } => AnalogWeights::Pchp(pchp_analog_update(target, groups, *amplitude)),
        }
    }

    fn bam_scale(&self) -> Option<f64> {
        match self {
            AnalogFrontend::Dma { mode: DmaMode::Bam, m_max, .. } => Some(*m_max),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalogWeights {
    Dma(DmaWeights),
    Pchp(PchpWeights),
}

impl AnalogWeights {
    pub fn matrix(&self) -> &CMat {
        match self {
            AnalogWeights::Dma(w) => &w.matrix,
            AnalogWeights::Pchp(w) => &w.matrix,
        }
    }

    pub fn constraint_violation(&self, groups: &[Range<usize>]) -> f64 {
        match self {
            AnalogWeights::Dma(w) => w.constraint_violation(groups),
            AnalogWeights::Pchp(w) => w.constraint_violation(groups),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesiredCombiner {
    /// `K × N`.
    pub matrix: CMat,
    pub strategy: LinearReceiver,
}

/// Desired combiner of a virtual digital array under white noise.
pub fn desired_combiner(h: &CMat, strategy: LinearReceiver) -> Result<DesiredCombiner> {
    let matched = h.adjoint();
    let matrix = match strategy {
        LinearReceiver::Mrc => matched,
        LinearReceiver::Zf => {
            if h.ncols() > h.nrows() {
                return Err(Error::dims("zero forcing", format!("at most {} users", h.nrows()), h.ncols()));
            }
            regularized_inverse(&(&matched * h), "zero-forcing gram") * matched
        }
    };
    Ok(DesiredCombiner { matrix, strategy })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseWhitener {
    pub covariance: CMat,
    /// `Σ_z^{-1/2}`.
    pub filter: CMat,
    pub ridge: Option<f64>,
}

/// Noise covariance at the RF chains and its inverse square root.
pub fn noise_whitener(g_analog: &CMat, rx_correlation: &CMat, sigma_ant: f64, sigma_rf: f64) -> NoiseWhitener {
    let m = g_analog.nrows();
    let colored = g_analog * rx_correlation * g_analog.adjoint();
    let mut covariance = colored * Complex64::new(sigma_ant, 0.0) + CMat::identity(m, m) * Complex64::new(sigma_rf, 0.0);
    // exact Hermitian symmetry for the eigen solver
    covariance = (&covariance + covariance.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = hermitian_eigenvalues(&covariance);
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut ridge = None;
    let mut target = covariance.clone();
    if !(min > 0.0 && max / min <= 1e12) {
        let trace: f64 = (0..m).map(|i| covariance[(i, i)].re).sum();
        let eps = (1e-12 * trace / m.max(1) as f64).max(1e-300);
        debug!("noise covariance condition {:e}, adding ridge {eps:e}", max / min);
        target += CMat::identity(m, m) * Complex64::new(eps, 0.0);
        ridge = Some(eps);
    }
    let filter = hermitian_map(&target, |l| if l > 0.0 { l.powf(-0.5) } else { 0.0 });
    NoiseWhitener {
        covariance: target,
        filter,
        ridge,
    }
}

fn apply_mapping(frontend: &AnalogFrontend, target: CMat, groups: &[Range<usize>]) -> AnalogWeights {
    frontend.project(&target, groups)
}

/// Non-zero mapper: fits `(G_D)† G_des P⁻¹` entry by entry.
pub fn nzm_update(g_d: &CMat, g_des: &CMat, frontend: &AnalogFrontend, groups: &[Range<usize>]) -> AnalogWeights {
    let p = frontend.propagation(g_des.ncols());
    let p_inv = p.map(|z| if z.norm() > 0.0 { z.inv() } else { Complex64::new(0.0, 0.0) });
    let target = scale_columns(&(pinv(g_d) * g_des), &p_inv);
    apply_mapping(frontend, target, groups)
}

/// Closed-form mapper: per-entry least squares against the block's digital column.
pub fn cfm_update(g_d: &CMat, g_des: &CMat, frontend: &AnalogFrontend, groups: &[Range<usize>]) -> AnalogWeights {
    let p = frontend.propagation(g_des.ncols());
    let p_inv = p.map(|z| if z.norm() > 0.0 { z.inv() } else { Complex64::new(0.0, 0.0) });
    let g = scale_columns(g_des, &p_inv);
    let mut target = CMat::zeros(groups.len(), g_des.ncols());
    for (i, block) in groups.iter().enumerate() {
        let col = g_d.column(i);
        let energy = col.norm_squared();
        if energy == 0.0 {
            debug!("closed-form mapper: digital column {i} is zero, using phase-zero weights");
            let fallback = match frontend.bam_scale() {
                Some(m) => Complex64::new(m, 0.0),
                None => Complex64::new(1.0, 0.0),
            };
            for j in block.clone() {
                target[(i, j)] = fallback;
            }
            continue;
        }
        for j in block.clone() {
            target[(i, j)] = col.dotc(&g.column(j)) / energy;
        }
    }
    apply_mapping(frontend, target, groups)
}

/// Digital combiner applied after the whitener, `K × M`.
///
/// Matched-filter rows are rescaled by the complex factor that best matches
/// the desired row. SINR is unchanged; the least-squares rule needs no rescale.
pub fn digital_update(
    g_analog: &CMat,
    whitener: &NoiseWhitener,
    h: &CMat,
    g_des: &CMat,
    mode: DigitalMode,
) -> CMat {
    let chain = &whitener.filter * g_analog;
    let mut w_d = match mode {
        DigitalMode::SingleUser => (&chain * h).adjoint(),
        DigitalMode::MultiUser => g_des * pinv(&chain),
    };
    if mode == DigitalMode::SingleUser {
        let fitted = &w_d * &chain;
        for k in 0..w_d.nrows() {
            let v = fitted.row(k);
            let energy = v.norm_squared();
            if energy > 0.0 {
                let scaled = w_d.row(k) * (v.dotc(&g_des.row(k)) / energy);
                w_d.set_row(k, &scaled);
            }
        }
    }
    w_d
}

pub fn objective(g_des: &CMat, w_d: &CMat, whitener: &NoiseWhitener, g_analog: &CMat) -> f64 {
    frobenius(&(g_des - w_d * &whitener.filter * g_analog))
}

/// Per-user SINR for an effective `K × N` combiner `G = W_D G_A`.
///
/// Signal and interference scale with `tx_power`; noise is the external part
/// colored by the combiner plus RF noise weighted by the digital row norm.
pub fn sinr(
    g: &CMat,
    w_d: &CMat,
    h: &CMat,
    tx_power: f64,
    rx_correlation: &CMat,
    sigma_ant: f64,
    sigma_rf: f64,
) -> Vec<f64> {
    let gh = g * h;
    let colored = g * rx_correlation;
    (0..g.nrows())
        .map(|k| {
            let signal = tx_power * gh[(k, k)].norm_sqr();
            if signal == 0.0 {
                return 0.0;
            }
            let interference: f64 = (0..h.ncols()).filter(|&j| j != k).map(|j| tx_power * gh[(k, j)].norm_sqr()).sum();
            let ext = colored.row(k).dotc(&g.row(k)).re;
            let noise = sigma_ant * ext.max(0.0) + sigma_rf * w_d.row(k).norm_squared();
            signal / (interference + noise)
        })
        .collect()
}

pub fn sum_rate(sinr: &[f64]) -> f64 {
    sinr.iter().map(|g| (1.0 + g).log2()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub mapper: Mapper,
    pub strategy: LinearReceiver,
    pub digital: DigitalMode,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            mapper: Mapper::Nzm,
            strategy: LinearReceiver::Zf,
            digital: DigitalMode::MultiUser,
            tolerance: 1e-4,
            max_iterations: 50,
        }
    }
}

impl OptimizerSettings {
    /// MRC with the matched-filter update for one user, ZF with least squares otherwise.
    pub fn for_users(users: usize, mapper: Mapper) -> Self {
        let (strategy, digital) = if users <= 1 {
            (LinearReceiver::Mrc, DigitalMode::SingleUser)
        } else {
            (LinearReceiver::Zf, DigitalMode::MultiUser)
        };
        OptimizerSettings {
            mapper,
            strategy,
            digital,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CombinerSolution {
    /// `None` for the fully digital array.
    pub analog: Option<AnalogWeights>,
    /// `M × N` analog stage including propagation (identity for the digital array).
    pub front_end: CMat,
    /// `K × M` digital combiner with the whitener folded in.
    pub digital: CMat,
    pub sinr: Vec<f64>,
    pub sum_rate: f64,
    /// Objective after each half-step, starting with the first digital update.
    pub trace: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl CombinerSolution {
    pub fn effective_combiner(&self) -> CMat {
        &self.digital * &self.front_end
    }

    pub fn evaluate(&self, link: &LinkModel<'_>, tx_power: f64) -> Vec<f64> {
        sinr(
            &self.effective_combiner(),
            &self.digital,
            link.channel,
            tx_power,
            link.rx_correlation,
            link.noise.antenna,
            link.noise.rf,
        )
    }

    fn finish(mut self, link: &LinkModel<'_>, tx_power: f64) -> Self {
        self.sinr = self.evaluate(link, tx_power);
        self.sum_rate = sum_rate(&self.sinr);
        self
    }
}

/// Routes RF chain `i` to user `i mod K` for the first analog fit.
fn initial_target(g: &CMat, groups: &[Range<usize>], frontend: &AnalogFrontend) -> CMat {
    let users = g.nrows();
    let mut target = CMat::zeros(groups.len(), g.ncols());
    for (i, block) in groups.iter().enumerate() {
        let k = i % users;
        let peak = block.clone().map(|j| g[(k, j)].norm()).fold(0.0, f64::max);
        let scale = match frontend.bam_scale() {
            Some(m) if peak > 0.0 => m / peak,
            _ => 1.0,
        };
        for j in block.clone() {
            target[(i, j)] = g[(k, j)] * scale;
        }
    }
    target
}

fn dump_state(iteration: usize, trace: &[f64], analog: &CMat, w_d: &CMat) -> String {
    let mut s = format!("iteration {iteration}; objective trace {trace:?}\n");
    let _ = writeln!(s, "analog weights finite: {}", is_finite(analog));
    let _ = writeln!(s, "digital combiner: {w_d}");
    s
}

/// Alternates analog and digital updates until the objective settles.
///
/// Stops when the relative objective change between digital half-steps drops
/// below `settings.tolerance` or after `settings.max_iterations`, and returns
/// the iterate with the lowest objective.
pub fn alternate_optimize(
    link: &LinkModel<'_>,
    frontend: &AnalogFrontend,
    settings: &OptimizerSettings,
    tx_power: f64,
) -> Result<CombinerSolution> {
    let h = link.channel;
    let n = h.nrows();
    if link.rx_correlation.shape() != (n, n) {
        return Err(Error::dims("receive correlation", format!("{n}x{n}"), format!("{:?}", link.rx_correlation.shape())));
    }
    if link.groups.last().map_or(0, |g| g.end) != n {
        return Err(Error::dims("element groups", n, link.groups.last().map_or(0, |g| g.end)));
    }
    let g_des = desired_combiner(h, settings.strategy)?.matrix;
    let propagation = frontend.propagation(n);
    if propagation.len() != n {
        return Err(Error::dims("propagation", n, propagation.len()));
    }
    let p_inv = propagation.map(|z| if z.norm() > 0.0 { z.inv() } else { Complex64::new(0.0, 0.0) });
    let mut analog = frontend.project(&initial_target(&scale_columns(&g_des, &p_inv), link.groups, frontend), link.groups);

    let mut trace = Vec::new();
    let mut best: Option<(f64, AnalogWeights, CMat, CMat)> = None;
    let mut previous: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..settings.max_iterations.max(1) {
        iterations = it + 1;
        let g_analog = scale_columns(analog.matrix(), &propagation);
        let whitener = noise_whitener(&g_analog, link.rx_correlation, link.noise.antenna, link.noise.rf);
        let w_d = digital_update(&g_analog, &whitener, h, &g_des, settings.digital);
        let obj = objective(&g_des, &w_d, &whitener, &g_analog);
        trace.push(obj);
        if !obj.is_finite() || !is_finite(&w_d) {
            return Err(Error::Numerical(format!(
                "non-finite objective during alternating optimization\n{}",
                dump_state(it, &trace, analog.matrix(), &w_d)
            )));
        }
        if best.as_ref().is_none_or(|b| obj < b.0) {
            best = Some((obj, analog.clone(), &w_d * &whitener.filter, g_analog.clone()));
        }
        if let Some(prev) = previous {
            if (prev - obj).abs() <= settings.tolerance * prev.max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        previous = Some(obj);
        if it + 1 == settings.max_iterations {
            break;
        }
        let g_d = &w_d * &whitener.filter;
        analog = match settings.mapper {
            Mapper::Nzm => nzm_update(&g_d, &g_des, frontend, link.groups),
            Mapper::Cfm => cfm_update(&g_d, &g_des, frontend, link.groups),
        };
        let half = frobenius(&(&g_des - &g_d * scale_columns(analog.matrix(), &propagation)));
        trace.push(half);
    }

    let (objective, analog, digital, front_end) = best.expect("at least one iteration runs");
    Ok(CombinerSolution {
        analog: Some(analog),
        front_end,
        digital,
        sinr: Vec::new(),
        sum_rate: 0.0,
        trace,
        objective,
        iterations,
        converged,
    }
    .finish(link, tx_power))
}

/// Fully digital baseline: whitened MRC or ZF on the element outputs.
pub fn digital_array_solution(link: &LinkModel<'_>, strategy: LinearReceiver, tx_power: f64) -> Result<CombinerSolution> {
    let n = link.channel.nrows();
    let covariance = link.rx_correlation * Complex64::new(link.noise.antenna, 0.0)
        + CMat::identity(n, n) * Complex64::new(link.noise.rf, 0.0);
    let digital = dpa_combiner(link.channel, &covariance, strategy)?;
    Ok(CombinerSolution {
        analog: None,
        front_end: CMat::identity(n, n),
        digital,
        sinr: Vec::new(),
        sum_rate: 0.0,
        trace: Vec::new(),
        objective: 0.0,
        iterations: 0,
        converged: true,
    }
    .finish(link, tx_power))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dma::lorentzian_point;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        })
    }

    fn lpm(m: f64, phase_seed: f64, n: usize) -> AnalogFrontend {
        AnalogFrontend::Dma {
            mode: DmaMode::Lpm,
            m_max: m,
            propagation: CVec::from_fn(n, |j, _| Complex64::from_polar(1.0 - 0.01 * j as f64, phase_seed * j as f64)),
        }
    }

    #[test]
    fn whitener_examples() {
        let g = CMat::identity(2, 2);
        let rx = CMat::identity(2, 2);
        let w = noise_whitener(&g, &rx, 0.0, 4.0);
        assert!(frobenius(&(&w.filter - CMat::identity(2, 2) * Complex64::new(0.5, 0.0))) < 1e-12);
        // Σ_z = diag(4, 1)·σ_RF with σ_RF = 1 via the external term
        let g = CMat::from_diagonal(&CVec::from_vec(vec![Complex64::new(3f64.sqrt(), 0.0), Complex64::new(0.0, 0.0)]));
        let w = noise_whitener(&g, &rx, 1.0, 1.0);
        assert_relative_eq!(w.filter[(0, 0)].re, 0.5, epsilon = 1e-12);
        assert_relative_eq!(w.filter[(1, 1)].re, 1.0, epsilon = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = gaussian(4, 6, &mut rng);
        let a = gaussian(6, 6, &mut rng);
        let rx = &a * a.adjoint();
        let w = noise_whitener(&g, &rx, 0.7, 1e-3);
        let id = &w.filter * &w.covariance * w.filter.adjoint();
        assert!(frobenius(&(id - CMat::identity(4, 4))) < 1e-8);
    }

    #[test]
    fn whitener_ridge_engages_on_singular_covariance() {
        let g = CMat::zeros(2, 3);
        let w = noise_whitener(&g, &CMat::identity(3, 3), 1.0, 0.0);
        assert!(w.ridge.is_some());
        assert!(is_finite(&w.filter));
    }

    #[test]
    fn desired_zf_inverts_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = gaussian(10, 3, &mut rng);
        let d = desired_combiner(&h, LinearReceiver::Zf).unwrap();
        assert!(frobenius(&(d.matrix * &h - CMat::identity(3, 3))) < 1e-9);
    }

    #[test]
    fn nzm_output_is_on_support_and_circle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let groups = vec![0..3, 3..6];
        let g_d = gaussian(2, 2, &mut rng);
        let g_des = gaussian(2, 6, &mut rng);
        let fe = lpm(0.2, 0.3, 6);
        for w in [nzm_update(&g_d, &g_des, &fe, &groups), cfm_update(&g_d, &g_des, &fe, &groups)] {
            assert!(w.constraint_violation(&groups) < 1e-12);
            assert_eq!(w.matrix()[(0, 4)], Complex64::new(0.0, 0.0));
            assert_eq!(w.matrix()[(1, 0)], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn nzm_maps_target_phase() {
        // targets u·r with r > 0 maps to the rotated circle point indexed by u
        let groups = vec![0..2, 2..4];
        let m = 0.5;
        let fe = lpm(m, 0.4, 4);
        let p = fe.propagation(4);
        let u: Vec<Complex64> = (0..4).map(|j| Complex64::from_polar(1.0, 0.9 * j as f64)).collect();
        let mut expect = vec![Complex64::new(0.0, 0.0); 4];
        for g in &groups {
            let a: Complex64 = g.clone().map(|j| u[j].conj() * p[j].norm_sqr()).sum();
            let rot = J * a / a.norm();
            for j in g.clone() {
                expect[j] = lorentzian_point(rot * u[j], m);
            }
        }
        let expect = DmaWeights::from_blocks(&groups, &expect, DmaMode::Lpm, m);
        let raw = DmaWeights::from_blocks(&groups, &u, DmaMode::Lpm, 1.0);
        let g_des = scale_columns(&raw.matrix, &p);
        for r in [1e-3, 1.0, 7.0] {
            let g_d = CMat::identity(2, 2) * Complex64::new(1.0 / r, 0.0);
            let out = nzm_update(&g_d, &g_des, &fe, &groups);
            assert!(frobenius(&(out.matrix() - &expect.matrix)) < 1e-12);
        }
    }

    #[test]
    fn row_rotation_maximizes_coherent_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let groups = vec![0..6];
        let fe = lpm(0.3, 0.8, 6);
        let p = fe.propagation(6);
        for _ in 0..20 {
            let t = gaussian(1, 6, &mut rng);
            let gain = |w: &[Complex64]| -> f64 { (0..6).map(|j| t[(0, j)].conj() * p[j].norm_sqr() * w[j]).sum::<Complex64>().norm() };
            let out = fe.project(&t, &groups);
            let chosen: Vec<Complex64> = out.matrix().row(0).iter().cloned().collect();
            for step in 0..720 {
                let rot = Complex64::from_polar(1.0, step as f64 * std::f64::consts::PI / 360.0);
                let w: Vec<Complex64> = (0..6).map(|j| lorentzian_point(rot * unit_phasor(t[(0, j)]), 0.3)).collect();
                assert!(gain(&w) <= gain(&chosen) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn cfm_scalar_reduction() {
        let groups = vec![0..3];
        let fe = AnalogFrontend::Dma {
            mode: DmaMode::Lpm,
            m_max: 1.0,
            propagation: CVec::from_element(3, Complex64::new(1.0, 0.0)),
        };
        let g_des = CMat::from_row_slice(1, 3, &[Complex64::new(2.0, 0.0), Complex64::new(0.0, -3.0), Complex64::new(-1.0, 1.0)]);
        let out = cfm_update(&CMat::identity(1, 1), &g_des, &fe, &groups);
        let a: Complex64 = g_des.iter().map(|z| z.conj()).sum();
        let rot = unit_phasor(J * a);
        for j in 0..3 {
            let expect = lorentzian_point(rot * unit_phasor(g_des[(0, j)]), 1.0);
            assert!((out.matrix()[(0, j)] - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn cfm_scalar_is_least_squares() {
        // toy M=1, N=2: the pre-projection scalar beats any grid point
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let g_d = gaussian(2, 1, &mut rng);
            let g = gaussian(2, 2, &mut rng);
            for j in 0..2 {
                let w = g_d.column(0).dotc(&g.column(j)) / g_d.column(0).norm_squared();
                let cost = |c: Complex64| (g.column(j) - g_d.column(0) * c).norm_squared();
                let best = cost(w);
                for a in -20..=20 {
                    for b in -20..=20 {
                        let c = Complex64::new(a as f64 * 0.1, b as f64 * 0.1);
                        assert!(best <= cost(c) + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn cfm_zero_digital_column_uses_tie_break() {
        let groups = vec![0..2, 2..4];
        let fe = lpm(1.0, 0.0, 4);
        let g_d = CMat::from_row_slice(1, 2, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let g_des = CMat::from_element(1, 4, Complex64::new(0.0, 1.0));
        let out = cfm_update(&g_d, &g_des, &fe, &groups);
        // fallback target 1 rotates by j onto the top of the circle
        assert!((out.matrix()[(1, 2)] - J).norm() < 1e-15);
    }

    #[test]
    fn multi_user_digital_identity_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g_des = gaussian(2, 3, &mut rng);
        let h = gaussian(3, 2, &mut rng);
        let id = CMat::identity(3, 3);
        let wh = noise_whitener(&id, &id, 0.0, 1.0);
        let w_d = digital_update(&id, &wh, &h, &g_des, DigitalMode::MultiUser);
        assert!(frobenius(&(w_d - g_des)) < 1e-12);
    }

    #[test]
    fn single_user_digital_dominates_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = gaussian(6, 1, &mut rng);
        let g_a = gaussian(3, 6, &mut rng);
        let rx = CMat::identity(6, 6);
        let wh = noise_whitener(&g_a, &rx, 0.3, 0.5);
        let g_des = h.adjoint();
        let w_d = digital_update(&g_a, &wh, &h, &g_des, DigitalMode::SingleUser);
        let eff = &w_d * &wh.filter;
        let rate = |d: &CMat| sinr(&(d * &g_a), d, &h, 1.0, &rx, 0.3, 0.5)[0];
        let best = rate(&eff);
        for _ in 0..100 {
            let mut r = gaussian(1, 3, &mut rng);
            r *= Complex64::new(frobenius(&eff) / frobenius(&r), 0.0);
            assert!(rate(&r) <= best * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sinr_scalar_cases() {
        let h = CMat::from_row_slice(2, 1, &[Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.25)]);
        let rx = CMat::identity(2, 2);
        let g_a = CMat::from_row_slice(1, 2, &[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
        let w_d = CMat::from_element(1, 1, Complex64::new(0.5, -0.5));
        let g = &w_d * &g_a;
        assert_eq!(sinr(&g, &w_d, &h, 0.0, &rx, 1.0, 1.0), vec![0.0]);
        let gh = (g[(0, 0)] * h[(0, 0)] + g[(0, 1)] * h[(1, 0)]).norm_sqr();
        let expect = 2.0 * gh / (0.1 * (g[(0, 0)].norm_sqr() + g[(0, 1)].norm_sqr()) + 0.3 * w_d[(0, 0)].norm_sqr());
        assert_relative_eq!(sinr(&g, &w_d, &h, 2.0, &rx, 0.1, 0.3)[0], expect, max_relative = 1e-12);
    }

    #[test]
    fn sinr_invariant_to_row_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = gaussian(5, 2, &mut rng);
        let g_a = gaussian(3, 5, &mut rng);
        let w_d = gaussian(2, 3, &mut rng);
        let a = gaussian(5, 5, &mut rng);
        let rx = &a * a.adjoint();
        let base = sinr(&(&w_d * &g_a), &w_d, &h, 1.5, &rx, 0.2, 0.4);
        let mut scaled = w_d.clone();
        scaled.row_mut(0).scale_mut(-3.0);
        let row1 = scaled.row(1) * Complex64::new(0.2, 1.7);
        scaled.set_row(1, &row1);
        let other = sinr(&(&scaled * &g_a), &scaled, &h, 1.5, &rx, 0.2, 0.4);
        for (x, y) in base.iter().zip(&other) {
            assert_relative_eq!(x, y, max_relative = 1e-10);
        }
    }

    #[test]
    fn zf_digital_array_nulls_interference() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let h = gaussian(4, 2, &mut rng);
        let rx = CMat::identity(4, 4);
        let groups: Vec<Range<usize>> = (0..4).map(|i| i..i + 1).collect();
        let link = LinkModel {
            channel: &h,
            rx_correlation: &rx,
            noise: NoiseSpec { antenna: 0.0, rf: 1.0 },
            groups: &groups,
        };
        let sol = digital_array_solution(&link, LinearReceiver::Zf, 1.0).unwrap();
        let gh = sol.effective_combiner() * &h;
        for k in 0..2 {
            for j in 0..2 {
                if j != k {
                    assert!(gh[(k, j)].norm_sqr() < 1e-9 * gh[(k, k)].norm_sqr());
                }
            }
        }
    }

    #[test]
    fn vanishing_cap_gives_vanishing_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let h = gaussian(8, 1, &mut rng);
        let rx = CMat::identity(8, 8);
        let groups = vec![0..4, 4..8];
        let link = LinkModel {
            channel: &h,
            rx_correlation: &rx,
            noise: NoiseSpec { antenna: 0.0, rf: 1.0 },
            groups: &groups,
        };
        let settings = OptimizerSettings::for_users(1, Mapper::Nzm);
        let mut prev = f64::INFINITY;
        for m in [1.0, 1e-2, 1e-4, 1e-6] {
            let sol = alternate_optimize(&link, &lpm(m, 0.2, 8), &settings, 1.0).unwrap();
            assert!(sol.sum_rate < prev);
            prev = sol.sum_rate;
        }
        assert!(prev < 1e-9);
    }

    #[test]
    fn best_iterate_and_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let h = gaussian(12, 2, &mut rng);
        let rx = CMat::identity(12, 12);
        let groups = vec![0..3, 3..6, 6..9, 9..12];
        let link = LinkModel {
            channel: &h,
            rx_correlation: &rx,
            noise: NoiseSpec { antenna: 0.1, rf: 1.0 },
            groups: &groups,
        };
        for mapper in [Mapper::Nzm, Mapper::Cfm] {
            let settings = OptimizerSettings::for_users(2, mapper);
            let sol = alternate_optimize(&link, &lpm(0.3, 0.5, 12), &settings, 1.0).unwrap();
            assert!(sol.trace.iter().all(|v| v.is_finite()));
            let digital_steps: Vec<f64> = sol.trace.iter().step_by(2).cloned().collect();
            let min = digital_steps.iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(sol.objective, min);
            assert!(sol.analog.as_ref().unwrap().constraint_violation(&groups) < 1e-12);
            assert!(sol.iterations <= 50);
            assert_relative_eq!(sol.sum_rate, sum_rate(&sol.sinr), max_relative = 1e-15);
        }
    }
}
