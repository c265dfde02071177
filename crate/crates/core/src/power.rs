//! Receiver power consumption and energy efficiency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ArchitectureKind;

/// Component power draws in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComponentPowers {
    pub static_lna: f64,
    pub mixer: f64,
    pub clock: f64,
    pub iq_demodulator: f64,
    pub adc: f64,
    pub driver: f64,
    /// Per-element configuration DAC.
    pub dac: f64,
    /// Per-element control circuitry.
    pub control: f64,
    pub fpga: f64,
    /// Linear gain.
    pub lna_gain: f64,
    pub lna_efficiency: f64,
}

impl Default for ComponentPowers {
    fn default() -> Self {
        ComponentPowers {
            static_lna: 0.75,
            mixer: 0.4,
            iq_demodulator: 2.2,
            driver: 0.15,
            adc: 0.725,
            clock: 0.1,
            dac: 0.002,
            control: 0.0006,
            fpga: 0.1,
            lna_gain: 10f64.powf(1.25),
            lna_efficiency: 0.12,
        }
    }
}

impl ComponentPowers {
    pub fn validate(&self) -> Result<()> {
        let draws = [
            ("static_lna", self.static_lna),
            ("mixer", self.mixer),
            ("clock", self.clock),
            ("iq_demodulator", self.iq_demodulator),
            ("adc", self.adc),
            ("driver", self.driver),
            ("dac", self.dac),
            ("control", self.control),
            ("fpga", self.fpga),
            ("lna_gain", self.lna_gain),
        ];
        for (name, v) in draws {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("power.{name} must be a finite non-negative number, got {v}")));
            }
        }
        if !(self.lna_efficiency > 0.0 && self.lna_efficiency <= 1.0) {
            return Err(Error::Config(format!("power.lna_efficiency must lie in (0, 1], got {}", self.lna_efficiency)));
        }
        Ok(())
    }

    /// Captured power at which the LNA leaves its static floor.
    pub fn lna_crossover(&self) -> f64 {
        self.static_lna * self.lna_efficiency / (self.lna_gain - 1.0)
    }

    /// Per-element configuration overhead of the metasurface.
    pub fn configuration_power(&self, elements: usize) -> f64 {
        elements as f64 * (self.dac + self.control) + self.fpga
    }
}

pub fn lna_power(p_in: f64, c: &ComponentPowers) -> f64 {
    c.static_lna.max((c.lna_gain - 1.0) / c.lna_efficiency * p_in)
}

pub fn rf_chain_power(p_in: f64, c: &ComponentPowers) -> f64 {
    lna_power(p_in, c) + c.mixer + c.clock + c.iq_demodulator + 2.0 * (c.adc + c.driver)
}

/// Total receiver power for `chains` RF chains and `elements` metasurface elements.
///
/// `elements` only matters for the metasurface, whose elements each carry configuration circuitry.
pub fn architecture_power(
    kind: ArchitectureKind,
    elements: usize,
    chains: usize,
    p_in_per_chain: f64,
    c: &ComponentPowers,
) -> f64 {
    let rf = chains as f64 * rf_chain_power(p_in_per_chain, c);
    match kind {
        ArchitectureKind::Dma => rf + c.configuration_power(elements),
        ArchitectureKind::Pchp | ArchitectureKind::Dpa => rf,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyEfficiency {
    /// Spectral efficiency per watt, bits/s/Hz/W.
    pub per_hz: f64,
    /// Bits per joule.
    pub bits_per_joule: f64,
}

pub fn energy_efficiency(rate: f64, bandwidth: f64, power: f64) -> Result<EnergyEfficiency> {
    if !(power > 0.0) {
        return Err(Error::Numerical(format!("energy efficiency needs positive power, got {power}")));
    }
    Ok(EnergyEfficiency {
        per_hz: rate / power,
        bits_per_joule: rate * bandwidth / power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn static_chain_and_totals() {
        let c = ComponentPowers::default();
        assert_eq!(lna_power(0.0, &c), 0.75);
        assert_relative_eq!(rf_chain_power(0.0, &c), 5.2, max_relative = 1e-12);
        assert_relative_eq!(architecture_power(ArchitectureKind::Pchp, 64, 4, 0.0, &c), 20.8, max_relative = 1e-12);
        assert_relative_eq!(architecture_power(ArchitectureKind::Dma, 768, 4, 0.0, &c), 22.8968, max_relative = 1e-12);
        assert_relative_eq!(c.configuration_power(768), 2.0968, max_relative = 1e-12);
        assert_relative_eq!(architecture_power(ArchitectureKind::Dma, 0, 4, 0.0, &c), 20.9, max_relative = 1e-12);
        assert_relative_eq!(rf_chain_power(0.0, &ComponentPowers { lna_efficiency: 1.0, ..zero() }), 0.0);
    }

    fn zero() -> ComponentPowers {
        ComponentPowers {
            static_lna: 0.0,
            mixer: 0.0,
            clock: 0.0,
            iq_demodulator: 0.0,
            adc: 0.0,
            driver: 0.0,
            dac: 0.0,
            control: 0.0,
            fpga: 0.0,
            lna_gain: 1.0,
            lna_efficiency: 1.0,
        }
    }

    #[test]
    fn lna_crossover_and_slope() {
        let c = ComponentPowers::default();
        let x = c.lna_crossover();
        assert!((x - 5.4e-3).abs() < 1e-4);
        assert_relative_eq!(lna_power(x, &c), 0.75, max_relative = 1e-12);
        let slope = (c.lna_gain - 1.0) / c.lna_efficiency;
        assert_relative_eq!(lna_power(1.0, &c), slope, max_relative = 1e-12);
        assert_relative_eq!(rf_chain_power(1.0, &c), 5.2 - 0.75 + slope, max_relative = 1e-12);
    }

    #[test]
    fn efficiency_examples() {
        assert_eq!(energy_efficiency(0.0, 20e6, 3.0).unwrap().bits_per_joule, 0.0);
        let ee = energy_efficiency(10.0, 20e6, 22.8968).unwrap();
        assert!((ee.bits_per_joule - 8.73e6).abs() < 0.01e6);
        assert_relative_eq!(ee.per_hz, 10.0 / 22.8968);
        let half = energy_efficiency(10.0, 20e6, 2.0 * 22.8968).unwrap();
        assert_relative_eq!(half.bits_per_joule * 2.0, ee.bits_per_joule, max_relative = 1e-15);
        assert!(energy_efficiency(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn defaults_validate() {
        ComponentPowers::default().validate().unwrap();
        assert!(ComponentPowers { lna_efficiency: 0.0, ..Default::default() }.validate().is_err());
        assert!(ComponentPowers { adc: -1.0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn dma_exceeds_pchp(n in 1usize..5000, m in 1usize..16, p_in in 0.0f64..1.0) {
            let c = ComponentPowers::default();
            prop_assert!(
                architecture_power(ArchitectureKind::Dma, n, m, p_in, &c)
                    > architecture_power(ArchitectureKind::Pchp, n, m, p_in, &c)
            );
        }

        #[test]
        fn lna_power_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let c = ComponentPowers::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(lna_power(lo, &c) <= lna_power(hi, &c));
        }
    }
}
