//! Soft-error rate of the cache control logic.
//!
//! Control logic is sized in 12-FO4 logic chains; each chain carries a
//! per-chain FIT. The chain counts and per-chain rate are inputs, not
//! re-derived from layout areas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HOURS_PER_YEAR: f64 = 8760.0;

/// 12-FO4 chain counts of the reference machine. The total covers four
/// cores with private L1s plus the shared L2.
pub const CHAINS_L1: u64 = 125_232;
pub const CHAINS_L2: u64 = 756_499;
pub const CHAINS_TOTAL: u64 = 1_758_362;
/// Published FIT of the whole controller, from which the per-chain rate is
/// backed out.
pub const CONTROLLER_FIT: f64 = 70.33;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogicSerInputs {
    pub l_gate_um: f64,
    pub ser_per_chain_fit: f64,
    pub chains_l1: u64,
    pub chains_l2: u64,
    pub chains_total: u64,
}

impl Default for LogicSerInputs {
    fn default() -> Self {
        LogicSerInputs {
            l_gate_um: 0.05,
            ser_per_chain_fit: CONTROLLER_FIT / CHAINS_TOTAL as f64,
            chains_l1: CHAINS_L1,
            chains_l2: CHAINS_L2,
            chains_total: CHAINS_TOTAL,
        }
    }
}

impl LogicSerInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.l_gate_um > 0.0) {
            return Err(Error::config("ser.l_gate_um", "must be positive"));
        }
        if !(self.ser_per_chain_fit >= 0.0 && self.ser_per_chain_fit.is_finite()) {
            return Err(Error::config("ser.ser_per_chain_fit", "must be non-negative"));
        }
        Ok(())
    }

    /// Expected control-logic upsets per controller per year.
    pub fn annual_events(&self) -> f64 {
        annual_events(controller_fit(self.chains_total, self.ser_per_chain_fit))
    }
}

/// FO4 inverter delay for a gate length in microns (`360 * L_gate`).
pub fn fo4_delay(l_gate_um: f64) -> Result<f64> {
    if !(l_gate_um > 0.0 && l_gate_um.is_finite()) {
        return Err(Error::InvalidArgument(format!("gate length {l_gate_um} must be positive")));
    }
    Ok(360.0 * l_gate_um)
}

pub fn controller_fit(chains: u64, ser_per_chain_fit: f64) -> f64 {
    chains as f64 * ser_per_chain_fit
}

/// FIT (failures per 10^9 hours) to expected events per year.
pub fn annual_events(fit: f64) -> f64 {
    fit * HOURS_PER_YEAR / 1e9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fo4() {
        assert!((fo4_delay(0.05).unwrap() - 18.0).abs() < 1e-12);
        assert!((fo4_delay(0.1).unwrap() - 36.0).abs() < 1e-12);
        assert!(fo4_delay(0.0).is_err());
    }

    #[test]
    fn per_level_fit() {
        let per_chain = LogicSerInputs::default().ser_per_chain_fit;
        assert!((per_chain - 4.0e-5).abs() < 1e-6);
        assert!((controller_fit(CHAINS_TOTAL, per_chain) - 70.33).abs() < 1e-9);
        assert!((controller_fit(CHAINS_L2, per_chain) - 30.25).abs() < 0.01);
        assert_eq!(controller_fit(0, per_chain), 0.0);
    }

    #[test]
    fn annual() {
        assert!((annual_events(70.33) - 6.161e-4).abs() < 1e-6);
        assert_eq!(annual_events(0.0), 0.0);
        assert!((annual_events(1e9 / 8760.0) - 1.0).abs() < 1e-12);
    }
}
