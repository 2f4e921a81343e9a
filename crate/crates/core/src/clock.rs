use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slot clock of the simulation. Symbol indices drive traffic generation,
/// scheduling-unit (SU) indices drive decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuClock {
    /// OFDM symbol duration in microseconds (numerology 1, normal CP).
    pub symbol_us: f64,
    pub symbols_per_su: u64,
    /// Nominal SU duration used for the simulated time axis.
    pub su_ms: f64,
}

impl Default for SuClock {
    fn default() -> Self {
        Self {
            symbol_us: 35.675,
            symbols_per_su: 7,
            su_ms: 0.25,
        }
    }
}

impl SuClock {
    pub fn su_seconds(&self) -> f64 {
        self.su_ms * 1e-3
    }

    /// Simulated time at the end of SU `su`.
    pub fn end_of_su_s(&self, su: u64) -> f64 {
        (su + 1) as f64 * self.su_seconds()
    }

    pub fn su_count(&self, duration_s: f64) -> u64 {
        (duration_s / self.su_seconds()).round() as u64
    }

    pub fn su_of_symbol(&self, symbol: u64) -> u64 {
        symbol / self.symbols_per_su
    }

    /// Milliseconds to the nearest whole number of OFDM symbols.
    pub fn ms_to_symbols(&self, ms: f64) -> i64 {
        (ms * 1e3 / self.symbol_us).round() as i64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.symbol_us.is_finite() && self.symbol_us > 0.0) {
            return Err(Error::config("clock.symbol_us", "must be finite and > 0"));
        }
        if self.symbols_per_su == 0 {
            return Err(Error::config("clock.symbols_per_su", "must be >= 1"));
        }
        if !(self.su_ms.is_finite() && self.su_ms > 0.0) {
            return Err(Error::config("clock.su_ms", "must be finite and > 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_su_is_seven_symbols_near_quarter_ms() {
        let c = SuClock::default();
        let seven = c.symbols_per_su as f64 * c.symbol_us * 1e-3;
        assert!((seven - c.su_ms).abs() / c.su_ms < 2e-3);
    }

    #[test]
    fn four_minutes_is_960k_sus() {
        assert_eq!(SuClock::default().su_count(240.0), 960_000);
    }

    #[test]
    fn period_rounding() {
        let c = SuClock::default();
        assert_eq!(c.ms_to_symbols(1.5), 42);
        assert_eq!(c.ms_to_symbols(2.5), 70);
        assert_eq!(c.ms_to_symbols(5.0), 140);
    }
}
