use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// t-inverse step sizes `eta_t = eta0 / (1 + etap * floor(t / n))`.
/// `etap = 0` is a fixed step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdSchedule {
    pub eta0: f64,
    #[serde(default)]
    pub etap: f64,
}

impl SgdSchedule {
    pub fn fixed(eta: f64) -> Self {
        SgdSchedule {
            eta0: eta,
            etap: 0.0,
        }
    }

    pub fn t_inverse(eta0: f64, etap: f64) -> Self {
        SgdSchedule { eta0, etap }
    }

    pub fn is_fixed(&self) -> bool {
        self.etap == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0) || !(self.etap >= 0.0) || !self.eta0.is_finite() {
            return Err(Error::invalid(format!("bad SGD schedule {self:?}")));
        }
        Ok(())
    }

    pub fn eta(&self, t: u64, n: usize) -> f64 {
        let epoch = (t / n as u64) as f64;
        self.eta0 / (1.0 + self.etap * epoch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_inverse_value() {
        let s = SgdSchedule::t_inverse(0.1, 1.0);
        assert!((s.eta(25, 10) - 0.1 / 3.0).abs() < 1e-17);
        assert_eq!(s.eta(9, 10), 0.1);
    }

    #[test]
    fn fixed_schedule_is_constant() {
        let s = SgdSchedule::fixed(0.3);
        assert!(s.is_fixed());
        assert_eq!(s.eta(0, 7), s.eta(10_000, 7));
    }

    #[test]
    fn validation() {
        assert!(SgdSchedule::fixed(0.0).validate().is_err());
        assert!(SgdSchedule::t_inverse(0.1, -1.0).validate().is_err());
        assert!(SgdSchedule::t_inverse(0.1, 10.0).validate().is_ok());
    }
}
