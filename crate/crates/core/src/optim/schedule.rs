use crate::error::{Error, Result};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Learning rate for epochs `1..=phase_boundary`.
    pub lr_phase1: f64,
    /// Learning rate for the remaining epochs.
    pub lr_phase2: f64,
    pub phase_boundary: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn drive() -> Self {
        TrainConfig {
            epochs: 150,
            lr_phase1: 1e-3,
            lr_phase2: 1e-4,
            phase_boundary: 100,
            batch_size: 8,
            seed: 0,
        }
    }

    pub fn chase() -> Self {
        TrainConfig {
            batch_size: 4,
            ..Self::drive()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if self.phase_boundary > self.epochs {
            return Err(Error::Config(format!(
                "phase boundary {} exceeds {} epochs",
                self.phase_boundary, self.epochs
            )));
        }
        if !(self.lr_phase1 >= 0.0 && self.lr_phase2 >= 0.0) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::drive()
    }
}

/// Piecewise-constant learning rate for a 1-based epoch.
pub fn lr_for_epoch(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch == 0 || epoch > cfg.epochs {
        return Err(Error::invalid(format!("epoch {epoch} outside 1..={}", cfg.epochs)));
    }
    Ok(if epoch <= cfg.phase_boundary {
        cfg.lr_phase1
    } else {
        cfg.lr_phase2
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_phase_schedule() {
        let cfg = TrainConfig::drive();
        assert_eq!(lr_for_epoch(1, &cfg).unwrap(), 0.001);
        assert_eq!(lr_for_epoch(100, &cfg).unwrap(), 0.001);
        assert_eq!(lr_for_epoch(101, &cfg).unwrap(), 0.0001);
        assert_eq!(lr_for_epoch(150, &cfg).unwrap(), 0.0001);
        assert!(lr_for_epoch(0, &cfg).is_err());
        assert!(lr_for_epoch(151, &cfg).is_err());
    }

    #[test]
    fn schedule_is_non_increasing() {
        let cfg = TrainConfig::drive();
        let lrs: Vec<f64> = (1..=cfg.epochs).map(|e| lr_for_epoch(e, &cfg).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }
}
