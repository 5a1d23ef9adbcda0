use serde::{Deserialize, Serialize};

use super::model::StokesModel;

/// Covariance operator `Φ = amplitude · A^{−q/2}` of the additive noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseOperator {
    pub q_exponent: f64,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn unit() -> f64 {
    1.0
}

impl NoiseOperator {
    pub fn new(q_exponent: f64) -> Self {
        Self { q_exponent, amplitude: 1.0 }
    }

    /// `Φ = 0`.
    pub fn silent() -> Self {
        Self { q_exponent: 0.0, amplitude: 0.0 }
    }

    pub fn with_amplitude(self, amplitude: f64) -> Self {
        Self { amplitude, ..self }
    }

    pub fn multiplier(&self, eigenvalue: f64) -> f64 {
        if self.q_exponent == 0.0 {
            self.amplitude
        } else {
            self.amplitude * eigenvalue.powf(-self.q_exponent / 2.0)
        }
    }

    /// `φ_j` for every scalar mode of `model`.
    pub fn multipliers(&self, model: &StokesModel) -> Vec<f64> {
        model.eigenvalues().iter().map(|&l| self.multiplier(l)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylindrical_noise_is_identity() {
        let m = StokesModel::abstract_diagonal(2, 5, 1.0).unwrap();
        assert!(NoiseOperator::new(0.0).multipliers(&m).iter().all(|&x| x == 1.0));
        let phi = NoiseOperator::new(2.0).multipliers(&m);
        assert!((phi[3] - 0.25).abs() < 1e-15);
        assert!(NoiseOperator::silent().multipliers(&m).iter().all(|&x| x == 0.0));
    }
}
