//! Coefficients of the SKT cross-diffusion system with Lotka–Volterra kinetics.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SktError};

/// Model coefficients.
///
/// Species `i` obeys
/// `∂t u_i = Δ(c_i u_i + a_i u_i² + b_i u_1 u_2) + Γ (r_i - γ_i1 u_1 - γ_i2 u_2) u_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SktParams {
    /// Self-diffusion.
    pub a1: f64,
    pub a2: f64,
    /// Cross-diffusion.
    pub b1: f64,
    pub b2: f64,
    /// Linear diffusion.
    pub c1: f64,
    pub c2: f64,
    /// Intrinsic growth rates.
    pub r1: f64,
    pub r2: f64,
    /// Competition rates.
    pub gamma11: f64,
    pub gamma12: f64,
    pub gamma21: f64,
    pub gamma22: f64,
    /// Reaction strength `Γ`; zero disables the kinetics.
    #[serde(rename = "Gamma")]
    pub reaction: f64,
}

impl SktParams {
    /// One-dimensional pattern-forming parameter set.
    pub fn pattern_1d() -> Self {
        Self {
            a1: 0.0001,
            a2: 0.1,
            b1: 6.5,
            b2: 0.3,
            c1: 0.2,
            c2: 0.2,
            r1: 1.2,
            r2: 1.0,
            gamma11: 0.5,
            gamma12: 0.4,
            gamma21: 0.38,
            gamma22: 0.41,
            reaction: 49.75,
        }
    }

    /// Two-dimensional pattern-forming parameter set.
    pub fn pattern_2d() -> Self {
        Self {
            a1: 0.01,
            a2: 0.001,
            b1: 7.264,
            b2: 1.1,
            c1: 0.1,
            c2: 0.2,
            r1: 1.2,
            r2: 1.0,
            gamma11: 0.5,
            gamma12: 0.4,
            gamma21: 0.38,
            gamma22: 0.4,
            reaction: 28.05,
        }
    }

    /// The same coefficients with the reaction switched off.
    pub fn without_reaction(self) -> Self {
        Self {
            reaction: 0.0,
            ..self
        }
    }

    fn named(&self) -> [(&'static str, f64); 13] {
        [
            ("a1", self.a1),
            ("a2", self.a2),
            ("b1", self.b1),
            ("b2", self.b2),
            ("c1", self.c1),
            ("c2", self.c2),
            ("r1", self.r1),
            ("r2", self.r2),
            ("gamma11", self.gamma11),
            ("gamma12", self.gamma12),
            ("gamma21", self.gamma21),
            ("gamma22", self.gamma22),
            ("Gamma", self.reaction),
        ]
    }

    /// All coefficients must be finite and non-negative.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !v.is_finite() || v < 0.0 {
                return Err(SktError::InvalidParameter(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Homogeneous coexistence equilibrium `(u1*, u2*)`.
    pub fn equilibrium(&self) -> Result<(f64, f64)> {
        let det = self.gamma11 * self.gamma22 - self.gamma12 * self.gamma21;
        if det == 0.0 {
            return Err(SktError::SingularEquilibrium);
        }
        Ok((
            (self.r1 * self.gamma22 - self.r2 * self.gamma12) / det,
            (self.r2 * self.gamma11 - self.r1 * self.gamma21) / det,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_of_1d_set() {
        // det = 0.5*0.41 - 0.4*0.38 = 0.053; numerators 0.092 and 0.044.
        let (u1, u2) = SktParams::pattern_1d().equilibrium().unwrap();
        assert!((u1 - 0.092 / 0.053).abs() < 1e-12);
        assert!((u2 - 0.044 / 0.053).abs() < 1e-12);
        assert!((u1 - 1.7358).abs() < 1e-4 && (u2 - 0.8302).abs() < 1e-4);
    }

    #[test]
    fn decoupled_logistic_equilibrium() {
        let p = SktParams {
            r1: 1.0,
            r2: 1.0,
            gamma11: 1.0,
            gamma22: 1.0,
            gamma12: 0.0,
            gamma21: 0.0,
            ..SktParams::pattern_1d()
        };
        assert_eq!(p.equilibrium().unwrap(), (1.0, 1.0));
    }

    #[test]
    fn singular_equilibrium() {
        let p = SktParams {
            gamma11: 0.5,
            gamma22: 0.8,
            gamma12: 0.4,
            gamma21: 1.0,
            ..SktParams::pattern_1d()
        };
        assert!(matches!(p.equilibrium(), Err(SktError::SingularEquilibrium)));
    }

    #[test]
    fn negative_coefficients_rejected() {
        assert!(SktParams::pattern_2d().validate().is_ok());
        let p = SktParams {
            b2: -0.1,
            ..SktParams::pattern_2d()
        };
        assert!(p.validate().is_err());
    }
}
