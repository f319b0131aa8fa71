use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Constants satisfying `α > 48`, `β ≥ (16/9)(√12 + 2√α)²`.
    Theoretical,
    /// Small constants usable at moderate `d`; no guarantee attached.
    Practical,
    Custom,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Theoretical => "theoretical",
            Preset::Practical => "practical",
            Preset::Custom => "custom",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theoretical" => Ok(Preset::Theoretical),
            "practical" => Ok(Preset::Practical),
            "custom" => Ok(Preset::Custom),
            other => invalid(format!("unknown preset {other:?}")),
        }
    }
}

/// Tuning constants of the thresholded estimators: `α` scales the hard
/// threshold, `β` the Lepski test thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorConfig {
    pub alpha: f64,
    pub beta: f64,
    pub preset: Preset,
}

pub const THEORETICAL_ALPHA: f64 = 49.0;
pub const PRACTICAL_ALPHA: f64 = 4.0;
pub const PRACTICAL_BETA: f64 = 16.0;

/// `(16/9)(√12 + 2√α)²`, the smallest admissible `β` for a given `α`.
pub fn minimal_theoretical_beta(alpha: f64) -> f64 {
    let root = 12f64.sqrt() + 2.0 * alpha.sqrt();
    16.0 / 9.0 * root * root
}

impl EstimatorConfig {
    pub fn theoretical() -> Self {
        Self {
            alpha: THEORETICAL_ALPHA,
            beta: minimal_theoretical_beta(THEORETICAL_ALPHA),
            preset: Preset::Theoretical,
        }
    }

    pub fn practical() -> Self {
        Self {
            alpha: PRACTICAL_ALPHA,
            beta: PRACTICAL_BETA,
            preset: Preset::Practical,
        }
    }

    pub fn custom(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(Preset::Custom, alpha, beta)
    }

    /// Validates `(preset, α, β)`. A theoretical preset with explicit
    /// constants must satisfy the theorem's hypotheses; a practical preset
    /// must carry the shipped defaults.
    pub fn new(preset: Preset, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return invalid("alpha and beta must be positive and finite");
        }
        match preset {
            Preset::Theoretical => {
                if alpha <= 48.0 {
                    return invalid(format!("theoretical preset needs alpha > 48, got {alpha}"));
                }
                let min_beta = minimal_theoretical_beta(alpha);
                // One ulp-scale slack so the default (β at equality) reparses.
                if beta < min_beta * (1.0 - 1e-15) {
                    return invalid(format!("theoretical preset needs beta >= {min_beta}, got {beta}"));
                }
            }
            Preset::Practical => {
                if alpha != PRACTICAL_ALPHA || beta != PRACTICAL_BETA {
                    return invalid("practical preset uses alpha = 4, beta = 16; use custom for other values");
                }
            }
            Preset::Custom => {}
        }
        Ok(Self { alpha, beta, preset })
    }

    pub fn from_preset(preset: Preset) -> Result<Self> {
        match preset {
            Preset::Theoretical => Ok(Self::theoretical()),
            Preset::Practical => Ok(Self::practical()),
            Preset::Custom => invalid("custom preset needs explicit alpha and beta"),
        }
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self::practical()
    }
}

#[derive(Deserialize)]
struct ConfigRepr {
    preset: Preset,
    alpha: Option<f64>,
    beta: Option<f64>,
}

impl<'de> Deserialize<'de> for EstimatorConfig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = ConfigRepr::deserialize(deserializer)?;
        let cfg = match (repr.alpha, repr.beta) {
            (None, None) => EstimatorConfig::from_preset(repr.preset),
            (Some(alpha), Some(beta)) => EstimatorConfig::new(repr.preset, alpha, beta),
            (Some(alpha), None) if repr.preset == Preset::Theoretical => {
                EstimatorConfig::new(repr.preset, alpha, minimal_theoretical_beta(alpha))
            }
            _ => Err(crate::error::Error::InvalidParameter(
                "alpha and beta must be given together".into(),
            )),
        };
        cfg.map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        let t = EstimatorConfig::theoretical();
        assert!(t.alpha > 48.0);
        assert!(t.beta >= minimal_theoretical_beta(t.alpha));
        assert!(EstimatorConfig::new(Preset::Theoretical, 48.0, 1e4).is_err());
        assert!(EstimatorConfig::new(Preset::Theoretical, 60.0, 100.0).is_err());
        assert!(EstimatorConfig::new(Preset::Practical, 5.0, 16.0).is_err());
        assert!(EstimatorConfig::custom(0.0, 1.0).is_err());
        assert!(EstimatorConfig::custom(1.0, 2.0).is_ok());
    }

    #[test]
    fn json_forms() {
        let p: EstimatorConfig = serde_json::from_str(r#"{"preset":"practical"}"#).unwrap();
        assert_eq!(p, EstimatorConfig::practical());
        let t: EstimatorConfig = serde_json::from_str(r#"{"preset":"theoretical"}"#).unwrap();
        assert_eq!(t, EstimatorConfig::theoretical());
        let round: EstimatorConfig = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(round, t);
        let c: EstimatorConfig = serde_json::from_str(r#"{"preset":"custom","alpha":2,"beta":9}"#).unwrap();
        assert_eq!((c.alpha, c.beta), (2.0, 9.0));
        assert!(serde_json::from_str::<EstimatorConfig>(r#"{"preset":"custom"}"#).is_err());
    }
}
