use crate::error::{Error, Result};

/// Monotone link between a mean and its linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkFunction {
    Logit,
    Log,
    Identity,
}

impl LinkFunction {
    pub fn name(self) -> &'static str {
        match self {
            Self::Logit => "logit",
            Self::Log => "log",
            Self::Identity => "identity",
        }
    }

    /// Mean scale to linear-predictor scale.
    pub fn apply(self, x: f64) -> Result<f64> {
        match self {
            Self::Logit => {
                if x > 0.0 && x < 1.0 {
                    Ok(libm::log(x / (1.0 - x)))
                } else {
                    Err(self.domain(x))
                }
            }
            Self::Log => {
                if x > 0.0 {
                    Ok(libm::log(x))
                } else {
                    Err(self.domain(x))
                }
            }
            Self::Identity => Ok(x),
        }
    }

    /// Linear-predictor scale back to the mean scale.
    pub fn invert(self, y: f64) -> Result<f64> {
        if y.is_nan() {
            return Err(self.domain(y));
        }
        Ok(match self {
            Self::Logit => expit(y),
            Self::Log => libm::exp(y),
            Self::Identity => y,
        })
    }

    fn domain(self, value: f64) -> Error {
        Error::LinkDomain { link: self.name(), value }
    }
}

/// Numerically stable logistic function.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}
