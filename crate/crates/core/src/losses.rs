//! Individual (per-sample) losses.
//!
//! Margin losses are functions of `t = y * f(x)` and need labels in `{-1, +1}`.
//! Residual losses are functions of `r = y - f(x)` and accept any real target.
//! Every loss is convex and nonnegative in its scalar argument.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, MatkError, Result};

/// Whether a loss reads the margin `y f(x)` or the residual `y - f(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossForm {
    Margin,
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndividualLoss {
    /// `log2(1 + exp(-t))`, normalized so that the value at zero margin is 1.
    Logistic,
    /// `max(0, 1 - t)`.
    Hinge,
    /// `r^2`.
    Squared,
    /// `|r|`.
    Absolute,
}

impl IndividualLoss {
    pub const ALL: [IndividualLoss; 4] = [
        IndividualLoss::Logistic,
        IndividualLoss::Hinge,
        IndividualLoss::Squared,
        IndividualLoss::Absolute,
    ];

    pub fn form(self) -> LossForm {
        match self {
            IndividualLoss::Logistic | IndividualLoss::Hinge => LossForm::Margin,
            IndividualLoss::Squared | IndividualLoss::Absolute => LossForm::Residual,
        }
    }

    pub fn is_margin(self) -> bool {
        self.form() == LossForm::Margin
    }

    /// The loss as a function of its scalar argument (margin or signed residual).
    pub fn scalar_value(self, t: f64) -> f64 {
        match self {
            IndividualLoss::Logistic => softplus(-t) / std::f64::consts::LN_2,
            IndividualLoss::Hinge => (1.0 - t).max(0.0),
            IndividualLoss::Squared => t * t,
            IndividualLoss::Absolute => t.abs(),
        }
    }

    /// A subgradient of [`scalar_value`](Self::scalar_value) at `t`.
    ///
    /// At kinks the element of the subdifferential closest to zero is returned:
    /// the hinge at `t = 1` and the absolute loss at `r = 0` both report `0`.
    pub fn scalar_subgradient(self, t: f64) -> f64 {
        match self {
            IndividualLoss::Logistic => {
                // d/dt log2(1 + e^{-t}) = -1 / (ln 2 * (1 + e^t))
                -sigmoid(-t) / std::f64::consts::LN_2
            }
            IndividualLoss::Hinge => {
                if t < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            IndividualLoss::Squared => 2.0 * t,
            IndividualLoss::Absolute => {
                if t > 0.0 {
                    1.0
                } else if t < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Scalar argument of the loss for a prediction/target pair, without label validation.
    #[inline]
    pub(crate) fn argument(self, prediction: f64, target: f64) -> f64 {
        match self.form() {
            LossForm::Margin => target * prediction,
            LossForm::Residual => target - prediction,
        }
    }

    pub(crate) fn check_target(self, target: f64) -> Result<()> {
        if self.is_margin() && target != 1.0 && target != -1.0 {
            return Err(MatkError::InvalidTarget(target));
        }
        Ok(())
    }

    pub fn value(self, prediction: f64, target: f64) -> Result<f64> {
        self.check_target(target)?;
        Ok(self.scalar_value(self.argument(prediction, target)))
    }

    /// Subgradient of `w -> loss(w.x, y)` for a linear predictor.
    pub fn subgradient(self, features: &[f64], weights: &[f64], target: f64) -> Result<Vec<f64>> {
        check_len(weights.len(), features.len())?;
        self.check_target(target)?;
        let scale = self.linear_subgradient_scale(dot(features, weights), target);
        Ok(features.iter().map(|x| scale * x).collect())
    }

    /// The factor `s` such that `s * x` is the subgradient with respect to `w`.
    #[inline]
    pub(crate) fn linear_subgradient_scale(self, prediction: f64, target: f64) -> f64 {
        let g = self.scalar_subgradient(self.argument(prediction, target));
        match self.form() {
            LossForm::Margin => g * target,
            LossForm::Residual => -g,
        }
    }
}

impl fmt::Display for IndividualLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IndividualLoss::Logistic => "logistic",
            IndividualLoss::Hinge => "hinge",
            IndividualLoss::Squared => "squared",
            IndividualLoss::Absolute => "absolute",
        };
        f.write_str(s)
    }
}

impl FromStr for IndividualLoss {
    type Err = MatkError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" => Ok(IndividualLoss::Logistic),
            "hinge" => Ok(IndividualLoss::Hinge),
            "squared" | "square" => Ok(IndividualLoss::Squared),
            "absolute" | "abs" => Ok(IndividualLoss::Absolute),
            other => Err(MatkError::param(format!("unknown loss '{other}'"))),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
