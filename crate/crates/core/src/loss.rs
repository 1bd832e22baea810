//! Scalar link and loss functions, evaluated without overflow for large margins.

use serde::{Deserialize, Serialize};

/// Logistic function `1 / (1 + e^{-t})`.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss `ln(1 + e^{-t})`.
#[inline]
pub fn logistic_loss(t: f64) -> f64 {
    if t > 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// Derivative of the logistic loss, `-sigmoid(-t)`.
#[inline]
pub fn logistic_loss_derivative(t: f64) -> f64 {
    -sigmoid(-t)
}

/// Second derivative of the logistic loss, `sigmoid(t) sigmoid(-t)`; at most 1/4.
#[inline]
pub fn logistic_loss_curvature(t: f64) -> f64 {
    sigmoid(t) * sigmoid(-t)
}

/// Margin-based loss driving gradient descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Logistic,
    Exponential,
}

impl Loss {
    #[inline]
    pub fn value(self, margin: f64) -> f64 {
        match self {
            Loss::Logistic => logistic_loss(margin),
            Loss::Exponential => (-margin).exp(),
        }
    }

    #[inline]
    pub fn derivative(self, margin: f64) -> f64 {
        match self {
            Loss::Logistic => logistic_loss_derivative(margin),
            Loss::Exponential => -(-margin).exp(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_loss_at_zero_is_ln2() {
        assert_eq!(logistic_loss(0.0), std::f64::consts::LN_2);
        assert_eq!(logistic_loss_derivative(0.0), -0.5);
    }

    #[test]
    fn tails_do_not_overflow() {
        assert!(logistic_loss(800.0) >= 0.0);
        assert!((logistic_loss(-800.0) - 800.0).abs() < 1e-12);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
        let tiny = logistic_loss(50.0);
        assert!(tiny > 0.0 && tiny < 1e-20);
    }

    #[test]
    fn loss_difference_identity() {
        // l(t) - l(-t) = -t
        for &t in &[-30.0, -2.5, -1e-3, 0.7, 4.0, 25.0] {
            let lhs = logistic_loss(t) - logistic_loss(-t);
            assert!((lhs + t).abs() < 1e-12 * (1.0 + t.abs()));
        }
    }
}
