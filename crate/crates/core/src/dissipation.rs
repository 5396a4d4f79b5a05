//! Power-law dissipation `f(x) = δ·sgn(x)·|x|^α` and the calculus built on it.
//!
//! Every edge carries its own law. The solvers only ever see the law through
//! the methods below: the drop produced by a flow, the flow produced by a drop,
//! the two convex antiderivatives, and their second derivatives.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Default cap radius for [`DissipationLaw::conductance`].
pub const DEFAULT_SMOOTH_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipationLaw {
    delta: f64,
    alpha: f64,
}

impl DissipationLaw {
    pub fn new(delta: f64, alpha: f64) -> Result<Self, ModelError> {
        if !(delta > 0.0 && delta.is_finite() && alpha >= 1.0 && alpha.is_finite()) {
            return Err(ModelError::InvalidLaw { delta, alpha });
        }
        Ok(Self { delta, alpha })
    }

    /// Quadratic friction law `δ·φ|φ|` of a gas pipe.
    pub fn quadratic(delta: f64) -> Result<Self, ModelError> {
        Self::new(delta, 2.0)
    }

    /// Ohmic law `δ·φ`.
    pub fn linear(delta: f64) -> Result<Self, ModelError> {
        Self::new(delta, 1.0)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn is_quadratic(&self) -> bool {
        self.alpha == 2.0
    }

    fn is_linear(&self) -> bool {
        self.alpha == 1.0
    }

    /// Potential drop `f(x)` caused by a flow `x`. Odd and strictly increasing.
    pub fn potential_drop(&self, x: f64) -> f64 {
        let a = x.abs();
        let mag = if self.is_linear() {
            a
        } else if self.is_quadratic() {
            a * a
        } else {
            a.powf(self.alpha)
        };
        (self.delta * mag).copysign(x)
    }

    /// Flow `g(y) = f⁻¹(y)` driven by a potential drop `y`.
    pub fn flow(&self, y: f64) -> f64 {
        let r = y.abs() / self.delta;
        let mag = if self.is_linear() {
            r
        } else if self.is_quadratic() {
            r.sqrt()
        } else {
            r.powf(1.0 / self.alpha)
        };
        mag.copysign(y)
    }

    /// `F(x) = δ|x|^(α+1)/(α+1)`, the convex antiderivative of [`Self::potential_drop`].
    pub fn flow_antiderivative(&self, x: f64) -> f64 {
        let a = x.abs();
        let p = if self.is_linear() {
            a * a
        } else if self.is_quadratic() {
            a * a * a
        } else {
            a.powf(self.alpha + 1.0)
        };
        self.delta * p / (self.alpha + 1.0)
    }

    /// `G(y) = α/(α+1) · |y|^((α+1)/α) / δ^(1/α)`, the convex antiderivative of
    /// [`Self::flow`] with `G(0) = 0`. It is the Legendre conjugate of `F`.
    pub fn drop_antiderivative(&self, y: f64) -> f64 {
        let a = y.abs();
        if self.is_linear() {
            0.5 * a * a / self.delta
        } else if self.is_quadratic() {
            (2.0 / 3.0) * a * (a / self.delta).sqrt()
        } else {
            // |y| * g(|y|) is a^(1+1/α) δ^(-1/α)
            self.alpha / (self.alpha + 1.0) * a * (a / self.delta).powf(1.0 / self.alpha)
        }
    }

    /// `f'(x) = αδ|x|^(α-1)`; zero at the origin for α > 1.
    pub fn resistance(&self, x: f64) -> f64 {
        let a = x.abs();
        if self.is_linear() {
            self.delta
        } else if self.is_quadratic() {
            2.0 * self.delta * a
        } else {
            self.alpha * self.delta * a.powf(self.alpha - 1.0)
        }
    }

    /// `g'(y)`, with `|y|` clamped from below at `smooth_eps` so the value
    /// stays finite where `g` has a vertical tangent. Always positive.
    pub fn conductance(&self, y: f64, smooth_eps: f64) -> f64 {
        if self.is_linear() {
            return 1.0 / self.delta;
        }
        let a = y.abs().max(smooth_eps);
        // g'(y) = g(|y|) / (α|y|)
        let r = a / self.delta;
        let g = if self.is_quadratic() {
            r.sqrt()
        } else {
            r.powf(1.0 / self.alpha)
        };
        g / (self.alpha * a)
    }
}
