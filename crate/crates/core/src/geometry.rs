//! Space-time approximate distance functions and the boundary-data
//! extension used to impose initial and Dirichlet data exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{exact_derivatives, initial_condition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSpec {
    pub x_lo: f64,
    pub x_hi: f64,
    /// Training horizon. Not a zero set of the distance function.
    pub t_final: f64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            x_lo: 0.0,
            x_hi: 2.0,
            t_final: 1.0,
        }
    }
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_lo < self.x_hi) {
            return Err(Error::InvalidConfig(format!(
                "domain needs x_lo < x_hi, got [{}, {}]",
                self.x_lo, self.x_hi
            )));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "t_final must be positive, got {}",
                self.t_final
            )));
        }
        Ok(())
    }

    pub fn is_boundary_x(&self, x: f64) -> bool {
        x == self.x_lo || x == self.x_hi
    }
}

/// How the three face distances are joined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdfRule {
    /// `1/φ = 1/φ₁ + 1/φ₂ + 1/φ₃` (R-equivalence, m = 1).
    #[default]
    REquivalence,
    /// `φ = φ₁ φ₂ φ₃`.
    Product,
}

/// Distance-like function vanishing on `x = x_lo`, `x = x_hi` and `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adf {
    pub x_lo: f64,
    pub x_hi: f64,
    pub rule: AdfRule,
}

impl Adf {
    pub fn new(domain: &DomainSpec, rule: AdfRule) -> Self {
        Self {
            x_lo: domain.x_lo,
            x_hi: domain.x_hi,
            rule,
        }
    }

    fn components(&self, x: f64, t: f64) -> (f64, f64, f64) {
        (x - self.x_lo, self.x_hi - x, t)
    }

    /// φ(x, t); zero whenever any face distance is zero.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let (p1, p2, p3) = self.components(x, t);
        if p1 == 0.0 || p2 == 0.0 || p3 == 0.0 {
            return 0.0;
        }
        match self.rule {
            AdfRule::REquivalence => p1 * p2 * p3 / (p1 * p2 + p2 * p3 + p1 * p3),
            AdfRule::Product => p1 * p2 * p3,
        }
    }

    /// (∂φ/∂x, ∂φ/∂t) off the zero sets.
    pub fn grad(&self, x: f64, t: f64) -> Result<(f64, f64)> {
        let (p1, p2, p3) = self.components(x, t);
        if p1 == 0.0 || p2 == 0.0 || p3 == 0.0 {
            return Err(Error::OnZeroSet { x, t });
        }
        Ok(match self.rule {
            AdfRule::REquivalence => {
                let prod = p1 * p2 * p3;
                let s = p1 * p2 + p2 * p3 + p1 * p3;
                let prod_x = (p2 - p1) * p3;
                let prod_t = p1 * p2;
                let s_x = p2 - p1;
                let s_t = p1 + p2;
                let s2 = s * s;
                ((prod_x * s - prod * s_x) / s2, (prod_t * s - prod * s_t) / s2)
            }
            AdfRule::Product => ((p2 - p1) * p3, p1 * p2),
        })
    }

    /// Largest |∇φ| over the given interior points, for diagnostics.
    pub fn max_grad_norm(&self, points: impl IntoIterator<Item = (f64, f64)>) -> f64 {
        points
            .into_iter()
            .filter_map(|(x, t)| self.grad(x, t).ok())
            .map(|(gx, gt)| gx.hypot(gt))
            .fold(0.0, f64::max)
    }
}

/// g(x, t; μ): the initial condition held constant in time. It vanishes at
/// both walls because u₀ does.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundaryExtension;

impl BoundaryExtension {
    pub fn eval(&self, x: f64, _t: f64, mu: f64) -> f64 {
        initial_condition(x, mu)
    }

    pub fn grad_x(&self, x: f64, _t: f64, mu: f64) -> f64 {
        exact_derivatives(x, 0.0, mu).u_x
    }
}
