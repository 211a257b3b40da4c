//! Proximal-point reformulation of the contact laws on `R₀⁺`.
//!
//! A complementarity condition `0 <= y ⊥ x >= 0` holds iff
//! `x = prox(x - r y)` for any `r > 0`, so each contact law becomes a
//! nonsmooth equation `x - prox(x - r y) = 0` that semismooth Newton can
//! solve. The roots do not depend on `r`; only convergence speed does.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::model::Vector;

/// Projection onto the nonnegative half-line.
#[inline]
pub fn prox_nonneg(x: f64) -> f64 {
    x.max(0.0)
}

/// Branch of the generalized derivative of `prox` at a given argument.
///
/// Returns true when the derivative is the identity. The kink `x = 0` is
/// assigned to the identity branch so Newton iterations are deterministic.
#[inline]
pub fn prox_branch_open(arg: f64) -> bool {
    arg >= 0.0
}

/// Positive diagonal weights `r` of the prox equations.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxParams {
    r: Vector,
}

impl ProxParams {
    pub fn new(r: Vector) -> Result<Self> {
        if let Some(bad) = r.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter {
                name: "r",
                reason: format!("prox weights must be positive, got {bad}"),
            });
        }
        Ok(Self { r })
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(DVector::from_element(n, value))
    }

    pub fn r(&self) -> &Vector {
        &self.r
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Residual of Newton's discrete impact law,
/// `Λ - prox(Λ - r (ġ⁺ + ε ġ⁻))`, on the reduced contact set.
pub fn impact_residual(
    lambda: &Vector,
    gd_next: &Vector,
    gd_now: &Vector,
    eps: &Vector,
    r: &ProxParams,
) -> Result<Vector> {
    let n = lambda.len();
    check_dim("impact gd_next", n, gd_next.len())?;
    check_dim("impact gd_now", n, gd_now.len())?;
    check_dim("impact eps", n, eps.len())?;
    check_dim("impact r", n, r.len())?;
    Ok(Vector::from_fn(n, |i, _| {
        let arg = lambda[i] - r.r[i] * (gd_next[i] + eps[i] * gd_now[i]);
        lambda[i] - prox_nonneg(arg)
    }))
}

/// Residual of the position-level Signorini condition,
/// `Ψ - prox(Ψ - r g)`.
pub fn position_residual(psi: &Vector, g_next: &Vector, r: &ProxParams) -> Result<Vector> {
    let n = psi.len();
    check_dim("position g_next", n, g_next.len())?;
    check_dim("position r", n, r.len())?;
    Ok(Vector::from_fn(n, |i, _| {
        psi[i] - prox_nonneg(psi[i] - r.r[i] * g_next[i])
    }))
}
