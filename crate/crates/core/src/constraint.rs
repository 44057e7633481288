//! Moreau–Yosida approximation `ψ_ε` of `∂I_[0,1]` and its resolvent.

use crate::mesh::DiscreteField;
use crate::{Error, Result};

/// Regularization parameter `ε` and time step `τ`, both positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YosidaParams {
    epsilon: f64,
    tau: f64,
}

impl YosidaParams {
    pub fn new(epsilon: f64, tau: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidConfig(format!("time step must be positive, got {tau}")));
        }
        Ok(Self { epsilon, tau })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn resolvent(&self, r: f64) -> f64 {
        resolvent(r, self.tau, self.epsilon)
    }

    pub fn psi(&self, v: f64) -> f64 {
        psi_eps(v, self.epsilon)
    }
}

/// `ψ_ε(v) = −v⁻/ε + (v−1)⁺/ε`.
#[inline]
pub fn psi_eps(v: f64, epsilon: f64) -> f64 {
    if v < 0.0 {
        v / epsilon
    } else if v > 1.0 {
        (v - 1.0) / epsilon
    } else {
        0.0
    }
}

/// `(I + τψ_ε)⁻¹(r)`, the identity on `[0, 1]`.
#[inline]
pub fn resolvent(r: f64, tau: f64, epsilon: f64) -> f64 {
    if r < 0.0 {
        epsilon * r / (epsilon + tau)
    } else if r > 1.0 {
        (epsilon * r + tau) / (epsilon + tau)
    } else {
        r
    }
}

pub(crate) fn resolvent_in_place(values: &mut [f64], params: &YosidaParams) {
    for v in values {
        *v = params.resolvent(*v);
    }
}

/// Componentwise resolvent.
pub fn resolvent_field(u: &DiscreteField, params: &YosidaParams) -> DiscreteField {
    DiscreteField::from_vec_unchecked(u.iter().map(|&r| params.resolvent(r)).collect())
}
