//! The local vector field `A`, its Jacobian, the V-map, and the inverse of the model field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Vector;
use crate::numeric::norm2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldVariant {
    /// `|z|^{p−2} z`.
    Model,
    /// `(ε² + |z|²)^{(p−2)/2} z`.
    Regularized { eps: f64 },
    /// `a · |z|^{p−2} z` with a constant coefficient `a ∈ [ν_A, L_A]`.
    Coefficient { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldSpec {
    pub variant: FieldVariant,
    pub p: f64,
}

impl VectorFieldSpec {
    pub fn model(p: f64) -> Self {
        VectorFieldSpec {
            variant: FieldVariant::Model,
            p,
        }
    }

    pub fn regularized(p: f64, eps: f64) -> Self {
        VectorFieldSpec {
            variant: FieldVariant::Regularized { eps },
            p,
        }
    }

    /// Same field with regularization `eps` (the coefficient, if any, is kept).
    pub fn with_eps(&self, eps: f64) -> Self {
        match self.variant {
            FieldVariant::Coefficient { .. } => *self,
            _ if eps == 0.0 => VectorFieldSpec::model(self.p),
            _ => VectorFieldSpec::regularized(self.p, eps),
        }
    }

    fn coefficient(&self) -> f64 {
        match self.variant {
            FieldVariant::Coefficient { a } => a,
            _ => 1.0,
        }
    }

    fn eps(&self) -> f64 {
        match self.variant {
            FieldVariant::Regularized { eps } => eps,
            _ => 0.0,
        }
    }

    /// Scalar `a(|z|²)` with `A(z) = a(|z|²) z`, together with `2 a'(|z|²)`.
    #[inline]
    pub fn scalar_parts(&self, r2: f64) -> Result<(f64, f64)> {
        let p = self.p;
        let c = self.coefficient();
        let t = r2 + self.eps() * self.eps();
        if p == 2.0 {
            return Ok((c, 0.0));
        }
        if t == 0.0 {
            if p < 2.0 {
                return Err(Error::DegenerateEvaluation { p });
            }
            return Ok((0.0, 0.0));
        }
        let a = c * t.powf(0.5 * (p - 2.0));
        let da = (p - 2.0) * a / t;
        Ok((a, da))
    }
}

/// `A(z)` for the chosen variant; zero at `z = 0` when `p ≥ 2`.
pub fn vector_field_a(z: Vector, spec: &VectorFieldSpec) -> Result<Vector> {
    let (a, _) = spec.scalar_parts(z[0] * z[0] + z[1] * z[1])?;
    Ok([a * z[0], a * z[1]])
}

/// Exact Jacobian `∂A(z)` as a row-major 2×2 matrix.
pub fn jacobian_a(z: Vector, spec: &VectorFieldSpec) -> Result<[[f64; 2]; 2]> {
    let (a, da) = spec.scalar_parts(z[0] * z[0] + z[1] * z[1])?;
    Ok([
        [a + da * z[0] * z[0], da * z[0] * z[1]],
        [da * z[1] * z[0], a + da * z[1] * z[1]],
    ])
}

/// `V(z) = |z|^{(p−2)/2} z`.
pub fn v_map(z: Vector, p: f64) -> Vector {
    let r = norm2(z);
    if r == 0.0 {
        return [0.0, 0.0];
    }
    let f = r.powf(0.5 * (p - 2.0));
    [f * z[0], f * z[1]]
}

/// Inverse of the model field: `|w|^{(2−p)/(p−1)} w`.
pub fn inverse_a(w: Vector, spec: &VectorFieldSpec) -> Result<Vector> {
    match spec.variant {
        FieldVariant::Model => {}
        _ => return Err(Error::Unsupported("inverse_A is available only for the model field".into())),
    }
    let r = norm2(w);
    if r == 0.0 {
        return Ok([0.0, 0.0]);
    }
    let f = r.powf((2.0 - spec.p) / (spec.p - 1.0));
    Ok([f * w[0], f * w[1]])
}
