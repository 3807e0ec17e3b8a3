//! Structural parameters of the mixed operator and the derived decay exponents.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(n, s, p, ν_A, L_A, ν_K, L_K)` plus the free parameter `m` used when `p < 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSet {
    pub n: usize,
    pub s: f64,
    pub p: f64,
    #[serde(default = "one")]
    pub nu_a: f64,
    #[serde(default = "one")]
    pub l_a: f64,
    #[serde(default = "one")]
    pub nu_k: f64,
    #[serde(default = "one")]
    pub l_k: f64,
    /// Free parameter in `(0, 1-s)`; only read for `p < 2`. Defaults per [`DecayExponents::default_for`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl ParamSet {
    /// Model operator (all structure constants equal to one).
    pub fn new(n: usize, s: f64, p: f64) -> Result<Self> {
        let ps = ParamSet {
            n,
            s,
            p,
            nu_a: 1.0,
            l_a: 1.0,
            nu_k: 1.0,
            l_k: 1.0,
            m: None,
        };
        ps.validate()?;
        Ok(ps)
    }

    /// Every violated constraint, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.n;
        if n != 1 && n != 2 {
            out.push(format!("dimension n = {n} unsupported: requires n ∈ {{1, 2}}"));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            out.push(format!("s = {} out of range: requires s ∈ (0,1)", self.s));
        }
        if n == 1 || n == 2 {
            let lower = 2.0 - 1.0 / n as f64;
            if !(self.p > lower) || !self.p.is_finite() {
                out.push(format!("p = {} out of range: requires p > 2 − 1/n = {lower}", self.p));
            }
        }
        if !(self.nu_a > 0.0 && self.nu_a <= self.l_a) || !self.l_a.is_finite() {
            out.push(format!(
                "ν_A = {}, L_A = {}: requires 0 < ν_A ≤ L_A",
                self.nu_a, self.l_a
            ));
        }
        if !(self.nu_k > 0.0 && self.nu_k <= self.l_k) || !self.l_k.is_finite() {
            out.push(format!(
                "ν_K = {}, L_K = {}: requires 0 < ν_K ≤ L_K",
                self.nu_k, self.l_k
            ));
        }
        if let Some(m) = self.m {
            if self.s > 0.0 && self.s < 1.0 && !(m > 0.0 && m < 1.0 - self.s) {
                out.push(format!("m = {m} out of range: requires m ∈ (0, 1−s)"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(v.join("; ")))
        }
    }

    /// `q₀ = max(p−1, 1)`.
    pub fn q0(&self) -> f64 {
        (self.p - 1.0).max(1.0)
    }

    /// Hölder conjugate `p' = p/(p−1)`.
    pub fn p_prime(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// `m` in effect for `p < 2` (explicit value or the default with σ = 0.9).
    pub fn m_effective(&self) -> f64 {
        self.m
            .unwrap_or_else(|| DecayExponents::default_m(self.s, self.p, DecayExponents::DEFAULT_SIGMA))
    }

    pub fn abar1(&self) -> f64 {
        if self.p >= 2.0 {
            (1.0 - self.s) / (self.p - 1.0)
        } else {
            self.m_effective()
        }
    }

    pub fn abar2(&self) -> f64 {
        if self.p >= 2.0 {
            1.0 / (self.p - 1.0)
        } else {
            (1.0 - self.m_effective() * (2.0 - self.p)) / (self.p - 1.0)
        }
    }

    /// Upper end of the admissible SOLA exponent range, `min{n(p−1)/(n−1), p}` (`p` when n = 1).
    pub fn q_upper(&self) -> f64 {
        if self.n == 1 {
            self.p
        } else {
            let nf = self.n as f64;
            (nf * (self.p - 1.0) / (nf - 1.0)).min(self.p)
        }
    }

    /// Midpoint of `[q₀, q_upper)`.
    pub fn q_mid(&self) -> f64 {
        0.5 * (self.q0() + self.q_upper())
    }
}

/// `(m, ε₁, σ)` with the derived `ā₁`, `ā₂` of the excess-decay statements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayExponents {
    pub m: Option<f64>,
    pub eps1: f64,
    pub sigma: f64,
    pub abar1: f64,
    pub abar2: f64,
}

impl DecayExponents {
    pub const DEFAULT_SIGMA: f64 = 0.9;

    /// `m = (1−σ)/4 · min{1/(2−p), 1/(p−1), 1−s}`.
    pub fn default_m(s: f64, p: f64, sigma: f64) -> f64 {
        let mut t = (1.0 - s).min(1.0 / (p - 1.0));
        if p < 2.0 {
            t = t.min(1.0 / (2.0 - p));
        }
        0.25 * (1.0 - sigma) * t
    }

    /// `ε₁ = min(1−σ, 1−s)/(4p)`.
    pub fn default_eps1(s: f64, p: f64, sigma: f64) -> f64 {
        (1.0 - sigma).min(1.0 - s) / (4.0 * p)
    }

    /// Defaults for a parameter set at the given σ.
    pub fn default_for(params: &ParamSet, sigma: f64) -> Result<Self> {
        let m = if params.p < 2.0 {
            Some(params.m.unwrap_or_else(|| Self::default_m(params.s, params.p, sigma)))
        } else {
            None
        };
        Self::new(params, m, Self::default_eps1(params.s, params.p, sigma), sigma)
    }

    pub fn new(params: &ParamSet, m: Option<f64>, eps1: f64, sigma: f64) -> Result<Self> {
        let (s, p) = (params.s, params.p);
        let mut bad = Vec::new();
        if !(sigma > 0.0 && sigma < 1.0) {
            bad.push(format!("σ = {sigma}: requires σ ∈ (0,1)"));
        }
        if !(eps1 > 0.0 && eps1 < (1.0 - s) / p) {
            bad.push(format!("ε₁ = {eps1}: requires ε₁ ∈ (0, (1−s)/p)"));
        }
        if p < 2.0 {
            match m {
                Some(m) if m > 0.0 && m < 1.0 - s => {}
                Some(m) => bad.push(format!("m = {m}: requires m ∈ (0, 1−s)")),
                None => bad.push("m is required when p < 2".into()),
            }
        }
        if !bad.is_empty() {
            return Err(Error::InvalidParameter(bad.join("; ")));
        }
        let with_m = ParamSet { m, ..*params };
        let (abar1, abar2) = (with_m.abar1(), with_m.abar2());
        debug_assert!(abar1 < abar2);
        Ok(DecayExponents {
            m,
            eps1,
            sigma,
            abar1,
            abar2,
        })
    }
}
