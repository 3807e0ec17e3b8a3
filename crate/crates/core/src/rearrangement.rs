//! Decreasing rearrangement and Lorentz quasinorms of grid functions.

use crate::error::{Error, Result};
use crate::grid::{GridDomain, GridFunction};
use crate::numeric::pairwise_sum;

/// Right-continuous step function `f*` with steps of width `cell`.
///
/// `values[k]` is the value of `f*` on `[k·cell, (k+1)·cell)`; it is zero beyond the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct Rearrangement {
    pub values: Vec<f64>,
    pub cell: f64,
}

impl Rearrangement {
    /// `f*(t)` at an arbitrary `t >= 0`.
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return self.values.first().copied().unwrap_or(0.0);
        }
        let k = (t / self.cell).floor() as usize;
        self.values.get(k).copied().unwrap_or(0.0)
    }

    /// Measure of the superlevel set `{f* > t}`.
    pub fn superlevel_measure(&self, t: f64) -> f64 {
        let count = self.values.partition_point(|&v| v > t);
        count as f64 * self.cell
    }
}

/// Sorted `|f|` over the nodes selected by `mask`, with step width `h^n`.
///
/// Ties keep node order, which does not change the rearrangement.
pub fn decreasing_rearrangement(grid: &GridDomain, f: &GridFunction, mask: &[bool]) -> Result<Rearrangement> {
    f.check_grid(grid)?;
    if mask.len() != grid.len() {
        return Err(Error::GridMismatch("mask length differs from the grid".into()));
    }
    let mut vals: Vec<(f64, usize)> = f
        .values
        .iter()
        .enumerate()
        .filter(|(k, _)| mask[*k])
        .map(|(k, v)| (v.abs(), k))
        .collect();
    vals.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(Rearrangement {
        values: vals.into_iter().map(|(v, _)| v).collect(),
        cell: grid.cell_measure(),
    })
}

/// `‖t^{1/γ - 1/q} f*(t)‖_{L^q(0,∞; dt)}` for the step function `f*`.
///
/// Each step is integrated exactly. `q = ∞` gives the weak-type quantity
/// `sup_t t^{1/γ} f*(t)`; `γ = q = ∞` is the sup norm.
pub fn lorentz_quasinorm(rearr: &Rearrangement, gamma: f64, q: f64) -> Result<f64> {
    if !(gamma > 0.0) || !(q > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Lorentz exponents must be positive, got γ = {gamma}, q = {q}"
        )));
    }
    let c = rearr.cell;
    let vals = &rearr.values;
    if vals.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    if gamma.is_infinite() {
        if q.is_infinite() {
            return Ok(vals[0]);
        }
        // t^{-1/q} f*(t) is not q-integrable at 0 unless f* vanishes.
        return Ok(f64::INFINITY);
    }
    if q.is_infinite() {
        // On each step t^{1/γ} increases, so the supremum is approached at the right end.
        let sup = vals
            .iter()
            .enumerate()
            .map(|(k, &v)| ((k + 1) as f64 * c).powf(1.0 / gamma) * v)
            .fold(0.0, f64::max);
        return Ok(sup);
    }
    let e = q / gamma;
    let terms: Vec<f64> = vals
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if v == 0.0 {
                0.0
            } else {
                let a = (k as f64 * c).powf(e);
                let b = ((k + 1) as f64 * c).powf(e);
                (b - a) / e * v.powf(q)
            }
        })
        .collect();
    Ok(pairwise_sum(&terms).powf(1.0 / q))
}
