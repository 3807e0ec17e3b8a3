//! Solutions obtained as limits of approximations: mollify the measure at
//! shrinking widths, solve each regularized problem and track the distance
//! between consecutive solutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::grid::{discrete_w1q_distance, GridDomain, GridFunction};
use crate::kernel::KernelWeights;
use crate::measure::{mollify_measure, BumpShape, Measure};
use crate::params::ParamSet;

use super::{solve_dirichlet_from, LogEntry, SolveConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolaConfig {
    /// Number of mollification levels `δ_j = max(h, δ₀ 2^{−j})`, `j = 0..levels`.
    pub levels: usize,
    /// Initial width as a multiple of the grid spacing.
    pub delta0_cells: f64,
    /// Integrability exponent of the distance; `None` picks the midpoint of the admissible range.
    pub q: Option<f64>,
    pub shape: BumpShape,
}

impl Default for SolaConfig {
    fn default() -> Self {
        SolaConfig {
            levels: 4,
            delta0_cells: 8.0,
            q: None,
            shape: BumpShape::Smooth,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolaResult {
    /// Solutions for each mollification width, coarsest first.
    pub iterates: Vec<GridFunction>,
    pub u: GridFunction,
    pub deltas: Vec<f64>,
    /// `W^{1,q}` distances between consecutive levels.
    pub distances: Vec<f64>,
    pub q: f64,
    /// Whether the last three distances decrease.
    pub converged: bool,
    pub log: Vec<LogEntry>,
}

/// Mollification widths for `levels` levels on spacing `h`.
pub fn sola_deltas(h: f64, delta0_cells: f64, levels: usize) -> Vec<f64> {
    let d0 = delta0_cells * h;
    (0..levels).map(|j| (d0 * 0.5f64.powi(j as i32)).max(h)).collect()
}

#[allow(clippy::too_many_arguments)]
pub fn sola_solve(
    mu: &Measure,
    g: &GridFunction,
    grid: &GridDomain,
    params: &ParamSet,
    spec: &VectorFieldSpec,
    kernel: &KernelWeights,
    cfg: &SolveConfig,
    sola: &SolaConfig,
) -> Result<SolaResult> {
    if sola.levels == 0 {
        return Err(Error::InvalidParameter("at least one mollification level is required".into()));
    }
    if !(sola.delta0_cells >= 1.0) {
        return Err(Error::InvalidParameter("initial width must be at least one cell".into()));
    }
    let q = match sola.q {
        Some(q) if q >= 1.0 => q,
        Some(q) => return Err(Error::InvalidParameter(format!("q = {q} must be at least 1"))),
        None => params.q_mid(),
    };
    let deltas = sola_deltas(grid.h(), sola.delta0_cells, sola.levels);
    let mut iterates: Vec<GridFunction> = Vec::new();
    let mut distances = Vec::new();
    let mut log = Vec::new();
    for &delta in &deltas {
        let mu_d = mollify_measure(mu, delta, grid, sola.shape)?;
        let init = iterates.last().unwrap_or(g);
        let rep = solve_dirichlet_from(&mu_d, g, init, grid, params, spec, kernel, cfg)?;
        log.extend(rep.log.iter().copied());
        if let Some(p) = iterates.last() {
            distances.push(discrete_w1q_distance(grid, p, &rep.u, q)?);
        }
        iterates.push(rep.u);
    }
    let converged = distances.len() >= 3 && {
        let tail = &distances[distances.len() - 3..];
        tail[1] < tail[0] && tail[2] < tail[1]
    };
    if !converged {
        log::warn!("approximation sequence not yet settled: distances {distances:?}");
    }
    Ok(SolaResult {
        u: iterates.last().cloned().unwrap(),
        iterates,
        deltas,
        distances,
        q,
        converged,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_floor_at_the_spacing() {
        let d = sola_deltas(0.1, 8.0, 6);
        assert_eq!(d.len(), 6);
        assert!((d[0] - 0.8).abs() < 1e-15);
        assert!((d[3] - 0.1).abs() < 1e-15);
        assert!((d[5] - 0.1).abs() < 1e-15);
    }
}
