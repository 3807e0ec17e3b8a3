//! Nonlinear solves of the Dirichlet problem, the comparison problems on balls,
//! and the approximation driver for measure data.
//!
//! All solves share one active-set Newton iteration. For `p ≠ 2` the field is
//! regularized as `(ε² + |z|²)^{(p−2)/2} z` and ε is lowered geometrically;
//! for `p > 2` a final stage uses the unregularized field.

mod newton;
mod sola;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldVariant, VectorFieldSpec};
use crate::grid::{gradient, Ball, GridDomain, GridFunction};
use crate::kernel::KernelWeights;
use crate::measure::Measure;
use crate::numeric::norm2;
use crate::params::ParamSet;

pub use sola::{sola_solve, SolaConfig, SolaResult};

use newton::{norm, System};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub tol_rel: f64,
    pub max_newton: usize,
    pub armijo_slope: f64,
    pub backtrack: f64,
    pub min_step: f64,
    /// First regularization level as a multiple of the gradient scale.
    pub eps0_factor: f64,
    /// Last regularization level as a multiple of the gradient scale.
    pub eps_min_factor: f64,
    /// Ratio between consecutive regularization levels.
    pub eps_ratio: f64,
    /// Relative residual accepted at intermediate regularization levels.
    pub intermediate_tol: f64,
    pub picard_fallback: bool,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tol_rel: 1e-10,
            max_newton: 200,
            armijo_slope: 1e-4,
            backtrack: 0.5,
            min_step: 2f64.powi(-20),
            eps0_factor: 1e-4,
            eps_min_factor: 1e-8,
            eps_ratio: 0.5,
            intermediate_tol: 1e-4,
            picard_fallback: true,
            gmres_tol: 1e-2,
            gmres_restart: 40,
            gmres_max_iter: 400,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.tol_rel > 0.0) {
            bad.push("tol_rel must be positive");
        }
        if self.max_newton == 0 || self.gmres_restart == 0 || self.gmres_max_iter == 0 {
            bad.push("iteration caps must be positive");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            bad.push("backtrack must lie in (0,1)");
        }
        if !(self.eps_ratio > 0.0 && self.eps_ratio < 1.0) {
            bad.push("eps_ratio must lie in (0,1)");
        }
        if !(self.min_step > 0.0 && self.min_step <= 1.0) {
            bad.push("min_step must lie in (0,1]");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(bad.join("; ")))
        }
    }
}

/// One line of the convergence log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iter: usize,
    pub residual: f64,
    pub step: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u: GridFunction,
    pub log: Vec<LogEntry>,
    /// Final relative residual.
    pub residual: f64,
    /// Regularization of the final stage (0 for the unregularized field).
    pub eps: f64,
    pub iterations: usize,
}

/// Best iterate and residual history of a solve that missed its tolerance.
#[derive(Debug, Clone)]
pub struct SolveFailure {
    pub best: GridFunction,
    pub log: Vec<LogEntry>,
}

/// Node set and right-hand side of one solve.
pub struct Problem<'a> {
    pub grid: &'a GridDomain,
    pub params: &'a ParamSet,
    pub spec: VectorFieldSpec,
    pub kernel: Option<&'a KernelWeights>,
    pub active: Vec<usize>,
    /// Right-hand side at every node of the grid (only active entries are read).
    pub rhs: Vec<f64>,
}

fn gradient_scale(grid: &GridDomain, u: &GridFunction, rhs: &[f64], params: &ParamSet) -> f64 {
    let g = gradient(grid, u).iter().map(|z| norm2(*z)).fold(0.0, f64::max);
    let mass: f64 = rhs.iter().map(|v| v.abs()).sum::<f64>() * grid.cell_measure();
    let lower = grid.lower();
    let upper = grid.upper();
    let len = (upper[0] - lower[0]).max(upper[1] - lower[1]);
    let from_mass = (mass / len.powi(grid.dim() as i32 - 1)).powf(1.0 / (params.p - 1.0));
    g.max(from_mass).max(1e-12)
}

/// Runs the continuation and Newton stages for `problem` from `init`.
pub fn solve_problem(problem: &Problem<'_>, init: GridFunction, cfg: &SolveConfig) -> Result<SolveReport> {
    cfg.validate()?;
    problem.params.validate()?;
    init.check_grid(problem.grid)?;
    let p = problem.params.p;
    let rhs_active: Vec<f64> = problem.active.iter().map(|&k| problem.rhs[k]).collect();
    let system = System::new(problem.grid, p, problem.kernel, problem.active.clone(), rhs_active.clone())?;

    let regularize = p != 2.0 && !matches!(problem.spec.variant, FieldVariant::Coefficient { .. });
    let s_scale = gradient_scale(problem.grid, &init, &problem.rhs, problem.params);
    let mut levels: Vec<f64> = Vec::new();
    if regularize {
        let base = match problem.spec.variant {
            FieldVariant::Regularized { eps } => eps.max(cfg.eps_min_factor * s_scale),
            _ => cfg.eps_min_factor * s_scale,
        };
        let mut e = cfg.eps0_factor * s_scale;
        while e > base * (1.0 + 1e-12) {
            levels.push(e);
            e *= cfg.eps_ratio;
        }
        levels.push(base);
        if p > 2.0 && matches!(problem.spec.variant, FieldVariant::Model) {
            levels.push(0.0);
        }
    } else {
        levels.push(match problem.spec.variant {
            FieldVariant::Regularized { eps } => eps,
            _ => 0.0,
        });
    }

    let first_spec = problem.spec.with_eps(levels[0]);
    let (r0, _) = system.residual(&init, &first_spec)?;
    let scale = norm(&rhs_active).max(norm(&r0));
    let mut log = Vec::new();
    let mut iterations = 0;
    let mut u = init;
    if scale == 0.0 {
        return Ok(SolveReport {
            u,
            log,
            residual: 0.0,
            eps: *levels.last().unwrap(),
            iterations,
        });
    }
    let h = problem.grid.h();
    let last = levels.len() - 1;
    let mut final_rn = f64::INFINITY;
    for (li, &eps) in levels.iter().enumerate() {
        let spec = if regularize { problem.spec.with_eps(eps) } else { problem.spec };
        let cap = (eps.max(cfg.eps_min_factor * s_scale)) * h;
        let (r, mag) = system.residual(&u, &spec)?;
        let floor = 1e-13 * norm(&mag);
        let rel = if li == last { cfg.tol_rel } else { cfg.intermediate_tol };
        let target = (rel * scale).max(floor);
        if li != last && norm(&r) <= target {
            continue;
        }
        let (next, rn, ok) = system.newton(u, &spec, eps, cap, target, scale, cfg, &mut log, &mut iterations)?;
        u = next;
        final_rn = rn;
        if !ok && li == last {
            return Err(Error::NotConverged {
                iterations,
                residual: rn / scale,
                best: Box::new(SolveFailure { best: u, log }),
            });
        }
    }
    Ok(SolveReport {
        u,
        log,
        residual: final_rn / scale,
        eps: *levels.last().unwrap(),
        iterations,
    })
}

/// Solves `−div A(Du) + 𝓛u = μ` in Ω with `u = g` outside Ω.
///
/// `μ` must be a density on `grid` (mollify measures with atoms first).
#[allow(clippy::too_many_arguments)]
pub fn solve_dirichlet(
    mu: &Measure,
    g: &GridFunction,
    grid: &GridDomain,
    params: &ParamSet,
    spec: &VectorFieldSpec,
    kernel: &KernelWeights,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    solve_dirichlet_from(mu, g, g, grid, params, spec, kernel, cfg)
}

/// As [`solve_dirichlet`], starting the iteration from `init` on Ω.
#[allow(clippy::too_many_arguments)]
pub fn solve_dirichlet_from(
    mu: &Measure,
    g: &GridFunction,
    init: &GridFunction,
    grid: &GridDomain,
    params: &ParamSet,
    spec: &VectorFieldSpec,
    kernel: &KernelWeights,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    g.check_grid(grid)?;
    init.check_grid(grid)?;
    let rhs = mu.density_on(grid)?;
    let active = grid.interior_nodes();
    let mut start = g.clone();
    for &k in &active {
        start.values[k] = init.values[k];
    }
    let problem = Problem {
        grid,
        params,
        spec: *spec,
        kernel: Some(kernel),
        active,
        rhs,
    };
    solve_problem(&problem, start, cfg)
}

/// Homogeneous mixed problem in `ball` with `v = exterior` outside the ball.
#[allow(clippy::too_many_arguments)]
pub fn solve_homogeneous_mixed(
    exterior: &GridFunction,
    ball: &Ball,
    grid: &GridDomain,
    params: &ParamSet,
    spec: &VectorFieldSpec,
    kernel: &KernelWeights,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    exterior.check_grid(grid)?;
    let active = grid.ball_nodes(ball);
    if active.is_empty() {
        return Err(Error::EmptyBall { radius: ball.radius });
    }
    if let Some(&k) = active.iter().find(|&&k| !grid.is_interior(k)) {
        return Err(Error::InvalidGrid(format!("ball reaches node {k} outside the interior")));
    }
    let problem = Problem {
        grid,
        params,
        spec: *spec,
        kernel: Some(kernel),
        active,
        rhs: vec![0.0; grid.len()],
    };
    solve_problem(&problem, exterior.clone(), cfg)
}

/// Local problem `−div A(Dw) = 0` in `ball`, with `w = boundary_source` on the
/// boundary layer (nodes within one cell of the sphere) and beyond.
pub fn solve_homogeneous_local(
    boundary_source: &GridFunction,
    ball: &Ball,
    grid: &GridDomain,
    params: &ParamSet,
    spec: &VectorFieldSpec,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    boundary_source.check_grid(grid)?;
    let inner = Ball::new(ball.center, ball.radius - grid.h())?;
    let active = grid.ball_nodes(&inner);
    if active.is_empty() {
        return Err(Error::EmptyBall { radius: ball.radius });
    }
    let outer = Ball::new(ball.center, ball.radius + 1.5 * grid.h())?;
    if let Some(&k) = grid.ball_nodes(&outer).iter().find(|&&k| !grid.is_interior(k)) {
        return Err(Error::InvalidGrid(format!("boundary layer reaches node {k} outside the interior")));
    }
    let problem = Problem {
        grid,
        params,
        spec: *spec,
        kernel: None,
        active,
        rhs: vec![0.0; grid.len()],
    };
    solve_problem(&problem, boundary_source.clone(), cfg)
}

/// Nodes solved for by [`solve_homogeneous_local`].
pub fn local_active_nodes(grid: &GridDomain, ball: &Ball) -> Result<Vec<usize>> {
    let inner = Ball::new(ball.center, ball.radius - grid.h())?;
    Ok(grid.ball_nodes(&inner))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelVariant;

    fn line() -> GridDomain {
        GridDomain::centered(1, 1.0, 64).unwrap().with_cube_interior(0.5).unwrap()
    }

    #[test]
    fn constants_solve_the_homogeneous_problem() {
        let g = line();
        let params = ParamSet::new(1, 0.5, 3.0).unwrap();
        let w = KernelWeights::assemble(&g, &params, KernelVariant::Model).unwrap();
        let data = GridFunction::constant(&g, 2.5);
        let rep = solve_dirichlet(&Measure::zero(), &data, &g, &params, &VectorFieldSpec::model(3.0), &w, &SolveConfig::default()).unwrap();
        assert!(rep.u.values.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn superquadratic_line_solve_converges() {
        let g = line();
        for p in [1.6, 2.0, 2.5, 3.0] {
            let params = ParamSet::new(1, 0.4, p).unwrap();
            let w = KernelWeights::assemble(&g, &params, KernelVariant::Model).unwrap();
            let data = GridFunction::from_fn(&g, Some(0.0), |x| 0.5 * x[0].max(-0.8).min(0.8));
            let mu = Measure::density_fn(&g, |x| 1.0 + x[0]);
            let rep = solve_dirichlet(&mu, &data, &g, &params, &VectorFieldSpec::model(p), &w, &SolveConfig::default()).unwrap();
            assert!(rep.residual <= 1e-10 || rep.log.last().unwrap().residual < 1e-9, "p = {p}: {}", rep.residual);
            for pair in rep.log.windows(2) {
                if pair[0].eps == pair[1].eps {
                    assert!(pair[1].residual <= pair[0].residual);
                }
            }
        }
    }

    #[test]
    fn local_solve_reproduces_affine_data() {
        let g = GridDomain::centered(2, 1.0, 32).unwrap().with_cube_interior(0.9).unwrap();
        let params = ParamSet::new(2, 0.5, 3.0).unwrap();
        let data = GridFunction::from_fn(&g, Some(0.0), |x| 0.4 * x[0] - 0.2 * x[1]);
        let b = Ball::new([0.0, 0.0], 0.6).unwrap();
        let rep = solve_homogeneous_local(&data, &b, &g, &params, &VectorFieldSpec::model(3.0), &SolveConfig::default()).unwrap();
        for k in 0..g.len() {
            assert!((rep.u.values[k] - data.values[k]).abs() < 1e-12);
        }
    }
}
