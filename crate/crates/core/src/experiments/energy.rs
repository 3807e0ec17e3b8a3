//! Sup, Caccioppoli, Hölder and fractional Sobolev inequalities for a
//! homogeneous mixed solution, with the constants measured per radius.

use serde::{Deserialize, Serialize};

use super::{audit, fit, spread, Context, ExperimentReport, Scene};
use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::grid::{ball_average, ball_mean_by, gagliardo_seminorm, gradient, oscillation, Ball, GridDomain, GridFunction};
use crate::numeric::{abs_pow, dist, norm2};
use crate::params::ParamSet;
use crate::potentials::tail;
use crate::solver::solve_homogeneous_mixed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub params: ParamSet,
    pub scene: Scene,
    /// Radius of the ball on which the homogeneous problem is solved.
    pub solve_radius: f64,
    /// Radii `r`; `B_{2r}` must lie inside the solve ball.
    pub radii: Vec<f64>,
    /// Oscillation radii `r 2^{−j}`, `j = 1..=holder_levels`.
    pub holder_levels: usize,
    pub min_alpha: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            params: ParamSet::new(2, 0.5, 2.0).expect("valid defaults"),
            scene: Scene::perturbed_affine(2, 256),
            solve_radius: 0.8,
            radii: vec![0.36, 0.18, 0.09],
            holder_levels: 3,
            min_alpha: 0.05,
        }
    }
}

/// Left and right sides of the four inequalities at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct EnergyTerms {
    pub sup: (f64, f64),
    pub caccioppoli: (f64, f64),
    /// Oscillation on `B_{r/2}` against `2^{−α}` times the bracket.
    pub holder: (f64, f64),
    pub sobolev: (f64, f64),
}

fn ball_measure(grid: &GridDomain, ball: &Ball) -> f64 {
    grid.ball_nodes(ball).len() as f64 * grid.cell_measure()
}

/// Evaluates the inequalities about `c` at radius `r` with `k = (v)_{B_r}`.
pub(crate) fn energy_terms(grid: &GridDomain, v: &GridFunction, c: [f64; 2], r: f64, params: &ParamSet, alpha: f64) -> Result<EnergyTerms> {
    let (s, p) = (params.s, params.p);
    let ball = Ball::new(c, r)?;
    let half = Ball::new(c, r / 2.0)?;
    let double = Ball::new(c, 2.0 * r)?;
    let k = ball_average(grid, v, &ball)?;
    let w = v.shift(-k);
    let dv = gradient(grid, v);

    let sup_lhs = grid.ball_nodes(&half).iter().map(|&i| w.values[i].abs()).fold(0.0, f64::max);
    let mean_dev = ball_mean_by(grid, &ball, |i| w.values[i].abs())?;
    let tail_half = tail(grid, &w, c, r / 2.0, p, s)?;

    let grad_p = ball_mean_by(grid, &half, |i| abs_pow(norm2(dv[i]), p))?;
    let nonlocal = gagliardo_seminorm(grid, v, &half, s, p)? / ball_measure(grid, &half);
    let cacc_rhs = (mean_dev / r + tail_half / r).powf(p);

    let osc = oscillation(grid, v, &half)?;
    let holder_rhs = 0.5f64.powf(alpha) * (ball_mean_by(grid, &double, |i| w.values[i].abs())? + tail(grid, &w, c, r, p, s)?);

    let cut = GridFunction::from_fn(grid, Some(0.0), |x| (1.0 - (dist(x, c) / r).powi(2)).max(0.0));
    let hfun = GridFunction {
        values: cut.values.iter().zip(&w.values).map(|(a, b)| a * b).collect(),
        far_field: Some(0.0),
    };
    let sob_lhs = (gagliardo_seminorm(grid, &hfun, &ball, s, p)? / ball_measure(grid, &ball)).powf(1.0 / p);
    let dh = gradient(grid, &hfun);
    let sob_rhs = r.powf(1.0 - s) * ball_mean_by(grid, &ball, |i| abs_pow(norm2(dh[i]), p))?.powf(1.0 / p);

    Ok(EnergyTerms {
        sup: (sup_lhs, mean_dev + tail_half),
        caccioppoli: (grad_p + nonlocal, cacc_rhs),
        holder: (osc, holder_rhs),
        sobolev: (sob_lhs, sob_rhs),
    })
}

fn straight_terms(grid: &GridDomain, v: &GridFunction, c: [f64; 2], r: f64, params: &ParamSet) -> Vec<f64> {
    let (s, p) = (params.s, params.p);
    let k = audit::mean(grid, c, r, |i| v.values[i]);
    let tail_half = ((r / 2.0).powf(p) * audit::tail_integral(grid, v, c, r / 2.0, p, s, k)).powf(1.0 / (p - 1.0));
    let mean_dev = audit::mean(grid, c, r, |i| (v.values[i] - k).abs());
    let grad_p = audit::mean_grad_pow(grid, v, c, r / 2.0, p);
    let count = grid.ball_nodes(&Ball { center: c, radius: r / 2.0 }).len() as f64;
    let nonlocal = audit::gagliardo(grid, |i| v.values[i], c, r / 2.0, s, p) / (count * grid.cell_measure());
    vec![tail_half, mean_dev, grad_p, nonlocal]
}

pub fn exp_energy_inequalities(cfg: &EnergyConfig, ctx: &Context) -> Result<ExperimentReport> {
    let params = &cfg.params;
    params.validate()?;
    cfg.scene.validate()?;
    if cfg.radii.is_empty() || cfg.holder_levels < 2 {
        return Err(Error::InvalidParameter("energy checks need radii and at least two oscillation levels".into()));
    }
    if let Some(r) = cfg.radii.iter().find(|&&r| !(2.0 * r <= cfg.solve_radius)) {
        return Err(Error::InvalidParameter(format!(
            "radius {r}: the doubled ball must lie inside the solve ball of radius {}",
            cfg.solve_radius
        )));
    }
    let grid = cfg.scene.grid.build(None)?;
    let g = cfg.scene.exterior_on(&grid);
    let kernel = ctx.kernel(&grid, params)?;
    let c = cfg.scene.center;
    let solve_ball = Ball::new(c, cfg.solve_radius)?;
    let v = solve_homogeneous_mixed(&g, &solve_ball, &grid, params, &VectorFieldSpec::model(params.p), &kernel, &ctx.solver)?.u;

    let mut slopes = Vec::new();
    for &r in &cfg.radii {
        let rhos: Vec<f64> = (1..=cfg.holder_levels).map(|j| r * 0.5f64.powi(j as i32)).collect();
        let osc: Vec<f64> = rhos
            .iter()
            .map(|&rho| oscillation(&grid, &v, &Ball::new(c, rho)?))
            .collect::<Result<_>>()?;
        slopes.push(fit(&rhos, &osc).map_or(1.0, |f| f.slope));
    }
    let alpha = slopes.iter().copied().fold(f64::INFINITY, f64::min).min(1.0);

    let terms = ctx.par_map(&cfg.radii, |&r| energy_terms(&grid, &v, c, r, params, alpha))?;
    let mut rep = ExperimentReport::new("energy", params, "radius", &ctx.provenance);
    let names = ["sup", "caccioppoli", "holder", "sobolev"];
    let mut constants: Vec<Vec<f64>> = vec![Vec::new(); 4];
    for (&r, t) in cfg.radii.iter().zip(&terms) {
        rep.push(r, t.caccioppoli.0, t.caccioppoli.1);
        for (i, (l, h)) in [t.sup, t.caccioppoli, t.holder, t.sobolev].into_iter().enumerate() {
            constants[i].push(super::ratio(l, h));
        }
    }
    for (name, consts) in names.iter().zip(&constants) {
        rep.check_le(&format!("{name} constant spread"), spread(consts), ctx.thresholds.energy_spread);
        rep.series.insert(format!("constant_{name}"), consts.clone());
    }
    rep.series.insert("holder_slopes".into(), slopes);
    rep.fitted_exponent = Some(alpha);
    rep.check_ge("Hölder exponent", alpha, cfg.min_alpha);

    let r = cfg.radii[0];
    let straight = straight_terms(&grid, &v, c, r, params);
    let k = ball_average(&grid, &v, &Ball::new(c, r)?)?;
    let w = v.shift(-k);
    let half = Ball::new(c, r / 2.0)?;
    let dv = gradient(&grid, &v);
    let composed = [
        tail(&grid, &w, c, r / 2.0, params.p, params.s)?,
        ball_mean_by(&grid, &Ball::new(c, r)?, |i| w.values[i].abs())?,
        ball_mean_by(&grid, &half, |i| abs_pow(norm2(dv[i]), params.p))?,
        gagliardo_seminorm(&grid, &v, &half, params.s, params.p)? / ball_measure(&grid, &half),
    ];
    let pairs: Vec<(f64, f64)> = composed.iter().copied().zip(straight).collect();
    rep.audit(audit::discrepancy(&pairs));
    Ok(rep.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terms_scale_with_their_degrees() {
        let params = ParamSet::new(2, 0.4, 3.0).unwrap();
        let grid = GridDomain::centered(2, 1.0, 40).unwrap().with_ball_interior(0.9).unwrap();
        let v = GridFunction::from_fn(&grid, Some(0.2), |x| (2.0 * x[0]).sin() + x[1] * x[1]);
        let lambda = 2.5;
        let a = energy_terms(&grid, &v, [0.05, 0.0], 0.3, &params, 0.7).unwrap();
        let b = energy_terms(&grid, &v.scale(lambda), [0.05, 0.0], 0.3, &params, 0.7).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * y.abs();
        for (deg, ta, tb) in [(1.0, a.sup, b.sup), (params.p, a.caccioppoli, b.caccioppoli), (1.0, a.holder, b.holder), (1.0, a.sobolev, b.sobolev)] {
            let f = lambda.powf(deg);
            assert!(close(f * ta.0, tb.0) && close(f * ta.1, tb.1), "degree {deg}: {ta:?} {tb:?}");
        }
    }

    #[test]
    fn small_run_passes_audit() {
        let cfg = EnergyConfig {
            scene: Scene::perturbed_affine(2, 64),
            radii: vec![0.36, 0.18],
            holder_levels: 2,
            ..Default::default()
        };
        let rep = exp_energy_inequalities(&cfg, &Context::default()).unwrap();
        assert!(rep.audit_discrepancy < 1e-10, "{}", rep.audit_discrepancy);
        assert!(rep.ratios.iter().all(|r| r.is_finite() && *r > 0.0));
    }
}
