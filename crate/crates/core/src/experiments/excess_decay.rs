//! Decay of the gradient excess of a homogeneous mixed solution over shrinking balls.

use serde::{Deserialize, Serialize};

use super::{audit, dyadic, fit, mean_norm_pow, normalized_tail, spread, Context, ExperimentReport, Scene};
use crate::error::Result;
use crate::field::VectorFieldSpec;
use crate::grid::{excess, gradient, Ball};
use crate::params::{DecayExponents, ParamSet};
use crate::solver::solve_homogeneous_mixed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcessDecayConfig {
    pub params: ParamSet,
    pub scene: Scene,
    /// Radius of the ball on which the homogeneous problem is solved.
    pub radius: f64,
    /// Number of dyadic balls `B_{2^{−k} r}`, `k = 0..levels`.
    pub levels: usize,
    pub sigma: f64,
    pub eps1: Option<f64>,
    /// Smallest admissible fitted decay exponent.
    pub min_exponent: f64,
}

impl Default for ExcessDecayConfig {
    fn default() -> Self {
        ExcessDecayConfig {
            params: ParamSet::new(2, 0.5, 2.0).expect("valid defaults"),
            scene: Scene::perturbed_affine(2, 192),
            radius: 0.8,
            levels: 6,
            sigma: DecayExponents::DEFAULT_SIGMA,
            eps1: None,
            min_exponent: 0.1,
        }
    }
}

pub fn exp_excess_decay_homogeneous(cfg: &ExcessDecayConfig, ctx: &Context) -> Result<ExperimentReport> {
    let params = &cfg.params;
    params.validate()?;
    cfg.scene.validate()?;
    let (s, p) = (params.s, params.p);
    let exps = match cfg.eps1 {
        Some(e) => DecayExponents::new(params, params.m.or_else(|| (p < 2.0).then(|| DecayExponents::default_m(s, p, cfg.sigma))), e, cfg.sigma)?,
        None => DecayExponents::default_for(params, cfg.sigma)?,
    };
    let mut rep = ExperimentReport::new("excess_decay", params, "radius", &ctx.provenance);
    let radii = dyadic(cfg.radius, cfg.levels);
    if cfg.scene.exterior.is_affine() {
        for &rho in &radii {
            rep.push(rho, 0.0, 0.0);
        }
        rep.notes.push("affine exterior data: Dv is constant and every excess vanishes; fit skipped".into());
        rep.check_flag("excesses vanish", true);
        return Ok(rep.finish());
    }

    let grid = cfg.scene.grid.build(None)?;
    let g = cfg.scene.exterior_on(&grid);
    let ball = Ball::new(cfg.scene.center, cfg.radius)?;
    let kernel = ctx.kernel(&grid, params)?;
    let spec = VectorFieldSpec::model(p);
    let v = solve_homogeneous_mixed(&g, &ball, &grid, params, &spec, &kernel, &ctx.solver)?.u;
    let dv = gradient(&grid, &v);

    let q0 = params.q0();
    let lhs: Vec<f64> = radii
        .iter()
        .map(|&rho| excess(&grid, &dv, &Ball::new(ball.center, rho)?))
        .collect::<Result<_>>()?;
    let grad_term = mean_norm_pow(&grid, &dv, &ball, q0)?.powf(1.0 / q0);
    let tail_term = normalized_tail(&grid, &v, &ball, p, s)?;
    let r = cfg.radius;
    let bracket_terms = [lhs[0], r.powf(exps.abar1 - exps.eps1) * grad_term, r.powf(exps.abar2 - exps.eps1) * tail_term];
    let bracket: f64 = bracket_terms.iter().sum();

    let f = rep.record_fit(fit(&radii, &lhs), &ctx.thresholds);
    let beta = f.map_or(0.0, |f| f.slope.max(0.0));
    for (&rho, &e) in radii.iter().zip(&lhs) {
        rep.push(rho, e, (rho / r).powf(beta) * bracket);
    }
    if let Some(f) = f {
        rep.check_ge("decay exponent", f.slope, cfg.min_exponent);
    }
    rep.check_le("ratio spread", spread(&rep.ratios), ctx.thresholds.ratio_spread);
    rep.series.insert("bracket_terms".into(), bracket_terms.to_vec());
    rep.series.insert("abar".into(), vec![exps.abar1, exps.abar2, exps.eps1]);
    rep.series.insert(
        "nodes_per_ball".into(),
        radii.iter().map(|&rho| grid.ball_nodes(&Ball { center: ball.center, radius: rho }).len() as f64).collect(),
    );

    let c = ball.center;
    let mut pairs: Vec<(f64, f64)> = radii
        .iter()
        .zip(&lhs)
        .map(|(&rho, &e)| (e, audit::excess(&grid, |k| audit::gradient_at(&grid, &v, k), c, rho)))
        .collect();
    pairs.push((grad_term, audit::mean_grad_pow(&grid, &v, c, r, q0).powf(1.0 / q0)));
    pairs.push((tail_term, audit::normalized_tail(&grid, &v, c, r, p, s)));
    rep.audit(audit::discrepancy(&pairs));
    Ok(rep.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{ExteriorData, MeasureSpec};

    fn small(p: f64) -> ExcessDecayConfig {
        ExcessDecayConfig {
            params: ParamSet::new(2, 0.5, p).unwrap(),
            scene: Scene::perturbed_affine(2, 48),
            radius: 0.8,
            levels: 4,
            ..Default::default()
        }
    }

    #[test]
    fn affine_scene_has_zero_excess() {
        let mut cfg = small(3.0);
        cfg.scene = Scene::unit(
            2,
            48,
            ExteriorData::Affine {
                offset: 1.0,
                slope: [0.3, 0.2],
            },
            MeasureSpec::Zero,
        );
        let rep = exp_excess_decay_homogeneous(&cfg, &Context::default()).unwrap();
        assert!(rep.verdict);
        assert!(rep.lhs.iter().all(|&e| e == 0.0));
        assert!(rep.fitted_exponent.is_none());
    }

    #[test]
    fn linear_case_scales_with_the_data() {
        let ctx = Context::default();
        let cfg = small(2.0);
        let a = exp_excess_decay_homogeneous(&cfg, &ctx).unwrap();
        let mut scaled = cfg.clone();
        scaled.scene.exterior = cfg.scene.exterior.scaled(3.0);
        let b = exp_excess_decay_homogeneous(&scaled, &ctx).unwrap();
        for (x, y) in a.lhs.iter().zip(&b.lhs) {
            assert!((3.0 * x - y).abs() <= 1e-8 * y.abs());
        }
        assert!(a.audit_discrepancy < 1e-10);
    }
}
