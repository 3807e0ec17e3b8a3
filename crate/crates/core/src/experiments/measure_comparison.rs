//! Distance between a measure-data solution and its homogeneous replacement
//! on a ball, as the measure is scaled.

use serde::{Deserialize, Serialize};

use super::{audit, fit, spread, Context, ExperimentReport, MeasureSpec, Scene};
use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::grid::{ball_mean_by, gradient, Ball};
use crate::measure::{tv_on_ball, Measure};
use crate::numeric::{abs_pow, norm2};
use crate::params::ParamSet;
use crate::solver::{solve_dirichlet, solve_homogeneous_mixed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureComparisonConfig {
    pub params: ParamSet,
    pub scene: Scene,
    pub radius: f64,
    /// Factors `t` applied to the scene measure.
    pub mass_scales: Vec<f64>,
    /// Integrability exponent, in `[1, min(n(p−1)/(n−1), p))`.
    pub q: f64,
    /// Admissible relative deviation of the fitted exponent from `q/(p−1)`.
    pub exponent_tolerance: f64,
}

impl Default for MeasureComparisonConfig {
    fn default() -> Self {
        MeasureComparisonConfig {
            params: ParamSet::new(2, 0.5, 2.0).expect("valid defaults"),
            scene: Scene::unit(
                2,
                96,
                super::ExteriorData::zero(),
                MeasureSpec::Bump {
                    center: [0.1, 0.0],
                    radius: 0.25,
                    mass: 1.0,
                },
            ),
            radius: 0.5,
            mass_scales: vec![1.0, 2.0, 4.0, 8.0],
            q: 1.0,
            exponent_tolerance: 0.2,
        }
    }
}

struct Row {
    lhs: f64,
    rhs: f64,
    mass: f64,
    audit: f64,
}

fn straight_mass(mu: &Measure, c: [f64; 2], r: f64) -> f64 {
    let mut total = 0.0;
    for a in &mu.atoms {
        let d2 = (a.x[0] - c[0]).powi(2) + (a.x[1] - c[1]).powi(2);
        if d2.sqrt() < r {
            total += a.w.abs();
        }
    }
    if let Some(d) = &mu.density {
        let mut sum = 0.0;
        for k in 0..d.grid.len() {
            let x = d.grid.node(k);
            if ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt() < r {
                sum += d.values.values[k].abs();
            }
        }
        total += sum * d.grid.cell_measure();
    }
    total
}

pub fn exp_comparison_measure(cfg: &MeasureComparisonConfig, ctx: &Context) -> Result<ExperimentReport> {
    let params = &cfg.params;
    params.validate()?;
    cfg.scene.validate()?;
    let (n, p, q) = (params.n as f64, params.p, cfg.q);
    if !(q >= 1.0 && q < params.q_upper()) {
        return Err(Error::InvalidParameter(format!(
            "q = {q}: requires 1 <= q < {}",
            params.q_upper()
        )));
    }
    if cfg.mass_scales.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidParameter("mass scales must be positive".into()));
    }
    let grid = cfg.scene.grid.build(None)?;
    let g = cfg.scene.exterior_on(&grid);
    let base = cfg.scene.measure.build(&grid)?;
    let kernel = ctx.kernel(&grid, params)?;
    let spec = VectorFieldSpec::model(p);
    let c = cfg.scene.center;
    let r = cfg.radius;
    let ball = Ball::new(c, r)?;

    let rows = ctx.par_map(&cfg.mass_scales, |&t| -> Result<Row> {
        let mu = base.scaled(t);
        let u = solve_dirichlet(&mu, &g, &grid, params, &spec, &kernel, &ctx.solver)?.u;
        let v = solve_homogeneous_mixed(&u, &ball, &grid, params, &spec, &kernel, &ctx.solver)?.u;
        let du = gradient(&grid, &u);
        let dv = gradient(&grid, &v);
        let lhs = ball_mean_by(&grid, &ball, |k| abs_pow(norm2([du[k][0] - dv[k][0], du[k][1] - dv[k][1]]), q))?;
        let mass = tv_on_ball(&mu, &ball);
        let scaled_mass = mass / r.powf(n - 1.0);
        let mut rhs = scaled_mass.powf(q / (p - 1.0));
        let mut grad_q = 0.0;
        if p < 2.0 {
            grad_q = ball_mean_by(&grid, &ball, |k| abs_pow(norm2(du[k]), q))?;
            rhs += scaled_mass.powf(q) * grad_q.powf(2.0 - p);
        }
        let mut pairs = vec![
            (lhs, audit::mean_grad_pow(&grid, &u.sub(&v), c, r, q)),
            (mass, straight_mass(&mu, c, r)),
        ];
        if p < 2.0 {
            pairs.push((grad_q, audit::mean_grad_pow(&grid, &u, c, r, q)));
        }
        Ok(Row {
            lhs,
            rhs,
            mass,
            audit: audit::discrepancy(&pairs),
        })
    })?;

    let mut rep = ExperimentReport::new("measure_comparison", params, "mass_scale", &ctx.provenance);
    for (&t, row) in cfg.mass_scales.iter().zip(&rows) {
        rep.push(t, row.lhs, row.rhs);
        rep.audit(row.audit);
    }
    rep.series.insert("mass_on_ball".into(), rows.iter().map(|r| r.mass).collect());
    if cfg.scene.measure.is_zero() {
        rep.notes.push("zero measure: u and v coincide".into());
        rep.check_flag("left side vanishes", rep.lhs.iter().all(|&l| l == 0.0));
        return Ok(rep.finish());
    }
    let lhs = rep.lhs.clone();
    let f = rep.record_fit(fit(&cfg.mass_scales, &lhs), &ctx.thresholds);
    let expected = q / (p - 1.0);
    rep.series.insert("expected_exponent".into(), vec![expected]);
    if p >= 2.0 {
        if let Some(f) = f {
            rep.check_le(
                "relative deviation of exponent from q/(p-1)",
                (f.slope - expected).abs() / expected,
                cfg.exponent_tolerance,
            );
        }
    } else {
        rep.check_le("ratio spread", spread(&rep.ratios), ctx.thresholds.ratio_spread);
    }
    Ok(rep.finish())
}
