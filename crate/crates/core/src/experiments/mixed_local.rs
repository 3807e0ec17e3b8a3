//! Comparison between a homogeneous mixed solution and the local p-harmonic
//! replacement on a quarter ball.

use serde::{Deserialize, Serialize};

use super::{audit, fit, mean_norm_pow, normalized_tail, relative_change, spread, Context, ExperimentReport, ExteriorData, MeasureSpec, Scene};
use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::grid::{ball_mean_by, gradient, Ball, GridFunction};
use crate::numeric::{abs_pow, norm2};
use crate::params::ParamSet;
use crate::solver::{solve_homogeneous_local, solve_homogeneous_mixed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixedLocalConfig {
    pub params: ParamSet,
    pub scene: Scene,
    pub radii: Vec<f64>,
    /// Cells per axis of each run; ratios are compared between consecutive entries.
    pub resolutions: Vec<usize>,
    /// The fitted decay rate of the left side must reach this multiple of `ā₁ p`.
    pub rate_factor: f64,
}

impl Default for MixedLocalConfig {
    fn default() -> Self {
        MixedLocalConfig {
            params: ParamSet::new(1, 0.5, 2.0).expect("valid defaults"),
            scene: Scene::unit(
                1,
                1024,
                ExteriorData::Sum {
                    terms: vec![
                        ExteriorData::Affine {
                            offset: 0.1,
                            slope: [0.6, 0.0],
                        },
                        ExteriorData::Sinusoid {
                            amplitude: 0.25,
                            wavevector: [0.5, 0.0],
                            phase: 0.4,
                        },
                    ],
                },
                MeasureSpec::Zero,
            ),
            radii: vec![0.8, 0.4, 0.2],
            resolutions: vec![512, 1024],
            rate_factor: 0.8,
        }
    }
}

struct Row {
    lhs: f64,
    rhs: f64,
    audit: f64,
}

fn one_radius(cfg: &MixedLocalConfig, ctx: &Context, cells: usize, r: f64) -> Result<Row> {
    let params = &cfg.params;
    let (s, p) = (params.s, params.p);
    let grid = cfg.scene.grid.build(Some(cells))?;
    let g = cfg.scene.exterior_on(&grid);
    let kernel = ctx.kernel(&grid, params)?;
    let spec = VectorFieldSpec::model(p);
    let c = cfg.scene.center;
    let big = Ball::new(c, r)?;
    let quarter = Ball::new(c, r / 4.0)?;
    let v = solve_homogeneous_mixed(&g, &big, &grid, params, &spec, &kernel, &ctx.solver)?.u;
    let w = solve_homogeneous_local(&v, &quarter, &grid, params, &spec, &ctx.solver)?.u;
    let dv = gradient(&grid, &v);
    let dw = gradient(&grid, &w);
    let lhs = ball_mean_by(&grid, &quarter, |k| abs_pow(norm2([dv[k][0] - dw[k][0], dv[k][1] - dw[k][1]]), p))?;
    let q0 = params.q0();
    let grad = mean_norm_pow(&grid, &dv, &big, q0)?;
    let tail = normalized_tail(&grid, &v, &big, p, s)?;
    let rhs = r.powf(params.abar1() * p) * grad.powf(p / q0) + r.powf(params.abar2() * p) * tail.powf(p);

    let diff: GridFunction = v.sub(&w);
    let audit_pairs = [
        (lhs, audit::mean_grad_pow(&grid, &diff, c, r / 4.0, p)),
        (grad, audit::mean_grad_pow(&grid, &v, c, r, q0)),
        (tail, audit::normalized_tail(&grid, &v, c, r, p, s)),
    ];
    Ok(Row {
        lhs,
        rhs,
        audit: audit::discrepancy(&audit_pairs),
    })
}

pub fn exp_comparison_mixed_local(cfg: &MixedLocalConfig, ctx: &Context) -> Result<ExperimentReport> {
    let params = &cfg.params;
    params.validate()?;
    cfg.scene.validate()?;
    if cfg.radii.is_empty() || cfg.resolutions.is_empty() {
        return Err(Error::InvalidParameter("mixed_local needs at least one radius and one resolution".into()));
    }
    let mut rep = ExperimentReport::new("mixed_local", params, "radius", &ctx.provenance);
    let jobs: Vec<(usize, f64)> = cfg
        .resolutions
        .iter()
        .flat_map(|&n| cfg.radii.iter().map(move |&r| (n, r)))
        .collect();
    let rows = ctx.par_map(&jobs, |&(n, r)| one_radius(cfg, ctx, n, r))?;
    let nr = cfg.radii.len();
    let mut per_res: Vec<Vec<f64>> = Vec::new();
    for (ri, &cells) in cfg.resolutions.iter().enumerate() {
        let block = &rows[ri * nr..(ri + 1) * nr];
        let ratios: Vec<f64> = block.iter().map(|row| super::ratio(row.lhs, row.rhs)).collect();
        rep.series.insert(format!("ratio@{cells}"), ratios.clone());
        rep.series.insert(format!("lhs@{cells}"), block.iter().map(|row| row.lhs).collect());
        rep.check_le(&format!("ratio spread @{cells}"), spread(&ratios), ctx.thresholds.ratio_spread);
        per_res.push(ratios);
        for row in block {
            rep.audit(row.audit);
        }
    }
    for w in per_res.windows(2) {
        rep.check_le("refinement change of ratios", relative_change(&w[0], &w[1]), ctx.thresholds.stability);
    }
    let finest = &rows[(cfg.resolutions.len() - 1) * nr..];
    for (&r, row) in cfg.radii.iter().zip(finest) {
        rep.push(r, row.lhs, row.rhs);
    }
    if rep.lhs.iter().all(|&l| l <= 1e-24) {
        rep.notes.push("left side vanishes: mixed and local solutions coincide".into());
    } else {
        let lhs = rep.lhs.clone();
        if let Some(f) = rep.record_fit(fit(&cfg.radii, &lhs), &ctx.thresholds) {
            rep.check_ge("decay rate of left side", f.slope, cfg.rate_factor * params.abar1() * params.p);
        }
    }
    Ok(rep.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelVariant;

    #[test]
    fn disabled_kernel_gives_identical_solutions() {
        let mut ctx = Context::default();
        ctx.kernel_variant = KernelVariant::Disabled;
        let cfg = MixedLocalConfig {
            scene: Scene::perturbed_affine(1, 256),
            resolutions: vec![256],
            ..Default::default()
        };
        let rep = exp_comparison_mixed_local(&cfg, &ctx).unwrap();
        assert!(rep.lhs.iter().all(|&l| l < 1e-18), "{:?}", rep.lhs);
    }

    #[test]
    fn constant_data_gives_zero() {
        let cfg = MixedLocalConfig {
            scene: Scene::unit(
                1,
                256,
                ExteriorData::Affine {
                    offset: 2.0,
                    slope: [0.0, 0.0],
                },
                MeasureSpec::Zero,
            ),
            resolutions: vec![256],
            ..Default::default()
        };
        let mut scene = cfg.scene.clone();
        scene.far_field = 2.0;
        let cfg = MixedLocalConfig { scene, ..cfg };
        let rep = exp_comparison_mixed_local(&cfg, &Context::default()).unwrap();
        assert!(rep.lhs.iter().all(|&l| l == 0.0));
    }
}
