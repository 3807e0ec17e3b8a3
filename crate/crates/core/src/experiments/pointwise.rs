//! Pointwise gradient bound at random probes for randomly generated data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{audit, model_field, normalized_tail, relative_change, Context, ExperimentReport, ExteriorData, MeasureSpec, Scene};
use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::grid::{ball_average_vector, ball_mean_by, excess, gradient, Ball, GridDomain, Point, Vector};
use crate::measure::Measure;
use crate::numeric::norm2;
use crate::params::{DecayExponents, ParamSet};
use crate::potentials::riesz_potential;
use crate::solver::solve_dirichlet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointwiseConfig {
    pub params: ParamSet,
    pub configurations: usize,
    pub probes: usize,
    pub seed: u64,
    pub radius: f64,
    pub sigma: f64,
    pub kappa: f64,
    /// Probes are drawn from the ball of this radius about the origin.
    pub probe_radius: f64,
    pub resolutions: Vec<usize>,
}

impl Default for PointwiseConfig {
    fn default() -> Self {
        PointwiseConfig {
            params: ParamSet::new(2, 0.5, 2.0).expect("valid defaults"),
            configurations: 5,
            probes: 10,
            seed: 7,
            radius: 0.2,
            sigma: DecayExponents::DEFAULT_SIGMA,
            kappa: 0.5,
            probe_radius: 0.6,
            resolutions: vec![48, 96],
        }
    }
}

/// Random scene: affine plus sinusoidal exterior data and a smooth bump measure.
fn random_scene(rng: &mut ChaCha8Rng, dim: usize, cells: usize) -> Scene {
    let mut pick = |lo: f64, hi: f64| rng.gen_range(lo..hi);
    let second = |v: f64| if dim == 2 { v } else { 0.0 };
    let slope = [pick(-1.0, 1.0), second(pick(-1.0, 1.0))];
    let wave = [pick(1.0, 3.0), second(pick(1.0, 3.0))];
    let amplitude = pick(0.05, 0.3);
    let phase = pick(0.0, std::f64::consts::TAU);
    let center = [pick(-0.3, 0.3), second(pick(-0.3, 0.3))];
    let radius = pick(0.15, 0.3);
    let mass = pick(0.5, 2.0);
    Scene::unit(
        dim,
        cells,
        ExteriorData::Sum {
            terms: vec![
                ExteriorData::Affine { offset: 0.0, slope },
                ExteriorData::Sinusoid {
                    amplitude,
                    wavevector: wave,
                    phase,
                },
            ],
        },
        MeasureSpec::Bump { center, radius, mass },
    )
}

fn random_probe(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Point {
    loop {
        let x = [rng.gen_range(-radius..radius), if dim == 2 { rng.gen_range(-radius..radius) } else { 0.0 }];
        if norm2(x) <= radius {
            return x;
        }
    }
}

/// Multilinear interpolation of a nodal vector field at `x`.
fn interpolate(grid: &GridDomain, field: &[Vector], x: Point) -> Vector {
    let lo = grid.lower();
    let h = grid.h();
    let [nx, ny] = grid.shape();
    let axis = |a: usize, n: usize| {
        let t = (x[a] - lo[a]) / h - 0.5;
        let i = (t.floor().max(0.0) as usize).min(n.saturating_sub(2));
        (i, (t - i as f64).clamp(0.0, 1.0))
    };
    let (i, tx) = axis(0, nx);
    let mix = |a: Vector, b: Vector, t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    if grid.dim() == 1 {
        return mix(field[i], field[i + 1], tx);
    }
    let (j, ty) = axis(1, ny);
    let k = grid.flat(i, j);
    let bottom = mix(field[k], field[k + 1], tx);
    let top = mix(field[k + nx], field[k + nx + 1], tx);
    mix(bottom, top, ty)
}

struct ProbeValue {
    lhs: f64,
    rhs: f64,
    audit: f64,
}

#[allow(clippy::too_many_arguments)]
fn probe(cfg: &PointwiseConfig, grid: &GridDomain, u: &crate::grid::GridFunction, du: &[Vector], flux: &[Vector], mu: &Measure, x0: Point) -> Result<ProbeValue> {
    let params = &cfg.params;
    let (n, s, p) = (params.n, params.s, params.p);
    let big_r = cfg.radius;
    let ball = Ball::new(x0, big_r)?;
    let riesz = riesz_potential(mu, x0, big_r, n)?;
    let tail = normalized_tail(grid, u, &ball, p, s)?.powf(p - 1.0);
    let weighted_tail = big_r.powf(cfg.sigma) * tail;
    let audit_tail = audit::normalized_tail(grid, u, x0, big_r, p, s).powf(p - 1.0);
    let (field, straight): (&[Vector], Box<dyn Fn(usize) -> Vector>) = if p >= 2.0 {
        (flux, Box::new(|k| audit::model_flux_at(grid, u, k, p)))
    } else {
        (du, Box::new(|k| audit::gradient_at(grid, u, k)))
    };
    let at = if p >= 2.0 {
        let z = interpolate(grid, du, x0);
        model_field(&[z], p)[0]
    } else {
        interpolate(grid, du, x0)
    };
    let avg = ball_average_vector(grid, field, &ball)?;
    let lhs = norm2([at[0] - avg[0], at[1] - avg[1]]);
    let exc = excess(grid, field, &ball)?;
    let mean_abs = ball_mean_by(grid, &ball, |k| norm2(field[k]))?;
    let rhs = if p >= 2.0 {
        riesz + exc + big_r.powf(cfg.kappa) * mean_abs + weighted_tail
    } else {
        let inv = 1.0 / (p - 1.0);
        riesz.powf(inv) + riesz * mean_abs.powf(2.0 - p) + exc + big_r.powf(cfg.kappa) * mean_abs + weighted_tail.powf(inv)
    };
    let pairs = [
        (exc, audit::excess(grid, &*straight, x0, big_r)),
        (mean_abs, audit::mean(grid, x0, big_r, |k| norm2(straight(k)))),
        (tail, audit_tail),
    ];
    Ok(ProbeValue {
        lhs,
        rhs,
        audit: audit::discrepancy(&pairs),
    })
}

pub fn exp_pointwise_bound(cfg: &PointwiseConfig, ctx: &Context) -> Result<ExperimentReport> {
    let params = &cfg.params;
    params.validate()?;
    if cfg.configurations == 0 || cfg.probes == 0 || cfg.resolutions.is_empty() {
        return Err(Error::InvalidParameter("pointwise check needs configurations, probes and resolutions".into()));
    }
    if !(cfg.probe_radius + cfg.radius < 0.9) {
        return Err(Error::InvalidParameter(format!(
            "probe radius {} plus ball radius {} must stay inside Ω of radius 0.9",
            cfg.probe_radius, cfg.radius
        )));
    }
    let dim = params.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cases = Vec::new();
    for _ in 0..cfg.configurations {
        let scene = random_scene(&mut rng, dim, cfg.resolutions[0]);
        let probes: Vec<Point> = (0..cfg.probes).map(|_| random_probe(&mut rng, dim, cfg.probe_radius)).collect();
        cases.push((scene, probes));
    }
    let jobs: Vec<(usize, usize)> = cfg
        .resolutions
        .iter()
        .enumerate()
        .flat_map(|(ri, _)| (0..cases.len()).map(move |ci| (ri, ci)))
        .collect();
    let spec = VectorFieldSpec::model(params.p);
    let results = ctx.par_map(&jobs, |&(ri, ci)| -> Result<Vec<ProbeValue>> {
        let (scene, probes) = &cases[ci];
        let grid = scene.grid.build(Some(cfg.resolutions[ri]))?;
        let g = scene.exterior_on(&grid);
        let mu = scene.measure.build(&grid)?;
        let kernel = ctx.kernel(&grid, params)?;
        let u = solve_dirichlet(&mu, &g, &grid, params, &spec, &kernel, &ctx.solver)?.u;
        let du = gradient(&grid, &u);
        let flux = model_field(&du, params.p);
        probes.iter().map(|&x| probe(cfg, &grid, &u, &du, &flux, &mu, x)).collect()
    })?;

    let mut rep = ExperimentReport::new("pointwise", params, "probe", &ctx.provenance);
    let per_res = cases.len();
    let mut sups = Vec::new();
    for (ri, &cells) in cfg.resolutions.iter().enumerate() {
        let values: Vec<&ProbeValue> = results[ri * per_res..(ri + 1) * per_res].iter().flatten().collect();
        let ratios: Vec<f64> = values.iter().map(|v| super::ratio(v.lhs, v.rhs)).collect();
        let sup = ratios.iter().copied().fold(0.0, f64::max);
        rep.check_flag(&format!("finite ratios @{cells}"), ratios.iter().all(|r| r.is_finite()));
        rep.series.insert(format!("ratio@{cells}"), ratios);
        sups.push(sup);
        for v in &values {
            rep.audit(v.audit);
        }
        if ri + 1 == cfg.resolutions.len() {
            for (i, v) in values.iter().enumerate() {
                rep.push((i + 1) as f64, v.lhs, v.rhs);
            }
        }
    }
    for w in sups.windows(2) {
        rep.check_le("refinement change of the largest ratio", relative_change(&w[..1], &w[1..]), ctx.thresholds.stability);
    }
    rep.series.insert("sup_ratio".into(), sups);
    Ok(rep.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_reproduces_affine_fields() {
        let grid = GridDomain::centered(2, 1.0, 20).unwrap();
        let field: Vec<Vector> = (0..grid.len())
            .map(|k| {
                let x = grid.node(k);
                [1.0 + 2.0 * x[0] - x[1], 0.5 * x[1]]
            })
            .collect();
        let x = [0.123, -0.377];
        let v = interpolate(&grid, &field, x);
        assert!((v[0] - (1.0 + 2.0 * x[0] - x[1])).abs() < 1e-13);
        assert!((v[1] - 0.5 * x[1]).abs() < 1e-13);
    }

    #[test]
    fn seeded_configurations_are_reproducible() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(random_scene(&mut a, 2, 32), random_scene(&mut b, 2, 32));
    }

    #[test]
    fn small_run_is_finite() {
        let cfg = PointwiseConfig {
            configurations: 2,
            probes: 3,
            resolutions: vec![32],
            ..Default::default()
        };
        let rep = exp_pointwise_bound(&cfg, &Context::default()).unwrap();
        assert!(rep.ratios.iter().all(|r| r.is_finite()));
        assert!(rep.audit_discrepancy < 1e-10);
    }
}
