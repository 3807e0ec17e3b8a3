//! Anchor checks with known answers: the monotonicity constants of the model
//! field and a manufactured one-dimensional solution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{spread, Context, ExperimentReport};
use crate::error::{Error, Result};
use crate::field::{v_map, vector_field_a, VectorFieldSpec};
use crate::grid::{GridDomain, GridFunction};
use crate::measure::Measure;
use crate::numeric::signed_pow;
use crate::operators::{apply_fractional_p_laplacian, apply_local_p_laplacian, residual};
use crate::params::ParamSet;
use crate::quadrature::adaptive;
use crate::solver::solve_dirichlet_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonotonicityConfig {
    pub pairs: usize,
    pub ps: Vec<f64>,
    pub seed: u64,
    /// Largest admissible spread of the constants across `ps`.
    pub max_spread: f64,
    /// Exponents around 2 whose constants are reported without a threshold.
    pub near_two: Vec<f64>,
}

impl Default for MonotonicityConfig {
    fn default() -> Self {
        MonotonicityConfig {
            pairs: 100_000,
            ps: vec![2.0, 2.5, 3.0],
            seed: 7,
            max_spread: 5.0,
            near_two: vec![1.95, 2.0, 2.05],
        }
    }
}

fn random_vector(rng: &mut ChaCha8Rng) -> [f64; 2] {
    let mag = 10f64.powf(rng.gen_range(-3.0..1.0));
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    [mag * angle.cos(), mag * angle.sin()]
}

/// Smallest and largest `(A(z₁)−A(z₂))·(z₁−z₂) / |V(z₁)−V(z₂)|²` over random pairs.
pub fn monotonicity_constants(p: f64, pairs: usize, seed: u64) -> Result<(f64, f64)> {
    let spec = VectorFieldSpec::model(p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..pairs {
        let z1 = random_vector(&mut rng);
        let z2 = random_vector(&mut rng);
        let a1 = vector_field_a(z1, &spec)?;
        let a2 = vector_field_a(z2, &spec)?;
        let (v1, v2) = (v_map(z1, p), v_map(z2, p));
        let num = (a1[0] - a2[0]) * (z1[0] - z2[0]) + (a1[1] - a2[1]) * (z1[1] - z2[1]);
        let den = (v1[0] - v2[0]).powi(2) + (v1[1] - v2[1]).powi(2);
        if den > 0.0 {
            let q = num / den;
            lo = lo.min(q);
            hi = hi.max(q);
        }
    }
    Ok((lo, hi))
}

pub fn exp_monotonicity(cfg: &MonotonicityConfig, ctx: &Context) -> Result<ExperimentReport> {
    if cfg.ps.is_empty() || cfg.pairs == 0 {
        return Err(Error::InvalidParameter("monotonicity check needs exponents and pairs".into()));
    }
    let params = ParamSet::new(2, 0.5, cfg.ps[0])?;
    let mut rep = ExperimentReport::new("monotonicity", &params, "p", &ctx.provenance);
    let mut consts = Vec::new();
    for &p in &cfg.ps {
        ParamSet::new(2, 0.5, p)?;
        let (lo, hi) = monotonicity_constants(p, cfg.pairs, cfg.seed)?;
        rep.push(p, lo, hi);
        rep.check_ge(&format!("lower constant positive at p={p}"), lo, f64::MIN_POSITIVE);
        consts.push(hi.max(1.0 / lo));
    }
    rep.check_le("spread of constants", spread(&consts), cfg.max_spread);
    rep.series.insert("constant".into(), consts);
    let mut near = Vec::with_capacity(cfg.near_two.len());
    for &p in &cfg.near_two {
        ParamSet::new(2, 0.5, p)?;
        let (lo, hi) = monotonicity_constants(p, cfg.pairs, cfg.seed)?;
        near.push(hi.max(1.0 / lo));
    }
    rep.series.insert("near_two_p".into(), cfg.near_two.clone());
    rep.series.insert("near_two_constant".into(), near);
    Ok(rep.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManufacturedConfig {
    pub ps: Vec<f64>,
    pub s: f64,
    /// Coarse and fine cell counts.
    pub cells: Vec<usize>,
    pub half: f64,
    pub omega_radius: f64,
    /// Smallest admissible ratio of coarse to fine errors.
    pub min_ratio: f64,
    /// Largest admissible relative error when the discrete right side is used.
    pub recovery_tol: f64,
}

impl Default for ManufacturedConfig {
    fn default() -> Self {
        ManufacturedConfig {
            ps: vec![1.95, 2.5, 3.0],
            s: 0.4,
            cells: vec![256, 512],
            half: 1.0,
            omega_radius: 0.5,
            min_ratio: 1.5,
            recovery_tol: 1e-7,
        }
    }
}

fn exact(x: f64) -> f64 {
    0.5 * x + 0.25 * (2.0 * x).sin()
}

fn exact_d1(x: f64) -> f64 {
    0.5 + 0.5 * (2.0 * x).cos()
}

fn exact_d2(x: f64) -> f64 {
    -(2.0 * x).sin()
}

/// `φ(u(x)−U(x+t)) + φ(u(x)−U(x−t))`, with the cancellation for small `t`
/// carried out analytically while both points lie in the box.
fn pair_sum(p: f64, x: f64, t: f64, half: f64, far: f64) -> f64 {
    let ux = exact(x);
    if (x + t).abs() <= half && (x - t).abs() <= half {
        let a = -0.5 * t - 0.5 * (2.0 * x + t).cos() * t.sin();
        let b = 0.5 * t + 0.5 * (2.0 * x - t).cos() * t.sin();
        if a < 0.0 && b > 0.0 {
            let sum = (2.0 * x).sin() * t.sin().powi(2);
            return -b.powf(p - 1.0) * ((p - 1.0) * (-sum / b).ln_1p()).exp_m1();
        }
        return signed_pow(a, p) + signed_pow(b, p);
    }
    let big = |y: f64| if y.abs() <= half { exact(y) } else { far };
    signed_pow(ux - big(x + t), p) + signed_pow(ux - big(x - t), p)
}

/// `−(|u'|^{p−2}u')' + ∫_ℝ φ(u(x)−U(y))|x−y|^{−1−sp} dy` for the manufactured
/// solution, where `U` equals the solution on `[−half, half]` and `far` outside.
pub fn manufactured_rhs(p: f64, s: f64, x: f64, half: f64, far: f64) -> f64 {
    let d1 = exact_d1(x);
    let local = -(p - 1.0) * d1.abs().powf(p - 2.0) * exact_d2(x);
    let ux = exact(x);
    let sp = s * p;
    let integrand = |t: f64| if t == 0.0 { 0.0 } else { pair_sum(p, x, t, half, far) * t.powf(-1.0 - sp) };
    let (a, b) = ((half - x).min(half + x), (half - x).max(half + x));
    let mut nonlocal = 0.0;
    let mut lo = 0.0;
    let mut hi = a.min(1e-6);
    while hi < a {
        nonlocal += adaptive(integrand, lo, hi, 1e-15, 1e-13, 4000);
        lo = hi;
        hi = (hi * 4.0).min(a);
    }
    nonlocal += adaptive(integrand, lo, a, 1e-15, 1e-13, 4000);
    nonlocal += adaptive(integrand, a, b, 1e-15, 1e-13, 4000);
    nonlocal += 2.0 * signed_pow(ux - far, p) * b.powf(-sp) / sp;
    local + nonlocal
}

struct Run {
    error: f64,
    recovery: f64,
    residual: f64,
}

fn run(cfg: &ManufacturedConfig, ctx: &Context, p: f64, cells: usize) -> Result<Run> {
    let params = ParamSet::new(1, cfg.s, p)?;
    let grid = GridDomain::centered(1, cfg.half, cells)?.with_ball_interior(cfg.omega_radius)?;
    let spec = VectorFieldSpec::model(p);
    let kernel = ctx.kernel(&grid, &params)?;
    let truth = GridFunction::from_fn(&grid, Some(0.0), |x| exact(x[0]));
    let interior = grid.interior_nodes();
    let scale = interior.iter().map(|&k| truth.values[k].abs()).fold(0.0, f64::max);

    let loc = apply_local_p_laplacian(&truth, &grid, &spec)?;
    let frac = apply_fractional_p_laplacian(&truth, &grid, &kernel, p)?;
    let discrete = loc.add(&frac);
    let mu_h = Measure::from_density(&grid, discrete.clone())?;
    let res = residual(&truth, &mu_h, &truth, &grid, &params, &spec, &kernel)?;
    let res_norm = res.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mu_norm = interior.iter().map(|&k| discrete.values[k].abs()).fold(0.0, f64::max);

    let mut init = truth.clone();
    for &k in &interior {
        init.values[k] = 0.0;
    }
    let recovered = solve_dirichlet_from(&mu_h, &truth, &init, &grid, &params, &spec, &kernel, &ctx.solver)?.u;
    let mut density = vec![0.0; grid.len()];
    for &k in &interior {
        density[k] = manufactured_rhs(p, cfg.s, grid.node(k)[0], cfg.half, 0.0);
    }
    let mu = Measure::from_density(&grid, GridFunction::new(density, None)?)?;
    let u = solve_dirichlet_from(&mu, &truth, &init, &grid, &params, &spec, &kernel, &ctx.solver)?.u;
    let err = |v: &GridFunction| interior.iter().map(|&k| (v.values[k] - truth.values[k]).abs()).fold(0.0, f64::max) / scale;
    Ok(Run {
        error: err(&u),
        recovery: err(&recovered),
        residual: if mu_norm == 0.0 { res_norm } else { res_norm / mu_norm },
    })
}

pub fn exp_manufactured(cfg: &ManufacturedConfig, ctx: &Context) -> Result<ExperimentReport> {
    if cfg.ps.is_empty() || cfg.cells.len() != 2 {
        return Err(Error::InvalidParameter("manufactured check needs exponents and exactly two resolutions".into()));
    }
    if !(cfg.omega_radius < cfg.half) {
        return Err(Error::InvalidParameter("Ω must lie inside the box".into()));
    }
    let params = ParamSet::new(1, cfg.s, cfg.ps[0])?;
    let jobs: Vec<(f64, usize)> = cfg.ps.iter().flat_map(|&p| cfg.cells.iter().map(move |&c| (p, c))).collect();
    let runs = ctx.par_map(&jobs, |&(p, c)| run(cfg, ctx, p, c))?;
    let mut rep = ExperimentReport::new("manufactured", &params, "p", &ctx.provenance);
    let mut recovery = Vec::new();
    let mut residuals = Vec::new();
    for (i, &p) in cfg.ps.iter().enumerate() {
        let (coarse, fine) = (&runs[2 * i], &runs[2 * i + 1]);
        rep.push(p, fine.error, coarse.error);
        let gain = super::ratio(coarse.error, fine.error);
        rep.check_ge(&format!("error reduction at p={p}"), gain, cfg.min_ratio);
        for r in [coarse, fine] {
            rep.check_le(&format!("discrete residual at p={p}"), r.residual, 1e-12);
            rep.check_le(&format!("recovery error at p={p}"), r.recovery, cfg.recovery_tol);
            recovery.push(r.recovery);
            residuals.push(r.residual);
        }
    }
    rep.series.insert("recovery_error".into(), recovery);
    rep.series.insert("discrete_residual".into(), residuals);
    Ok(rep.finish())
}
