//! Excess decay of the flux `A(Du)` for measure data when `p >= 2`.

use serde::{Deserialize, Serialize};

use super::{audit, fit, model_field, normalized_tail, Context, ExperimentReport, ExteriorData, MeasureSpec, Scene};
use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::grid::{excess, gradient, Ball};
use crate::measure::{mollify_measure, tv_on_ball};
use crate::numeric::norm2;
use crate::params::{DecayExponents, ParamSet};
use crate::solver::solve_dirichlet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AExcessConfig {
    pub params: ParamSet,
    pub scene: Scene,
    /// Enlargement factor `M` of the outer ball `B_{Mr}`.
    pub m_factor: f64,
    pub r: f64,
    /// Radii `Mr 2^{−k}`, `k = 1..=levels`.
    pub levels: usize,
    /// Exponent of the measure term; defaults to `n`.
    pub eta: Option<f64>,
    pub eps1: Option<f64>,
    /// Largest admissible growth factor between consecutive excesses.
    pub max_growth: f64,
}

impl Default for AExcessConfig {
    fn default() -> Self {
        AExcessConfig {
            params: ParamSet::new(2, 0.5, 2.0).expect("valid defaults"),
            scene: Scene::unit(
                2,
                128,
                ExteriorData::zero(),
                MeasureSpec::Bump {
                    center: [0.1, 0.0],
                    radius: 0.25,
                    mass: 1.0,
                },
            ),
            m_factor: 8.0,
            r: 0.1,
            levels: 4,
            eta: None,
            eps1: None,
            max_growth: 1.2,
        }
    }
}

pub fn exp_a_excess_decay_measure(cfg: &AExcessConfig, ctx: &Context) -> Result<ExperimentReport> {
    let params = &cfg.params;
    params.validate()?;
    cfg.scene.validate()?;
    let (n, s, p) = (params.n as f64, params.s, params.p);
    if p < 2.0 {
        return Err(Error::InvalidParameter(format!("the flux excess experiment requires p >= 2, got {p}")));
    }
    if cfg.levels < 2 {
        return Err(Error::InvalidParameter("at least two radii are required".into()));
    }
    let eps1 = cfg.eps1.unwrap_or_else(|| DecayExponents::default_eps1(s, p, DecayExponents::DEFAULT_SIGMA));
    DecayExponents::new(params, None, eps1, DecayExponents::DEFAULT_SIGMA)?;
    let eta = cfg.eta.unwrap_or(n);
    let big_r = cfg.m_factor * cfg.r;
    let radii: Vec<f64> = (1..=cfg.levels).map(|k| big_r * 0.5f64.powi(k as i32)).collect();
    let mut rep = ExperimentReport::new("a_excess", params, "radius", &ctx.provenance);
    if cfg.scene.measure.is_zero() && cfg.scene.exterior.is_affine() {
        for &rho in &radii {
            rep.push(rho, 0.0, 0.0);
        }
        rep.notes.push("zero measure and affine data: the flux is constant".into());
        rep.check_flag("excesses vanish", true);
        return Ok(rep.finish());
    }

    let grid = cfg.scene.grid.build(None)?;
    let g = cfg.scene.exterior_on(&grid);
    let mut mu = cfg.scene.measure.build(&grid)?;
    if !mu.atoms.is_empty() {
        mu = mollify_measure(&mu, 2.0 * grid.h(), &grid, ctx.sola.shape)?;
    }
    let kernel = ctx.kernel(&grid, params)?;
    let u = solve_dirichlet(&mu, &g, &grid, params, &VectorFieldSpec::model(p), &kernel, &ctx.solver)?.u;
    let flux = model_field(&gradient(&grid, &u), p);
    let c = cfg.scene.center;
    let outer = Ball::new(c, big_r)?;

    let lhs: Vec<f64> = radii
        .iter()
        .map(|&rho| excess(&grid, &flux, &Ball::new(c, rho)?))
        .collect::<Result<_>>()?;
    let e_outer = excess(&grid, &flux, &outer)?;
    let flux_mean = crate::grid::ball_mean_by(&grid, &outer, |k| norm2(flux[k]))?;
    let tail = normalized_tail(&grid, &u, &outer, p, s)?;
    let mass = tv_on_ball(&mu, &outer);

    let f = rep.record_fit(fit(&radii, &lhs), &ctx.thresholds);
    let beta = f.map_or(0.0, |f| f.slope.max(0.0));
    for (&rho, &e) in radii.iter().zip(&lhs) {
        let q = big_r / rho;
        let rhs = (rho / big_r).powf(beta) * (e_outer + big_r.powf(eps1) * flux_mean)
            + q.powf(n) * big_r.powf(1.0 - (p - 1.0) * eps1) * tail.powf(p - 1.0)
            + q.powf(eta) * mass / big_r.powf(n - 1.0);
        rep.push(rho, e, rhs);
    }
    if let Some(f) = f {
        rep.check_ge("excess decay exponent", f.slope, f64::MIN_POSITIVE);
    }
    let growth = lhs.windows(2).map(|w| super::ratio(w[1], w[0])).fold(0.0, f64::max);
    rep.check_le("largest growth between radii", growth, cfg.max_growth);
    rep.series.insert("outer_terms".into(), vec![e_outer, flux_mean, tail, mass]);

    let mut pairs: Vec<(f64, f64)> = radii
        .iter()
        .zip(&lhs)
        .map(|(&rho, &e)| (e, audit::excess(&grid, |k| audit::model_flux_at(&grid, &u, k, p), c, rho)))
        .collect();
    pairs.push((e_outer, audit::excess(&grid, |k| audit::model_flux_at(&grid, &u, k, p), c, big_r)));
    pairs.push((tail, audit::normalized_tail(&grid, &u, c, big_r, p, s)));
    rep.audit(audit::discrepancy(&pairs));
    Ok(rep.finish())
}
