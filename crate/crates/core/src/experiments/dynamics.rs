use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{affine, check_range, level_pairings, Context, ExperimentReport, Status, Verdict};
use crate::error::{Error, Result};
use crate::fibers::{backward_orbit, exceptional_scan, FiberMode};
use crate::map::{evaluate_map, EndomorphismMap};
use crate::measures::{ensure_not_exceptional, TestFunctionSpec};
use crate::projective::{chordal, fs_distance, ProjectivePoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixingParams {
    pub phi: TestFunctionSpec,
    pub psi: TestFunctionSpec,
    pub n_min: u32,
    pub n_max: u32,
    pub samples: usize,
    pub burn_in: u32,
    pub start: ProjectivePoint,
}

impl Default for MixingParams {
    fn default() -> Self {
        Self {
            phi: TestFunctionSpec::TrigMoment { m: 1 },
            psi: TestFunctionSpec::TrigMoment { m: 1 },
            n_min: 1,
            n_max: 8,
            samples: 10_000,
            burn_in: 50,
            start: affine(2.0),
        }
    }
}

/// Correlation `<mu, phi (psi o f^n)> - <mu, phi><mu, psi>` estimated over
/// independent inverse-iteration chains; chain `i` uses stream `i` of the
/// run seed. The band is `mixing_sigmas` standard errors of the sample
/// covariance.
pub fn exp_mixing(
    f: &EndomorphismMap,
    params: &MixingParams,
    ctx: &Context,
) -> Result<ExperimentReport> {
    check_range(params.n_min, params.n_max)?;
    if params.samples < 2 {
        return Err(Error::config("params.samples", "need at least 2 samples"));
    }
    let tol = &ctx.tol;
    ensure_not_exceptional(f, &params.start, tol)?;
    let phi = params.phi.build(f.dim())?;
    let psi = params.psi.build(f.dim())?;
    let mode = FiberMode::Sampled {
        count: params.samples,
        seed: ctx.seed,
    };
    let cloud = backward_orbit(f, &params.start, params.burn_in, mode, tol)?;
    let mut points: Vec<ProjectivePoint> = cloud.atoms.into_iter().map(|(p, _)| p).collect();
    let a: Vec<f64> = points.par_iter().map(|p| phi.eval(p)).collect();
    let count = a.len() as f64;
    let a_mean = a.iter().sum::<f64>() / count;

    let mut report = ExperimentReport::new("mixing", &["correlation", "sigma", "band"], ctx);
    let tag = format!("{} x {}", phi.label(), psi.label());
    let mut series = Vec::new();
    for n in 0..=params.n_max {
        if n > 0 {
            points = points
                .par_iter()
                .map(|p| evaluate_map(f, p).map(|(q, _)| q))
                .collect::<Result<_>>()?;
        }
        if n < params.n_min {
            continue;
        }
        let b: Vec<f64> = points.par_iter().map(|p| psi.eval(p)).collect();
        let b_mean = b.iter().sum::<f64>() / count;
        let t: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - a_mean) * (y - b_mean))
            .collect();
        let corr = t.iter().sum::<f64>() / count;
        let var = t.iter().map(|v| (v - corr).powi(2)).sum::<f64>() / (count - 1.0);
        let sigma = (var / count).sqrt();
        let band = (tol.mixing_sigmas * sigma).max(tol.error_floor);
        report.row(n as u64, tag.clone(), vec![corr, sigma, band]);
        series.push((n, corr, band));
    }
    let &(n_max, corr_last, band_last) = series.last().expect("nonempty range");
    report.verdicts.push(Verdict::check(
        format!(
            "correlation within {} sigma of 0 at n = {n_max}",
            tol.mixing_sigmas
        ),
        corr_last.abs() <= band_last,
        corr_last.abs(),
        band_last,
    ));
    let outside = series.iter().filter(|(_, c, b)| c.abs() > *b).count();
    report.verdicts.push(Verdict::new(
        format!(
            "depths with correlation outside {} sigma",
            tol.mixing_sigmas
        ),
        Status::Report,
        outside as f64,
        0.0,
    ));
    let increases = series
        .windows(2)
        .filter(|w| w[0].0 >= 3 && w[1].1.abs() > w[0].1.abs() + w[1].2)
        .count();
    report.verdicts.push(Verdict::new(
        "increases of |correlation| beyond n = 3 exceeding the band",
        Status::Report,
        increases as f64,
        0.0,
    ));
    report.series.push(super::Series {
        tag,
        ns: series.iter().map(|s| s.0).collect(),
        errors: series.iter().map(|s| s.1.abs()).collect(),
    });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolderModulusParams {
    pub phi: TestFunctionSpec,
    /// Each anchor `x` is paired with `x e^{i t}` for every offset `t`.
    pub anchors: Vec<ProjectivePoint>,
    pub offsets: Vec<f64>,
    pub n_min: u32,
    pub n_max: u32,
}

impl Default for HolderModulusParams {
    fn default() -> Self {
        Self {
            phi: TestFunctionSpec::Bump {
                center: affine(1.0),
                radius: 0.5,
            },
            anchors: [0.3, 0.7, 1.9, 3.1, 4.4]
                .iter()
                .map(|t| ProjectivePoint::affine(Complex64::from_polar(1.0, *t)).expect("finite"))
                .collect(),
            offsets: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            n_min: 0,
            n_max: 6,
        }
    }
}

const EXCEPTIONAL_CLEARANCE: f64 = 0.1;

fn rotate(p: &ProjectivePoint, t: f64) -> Result<ProjectivePoint> {
    let c = p.coords();
    ProjectivePoint::new(&[c[0] * Complex64::from_polar(1.0, t), c[1]])
}

/// Report-only: for each depth, the exponent `beta` in
/// `|g_n(x) - g_n(y)| ~ dist(x, y)^beta` with `g_n = d^{-n} Lambda^n phi`.
pub fn exp_holder_modulus(
    f: &EndomorphismMap,
    params: &HolderModulusParams,
    ctx: &Context,
) -> Result<ExperimentReport> {
    check_range(params.n_min, params.n_max)?;
    let tol = &ctx.tol;
    if f.dim() != 1 {
        return Err(Error::NotSupported("holder_modulus runs on P^1".into()));
    }
    let phi = params.phi.build(1)?;
    let mut avoid = f.known_exceptional_points();
    let lambda = tol.exceptional_lambda.min(f.degree() as f64 - 1e-9);
    for entry in exceptional_scan(f, lambda, tol.exceptional_depth, f.critical_points(), tol)? {
        if entry.flagged {
            avoid.push(entry.point);
        }
    }
    let mut pairs = Vec::new();
    for (i, x) in params.anchors.iter().enumerate() {
        for t in &params.offsets {
            let y = rotate(x, *t)?;
            for p in [x, &y] {
                if avoid
                    .iter()
                    .any(|e| chordal(e.coords(), p.coords()) < EXCEPTIONAL_CLEARANCE)
                {
                    return Err(Error::config(
                        format!("params.anchors[{i}]"),
                        format!("{p} lies within {EXCEPTIONAL_CLEARANCE} of an exceptional point"),
                    ));
                }
            }
            let dist = fs_distance(x, &y)?;
            pairs.push((x.clone(), y, dist));
        }
    }
    let mut report = ExperimentReport::new(
        "holder_modulus",
        &["exponent", "r_squared", "pairs_used", "max_difference"],
        ctx,
    );
    let obs: &(dyn Fn(&ProjectivePoint) -> f64 + Sync) = &|p| phi.eval(p);
    let mut exponents = Vec::new();
    for n in params.n_min..=params.n_max {
        let g = |p: &ProjectivePoint| -> Result<f64> {
            let cloud = backward_orbit(f, p, n, FiberMode::Exact, tol)?;
            Ok(level_pairings(&cloud.atoms, &[obs])[0])
        };
        let mut pts = Vec::new();
        let mut max_diff = 0.0f64;
        for (x, y, dist) in &pairs {
            let diff = (g(x)? - g(y)?).abs();
            max_diff = max_diff.max(diff);
            if diff > tol.error_floor && *dist > 0.0 {
                pts.push((dist.ln(), diff.ln()));
            }
        }
        let (beta, r2) = loglog_fit(&pts);
        report.row(
            n as u64,
            phi.label(),
            vec![beta, r2, pts.len() as f64, max_diff],
        );
        exponents.push(beta);
    }
    report.verdicts.push(Verdict::new(
        format!("Holder exponent at n = {}", params.n_min),
        Status::Report,
        exponents[0],
        1.0,
    ));
    let increases = exponents
        .windows(2)
        .filter(|w| w[1].is_finite() && w[0].is_finite() && w[1] > w[0])
        .count();
    report.verdicts.push(Verdict::new(
        "increases of the fitted exponent with n",
        Status::Report,
        increases as f64,
        0.0,
    ));
    Ok(report)
}

/// Least-squares slope and R^2; NaN with fewer than two distinct abscissae.
fn loglog_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let k = pts.len() as f64;
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).min(1.0)
    } else {
        1.0
    };
    (slope, r2)
}
