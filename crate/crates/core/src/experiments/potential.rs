use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_range, median, polynomial_from_terms, Context, ExperimentReport, Series, Status, Verdict,
};
use crate::error::{Error, Result};
use crate::fibers::exceptional_scan;
use crate::iteration::{depth_for_tail, green_value_at, orbit};
use crate::map::EndomorphismMap;
use crate::measures::fit_rate;
use crate::polynomial::{HomogeneousPolynomial, TermSpec};
use crate::projective::ProjectivePoint;
use crate::rng::{stream_rng, unit_sphere_point};

/// Irrational angular offset keeping grids off rational rotation orbits.
const GOLDEN: f64 = 0.618_033_988_749_894_9;
const ON_HYPERSURFACE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Grid {
    /// `count` points `[r e^{i theta_j} : 1]` with `theta_j = 2 pi (j + g) / count`.
    Circle {
        count: usize,
        #[serde(default = "unit")]
        radius: f64,
    },
    /// Every radius crossed with `angles` equally spaced (offset) angles.
    Annulus {
        radii: Vec<f64>,
        angles: usize,
    },
    /// `count^2` points `[e^{i s} : e^{i t} : 1]` on P^2.
    Torus {
        count: usize,
    },
    Points {
        points: Vec<ProjectivePoint>,
    },
}

fn unit() -> f64 {
    1.0
}

impl Grid {
    pub fn points(&self) -> Result<Vec<ProjectivePoint>> {
        let angle = |j: usize, count: usize| TAU * (j as f64 + GOLDEN) / count as f64;
        let one = Complex64::new(1.0, 0.0);
        match self {
            Grid::Circle { count, radius } => (0..*count)
                .map(|j| ProjectivePoint::affine(Complex64::from_polar(*radius, angle(j, *count))))
                .collect(),
            Grid::Annulus { radii, angles } => radii
                .iter()
                .flat_map(|r| {
                    (0..*angles).map(move |j| {
                        ProjectivePoint::affine(Complex64::from_polar(*r, angle(j, *angles)))
                    })
                })
                .collect(),
            Grid::Torus { count } => (0..*count)
                .flat_map(|i| {
                    (0..*count).map(move |j| {
                        ProjectivePoint::new(&[
                            Complex64::from_polar(1.0, angle(i, *count)),
                            Complex64::from_polar(1.0, angle(j, *count) + 0.5),
                            one,
                        ])
                    })
                })
                .collect(),
            Grid::Points { points } => Ok(points.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypersurfaceParams {
    /// Terms of `h`; defaults to `z - w` on P^1 and `z + w + t` on P^2.
    pub h: Option<Vec<TermSpec>>,
    /// Defaults to a 400-point unit circle on P^1 and a 30 x 30 torus on P^2.
    pub grid: Option<Grid>,
    pub n_min: u32,
    pub n_max: u32,
}

impl Default for HypersurfaceParams {
    fn default() -> Self {
        Self {
            h: None,
            grid: None,
            n_min: 1,
            n_max: 12,
        }
    }
}

fn term(exps: Vec<u32>, re: f64) -> TermSpec {
    TermSpec { exps, re, im: 0.0 }
}

fn default_h(dim: usize) -> Vec<TermSpec> {
    match dim {
        1 => vec![term(vec![1, 0], 1.0), term(vec![0, 1], -1.0)],
        _ => (0..=dim)
            .map(|i| {
                let mut e = vec![0; dim + 1];
                e[i] = 1;
                term(e, 1.0)
            })
            .collect(),
    }
}

/// `u(p) = q^{-1} log |h(p^)| - G(p^)` at the Euclidean-unit representative.
struct Potential<'a> {
    f: &'a EndomorphismMap,
    h: HomogeneousPolynomial,
    depth: usize,
}

impl Potential<'_> {
    fn new<'a>(
        f: &'a EndomorphismMap,
        terms: &Option<Vec<TermSpec>>,
        ctx: &Context,
    ) -> Result<Potential<'a>> {
        let terms = terms.clone().unwrap_or_else(|| default_h(f.dim()));
        let h = polynomial_from_terms(&terms, f.dim())?;
        let depth = depth_for_tail(f, ctx.tol.green_tail);
        Ok(Potential { f, h, depth })
    }

    /// `|h(p^)|` relative to the coefficient sum, which bounds it.
    fn relative_h(&self, p: &ProjectivePoint) -> f64 {
        self.h.eval(&p.unit_representative()).norm() / self.h.coefficient_sum()
    }

    fn eval(&self, p: &ProjectivePoint) -> Result<f64> {
        let hv = self.h.eval(&p.unit_representative()).norm();
        let g = green_value_at(self.f, p, self.depth)?.value;
        Ok(hv.ln() / self.h.degree() as f64 - g)
    }

    /// Whether `V = {h = 0}` passes through a known totally invariant point
    /// or a critical point flagged by the exceptional scan.
    fn excluded(&self, ctx: &Context) -> Result<bool> {
        let mut candidates = self.f.known_exceptional_points();
        if self.f.dim() == 1 {
            let tol = &ctx.tol;
            let lambda = tol.exceptional_lambda.min(self.f.degree() as f64 - 1e-9);
            for e in exceptional_scan(
                self.f,
                lambda,
                tol.exceptional_depth,
                self.f.critical_points(),
                tol,
            )? {
                if e.flagged {
                    candidates.push(e.point);
                }
            }
        }
        Ok(candidates
            .iter()
            .any(|p| self.relative_h(p) <= ON_HYPERSURFACE))
    }
}

pub fn exp_hypersurface(
    f: &EndomorphismMap,
    params: &HypersurfaceParams,
    ctx: &Context,
) -> Result<ExperimentReport> {
    check_range(params.n_min, params.n_max)?;
    let tol = &ctx.tol;
    let u = Potential::new(f, &params.h, ctx)?;
    let grid = match &params.grid {
        Some(g) => g.clone(),
        None if f.dim() == 1 => Grid::Circle {
            count: 400,
            radius: 1.0,
        },
        None => Grid::Torus { count: 30 },
    };
    let points = grid.points()?;
    if let Some(p) = points.iter().find(|p| p.dim() != f.dim()) {
        return Err(Error::config(
            "params.grid",
            format!("{p} does not lie in P^{}", f.dim()),
        ));
    }
    let usable: Vec<ProjectivePoint> = points
        .into_iter()
        .filter(|p| u.relative_h(p) >= tol.hypersurface_margin)
        .collect();
    if usable.is_empty() {
        return Err(Error::config(
            "params.grid",
            "every grid point lies too close to V",
        ));
    }
    let d = f.degree() as f64;
    let n_max = params.n_max as usize;
    // Per point: |d^-n u(f^n p)| for n in the range, or None if the orbit
    // comes within `pole_distance` of V.
    let traces: Vec<Option<Vec<f64>>> = usable
        .par_iter()
        .map(|p| -> Result<Option<Vec<f64>>> {
            let rec = orbit(f, p, n_max)?;
            if rec
                .points
                .iter()
                .any(|q| u.relative_h(q) < tol.pole_distance)
            {
                return Ok(None);
            }
            (params.n_min as usize..=n_max)
                .map(|n| Ok((u.eval(&rec.points[n])? / d.powi(n as i32)).abs()))
                .collect::<Result<Vec<f64>>>()
                .map(Some)
        })
        .collect::<Result<_>>()?;
    let survivors: Vec<&Vec<f64>> = traces.iter().flatten().collect();
    let survival = survivors.len() as f64 / usable.len() as f64;

    let mut report = ExperimentReport::new("hypersurface", &["median", "max", "survivors"], ctx);
    report.notes.push(format!(
        "{} grid points kept after the {} margin, {} dropped for approaching V",
        usable.len(),
        tol.hypersurface_margin,
        usable.len() - survivors.len()
    ));
    let ns: Vec<u32> = (params.n_min..=params.n_max).collect();
    let mut medians = Vec::new();
    for (j, n) in ns.iter().enumerate() {
        let col: Vec<f64> = survivors.iter().map(|t| t[j]).collect();
        let (med, max) = if col.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (median(&col), col.iter().copied().fold(0.0, f64::max))
        };
        report.row(*n as u64, "abs_potential", vec![med, max, col.len() as f64]);
        medians.push(med);
    }
    report.series.push(Series {
        tag: "median".into(),
        ns: ns.clone(),
        errors: medians.clone(),
    });
    report.verdicts.push(Verdict::check(
        "surviving grid fraction",
        survival >= tol.survival_fraction,
        survival,
        tol.survival_fraction,
    ));
    if survivors.is_empty() {
        return Ok(report);
    }
    if u.excluded(ctx)? {
        report.flags.push("excluded_case".into());
        let first = medians[0];
        let last = *medians.last().expect("nonempty");
        report.verdicts.push(Verdict::check(
            "excluded case: V meets the exceptional set, no decay of the median",
            last >= 0.5 * first,
            if first > 0.0 { last / first } else { f64::NAN },
            0.5,
        ));
        return Ok(report);
    }
    match fit_rate(&ns, &medians, tol.error_floor) {
        Ok(fit) => {
            report.verdicts.push(Verdict::check(
                "median decays geometrically",
                fit.fitted_rho >= tol.rate_threshold && fit.r_squared >= tol.r_squared_min,
                fit.fitted_rho,
                tol.rate_threshold,
            ));
            report.verdicts.push(Verdict::new(
                "median fit r_squared",
                Status::Report,
                fit.r_squared,
                tol.r_squared_min,
            ));
        }
        Err(_) => {
            let last = *medians.last().expect("nonempty");
            report.verdicts.push(Verdict::check(
                "median below the error floor",
                last <= tol.error_floor,
                last,
                tol.error_floor,
            ));
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentialParams {
    pub h: Option<Vec<TermSpec>>,
    pub samples: usize,
    /// Extra multiplier on the normalized potential.
    pub scale: f64,
    /// Mass safety factor: `u` is divided by `q (1 + safety)`.
    pub safety: f64,
    /// Number of seeds, `seed, seed + 1, ...`.
    pub seeds: u32,
}

impl Default for ExponentialParams {
    fn default() -> Self {
        Self {
            h: None,
            samples: 10_000,
            scale: 1.0,
            safety: 1.0,
            seeds: 3,
        }
    }
}

/// Report-only Monte Carlo estimate of the Fubini–Study integral of
/// `exp |v|` with `v = scale * u / (q (1 + safety))`. Sample `i` under seed
/// `s` is drawn from stream `i` of `s`.
pub fn exp_exponential_estimate(
    f: &EndomorphismMap,
    params: &ExponentialParams,
    ctx: &Context,
) -> Result<ExperimentReport> {
    if params.samples == 0 || params.seeds == 0 {
        return Err(Error::config(
            "params.samples",
            "samples and seeds must be positive",
        ));
    }
    let u = Potential::new(f, &params.h, ctx)?;
    let factor = params.scale / (u.h.degree() as f64 * (1.0 + params.safety));
    let mut report = ExperimentReport::new(
        "exponential_estimate",
        &["estimate", "std_error", "skipped"],
        ctx,
    );
    let mut estimates = Vec::new();
    for s in 0..params.seeds {
        let seed = ctx.seed.wrapping_add(s as u64);
        let vals: Vec<Option<f64>> = (0..params.samples)
            .into_par_iter()
            .map(|i| -> Result<Option<f64>> {
                let mut rng = stream_rng(seed, i as u64);
                let z = unit_sphere_point(&mut rng, f.dim() + 1);
                let p = ProjectivePoint::new(&z)?;
                if factor == 0.0 {
                    return Ok(Some(1.0));
                }
                let v = u.eval(&p)? * factor;
                Ok(v.is_finite().then(|| v.abs().exp()))
            })
            .collect::<Result<_>>()?;
        let kept: Vec<f64> = vals.iter().flatten().copied().collect();
        let k = kept.len() as f64;
        let mean = kept.iter().sum::<f64>() / k;
        let var = kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
        report.row(
            s as u64,
            format!("seed_{seed}"),
            vec![mean, (var / k).sqrt(), (vals.len() - kept.len()) as f64],
        );
        estimates.push(mean);
    }
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let hi = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = estimates.iter().copied().fold(f64::INFINITY, f64::min);
    report.verdicts.push(Verdict::new(
        "mean estimate",
        Status::Report,
        mean,
        f64::NAN,
    ));
    report.verdicts.push(Verdict::new(
        "relative spread across seeds",
        Status::Report,
        (hi - lo) / mean,
        0.1,
    ));
    Ok(report)
}
