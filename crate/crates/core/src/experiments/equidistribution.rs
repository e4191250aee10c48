use serde::{Deserialize, Serialize};

use super::{
    affine, build_test_functions, check_range, level_pairings, reference_pairings, Context,
    ExperimentReport, ReferenceSpec, Series, Status, Verdict,
};
use crate::error::{Error, Result};
use crate::fibers::{backward_orbit_levels, exceptional_scan, sample_path};
use crate::map::{evaluate_map, EndomorphismMap};
use crate::measures::{
    ensure_not_exceptional, fit_rate, FamilyTag, RateFit, RateRow, Region, TestFunction,
    TestFunctionSpec,
};
use crate::projective::{chordal, ProjectivePoint};

type Observable<'a> = Box<dyn Fn(&ProjectivePoint) -> f64 + Sync + 'a>;

fn observables(phis: &[TestFunction]) -> Vec<Observable<'_>> {
    phis.iter()
        .map(|phi| Box::new(move |p: &ProjectivePoint| phi.eval(p)) as Observable<'_>)
        .collect()
}

fn refs<'a>(obs: &'a [Observable<'a>]) -> Vec<&'a (dyn Fn(&ProjectivePoint) -> f64 + Sync)> {
    obs.iter().map(|b| b.as_ref()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquidistributionParams {
    pub base: ProjectivePoint,
    /// Defaults depend on the map; see the crate README.
    pub phis: Option<Vec<TestFunctionSpec>>,
    pub n_min: u32,
    pub n_max: u32,
    pub reference: ReferenceSpec,
}

impl Default for EquidistributionParams {
    fn default() -> Self {
        Self {
            base: affine(2.0),
            phis: None,
            n_min: 1,
            n_max: 12,
            reference: ReferenceSpec::default(),
        }
    }
}

/// `e_n(phi)` for every depth in `n_min..=n_max` of the exact fibers over `base`.
fn fiber_errors(
    f: &EndomorphismMap,
    base: &ProjectivePoint,
    n_min: u32,
    n_max: u32,
    phis: &[TestFunction],
    reference: &[f64],
    ctx: &Context,
) -> Result<Vec<Vec<f64>>> {
    let obs = observables(phis);
    let obs = refs(&obs);
    let mut errors = vec![Vec::new(); phis.len()];
    backward_orbit_levels(f, base, n_max, &ctx.tol, |depth, atoms| {
        if depth >= n_min {
            for (k, v) in level_pairings(atoms, &obs).into_iter().enumerate() {
                errors[k].push((v - reference[k]).abs());
            }
        }
        Ok(())
    })?;
    Ok(errors)
}

pub fn exp_point_equidistribution(
    f: &EndomorphismMap,
    params: &EquidistributionParams,
    ctx: &Context,
) -> Result<ExperimentReport> {
    check_range(params.n_min, params.n_max)?;
    let tol = &ctx.tol;
    ensure_not_exceptional(f, &params.base, tol)?;
    let phis = build_test_functions(f, &params.phis)?;
    let obs = observables(&phis);
    let reference = reference_pairings(f, &params.reference, params.n_max + 2, &refs(&obs), tol)?;
    let errors = fiber_errors(
        f,
        &params.base,
        params.n_min,
        params.n_max,
        &phis,
        &reference.values,
        ctx,
    )?;

    let mut report = ExperimentReport::new(
        "point_equidistribution",
        &["alpha", "error", "fitted_rho", "r_squared"],
        ctx,
    );
    report.reference_gap = Some(reference.max_gap());
    report.notes.push(format!(
        "reference: exact fiber over {} at depth {}",
        params.reference.base, reference.depth
    ));
    let ns: Vec<u32> = (params.n_min..=params.n_max).collect();
    let mut holder: Vec<(f64, f64)> = Vec::new();
    for (k, phi) in phis.iter().enumerate() {
        let tag = phi.label();
        let errs = &errors[k];
        let fit = fit_rate(&ns, errs, tol.error_floor).ok();
        for (n, e) in ns.iter().zip(errs) {
            let (rho, r2) = fit
                .as_ref()
                .map_or((f64::NAN, f64::NAN), |r| (r.fitted_rho, r.r_squared));
            report.row(*n as u64, tag.clone(), vec![phi.alpha, *e, rho, r2]);
            report.rate_rows.push(RateRow {
                experiment_id: report.experiment_id.clone(),
                n: *n,
                phi_tag: tag.clone(),
                alpha: phi.alpha,
                error: *e,
                fitted_rho: fit.as_ref().map(|r| r.fitted_rho),
                r_squared: fit.as_ref().map(|r| r.r_squared),
            });
        }
        report.series.push(Series {
            tag: tag.clone(),
            ns: ns.clone(),
            errors: errs.clone(),
        });
        report.verdicts.push(decay_verdict(
            &tag,
            errs,
            fit.as_ref(),
            reference.gaps[k],
            ctx,
        ));
        if let (FamilyTag::HolderKernel { .. }, Some(fit)) = (&phi.tag, &fit) {
            holder.push((phi.alpha, fit.fitted_rho.ln()));
        }
    }
    if holder.len() >= 2 {
        holder.sort_by(|a, b| a.0.total_cmp(&b.0));
        let worst = holder
            .windows(2)
            .map(|w| w[1].1 - w[0].1)
            .fold(f64::INFINITY, f64::min);
        report.verdicts.push(Verdict::check(
            "alpha scaling: fitted log-rate nondecreasing in alpha",
            worst >= 0.0,
            worst,
            0.0,
        ));
    }
    Ok(report)
}

/// Geometric decay verdict for one observable.
fn decay_verdict(
    tag: &str,
    errs: &[f64],
    fit: Option<&RateFit>,
    gap: f64,
    ctx: &Context,
) -> Verdict {
    let tol = &ctx.tol;
    let label = format!("geometric decay {tag}");
    let last = *errs.last().expect("nonempty range");
    match fit {
        None if last <= tol.error_floor => {
            // At most two depths resolve an error above the floor.
            Verdict::new(label, Status::Pass, last, tol.error_floor)
        }
        None => Verdict::new(label, Status::Inconclusive, last, tol.error_floor),
        Some(fit) => {
            let min_used = errs
                .iter()
                .copied()
                .filter(|e| *e > tol.error_floor)
                .fold(f64::INFINITY, f64::min);
            let ok = fit.fitted_rho >= tol.rate_threshold && fit.r_squared >= tol.r_squared_min;
            Verdict::check(label, ok, fit.fitted_rho, tol.rate_threshold)
                .inconclusive_unless(gap < min_used)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExceptionalParams {
    pub base: ProjectivePoint,
    pub phis: Option<Vec<TestFunctionSpec>>,
    pub n_min: u32,
    pub n_max: u32,
    pub reference: ReferenceSpec,
}

impl Default for ExceptionalParams {
    fn default() -> Self {
        Self {
            base: affine(0.0),
            phis: Some(vec![
                TestFunctionSpec::Bump {
                    center: affine(0.0),
                    radius: 0.5,
                },
                TestFunctionSpec::Constant { value: 1.0 },
            ]),
            n_min: 1,
            n_max: 8,
            reference: ReferenceSpec::default(),
        }
    }
}

pub fn exp_exceptional(
    f: &EndomorphismMap,
    params: &ExceptionalParams,
    ctx: &Context,
) -> Result<ExperimentReport> {
    check_range(params.n_min, params.n_max)?;
    let tol = &ctx.tol;
    let phis = build_test_functions(f, &params.phis)?;
    let obs = observables(&phis);
    let reference = reference_pairings(f, &params.reference, params.n_max + 2, &refs(&obs), tol)?;
    let errors = fiber_errors(
        f,
        &params.base,
        params.n_min,
        params.n_max,
        &phis,
        &reference.values,
        ctx,
    )?;
    let mut report =
        ExperimentReport::new("exceptional", &["alpha", "error", "relative_spread"], ctx);
    report.reference_gap = Some(reference.max_gap());
    let ns: Vec<u32> = (params.n_min..=params.n_max).collect();
    for (k, phi) in phis.iter().enumerate() {
        let tag = phi.label();
        let errs = &errors[k];
        let first = errs[0];
        let hi = errs.iter().copied().fold(0.0, f64::max);
        let lo = errs.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
        for (n, e) in ns.iter().zip(errs) {
            report.row(*n as u64, tag.clone(), vec![phi.alpha, *e, spread]);
        }
        report.series.push(Series {
            tag: tag.clone(),
            ns: ns.clone(),
            errors: errs.clone(),
        });
        if first <= tol.error_floor {
            report.verdicts.push(Verdict::new(
                format!("{tag} does not separate the base from the reference"),
                Status::Report,
                first,
                tol.error_floor,
            ));
            continue;
        }
        let gap_ok = reference.gaps[k] < 0.5 * first;
        report.verdicts.push(
            Verdict::check(
                format!("no convergence {tag}: min e_n >= e_{} / 2", params.n_min),
                lo >= 0.5 * first,
                lo / first,
                0.5,
            )
            .inconclusive_unless(gap_ok),
        );
        report.verdicts.push(Verdict::new(
            format!("relative spread of e_n {tag}"),
            Status::Report,
            spread,
            0.0,
        ));
    }
    if f.dim() == 1 {
        let d = f.degree() as f64;
        let lambda = tol.exceptional_lambda.min(d - 1e-9);
        let scan = exceptional_scan(
            f,
            lambda,
            tol.exceptional_depth,
            std::slice::from_ref(&params.base),
            tol,
        )?;
        let entry = &scan[0];
        report.row(
            tol.exceptional_depth as u64,
            "scan_rate",
            vec![f64::NAN, entry.rate, 0.0],
        );
        report.verdicts.push(Verdict::check(
            format!(
                "exceptional_scan flags the base at depth {}",
                tol.exceptional_depth
            ),
            entry.flagged,
            entry.rate,
            d / lambda,
        ));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountingParams {
    pub base_a: ProjectivePoint,
    pub base_b: ProjectivePoint,
    pub regions: Vec<Region>,
    pub n_min: u32,
    pub n_max: u32,
    pub reference: ReferenceSpec,
}

impl Default for CountingParams {
    fn default() -> Self {
        Self {
            base_a: affine(2.0),
            base_b: affine(3.0),
            regions: vec![
                Region::Sector {
                    center_angle: 0.3,
                    half_width: std::f64::consts::FRAC_PI_4,
                },
                Region::Everything,
            ],
            n_min: 4,
            n_max: 12,
            reference: ReferenceSpec::default(),
        }
    }
}

pub fn exp_counting(
    f: &EndomorphismMap,
    params: &CountingParams,
    ctx: &Context,
) -> Result<ExperimentReport> {
    check_range(params.n_min, params.n_max)?;
    if params.regions.is_empty() {
        return Err(Error::config(
            "params.regions",
            "at least one region is required",
        ));
    }
    let tol = &ctx.tol;
    ensure_not_exceptional(f, &params.base_a, tol)?;
    ensure_not_exceptional(f, &params.base_b, tol)?;
    let shell = tol.boundary_shell;
    let mut obs: Vec<Observable<'_>> = Vec::new();
    for region in &params.regions {
        obs.push(Box::new(
            move |p: &ProjectivePoint| {
                if region.contains(p) {
                    1.0
                } else {
                    0.0
                }
            },
        ));
    }
    let reference = reference_pairings(f, &params.reference, params.n_max + 2, &refs(&obs), tol)?;

    let counts = |base: &ProjectivePoint| -> Result<Vec<Vec<(u64, u64, u64)>>> {
        // Per region and depth: (inside, boundary shell, total).
        let mut out = vec![Vec::new(); params.regions.len()];
        backward_orbit_levels(f, base, params.n_max, tol, |depth, atoms| {
            if depth < params.n_min {
                return Ok(());
            }
            let total: u64 = atoms.iter().map(|(_, w)| w).sum();
            for (k, region) in params.regions.iter().enumerate() {
                let mut inside = 0;
                let mut edge = 0;
                for (p, w) in atoms {
                    match region.margin(p) {
                        Some(m) if m > 0.0 => {
                            inside += w;
                            if m < shell {
                                edge += w;
                            }
                        }
                        Some(m) if m > -shell => edge += w,
                        _ => {}
                    }
                }
                out[k].push((inside, edge, total));
            }
            Ok(())
        })?;
        Ok(out)
    };
    let a = counts(&params.base_a)?;
    let b = counts(&params.base_b)?;

    let mut report = ExperimentReport::new(
        "counting",
        &[
            "count_a",
            "count_b",
            "ratio",
            "fraction_a",
            "normalized_a",
            "normalized_b",
            "shell_fraction",
            "mu_ref",
        ],
        ctx,
    );
    report.reference_gap = Some(reference.max_gap());
    let eps = tol.count_ratio_tolerance;
    for (k, region) in params.regions.iter().enumerate() {
        let tag = region.label();
        let mu = reference.values[k];
        let mut last = None;
        for (j, n) in (params.n_min..=params.n_max).enumerate() {
            let (ca, ea, total) = a[k][j];
            let (cb, eb, _) = b[k][j];
            let ratio = if cb > 0 {
                ca as f64 / cb as f64
            } else {
                f64::NAN
            };
            let norm_a = ca as f64 / (mu * total as f64);
            let norm_b = cb as f64 / (mu * total as f64);
            let shell_frac = if ca + cb > 0 {
                (ea + eb) as f64 / (ca + cb) as f64
            } else {
                0.0
            };
            report.row(
                n as u64,
                tag.clone(),
                vec![
                    ca as f64,
                    cb as f64,
                    ratio,
                    ca as f64 / total as f64,
                    norm_a,
                    norm_b,
                    shell_frac,
                    mu,
                ],
            );
            last = Some((ratio, norm_a, norm_b, shell_frac));
        }
        let (ratio, norm_a, norm_b, shell_frac) = last.expect("nonempty range");
        if mu <= 0.0 {
            report.verdicts.push(Verdict::new(
                format!("{tag}: reference mass is zero"),
                Status::Report,
                mu,
                0.0,
            ));
            continue;
        }
        let boundary_ok = shell_frac < tol.boundary_fraction;
        report.verdicts.push(Verdict::check(
            format!(
                "{tag}: boundary shell below {} of interior",
                tol.boundary_fraction
            ),
            boundary_ok,
            shell_frac,
            tol.boundary_fraction,
        ));
        let reliable = boundary_ok && reference.gaps[k] < eps * mu;
        report.verdicts.push(
            Verdict::check(
                format!(
                    "{tag}: count ratio within 1 +- {eps} at n = {}",
                    params.n_max
                ),
                (ratio - 1.0).abs() <= eps,
                ratio,
                eps,
            )
            .inconclusive_unless(reliable),
        );
        let worst = if (norm_a - 1.0).abs() >= (norm_b - 1.0).abs() {
            norm_a
        } else {
            norm_b
        };
        report.verdicts.push(
            Verdict::check(
                format!(
                    "{tag}: normalized count within 1 +- {eps} at n = {}",
                    params.n_max
                ),
                (worst - 1.0).abs() <= eps,
                worst,
                eps,
            )
            .inconclusive_unless(reliable),
        );
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BirkhoffStart {
    /// Endpoint of a backward random walk of `n_total + burn_in` steps from
    /// `from`; its forward orbit is the walk read in reverse.
    Sampled { from: ProjectivePoint, burn_in: u32 },
    /// Forward orbit of a given point.
    Given { point: ProjectivePoint },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BirkhoffParams {
    pub start: BirkhoffStart,
    pub phis: Option<Vec<TestFunctionSpec>>,
    pub checkpoints: Vec<u32>,
    pub reference: ReferenceSpec,
}

impl Default for BirkhoffParams {
    fn default() -> Self {
        Self {
            start: BirkhoffStart::Sampled {
                from: affine(2.0),
                burn_in: 50,
            },
            phis: None,
            checkpoints: vec![10, 100, 1000, 10_000],
            reference: ReferenceSpec {
                depth: Some(14),
                ..ReferenceSpec::default()
            },
        }
    }
}

/// Periodic forward orbits are not generic for the equilibrium measure.
const PERIOD_SCAN: usize = 64;
const PERIOD_TOLERANCE: f64 = 1e-9;

pub fn exp_birkhoff(
    f: &EndomorphismMap,
    params: &BirkhoffParams,
    ctx: &Context,
) -> Result<ExperimentReport> {
    let tol = &ctx.tol;
    let mut checkpoints = params.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let n_total = *checkpoints.last().ok_or_else(|| {
        Error::config("params.checkpoints", "at least one checkpoint is required")
    })?;
    if checkpoints[0] == 0 {
        return Err(Error::config(
            "params.checkpoints",
            "checkpoints must be positive",
        ));
    }
    let phis = build_test_functions(f, &params.phis)?;
    let obs = observables(&phis);
    let reference = reference_pairings(f, &params.reference, 14, &refs(&obs), tol)?;

    let mut report = ExperimentReport::new("birkhoff", &["alpha", "average", "error"], ctx);
    report.reference_gap = Some(reference.max_gap());
    let orbit: Vec<ProjectivePoint> = match &params.start {
        BirkhoffStart::Sampled { from, burn_in } => {
            ensure_not_exceptional(f, from, tol)?;
            let mut path = sample_path(f, from, n_total + burn_in, ctx.seed, 0, tol)?;
            path.reverse();
            path.truncate(n_total as usize);
            path
        }
        BirkhoffStart::Given { point } => {
            let mut orbit = Vec::with_capacity(n_total as usize);
            orbit.push(point.clone());
            for _ in 1..n_total {
                let next = evaluate_map(f, orbit.last().expect("nonempty"))?.0;
                orbit.push(next);
            }
            let periodic = orbit
                .iter()
                .skip(1)
                .take(PERIOD_SCAN)
                .any(|q| chordal(q.coords(), orbit[0].coords()) <= PERIOD_TOLERANCE);
            if periodic {
                report.flags.push("non_generic_start".into());
                report
                    .notes
                    .push(format!("{point} is periodic; its orbit average is atomic"));
            }
            orbit
        }
    };
    let generic = report.flags.is_empty();
    report.notes.push(format!("start of orbit: {}", orbit[0]));

    for (k, phi) in phis.iter().enumerate() {
        let tag = phi.label();
        let values: Vec<f64> = orbit.iter().map(|p| phi.eval(p)).collect();
        let mut errs = Vec::new();
        let mut sum = 0.0;
        let mut next = 0;
        for (j, v) in values.iter().enumerate() {
            sum += v;
            if next < checkpoints.len() && j + 1 == checkpoints[next] as usize {
                let avg = sum / (j + 1) as f64;
                let err = (avg - reference.values[k]).abs();
                report.row(
                    checkpoints[next] as u64,
                    tag.clone(),
                    vec![phi.alpha, avg, err],
                );
                errs.push(err);
                next += 1;
            }
        }
        report.series.push(Series {
            tag: tag.clone(),
            ns: checkpoints.clone(),
            errors: errs.clone(),
        });
        let last = *errs.last().expect("nonempty");
        if errs.iter().all(|e| *e <= tol.error_floor) {
            report.verdicts.push(Verdict::new(
                format!("{tag}: orbit average exact"),
                Status::Pass,
                last,
                tol.error_floor,
            ));
            continue;
        }
        // Compare the largest checkpoint with the one at or below n_total / 100.
        let earlier = checkpoints
            .iter()
            .rposition(|c| *c as u64 * 100 <= n_total as u64)
            .unwrap_or(0);
        let ok = last < errs[earlier];
        report.verdicts.push(
            Verdict::check(
                format!(
                    "{tag}: error at {} below error at {}",
                    n_total, checkpoints[earlier]
                ),
                ok,
                last,
                errs[earlier],
            )
            .inconclusive_unless(generic && reference.gaps[k] < last),
        );
    }
    Ok(report)
}
