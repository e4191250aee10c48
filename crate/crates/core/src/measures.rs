//! Observables, empirical measures, equilibrium-measure estimators and
//! geometric rate fits.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibers::{backward_orbit, exceptional_scan, FiberCloud, FiberMode};
use crate::map::EndomorphismMap;
use crate::projective::{chordal, normalize, ProjectivePoint};
use crate::rng::{stream_rng, unit_sphere_point};
use crate::tolerances::Tolerances;

const PROBE_POINTS: usize = 1000;
const PROBE_SEED: u64 = 0x0b5e;

/// Label for the family a test function belongs to.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyTag {
    TrigMoment(u32),
    Bump {
        center: ProjectivePoint,
        radius: f64,
    },
    HolderKernel {
        center: ProjectivePoint,
        alpha: f64,
    },
    Constant(f64),
    Custom(String),
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyTag::TrigMoment(m) => write!(f, "trig_moment({m})"),
            FamilyTag::Bump { center, radius } => write!(f, "bump({center} r={radius})"),
            FamilyTag::HolderKernel { center, alpha } => {
                write!(f, "holder_kernel({center} a={alpha})")
            }
            FamilyTag::Constant(c) => write!(f, "constant({c})"),
            FamilyTag::Custom(name) => write!(f, "{name}"),
        }
    }
}

type Evaluator = Arc<dyn Fn(&ProjectivePoint) -> f64 + Send + Sync>;

/// A bounded observable with declared regularity `alpha` in (0, 2] and
/// declared `C^alpha` norm.
#[derive(Clone)]
pub struct TestFunction {
    evaluator: Evaluator,
    pub alpha: f64,
    pub norm_alpha: f64,
    pub tag: FamilyTag,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("tag", &self.tag)
            .field("alpha", &self.alpha)
            .field("norm_alpha", &self.norm_alpha)
            .finish()
    }
}

impl TestFunction {
    pub fn eval(&self, p: &ProjectivePoint) -> f64 {
        (self.evaluator)(p)
    }

    pub fn label(&self) -> String {
        self.tag.to_string()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            evaluator: Arc::new(move |_| value),
            alpha: 2.0,
            norm_alpha: value.abs(),
            tag: FamilyTag::Constant(value),
        }
    }

    /// `Re(s^m)` with `s = 2 z_0 conj(z_1) / |z|^2`; on the unit circle this
    /// is `cos(m theta)`.
    pub fn trig_moment(m: u32) -> Self {
        let mf = m as f64;
        Self {
            evaluator: Arc::new(move |p| p.circle_coordinate().powu(m).re),
            alpha: 2.0,
            norm_alpha: 1.0 + mf + mf * mf,
            tag: FamilyTag::TrigMoment(m),
        }
    }

    /// `(1 - dist^2 / r^2)^3` inside the chordal ball, 0 outside. `C^2`.
    pub fn bump(center: ProjectivePoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "bump radius must lie in (0, 1], got {radius}"
            )));
        }
        let c = center.clone();
        let r2 = radius * radius;
        Ok(Self {
            evaluator: Arc::new(move |p| {
                let t = chordal(p.coords(), c.coords()).powi(2) / r2;
                if t >= 1.0 {
                    0.0
                } else {
                    (1.0 - t).powi(3)
                }
            }),
            alpha: 2.0,
            norm_alpha: 1.0 + 3.0 / radius + 6.0 / r2,
            tag: FamilyTag::Bump { center, radius },
        })
    }

    /// `dist(., center)^alpha`, exactly `C^alpha` at the center.
    pub fn holder_kernel(center: ProjectivePoint, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::InvalidArgument(format!(
                "Hölder exponent must lie in (0, 2], got {alpha}"
            )));
        }
        let c = center.clone();
        Ok(Self {
            evaluator: Arc::new(move |p| chordal(p.coords(), c.coords()).powf(alpha)),
            alpha,
            norm_alpha: 3.0,
            tag: FamilyTag::HolderKernel { center, alpha },
        })
    }

    /// Wrap an arbitrary closure; `norm_alpha` is checked as a sup bound on
    /// P^1 probe points by [`TestFunction::validate`].
    pub fn custom(
        name: &str,
        alpha: f64,
        norm_alpha: f64,
        f: impl Fn(&ProjectivePoint) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            evaluator: Arc::new(f),
            alpha,
            norm_alpha,
            tag: FamilyTag::Custom(name.to_string()),
        }
    }

    /// Checks `0 < alpha <= 2` and `|phi| <= norm_alpha` on Fubini–Study
    /// random probe points of P^dim.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::InvalidArgument(format!(
                "{}: alpha {} outside (0, 2]",
                self.label(),
                self.alpha
            )));
        }
        let mut rng = stream_rng(PROBE_SEED, dim as u64);
        for _ in 0..PROBE_POINTS {
            let p = normalize(&unit_sphere_point(&mut rng, dim + 1))?;
            let v = self.eval(&p);
            if !(v.abs() <= self.norm_alpha * (1.0 + 1e-12)) {
                return Err(Error::InvalidArgument(format!(
                    "{}: |phi({p})| = {} exceeds declared norm {}",
                    self.label(),
                    v.abs(),
                    self.norm_alpha
                )));
            }
        }
        Ok(())
    }
}

/// Test function description used in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctionSpec {
    TrigMoment {
        m: u32,
    },
    Bump {
        center: ProjectivePoint,
        radius: f64,
    },
    HolderKernel {
        center: ProjectivePoint,
        alpha: f64,
    },
    Constant {
        value: f64,
    },
}

impl TestFunctionSpec {
    pub fn build(&self, dim: usize) -> Result<TestFunction> {
        let check = |p: &ProjectivePoint| -> Result<()> {
            if p.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
            Ok(())
        };
        let phi = match self {
            TestFunctionSpec::TrigMoment { m } => TestFunction::trig_moment(*m),
            TestFunctionSpec::Bump { center, radius } => {
                check(center)?;
                TestFunction::bump(center.clone(), *radius)?
            }
            TestFunctionSpec::HolderKernel { center, alpha } => {
                check(center)?;
                TestFunction::holder_kernel(center.clone(), *alpha)?
            }
            TestFunctionSpec::Constant { value } => TestFunction::constant(*value),
        };
        phi.validate(dim)?;
        Ok(phi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<(ProjectivePoint, f64)>,
    pub normalized: bool,
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<(ProjectivePoint, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if atoms.iter().any(|(_, w)| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "atom weights must be positive".into(),
            ));
        }
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        let normalized = (total - 1.0).abs() <= 1e-12;
        Ok(Self { atoms, normalized })
    }

    pub fn dirac(p: ProjectivePoint) -> Self {
        Self {
            atoms: vec![(p, 1.0)],
            normalized: true,
        }
    }

    /// Probability measure with weights `w / sum w`.
    pub fn from_cloud(cloud: &FiberCloud) -> Result<Self> {
        let total = cloud.total_weight() as f64;
        if cloud.atoms.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        Ok(Self {
            atoms: cloud
                .atoms
                .iter()
                .map(|(p, w)| (p.clone(), *w as f64 / total))
                .collect(),
            normalized: true,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }

    /// Mass of `{p : region(p)}` relative to the total.
    pub fn mass_of(&self, region: impl Fn(&ProjectivePoint) -> bool + Sync) -> f64 {
        let inside: f64 = self
            .atoms
            .iter()
            .filter(|(p, _)| region(p))
            .map(|(_, w)| w)
            .sum();
        inside / self.total_mass()
    }
}

/// `<m, phi> = sum w phi(atom) / sum w`.
pub fn pair(m: &EmpiricalMeasure, phi: &TestFunction) -> Result<f64> {
    if m.atoms.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let vals: Vec<f64> = m.atoms.par_iter().map(|(p, w)| w * phi.eval(p)).collect();
    Ok(vals.iter().sum::<f64>() / m.total_mass())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum EquilibriumMethod {
    /// Normalized exact fiber `mu_depth^base`.
    FullFiber { base: ProjectivePoint, depth: u32 },
    /// `count` independent backward random walks of `burn_in` steps from
    /// `start`, walk `i` using stream `i` of `seed`.
    InverseIteration {
        start: ProjectivePoint,
        burn_in: u32,
        count: usize,
        seed: u64,
    },
}

/// Err(ExceptionalBase) when `p` is a known invariant point of a preset or is
/// flagged by a depth-`exceptional_depth` scan.
pub fn ensure_not_exceptional(
    f: &EndomorphismMap,
    p: &ProjectivePoint,
    tol: &Tolerances,
) -> Result<()> {
    for e in f.known_exceptional_points() {
        if chordal(e.coords(), p.coords()) <= 1e-12 {
            return Err(Error::ExceptionalBase {
                point: p.to_string(),
                rate: f.degree() as f64,
            });
        }
    }
    let lambda = tol.exceptional_lambda.min(f.degree() as f64 - 1e-9);
    let scan = exceptional_scan(
        f,
        lambda,
        tol.exceptional_depth,
        std::slice::from_ref(p),
        tol,
    )?;
    if scan[0].flagged {
        return Err(Error::ExceptionalBase {
            point: p.to_string(),
            rate: scan[0].rate,
        });
    }
    Ok(())
}

pub fn equilibrium_estimate(
    f: &EndomorphismMap,
    method: &EquilibriumMethod,
    tol: &Tolerances,
) -> Result<EmpiricalMeasure> {
    match method {
        EquilibriumMethod::FullFiber { base, depth } => {
            ensure_not_exceptional(f, base, tol)?;
            let cloud = backward_orbit(f, base, *depth, FiberMode::Exact, tol)?;
            EmpiricalMeasure::from_cloud(&cloud)
        }
        EquilibriumMethod::InverseIteration {
            start,
            burn_in,
            count,
            seed,
        } => {
            ensure_not_exceptional(f, start, tol)?;
            let mode = FiberMode::Sampled {
                count: *count,
                seed: *seed,
            };
            let cloud = backward_orbit(f, start, *burn_in, mode, tol)?;
            EmpiricalMeasure::from_cloud(&cloud)
        }
    }
}

/// Least-squares fit of `ln e_n = c - n ln rho`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub ns: Vec<u32>,
    pub errors: Vec<f64>,
    pub fitted_rho: f64,
    pub r_squared: f64,
    pub intercept: f64,
    /// Entries above the floor that entered the fit.
    pub used: usize,
}

impl RateFit {
    /// `lambda = rho^{2/alpha}`, the rate in `lambda^{-alpha n / 2}`.
    pub fn lambda(&self, alpha: f64) -> f64 {
        self.fitted_rho.powf(2.0 / alpha)
    }
}

pub fn fit_rate(ns: &[u32], errors: &[f64], floor: f64) -> Result<RateFit> {
    if ns.len() != errors.len() {
        return Err(Error::InvalidArgument(format!(
            "{} depths but {} errors",
            ns.len(),
            errors.len()
        )));
    }
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e > floor && e.is_finite())
        .map(|(n, e)| (*n as f64, e.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData { usable: pts.len() });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData { usable: 1 });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy <= f64::EPSILON * k {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        ns: ns.to_vec(),
        errors: errors.to_vec(),
        fitted_rho: (-slope).exp(),
        r_squared,
        intercept,
        used: pts.len(),
    })
}

/// Sets `U` used by counting experiments, on P^1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Everything,
    Empty,
    /// `|arg(z) - center_angle| < half_width` (angles mod 2 pi), any modulus.
    Sector {
        center_angle: f64,
        half_width: f64,
    },
    /// `|z - center| < radius` in the affine chart.
    Disc {
        center: [f64; 2],
        radius: f64,
    },
}

impl Region {
    pub fn label(&self) -> String {
        match self {
            Region::Everything => "everything".into(),
            Region::Empty => "empty".into(),
            Region::Sector {
                center_angle,
                half_width,
            } => format!("sector({center_angle}, {half_width})"),
            Region::Disc { center, radius } => {
                format!("disc({}{:+}i, {radius})", center[0], center[1])
            }
        }
    }

    pub fn contains(&self, p: &ProjectivePoint) -> bool {
        self.margin(p).is_some_and(|m| m > 0.0)
    }

    /// Signed distance to the boundary in the region's own units (radians
    /// for sectors, affine distance for discs), positive inside. `None` for
    /// points where the region is not defined by a margin (0 and infinity
    /// for sectors, infinity for discs), which count as outside.
    pub fn margin(&self, p: &ProjectivePoint) -> Option<f64> {
        match self {
            Region::Everything => Some(f64::INFINITY),
            Region::Empty => Some(f64::NEG_INFINITY),
            Region::Sector {
                center_angle,
                half_width,
            } => {
                let z = p.affine_coordinate()?;
                if z.norm() == 0.0 {
                    return None;
                }
                let diff = (z.arg() - center_angle + PI).rem_euclid(2.0 * PI) - PI;
                Some(half_width - diff.abs())
            }
            Region::Disc { center, radius } => {
                let z = p.affine_coordinate()?;
                Some(radius - (z - Complex64::new(center[0], center[1])).norm())
            }
        }
    }
}

/// Sum of weights of atoms inside `region`.
pub fn count_in_set(cloud: &FiberCloud, region: impl Fn(&ProjectivePoint) -> bool) -> u64 {
    cloud
        .atoms
        .iter()
        .filter(|(p, _)| region(p))
        .map(|(_, w)| w)
        .sum()
}

/// One line of a rate report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub experiment_id: String,
    pub n: u32,
    pub phi_tag: String,
    pub alpha: f64,
    pub error: f64,
    pub fitted_rho: Option<f64>,
    pub r_squared: Option<f64>,
}

pub fn write_rate_csv<W: Write>(out: &mut W, rows: &[RateRow]) -> Result<()> {
    writeln!(
        out,
        "experiment_id,n,phi_tag,alpha,error,fitted_rho,r_squared"
    )?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},\"{}\",{},{:e},{},{}",
            r.experiment_id,
            r.n,
            r.phi_tag,
            r.alpha,
            r.error,
            opt(r.fitted_rho),
            opt(r.r_squared)
        )?;
    }
    Ok(())
}

/// Two whitespace-separated columns `n log10(error)`; zero errors are skipped.
pub fn write_gnuplot<W: Write>(out: &mut W, ns: &[u32], errors: &[f64]) -> Result<()> {
    writeln!(out, "# n log10(error)")?;
    for (n, e) in ns.iter().zip(errors) {
        if *e > 0.0 {
            writeln!(out, "{n} {}", e.log10())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn roots_of_unity(n: usize) -> EmpiricalMeasure {
        let atoms = (0..n)
            .map(|k| {
                let z = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64);
                (ProjectivePoint::affine(z).unwrap(), 1.0 / n as f64)
            })
            .collect();
        EmpiricalMeasure::new(atoms).unwrap()
    }

    #[test]
    fn constants_pair_to_themselves() {
        let m = roots_of_unity(5);
        assert!((pair(&m, &TestFunction::constant(2.5)).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn roots_of_unity_cancel_first_moment() {
        let m = roots_of_unity(8);
        assert!(pair(&m, &TestFunction::trig_moment(1)).unwrap().abs() < 1e-15);
    }

    #[test]
    fn dirac_pairs_to_value() {
        let p = ProjectivePoint::affine(c(0.4, -0.2)).unwrap();
        let phi = TestFunction::trig_moment(2);
        assert_eq!(
            pair(&EmpiricalMeasure::dirac(p.clone()), &phi).unwrap(),
            phi.eval(&p)
        );
    }

    #[test]
    fn empty_measure_is_rejected() {
        assert!(matches!(
            EmpiricalMeasure::new(vec![]),
            Err(Error::EmptyMeasure)
        ));
    }

    #[test]
    fn library_functions_validate() {
        let center = ProjectivePoint::affine(c(1.0, 0.0)).unwrap();
        for phi in [
            TestFunction::trig_moment(3),
            TestFunction::bump(center.clone(), 0.3).unwrap(),
            TestFunction::holder_kernel(center.clone(), 0.5).unwrap(),
            TestFunction::constant(-2.0),
        ] {
            phi.validate(1).unwrap();
        }
        assert!(TestFunction::custom("big", 1.0, 0.5, |_| 1.0)
            .validate(1)
            .is_err());
        assert!(TestFunction::holder_kernel(center.clone(), 2.5).is_err());
        assert!(TestFunction::bump(center, 0.0).is_err());
    }

    #[test]
    fn bump_is_one_at_center_and_zero_outside() {
        let center = ProjectivePoint::basis(1, 1);
        let phi = TestFunction::bump(center.clone(), 0.5).unwrap();
        assert_eq!(phi.eval(&center), 1.0);
        assert_eq!(
            phi.eval(&ProjectivePoint::affine(c(1.0, 0.0)).unwrap()),
            0.0
        );
    }

    #[test]
    fn fit_exact_geometric() {
        let fit = fit_rate(&[1, 2, 3, 4], &[1.0, 0.5, 0.25, 0.125], 1e-14).unwrap();
        assert!((fit.fitted_rho - 2.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!((fit.lambda(2.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fit_constant_errors() {
        let fit = fit_rate(&[1, 2, 3], &[1.0, 1.0, 1.0], 1e-14).unwrap();
        assert!((fit.fitted_rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_needs_three_points_above_floor() {
        let err = fit_rate(&[1, 2, 3], &[1.0, 1e-16, 0.1], 1e-14).unwrap_err();
        assert!(matches!(err, Error::InsufficientData { usable: 2 }));
    }

    #[test]
    fn fit_noisy_geometric() {
        let mut rng = stream_rng(11, 0);
        let ns: Vec<u32> = (1..=12).collect();
        let errs: Vec<f64> = ns
            .iter()
            .map(|&n| 2f64.powi(-(n as i32)) * (1.0 + rng.random_range(-0.1..0.1)))
            .collect();
        let fit = fit_rate(&ns, &errs, 1e-14).unwrap();
        assert!(
            fit.fitted_rho > 1.8 && fit.fitted_rho < 2.2,
            "{}",
            fit.fitted_rho
        );
    }

    #[test]
    fn sector_membership_and_margin() {
        let u = Region::Sector {
            center_angle: 0.0,
            half_width: PI / 4.0,
        };
        assert!(u.contains(&ProjectivePoint::affine(c(1.0, 0.1)).unwrap()));
        assert!(!u.contains(&ProjectivePoint::affine(c(-1.0, 0.0)).unwrap()));
        assert!(!u.contains(&ProjectivePoint::infinity()));
        assert!(!u.contains(&ProjectivePoint::basis(1, 1)));
        let m = u
            .margin(&ProjectivePoint::affine(c(1.0, 0.0)).unwrap())
            .unwrap();
        assert!((m - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn rate_csv_format() {
        let rows = vec![RateRow {
            experiment_id: "x".into(),
            n: 3,
            phi_tag: "trig_moment(1)".into(),
            alpha: 2.0,
            error: 0.5,
            fitted_rho: None,
            r_squared: Some(1.0),
        }];
        let mut buf = Vec::new();
        write_rate_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "x,3,\"trig_moment(1)\",2,5e-1,,1"
        );
        let mut g = Vec::new();
        write_gnuplot(&mut g, &[1, 2], &[0.1, 0.0]).unwrap();
        assert_eq!(String::from_utf8(g).unwrap(), "# n log10(error)\n1 -1\n");
    }
}
