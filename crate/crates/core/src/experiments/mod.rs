//! Named, reproducible experiments. Each one consumes a map, a parameter
//! block and the numeric tolerances, and produces an [`ExperimentReport`]
//! whose rows are byte-identical across reruns and thread counts.

mod dynamics;
mod equidistribution;
mod potential;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibers::{backward_orbit, FiberMode};
use crate::map::{EndomorphismMap, Preset};
use crate::measures::{write_gnuplot, write_rate_csv, RateRow, TestFunction, TestFunctionSpec};
use crate::polynomial::{HomogeneousPolynomial, TermSpec};
use crate::projective::ProjectivePoint;
use crate::tolerances::Tolerances;

pub use dynamics::{exp_holder_modulus, exp_mixing, HolderModulusParams, MixingParams};
pub use equidistribution::{
    exp_birkhoff, exp_counting, exp_exceptional, exp_point_equidistribution, BirkhoffParams,
    BirkhoffStart, CountingParams, EquidistributionParams, ExceptionalParams,
};
pub use potential::{
    exp_exponential_estimate, exp_hypersurface, ExponentialParams, Grid, HypersurfaceParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// The reference measure is not accurate enough for the verdict, or a
    /// precondition of the experiment does not hold.
    Inconclusive,
    /// Reported quantity without a pass/fail threshold.
    Report,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
            Status::Report => "REPORT",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub label: String,
    pub status: Status,
    pub measured: f64,
    pub threshold: f64,
}

impl Verdict {
    pub fn new(label: impl Into<String>, status: Status, measured: f64, threshold: f64) -> Self {
        Self {
            label: label.into(),
            status,
            measured,
            threshold,
        }
    }

    /// Pass when `ok`, Fail otherwise.
    pub fn check(label: impl Into<String>, ok: bool, measured: f64, threshold: f64) -> Self {
        let status = if ok { Status::Pass } else { Status::Fail };
        Self::new(label, status, measured, threshold)
    }

    fn inconclusive_unless(mut self, reliable: bool) -> Self {
        if !reliable && self.status != Status::Report {
            self.status = Status::Inconclusive;
        }
        self
    }
}

/// One measurement record. `tag` names the observable or region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub n: u64,
    pub tag: String,
    pub values: Vec<f64>,
}

/// Named error series for the gnuplot files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub tag: String,
    pub ns: Vec<u32>,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment_id: String,
    pub config_digest: String,
    pub seed: u64,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub verdicts: Vec<Verdict>,
    /// Largest self-consistency gap of the reference measure.
    pub reference_gap: Option<f64>,
    pub flags: Vec<String>,
    pub notes: Vec<String>,
    pub rate_rows: Vec<RateRow>,
    pub series: Vec<Series>,
}

impl ExperimentReport {
    pub fn new(experiment_id: &str, columns: &[&str], ctx: &Context) -> Self {
        Self {
            experiment_id: experiment_id.to_string(),
            config_digest: ctx.digest.clone(),
            seed: ctx.seed,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            verdicts: Vec::new(),
            reference_gap: None,
            flags: Vec::new(),
            notes: Vec::new(),
            rate_rows: Vec::new(),
            series: Vec::new(),
        }
    }

    pub fn row(&mut self, n: u64, tag: impl Into<String>, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(ReportRow {
            n,
            tag: tag.into(),
            values,
        });
    }

    /// Fail if any verdict fails, else Inconclusive if any is, else Pass.
    pub fn overall(&self) -> Status {
        let any = |s| self.verdicts.iter().any(|v| v.status == s);
        if any(Status::Fail) {
            Status::Fail
        } else if any(Status::Inconclusive) {
            Status::Inconclusive
        } else {
            Status::Pass
        }
    }

    pub fn verdict(&self, label: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.label == label)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "experiment_id,n,tag,{}", self.columns.join(","))?;
        for r in &self.rows {
            let vals: Vec<String> = r.values.iter().map(|v| fmt_value(*v)).collect();
            writeln!(
                out,
                "{},{},\"{}\",{}",
                self.experiment_id,
                r.n,
                r.tag,
                vals.join(",")
            )?;
        }
        Ok(())
    }

    pub fn write_verdicts<W: Write>(&self, out: &mut W) -> Result<()> {
        for v in &self.verdicts {
            writeln!(
                out,
                "{}\t{}\tmeasured={}\tthreshold={}",
                v.status,
                v.label,
                fmt_value(v.measured),
                fmt_value(v.threshold)
            )?;
        }
        writeln!(out, "OVERALL\t{}", self.overall())?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "experiment_id": self.experiment_id,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "overall": self.overall(),
            "verdicts": self.verdicts,
            "reference_gap": self.reference_gap,
            "flags": self.flags,
            "notes": self.notes,
            "row_count": self.rows.len(),
        })
    }

    /// Writes `report.csv`, `verdicts.txt`, `summary.json` and, when the
    /// experiment fitted rates, `rates.csv` plus one `rate_<k>.dat` gnuplot
    /// file per series into `root/<config_digest>/`. Returns that directory.
    pub fn write_outputs(&self, root: &Path) -> Result<PathBuf> {
        let dir = root.join(&self.config_digest);
        fs::create_dir_all(&dir)?;
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(dir.join("report.csv"), &buf)?;
        buf.clear();
        self.write_verdicts(&mut buf)?;
        fs::write(dir.join("verdicts.txt"), &buf)?;
        let mut summary = serde_json::to_string_pretty(&self.summary_json())?;
        summary.push('\n');
        fs::write(dir.join("summary.json"), summary)?;
        if !self.rate_rows.is_empty() {
            buf.clear();
            write_rate_csv(&mut buf, &self.rate_rows)?;
            fs::write(dir.join("rates.csv"), &buf)?;
        }
        for (k, s) in self.series.iter().enumerate() {
            buf.clear();
            writeln!(buf, "# {}", s.tag)?;
            write_gnuplot(&mut buf, &s.ns, &s.errors)?;
            fs::write(dir.join(format!("rate_{k}.dat")), &buf)?;
        }
        Ok(dir)
    }
}

/// Integers print as integers, everything else in shortest round-trip
/// scientific notation.
pub fn fmt_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:e}")
    }
}

/// Run-wide inputs shared by every experiment.
#[derive(Debug, Clone)]
pub struct Context {
    pub tol: Tolerances,
    pub seed: u64,
    pub digest: String,
}

impl Context {
    pub fn new(tol: Tolerances, seed: u64) -> Self {
        Self {
            tol,
            seed,
            digest: String::new(),
        }
    }

    pub fn with_digest(mut self, digest: impl Into<String>) -> Self {
        self.digest = digest.into();
        self
    }
}

pub const EXPERIMENTS: &[(&str, &str)] = &[
    (
        "point_equidistribution",
        "fiber measures against the reference measure, rate fits",
    ),
    (
        "exceptional",
        "non-convergence from a totally invariant base",
    ),
    (
        "counting",
        "preimage counts in regions, ratio between two bases",
    ),
    (
        "mixing",
        "correlation decay under an inverse-iteration sample",
    ),
    ("birkhoff", "orbit averages at 10, 100, 1000, 10000 steps"),
    (
        "hypersurface",
        "decay of d^-n u(f^n) for a hypersurface potential u",
    ),
    (
        "exponential_estimate",
        "Monte Carlo integral of exp|u| (report only)",
    ),
    (
        "holder_modulus",
        "empirical Holder exponent of d^-n Lambda^n phi (report only)",
    ),
];

/// An experiment name plus its parameter block.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentSpec {
    PointEquidistribution(EquidistributionParams),
    Exceptional(ExceptionalParams),
    Counting(CountingParams),
    Mixing(MixingParams),
    Birkhoff(BirkhoffParams),
    Hypersurface(HypersurfaceParams),
    ExponentialEstimate(ExponentialParams),
    HolderModulus(HolderModulusParams),
}

fn parse_params<T: DeserializeOwned>(params: &serde_json::Value) -> Result<T> {
    let value = if params.is_null() {
        serde_json::Value::Object(Default::default())
    } else {
        params.clone()
    };
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." {
            "params".to_string()
        } else {
            format!("params.{path}")
        };
        Error::config(key, e.into_inner().to_string())
    })
}

impl ExperimentSpec {
    /// Build from a name and a JSON parameter object (`null` means defaults).
    pub fn from_parts(name: &str, params: &serde_json::Value) -> Result<Self> {
        Ok(match name {
            "point_equidistribution" => Self::PointEquidistribution(parse_params(params)?),
            "exceptional" => Self::Exceptional(parse_params(params)?),
            "counting" => Self::Counting(parse_params(params)?),
            "mixing" => Self::Mixing(parse_params(params)?),
            "birkhoff" => Self::Birkhoff(parse_params(params)?),
            "hypersurface" => Self::Hypersurface(parse_params(params)?),
            "exponential_estimate" => Self::ExponentialEstimate(parse_params(params)?),
            "holder_modulus" => Self::HolderModulus(parse_params(params)?),
            other => {
                let known: Vec<&str> = EXPERIMENTS.iter().map(|e| e.0).collect();
                return Err(Error::config(
                    "experiment",
                    format!("unknown experiment `{other}`; known: {}", known.join(", ")),
                ));
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::PointEquidistribution(_) => "point_equidistribution",
            Self::Exceptional(_) => "exceptional",
            Self::Counting(_) => "counting",
            Self::Mixing(_) => "mixing",
            Self::Birkhoff(_) => "birkhoff",
            Self::Hypersurface(_) => "hypersurface",
            Self::ExponentialEstimate(_) => "exponential_estimate",
            Self::HolderModulus(_) => "holder_modulus",
        }
    }

    pub fn run(&self, f: &EndomorphismMap, ctx: &Context) -> Result<ExperimentReport> {
        match self {
            Self::PointEquidistribution(p) => exp_point_equidistribution(f, p, ctx),
            Self::Exceptional(p) => exp_exceptional(f, p, ctx),
            Self::Counting(p) => exp_counting(f, p, ctx),
            Self::Mixing(p) => exp_mixing(f, p, ctx),
            Self::Birkhoff(p) => exp_birkhoff(f, p, ctx),
            Self::Hypersurface(p) => exp_hypersurface(f, p, ctx),
            Self::ExponentialEstimate(p) => exp_exponential_estimate(f, p, ctx),
            Self::HolderModulus(p) => exp_holder_modulus(f, p, ctx),
        }
    }
}

/// Reference measure `mu_ref`: the exact fiber at `depth` over `base`. Its
/// self-consistency gap compares against the fiber over `alt_base` at the
/// same depth, or against depth - 1 over `base` when no alternative is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSpec {
    pub base: ProjectivePoint,
    /// Defaults to the experiment's largest depth plus 2.
    pub depth: Option<u32>,
    pub alt_base: Option<ProjectivePoint>,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            base: affine(5.0 / 2.0),
            depth: None,
            alt_base: Some(affine(7.0 / 3.0)),
        }
    }
}

/// Pairings of the reference measure with a list of observables.
pub(crate) struct Reference {
    pub values: Vec<f64>,
    pub gaps: Vec<f64>,
    pub depth: u32,
}

impl Reference {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(0.0, f64::max)
    }
}

/// Normalized pairings of a weighted atom list with each observable, each
/// accumulated in atom order.
pub(crate) fn level_pairings(
    atoms: &[(ProjectivePoint, u64)],
    observables: &[&(dyn Fn(&ProjectivePoint) -> f64 + Sync)],
) -> Vec<f64> {
    use rayon::prelude::*;
    let total: f64 = atoms.iter().map(|(_, w)| *w as f64).sum();
    observables
        .iter()
        .map(|phi| {
            let vals: Vec<f64> = atoms.par_iter().map(|(p, w)| *w as f64 * phi(p)).collect();
            vals.iter().sum::<f64>() / total
        })
        .collect()
}

pub(crate) fn reference_pairings(
    f: &EndomorphismMap,
    spec: &ReferenceSpec,
    default_depth: u32,
    observables: &[&(dyn Fn(&ProjectivePoint) -> f64 + Sync)],
    tol: &Tolerances,
) -> Result<Reference> {
    crate::measures::ensure_not_exceptional(f, &spec.base, tol)?;
    let depth = spec.depth.unwrap_or(default_depth);
    let main = backward_orbit(f, &spec.base, depth, FiberMode::Exact, tol)?;
    let values = level_pairings(&main.atoms, observables);
    let other = match &spec.alt_base {
        Some(alt) => {
            crate::measures::ensure_not_exceptional(f, alt, tol)?;
            backward_orbit(f, alt, depth, FiberMode::Exact, tol)?
        }
        None => backward_orbit(
            f,
            &spec.base,
            depth.saturating_sub(1),
            FiberMode::Exact,
            tol,
        )?,
    };
    let gaps = level_pairings(&other.atoms, observables)
        .iter()
        .zip(&values)
        .map(|(a, b)| (a - b).abs())
        .collect();
    Ok(Reference {
        values,
        gaps,
        depth,
    })
}

pub(crate) fn affine(re: f64) -> ProjectivePoint {
    ProjectivePoint::affine(Complex64::new(re, 0.0)).expect("finite affine point")
}

/// Default observables: trigonometric moments for power maps, otherwise a
/// bump and the Holder-kernel family centered at the finite critical point
/// of smallest modulus. A constant is always included.
pub(crate) fn default_test_functions(f: &EndomorphismMap) -> Result<Vec<TestFunctionSpec>> {
    let mut out = Vec::new();
    if let Some(Preset::Power { .. }) = f.preset() {
        out.extend((1..=4).map(|m| TestFunctionSpec::TrigMoment { m }));
    } else {
        let center = f
            .critical_points()
            .iter()
            .filter_map(|p| p.affine_coordinate().map(|z| (z.norm(), p)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, p)| p.clone())
            .unwrap_or_else(|| affine(0.0));
        out.push(TestFunctionSpec::Bump {
            center: center.clone(),
            radius: 0.6,
        });
        for alpha in [0.5, 1.0, 2.0] {
            out.push(TestFunctionSpec::HolderKernel {
                center: center.clone(),
                alpha,
            });
        }
    }
    out.push(TestFunctionSpec::Constant { value: 1.0 });
    Ok(out)
}

pub(crate) fn build_test_functions(
    f: &EndomorphismMap,
    specs: &Option<Vec<TestFunctionSpec>>,
) -> Result<Vec<TestFunction>> {
    let specs = match specs {
        Some(s) if s.is_empty() => {
            return Err(Error::config(
                "params.phis",
                "at least one test function is required",
            ))
        }
        Some(s) => s.clone(),
        None => default_test_functions(f)?,
    };
    specs.iter().map(|s| s.build(f.dim())).collect()
}

pub(crate) fn check_range(n_min: u32, n_max: u32) -> Result<()> {
    if n_min > n_max {
        return Err(Error::config(
            "params.n_min",
            format!("n_min {n_min} exceeds n_max {n_max}"),
        ));
    }
    Ok(())
}

/// Hypersurface polynomial from term specs; the degree is read off the terms.
pub(crate) fn polynomial_from_terms(
    terms: &[TermSpec],
    dim: usize,
) -> Result<HomogeneousPolynomial> {
    let first = terms
        .first()
        .ok_or_else(|| Error::config("params.h", "polynomial has no terms"))?;
    let degree: u32 = first.exps.iter().sum();
    HomogeneousPolynomial::from_specs(dim + 1, degree, terms)
        .map_err(|e| Error::config("params.h", e.to_string()))
}

/// Median of a nonempty slice (mean of the middle pair for even lengths).
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overall_status_ordering() {
        let ctx = Context::new(Tolerances::default(), 0);
        let mut r = ExperimentReport::new("x", &["v"], &ctx);
        assert_eq!(r.overall(), Status::Pass);
        r.verdicts.push(Verdict::new("a", Status::Report, 1.0, 0.0));
        assert_eq!(r.overall(), Status::Pass);
        r.verdicts
            .push(Verdict::new("b", Status::Inconclusive, 1.0, 0.0));
        assert_eq!(r.overall(), Status::Inconclusive);
        r.verdicts.push(Verdict::check("c", false, 1.0, 0.0));
        assert_eq!(r.overall(), Status::Fail);
    }

    #[test]
    fn csv_rows_use_shortest_float_format() {
        let ctx = Context::new(Tolerances::default(), 3).with_digest("abc");
        let mut r = ExperimentReport::new("demo", &["error", "rho"], &ctx);
        r.row(4, "phi", vec![0.25, 2.0]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "experiment_id,n,tag,error,rho\ndemo,4,\"phi\",2.5e-1,2\n"
        );
    }

    #[test]
    fn unknown_experiment_names_the_key() {
        let err = ExperimentSpec::from_parts("nope", &serde_json::Value::Null).unwrap_err();
        assert!(err.to_string().contains("`experiment`"));
    }

    #[test]
    fn unknown_param_key_is_rejected_with_path() {
        let params = serde_json::json!({"n_max": 4, "bogus": 1});
        let err = ExperimentSpec::from_parts("point_equidistribution", &params).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
