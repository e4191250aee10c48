//! Python bindings: `import projdyn`.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use projdyn::cli::{load_config_str, parse_map_arg};
use projdyn::fibers::{self, FiberMode};
use projdyn::iteration;
use projdyn::measures::{self, EmpiricalMeasure};
use projdyn::{Error, Tolerances};

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A point of P^k in canonical form: the largest-modulus coordinate is 1.
#[pyclass(name = "ProjectivePoint", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyPoint(projdyn::ProjectivePoint);

#[pymethods]
impl PyPoint {
    #[new]
    fn new(coords: Vec<Complex64>) -> PyResult<Self> {
        projdyn::normalize(&coords).map(Self).map_err(py_err)
    }

    /// `[z : 1]`.
    #[staticmethod]
    fn affine(z: Complex64) -> PyResult<Self> {
        projdyn::ProjectivePoint::affine(z)
            .map(Self)
            .map_err(py_err)
    }

    /// Parse `"z0:z1"` with complex literals such as `1+2i`.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        projdyn::projective::parse_point(text)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn coords(&self) -> Vec<Complex64> {
        self.0.coords().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn __repr__(&self) -> String {
        format!("ProjectivePoint({})", self.0)
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }
}

/// Holomorphic endomorphism of P^k given by a nondegenerate homogeneous lift.
#[pyclass(name = "EndomorphismMap", frozen)]
struct PyMap(projdyn::EndomorphismMap);

#[pymethods]
impl PyMap {
    /// A preset such as `power(2)`, an inline JSON definition, or a
    /// definition file path.
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        parse_map_arg(spec, &Tolerances::default())
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (degree, dim = 1))]
    fn power(degree: u32, dim: usize) -> PyResult<Self> {
        projdyn::EndomorphismMap::power(dim, degree, &Tolerances::default())
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn quadratic_family(c: Complex64) -> PyResult<Self> {
        projdyn::EndomorphismMap::quadratic_family(c, &Tolerances::default())
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn degree(&self) -> u32 {
        self.0.degree()
    }

    #[getter]
    fn map_constant(&self) -> f64 {
        self.0.map_constant()
    }

    fn critical_points(&self) -> Vec<PyPoint> {
        self.0
            .critical_points()
            .iter()
            .cloned()
            .map(PyPoint)
            .collect()
    }

    /// Apply the map; returns `(image, log_scale)`.
    fn __call__(&self, p: &PyPoint) -> PyResult<(PyPoint, f64)> {
        evaluate_map(self, p)
    }

    fn __repr__(&self) -> String {
        format!("EndomorphismMap({})", self.0.describe())
    }
}

/// Observable paired against empirical measures.
#[pyclass(name = "TestFunction", frozen)]
struct PyTestFunction(measures::TestFunction);

#[pymethods]
impl PyTestFunction {
    #[staticmethod]
    fn trig_moment(m: u32) -> Self {
        Self(measures::TestFunction::trig_moment(m))
    }

    #[staticmethod]
    fn bump(center: &PyPoint, radius: f64) -> PyResult<Self> {
        measures::TestFunction::bump(center.0.clone(), radius)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn holder_kernel(center: &PyPoint, alpha: f64) -> PyResult<Self> {
        measures::TestFunction::holder_kernel(center.0.clone(), alpha)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn constant(value: f64) -> Self {
        Self(measures::TestFunction::constant(value))
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    fn __call__(&self, p: &PyPoint) -> f64 {
        self.0.eval(&p.0)
    }

    fn __repr__(&self) -> String {
        format!("TestFunction({})", self.0.label())
    }
}

#[pyfunction]
fn normalize(coords: Vec<Complex64>) -> PyResult<PyPoint> {
    PyPoint::new(coords)
}

#[pyfunction]
fn fs_distance(p: &PyPoint, q: &PyPoint) -> PyResult<f64> {
    projdyn::fs_distance(&p.0, &q.0).map_err(py_err)
}

#[pyfunction]
fn evaluate_map(f: &PyMap, p: &PyPoint) -> PyResult<(PyPoint, f64)> {
    projdyn::evaluate_map(&f.0, &p.0)
        .map(|(q, s)| (PyPoint(q), s))
        .map_err(py_err)
}

/// `f^{-1}(a)` on P^1 as `[(point, multiplicity)]`.
#[pyfunction]
fn preimages(f: &PyMap, a: &PyPoint) -> PyResult<Vec<(PyPoint, u32)>> {
    let set = fibers::preimages_p1(&f.0, &a.0, &Tolerances::default()).map_err(py_err)?;
    Ok(set
        .roots
        .into_iter()
        .map(|(p, m)| (PyPoint(p), m))
        .collect())
}

/// Depth-`n` backward orbit as `[(point, weight)]`; exact unless `samples`
/// is given, in which case that many random backward walks are drawn.
#[pyfunction]
#[pyo3(signature = (f, a, n, samples = None, seed = 0))]
fn backward_orbit(
    py: Python<'_>,
    f: &PyMap,
    a: &PyPoint,
    n: u32,
    samples: Option<usize>,
    seed: u64,
) -> PyResult<Vec<(PyPoint, u64)>> {
    let mode = match samples {
        Some(count) => FiberMode::Sampled { count, seed },
        None => FiberMode::Exact,
    };
    let cloud = py
        .detach(|| fibers::backward_orbit(&f.0, &a.0, n, mode, &Tolerances::default()))
        .map_err(py_err)?;
    Ok(cloud
        .atoms
        .into_iter()
        .map(|(p, w)| (PyPoint(p), w))
        .collect())
}

/// `G_n` at a lift; returns a dict with `value`, `depth`, `tail_bound`.
#[pyfunction]
fn green_value<'py>(
    py: Python<'py>,
    f: &PyMap,
    lift: Vec<Complex64>,
    n: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let g = iteration::green_value(&f.0, &lift, n).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("value", g.value)?;
    d.set_item("depth", g.depth)?;
    d.set_item("tail_bound", g.tail_bound)?;
    d.set_item("map_constant", g.map_constant)?;
    Ok(d)
}

#[pyfunction]
fn multiplicity_kappa<'py>(
    py: Python<'py>,
    f: &PyMap,
    x: &PyPoint,
    n: u32,
) -> PyResult<Bound<'py, PyDict>> {
    let r = fibers::multiplicity_kappa(&f.0, &x.0, n, &Tolerances::default()).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("kappa_along_orbit", r.kappa_along_orbit)?;
    d.set_item("kappa_n", r.kappa_n)?;
    d.set_item("kappa_minus_n", r.kappa_minus_n)?;
    d.set_item("rate", r.rate)?;
    Ok(d)
}

/// `[(point, flagged, rate)]` for each candidate.
#[pyfunction]
fn exceptional_scan(
    f: &PyMap,
    lam: f64,
    depth: u32,
    candidates: Vec<PyPoint>,
) -> PyResult<Vec<(PyPoint, bool, f64)>> {
    let pts: Vec<_> = candidates.into_iter().map(|p| p.0).collect();
    let entries =
        fibers::exceptional_scan(&f.0, lam, depth, &pts, &Tolerances::default()).map_err(py_err)?;
    Ok(entries
        .into_iter()
        .map(|e| (PyPoint(e.point), e.flagged, e.rate))
        .collect())
}

/// `(fitted_rho, r_squared, used)` for `ln e_n = c - n ln rho`.
#[pyfunction]
#[pyo3(signature = (ns, errors, floor = 1e-14))]
fn fit_rate(ns: Vec<u32>, errors: Vec<f64>, floor: f64) -> PyResult<(f64, f64, usize)> {
    let fit = measures::fit_rate(&ns, &errors, floor).map_err(py_err)?;
    Ok((fit.fitted_rho, fit.r_squared, fit.used))
}

/// `<mu, phi>` for the measure with the given `(point, weight)` atoms,
/// normalized to unit mass.
#[pyfunction]
fn pair(atoms: Vec<(PyPoint, f64)>, phi: &PyTestFunction) -> PyResult<f64> {
    let mu = EmpiricalMeasure::new(atoms.into_iter().map(|(p, w)| (p.0, w)).collect())
        .map_err(py_err)?;
    measures::pair(&mu, &phi.0).map_err(py_err)
}

/// Run a JSON config. Returns the summary as a JSON string; when `out_dir`
/// is given the report files are written under `out_dir/<config_digest>/`.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir = None))]
fn run_experiment(py: Python<'_>, config_json: &str, out_dir: Option<PathBuf>) -> PyResult<String> {
    let base = std::env::current_dir().map_err(|e| py_err(e.into()))?;
    let loaded = load_config_str(config_json, None, false, &base).map_err(py_err)?;
    let report = py
        .detach(|| -> projdyn::Result<_> {
            match &out_dir {
                Some(dir) => projdyn::cli::execute(&loaded, dir).map(|(r, _)| r),
                None => loaded
                    .experiment()?
                    .run(&loaded.build_map()?, &loaded.context()),
            }
        })
        .map_err(py_err)?;
    Ok(report.summary_json().to_string())
}

#[pymodule]
#[pyo3(name = "projdyn")]
fn projdyn_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPoint>()?;
    m.add_class::<PyMap>()?;
    m.add_class::<PyTestFunction>()?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(fs_distance, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_map, m)?)?;
    m.add_function(wrap_pyfunction!(preimages, m)?)?;
    m.add_function(wrap_pyfunction!(backward_orbit, m)?)?;
    m.add_function(wrap_pyfunction!(green_value, m)?)?;
    m.add_function(wrap_pyfunction!(multiplicity_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(exceptional_scan, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(pair, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
