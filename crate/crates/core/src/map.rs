//! Holomorphic endomorphisms of P^k given by homogeneous lifts.

use std::fmt;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polynomial::{HomogeneousPolynomial, TermSpec};
use crate::projective::{euclidean_norm, normalize, sup_norm, ProjectivePoint, ONE, ZERO};
use crate::rng::{stream_rng, unit_sphere_point};
use crate::roots::binary_form_roots;
use crate::tolerances::Tolerances;

const SPHERE_SEED: u64 = 0x5eed_5eed;
const POLISHED_CANDIDATES: usize = 8;
const DESCENT_STEPS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateMethod {
    /// Sylvester resultant of the two binary forms (exact criterion, k = 1).
    Resultant,
    /// Minimum of ||F|| over sampled and locally minimized unit-sphere points.
    /// Heuristic: a common zero between samples can be missed.
    SphereSampling,
}

/// Evidence that `F^{-1}(0) = {0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub method: CertificateMethod,
    pub witness: f64,
    pub threshold: f64,
    pub heuristic: bool,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    /// `(z_0^d, ..., z_k^d)`.
    Power { dim: usize, degree: u32 },
    /// Lift `(z^2 + c w^2, w^2)` of `z^2 + c`.
    QuadraticFamily { c: Complex64 },
    /// Lift `(w^d, z^d)` of `z^{-d}`.
    InversePower { degree: u32 },
}

pub const PRESET_HELP: &[(&str, &str)] = &[
    ("power(d)", "(z_0^d, ..., z_k^d) on P^k"),
    ("quadratic_family(c_re, c_im)", "lift of z^2 + c on P^1"),
    ("inverse_power(d)", "lift (w^d, z^d) of z^-d on P^1"),
];

impl Preset {
    /// Parse `power(2)`, `quadratic_family(-1, 0)` or `inverse_power(2)`.
    /// `dim` is only consulted by `power`.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let text: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let (name, rest) = text
            .split_once('(')
            .ok_or_else(|| Error::InvalidMap(format!("unknown preset `{text}`")))?;
        let args = rest
            .strip_suffix(')')
            .ok_or_else(|| Error::InvalidMap(format!("unbalanced parentheses in `{text}`")))?;
        let nums = args
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::InvalidMap(format!("bad preset argument `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let degree = |nums: &[f64]| -> Result<u32> {
            match nums {
                [d] if d.fract() == 0.0 && *d >= 2.0 && *d <= 64.0 => Ok(*d as u32),
                _ => Err(Error::InvalidMap(format!(
                    "`{name}` takes one integer degree >= 2"
                ))),
            }
        };
        match name {
            "power" => Ok(Preset::Power {
                dim,
                degree: degree(&nums)?,
            }),
            "inverse_power" => Ok(Preset::InversePower {
                degree: degree(&nums)?,
            }),
            "quadratic_family" => match nums.as_slice() {
                [re] => Ok(Preset::QuadraticFamily {
                    c: Complex64::new(*re, 0.0),
                }),
                [re, im] => Ok(Preset::QuadraticFamily {
                    c: Complex64::new(*re, *im),
                }),
                _ => Err(Error::InvalidMap(
                    "quadratic_family takes (c_re) or (c_re, c_im)".into(),
                )),
            },
            _ => Err(Error::InvalidMap(format!("unknown preset `{name}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Preset::Power { dim, .. } => *dim,
            _ => 1,
        }
    }

    fn components(&self) -> Result<Vec<HomogeneousPolynomial>> {
        match *self {
            Preset::Power { dim, degree } => (0..=dim)
                .map(|i| HomogeneousPolynomial::monomial(dim + 1, i, degree, ONE))
                .collect(),
            Preset::QuadraticFamily { c } => Ok(vec![
                HomogeneousPolynomial::new(2, 2, [(vec![2, 0], ONE), (vec![0, 2], c)])?,
                HomogeneousPolynomial::monomial(2, 1, 2, ONE)?,
            ]),
            Preset::InversePower { degree } => Ok(vec![
                HomogeneousPolynomial::monomial(2, 1, degree, ONE)?,
                HomogeneousPolynomial::monomial(2, 0, degree, ONE)?,
            ]),
        }
    }

    /// Points known to be totally invariant (or totally invariant cycles).
    pub fn known_exceptional_points(&self) -> Vec<ProjectivePoint> {
        match *self {
            Preset::Power { dim, .. } => {
                (0..=dim).map(|i| ProjectivePoint::basis(dim, i)).collect()
            }
            Preset::QuadraticFamily { .. } => vec![ProjectivePoint::infinity()],
            Preset::InversePower { .. } => {
                vec![ProjectivePoint::basis(1, 1), ProjectivePoint::infinity()]
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Power { degree, .. } => write!(f, "power({degree})"),
            Preset::QuadraticFamily { c } => write!(f, "quadratic_family({}, {})", c.re, c.im),
            Preset::InversePower { degree } => write!(f, "inverse_power({degree})"),
        }
    }
}

/// Either a preset name or explicit component term lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComponentsSpec {
    Preset(String),
    Explicit(Vec<Vec<TermSpec>>),
}

/// The map-definition file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDefinition {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    pub components: ComponentsSpec,
}

fn default_dim() -> usize {
    1
}

impl MapDefinition {
    pub fn preset(name: &str, dim: usize) -> Self {
        Self {
            dim,
            degree: None,
            components: ComponentsSpec::Preset(name.to_string()),
        }
    }
}

#[derive(Debug)]
pub struct EndomorphismMap {
    dim: usize,
    degree: u32,
    components: Vec<HomogeneousPolynomial>,
    certificate: Certificate,
    preset: Option<Preset>,
    critical_points: Vec<ProjectivePoint>,
    critical_values: Vec<ProjectivePoint>,
    sphere_samples: usize,
    safety: f64,
    map_constant: OnceLock<f64>,
}

impl Clone for EndomorphismMap {
    fn clone(&self) -> Self {
        let map_constant = OnceLock::new();
        if let Some(v) = self.map_constant.get() {
            let _ = map_constant.set(*v);
        }
        Self {
            dim: self.dim,
            degree: self.degree,
            components: self.components.clone(),
            certificate: self.certificate.clone(),
            preset: self.preset,
            critical_points: self.critical_points.clone(),
            critical_values: self.critical_values.clone(),
            sphere_samples: self.sphere_samples,
            safety: self.safety,
            map_constant,
        }
    }
}

impl EndomorphismMap {
    /// Validates shapes and runs [`check_nondegenerate`].
    pub fn new(components: Vec<HomogeneousPolynomial>, tol: &Tolerances) -> Result<Self> {
        Self::build(components, None, tol)
    }

    pub fn from_preset(preset: Preset, tol: &Tolerances) -> Result<Self> {
        Self::build(preset.components()?, Some(preset), tol)
    }

    pub fn power(dim: usize, degree: u32, tol: &Tolerances) -> Result<Self> {
        Self::from_preset(Preset::Power { dim, degree }, tol)
    }

    pub fn quadratic_family(c: Complex64, tol: &Tolerances) -> Result<Self> {
        Self::from_preset(Preset::QuadraticFamily { c }, tol)
    }

    pub fn from_definition(def: &MapDefinition, tol: &Tolerances) -> Result<Self> {
        let map = match &def.components {
            ComponentsSpec::Preset(name) => Self::from_preset(Preset::parse(name, def.dim)?, tol)?,
            ComponentsSpec::Explicit(comps) => {
                let degree = match (def.degree, comps.first().and_then(|c| c.first())) {
                    (Some(d), _) => d,
                    (None, Some(t)) => t.exps.iter().sum(),
                    (None, None) => return Err(Error::InvalidMap("no components".into())),
                };
                let polys = comps
                    .iter()
                    .map(|terms| HomogeneousPolynomial::from_specs(def.dim + 1, degree, terms))
                    .collect::<Result<Vec<_>>>()?;
                Self::new(polys, tol)?
            }
        };
        if map.dim != def.dim {
            return Err(Error::InvalidMap(format!(
                "preset lives on P^{}, definition says dim {}",
                map.dim, def.dim
            )));
        }
        if let Some(d) = def.degree {
            if d != map.degree {
                return Err(Error::InvalidMap(format!(
                    "declared degree {d} but components have degree {}",
                    map.degree
                )));
            }
        }
        Ok(map)
    }

    pub fn from_json(text: &str, tol: &Tolerances) -> Result<Self> {
        let def: MapDefinition = serde_json::from_str(text)?;
        Self::from_definition(&def, tol)
    }

    fn build(
        components: Vec<HomogeneousPolynomial>,
        preset: Option<Preset>,
        tol: &Tolerances,
    ) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidMap("no components".into()))?;
        let nvars = first.nvars();
        let degree = first.degree();
        if components.len() != nvars {
            return Err(Error::InvalidMap(format!(
                "{} components for {} variables",
                components.len(),
                nvars
            )));
        }
        if components
            .iter()
            .any(|c| c.nvars() != nvars || c.degree() != degree)
        {
            return Err(Error::InvalidMap(
                "components must share variables and degree".into(),
            ));
        }
        if degree < 2 {
            return Err(Error::InvalidMap(
                "algebraic degree must be at least 2".into(),
            ));
        }
        let certificate = check_nondegenerate(&components, tol)?;
        let mut map = Self {
            dim: nvars - 1,
            degree,
            components,
            certificate,
            preset,
            critical_points: Vec::new(),
            critical_values: Vec::new(),
            sphere_samples: tol.sphere_samples.max(1),
            safety: tol.map_constant_safety,
            map_constant: OnceLock::new(),
        };
        if map.dim == 1 {
            map.critical_points = map.wronskian_roots(tol)?;
            map.critical_values = map
                .critical_points
                .iter()
                .map(|p| evaluate_map(&map, p).map(|(q, _)| q))
                .collect::<Result<_>>()?;
        }
        Ok(map)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn components(&self) -> &[HomogeneousPolynomial] {
        &self.components
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    pub fn preset(&self) -> Option<Preset> {
        self.preset
    }

    /// The `2d - 2` critical points (with repetition) on P^1; empty for k >= 2.
    pub fn critical_points(&self) -> &[ProjectivePoint] {
        &self.critical_points
    }

    pub fn critical_values(&self) -> &[ProjectivePoint] {
        &self.critical_values
    }

    pub fn known_exceptional_points(&self) -> Vec<ProjectivePoint> {
        self.preset
            .map(|p| p.known_exceptional_points())
            .unwrap_or_default()
    }

    pub fn to_definition(&self) -> MapDefinition {
        match self.preset {
            Some(p) => MapDefinition::preset(&p.to_string(), self.dim),
            None => MapDefinition {
                dim: self.dim,
                degree: Some(self.degree),
                components: ComponentsSpec::Explicit(
                    self.components.iter().map(|c| c.to_specs()).collect(),
                ),
            },
        }
    }

    pub fn describe(&self) -> String {
        match self.preset {
            Some(p) => format!("{p} on P^{}", self.dim),
            None => format!("explicit degree-{} map on P^{}", self.degree, self.dim),
        }
    }

    /// `F(z)` without normalization.
    pub fn apply_raw(&self, z: &[Complex64]) -> Vec<Complex64> {
        self.components.iter().map(|c| c.eval(z)).collect()
    }

    /// `C_F = sup_{||z||=1} |log ||F(z)|||`, estimated on sphere samples and
    /// inflated by the safety factor.
    pub fn map_constant(&self) -> f64 {
        *self.map_constant.get_or_init(|| {
            let mut rng = stream_rng(SPHERE_SEED, 1);
            let mut worst = 0.0f64;
            for _ in 0..self.sphere_samples {
                let z = unit_sphere_point(&mut rng, self.dim + 1);
                let v = euclidean_norm(&self.apply_raw(&z)).ln().abs();
                worst = worst.max(v);
            }
            // Coordinate points are where power-type maps attain their extremes.
            for i in 0..=self.dim {
                let z = ProjectivePoint::basis(self.dim, i);
                let v = euclidean_norm(&self.apply_raw(z.coords())).ln().abs();
                worst = worst.max(v);
            }
            worst * self.safety
        })
    }

    fn wronskian_roots(&self, tol: &Tolerances) -> Result<Vec<ProjectivePoint>> {
        let d = self.degree as usize;
        let a = self.components[0].binary_coefficients()?;
        let b = self.components[1].binary_coefficients()?;
        // d/dz of sum c_j z^j w^(d-j) has coefficient (j+1) c_(j+1) at z^j;
        // d/dw has coefficient (d-j) c_j at z^j.
        let dz = |c: &[Complex64]| -> Vec<Complex64> {
            (0..d).map(|j| c[j + 1] * (j + 1) as f64).collect()
        };
        let dw =
            |c: &[Complex64]| -> Vec<Complex64> { (0..d).map(|j| c[j] * (d - j) as f64).collect() };
        let w: Vec<Complex64> = convolve(&dz(&a), &dw(&b))
            .iter()
            .zip(convolve(&dw(&a), &dz(&b)))
            .map(|(x, y)| x - y)
            .collect();
        binary_form_roots(&w, tol.solver, tol.aberth_min_degree)
    }
}

fn convolve(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `f(p)` in canonical form plus `log ||F(p)||_sup` at the canonical lift.
pub fn evaluate_map(f: &EndomorphismMap, p: &ProjectivePoint) -> Result<(ProjectivePoint, f64)> {
    if p.dim() != f.dim {
        return Err(Error::DimMismatch {
            expected: f.dim,
            found: p.dim(),
        });
    }
    let image = f.apply_raw(p.coords());
    let norm = sup_norm(&image);
    let scale: f64 = f
        .components
        .iter()
        .map(|c| c.coefficient_sum())
        .fold(0.0, f64::max);
    if !(norm > 1e-14 * scale) || !norm.is_finite() {
        return Err(Error::DegenerateImage {
            coords: p.to_string(),
            norm,
        });
    }
    Ok((normalize(&image)?, norm.ln()))
}

/// Certify `F^{-1}(0) = {0}`: the Sylvester resultant for k = 1, sphere
/// sampling followed by local minimization of `||F||` for k >= 2.
pub fn check_nondegenerate(
    components: &[HomogeneousPolynomial],
    tol: &Tolerances,
) -> Result<Certificate> {
    if components.len() == 2 {
        let witness = normalized_resultant(&components[0], &components[1])?;
        if !(witness > tol.resultant) {
            return Err(Error::Degenerate {
                method: "resultant",
                witness,
                threshold: tol.resultant,
            });
        }
        return Ok(Certificate {
            method: CertificateMethod::Resultant,
            witness,
            threshold: tol.resultant,
            heuristic: false,
            samples: 0,
        });
    }
    let witness = sphere_minimum(components, tol.sphere_samples.max(1));
    if !(witness > tol.sphere_threshold) {
        return Err(Error::Degenerate {
            method: "sphere sampling",
            witness,
            threshold: tol.sphere_threshold,
        });
    }
    Ok(Certificate {
        method: CertificateMethod::SphereSampling,
        witness,
        threshold: tol.sphere_threshold,
        heuristic: true,
        samples: tol.sphere_samples,
    })
}

/// `|Res(P, Q)|` with each form scaled to unit sup-norm coefficients.
pub fn normalized_resultant(p: &HomogeneousPolynomial, q: &HomogeneousPolynomial) -> Result<f64> {
    let scaled = |f: &HomogeneousPolynomial| -> Result<Vec<Complex64>> {
        let s = f.coefficient_sup();
        // Decreasing powers of z: a_i multiplies z^(d-i) w^i.
        Ok(f.binary_coefficients()?
            .into_iter()
            .rev()
            .map(|c| c / s)
            .collect())
    };
    let a = scaled(p)?;
    let b = scaled(q)?;
    let m = a.len() - 1;
    let n = b.len() - 1;
    let size = m + n;
    let mut s = DMatrix::<Complex64>::zeros(size, size);
    for row in 0..n {
        for (i, c) in a.iter().enumerate() {
            s[(row, row + i)] = *c;
        }
    }
    for row in 0..m {
        for (i, c) in b.iter().enumerate() {
            s[(n + row, row + i)] = *c;
        }
    }
    Ok(s.determinant().norm())
}

fn sphere_minimum(components: &[HomogeneousPolynomial], samples: usize) -> f64 {
    let n = components.len();
    let scale: f64 = components
        .iter()
        .map(|c| c.coefficient_sup())
        .fold(0.0, f64::max);
    let value = |z: &[Complex64]| -> f64 {
        let v: Vec<Complex64> = components.iter().map(|c| c.eval(z)).collect();
        euclidean_norm(&v) / scale
    };
    let mut rng = stream_rng(SPHERE_SEED, 0);
    let mut pts: Vec<(f64, Vec<Complex64>)> = (0..samples)
        .map(|_| {
            let z = unit_sphere_point(&mut rng, n);
            (value(&z), z)
        })
        .collect();
    for i in 0..n {
        let z = ProjectivePoint::basis(n - 1, i).coords().to_vec();
        pts.push((value(&z), z));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.truncate(POLISHED_CANDIDATES);
    pts.into_iter()
        .map(|(v, z)| descend(components, z, v, &value))
        .fold(f64::INFINITY, f64::min)
}

/// Projected gradient descent of `||F||^2` on the unit sphere.
fn descend(
    components: &[HomogeneousPolynomial],
    mut z: Vec<Complex64>,
    mut best: f64,
    value: &dyn Fn(&[Complex64]) -> f64,
) -> f64 {
    let n = z.len();
    let mut step = 0.1;
    for _ in 0..DESCENT_STEPS {
        let f: Vec<Complex64> = components.iter().map(|c| c.eval(&z)).collect();
        // d||F||^2 / d conj(z_j) = sum_i F_i conj(dF_i/dz_j)
        let mut g: Vec<Complex64> = (0..n)
            .map(|j| {
                components
                    .iter()
                    .zip(&f)
                    .map(|(c, fi)| fi * c.eval_partial(j, &z).conj())
                    .sum()
            })
            .collect();
        let radial: Complex64 = g.iter().zip(&z).map(|(gi, zi)| gi * zi.conj()).sum();
        for (gi, zi) in g.iter_mut().zip(&z) {
            *gi -= radial * zi;
        }
        let gn = euclidean_norm(&g);
        if gn == 0.0 {
            break;
        }
        let mut improved = false;
        while step > 1e-14 {
            let cand: Vec<Complex64> = z
                .iter()
                .zip(&g)
                .map(|(zi, gi)| zi - gi * (step / gn))
                .collect();
            let cn = euclidean_norm(&cand);
            let cand: Vec<Complex64> = cand.into_iter().map(|c| c / cn).collect();
            let v = value(&cand);
            if v < best {
                best = v;
                z = cand;
                improved = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn power_resultant_is_one() {
        let f = EndomorphismMap::power(1, 2, &tol()).unwrap();
        assert_eq!(f.certificate().method, CertificateMethod::Resultant);
        assert_abs_diff_eq!(f.certificate().witness, 1.0, epsilon = 1e-14);
        assert!(!f.certificate().heuristic);
    }

    #[test]
    fn common_zero_is_rejected() {
        let zw = HomogeneousPolynomial::new(2, 2, [(vec![1, 1], c(1.0))]).unwrap();
        let w2 = HomogeneousPolynomial::monomial(2, 1, 2, c(1.0)).unwrap();
        let err = EndomorphismMap::new(vec![zw, w2], &tol()).unwrap_err();
        assert!(matches!(
            err,
            Error::Degenerate {
                method: "resultant",
                ..
            }
        ));
    }

    #[test]
    fn shifted_square_is_nondegenerate() {
        let p = HomogeneousPolynomial::new(2, 2, [(vec![2, 0], c(1.0)), (vec![0, 2], c(-1.0))])
            .unwrap();
        let w2 = HomogeneousPolynomial::monomial(2, 1, 2, c(1.0)).unwrap();
        let f = EndomorphismMap::new(vec![p, w2], &tol()).unwrap();
        assert_abs_diff_eq!(f.certificate().witness, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn sphere_certificate_on_p2() {
        let f = EndomorphismMap::power(2, 2, &tol()).unwrap();
        let cert = f.certificate();
        assert_eq!(cert.method, CertificateMethod::SphereSampling);
        assert!(cert.heuristic);
        // min of sqrt(sum |z_i|^4) on the sphere is 1/sqrt(3).
        assert!(
            cert.witness > 0.57 && cert.witness < 0.6,
            "{}",
            cert.witness
        );
    }

    #[test]
    fn sphere_certificate_finds_common_zero_on_p2() {
        // (z w, w^2, t^2) vanishes at (1, 0, 0).
        let comps = vec![
            HomogeneousPolynomial::new(3, 2, [(vec![1, 1, 0], c(1.0))]).unwrap(),
            HomogeneousPolynomial::monomial(3, 1, 2, c(1.0)).unwrap(),
            HomogeneousPolynomial::monomial(3, 2, 2, c(1.0)).unwrap(),
        ];
        assert!(matches!(
            EndomorphismMap::new(comps, &tol()),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn evaluate_power_map() {
        let f = EndomorphismMap::power(1, 2, &tol()).unwrap();
        let p = ProjectivePoint::from_real(&[1.0, 0.5]).unwrap();
        let (q, s) = evaluate_map(&f, &p).unwrap();
        assert_eq!(q, ProjectivePoint::from_real(&[1.0, 0.25]).unwrap());
        assert_eq!(s, 0.0);
        let fixed = ProjectivePoint::basis(1, 1);
        assert_eq!(evaluate_map(&f, &fixed).unwrap(), (fixed.clone(), 0.0));
    }

    #[test]
    fn evaluate_rejects_dim_mismatch() {
        let f = EndomorphismMap::power(1, 2, &tol()).unwrap();
        assert!(evaluate_map(&f, &ProjectivePoint::basis(2, 0)).is_err());
    }

    #[test]
    fn presets_parse_and_agree() {
        let a = EndomorphismMap::from_preset(
            Preset::parse("quadratic_family(0, 0)", 1).unwrap(),
            &tol(),
        )
        .unwrap();
        let b =
            EndomorphismMap::from_preset(Preset::parse("power(2)", 1).unwrap(), &tol()).unwrap();
        assert_eq!(a.components(), b.components());
        assert!(Preset::parse("power(1)", 1).is_err());
        assert!(Preset::parse("nope(2)", 1).is_err());
    }

    #[test]
    fn definition_roundtrip() {
        let json = r#"{"dim":1,"degree":2,"components":[[{"exps":[2,0],"re":1,"im":0},{"exps":[0,2],"re":-1,"im":0}],[{"exps":[0,2],"re":1,"im":0}]]}"#;
        let f = EndomorphismMap::from_json(json, &tol()).unwrap();
        let g = EndomorphismMap::quadratic_family(c(-1.0), &tol()).unwrap();
        assert_eq!(f.components(), g.components());
        let def = f.to_definition();
        let again = EndomorphismMap::from_definition(&def, &tol()).unwrap();
        assert_eq!(again.components(), f.components());
        let bad = r#"{"dim":1,"components":"power(2)","extra":1}"#;
        assert!(EndomorphismMap::from_json(bad, &tol()).is_err());
    }

    #[test]
    fn critical_points_of_quadratic() {
        let f = EndomorphismMap::quadratic_family(c(-1.0), &tol()).unwrap();
        let crit = f.critical_points();
        assert_eq!(crit.len(), 2);
        // z^2 - 1 has critical points 0 and infinity.
        assert!(crit.iter().any(|p| p.is_infinity()));
        assert!(crit.iter().any(|p| p.affine_coordinate() == Some(c(0.0))));
        assert!(f
            .critical_values()
            .iter()
            .any(|p| p.affine_coordinate() == Some(c(-1.0))));
    }

    #[test]
    fn map_constant_bounds_power_map() {
        let f = EndomorphismMap::power(1, 2, &tol()).unwrap();
        // sup |log ||F||| = log sqrt 2 on the sphere, doubled.
        let m = f.map_constant();
        assert!(
            m >= 2.0 * 0.5f64.ln().abs() / 2.0 * 0.99 && m <= 2.0 * 0.3466 + 1e-3,
            "{m}"
        );
    }
}
