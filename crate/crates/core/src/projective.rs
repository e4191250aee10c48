//! Points of P^k in canonical homogeneous coordinates and the chordal metric.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type ComplexScalar = Complex64;

pub(crate) const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub(crate) const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// A point of P^k. The coordinate of largest modulus is exactly 1 (lowest
/// index wins ties) and every other coordinate lies in the closed unit disc.
#[derive(Clone, PartialEq)]
pub struct ProjectivePoint {
    coords: Vec<Complex64>,
}

/// Scale `raw` to the canonical representative of its projective class.
pub fn normalize(raw: &[Complex64]) -> Result<ProjectivePoint> {
    if raw.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a point of P^k needs at least 2 coordinates, got {}",
            raw.len()
        )));
    }
    if raw.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::AllZero);
    }
    let mut pivot = 0;
    let mut best = raw[0].norm();
    for (i, c) in raw.iter().enumerate().skip(1) {
        let m = c.norm();
        if m > best {
            best = m;
            pivot = i;
        }
    }
    if !(best > 0.0) || !best.is_finite() {
        return Err(Error::AllZero);
    }
    let mut coords = raw.to_vec();
    if coords[pivot] != ONE {
        let scale = coords[pivot];
        for (i, c) in coords.iter_mut().enumerate() {
            if i != pivot {
                *c /= scale;
            }
        }
        coords[pivot] = ONE;
    }
    // Rounding in the division can push a coordinate onto or past the unit
    // circle; pull it back so the pivot stays the canonical choice.
    for (i, c) in coords.iter_mut().enumerate() {
        if i == pivot {
            continue;
        }
        let m = c.norm();
        if i < pivot && m >= 1.0 {
            *c *= (1.0 - f64::EPSILON) / m;
        } else if i > pivot && m > 1.0 {
            *c /= m;
        }
    }
    if coords
        .iter()
        .any(|c| !c.re.is_finite() || !c.im.is_finite())
    {
        return Err(Error::AllZero);
    }
    Ok(ProjectivePoint { coords })
}

impl ProjectivePoint {
    pub fn new(raw: &[Complex64]) -> Result<Self> {
        normalize(raw)
    }

    pub fn from_real(raw: &[f64]) -> Result<Self> {
        let v: Vec<Complex64> = raw.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        normalize(&v)
    }

    /// `[z : 1]` on P^1.
    pub fn affine(z: Complex64) -> Result<Self> {
        normalize(&[z, ONE])
    }

    /// `[1 : 0]` on P^1.
    pub fn infinity() -> Self {
        ProjectivePoint {
            coords: vec![ONE, ZERO],
        }
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    /// Index of the coordinate equal to 1.
    pub fn chart(&self) -> usize {
        self.coords
            .iter()
            .position(|c| *c == ONE)
            .expect("canonical point has a unit coordinate")
    }

    /// `z_0 / z_1` on P^1, `None` at infinity.
    pub fn affine_coordinate(&self) -> Option<Complex64> {
        let w = self.coords[1];
        if w == ZERO {
            None
        } else {
            Some(self.coords[0] / w)
        }
    }

    pub fn is_infinity(&self) -> bool {
        self.dim() == 1 && self.coords[1] == ZERO
    }

    pub fn euclidean_norm(&self) -> f64 {
        euclidean_norm(&self.coords)
    }

    /// The representative of Euclidean norm 1 obtained by scaling the canonical
    /// coordinates by a positive real.
    pub fn unit_representative(&self) -> Vec<Complex64> {
        let n = self.euclidean_norm();
        self.coords.iter().map(|c| c / n).collect()
    }

    /// Coordinate point `[0 : .. : 1 : .. : 0]` with the 1 at `index`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut coords = vec![ZERO; dim + 1];
        coords[index] = ONE;
        ProjectivePoint { coords }
    }

    /// Stereographic coordinate `2 z_0 conj(z_1) / |z|^2`. On P^1 this is the
    /// horizontal part of the unit-sphere image of the point: it equals `z` on
    /// the unit circle and vanishes at 0 and infinity.
    pub fn circle_coordinate(&self) -> Complex64 {
        let n2: f64 = self.coords.iter().map(|c| c.norm_sqr()).sum();
        self.coords[0] * self.coords[1].conj() * 2.0 / n2
    }
}

pub(crate) fn euclidean_norm(v: &[Complex64]) -> f64 {
    let scale = sup_norm(v);
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = v.iter().map(|c| (c / scale).norm_sqr()).sum();
    scale * s.sqrt()
}

pub(crate) fn sup_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Chordal distance `||z ^ w|| / (||z|| ||w||)`, the sine of the
/// Fubini–Study angle between the two lines.
pub fn fs_distance(p: &ProjectivePoint, q: &ProjectivePoint) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    Ok(chordal(&p.coords, &q.coords))
}

pub(crate) fn chordal(z: &[Complex64], w: &[Complex64]) -> f64 {
    let mut wedge = 0.0;
    for i in 0..z.len() {
        for j in (i + 1)..z.len() {
            wedge += (z[i] * w[j] - z[j] * w[i]).norm_sqr();
        }
    }
    let nz: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    let nw: f64 = w.iter().map(|c| c.norm_sqr()).sum();
    (wedge / (nz * nw)).sqrt().min(1.0)
}

impl fmt::Debug for ProjectivePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for ProjectivePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, " : ")?;
            }
            if c.im == 0.0 {
                write!(f, "{}", c.re)?;
            } else {
                write!(f, "{}{:+}i", c.re, c.im)?;
            }
        }
        write!(f, "]")
    }
}

/// One coordinate in a config file: a bare real or an `[re, im]` pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoordSpec {
    Real(f64),
    Complex([f64; 2]),
}

impl From<CoordSpec> for Complex64 {
    fn from(c: CoordSpec) -> Self {
        match c {
            CoordSpec::Real(x) => Complex64::new(x, 0.0),
            CoordSpec::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

impl Serialize for ProjectivePoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<[f64; 2]> = self.coords.iter().map(|c| [c.re, c.im]).collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProjectivePoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw: Vec<CoordSpec> = Vec::deserialize(d)?;
        let v: Vec<Complex64> = raw.into_iter().map(Complex64::from).collect();
        normalize(&v).map_err(serde::de::Error::custom)
    }
}

/// Parse `"z0:z1:..."` where each coordinate is a complex literal such as
/// `2`, `-0.5i` or `1+2i`.
pub fn parse_point(text: &str) -> Result<ProjectivePoint> {
    normalize(&parse_lift(text)?)
}

/// Coordinates of `"z0:z1:..."` as written, without normalizing.
pub fn parse_lift(text: &str) -> Result<Vec<Complex64>> {
    let text = text.trim().trim_start_matches('[').trim_end_matches(']');
    text.split(':')
        .map(|s| {
            let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
            s.parse::<Complex64>()
                .map_err(|_| Error::InvalidArgument(format!("cannot parse coordinate `{s}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn normalize_single_nonzero() {
        let p = normalize(&[c(0.0, 0.0), c(0.0, 3.0)]).unwrap();
        assert_eq!(p.coords(), &[ZERO, ONE]);
    }

    #[test]
    fn normalize_tie_goes_to_lowest_index() {
        let p = normalize(&[c(2.0, 0.0), c(2.0, 0.0)]).unwrap();
        assert_eq!(p.coords(), &[ONE, ONE]);
        assert_eq!(p.chart(), 0);
    }

    #[test]
    fn normalize_divides_by_pivot() {
        let p = normalize(&[c(1.0, 0.0), c(0.0, 2.0)]).unwrap();
        assert_abs_diff_eq!(p.coords()[0].re, 0.0);
        assert_abs_diff_eq!(p.coords()[0].im, -0.5);
        assert_eq!(p.coords()[1], ONE);
    }

    #[test]
    fn normalize_rejects_zero_and_nan() {
        assert!(matches!(normalize(&[ZERO, ZERO]), Err(Error::AllZero)));
        assert!(matches!(
            normalize(&[c(f64::NAN, 0.0), ONE]),
            Err(Error::AllZero)
        ));
        assert!(normalize(&[ONE]).is_err());
    }

    #[test]
    fn distance_examples() {
        let a = ProjectivePoint::from_real(&[1.0, 0.0]).unwrap();
        let b = ProjectivePoint::from_real(&[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(fs_distance(&a, &b).unwrap(), 1.0);
        assert_eq!(fs_distance(&a, &a).unwrap(), 0.0);
        let p = ProjectivePoint::from_real(&[1.0, 1.0]).unwrap();
        let q = ProjectivePoint::from_real(&[1.0, -1.0]).unwrap();
        assert_abs_diff_eq!(fs_distance(&p, &q).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn distance_dim_mismatch() {
        let a = ProjectivePoint::basis(1, 0);
        let b = ProjectivePoint::basis(2, 0);
        assert!(matches!(
            fs_distance(&a, &b),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn parse_point_literals() {
        let p = parse_point("[1 : 2i]").unwrap();
        assert_abs_diff_eq!(p.coords()[0].im, -0.5);
        assert!(parse_point("1:x").is_err());
        assert!(parse_point("0:0").is_err());
    }

    #[test]
    fn circle_coordinate_on_circle_is_identity() {
        let z = Complex64::from_polar(1.0, 0.7);
        let p = ProjectivePoint::affine(z).unwrap();
        let s = p.circle_coordinate();
        assert_abs_diff_eq!(s.re, z.re, epsilon = 1e-15);
        assert_abs_diff_eq!(s.im, z.im, epsilon = 1e-15);
        assert_eq!(ProjectivePoint::infinity().circle_coordinate(), ZERO);
    }
}
