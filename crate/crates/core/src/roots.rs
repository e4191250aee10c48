//! Roots of binary forms on P^1.
//!
//! The form `sum_j c_j z^j w^(d-j)` is dehomogenized at `w = 1`. Vanishing
//! leading coefficients are roots at infinity, vanishing trailing ones are
//! roots at zero, and the rest go to a companion-matrix eigenvalue solve (or
//! Aberth–Ehrlich) followed by Newton polishing in whichever chart keeps the
//! root inside the unit disc.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::projective::{normalize, ProjectivePoint, ONE, ZERO};
use crate::tolerances::SolverBackend;

/// Coefficients below this fraction of the largest one count as zero when
/// detecting roots at zero and infinity.
const VANISHING: f64 = 1e-14;
const NEWTON_STEPS: usize = 40;
const ABERTH_STEPS: usize = 500;

/// All `d` roots of a binary form with repetition, unclustered.
pub fn binary_form_roots(
    coeffs: &[Complex64],
    backend: SolverBackend,
    aberth_min_degree: usize,
) -> Result<Vec<ProjectivePoint>> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(
            "binary form is identically zero or non-finite".into(),
        ));
    }
    let small = |c: &Complex64| c.norm() <= VANISHING * scale;
    let d = coeffs.len() - 1;
    let at_infinity = coeffs.iter().rev().take_while(|c| small(c)).count();
    let at_zero = coeffs.iter().take_while(|c| small(c)).count();
    let lo = at_zero;
    let hi = d - at_infinity;

    let mut out = Vec::with_capacity(d);
    if hi > lo {
        // p(z) = sum_{j=lo}^{hi} c_j z^(j-lo), degree hi - lo, nonzero ends.
        let poly: Vec<Complex64> = coeffs[lo..=hi].to_vec();
        let use_aberth = match backend {
            SolverBackend::Companion => false,
            SolverBackend::Aberth => true,
            SolverBackend::Auto => poly.len() - 1 >= aberth_min_degree,
        };
        let raw = if use_aberth {
            aberth(&poly)
        } else {
            companion_eigenvalues(&poly).unwrap_or_else(|| aberth(&poly))
        };
        for z in raw {
            out.push(polish(&poly, z)?);
        }
    }
    for _ in 0..at_zero {
        out.push(ProjectivePoint::affine(ZERO)?);
    }
    for _ in 0..at_infinity {
        out.push(ProjectivePoint::infinity());
    }
    debug_assert_eq!(out.len(), d);
    Ok(out)
}

/// Horner evaluation of `sum_j p_j z^j` and its derivative.
fn horner(p: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut v = ZERO;
    let mut dv = ZERO;
    for &c in p.iter().rev() {
        dv = dv * z + v;
        v = v * z + c;
    }
    (v, dv)
}

fn linear_root(p: &[Complex64]) -> Complex64 {
    -p[0] / p[1]
}

fn companion_eigenvalues(p: &[Complex64]) -> Option<Vec<Complex64>> {
    let r = p.len() - 1;
    if r == 1 {
        return Some(vec![linear_root(p)]);
    }
    let lead = p[r];
    let mut m = DMatrix::<Complex64>::zeros(r, r);
    for i in 1..r {
        m[(i, i - 1)] = ONE;
    }
    for i in 0..r {
        m[(i, r - 1)] = -p[i] / lead;
    }
    let ev = Schur::try_new(m, f64::EPSILON, 10_000)?.eigenvalues()?;
    let v: Vec<Complex64> = ev.iter().copied().collect();
    v.iter()
        .all(|z| z.re.is_finite() && z.im.is_finite())
        .then_some(v)
}

/// Aberth–Ehrlich simultaneous iteration.
pub(crate) fn aberth(p: &[Complex64]) -> Vec<Complex64> {
    let r = p.len() - 1;
    if r == 1 {
        return vec![linear_root(p)];
    }
    let lead = p[r].norm();
    // Fujiwara-style radius for the initial circle.
    let radius = (0..r)
        .map(|j| (p[j].norm() / lead).powf(1.0 / (r - j) as f64))
        .fold(0.0, f64::max)
        .max(1e-3);
    let mut z: Vec<Complex64> = (0..r)
        .map(|j| Complex64::from_polar(radius, 0.4 + std::f64::consts::TAU * j as f64 / r as f64))
        .collect();
    for _ in 0..ABERTH_STEPS {
        let mut moved = 0.0f64;
        for i in 0..r {
            let (v, dv) = horner(p, z[i]);
            if v == ZERO {
                continue;
            }
            let ratio = v / dv;
            let repulsion: Complex64 = (0..r)
                .filter(|&j| j != i)
                .map(|j| {
                    let diff = z[i] - z[j];
                    if diff == ZERO {
                        ZERO
                    } else {
                        ONE / diff
                    }
                })
                .sum();
            let step = ratio / (ONE - ratio * repulsion);
            if step.re.is_finite() && step.im.is_finite() {
                z[i] -= step;
                moved = moved.max(step.norm() / z[i].norm().max(1.0));
            }
        }
        if moved < 4.0 * f64::EPSILON {
            break;
        }
    }
    z
}

/// Newton polishing; keeps a step only if it lowers the residual.
fn polish(p: &[Complex64], z0: Complex64) -> Result<ProjectivePoint> {
    if z0.norm() <= 1.0 {
        let z = newton(p, z0);
        normalize(&[z, ONE])
    } else {
        let rev: Vec<Complex64> = p.iter().rev().copied().collect();
        let w = newton(&rev, ONE / z0);
        normalize(&[ONE, w])
    }
}

fn newton(p: &[Complex64], mut z: Complex64) -> Complex64 {
    let (mut v, mut dv) = horner(p, z);
    for _ in 0..NEWTON_STEPS {
        if v == ZERO || dv == ZERO {
            break;
        }
        let step = v / dv;
        let cand = z - step;
        let (cv, cdv) = horner(p, cand);
        if !(cv.norm() < v.norm()) || !cand.re.is_finite() || !cand.im.is_finite() {
            break;
        }
        z = cand;
        v = cv;
        dv = cdv;
        if step.norm() <= 4.0 * f64::EPSILON * z.norm().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projective::fs_distance;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sorted_affine(roots: &[ProjectivePoint]) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = roots.iter().filter_map(|r| r.affine_coordinate()).collect();
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn quadratic_roots() {
        // z^2 - 1
        let r = binary_form_roots(&[c(-1.0, 0.0), ZERO, ONE], SolverBackend::Companion, 8).unwrap();
        let v = sorted_affine(&r);
        assert!((v[0] - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((v[1] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn roots_at_zero_and_infinity() {
        // w^2: double root at infinity.
        let r = binary_form_roots(&[ONE, ZERO, ZERO], SolverBackend::Companion, 8).unwrap();
        assert!(r.iter().all(|p| p.is_infinity()));
        // z^2: double root at zero.
        let r = binary_form_roots(&[ZERO, ZERO, ONE], SolverBackend::Companion, 8).unwrap();
        assert!(r.iter().all(|p| p.affine_coordinate() == Some(ZERO)));
        // z w: one of each.
        let r = binary_form_roots(&[ZERO, ONE, ZERO], SolverBackend::Companion, 8).unwrap();
        assert_eq!(r.iter().filter(|p| p.is_infinity()).count(), 1);
    }

    #[test]
    fn huge_root_is_polished_in_the_other_chart() {
        // 1e-9 z - 1 has root 1e9; in the w chart it is 1e-9.
        let r =
            binary_form_roots(&[c(-1.0, 0.0), c(1e-9, 0.0)], SolverBackend::Companion, 8).unwrap();
        assert_eq!(r[0].chart(), 0);
        assert!((r[0].coords()[1] - c(1e-9, 0.0)).norm() < 1e-22);
    }

    #[test]
    fn aberth_agrees_with_companion() {
        let p = vec![
            c(0.3, -0.2),
            c(-1.0, 0.5),
            c(0.0, 2.0),
            c(1.5, 0.0),
            c(-0.7, 0.1),
            c(1.0, 0.0),
        ];
        let a = binary_form_roots(&p, SolverBackend::Aberth, 8).unwrap();
        let b = binary_form_roots(&p, SolverBackend::Companion, 8).unwrap();
        for x in &a {
            let best = b
                .iter()
                .map(|y| fs_distance(x, y).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-12, "{x} unmatched: {best}");
        }
    }

    #[test]
    fn identically_zero_form_is_rejected() {
        assert!(binary_form_roots(&[ZERO, ZERO], SolverBackend::Auto, 8).is_err());
    }
}
