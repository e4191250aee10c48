//! Renormalized forward orbits and the Green function
//! `G(z) = lim d^{-n} log ||F^n(z)||` on `C^{k+1} \ {0}`.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{evaluate_map, EndomorphismMap};
use crate::projective::{euclidean_norm, normalize, sup_norm, ProjectivePoint};

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitRecord {
    /// `n + 1` canonical points, starting at the initial point.
    pub points: Vec<ProjectivePoint>,
    /// `log ||F(points[j])||_sup` for `j < n`.
    pub log_scales: Vec<f64>,
}

pub fn orbit(f: &EndomorphismMap, p: &ProjectivePoint, n: usize) -> Result<OrbitRecord> {
    let mut points = Vec::with_capacity(n + 1);
    let mut log_scales = Vec::with_capacity(n);
    points.push(p.clone());
    for j in 0..n {
        let (next, s) = evaluate_map(f, &points[j])?;
        points.push(next);
        log_scales.push(s);
    }
    Ok(OrbitRecord { points, log_scales })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenEstimate {
    pub value: f64,
    pub depth: usize,
    /// Bound on `|G - G_depth|`: `map_constant * d^-depth / (d - 1)`.
    pub tail_bound: f64,
    pub map_constant: f64,
}

/// `G_n(z) = d^{-n} log ||F^n(z)||_2` at the lift `z`.
///
/// With `p_0` the canonical point of `z` and `s_j` the sup-norm scales along
/// its renormalized orbit, homogeneity gives
/// `G_n(z) = log ||z||_sup + sum_j d^{-j} log s_j + d^{-n} log ||p_n||_2`.
pub fn green_value(f: &EndomorphismMap, z: &[Complex64], n: usize) -> Result<GreenEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "Green depth must be at least 1".into(),
        ));
    }
    if z.len() != f.dim() + 1 {
        return Err(Error::DimMismatch {
            expected: f.dim(),
            found: z.len().saturating_sub(1),
        });
    }
    let p = normalize(z)?;
    let d = f.degree() as f64;
    let rec = orbit(f, &p, n)?;
    let mut value = sup_norm(z).ln();
    let mut weight = 1.0;
    for s in &rec.log_scales {
        weight /= d;
        value += weight * s;
    }
    value += weight * rec.points[n].euclidean_norm().ln();
    let map_constant = f.map_constant();
    Ok(GreenEstimate {
        value,
        depth: n,
        tail_bound: map_constant * weight / (d - 1.0),
        map_constant,
    })
}

/// Green function at the Euclidean-unit representative of `p`.
pub fn green_value_at(f: &EndomorphismMap, p: &ProjectivePoint, n: usize) -> Result<GreenEstimate> {
    green_value(f, &p.unit_representative(), n)
}

/// Smallest depth whose tail bound is at most `target`.
pub fn depth_for_tail(f: &EndomorphismMap, target: f64) -> usize {
    let d = f.degree() as f64;
    let c = f.map_constant() / (d - 1.0);
    if c <= target {
        return 1;
    }
    ((c / target).ln() / d.ln()).ceil().max(1.0) as usize
}

/// Closed form `max_i log |z_i|` for the Green function of `(z_0^d, ..., z_k^d)`.
pub fn green_exact_monomial(z: &[Complex64]) -> Result<f64> {
    if z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::AllZero);
    }
    let m = sup_norm(z);
    if m == 0.0 {
        return Err(Error::AllZero);
    }
    Ok(m.ln())
}

/// Write `point_id, re_0.., im_0.., n, G_n, tail_bound` rows.
pub fn write_green_csv<W: Write>(
    out: &mut W,
    dim: usize,
    rows: &[(Vec<Complex64>, GreenEstimate)],
) -> Result<()> {
    let mut header = vec!["point_id".to_string()];
    header.extend((0..=dim).map(|i| format!("re_{i}")));
    header.extend((0..=dim).map(|i| format!("im_{i}")));
    header.extend(["n", "G_n", "tail_bound"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    for (id, (z, g)) in rows.iter().enumerate() {
        let mut cols = vec![id.to_string()];
        cols.extend(z.iter().map(|c| c.re.to_string()));
        cols.extend(z.iter().map(|c| c.im.to_string()));
        cols.push(g.depth.to_string());
        cols.push(g.value.to_string());
        cols.push(g.tail_bound.to_string());
        writeln!(out, "{}", cols.join(","))?;
    }
    Ok(())
}

/// Green value of the image lift: `G(F(z)) = d G(z)`. Used by the
/// functional-equation checks.
pub fn green_of_image(f: &EndomorphismMap, z: &[Complex64], n: usize) -> Result<GreenEstimate> {
    let image = f.apply_raw(z);
    if euclidean_norm(&image) == 0.0 {
        return Err(Error::DegenerateImage {
            coords: format!("{z:?}"),
            norm: 0.0,
        });
    }
    green_value(f, &image, n)
}
