//! Exact preimages and backward-orbit trees on P^1.
//!
//! The fiber measure `mu_n^a = d^{-n} (f^n)^* delta_a` is stored unnormalized
//! as a [`FiberCloud`]: atoms with integer weights summing to `d^n`. The
//! weight of an atom `y` is the local degree of `f^n` at `y`, so the same tree
//! yields the pushforward operator `Lambda^n` and the multiplicities
//! `kappa_n`, `kappa_{-n}`.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{evaluate_map, EndomorphismMap};
use crate::measures::TestFunction;
use crate::projective::{chordal, fs_distance, normalize, ProjectivePoint, ONE, ZERO};
use crate::rng::stream_rng;
use crate::roots::binary_form_roots;
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, PartialEq)]
pub struct PreimageSet {
    pub target: ProjectivePoint,
    /// Distinct preimages with multiplicities summing to `d`.
    pub roots: Vec<(ProjectivePoint, u32)>,
    /// `fs_distance(f(root), target)` for each root.
    pub residuals: Vec<f64>,
}

impl PreimageSet {
    pub fn total_multiplicity(&self) -> u32 {
        self.roots.iter().map(|(_, m)| m).sum()
    }
}

fn require_p1(f: &EndomorphismMap) -> Result<()> {
    if f.dim() != 1 {
        return Err(Error::NotSupported(format!(
            "fibers are only computed on P^1, map lives on P^{}",
            f.dim()
        )));
    }
    Ok(())
}

/// Solve `a_1 F_0 - a_0 F_1 = 0` for `f^{-1}(a)`.
pub fn preimages_p1(
    f: &EndomorphismMap,
    a: &ProjectivePoint,
    tol: &Tolerances,
) -> Result<PreimageSet> {
    require_p1(f)?;
    if a.dim() != 1 {
        return Err(Error::DimMismatch {
            expected: 1,
            found: a.dim(),
        });
    }
    let [a0, a1] = [a.coords()[0], a.coords()[1]];
    let c0 = f.components()[0].binary_coefficients()?;
    let c1 = f.components()[1].binary_coefficients()?;
    let form: Vec<Complex64> = c0.iter().zip(&c1).map(|(x, y)| a1 * x - a0 * y).collect();
    let raw = binary_form_roots(&form, tol.solver, tol.aberth_min_degree)?;
    let mut roots = cluster(raw, tol.clustering)?;
    roots.sort_by(|(p, _), (q, _)| root_order(p, q));

    let near_critical = f
        .critical_values()
        .iter()
        .any(|cv| chordal(cv.coords(), a.coords()) <= tol.near_critical);
    let limit = if near_critical {
        tol.residual * f.degree() as f64
    } else {
        tol.residual
    };
    let mut residuals = Vec::with_capacity(roots.len());
    for (r, _) in &roots {
        let (img, _) = evaluate_map(f, r)?;
        let res = fs_distance(&img, a)?;
        if !(res <= limit) {
            return Err(Error::SolverFailure {
                residual: res,
                tolerance: limit,
            });
        }
        residuals.push(res);
    }
    Ok(PreimageSet {
        target: a.clone(),
        roots,
        residuals,
    })
}

/// Affine coordinate order by (re, im), infinity last.
fn root_order(p: &ProjectivePoint, q: &ProjectivePoint) -> std::cmp::Ordering {
    match (p.affine_coordinate(), q.affine_coordinate()) {
        (Some(a), Some(b)) => a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    }
}

/// Single-linkage clustering under the chordal metric. Each cluster is
/// replaced by the mean of its members taken in the chart of its first member.
fn cluster(raw: Vec<ProjectivePoint>, radius: f64) -> Result<Vec<(ProjectivePoint, u32)>> {
    let n = raw.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if chordal(raw[i].coords(), raw[j].coords()) <= radius {
                let (ri, rj) = (find(&mut label, i), find(&mut label, j));
                if ri != rj {
                    label[rj.max(ri)] = rj.min(ri);
                }
            }
        }
    }
    let mut out = Vec::new();
    for root in 0..n {
        if find(&mut label, root) != root {
            continue;
        }
        let members: Vec<&ProjectivePoint> = (0..n)
            .filter(|&i| find(&mut label, i) == root)
            .map(|i| &raw[i])
            .collect();
        if members.len() == 1 {
            out.push((members[0].clone(), 1));
            continue;
        }
        let pivot = members[0].chart();
        let mut sum = [ZERO, ZERO];
        for m in &members {
            let s = m.coords()[pivot];
            sum[0] += m.coords()[0] / s;
            sum[1] += m.coords()[1] / s;
        }
        let k = members.len() as f64;
        sum[pivot] = ONE;
        sum[1 - pivot] /= k;
        out.push((normalize(&sum)?, members.len() as u32));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum FiberMode {
    Exact,
    /// `count` independent backward walks; walk `i` draws from stream `i` of `seed`.
    Sampled {
        count: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberCloud {
    pub base: ProjectivePoint,
    pub depth: u32,
    pub atoms: Vec<(ProjectivePoint, u64)>,
    pub mode: FiberMode,
}

impl FiberCloud {
    pub fn total_weight(&self) -> u64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }

    pub fn max_weight(&self) -> u64 {
        self.atoms.iter().map(|(_, w)| *w).max().unwrap_or(0)
    }

    /// `sum weight * phi(atom)`, accumulated in atom order.
    pub fn weighted_sum(&self, phi: &TestFunction) -> f64 {
        let vals: Vec<f64> = self
            .atoms
            .par_iter()
            .map(|(p, w)| *w as f64 * phi.eval(p))
            .collect();
        vals.iter().sum()
    }
}

/// Depth-`n` backward orbit of `a`.
pub fn backward_orbit(
    f: &EndomorphismMap,
    a: &ProjectivePoint,
    n: u32,
    mode: FiberMode,
    tol: &Tolerances,
) -> Result<FiberCloud> {
    require_p1(f)?;
    match mode {
        FiberMode::Exact => {
            let required = (f.degree() as f64).powi(n as i32);
            if required > tol.fiber_cap as f64 {
                return Err(Error::CapExceeded {
                    required,
                    cap: tol.fiber_cap,
                });
            }
            let mut level = vec![(a.clone(), 1u64)];
            for _ in 0..n {
                level = expand(f, &level, tol)?;
            }
            Ok(FiberCloud {
                base: a.clone(),
                depth: n,
                atoms: level,
                mode,
            })
        }
        FiberMode::Sampled { count, seed } => {
            if count == 0 {
                return Err(Error::InvalidArgument(
                    "sample count must be at least 1".into(),
                ));
            }
            let atoms = (0..count)
                .into_par_iter()
                .map(|i| sample_walk(f, a, n, seed, i as u64, tol).map(|p| (p, 1u64)))
                .collect::<Result<Vec<_>>>()?;
            Ok(FiberCloud {
                base: a.clone(),
                depth: n,
                atoms,
                mode,
            })
        }
    }
}

/// Exact backward orbit expanded level by level; `visit` sees every depth
/// from 0 to `n_max` in order.
pub fn backward_orbit_levels(
    f: &EndomorphismMap,
    a: &ProjectivePoint,
    n_max: u32,
    tol: &Tolerances,
    mut visit: impl FnMut(u32, &[(ProjectivePoint, u64)]) -> Result<()>,
) -> Result<()> {
    require_p1(f)?;
    let required = (f.degree() as f64).powi(n_max as i32);
    if required > tol.fiber_cap as f64 {
        return Err(Error::CapExceeded {
            required,
            cap: tol.fiber_cap,
        });
    }
    let mut level = vec![(a.clone(), 1u64)];
    visit(0, &level)?;
    for depth in 1..=n_max {
        level = expand(f, &level, tol)?;
        visit(depth, &level)?;
    }
    Ok(())
}

fn expand(
    f: &EndomorphismMap,
    level: &[(ProjectivePoint, u64)],
    tol: &Tolerances,
) -> Result<Vec<(ProjectivePoint, u64)>> {
    let children: Vec<Vec<(ProjectivePoint, u64)>> = level
        .par_iter()
        .map(|(p, w)| {
            preimages_p1(f, p, tol).map(|set| {
                set.roots
                    .into_iter()
                    .map(|(r, m)| (r, w * m as u64))
                    .collect()
            })
        })
        .collect::<Result<_>>()?;
    Ok(children.into_iter().flatten().collect())
}

/// One backward random walk: at each step a preimage is chosen with
/// probability multiplicity / d.
pub fn sample_walk(
    f: &EndomorphismMap,
    a: &ProjectivePoint,
    n: u32,
    seed: u64,
    stream: u64,
    tol: &Tolerances,
) -> Result<ProjectivePoint> {
    Ok(sample_path(f, a, n, seed, stream, tol)?
        .pop()
        .expect("path contains the start"))
}

/// The whole backward walk `a = x_0, x_1, ..., x_n` with `f(x_{j+1}) = x_j`.
pub fn sample_path(
    f: &EndomorphismMap,
    a: &ProjectivePoint,
    n: u32,
    seed: u64,
    stream: u64,
    tol: &Tolerances,
) -> Result<Vec<ProjectivePoint>> {
    let mut rng = stream_rng(seed, stream);
    let d = f.degree();
    let mut path = Vec::with_capacity(n as usize + 1);
    path.push(a.clone());
    for _ in 0..n {
        let set = preimages_p1(f, path.last().expect("nonempty"), tol)?;
        let mut pick = rng.random_range(0..d);
        let mut chosen = None;
        for (r, m) in set.roots {
            if pick < m {
                chosen = Some(r);
                break;
            }
            pick -= m;
        }
        path.push(chosen.expect("multiplicities sum to d"));
    }
    Ok(path)
}

/// `Lambda^n phi(a) = sum_{b in f^{-n}(a)} phi(b)` on P^1; dividing by `d^n`
/// gives `<mu_n^a, phi>`.
pub fn lambda_apply(
    f: &EndomorphismMap,
    phi: &TestFunction,
    a: &ProjectivePoint,
    n: u32,
    tol: &Tolerances,
) -> Result<f64> {
    let cloud = backward_orbit(f, a, n, FiberMode::Exact, tol)?;
    Ok(cloud.weighted_sum(phi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplicityReport {
    pub point: ProjectivePoint,
    /// `kappa_1` at `x, f(x), ..., f^{n-1}(x)`.
    pub kappa_along_orbit: Vec<u32>,
    pub kappa_n: u64,
    pub kappa_minus_n: u64,
    pub depth: u32,
    /// `kappa_minus_n^{1/depth}`, the finite-depth backward multiplicity rate.
    pub rate: f64,
}

/// Local degree of `f` at `y`: the multiplicity of `y` among `f^{-1}(f(y))`.
pub fn local_degree(f: &EndomorphismMap, y: &ProjectivePoint, tol: &Tolerances) -> Result<u32> {
    let (img, _) = evaluate_map(f, y)?;
    let set = preimages_p1(f, &img, tol)?;
    let (_, m) = set
        .roots
        .iter()
        .map(|(r, m)| (chordal(r.coords(), y.coords()), *m))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one preimage");
    Ok(m)
}

pub fn multiplicity_kappa(
    f: &EndomorphismMap,
    x: &ProjectivePoint,
    n: u32,
    tol: &Tolerances,
) -> Result<MultiplicityReport> {
    require_p1(f)?;
    let mut along = Vec::with_capacity(n as usize);
    let mut y = x.clone();
    for _ in 0..n {
        along.push(local_degree(f, &y, tol)?);
        y = evaluate_map(f, &y)?.0;
    }
    let kappa_n = along.iter().map(|&k| k as u64).product();
    let kappa_minus_n = backward_orbit(f, x, n, FiberMode::Exact, tol)?.max_weight();
    let rate = if n == 0 {
        1.0
    } else {
        (kappa_minus_n as f64).powf(1.0 / n as f64)
    };
    Ok(MultiplicityReport {
        point: x.clone(),
        kappa_along_orbit: along,
        kappa_n,
        kappa_minus_n,
        depth: n,
        rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanEntry {
    pub point: ProjectivePoint,
    pub flagged: bool,
    pub rate: f64,
}

/// Finite-depth test of `kappa_- >= d / lambda`: flags candidates whose
/// backward multiplicity rate `kappa_{-depth}^{1/depth}` reaches `d / lambda`.
/// The limit `kappa_-` is only approximated at the given depth.
pub fn exceptional_scan(
    f: &EndomorphismMap,
    lambda: f64,
    depth: u32,
    candidates: &[ProjectivePoint],
    tol: &Tolerances,
) -> Result<Vec<ScanEntry>> {
    let d = f.degree() as f64;
    if !(lambda > 1.0 && lambda < d) {
        return Err(Error::InvalidArgument(format!(
            "lambda must lie in (1, {d}), got {lambda}"
        )));
    }
    if depth == 0 {
        return Err(Error::InvalidArgument(
            "scan depth must be at least 1".into(),
        ));
    }
    let threshold = d / lambda;
    candidates
        .iter()
        .map(|p| {
            let k = backward_orbit(f, p, depth, FiberMode::Exact, tol)?.max_weight();
            let rate = (k as f64).powf(1.0 / depth as f64);
            Ok(ScanEntry {
                point: p.clone(),
                flagged: rate >= threshold * (1.0 - 1e-12),
                rate,
            })
        })
        .collect()
}

/// CSV with columns `atom_re, atom_im, chart, weight`. `chart` is the index
/// of the coordinate equal to 1; `atom_re`/`atom_im` give the other one.
pub fn write_cloud_csv<W: Write>(out: &mut W, cloud: &FiberCloud) -> Result<()> {
    writeln!(out, "atom_re,atom_im,chart,weight")?;
    for (p, w) in &cloud.atoms {
        let chart = p.chart();
        let v = p.coords()[1 - chart];
        writeln!(out, "{},{},{},{}", v.re, v.im, chart, w)?;
    }
    Ok(())
}

const MAGIC: &[u8; 4] = b"FIBC";
const VERSION: u8 = 1;

/// Binary cache: `FIBC`, version byte, then little-endian fields: dim (u8),
/// depth (u32), mode (u8: 0 exact, 1 sampled), sample count (u64), seed (u64),
/// atom count (u64), base coordinates, then per atom its coordinates as
/// (re, im) f64 pairs followed by the weight (u64).
pub fn write_cloud_binary<W: Write>(out: &mut W, cloud: &FiberCloud) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&[VERSION, cloud.base.dim() as u8])?;
    out.write_all(&cloud.depth.to_le_bytes())?;
    let (mode, count, seed) = match cloud.mode {
        FiberMode::Exact => (0u8, 0u64, 0u64),
        FiberMode::Sampled { count, seed } => (1, count as u64, seed),
    };
    out.write_all(&[mode])?;
    out.write_all(&count.to_le_bytes())?;
    out.write_all(&seed.to_le_bytes())?;
    out.write_all(&(cloud.atoms.len() as u64).to_le_bytes())?;
    let put = |out: &mut W, p: &ProjectivePoint| -> Result<()> {
        for c in p.coords() {
            out.write_all(&c.re.to_le_bytes())?;
            out.write_all(&c.im.to_le_bytes())?;
        }
        Ok(())
    };
    put(out, &cloud.base)?;
    for (p, w) in &cloud.atoms {
        put(out, p)?;
        out.write_all(&w.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_cloud_binary<R: Read>(input: &mut R) -> Result<FiberCloud> {
    fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        r.read_exact(&mut b)?;
        Ok(b)
    }
    let bad = |m: &str| Error::InvalidArgument(format!("fiber cache: {m}"));
    if &take::<4, _>(input)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let [version, dim] = take::<2, _>(input)?;
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let depth = u32::from_le_bytes(take(input)?);
    let [mode] = take::<1, _>(input)?;
    let count = u64::from_le_bytes(take(input)?);
    let seed = u64::from_le_bytes(take(input)?);
    let n_atoms = u64::from_le_bytes(take(input)?);
    let mode = match mode {
        0 => FiberMode::Exact,
        1 => FiberMode::Sampled {
            count: count as usize,
            seed,
        },
        m => return Err(bad(&format!("unknown mode {m}"))),
    };
    let get = |input: &mut R| -> Result<ProjectivePoint> {
        let coords = (0..=dim as usize)
            .map(|_| {
                let re = f64::from_le_bytes(take(input)?);
                let im = f64::from_le_bytes(take(input)?);
                Ok(Complex64::new(re, im))
            })
            .collect::<Result<Vec<_>>>()?;
        normalize(&coords)
    };
    let base = get(input)?;
    let mut atoms = Vec::with_capacity(n_atoms.min(1 << 24) as usize);
    for _ in 0..n_atoms {
        let p = get(input)?;
        let w = u64::from_le_bytes(take(input)?);
        atoms.push((p, w));
    }
    Ok(FiberCloud {
        base,
        depth,
        atoms,
        mode,
    })
}
