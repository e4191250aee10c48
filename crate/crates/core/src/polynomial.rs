use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projective::ZERO;

/// One term of a component in a map-definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub exps: Vec<u32>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// A homogeneous polynomial in `nvars` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousPolynomial {
    nvars: usize,
    degree: u32,
    terms: BTreeMap<Vec<u32>, Complex64>,
}

impl HomogeneousPolynomial {
    /// Zero coefficients are dropped; repeated exponents are summed.
    pub fn new(
        nvars: usize,
        degree: u32,
        terms: impl IntoIterator<Item = (Vec<u32>, Complex64)>,
    ) -> Result<Self> {
        if nvars < 2 {
            return Err(Error::InvalidPolynomial(format!(
                "need at least 2 variables, got {nvars}"
            )));
        }
        if degree == 0 {
            return Err(Error::InvalidPolynomial("degree must be at least 1".into()));
        }
        let mut map: BTreeMap<Vec<u32>, Complex64> = BTreeMap::new();
        for (exps, coef) in terms {
            if exps.len() != nvars {
                return Err(Error::InvalidPolynomial(format!(
                    "exponent tuple {exps:?} has length {}, expected {nvars}",
                    exps.len()
                )));
            }
            let total: u32 = exps.iter().sum();
            if total != degree {
                return Err(Error::InvalidPolynomial(format!(
                    "exponent tuple {exps:?} sums to {total}, expected {degree}"
                )));
            }
            if !coef.re.is_finite() || !coef.im.is_finite() {
                return Err(Error::InvalidPolynomial(format!(
                    "non-finite coefficient for {exps:?}"
                )));
            }
            *map.entry(exps).or_insert(ZERO) += coef;
        }
        map.retain(|_, c| *c != ZERO);
        if map.is_empty() {
            return Err(Error::InvalidPolynomial(
                "at least one coefficient must be nonzero".into(),
            ));
        }
        Ok(Self {
            nvars,
            degree,
            terms: map,
        })
    }

    pub fn from_specs(nvars: usize, degree: u32, specs: &[TermSpec]) -> Result<Self> {
        Self::new(
            nvars,
            degree,
            specs
                .iter()
                .map(|t| (t.exps.clone(), Complex64::new(t.re, t.im))),
        )
    }

    /// `coef * z_index^degree`.
    pub fn monomial(nvars: usize, index: usize, degree: u32, coef: Complex64) -> Result<Self> {
        let mut exps = vec![0; nvars];
        exps[index] = degree;
        Self::new(nvars, degree, [(exps, coef)])
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], Complex64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    pub fn to_specs(&self) -> Vec<TermSpec> {
        self.terms
            .iter()
            .map(|(e, c)| TermSpec {
                exps: e.clone(),
                re: c.re,
                im: c.im,
            })
            .collect()
    }

    pub fn coefficient_sup(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn coefficient_sum(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).sum()
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        debug_assert_eq!(z.len(), self.nvars);
        let mut acc = ZERO;
        for (exps, coef) in &self.terms {
            let mut t = *coef;
            for (zi, &e) in z.iter().zip(exps) {
                if e > 0 {
                    t *= zi.powu(e);
                }
            }
            acc += t;
        }
        acc
    }

    /// Partial derivative with respect to `z_var`, evaluated at `z`.
    pub fn eval_partial(&self, var: usize, z: &[Complex64]) -> Complex64 {
        let mut acc = ZERO;
        for (exps, coef) in &self.terms {
            let e = exps[var];
            if e == 0 {
                continue;
            }
            let mut t = *coef * e as f64;
            for (i, (zi, &ei)) in z.iter().zip(exps).enumerate() {
                let p = if i == var { ei - 1 } else { ei };
                if p > 0 {
                    t *= zi.powu(p);
                }
            }
            acc += t;
        }
        acc
    }

    /// Coefficients `c_j` of `z^j w^(d-j)` for a binary form, `j = 0..=d`.
    pub fn binary_coefficients(&self) -> Result<Vec<Complex64>> {
        if self.nvars != 2 {
            return Err(Error::NotSupported(format!(
                "binary coefficients need 2 variables, polynomial has {}",
                self.nvars
            )));
        }
        let mut out = vec![ZERO; self.degree as usize + 1];
        for (exps, coef) in &self.terms {
            out[exps[0] as usize] += *coef;
        }
        Ok(out)
    }
}
