//! Sparse multivariate polynomials with real coefficients.
//!
//! Polynomial vector fields are closed under differentiation, complete lift
//! and Lie bracket, so those operations are carried out exactly on the
//! coefficients rather than numerically.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Matrix, Vector};

/// One term `coeff * x_0^e_0 * ... * x_{n-1}^e_{n-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The coordinate function `x_i`.
    pub fn variable(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, 1.0);
        p
    }

    pub fn from_monomials(nvars: usize, monomials: &[Monomial]) -> Result<Self, String> {
        let mut p = Self::zero(nvars);
        for m in monomials {
            if m.exponents.len() != nvars {
                return Err(format!(
                    "monomial has {} exponents, expected {}",
                    m.exponents.len(),
                    nvars
                ));
            }
            if !m.coeff.is_finite() {
                return Err("monomial coefficient is not finite".into());
            }
            p.add_term(m.exponents.clone(), m.coeff);
        }
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn monomials(&self) -> Vec<Monomial> {
        self.terms
            .iter()
            .map(|(e, c)| Monomial { coeff: *c, exponents: e.clone() })
            .collect()
    }

    fn add_term(&mut self, exponents: Vec<u32>, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        match self.terms.entry(exponents) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += coeff;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
            Entry::Vacant(slot) => {
                slot.insert(coeff);
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(x)
                    .fold(*c, |acc, (&k, &xi)| if k == 0 { acc } else { acc * xi.powi(k as i32) })
            })
            .sum()
    }

    pub fn derivative(&self, var: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut de = e.clone();
            de[var] -= 1;
            out.add_term(de, c * e[var] as f64);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Self::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    /// Re-embeds into `nvars + extra` variables; the new variables are appended.
    pub fn extend_vars(&self, extra: usize) -> Self {
        let mut out = Self::zero(self.nvars + extra);
        for (e, c) in &self.terms {
            let mut ee = e.clone();
            ee.resize(self.nvars + extra, 0);
            out.add_term(ee, *c);
        }
        out
    }
}

/// A vector field whose components are polynomials.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyField {
    components: Vec<Polynomial>,
    jacobian: Vec<Vec<Polynomial>>,
}

impl PolyField {
    pub fn new(components: Vec<Polynomial>) -> Self {
        let n = components.len();
        assert!(components.iter().all(|p| p.nvars() == n), "polynomial field must be square");
        let jacobian = components
            .iter()
            .map(|p| (0..n).map(|j| p.derivative(j)).collect())
            .collect();
        PolyField { components, jacobian }
    }

    pub fn linear(a: &Matrix) -> Self {
        let n = a.nrows();
        let comps = (0..n)
            .map(|i| {
                (0..n).fold(Polynomial::zero(n), |acc, j| {
                    acc.add(&Polynomial::variable(n, j).scale(a[(i, j)]))
                })
            })
            .collect();
        Self::new(comps)
    }

    pub fn constant(c: &Vector) -> Self {
        let n = c.len();
        Self::new(c.iter().map(|&ci| Polynomial::constant(n, ci)).collect())
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn eval(&self, x: &Vector) -> Vector {
        Vector::from_iterator(self.dim(), self.components.iter().map(|p| p.eval(x.as_slice())))
    }

    pub fn jacobian(&self, x: &Vector) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| self.jacobian[i][j].eval(x.as_slice()))
    }

    /// `[self, other] = J_other · self − J_self · other`, computed on coefficients.
    pub fn bracket(&self, other: &Self) -> Self {
        let n = self.dim();
        let comps = (0..n)
            .map(|i| {
                (0..n).fold(Polynomial::zero(n), |acc, j| {
                    acc.add(&other.jacobian[i][j].mul(&self.components[j]))
                        .sub(&self.jacobian[i][j].mul(&other.components[j]))
                })
            })
            .collect();
        Self::new(comps)
    }

    /// Complete lift as a polynomial field on `R^{2n}` in variables `(x, v)`:
    /// components `(X(x), J_X(x) v)`.
    pub fn complete_lift(&self) -> Self {
        let n = self.dim();
        let mut comps: Vec<Polynomial> = self.components.iter().map(|p| p.extend_vars(n)).collect();
        for i in 0..n {
            let vert = (0..n).fold(Polynomial::zero(2 * n), |acc, j| {
                acc.add(&self.jacobian[i][j].extend_vars(n).mul(&Polynomial::variable(2 * n, n + j)))
            });
            comps.push(vert);
        }
        Self::new(comps)
    }

    /// Returns the matrix `A` if every component is homogeneous of degree one.
    pub fn as_linear(&self) -> Option<Matrix> {
        let n = self.dim();
        let mut a = Matrix::zeros(n, n);
        for (i, p) in self.components.iter().enumerate() {
            for (e, c) in &p.terms {
                let total: u32 = e.iter().sum();
                if total != 1 {
                    return None;
                }
                let j = e.iter().position(|&k| k == 1).unwrap();
                a[(i, j)] = *c;
            }
        }
        Some(a)
    }
}
