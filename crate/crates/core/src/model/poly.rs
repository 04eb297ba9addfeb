use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{lattice, FreqIndex, Monomial};
use crate::model::{weight, CoefficientPoint, SobolevSpace};
use crate::scalar::Field;

/// Finite linear combination `Σ p_ba c^ba` of coefficient monomials.
///
/// Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: Deserialize<'de> + Field"
))]
pub struct Polynomial<T> {
    terms: BTreeMap<Monomial, T>,
}

impl<T: Field> Default for Polynomial<T> {
    fn default() -> Self {
        Polynomial {
            terms: BTreeMap::new(),
        }
    }
}

impl<T: Field> Polynomial<T> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: T) -> Self {
        Self::term(Monomial::one(), c)
    }

    pub fn term(m: Monomial, c: T) -> Self {
        let mut p = Self::zero();
        p.add_term(m, c);
        p
    }

    /// Sums repeated monomials.
    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, T)>) -> Self {
        let mut p = Self::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: T) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = e.get().clone() + c;
                if s.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, T> {
        &self.terms
    }

    pub fn coeff(&self, m: &Monomial) -> T {
        self.terms.get(m).cloned().unwrap_or_else(T::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `d(p)`, zero for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// `δ(p)`.
    pub fn harmonic_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(Monomial::harmonic_degree)
            .max()
            .unwrap_or(0)
    }

    /// Frequencies appearing in at least one stored monomial.
    pub fn variables(&self) -> Vec<FreqIndex> {
        let mut v: Vec<FreqIndex> = self
            .terms
            .keys()
            .flat_map(|m| m.entries().iter().cloned())
            .collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn scale(&self, s: &T) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .map(|(m, c)| (m.clone(), c.clone() * s.clone())),
        )
    }

    /// `Σ_ba p_ba Π_{a ∈ ba} c_a`; coordinates missing from `c` are zero.
    pub fn evaluate(&self, c: &CoefficientPoint<T>) -> T {
        let mut acc = T::zero();
        for (m, coef) in &self.terms {
            acc = acc + coef.clone() * c.monomial(m);
        }
        acc
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        let mut out = Self::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.union(m2)?, c1.clone() * c2.clone());
            }
        }
        Ok(out)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::constant(T::one());
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }
}

impl<T: Field> Add for &Polynomial<T> {
    type Output = Polynomial<T>;

    fn add(self, rhs: Self) -> Polynomial<T> {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl<T: Field> Neg for &Polynomial<T> {
    type Output = Polynomial<T>;

    fn neg(self) -> Polynomial<T> {
        Polynomial {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), T::zero() - c.clone()))
                .collect(),
        }
    }
}

impl<T: Field> Sub for &Polynomial<T> {
    type Output = Polynomial<T>;

    fn sub(self, rhs: Self) -> Polynomial<T> {
        self + &(-rhs)
    }
}

/// Panics on dimension mismatch; use [`Polynomial::try_mul`] for unchecked input.
impl<T: Field> Mul for &Polynomial<T> {
    type Output = Polynomial<T>;

    fn mul(self, rhs: Self) -> Polynomial<T> {
        self.try_mul(rhs).expect("polynomial dimension mismatch")
    }
}

/// A polynomial in the Fourier coefficients of `f ∈ H^m(T^n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: Deserialize<'de> + Field"
))]
pub struct FourierPolynomial<T> {
    pub space: SobolevSpace,
    pub poly: Polynomial<T>,
}

impl<T: Field> FourierPolynomial<T> {
    pub fn new(space: SobolevSpace, poly: Polynomial<T>) -> Result<Self> {
        for m in poly.terms().keys() {
            if let Some(d) = m.dim() {
                if d != space.n() {
                    return Err(Error::DimensionMismatch {
                        expected: space.n(),
                        found: d,
                    });
                }
            }
        }
        Ok(FourierPolynomial { space, poly })
    }

    /// Ellipsoid slack `g_ρ(c) = 1 - Σ_{|a|_∞ ≤ ρ} w_a c_a^2`.
    pub fn ellipsoid_slack(space: SobolevSpace, rho: u32) -> Self {
        let vars = lattice(space.n(), rho);
        FourierPolynomial {
            poly: slack_over(space, &vars),
            space,
        }
    }

    pub fn degree(&self) -> usize {
        self.poly.degree()
    }

    pub fn harmonic_degree(&self) -> u32 {
        self.poly.harmonic_degree()
    }

    pub fn evaluate(&self, c: &CoefficientPoint<T>) -> T {
        self.poly.evaluate(c)
    }
}

/// `1 - Σ_{a ∈ vars} w_a c_a^2`.
pub fn slack_over<T: Field>(space: SobolevSpace, vars: &[FreqIndex]) -> Polynomial<T> {
    let mut g = Polynomial::constant(T::one());
    for a in vars {
        let w: T = weight(&space, a).expect("lattice index has the space dimension");
        g.add_term(Monomial::power(a, 2), T::zero() - w);
    }
    g
}
