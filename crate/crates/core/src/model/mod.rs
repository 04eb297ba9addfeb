//! Sobolev spaces, the Fourier ellipsoid and objects living on it.
//!
//! A function `f ∈ H^m(T^n)` is represented by its real coefficients
//! `c_a`, one per lattice frequency. The unit ball of `H^m` maps onto the
//! ellipsoid `E = { c : Σ w_a c_a^2 ≤ 1 }` with `w_a = (1 + <a,a>)^m`.

mod functional;
mod poly;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{FreqIndex, IndexSet, Monomial};
use crate::moment::MomentVector;
use crate::scalar::{from_int, Field};

pub use functional::{
    compile_algebraic, compile_algebraic_capped, functional_moment, synthesize, AlgebraicProblem,
    IntegrandTerm, LinearFunctionalSpec, WeightedFunctional,
};
pub use poly::{slack_over, FourierPolynomial, Polynomial};

/// Absolute tolerance on the weighted norm for ellipsoid membership.
pub const ELLIPSOID_TOL: f64 = 1e-12;

/// `H^m(T^n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SobolevSpace {
    n: usize,
    m: u32,
}

impl SobolevSpace {
    pub fn new(n: usize, m: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid(
                "torus dimension n must be at least 1".into(),
            ));
        }
        Ok(SobolevSpace { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> u32 {
        self.m
    }
}

/// Sobolev weight `w_a = (1 + <a,a>)^m`.
pub fn weight<T: Field>(space: &SobolevSpace, a: &FreqIndex) -> Result<T> {
    a.check_dim(space.n)?;
    let base: T = from_int(1 + a.norm_sq() as i64);
    let mut w = T::one();
    for _ in 0..space.m {
        w = w * base.clone();
    }
    Ok(w)
}

/// A finitely supported coefficient sequence `c = (c_a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: Deserialize<'de> + Field"
))]
pub struct CoefficientPoint<T> {
    values: BTreeMap<FreqIndex, T>,
}

impl<T: Field> CoefficientPoint<T> {
    pub fn zero() -> Self {
        CoefficientPoint {
            values: BTreeMap::new(),
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (FreqIndex, T)>) -> Self {
        CoefficientPoint {
            values: pairs.into_iter().collect(),
        }
    }

    pub fn values(&self) -> &BTreeMap<FreqIndex, T> {
        &self.values
    }

    pub fn get(&self, a: &FreqIndex) -> T {
        self.values.get(a).cloned().unwrap_or_else(T::zero)
    }

    pub fn set(&mut self, a: FreqIndex, v: T) {
        self.values.insert(a, v);
    }

    /// `c^ba`.
    pub fn monomial(&self, m: &Monomial) -> T {
        let mut acc = T::one();
        for a in m.entries() {
            acc = acc * self.get(a);
        }
        acc
    }

    /// `Σ_a w_a c_a^2` over the support.
    pub fn weighted_norm_sq(&self, space: &SobolevSpace) -> Result<T> {
        let mut acc = T::zero();
        for (a, v) in &self.values {
            let w: T = weight(space, a)?;
            acc = acc + w * v.clone() * v.clone();
        }
        Ok(acc)
    }

    pub fn in_ellipsoid(&self, space: &SobolevSpace) -> Result<bool> {
        self.in_ellipsoid_tol(space, ELLIPSOID_TOL)
    }

    pub fn in_ellipsoid_tol(&self, space: &SobolevSpace, tol: f64) -> Result<bool> {
        let tol = T::from_f64(tol).unwrap_or_else(T::zero);
        Ok(self.weighted_norm_sq(space)? <= T::one() + tol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: Deserialize<'de> + Field"
))]
pub struct Atom<T> {
    pub weight: T,
    pub point: CoefficientPoint<T>,
}

/// Finite positive combination of Dirac masses on coefficient points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: Deserialize<'de> + Field"
))]
pub struct AtomicMeasure<T> {
    atoms: Vec<Atom<T>>,
}

impl<T: Field> AtomicMeasure<T> {
    /// Weights must be positive.
    pub fn new(atoms: Vec<Atom<T>>) -> Result<Self> {
        if atoms.iter().any(|a| a.weight <= T::zero()) {
            return Err(Error::Invalid(
                "atomic measure weights must be positive".into(),
            ));
        }
        Ok(AtomicMeasure { atoms })
    }

    /// Like [`AtomicMeasure::new`], additionally requiring every point to lie in `E`.
    pub fn on_ellipsoid(space: &SobolevSpace, atoms: Vec<Atom<T>>) -> Result<Self> {
        for (k, a) in atoms.iter().enumerate() {
            if !a.point.in_ellipsoid(space)? {
                return Err(Error::Invalid(format!(
                    "atom {k} lies outside the ellipsoid"
                )));
            }
        }
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    pub fn mass(&self) -> T {
        self.atoms
            .iter()
            .fold(T::zero(), |acc, a| acc + a.weight.clone())
    }

    /// `Σ weight · c^ba` for one monomial.
    pub fn moment(&self, m: &Monomial) -> T {
        self.atoms.iter().fold(T::zero(), |acc, a| {
            acc + a.weight.clone() * a.point.monomial(m)
        })
    }

    pub fn integrate(&self, p: &Polynomial<T>) -> T {
        self.atoms.iter().fold(T::zero(), |acc, a| {
            acc + a.weight.clone() * p.evaluate(&a.point)
        })
    }
}

/// Moments `y_ba = Σ weight · c^ba` indexed by `A`.
pub fn moments<T: Field>(mu: &AtomicMeasure<T>, set: &IndexSet) -> MomentVector<T> {
    moments_of(mu, set.members())
}

pub fn moments_of<T: Field>(mu: &AtomicMeasure<T>, monomials: &[Monomial]) -> MomentVector<T> {
    MomentVector::from_entries(monomials.iter().map(|m| (m.clone(), mu.moment(m))))
}
