//! Linear functionals on functions of `T^n`, synthesis of functions from
//! coefficients, and compilation of algebraic objectives into coefficient
//! polynomials.
//!
//! Real-mode convention: a coefficient point `c` synthesizes
//! `f(x) = Σ_a c_a cos(2π<a,x>)`, so derivatives of `f` produce sines and
//! functionals are evaluated exactly on products of cosines and sines.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{lattice, FreqIndex, Monomial};
use crate::model::{CoefficientPoint, FourierPolynomial, Polynomial, SobolevSpace};
use crate::scalar::{lit, Real};

/// Default cap on index tuples visited while expanding an integrand.
pub const DEFAULT_EXPANSION_CAP: usize = 10_000_000;

/// A bounded linear functional `L` on functions of the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinearFunctionalSpec {
    /// Point evaluation at `x ∈ [0,1)^n`.
    Dirac { x: Vec<f64> },
    /// Integration against the uniform probability measure of `T^n`.
    Lebesgue,
    /// `Σ coeff_k L_k`.
    WeightedSum { terms: Vec<WeightedFunctional> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedFunctional {
    pub coeff: f64,
    pub functional: LinearFunctionalSpec,
}

#[derive(Clone, Copy, Debug)]
struct TrigFactor<'a> {
    freq: &'a FreqIndex,
    sine: bool,
}

fn phase(a: &FreqIndex, x: &[f64]) -> f64 {
    let s: f64 = a
        .coords()
        .iter()
        .zip(x)
        .map(|(&ai, xi)| ai as f64 * xi)
        .sum();
    TAU * (s - s.floor())
}

impl LinearFunctionalSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            LinearFunctionalSpec::Dirac { x } => {
                if x.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: x.len(),
                    });
                }
                if x.iter().any(|v| !(0.0..1.0).contains(v)) {
                    return Err(Error::Invalid(format!(
                        "dirac point {x:?} is not in [0,1)^n"
                    )));
                }
                if !x.iter().all(|&v| lattice_rational(v)) {
                    log::warn!(
                        "dirac point {x:?} is not of the form k/q with q <= 64; compiled coefficients may not be reproducible"
                    );
                }
                Ok(())
            }
            LinearFunctionalSpec::Lebesgue => Ok(()),
            LinearFunctionalSpec::WeightedSum { terms } => {
                terms.iter().try_for_each(|t| t.functional.validate(n))
            }
        }
    }

    /// `L(Π_k trig_k(2π<a_k, x>))`.
    fn apply_trig<T: Real>(&self, factors: &[TrigFactor<'_>]) -> T {
        match self {
            LinearFunctionalSpec::Dirac { x } => factors.iter().fold(T::one(), |acc, f| {
                let t = phase(f.freq, x);
                acc * lit::<T>(if f.sine { t.sin() } else { t.cos() })
            }),
            LinearFunctionalSpec::Lebesgue => lit(lebesgue_trig(factors)),
            LinearFunctionalSpec::WeightedSum { terms } => {
                terms.iter().fold(T::zero(), |acc, t| {
                    acc + lit::<T>(t.coeff) * t.functional.apply_trig::<T>(factors)
                })
            }
        }
    }
}

fn lattice_rational(v: f64) -> bool {
    (1..=64).any(|q| {
        let s = v * q as f64;
        (s - s.round()).abs() < 1e-12
    })
}

/// `∫_{T^n} Π_k trig_k(2π<a_k,x>) dx`, by expanding each factor into two
/// exponentials and keeping the sign patterns with zero total frequency.
fn lebesgue_trig(factors: &[TrigFactor<'_>]) -> f64 {
    let d = factors.len();
    let sines = factors.iter().filter(|f| f.sine).count();
    if sines % 2 == 1 {
        return 0.0;
    }
    if d == 0 {
        return 1.0;
    }
    let n = factors[0].freq.dim();
    let mut hits: i64 = 0;
    let mut total = vec![0i64; n];
    for mask in 0u64..(1u64 << d) {
        total.iter_mut().for_each(|t| *t = 0);
        let mut sign = 1i64;
        for (k, f) in factors.iter().enumerate() {
            let s = if mask >> k & 1 == 1 { -1 } else { 1 };
            for (t, &a) in total.iter_mut().zip(f.freq.coords()) {
                *t += s * a as i64;
            }
            if f.sine {
                sign *= s;
            }
        }
        if total.iter().all(|&t| t == 0) {
            hits += sign;
        }
    }
    let parity = if (sines / 2) % 2 == 0 { 1.0 } else { -1.0 };
    parity * hits as f64 / (1u64 << d) as f64
}

/// Odometer step over `{0..base}^len`; `false` once every tuple was visited.
fn advance(tuple: &mut [usize], base: usize) -> bool {
    for k in (0..tuple.len()).rev() {
        tuple[k] += 1;
        if tuple[k] < base {
            return true;
        }
        tuple[k] = 0;
    }
    false
}

/// `z_a = L(cos(2π<a,x>))`.
pub fn functional_moment<T: Real>(functional: &LinearFunctionalSpec, a: &FreqIndex) -> T {
    functional.apply_trig(&[TrigFactor {
        freq: a,
        sine: false,
    }])
}

/// `f(x) = Σ_a c_a cos(2π<a,x>)`.
pub fn synthesize<T: Real>(c: &CoefficientPoint<T>, x: &[f64]) -> T {
    c.values().iter().fold(T::zero(), |acc, (a, &v)| {
        acc + v * lit::<T>(phase(a, x).cos())
    })
}

/// One term `coeff · Π_j v_j^{powers_j}` of an integrand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrandTerm {
    pub powers: Vec<u32>,
    pub coeff: f64,
}

/// `inf_{f ∈ B} L(p(f, D^{a_1} f, ..., D^{a_l} f))`.
///
/// Variable `v_0` is `f` itself, `v_j` is `D^{derivatives[j-1]} f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraicProblem {
    pub space: SobolevSpace,
    pub functional: LinearFunctionalSpec,
    pub integrand: Vec<IntegrandTerm>,
    #[serde(default)]
    pub derivatives: Vec<Vec<u32>>,
}

impl AlgebraicProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.space.n();
        self.functional.validate(n)?;
        for b in &self.derivatives {
            if b.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: b.len(),
                });
            }
            let order: u32 = b.iter().sum();
            if order > self.space.m() {
                return Err(Error::Invalid(format!(
                    "derivative {b:?} has order {order} > m = {}",
                    self.space.m()
                )));
            }
        }
        let vars = 1 + self.derivatives.len();
        for t in &self.integrand {
            if t.powers.len() != vars {
                return Err(Error::Invalid(format!(
                    "integrand term lists {} powers, expected {vars}",
                    t.powers.len()
                )));
            }
        }
        if self.degree() == 0 {
            return Err(Error::Degree(
                "integrand must have degree at least 1".into(),
            ));
        }
        Ok(())
    }

    /// `d_p`.
    pub fn degree(&self) -> usize {
        self.integrand
            .iter()
            .filter(|t| t.coeff != 0.0)
            .map(|t| t.powers.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0)
    }
}

/// Expands `L(p(f, D^{a_j} f))` over the coefficients with `|a|_∞ ≤ rho`.
pub fn compile_algebraic<T: Real>(
    prob: &AlgebraicProblem,
    rho: u32,
) -> Result<FourierPolynomial<T>> {
    compile_algebraic_capped(prob, rho, DEFAULT_EXPANSION_CAP)
}

pub fn compile_algebraic_capped<T: Real>(
    prob: &AlgebraicProblem,
    rho: u32,
    cap: usize,
) -> Result<FourierPolynomial<T>> {
    prob.validate()?;
    let vars = lattice(prob.space.n(), rho);
    let nv = vars.len();

    // per variable v_j and lattice index: (multiplier, is sine)
    let mut table: Vec<Vec<(f64, bool)>> = vec![vec![(1.0, false); nv]];
    for b in &prob.derivatives {
        let k: u32 = b.iter().sum();
        let sign = if matches!(k % 4, 1 | 2) { -1.0 } else { 1.0 };
        table.push(
            vars.iter()
                .map(|a| {
                    let mult = a
                        .coords()
                        .iter()
                        .zip(b)
                        .map(|(&ai, &bi)| (TAU * ai as f64).powi(bi as i32))
                        .product::<f64>();
                    (sign * mult, k % 2 == 1)
                })
                .collect(),
        );
    }

    let mut q = Polynomial::zero();
    for term in &prob.integrand {
        if term.coeff == 0.0 {
            continue;
        }
        let slots: Vec<usize> = term
            .powers
            .iter()
            .enumerate()
            .flat_map(|(j, &p)| std::iter::repeat_n(j, p as usize))
            .collect();
        let d = slots.len();
        let count = (nv as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
        if count > cap as u128 {
            return Err(Error::SizeLimit {
                what: "integrand expansion",
                count,
                cap,
            });
        }
        let mut tuple = vec![0usize; d];
        loop {
            let mut mult = term.coeff;
            for (s, &i) in slots.iter().zip(&tuple) {
                mult *= table[*s][i].0;
            }
            if mult != 0.0 {
                let factors: Vec<TrigFactor<'_>> = slots
                    .iter()
                    .zip(&tuple)
                    .map(|(s, &i)| TrigFactor {
                        freq: &vars[i],
                        sine: table[*s][i].1,
                    })
                    .collect();
                let lv: T = prob.functional.apply_trig(&factors);
                let mono =
                    Monomial::canonicalize(tuple.iter().map(|&i| vars[i].clone()).collect())?;
                q.add_term(mono, lit::<T>(mult) * lv);
            }
            if !advance(&mut tuple, nv) {
                break;
            }
        }
    }

    // trigonometric round-off at rational points leaves ~1e-17 residue
    let scale = q.terms().values().fold(
        T::zero(),
        |acc, &c| if c.abs() > acc { c.abs() } else { acc },
    );
    let floor = scale * lit::<T>(1e-13);
    let cleaned = Polynomial::from_terms(
        q.terms()
            .iter()
            .filter(|(_, c)| c.abs() > floor)
            .map(|(m, &c)| (m.clone(), c)),
    );
    FourierPolynomial::new(prob.space, cleaned)
}
