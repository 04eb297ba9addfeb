//! Frequency indices, monomial multisets and their enumeration.
//!
//! A [`Monomial`] is a finite multiset of lattice frequencies `a ∈ Z^n`; it
//! labels the product `c^ba = Π_{a ∈ ba} c_a` of Fourier coefficients. The
//! algebraic degree is the multiset size and the harmonic degree is the
//! largest `|a_i|` among its entries.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default cap on the number of monomials an enumeration may produce.
pub const DEFAULT_MONOMIAL_CAP: usize = 20_000;

/// A point of the integer lattice `Z^n`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FreqIndex(Vec<i32>);

impl FreqIndex {
    pub fn new(coords: impl Into<Vec<i32>>) -> Self {
        FreqIndex(coords.into())
    }

    /// The origin of `Z^n`.
    pub fn zero(n: usize) -> Self {
        FreqIndex(vec![0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i32] {
        &self.0
    }

    /// `max_i |a_i|`.
    pub fn sup_norm(&self) -> u32 {
        self.0.iter().map(|a| a.unsigned_abs()).max().unwrap_or(0)
    }

    /// `<a, a>`.
    pub fn norm_sq(&self) -> u64 {
        self.0.iter().map(|&a| (a as i64 * a as i64) as u64).sum()
    }

    pub fn neg(&self) -> Self {
        FreqIndex(self.0.iter().map(|a| -a).collect())
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        if self.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for FreqIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for FreqIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

impl FromStr for FreqIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |detail: &str| Error::Parse {
            what: "frequency index",
            detail: format!("{detail} in {s:?}"),
        };
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(|| bad("expected parentheses"))?;
        let coords = inner
            .split(',')
            .map(|t| t.trim().parse::<i32>().map_err(|_| bad("bad integer")))
            .collect::<Result<Vec<_>>>()?;
        Ok(FreqIndex(coords))
    }
}

/// All lattice points with `|a|_∞ ≤ rho`, in lexicographic order.
pub fn lattice(n: usize, rho: u32) -> Vec<FreqIndex> {
    let r = rho as i32;
    let side = (2 * rho + 1) as usize;
    let total = side.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    let mut cur = vec![-r; n];
    for _ in 0..total {
        out.push(FreqIndex(cur.clone()));
        for i in (0..n).rev() {
            if cur[i] < r {
                cur[i] += 1;
                break;
            }
            cur[i] = -r;
        }
    }
    out
}

/// Canonical (sorted) multiset of frequency indices.
///
/// Ordering is graded: first by algebraic degree, then lexicographically on
/// the sorted entries. Enumerations and `BTreeMap` keys share this order.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial {
    entries: Vec<FreqIndex>,
}

impl Monomial {
    /// The empty monomial (constant 1).
    pub fn one() -> Self {
        Monomial::default()
    }

    /// Sorts `entries` into canonical order; all entries must share one dimension.
    pub fn canonicalize(mut entries: Vec<FreqIndex>) -> Result<Self> {
        if let Some(first) = entries.first() {
            let n = first.dim();
            for e in &entries {
                e.check_dim(n)?;
            }
        }
        entries.sort();
        Ok(Monomial { entries })
    }

    pub fn var(a: FreqIndex) -> Self {
        Monomial { entries: vec![a] }
    }

    /// `c_a^k`.
    pub fn power(a: &FreqIndex, k: usize) -> Self {
        Monomial {
            entries: vec![a.clone(); k],
        }
    }

    pub fn entries(&self) -> &[FreqIndex] {
        &self.entries
    }

    pub fn is_one(&self) -> bool {
        self.entries.is_empty()
    }

    /// Torus dimension, `None` for the empty monomial.
    pub fn dim(&self) -> Option<usize> {
        self.entries.first().map(FreqIndex::dim)
    }

    /// `d_ba = #ba`.
    pub fn degree(&self) -> usize {
        self.entries.len()
    }

    /// `δ_ba = max_{a ∈ ba} |a|_∞`, zero for the empty monomial.
    pub fn harmonic_degree(&self) -> u32 {
        self.entries
            .iter()
            .map(FreqIndex::sup_norm)
            .max()
            .unwrap_or(0)
    }

    /// Multiset union, i.e. the monomial of the product.
    pub fn union(&self, other: &Monomial) -> Result<Monomial> {
        if let (Some(p), Some(q)) = (self.dim(), other.dim()) {
            if p != q {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: q,
                });
            }
        }
        Ok(self.union_unchecked(other))
    }

    pub(crate) fn union_unchecked(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.entries, &other.entries);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                out.push(a[i].clone());
                i += 1;
            } else {
                out.push(b[j].clone());
                j += 1;
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial { entries: out }
    }

    /// Even total degree: `c^ba` is invariant under `c -> -c`.
    pub fn is_even(&self) -> bool {
        self.entries.len() % 2 == 0
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.entries
            .len()
            .cmp(&other.entries.len())
            .then_with(|| self.entries.cmp(&other.entries))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Text form `[(a11,...,a1n);(a21,...,a2n);...]`, `[]` for the empty monomial.
impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for Monomial {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('[')
            .and_then(|t| t.strip_suffix(']'))
            .ok_or_else(|| Error::Parse {
                what: "monomial",
                detail: format!("expected brackets in {s:?}"),
            })?;
        if inner.trim().is_empty() {
            return Ok(Monomial::one());
        }
        let entries = inner
            .split(';')
            .map(str::parse)
            .collect::<Result<Vec<FreqIndex>>>()?;
        Monomial::canonicalize(entries)
    }
}

impl Serialize for Monomial {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Monomial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Serialize for FreqIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FreqIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A finite ordered set `A` of distinct monomials.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexSet {
    members: Vec<Monomial>,
}

impl IndexSet {
    pub fn new(members: Vec<Monomial>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(members.len());
        for m in &members {
            if !seen.insert(m) {
                return Err(Error::Invalid(format!(
                    "duplicate monomial {m} in index set"
                )));
            }
        }
        Ok(IndexSet { members })
    }

    pub fn members(&self) -> &[Monomial] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `d_A`.
    pub fn algebraic_degree(&self) -> usize {
        self.members.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    /// `ρ_A`.
    pub fn harmonic_degree(&self) -> u32 {
        self.members
            .iter()
            .map(Monomial::harmonic_degree)
            .max()
            .unwrap_or(0)
    }
}

pub(crate) fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Every monomial of degree `≤ r` in the given variables, graded-lex ordered.
pub fn monomials_over(vars: &[FreqIndex], r: usize, cap: usize) -> Result<Vec<Monomial>> {
    let mut vars = vars.to_vec();
    vars.sort();
    vars.dedup();
    let count = binomial(vars.len() as u128 + r as u128, r as u128);
    if count > cap as u128 {
        return Err(Error::SizeLimit {
            what: "monomial basis",
            count,
            cap,
        });
    }
    let nv = vars.len();
    let mut out = Vec::with_capacity(count as usize);
    out.push(Monomial::one());
    if nv == 0 {
        return Ok(out);
    }
    for d in 1..=r {
        // nondecreasing index tuples of length d, in lexicographic order
        let mut idx = vec![0usize; d];
        loop {
            out.push(Monomial {
                entries: idx.iter().map(|&i| vars[i].clone()).collect(),
            });
            let mut advanced = false;
            for k in (0..d).rev() {
                if idx[k] + 1 < nv {
                    let v = idx[k] + 1;
                    idx[k..].fill(v);
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
    }
    Ok(out)
}

/// Monomial basis of `C[c]_{r,ρ}` over the `(2ρ+1)^n` lattice coefficients.
pub fn enumerate_monomials(n: usize, r: usize, rho: u32) -> Result<Vec<Monomial>> {
    enumerate_monomials_capped(n, r, rho, DEFAULT_MONOMIAL_CAP)
}

pub fn enumerate_monomials_capped(
    n: usize,
    r: usize,
    rho: u32,
    cap: usize,
) -> Result<Vec<Monomial>> {
    if n == 0 {
        return Err(Error::Invalid("torus dimension must be at least 1".into()));
    }
    let side = (2 * rho as u128 + 1)
        .checked_pow(n as u32)
        .unwrap_or(u128::MAX);
    if side > cap as u128 {
        return Err(Error::SizeLimit {
            what: "frequency lattice",
            count: side,
            cap,
        });
    }
    monomials_over(&lattice(n, rho), r, cap)
}
