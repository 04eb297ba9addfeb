use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Field;

/// One symmetric coefficient: `value · x_var` (or the constant term when
/// `var` is `None`) at positions `(row, col)` and `(col, row)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triplet<T> {
    pub var: Option<usize>,
    pub row: usize,
    pub col: usize,
    pub value: T,
}

/// An affine symmetric matrix `F(x) = F_0 + Σ_i x_i F_i` constrained PSD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block<T> {
    pub size: usize,
    pub triplets: Vec<Triplet<T>>,
}

/// `Σ coeff · x_var = rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equality<T> {
    pub terms: Vec<(usize, T)>,
    pub rhs: T,
}

/// `min c^T x  s.t.  F_k(x) ⪰ 0 for every block,  A x = b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem<T> {
    pub variable_count: usize,
    pub objective: Vec<T>,
    pub blocks: Vec<Block<T>>,
    pub equalities: Vec<Equality<T>>,
}

impl<T: Field> SdpProblem<T> {
    pub fn validate(&self) -> Result<()> {
        if self.variable_count == 0 {
            return Err(Error::Invalid("SDP needs at least one variable".into()));
        }
        if self.objective.len() != self.variable_count {
            return Err(Error::DimensionMismatch {
                expected: self.variable_count,
                found: self.objective.len(),
            });
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if b.size == 0 {
                return Err(Error::Invalid(format!("block {k} has size 0")));
            }
            for t in &b.triplets {
                if t.row >= b.size || t.col >= b.size {
                    return Err(Error::Invalid(format!(
                        "block {k}: entry ({}, {}) outside a {}x{} block",
                        t.row, t.col, b.size, b.size
                    )));
                }
                if matches!(t.var, Some(v) if v >= self.variable_count) {
                    return Err(Error::Invalid(format!(
                        "block {k}: unknown variable {:?}",
                        t.var
                    )));
                }
            }
        }
        for e in &self.equalities {
            if e.terms.iter().any(|(v, _)| *v >= self.variable_count) {
                return Err(Error::Invalid(
                    "equality references an unknown variable".into(),
                ));
            }
        }
        Ok(())
    }

    /// `F_k(x)` as a dense matrix.
    pub fn block_matrix(&self, k: usize, x: &[T]) -> DMatrix<T> {
        let b = &self.blocks[k];
        let mut m = DMatrix::from_element(b.size, b.size, T::zero());
        for t in &b.triplets {
            let v = match t.var {
                Some(i) => t.value.clone() * x[i].clone(),
                None => t.value.clone(),
            };
            m[(t.row, t.col)] = m[(t.row, t.col)].clone() + v.clone();
            if t.row != t.col {
                m[(t.col, t.row)] = m[(t.col, t.row)].clone() + v;
            }
        }
        m
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective
            .iter()
            .zip(x)
            .fold(T::zero(), |acc, (c, v)| acc + c.clone() * v.clone())
    }

    /// Largest `|A x - b|` over the equalities.
    pub fn equality_residual(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for e in &self.equalities {
            let lhs = e
                .terms
                .iter()
                .fold(T::zero(), |acc, (v, c)| acc + c.clone() * x[*v].clone());
            let r = lhs - e.rhs.clone();
            let r = if r < T::zero() { T::zero() - r } else { r };
            if r > worst {
                worst = r;
            }
        }
        worst
    }
}

impl<T: Serialize> SdpProblem<T> {
    /// Self-describing JSON dump: block sizes and constraint triplets.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn dump(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

impl<T: Field + for<'de> Deserialize<'de>> SdpProblem<T> {
    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
