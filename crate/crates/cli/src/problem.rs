use std::path::Path;

use serde::{Deserialize, Serialize};
use sobomos_core::kernel::KernelProblem;
use sobomos_core::model::{AlgebraicProblem, IntegrandTerm};
use sobomos_core::{
    compile_algebraic, FourierPolynomial, LinearFunctionalSpec, Monomial, Polynomial, SobolevSpace,
};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicTerm {
    pub monomial: String,
    pub coeff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProblemFile {
    Harmonic {
        n: usize,
        m: u32,
        objective: Vec<HarmonicTerm>,
    },
    Algebraic {
        n: usize,
        m: u32,
        functional: LinearFunctionalSpec,
        integrand: Vec<IntegrandTerm>,
        #[serde(default)]
        derivatives: Vec<Vec<u32>>,
    },
    Kernel {
        n: usize,
        m: u32,
        points: Vec<Vec<f64>>,
        objective: Vec<IntegrandTerm>,
        #[serde(default)]
        radius: Option<f64>,
    },
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let p: ProblemFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        p.space()?;
        Ok(p)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ProblemFile::Harmonic { .. } => "harmonic",
            ProblemFile::Algebraic { .. } => "algebraic",
            ProblemFile::Kernel { .. } => "kernel",
        }
    }

    pub fn space(&self) -> Result<SobolevSpace, CliError> {
        let (n, m) = match self {
            ProblemFile::Harmonic { n, m, .. }
            | ProblemFile::Algebraic { n, m, .. }
            | ProblemFile::Kernel { n, m, .. } => (*n, *m),
        };
        Ok(SobolevSpace::new(n, m)?)
    }

    /// Default truncation: the objective's harmonic degree, `0` for
    /// algebraic problems.
    pub fn default_rho(&self) -> Result<u32, CliError> {
        match self {
            ProblemFile::Harmonic { .. } => Ok(self.harmonic_polynomial()?.harmonic_degree()),
            _ => Ok(0),
        }
    }

    fn harmonic_polynomial(&self) -> Result<FourierPolynomial<f64>, CliError> {
        let ProblemFile::Harmonic { objective, .. } = self else {
            return Err(CliError::Input("not a harmonic problem".into()));
        };
        let mut p = Polynomial::zero();
        for t in objective {
            let m: Monomial = t.monomial.parse()?;
            p.add_term(m, t.coeff);
        }
        Ok(FourierPolynomial::new(self.space()?, p)?)
    }

    /// The coefficient polynomial for the outer and inner hierarchies.
    pub fn fourier_objective(&self, rho: u32) -> Result<FourierPolynomial<f64>, CliError> {
        match self {
            ProblemFile::Harmonic { .. } => self.harmonic_polynomial(),
            ProblemFile::Algebraic {
                functional,
                integrand,
                derivatives,
                ..
            } => {
                let prob = AlgebraicProblem {
                    space: self.space()?,
                    functional: functional.clone(),
                    integrand: integrand.clone(),
                    derivatives: derivatives.clone(),
                };
                prob.validate()?;
                Ok(compile_algebraic(&prob, rho)?)
            }
            ProblemFile::Kernel { .. } => Err(CliError::Input(
                "kernel problems are solved with solve-kernel".into(),
            )),
        }
    }

    pub fn kernel_problem(&self) -> Result<KernelProblem, CliError> {
        match self {
            ProblemFile::Kernel {
                points,
                objective,
                radius,
                ..
            } => Ok(KernelProblem {
                space: self.space()?,
                points: points.clone(),
                objective: objective.clone(),
                radius: *radius,
            }),
            _ => Err(CliError::Input(format!(
                "solve-kernel needs a kernel problem, got {}",
                self.kind()
            ))),
        }
    }
}
