//! Moment-SOS hierarchies for polynomial optimization over the unit ball of
//! a periodic Sobolev space `H^m(T^n)`.

pub mod error;
pub mod extract;
pub mod index;
pub mod inner;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod moment;
pub mod scalar;
pub mod sdp;

pub use error::{Error, Result};
pub use extract::{
    atoms_to_functions, check_flat, extract_atoms, extract_atoms_over, ExtractOptions,
    ExtractionReport,
};
pub use index::{enumerate_monomials, lattice, FreqIndex, IndexSet, Monomial};
pub use inner::{
    build_inner, estimate_reference_moments, inner_membership, reference_moments_cached,
    solve_inner, InnerMembership, InnerRelaxation, InnerSolution, ReferenceMoments,
};
pub use kernel::{
    compile_kernel_pop, gram, solve_kernel_pop, KernelPop, KernelProblem, KernelSolution,
    PeriodicKernel,
};
pub use model::{
    compile_algebraic, moments, weight, AlgebraicProblem, Atom, AtomicMeasure, CoefficientPoint,
    FourierPolynomial, IntegrandTerm, LinearFunctionalSpec, Polynomial, SobolevSpace,
};
pub use moment::{
    build_outer, build_outer_with, localizing_matrix, moment_matrix, outer_membership, solve_outer,
    solve_outer_with, Coordinates, MomentVector, OuterMembership, OuterRelaxation, OuterSolution,
    RelaxationOptions,
};
pub use scalar::{Field, Real};
pub use sdp::{solve, SdpProblem, SdpSolution, SolveStatus, SolverOptions};

pub type FourierPolynomial64 = FourierPolynomial<f64>;
pub type MomentVector64 = MomentVector<f64>;
pub type AtomicMeasure64 = AtomicMeasure<f64>;
pub type SdpProblem64 = SdpProblem<f64>;
pub type SdpSolution64 = SdpSolution<f64>;
pub type OuterRelaxation64 = OuterRelaxation<f64>;
pub type ExactMomentVector = MomentVector<num_rational::Rational64>;
pub type InnerRelaxation64 = InnerRelaxation<f64>;
pub type InnerSolution64 = InnerSolution<f64>;
pub type KernelPop64 = KernelPop<f64>;
pub type KernelSolution64 = KernelSolution<f64>;
pub type ExtractionReport64 = ExtractionReport<f64>;
