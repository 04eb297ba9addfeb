use std::time::Instant;

use sobomos_core::extract::{extract_atoms_over, ExtractOptions};
use sobomos_core::inner::required_degree;
use sobomos_core::kernel::{
    compile_kernel_pop, solve_kernel_pop, KernelPop, KernelProblem, DEFAULT_KERNEL_TOL,
};
use sobomos_core::model::{compile_algebraic, AlgebraicProblem, IntegrandTerm};
use sobomos_core::sdp::SolverOptions;
use sobomos_core::{
    build_inner, build_outer, build_outer_with, estimate_reference_moments, solve_inner,
    solve_outer, FourierPolynomial, FreqIndex, LinearFunctionalSpec, Monomial, PeriodicKernel,
    Polynomial, RelaxationOptions, SobolevSpace,
};

fn m(s: &str) -> Monomial {
    s.parse().unwrap()
}

fn harmonic() -> FourierPolynomial<f64> {
    let space = SobolevSpace::new(1, 0).unwrap();
    let p = Polynomial::from_terms([
        (m("[(0);(0);(0);(0)]"), 1.0),
        (m("[(1);(1);(1);(1)]"), 1.0),
        (m("[(1);(1)]"), -0.5),
        (Monomial::one(), 1.0 / 16.0),
    ]);
    FourierPolynomial::new(space, p).unwrap()
}

fn quartic() -> Vec<IntegrandTerm> {
    vec![
        IntegrandTerm {
            powers: vec![4],
            coeff: 1.0,
        },
        IntegrandTerm {
            powers: vec![2],
            coeff: -1.0,
        },
        IntegrandTerm {
            powers: vec![0],
            coeff: 0.25,
        },
    ]
}

#[test]
fn outer_inner_sandwich() {
    let tol = 1e-8;
    let start = Instant::now();
    let p = harmonic();
    let refm = estimate_reference_moments(
        &p.space,
        1,
        required_degree(p.degree(), 4),
        1_000_000,
        0x5eed,
    )
    .unwrap();
    let mut outer = Vec::new();
    let mut inner = Vec::new();
    for r in 2..=4 {
        let o = solve_outer(&build_outer(&p, r, 1).unwrap(), tol).unwrap();
        let i = solve_inner(&build_inner(&p, r, 1, &refm).unwrap(), tol).unwrap();
        println!(
            "r={r} outer={:.3e} inner={:.6} stderr={:.2e}",
            o.value, i.value, i.stderr
        );
        outer.push(o.value);
        inner.push((i.value, i.stderr));
    }
    for k in 0..3 {
        let (v, s) = inner[k];
        assert!(outer[k] <= v + 2.0 * tol + 3.0 * s);
        if k > 0 {
            assert!(outer[k] >= outer[k - 1] - 2.0 * tol);
            assert!(v <= inner[k - 1].0 + 2.0 * tol + 3.0 * s);
            assert!(outer[k].abs() <= outer[k - 1].abs() + 2.0 * tol);
        }
    }
    assert!(inner[2].0 >= 0.0 && inner[2].0 <= 0.2);
    println!("sandwich took {:?}", start.elapsed());
}

#[test]
fn kernel_and_algebraic_routes_agree() {
    let space = SobolevSpace::new(1, 1).unwrap();
    let prob = AlgebraicProblem {
        space,
        functional: LinearFunctionalSpec::Dirac { x: vec![0.0] },
        integrand: quartic(),
        derivatives: vec![],
    };
    let q = compile_algebraic::<f64>(&prob, 0).unwrap();
    let rel = build_outer_with(&q, 2, 0, &RelaxationOptions::default()).unwrap();
    let sol = solve_outer(&rel, 1e-9).unwrap();
    let rep = extract_atoms_over(
        &sol.y,
        &rel.variables,
        2,
        &ExtractOptions::for_solver_tol(1e-9),
    )
    .unwrap();
    assert!(rep.flat);
    let mut alg: Vec<f64> = rep
        .atoms
        .iter()
        .map(|a| a.point.get(&FreqIndex::new([0])))
        .collect();
    alg.sort_by(f64::total_cmp);

    let kernel = PeriodicKernel::new(space, DEFAULT_KERNEL_TOL).unwrap();
    let kprob = KernelProblem {
        space,
        points: vec![vec![0.0]],
        objective: quartic(),
        radius: None,
    };
    let pop: KernelPop<f64> = compile_kernel_pop(&kprob, &kernel).unwrap();
    let ks = solve_kernel_pop(
        &pop,
        2,
        &SolverOptions::with_tol(1e-9),
        &ExtractOptions::for_solver_tol(1e-9),
        &[vec![0.0]],
    )
    .unwrap();
    let mut ker: Vec<f64> = ks.functions.iter().map(|f| f[0]).collect();
    ker.sort_by(f64::total_cmp);
    assert_eq!(alg.len(), 2);
    assert_eq!(ker.len(), 2);
    for (a, k) in alg.iter().zip(&ker) {
        assert!((a - k).abs() < 1e-3, "{alg:?} vs {ker:?}");
    }
}
