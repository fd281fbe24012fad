//! Shared fixtures for the criterion benchmarks: small sources and schemes
//! that exercise the toolkit's hot paths at benchmark-friendly sizes.

use synthcascade_core::dist::{Axis, JointDist};
use synthcascade_core::protocol::{SccsCodebook, SccsScheme};
use synthcascade_core::task::construct_auxiliary;
use synthcascade_core::{AuxSolution, Budget, RateTriple};

/// Uniform binary input through a 10% crossover channel.
pub fn binary_pair() -> JointDist {
    JointDist::new(
        vec![Axis::new("x", 2), Axis::new("y", 2)],
        vec![0.45, 0.05, 0.05, 0.45],
    )
    .unwrap()
}

/// Correlated binary triple: z is a noisy copy of y, which is a noisy
/// copy of x. Small enough for fast optimizer iterations, correlated
/// enough that the minimization has real work to do.
pub fn correlated_triple() -> JointDist {
    let flip = |same: bool| if same { 0.85 } else { 0.15 };
    JointDist::from_fn(
        vec![Axis::new("x", 2), Axis::new("y", 2), Axis::new("z", 2)],
        |c| 0.5 * flip(c[0] == c[1]) * flip(c[1] == c[2]),
    )
    .unwrap()
}

/// Protocol scheme and codebook for the 3-task assignment auxiliary at
/// block length `n`, with a 0.1-bit margin over the closed-form corner.
pub fn task3_scheme(n: usize) -> (SccsScheme, SccsCodebook) {
    let budget = Budget::default();
    let aux = construct_auxiliary(3, 2, 1, &budget).unwrap().joint;
    let (base, _) = AuxSolution::measure(&aux).unwrap();
    let rates = RateTriple::new(base.r0 + 0.1, base.r1 + 0.1, base.r2 + 0.1);
    let scheme = SccsScheme::build(&aux, rates, n).unwrap();
    let codebook = scheme.sample_codebook(17);
    (scheme, codebook)
}
