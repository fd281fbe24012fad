//! Task assignment: the worked example with a closed-form rate region.
//!
//! A task X is assigned uniformly among m workers; two backup workers
//! (Y, Z) are then drawn uniformly among the remaining ones, ordered and
//! distinct. The rate region is a finite union of corner cones indexed by
//! two integers: a committee size a (workers still plausible after link 1)
//! and an inner committee size b (workers plausible after link 2). Each
//! corner is achieved exactly by a subset-valued auxiliary pair, which
//! makes this family the reference oracle for the numeric region search.

use crate::budget::Budget;
use crate::dist::{Axis, JointDist};
use crate::error::Error;
use crate::region::{AuxSolution, RateTriple};
use crate::Result;

/// Largest worker count accepted by the subset-auxiliary constructor; the
/// auxiliary alphabets are binomial in m.
pub const MAX_WORKERS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskCorner {
    /// Committee size after link 1; 2 ≤ a ≤ m−1.
    pub a: usize,
    /// Committee size after link 2; 1 ≤ b ≤ a−1.
    pub b: usize,
    pub rates: RateTriple,
}

fn check_m(m: usize) -> Result<()> {
    if m < 3 {
        return Err(Error::InvalidArgument(
            "task assignment needs at least three workers".into(),
        ));
    }
    Ok(())
}

fn check_corner(m: usize, a: usize, b: usize) -> Result<()> {
    check_m(m)?;
    if !(2 <= a && a <= m - 1) {
        return Err(Error::InvalidArgument(format!(
            "committee size a={} out of range 2..={}",
            a,
            m - 1
        )));
    }
    if !(1 <= b && b < a) {
        return Err(Error::InvalidArgument(format!(
            "inner committee size b={} out of range 1..={}",
            b,
            a - 1
        )));
    }
    Ok(())
}

/// Source joint: X uniform on [m], (Y, Z) uniform over ordered pairs of
/// distinct workers avoiding X.
pub fn build_channel(m: usize, budget: &Budget) -> Result<JointDist> {
    check_m(m)?;
    budget.check((m * m * m) as u128)?;
    let p = 1.0 / (m * (m - 1) * (m - 2)) as f64;
    JointDist::from_fn(
        vec![Axis::new("x", m), Axis::new("y", m), Axis::new("z", m)],
        |c| {
            if c[0] != c[1] && c[1] != c[2] && c[0] != c[2] {
                p
            } else {
                0.0
            }
        },
    )
}

/// Rate triple of corner (a, b):
/// R0 = log2(m(m−1)(m−2) / ((a−b)·b·(m−a))), R1 = log2(m/(a−b)),
/// R2 = log2(m/a).
pub fn corner_rates(m: usize, a: usize, b: usize) -> Result<RateTriple> {
    check_corner(m, a, b)?;
    let num = (m * (m - 1) * (m - 2)) as f64;
    let den = ((a - b) * b * (m - a)) as f64;
    Ok(RateTriple::new(
        (num / den).log2(),
        (m as f64 / (a - b) as f64).log2(),
        (m as f64 / a as f64).log2(),
    ))
}

/// Every corner of the m-worker region, in (a, b) lexicographic order.
pub fn closed_form_corners(m: usize) -> Result<Vec<TaskCorner>> {
    check_m(m)?;
    let mut out = Vec::new();
    for a in 2..=m - 1 {
        for b in 1..a {
            out.push(TaskCorner { a, b, rates: corner_rates(m, a, b)? });
        }
    }
    Ok(out)
}

/// Membership in the closed-form region: the union of the corner cones.
/// `tol` absorbs float rounding in the supplied rates.
pub fn member_closed_form(m: usize, rates: &RateTriple, tol: f64) -> Result<bool> {
    Ok(closed_form_corners(m)?.iter().any(|c| {
        rates.r0 >= c.rates.r0 - tol
            && rates.r1 >= c.rates.r1 - tol
            && rates.r2 >= c.rates.r2 - tol
    }))
}

/// Size-k subsets of [m] as bitmasks, in lexicographic order of their
/// sorted element lists.
fn subsets(m: usize, k: usize) -> Vec<u32> {
    fn rec(m: usize, k: usize, start: usize, mask: u32, out: &mut Vec<u32>) {
        if k == 0 {
            out.push(mask);
            return;
        }
        for e in start..=m - k {
            rec(m, k - 1, e + 1, mask | (1 << e), out);
        }
    }
    let mut out = Vec::new();
    if k <= m {
        rec(m, k, 0, 0, &mut out);
    }
    out
}

/// The subset-valued auxiliary pair achieving corner (a, b) exactly:
/// V is a uniformly chosen size-a committee S, U a uniform size-b inner
/// committee T ⊆ S; X is uniform on S∖T, Y on T, Z outside S. Both Markov
/// chains hold exactly and the (X,Y,Z) marginal is the task source.
pub fn construct_auxiliary(m: usize, a: usize, b: usize, budget: &Budget) -> Result<AuxSolution> {
    check_corner(m, a, b)?;
    if m > MAX_WORKERS {
        return Err(Error::InvalidArgument(format!(
            "subset auxiliaries supported up to m={}",
            MAX_WORKERS
        )));
    }
    let vs = subsets(m, a);
    let us = subsets(m, b);
    let cells = (m * m * m) as u128 * vs.len() as u128 * us.len() as u128;
    budget.check(cells)?;

    let n_s = vs.len() as f64;
    let t_per_s = {
        // C(a, b) inner committees per committee.
        let mut c = 1.0;
        for i in 0..b {
            c = c * (a - i) as f64 / (i + 1) as f64;
        }
        c
    };
    let w = 1.0 / (n_s * t_per_s * (a - b) as f64 * b as f64 * (m - a) as f64);

    let joint = JointDist::from_fn(
        vec![
            Axis::new("x", m),
            Axis::new("y", m),
            Axis::new("z", m),
            Axis::new("u", us.len()),
            Axis::new("v", vs.len()),
        ],
        |c| {
            let (x, y, z, ui, vi) = (c[0], c[1], c[2], c[3], c[4]);
            let s = vs[vi];
            let t = us[ui];
            let in_s = |e: usize| s & (1 << e) != 0;
            let in_t = |e: usize| t & (1 << e) != 0;
            if t & !s == 0 && in_s(x) && !in_t(x) && in_t(y) && !in_s(z) {
                w
            } else {
                0.0
            }
        },
    )?;
    let target = build_channel(m, budget)?;
    AuxSolution::from_joint(joint, &target, 1e-9)
}

/// Corner with the least common-randomness rate: R0 is minimized exactly
/// where the integer product (a−b)·b·(m−a) is maximized.
pub fn min_r0_corner(m: usize) -> Result<TaskCorner> {
    let corners = closed_form_corners(m)?;
    Ok(corners
        .iter()
        .copied()
        .max_by_key(|c| (c.a - c.b) * c.b * (m - c.a))
        .expect("m ≥ 3 has at least one corner"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOG2_3: f64 = 1.584_962_500_721_156_3;
    const LOG2_6: f64 = 2.584_962_500_721_156;
    const LOG2_3_HALVES: f64 = 0.584_962_500_721_156_2;

    #[test]
    fn channel_marginal_is_uniform_over_distinct_triples() {
        let q = build_channel(4, &Budget::default()).unwrap();
        let expect = 1.0 / 24.0;
        let mut live = 0;
        for x in 0..4 {
            for y in 0..4 {
                for z in 0..4 {
                    let p = q.prob(&[x, y, z]);
                    if x != y && y != z && x != z {
                        assert!((p - expect).abs() < 1e-15);
                        live += 1;
                    } else {
                        assert_eq!(p, 0.0);
                    }
                }
            }
        }
        assert_eq!(live, 24);
    }

    #[test]
    fn three_workers_have_the_single_corner() {
        let corners = closed_form_corners(3).unwrap();
        assert_eq!(corners.len(), 1);
        let c = corners[0];
        assert_eq!((c.a, c.b), (2, 1));
        assert!((c.rates.r0 - LOG2_6).abs() < 1e-12);
        assert!((c.rates.r1 - LOG2_3).abs() < 1e-12);
        assert!((c.rates.r2 - LOG2_3_HALVES).abs() < 1e-12);
    }

    #[test]
    fn corner_count_is_triangle_number() {
        // Corners are (a, b) with 2 ≤ a ≤ m−1 and b < a.
        assert_eq!(closed_form_corners(4).unwrap().len(), 1 + 2);
        assert_eq!(closed_form_corners(5).unwrap().len(), 1 + 2 + 3);
    }

    #[test]
    fn auxiliary_hits_corner_exactly() {
        let budget = Budget::default();
        for (m, a, b) in [(3, 2, 1), (4, 3, 1), (5, 3, 2)] {
            let sol = construct_auxiliary(m, a, b, &budget).unwrap();
            let corner = corner_rates(m, a, b).unwrap();
            assert!((sol.rates.r0 - corner.r0).abs() < 1e-9, "m={} r0", m);
            assert!((sol.rates.r1 - corner.r1).abs() < 1e-9, "m={} r1", m);
            assert!((sol.rates.r2 - corner.r2).abs() < 1e-9, "m={} r2", m);
            assert!(sol.markov_residual < 1e-12, "m={} residual {}", m, sol.markov_residual);
            assert!(sol.marginal_residual < 1e-12);
            assert!(!sol.penalty_failure);
        }
    }

    #[test]
    fn membership_accepts_corners_and_rejects_below() {
        let c = corner_rates(5, 3, 1).unwrap();
        assert!(member_closed_form(5, &c, 1e-9).unwrap());
        let below = RateTriple::new(c.r0 - 0.01, c.r1, c.r2);
        // Below this corner, but possibly inside another cone; compare
        // against them all.
        let inside_any = closed_form_corners(5).unwrap().iter().any(|k| {
            below.r0 >= k.rates.r0 - 1e-9
                && below.r1 >= k.rates.r1 - 1e-9
                && below.r2 >= k.rates.r2 - 1e-9
        });
        assert_eq!(member_closed_form(5, &below, 1e-9).unwrap(), inside_any);
        let nowhere = RateTriple::new(0.0, 0.0, 0.0);
        assert!(!member_closed_form(5, &nowhere, 1e-9).unwrap());
    }

    #[test]
    fn min_r0_maximizes_integer_product() {
        for m in 3..=8 {
            let best = min_r0_corner(m).unwrap();
            for c in closed_form_corners(m).unwrap() {
                assert!(best.rates.r0 <= c.rates.r0 + 1e-12);
            }
        }
    }

    #[test]
    fn entropy_ceilings_hold_with_equality() {
        // At the subset auxiliary, H(X|V) = log2 a and H(X|UV) = log2(a−b).
        let sol = construct_auxiliary(5, 3, 1, &Budget::default()).unwrap();
        let h_x_given_v = sol.joint.entropy(&["x", "v"]).unwrap()
            - sol.joint.entropy(&["v"]).unwrap();
        let h_x_given_uv = sol.joint.entropy(&["x", "u", "v"]).unwrap()
            - sol.joint.entropy(&["u", "v"]).unwrap();
        assert!((h_x_given_v - 3f64.log2()).abs() < 1e-12);
        assert!((h_x_given_uv - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_corners() {
        assert!(corner_rates(3, 1, 1).is_err());
        assert!(corner_rates(3, 2, 2).is_err());
        assert!(corner_rates(2, 2, 1).is_err());
        assert!(construct_auxiliary(13, 3, 1, &Budget::default()).is_err());
    }
}
