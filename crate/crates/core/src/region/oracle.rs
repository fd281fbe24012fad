//! Exhaustive grid cross-check for the region optimizer.
//!
//! Enumerates every conditional P(U,V | x,y,z) whose rows live on the
//! simplex grid with denominator `grid` (restricted to source support
//! rows; off-support rows carry no mass and are irrelevant), keeps the
//! points whose summed chain violation is at most `pen_tol`, and reports
//! the minimum weighted rate objective among them. The result upper-bounds
//! the true minimum, so an optimizer value far below `envelope −
//! resolution` indicates the optimizer left the feasible set.

use crate::budget::Budget;
use crate::dist::JointDist;
use crate::error::Error;
use crate::info::entropy_of;
use crate::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Width of the sanity band, in units of grid step: `resolution =
/// RESOLUTION_SLACK_FACTOR / grid` bits. The factor absorbs the grid's
/// suboptimality (the continuum optimum sits between grid points), which
/// empirically stays well under four steps for the alphabet sizes the
/// oracle can enumerate. The band is for one-sided sanity checks, not for
/// certifying optimality.
pub const RESOLUTION_SLACK_FACTOR: f64 = 4.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleEnvelope {
    /// Per requested weight triple: least w·(I(XYZ;UV), I(X;UV), I(X;V))
    /// over chain-feasible grid points; None when no grid point passed the
    /// residual filter.
    pub envelopes: Vec<Option<f64>>,
    pub feasible_points: u64,
    pub total_points: u64,
    pub grid: usize,
    pub pen_tol: f64,
    /// Sanity band width in bits; see RESOLUTION_SLACK_FACTOR.
    pub resolution: f64,
}

/// All compositions of `total` into `parts` nonnegative integers, as
/// probability rows with denominator `total`.
fn grid_rows(total: usize, parts: usize) -> Vec<Vec<f64>> {
    fn rec(remaining: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=remaining {
            prefix.push(k);
            rec(remaining - k, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut raw = Vec::new();
    rec(total, parts, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|counts| counts.into_iter().map(|k| k as f64 / total as f64).collect())
        .collect()
}

/// Marginal accumulators carried down the enumeration. Small enough to
/// clone per branch.
#[derive(Clone)]
struct Acc {
    m_uv: Vec<f64>,
    m_v: Vec<f64>,
    m_xuv: Vec<f64>,
    m_yuv: Vec<f64>,
    m_xyuv: Vec<f64>,
    m_zv: Vec<f64>,
    m_xv: Vec<f64>,
    h_all: f64,
}

struct Enumeration<'a> {
    rows: &'a [Vec<f64>],
    support: &'a [(usize, [usize; 3], f64)],
    ny: usize,
    cv: usize,
    nw: usize,
    h_xyz: f64,
    h_x: f64,
    pen_tol: f64,
    weights: &'a [(f64, f64, f64)],
    /// Precomputed −Σ_w p log2 p of one applied row, indexed [support
    /// row][grid row].
    hall: &'a [Vec<f64>],
}

#[derive(Clone)]
struct Mins {
    per_weight: Vec<f64>,
    feasible: u64,
}

impl Mins {
    fn new(n: usize) -> Self {
        Mins { per_weight: vec![f64::INFINITY; n], feasible: 0 }
    }

    fn merge(mut self, other: Mins) -> Mins {
        for (a, b) in self.per_weight.iter_mut().zip(other.per_weight) {
            if b < *a {
                *a = b;
            }
        }
        self.feasible += other.feasible;
        self
    }
}

impl<'a> Enumeration<'a> {
    fn apply(&self, acc: &mut Acc, depth: usize, g: usize) {
        let (_, [x, y, z], qs) = self.support[depth];
        let row = &self.rows[g];
        for (w, &rw) in row.iter().enumerate() {
            let p = qs * rw;
            if p == 0.0 {
                continue;
            }
            let v = w % self.cv;
            acc.m_uv[w] += p;
            acc.m_v[v] += p;
            acc.m_xuv[x * self.nw + w] += p;
            acc.m_yuv[y * self.nw + w] += p;
            acc.m_xyuv[(x * self.ny + y) * self.nw + w] += p;
            acc.m_zv[z * self.cv + v] += p;
            acc.m_xv[x * self.cv + v] += p;
        }
        acc.h_all += self.hall[depth][g];
    }

    fn leaf(&self, acc: &Acc, mins: &mut Mins) {
        let h_uv = entropy_of(&acc.m_uv);
        let h_v = entropy_of(&acc.m_v);
        let h_xuv = entropy_of(&acc.m_xuv);
        let h_yuv = entropy_of(&acc.m_yuv);
        let h_xyuv = entropy_of(&acc.m_xyuv);
        let h_zv = entropy_of(&acc.m_zv);
        let h_xv = entropy_of(&acc.m_xv);
        let pen = (h_xuv + h_yuv - h_xyuv - h_uv) + (h_xyuv + h_zv - acc.h_all - h_v);
        if pen > self.pen_tol {
            return;
        }
        mins.feasible += 1;
        let i0 = self.h_xyz + h_uv - acc.h_all;
        let i1 = self.h_x + h_uv - h_xuv;
        let i2 = self.h_x + h_v - h_xv;
        for (k, &(w0, w1, w2)) in self.weights.iter().enumerate() {
            let val = w0 * i0 + w1 * i1 + w2 * i2;
            if val < mins.per_weight[k] {
                mins.per_weight[k] = val;
            }
        }
    }

    fn dfs(&self, acc: &Acc, depth: usize, mins: &mut Mins) {
        if depth == self.support.len() {
            self.leaf(acc, mins);
            return;
        }
        for g in 0..self.rows.len() {
            let mut next = acc.clone();
            self.apply(&mut next, depth, g);
            self.dfs(&next, depth + 1, mins);
        }
    }
}

/// Grid-enumerated envelope of the weighted rate objective over the
/// chain-feasible set at fixed auxiliary cardinalities.
pub fn brute_force_oracle(
    q: &JointDist,
    weights: &[(f64, f64, f64)],
    cu: usize,
    cv: usize,
    grid: usize,
    pen_tol: f64,
    budget: &Budget,
) -> Result<OracleEnvelope> {
    if q.axes().len() != 3 {
        return Err(Error::AxisMismatch("oracle source must have axes (x, y, z)".into()));
    }
    if cu < 1 || cv < 1 || grid < 1 {
        return Err(Error::InvalidArgument("cards and grid must be ≥ 1".into()));
    }
    if weights.is_empty() {
        return Err(Error::InvalidArgument("at least one weight triple".into()));
    }
    let q3 = q.marginal(&["x", "y", "z"])?;
    let sizes = q3.sizes();
    let (nx, ny, nz) = (sizes[0], sizes[1], sizes[2]);
    let nw = cu * cv;
    let rows = grid_rows(grid, nw);

    let support: Vec<(usize, [usize; 3], f64)> = q3
        .mass()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, &p)| (s, [s / (ny * nz), (s / nz) % ny, s % nz], p))
        .collect();

    let mut leaves: u128 = 1;
    for _ in 0..support.len() {
        leaves = leaves.saturating_mul(rows.len() as u128);
    }
    budget.check(leaves)?;

    let hall: Vec<Vec<f64>> = support
        .iter()
        .map(|&(_, _, qs)| {
            rows.iter()
                .map(|row| {
                    row.iter()
                        .map(|&rw| {
                            let p = qs * rw;
                            if p > 0.0 {
                                -p * p.log2()
                            } else {
                                0.0
                            }
                        })
                        .sum()
                })
                .collect()
        })
        .collect();

    let mut qx = vec![0.0; nx];
    for (s, &p) in q3.mass().iter().enumerate() {
        qx[s / (ny * nz)] += p;
    }
    let en = Enumeration {
        rows: &rows,
        support: &support,
        ny,
        cv,
        nw,
        h_xyz: entropy_of(q3.mass()),
        h_x: entropy_of(&qx),
        pen_tol,
        weights,
        hall: &hall,
    };

    let empty = Acc {
        m_uv: vec![0.0; nw],
        m_v: vec![0.0; cv],
        m_xuv: vec![0.0; nx * nw],
        m_yuv: vec![0.0; ny * nw],
        m_xyuv: vec![0.0; nx * ny * nw],
        m_zv: vec![0.0; nz * cv],
        m_xv: vec![0.0; nx * cv],
        h_all: 0.0,
    };

    let mins = if support.is_empty() {
        Mins::new(weights.len())
    } else {
        (0..rows.len())
            .into_par_iter()
            .map(|g0| {
                let mut acc = empty.clone();
                en.apply(&mut acc, 0, g0);
                let mut mins = Mins::new(weights.len());
                en.dfs(&acc, 1, &mut mins);
                mins
            })
            .reduce(|| Mins::new(weights.len()), Mins::merge)
    };

    Ok(OracleEnvelope {
        envelopes: mins
            .per_weight
            .iter()
            .map(|&v| if v.is_finite() { Some(v) } else { None })
            .collect(),
        feasible_points: mins.feasible,
        total_points: leaves.min(u64::MAX as u128) as u64,
        grid,
        pen_tol,
        resolution: RESOLUTION_SLACK_FACTOR / grid as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Axis;

    #[test]
    fn grid_rows_count_matches_stars_and_bars() {
        // C(4+3-1, 3-1) = 15 compositions of 4 into 3 parts.
        assert_eq!(grid_rows(4, 3).len(), 15);
        for row in grid_rows(4, 3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn copies_source_envelope_is_one_bit() {
        let q = JointDist::from_fn(
            vec![Axis::new("x", 2), Axis::new("y", 2), Axis::new("z", 2)],
            |c| if c[0] == c[1] && c[1] == c[2] { 0.5 } else { 0.0 },
        )
        .unwrap();
        let out = brute_force_oracle(&q, &[(1.0, 0.0, 0.0)], 2, 2, 4, 1e-3, &Budget::default())
            .unwrap();
        let env = out.envelopes[0].expect("exact chain points exist on the grid");
        assert!((env - 1.0).abs() < 1e-9, "envelope {}", env);
        assert!(out.feasible_points > 0);
    }

    #[test]
    fn independent_source_envelope_touches_zero() {
        let q = JointDist::from_fn(
            vec![Axis::new("x", 2), Axis::new("y", 2), Axis::new("z", 2)],
            |_| 0.125,
        )
        .unwrap();
        let out = brute_force_oracle(&q, &[(1.0, 1.0, 1.0)], 2, 2, 2, 1e-9, &Budget::default())
            .unwrap();
        assert_eq!(out.envelopes[0], Some(0.0));
    }

    #[test]
    fn budget_rejects_oversized_enumerations() {
        let q = JointDist::from_fn(
            vec![Axis::new("x", 2), Axis::new("y", 2), Axis::new("z", 2)],
            |_| 0.125,
        )
        .unwrap();
        let tiny = Budget::new(100);
        let err = brute_force_oracle(&q, &[(1.0, 0.0, 0.0)], 2, 2, 4, 1e-3, &tiny);
        assert!(matches!(err, Err(Error::Capacity { .. })));
    }
}
