//! Achievable rate region for secure cascade synthesis.
//!
//! A rate triple (R0, R1, R2) is achievable iff there exist auxiliary
//! variables (U, V) with X − (U,V) − Y and (X,Y,U) − V − Z such that
//!
//! * R1 ≥ I(X; U,V)   (first link),
//! * R2 ≥ I(X; V)     (second link),
//! * R0 ≥ I(X,Y,Z; U,V) (common randomness),
//!
//! with cardinality caps |V| ≤ |X||Y||Z|+3 and |U| ≤ |X||Y||Z|·|V|+2.
//! The region is computed numerically: a penalized multi-start
//! exponentiated-gradient search over conditionals P(U,V | X,Y,Z), so the
//! target X,Y,Z marginal is exact by construction and the two Markov
//! chains enter as penalties. A brute-force grid oracle cross-checks the
//! optimizer in tests.

mod mnode;
mod optimizer;
mod oracle;

pub use mnode::{membership_m_node, MnodeConfig, MnodeSolution, MnodeVerdict};
pub use optimizer::{
    cascade_common_info, common_info_pair, min_weighted_rates, no_eavesdropper_inner_bound,
    pareto_trace, region_membership, wyner_common_info, MembershipVerdict, NoEavesdropperVerdict,
    ParetoPoint, WynerSolution,
};
pub use oracle::{brute_force_oracle, OracleEnvelope, RESOLUTION_SLACK_FACTOR};

use crate::dist::JointDist;
use crate::error::Error;
use crate::info::ChainSpec;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Rates in bits per symbol: common randomness, first link, second link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTriple {
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

impl RateTriple {
    pub fn new(r0: f64, r1: f64, r2: f64) -> Self {
        RateTriple { r0, r1, r2 }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.r0 >= 0.0 && self.r1 >= 0.0 && self.r2 >= 0.0
    }
}

/// Membership decision. Non-membership is advisory: the optimizer is an
/// inner (achievability-side) heuristic, so a failed search proves nothing
/// and the verdict is "at tolerance".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Member,
    NonMemberAtTolerance,
}

/// A candidate joint over (X,Y,Z,U,V) with its rate triple and residuals —
/// the optimizer's output and the certificate format for membership
/// verdicts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuxSolution {
    /// Joint over axes ("x","y","z","u","v").
    pub joint: JointDist,
    /// (I(X,Y,Z;U,V), I(X;U,V), I(X;V)) evaluated on `joint`.
    pub rates: RateTriple,
    /// Sum of the two chain violations, in bits.
    pub markov_residual: f64,
    /// TV between the joint's (X,Y,Z) marginal and the optimization target.
    /// Zero by construction in the conditional parameterization, up to
    /// float rounding.
    pub marginal_residual: f64,
    pub card_u: usize,
    pub card_v: usize,
    /// Set when the search could not drive the Markov residual below the
    /// configured tolerance.
    pub penalty_failure: bool,
}

/// Chains defining the feasible set on axes (x,y,z,u,v).
pub fn cascade_chains() -> (ChainSpec, ChainSpec) {
    (
        ChainSpec::new(&["x"], &["u", "v"], &["y"]),
        ChainSpec::new(&["x", "y", "u"], &["v"], &["z"]),
    )
}

impl AuxSolution {
    /// Recomputes rates and residuals from the stored joint.
    pub fn measure(joint: &JointDist) -> Result<(RateTriple, f64)> {
        let r0 = joint.mutual_information(&["x", "y", "z"], &["u", "v"], &[])?;
        let r1 = joint.mutual_information(&["x"], &["u", "v"], &[])?;
        let r2 = joint.mutual_information(&["x"], &["v"], &[])?;
        let (c1, c2) = cascade_chains();
        let residual = joint.markov_violation(&c1)? + joint.markov_violation(&c2)?;
        Ok((RateTriple::new(r0, r1, r2), residual))
    }

    /// Rebuilds the solution record from a joint (residual tolerance taken
    /// from the caller).
    pub fn from_joint(joint: JointDist, target_xyz: &JointDist, tol_markov: f64) -> Result<Self> {
        let (rates, markov_residual) = Self::measure(&joint)?;
        let marginal = joint.marginal(&["x", "y", "z"])?;
        let marginal_residual = marginal.tv_distance(target_xyz)?;
        let card_u = joint.axes()[joint.axis_pos("u")?].size;
        let card_v = joint.axes()[joint.axis_pos("v")?].size;
        Ok(AuxSolution {
            joint,
            rates,
            markov_residual,
            marginal_residual,
            card_u,
            card_v,
            penalty_failure: markov_residual > tol_markov,
        })
    }

    /// Remaps (U,V) to ((U,V), V): the new first auxiliary is the pair, the
    /// new second is a deterministic function of it. Rates and both chain
    /// residuals are unchanged; H(V|U) of the result is exactly zero.
    pub fn to_functional_v(&self) -> Result<AuxSolution> {
        let joint = &self.joint;
        let sizes = joint.sizes();
        let (nx, ny, nz, cu, cv) = (sizes[0], sizes[1], sizes[2], sizes[3], sizes[4]);
        let remapped = JointDist::from_fn(
            vec![
                joint.axes()[0].clone(),
                joint.axes()[1].clone(),
                joint.axes()[2].clone(),
                crate::dist::Axis::new("u", cu * cv),
                crate::dist::Axis::new("v", cv),
            ],
            |c| {
                let (x, y, z, up, vp) = (c[0], c[1], c[2], c[3], c[4]);
                let (u, v) = (up / cv, up % cv);
                if vp == v {
                    joint.prob(&[x, y, z, u, v])
                } else {
                    0.0
                }
            },
        )?;
        let _ = (nx, ny, nz);
        let target = joint.marginal(&["x", "y", "z"])?;
        let mut out = AuxSolution::from_joint(remapped, &target, f64::INFINITY)?;
        out.penalty_failure = self.penalty_failure;
        Ok(out)
    }

    /// H(V|U) of the stored joint, in bits.
    pub fn v_given_u_entropy(&self) -> Result<f64> {
        Ok(self.joint.entropy(&["u", "v"])? - self.joint.entropy(&["u"])?)
    }
}

/// Search configuration for the region optimizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Cardinality caps for the auxiliary alphabets. The search ladder
    /// never exceeds them; theory caps them at |X||Y||Z|+3 for V and
    /// |X||Y||Z|·|V|+2 for U, but small caps suffice in practice.
    pub card_u: usize,
    pub card_v: usize,
    /// Restarts per ladder rung.
    pub restarts: usize,
    /// Increasing penalty weights on the Markov residual; each stage runs
    /// `iters_per_stage` exponentiated-gradient iterations.
    pub penalty_schedule: Vec<f64>,
    pub iters_per_stage: u32,
    /// Step size and per-iteration gradient clip (bits).
    pub eta: f64,
    pub grad_clip: f64,
    /// Residual above which a result is flagged as a penalty failure.
    pub tol_markov: f64,
    /// Membership slack: member iff best max-constraint-slack ≤ tol_rate.
    pub tol_rate: f64,
    pub seed: u64,
    /// Explicit card ladder; `None` derives a default ladder from the caps.
    pub card_ladder: Option<Vec<(usize, usize)>>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            card_u: 4,
            card_v: 4,
            restarts: 32,
            penalty_schedule: vec![10.0, 100.0, 1000.0, 1e4],
            iters_per_stage: 500,
            eta: 0.35,
            grad_clip: 30.0,
            tol_markov: 1e-6,
            tol_rate: 5e-3,
            seed: 0,
            card_ladder: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.card_u < 1 || self.card_v < 1 {
            return Err(Error::InvalidArgument("cardinality caps must be ≥ 1".into()));
        }
        if self.restarts < 1 {
            return Err(Error::InvalidArgument("restarts must be ≥ 1".into()));
        }
        if self.penalty_schedule.is_empty()
            || self.penalty_schedule.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidArgument(
                "penalty schedule must be nonempty and strictly increasing".into(),
            ));
        }
        if !self.penalty_schedule.iter().all(|l| l.is_finite() && *l > 0.0) {
            return Err(Error::InvalidArgument("penalty weights must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument("step size must be positive".into()));
        }
        Ok(())
    }

    /// Ladder of (card_u, card_v) rungs searched in order, never exceeding
    /// the caps. Includes (1, card_v) so single-auxiliary embeddings are
    /// reachable, and the full caps as the last rung. Rung results carry
    /// rung-specific seeds, so enlarging the caps only adds candidates.
    pub fn ladder(&self) -> Vec<(usize, usize)> {
        if let Some(explicit) = &self.card_ladder {
            return explicit.clone();
        }
        let base = [(1, 2), (2, 2), (1, 3), (3, 3), (1, 4), (2, 4)];
        let mut rungs: Vec<(usize, usize)> = Vec::new();
        let push = |r: (usize, usize), rungs: &mut Vec<(usize, usize)>| {
            if r.0 >= 1 && r.1 >= 1 && r.0 <= self.card_u && r.1 <= self.card_v {
                if !rungs.contains(&r) {
                    rungs.push(r);
                }
            }
        };
        for r in base {
            push(r, &mut rungs);
        }
        push((1, self.card_v), &mut rungs);
        push((self.card_u, self.card_v), &mut rungs);
        if rungs.is_empty() {
            rungs.push((self.card_u.min(1), self.card_v.min(2).max(1)));
        }
        rungs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_respects_caps_and_ends_at_caps() {
        let cfg = OptimizerConfig { card_u: 2, card_v: 4, ..Default::default() };
        let ladder = cfg.ladder();
        assert!(ladder.iter().all(|&(u, v)| u <= 2 && v <= 4));
        assert!(ladder.contains(&(2, 4)));
        assert!(ladder.contains(&(1, 4)));
    }

    #[test]
    fn ladder_explicit_wins() {
        let cfg = OptimizerConfig {
            card_ladder: Some(vec![(3, 3)]),
            ..Default::default()
        };
        assert_eq!(cfg.ladder(), vec![(3, 3)]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = OptimizerConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.penalty_schedule = vec![10.0, 10.0];
        assert!(cfg.validate().is_err());
        cfg.penalty_schedule = vec![10.0];
        cfg.restarts = 0;
        assert!(cfg.validate().is_err());
    }
}
