//! Information measures on [`JointDist`]: entropy, (conditional) mutual
//! information, Markov-chain violation, and the entropy–total-variation
//! bound g(ε). All quantities in bits.

use crate::dist::JointDist;
use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Shannon entropy of a mass slice, 0·log 0 = 0.
pub fn entropy_of(mass: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in mass {
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}

/// Binary entropy h(p).
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// A Markov chain assertion left − mid − right on a joint's axes.
/// `mid` may be empty (unconditional independence of left and right).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub left: Vec<String>,
    pub mid: Vec<String>,
    pub right: Vec<String>,
}

impl ChainSpec {
    pub fn new<S: Into<String> + Clone>(left: &[S], mid: &[S], right: &[S]) -> Self {
        ChainSpec {
            left: left.iter().cloned().map(Into::into).collect(),
            mid: mid.iter().cloned().map(Into::into).collect(),
            right: right.iter().cloned().map(Into::into).collect(),
        }
    }
}

fn check_disjoint(groups: &[&[String]]) -> Result<()> {
    let mut seen: Vec<&str> = Vec::new();
    for g in groups {
        for name in *g {
            if seen.contains(&name.as_str()) {
                return Err(Error::InvalidArgument(format!("axis {name} appears in two groups")));
            }
            seen.push(name);
        }
    }
    Ok(())
}

impl JointDist {
    /// Shannon entropy of the marginal on `axes`, base 2.
    pub fn entropy(&self, axes: &[&str]) -> Result<f64> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("entropy over empty axis set".into()));
        }
        if axes.len() == self.axes().len() {
            // Entropy is order-invariant; skip the marginal copy.
            let mut all = true;
            for a in axes {
                if self.axis_pos(a).is_err() {
                    all = false;
                    break;
                }
            }
            if all {
                return Ok(entropy_of(self.mass()));
            }
        }
        Ok(entropy_of(self.marginal(axes)?.mass()))
    }

    /// Conditional mutual information I(A; B | C); C may be empty.
    /// Computed as H(A,C) + H(B,C) − H(A,B,C) − H(C).
    pub fn mutual_information(
        &self,
        group_a: &[&str],
        group_b: &[&str],
        group_cond: &[&str],
    ) -> Result<f64> {
        if group_a.is_empty() || group_b.is_empty() {
            return Err(Error::InvalidArgument("mutual information needs nonempty groups".into()));
        }
        let a: Vec<String> = group_a.iter().map(|s| s.to_string()).collect();
        let b: Vec<String> = group_b.iter().map(|s| s.to_string()).collect();
        let c: Vec<String> = group_cond.iter().map(|s| s.to_string()).collect();
        check_disjoint(&[&a, &b, &c])?;
        for name in a.iter().chain(&b).chain(&c) {
            self.axis_pos(name)?;
        }

        let ac: Vec<&str> = group_a.iter().chain(group_cond).copied().collect();
        let bc: Vec<&str> = group_b.iter().chain(group_cond).copied().collect();
        let abc: Vec<&str> = group_a.iter().chain(group_b).chain(group_cond).copied().collect();
        let h_ac = self.entropy(&ac)?;
        let h_bc = self.entropy(&bc)?;
        let h_abc = self.entropy(&abc)?;
        let h_c = if group_cond.is_empty() { 0.0 } else { self.entropy(group_cond)? };
        Ok(h_ac + h_bc - h_abc - h_c)
    }

    /// Markov-chain violation of left − mid − right, measured as
    /// I(left; right | mid) ≥ 0; zero iff the chain holds exactly.
    pub fn markov_violation(&self, chain: &ChainSpec) -> Result<f64> {
        let left: Vec<&str> = chain.left.iter().map(|s| s.as_str()).collect();
        let mid: Vec<&str> = chain.mid.iter().map(|s| s.as_str()).collect();
        let right: Vec<&str> = chain.right.iter().map(|s| s.as_str()).collect();
        self.mutual_information(&left, &right, &mid)
    }
}

/// Entropy–total-variation bound g(ε) = 4ε·log2(size/ε), valid for
/// 0 < ε < 1/4: two distributions on `size` atoms within total variation ε
/// have entropies within g(ε) of each other.
pub fn g_epsilon(eps: f64, alphabet_product_size: usize) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(Error::Domain(format!("g(ε) needs 0 < ε < 1/4, got {eps}")));
    }
    if alphabet_product_size == 0 {
        return Err(Error::Domain("alphabet size must be positive".into()));
    }
    Ok(4.0 * eps * (alphabet_product_size as f64 / eps).log2())
}
