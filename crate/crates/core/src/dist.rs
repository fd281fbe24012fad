use crate::budget::Budget;
use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Normalization slack accepted at construction. Wide enough to absorb
/// float accumulation over large products of conditionals; totals inside
/// the band are renormalized exactly, anything outside is rejected as a
/// real modeling error.
pub const NORM_TOL: f64 = 1e-9;

/// One named dimension of a product alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub size: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Axis { name: name.into(), size }
    }
}

/// A probability mass function on a finite product alphabet, stored dense
/// in row-major order (last axis fastest).
///
/// Invariants, enforced at construction and on deserialization:
/// axis names unique, every size ≥ 1, all entries ≥ 0, total mass within
/// [`NORM_TOL`] of 1 (and rescaled to exactly 1 when it is not already).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJointDist")]
pub struct JointDist {
    axes: Vec<Axis>,
    mass: Vec<f64>,
}

#[derive(Deserialize)]
struct RawJointDist {
    axes: Vec<Axis>,
    mass: Vec<f64>,
}

impl TryFrom<RawJointDist> for JointDist {
    type Error = Error;
    fn try_from(raw: RawJointDist) -> Result<Self> {
        JointDist::new(raw.axes, raw.mass)
    }
}

impl JointDist {
    pub fn new(axes: Vec<Axis>, mut mass: Vec<f64>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("at least one axis required".into()));
        }
        for (i, a) in axes.iter().enumerate() {
            if a.size == 0 {
                return Err(Error::InvalidArgument(format!("axis {} has size 0", a.name)));
            }
            if axes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidArgument(format!("duplicate axis name {}", a.name)));
            }
        }
        let want: usize = axes.iter().map(|a| a.size).product();
        if mass.len() != want {
            return Err(Error::InvalidArgument(format!(
                "mass has {} entries, axes imply {}",
                mass.len(),
                want
            )));
        }
        let mut total = 0.0;
        for &p in &mass {
            if !(p >= 0.0) {
                return Err(Error::NotNormalized(format!("negative or NaN entry {p}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(format!("total mass {total}")));
        }
        if total != 1.0 {
            for p in &mut mass {
                *p /= total;
            }
        }
        Ok(JointDist { axes, mass })
    }

    /// Uniform distribution over the product alphabet.
    pub fn uniform(axes: Vec<Axis>) -> Result<Self> {
        let n: usize = axes.iter().map(|a| a.size).product();
        if n == 0 {
            return Err(Error::InvalidArgument("empty alphabet".into()));
        }
        let p = 1.0 / n as f64;
        JointDist::new(axes, vec![p; n])
    }

    /// Builds from a cell-indexed function; `f` receives one index per axis.
    pub fn from_fn(axes: Vec<Axis>, f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        let sizes: Vec<usize> = axes.iter().map(|a| a.size).collect();
        let total: usize = sizes.iter().product();
        let mut mass = vec![0.0; total];
        let mut idx = vec![0usize; sizes.len()];
        for (flat, slot) in mass.iter_mut().enumerate() {
            unravel(flat, &sizes, &mut idx);
            *slot = f(&idx);
        }
        JointDist::new(axes, mass)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.size).collect()
    }

    pub fn axis_pos(&self, name: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no axis named {name}")))
    }

    /// Row-major strides, last axis fastest.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.sizes())
    }

    /// Flat index of a full coordinate tuple.
    pub fn flat_index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.axes.len());
        let mut flat = 0;
        for (c, a) in coords.iter().zip(&self.axes) {
            debug_assert!(*c < a.size);
            flat = flat * a.size + c;
        }
        flat
    }

    pub fn prob(&self, coords: &[usize]) -> f64 {
        self.mass[self.flat_index(coords)]
    }

    /// Marginal over `keep`, axes emitted in the order given.
    pub fn marginal(&self, keep: &[&str]) -> Result<JointDist> {
        if keep.is_empty() {
            return Err(Error::InvalidArgument("marginal over empty axis set".into()));
        }
        let positions: Vec<usize> = keep.iter().map(|n| self.axis_pos(n)).collect::<Result<_>>()?;
        let out_axes: Vec<Axis> = positions.iter().map(|&p| self.axes[p].clone()).collect();
        let out_sizes: Vec<usize> = out_axes.iter().map(|a| a.size).collect();
        let mut out = vec![0.0; out_sizes.iter().product()];
        let sizes = self.sizes();
        let mut idx = vec![0usize; sizes.len()];
        for (flat, &p) in self.mass.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            unravel(flat, &sizes, &mut idx);
            let mut o = 0usize;
            for (&pos, &s) in positions.iter().zip(&out_sizes) {
                o = o * s + idx[pos];
            }
            out[o] += p;
        }
        JointDist::new(out_axes, out)
    }

    /// Same distribution with axes reordered to `order` (a permutation of
    /// the axis names).
    pub fn permuted(&self, order: &[&str]) -> Result<JointDist> {
        if order.len() != self.axes.len() {
            return Err(Error::InvalidArgument("permutation must list every axis".into()));
        }
        self.marginal(order)
    }

    /// Conditional distribution over the remaining axes given `axis = value`.
    pub fn condition(&self, axis: &str, value: usize) -> Result<JointDist> {
        let pos = self.axis_pos(axis)?;
        if value >= self.axes[pos].size {
            return Err(Error::InvalidArgument(format!("value {value} out of range for {axis}")));
        }
        if self.axes.len() == 1 {
            return Err(Error::InvalidArgument("conditioning away the only axis".into()));
        }
        let sizes = self.sizes();
        let out_axes: Vec<Axis> =
            self.axes.iter().enumerate().filter(|(i, _)| *i != pos).map(|(_, a)| a.clone()).collect();
        let mut out = vec![0.0; out_axes.iter().map(|a| a.size).product()];
        let mut idx = vec![0usize; sizes.len()];
        let mut total = 0.0;
        for (flat, &p) in self.mass.iter().enumerate() {
            unravel(flat, &sizes, &mut idx);
            if idx[pos] != value {
                continue;
            }
            let mut o = 0usize;
            for (i, &v) in idx.iter().enumerate() {
                if i != pos {
                    o = o * sizes[i] + v;
                }
            }
            out[o] = p;
            total += p;
        }
        if total <= 0.0 {
            return Err(Error::Domain(format!("conditioning event {axis}={value} has zero mass")));
        }
        for v in &mut out {
            *v /= total;
        }
        JointDist::new(out_axes, out)
    }

    /// Total variation distance ½·Σ|p−q|. Requires identical axes in
    /// identical order.
    pub fn tv_distance(&self, other: &JointDist) -> Result<f64> {
        if self.axes != other.axes {
            return Err(Error::AxisMismatch(format!(
                "{:?} vs {:?}",
                self.axes.iter().map(|a| &a.name).collect::<Vec<_>>(),
                other.axes.iter().map(|a| &a.name).collect::<Vec<_>>()
            )));
        }
        let mut acc = 0.0;
        for (&a, &b) in self.mass.iter().zip(&other.mass) {
            acc += (a - b).abs();
        }
        Ok(acc / 2.0)
    }

    /// n-fold iid extension: same axis names, each size raised to the n-th
    /// power. A sequence axis indexes symbol tuples big-endian (t = 0 most
    /// significant), so cell (i_1..i_k) carries ∏_t p(x_t per axis).
    pub fn iid_extend(&self, n: u32, budget: &Budget) -> Result<JointDist> {
        if n == 0 {
            return Err(Error::InvalidArgument("iid extension needs n ≥ 1".into()));
        }
        let sizes = self.sizes();
        let mut out_sizes = Vec::with_capacity(sizes.len());
        let mut cells: u128 = 1;
        for &s in &sizes {
            let sn = (s as u128).checked_pow(n).ok_or(Error::Capacity {
                needed: u128::MAX,
                limit: budget.max_cells,
            })?;
            cells = cells.saturating_mul(sn);
            out_sizes.push(sn);
        }
        budget.check(cells)?;
        let out_axes: Vec<Axis> = self
            .axes
            .iter()
            .zip(&out_sizes)
            .map(|(a, &s)| Axis::new(a.name.clone(), s as usize))
            .collect();
        let k = sizes.len();
        let mut mass = vec![0.0; cells as usize];
        let out_usizes: Vec<usize> = out_sizes.iter().map(|&s| s as usize).collect();
        let mut seq_idx = vec![0usize; k];
        let mut symbol = vec![0usize; k];
        for (flat, slot) in mass.iter_mut().enumerate() {
            unravel(flat, &out_usizes, &mut seq_idx);
            let mut p = 1.0;
            for t in (0..n).rev() {
                // t-th symbol of each axis, little-endian digit t.
                for (ax, sym) in symbol.iter_mut().enumerate() {
                    let base = sizes[ax];
                    let mut v = seq_idx[ax];
                    for _ in 0..t {
                        v /= base;
                    }
                    *sym = v % base;
                }
                p *= self.prob(&symbol);
                if p == 0.0 {
                    break;
                }
            }
            *slot = p;
        }
        // Renormalization guard: product construction keeps the total within
        // float error of 1, but long products accumulate noise.
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            for v in &mut mass {
                *v /= total;
            }
        }
        JointDist::new(out_axes, mass)
    }

    /// Renames one axis in place, preserving mass.
    pub fn renamed(mut self, from: &str, to: &str) -> Result<JointDist> {
        let pos = self.axis_pos(from)?;
        if self.axes.iter().any(|a| a.name == to) {
            return Err(Error::InvalidArgument(format!("axis {to} already exists")));
        }
        self.axes[pos].name = to.into();
        Ok(self)
    }
}

/// Row-major strides for the given sizes.
pub fn strides_of(sizes: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; sizes.len()];
    for i in (0..sizes.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * sizes[i + 1];
    }
    strides
}

/// Decodes a flat row-major index into per-axis coordinates.
pub fn unravel(mut flat: usize, sizes: &[usize], out: &mut [usize]) {
    for i in (0..sizes.len()).rev() {
        out[i] = flat % sizes[i];
        flat /= sizes[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy() -> JointDist {
        JointDist::new(
            vec![Axis::new("x", 2), Axis::new("y", 2)],
            vec![0.4, 0.1, 0.2, 0.3],
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_mass() {
        let axes = vec![Axis::new("x", 2)];
        assert!(JointDist::new(axes.clone(), vec![0.5, 0.6]).is_err());
        assert!(JointDist::new(axes.clone(), vec![-0.1, 1.1]).is_err());
        assert!(JointDist::new(axes.clone(), vec![0.5, 0.5, 0.0]).is_err());
        assert!(JointDist::new(axes, vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn rejects_duplicate_axis() {
        let axes = vec![Axis::new("x", 2), Axis::new("x", 2)];
        assert!(JointDist::new(axes, vec![0.25; 4]).is_err());
    }

    #[test]
    fn marginal_sums_rows() {
        let p = xy();
        let mx = p.marginal(&["x"]).unwrap();
        assert!((mx.mass()[0] - 0.5).abs() < 1e-15);
        assert!((mx.mass()[1] - 0.5).abs() < 1e-15);
        let my = p.marginal(&["y"]).unwrap();
        assert!((my.mass()[0] - 0.6).abs() < 1e-15);
        assert!((my.mass()[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn marginal_keeps_requested_order() {
        let p = xy();
        let m = p.marginal(&["y", "x"]).unwrap();
        assert_eq!(m.axes()[0].name, "y");
        // m(y=0, x=1) = p(x=1, y=0)
        assert!((m.prob(&[0, 1]) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn condition_renormalizes() {
        let p = xy();
        let c = p.condition("x", 0).unwrap();
        assert!((c.mass()[0] - 0.8).abs() < 1e-12);
        assert!((c.mass()[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn tv_basics() {
        let p = xy();
        assert_eq!(p.tv_distance(&p).unwrap(), 0.0);
        let a = JointDist::new(vec![Axis::new("x", 2)], vec![1.0, 0.0]).unwrap();
        let b = JointDist::new(vec![Axis::new("x", 2)], vec![0.0, 1.0]).unwrap();
        assert_eq!(a.tv_distance(&b).unwrap(), 1.0);
        let c = JointDist::new(vec![Axis::new("x", 2)], vec![0.5, 0.5]).unwrap();
        let d = JointDist::new(vec![Axis::new("x", 2)], vec![0.75, 0.25]).unwrap();
        assert!((c.tv_distance(&d).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn tv_requires_same_axes() {
        let a = JointDist::new(vec![Axis::new("x", 2)], vec![0.5, 0.5]).unwrap();
        let b = JointDist::new(vec![Axis::new("y", 2)], vec![0.5, 0.5]).unwrap();
        assert!(a.tv_distance(&b).is_err());
    }

    #[test]
    fn iid_extend_uniform() {
        let p = JointDist::uniform(vec![Axis::new("x", 2)]).unwrap();
        let p3 = p.iid_extend(3, &Budget::default()).unwrap();
        assert_eq!(p3.axes()[0].size, 8);
        for &v in p3.mass() {
            assert!((v - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn iid_extend_n1_is_identity() {
        let p = xy();
        let p1 = p.iid_extend(1, &Budget::default()).unwrap();
        assert_eq!(p1.mass(), p.mass());
    }

    #[test]
    fn iid_extend_respects_budget() {
        let p = JointDist::uniform(vec![Axis::new("x", 10)]).unwrap();
        let tiny = Budget::new(100);
        match p.iid_extend(3, &tiny) {
            Err(Error::Capacity { needed, limit }) => {
                assert_eq!(needed, 1000);
                assert_eq!(limit, 100);
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let p = JointDist::new(
            vec![Axis::new("x", 3)],
            vec![0.1, 0.2, 0.7].iter().map(|v| v / 1.0).collect(),
        )
        .unwrap();
        let text = serde_json::to_string(&p).unwrap();
        let back: JointDist = serde_json::from_str(&text).unwrap();
        assert_eq!(p.mass(), back.mass());
        assert_eq!(p.axes(), back.axes());
    }

    #[test]
    fn json_rejects_unnormalized() {
        let text = r#"{"axes":[{"name":"x","size":2}],"mass":[0.5,0.6]}"#;
        assert!(serde_json::from_str::<JointDist>(text).is_err());
    }
}
