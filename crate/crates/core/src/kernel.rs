use crate::dist::{strides_of, unravel, Axis, JointDist, NORM_TOL};
use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};

/// A conditional distribution (stochastic map) from one product alphabet to
/// another: one probability row over the target alphabet per conditioning
/// tuple, row-major on both sides.
///
/// Invariant: every row sums to 1 within [`NORM_TOL`] (rescaled to exactly 1
/// at construction), all entries ≥ 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel")]
pub struct Kernel {
    from_axes: Vec<Axis>,
    to_axes: Vec<Axis>,
    rows: Vec<f64>,
}

#[derive(Deserialize)]
struct RawKernel {
    from_axes: Vec<Axis>,
    to_axes: Vec<Axis>,
    rows: Vec<f64>,
}

impl TryFrom<RawKernel> for Kernel {
    type Error = Error;
    fn try_from(raw: RawKernel) -> Result<Self> {
        Kernel::new(raw.from_axes, raw.to_axes, raw.rows)
    }
}

impl Kernel {
    pub fn new(from_axes: Vec<Axis>, to_axes: Vec<Axis>, mut rows: Vec<f64>) -> Result<Self> {
        if from_axes.is_empty() || to_axes.is_empty() {
            return Err(Error::InvalidArgument("kernel needs nonempty axis lists".into()));
        }
        let nfrom: usize = from_axes.iter().map(|a| a.size).product();
        let nto: usize = to_axes.iter().map(|a| a.size).product();
        if rows.len() != nfrom * nto {
            return Err(Error::InvalidArgument(format!(
                "rows has {} entries, axes imply {}",
                rows.len(),
                nfrom * nto
            )));
        }
        for r in 0..nfrom {
            let row = &mut rows[r * nto..(r + 1) * nto];
            let mut total = 0.0;
            for &p in row.iter() {
                if !(p >= 0.0) {
                    return Err(Error::NotNormalized(format!("row {r}: bad entry {p}")));
                }
                total += p;
            }
            if (total - 1.0).abs() > NORM_TOL {
                return Err(Error::NotNormalized(format!("row {r} sums to {total}")));
            }
            if total != 1.0 {
                for p in row {
                    *p /= total;
                }
            }
        }
        Ok(Kernel { from_axes, to_axes, rows })
    }

    pub fn from_axes(&self) -> &[Axis] {
        &self.from_axes
    }

    pub fn to_axes(&self) -> &[Axis] {
        &self.to_axes
    }

    pub fn n_from(&self) -> usize {
        self.from_axes.iter().map(|a| a.size).product()
    }

    pub fn n_to(&self) -> usize {
        self.to_axes.iter().map(|a| a.size).product()
    }

    /// Probability row for one conditioning tuple (flat index).
    pub fn row(&self, from_flat: usize) -> &[f64] {
        let nto = self.n_to();
        &self.rows[from_flat * nto..(from_flat + 1) * nto]
    }

    /// Conditional P(to | from) extracted from a joint. Conditioning tuples
    /// with zero mass get a uniform row: they carry no mass in any
    /// composition, but rows must stay stochastic.
    pub fn from_joint(joint: &JointDist, from: &[&str], to: &[&str]) -> Result<Kernel> {
        for f in from {
            if to.contains(f) {
                return Err(Error::InvalidArgument(format!("axis {f} on both sides")));
            }
        }
        let reordered = joint.marginal(&[from, to].concat())?;
        let from_axes: Vec<Axis> = reordered.axes()[..from.len()].to_vec();
        let to_axes: Vec<Axis> = reordered.axes()[from.len()..].to_vec();
        let nfrom: usize = from_axes.iter().map(|a| a.size).product();
        let nto: usize = to_axes.iter().map(|a| a.size).product();
        let mut rows = vec![0.0; nfrom * nto];
        for r in 0..nfrom {
            let slice = &reordered.mass()[r * nto..(r + 1) * nto];
            let total: f64 = slice.iter().sum();
            let row = &mut rows[r * nto..(r + 1) * nto];
            if total > 0.0 {
                for (dst, &p) in row.iter_mut().zip(slice) {
                    *dst = p / total;
                }
            } else {
                let u = 1.0 / nto as f64;
                row.fill(u);
            }
        }
        Kernel::new(from_axes, to_axes, rows)
    }

    /// Composes the kernel onto a joint whose axes include `from_axes`
    /// (matched by name and size, any position). The result covers the
    /// joint's axes followed by `to_axes`.
    pub fn extend(&self, q: &JointDist) -> Result<JointDist> {
        let q_sizes = q.sizes();
        let mut from_pos = Vec::with_capacity(self.from_axes.len());
        for a in &self.from_axes {
            let pos = q.axis_pos(&a.name).map_err(|_| {
                Error::AxisMismatch(format!("joint lacks conditioning axis {}", a.name))
            })?;
            if q.axes()[pos].size != a.size {
                return Err(Error::AxisMismatch(format!("axis {} size differs", a.name)));
            }
            from_pos.push(pos);
        }
        for a in &self.to_axes {
            if q.axis_pos(&a.name).is_ok() {
                return Err(Error::AxisMismatch(format!("target axis {} already present", a.name)));
            }
        }
        let nto = self.n_to();
        let from_sizes: Vec<usize> = self.from_axes.iter().map(|a| a.size).collect();
        let from_strides = strides_of(&from_sizes);
        let mut out_axes = q.axes().to_vec();
        out_axes.extend(self.to_axes.iter().cloned());
        let mut mass = vec![0.0; q.mass().len() * nto];
        let mut idx = vec![0usize; q_sizes.len()];
        for (flat, &p) in q.mass().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            unravel(flat, &q_sizes, &mut idx);
            let mut from_flat = 0usize;
            for (k, &pos) in from_pos.iter().enumerate() {
                from_flat += idx[pos] * from_strides[k];
            }
            let row = self.row(from_flat);
            let base = flat * nto;
            for (j, &r) in row.iter().enumerate() {
                mass[base + j] = p * r;
            }
        }
        JointDist::new(out_axes, mass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bsc(name_in: &str, name_out: &str, flip: f64) -> Kernel {
        Kernel::new(
            vec![Axis::new(name_in, 2)],
            vec![Axis::new(name_out, 2)],
            vec![1.0 - flip, flip, flip, 1.0 - flip],
        )
        .unwrap()
    }

    #[test]
    fn rejects_unnormalized_rows() {
        let r = Kernel::new(
            vec![Axis::new("u", 2)],
            vec![Axis::new("v", 2)],
            vec![0.9, 0.2, 0.5, 0.5],
        );
        assert!(r.is_err());
    }

    #[test]
    fn extend_builds_joint() {
        let u = JointDist::new(vec![Axis::new("u", 2)], vec![0.5, 0.5]).unwrap();
        let j = bsc("u", "v", 0.1).extend(&u).unwrap();
        assert_eq!(j.axes().len(), 2);
        assert!((j.prob(&[0, 0]) - 0.45).abs() < 1e-15);
        assert!((j.prob(&[0, 1]) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn extend_matches_from_axes_anywhere() {
        // joint over (a, u); kernel conditions on u only.
        let base = JointDist::new(
            vec![Axis::new("a", 2), Axis::new("u", 2)],
            vec![0.1, 0.2, 0.3, 0.4],
        )
        .unwrap();
        let j = bsc("u", "v", 0.0).extend(&base).unwrap();
        // identity channel: v must equal u.
        assert!((j.prob(&[1, 0, 0]) - 0.3).abs() < 1e-15);
        assert_eq!(j.prob(&[1, 0, 1]), 0.0);
    }

    #[test]
    fn from_joint_inverts_extend() {
        let u = JointDist::new(vec![Axis::new("u", 2)], vec![0.3, 0.7]).unwrap();
        let k = bsc("u", "v", 0.2);
        let j = k.extend(&u).unwrap();
        let k2 = Kernel::from_joint(&j, &["u"], &["v"]).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!((k.row(r)[c] - k2.row(r)[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_mass_rows_become_uniform() {
        let j = JointDist::new(
            vec![Axis::new("u", 2), Axis::new("v", 2)],
            vec![0.5, 0.5, 0.0, 0.0],
        )
        .unwrap();
        let k = Kernel::from_joint(&j, &["u"], &["v"]).unwrap();
        assert_eq!(k.row(1), &[0.5, 0.5]);
    }
}
