//! End-to-end cascade synthesis protocol, exactly enumerated.
//!
//! Given an auxiliary joint over (X,Y,Z,U,V) and rates (R0,R1,R2) with
//! R1 ≥ R2, the scheme draws nested codebooks indexed by common
//! randomness K and messages (J1, J2): inner words V^n(k, j2) iid from
//! Q_V, outer words U^n(k, j1, j2) per-symbol from Q_{U|V}. Node 1
//! observes an iid source block and selects (J1, J2) with a likelihood
//! encoder proportional to ∏Q_{X|UV}; node 2 synthesizes Y from
//! (K, J1, J2) through ∏Q_{Y|UV}; node 3 synthesizes Z from (K, J2)
//! through ∏Q_{Z|V}. The ideal reference joint replaces the source-and-
//! encoder front end with uniformly chosen indices pushed through
//! ∏Q_{XY|UV}. Everything is enumerated exactly over block alphabets, so
//! the only randomness is the codebook draw.

use crate::budget::Budget;
use crate::dist::{Axis, JointDist};
use crate::error::Error;
use crate::kernel::Kernel;
use crate::region::RateTriple;
use crate::seeding::{derive_seed, derive_seed2};
use crate::softcover::codebook_size;
use crate::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const CTX_CODEBOOK: u64 = 0x5343_4342;
const CTX_EPISODE: u64 = 0x4550_4953;

/// Chain-exact auxiliary joint assembled from its generative pieces:
/// P(x,y,z,u,v) = P(u,v) · X-kernel(x|u,v) · Y-kernel(y|u,v) · Z-kernel(z|v).
/// Both cascade chains hold by construction.
pub fn assemble_chain_joint(
    p_uv: &JointDist,
    kernel_x: &Kernel,
    kernel_y: &Kernel,
    kernel_z: &Kernel,
) -> Result<JointDist> {
    let p_uv = p_uv.marginal(&["u", "v"])?;
    let sizes = p_uv.sizes();
    let (cu, cv) = (sizes[0], sizes[1]);
    for (k, from, name) in [
        (kernel_x, vec!["u", "v"], "x"),
        (kernel_y, vec!["u", "v"], "y"),
        (kernel_z, vec!["v"], "z"),
    ] {
        let names: Vec<&str> = k.from_axes().iter().map(|a| a.name.as_str()).collect();
        if names != from {
            return Err(Error::AxisMismatch(format!(
                "{} kernel must condition on {:?}, got {:?}",
                name, from, names
            )));
        }
        if k.to_axes().len() != 1 || k.to_axes()[0].name != name {
            return Err(Error::AxisMismatch(format!("kernel must emit axis {:?}", name)));
        }
    }
    let nx = kernel_x.to_axes()[0].size;
    let ny = kernel_y.to_axes()[0].size;
    let nz = kernel_z.to_axes()[0].size;
    JointDist::from_fn(
        vec![
            Axis::new("x", nx),
            Axis::new("y", ny),
            Axis::new("z", nz),
            Axis::new("u", cu),
            Axis::new("v", cv),
        ],
        |c| {
            let (x, y, z, u, v) = (c[0], c[1], c[2], c[3], c[4]);
            p_uv.prob(&[u, v])
                * kernel_x.row(u * cv + v)[x]
                * kernel_y.row(u * cv + v)[y]
                * kernel_z.row(v)[z]
        },
    )
}

/// Per-symbol conditionals of the auxiliary joint, in the shapes the
/// protocol consumes.
struct SchemeKernels {
    q_x: Vec<f64>,
    q_xyz: Vec<f64>,
    q_v: Vec<f64>,
    /// [v][u]
    u_given_v: Vec<Vec<f64>>,
    /// [(u,v)][(x,y)]
    xy_given_uv: Vec<Vec<f64>>,
    /// [(u,v)][x]
    x_given_uv: Vec<Vec<f64>>,
    /// [(u,v)][y]
    y_given_uv: Vec<Vec<f64>>,
    /// [v][z]
    z_given_v: Vec<Vec<f64>>,
}

pub struct SccsScheme {
    pub n: usize,
    pub rates: RateTriple,
    /// Common randomness, first-message, second-message index counts:
    /// ⌈2^{nR0}⌉, ⌈2^{n(R1−R2)}⌉, ⌈2^{nR2}⌉.
    pub m0: usize,
    pub m1: usize,
    pub m2: usize,
    pub aux: JointDist,
    k: SchemeKernels,
    nx: usize,
    ny: usize,
    nz: usize,
    cv: usize,
}

/// Nested codebooks: v_words[k][j2] and u_words[k][j1][j2] are blocks of
/// length n.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SccsCodebook {
    pub v_words: Vec<Vec<Vec<usize>>>,
    pub u_words: Vec<Vec<Vec<Vec<usize>>>>,
    pub seed: u64,
}

fn cdf_of(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = weights
        .iter()
        .map(|&w| {
            acc += w;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

fn sample_cdf(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let x: f64 = rng.gen();
    cdf.partition_point(|&c| c < x).min(cdf.len() - 1)
}

impl SccsScheme {
    /// Builds the scheme for one block length. The auxiliary joint must
    /// carry axes (x, y, z, u, v); rates must satisfy R1 ≥ R2 ≥ 0, R0 ≥ 0.
    pub fn build(aux: &JointDist, rates: RateTriple, n: usize) -> Result<SccsScheme> {
        if n == 0 {
            return Err(Error::InvalidArgument("block length must be ≥ 1".into()));
        }
        if !rates.is_nonnegative() || rates.r1 < rates.r2 {
            return Err(Error::InvalidArgument(
                "need R0, R2 ≥ 0 and R1 ≥ R2 (link 1 relays link 2's message)".into(),
            ));
        }
        let aux = aux.marginal(&["x", "y", "z", "u", "v"])?;
        let sizes = aux.sizes();
        let (nx, ny, nz, cu, cv) = (sizes[0], sizes[1], sizes[2], sizes[3], sizes[4]);
        let mass = aux.mass();

        let mut q_x = vec![0.0; nx];
        let mut q_xyz = vec![0.0; nx * ny * nz];
        let mut q_v = vec![0.0; cv];
        let mut q_uv = vec![0.0; cu * cv];
        let mut xy_uv = vec![vec![0.0; nx * ny]; cu * cv];
        let mut z_v = vec![vec![0.0; nz]; cv];
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    for u in 0..cu {
                        for v in 0..cv {
                            let p = mass[(((x * ny + y) * nz + z) * cu + u) * cv + v];
                            q_x[x] += p;
                            q_xyz[(x * ny + y) * nz + z] += p;
                            q_v[v] += p;
                            q_uv[u * cv + v] += p;
                            xy_uv[u * cv + v][x * ny + y] += p;
                            z_v[v][z] += p;
                        }
                    }
                }
            }
        }
        let norm_rows = |rows: Vec<Vec<f64>>, mass: &[f64]| -> Vec<Vec<f64>> {
            rows.into_iter()
                .zip(mass)
                .map(|(row, &m)| {
                    let len = row.len();
                    if m > 0.0 {
                        row.into_iter().map(|p| p / m).collect()
                    } else {
                        vec![1.0 / len as f64; len]
                    }
                })
                .collect()
        };
        let xy_given_uv = norm_rows(xy_uv, &q_uv);
        let z_given_v = norm_rows(z_v, &q_v);
        let u_given_v: Vec<Vec<f64>> = (0..cv)
            .map(|v| {
                if q_v[v] > 0.0 {
                    (0..cu).map(|u| q_uv[u * cv + v] / q_v[v]).collect()
                } else {
                    vec![1.0 / cu as f64; cu]
                }
            })
            .collect();
        let x_given_uv: Vec<Vec<f64>> = xy_given_uv
            .iter()
            .map(|row| {
                (0..nx).map(|x| (0..ny).map(|y| row[x * ny + y]).sum()).collect()
            })
            .collect();
        let y_given_uv: Vec<Vec<f64>> = xy_given_uv
            .iter()
            .map(|row| {
                (0..ny).map(|y| (0..nx).map(|x| row[x * ny + y]).sum()).collect()
            })
            .collect();

        let m2 = codebook_size(rates.r2, n)?;
        let m1 = codebook_size(rates.r1 - rates.r2, n)?;
        let m0 = codebook_size(rates.r0, n)?;
        Ok(SccsScheme {
            n,
            rates,
            m0,
            m1,
            m2,
            aux,
            k: SchemeKernels {
                q_x,
                q_xyz,
                q_v,
                u_given_v,
                xy_given_uv,
                x_given_uv,
                y_given_uv,
                z_given_v,
            },
            nx,
            ny,
            nz,
            cv,
        })
    }

    /// Draws the nested codebooks: all V-words first (k-major, then j2),
    /// then all U-words (k, j1, j2).
    pub fn sample_codebook(&self, seed: u64) -> SccsCodebook {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, CTX_CODEBOOK));
        let v_cdf = cdf_of(&self.k.q_v);
        let u_cdfs: Vec<Vec<f64>> = self.k.u_given_v.iter().map(|r| cdf_of(r)).collect();
        let v_words: Vec<Vec<Vec<usize>>> = (0..self.m0)
            .map(|_| {
                (0..self.m2)
                    .map(|_| (0..self.n).map(|_| sample_cdf(&v_cdf, &mut rng)).collect())
                    .collect()
            })
            .collect();
        let u_words = (0..self.m0)
            .map(|k| {
                (0..self.m1)
                    .map(|_| {
                        (0..self.m2)
                            .map(|j2| {
                                v_words[k][j2]
                                    .iter()
                                    .map(|&v| sample_cdf(&u_cdfs[v], &mut rng))
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        SccsCodebook { v_words, u_words, seed }
    }

    fn block_count(&self, base: usize) -> Result<usize> {
        let blocks = (base as u128)
            .checked_pow(self.n as u32)
            .ok_or(Error::Capacity { needed: u128::MAX, limit: u64::MAX })?;
        Ok(blocks as usize)
    }

    fn check_budget(&self, budget: &Budget) -> Result<(usize, usize, usize)> {
        let bx = self.block_count(self.nx)?;
        let by = self.block_count(self.ny)?;
        let bz = self.block_count(self.nz)?;
        let cells = (bx as u128)
            .saturating_mul(by as u128)
            .saturating_mul(bz as u128)
            .saturating_mul((self.m0 * self.m1 * self.m2) as u128);
        budget.check(cells)?;
        Ok((bx, by, bz))
    }

    fn symbols(&self, block: usize, base: usize) -> Vec<usize> {
        let mut out = vec![0; self.n];
        let mut rest = block;
        for t in (0..self.n).rev() {
            out[t] = rest % base;
            rest /= base;
        }
        out
    }

    /// Unnormalized likelihood of each message pair for one source block,
    /// flat j1-major: ∏_t Q_{X|UV}(x_t | u_t(k,j1,j2), v_t(k,j2)).
    fn encode_raw(&self, codebook: &SccsCodebook, x_word: &[usize], k: usize) -> Vec<f64> {
        let mut weights = Vec::with_capacity(self.m1 * self.m2);
        for j1 in 0..self.m1 {
            for j2 in 0..self.m2 {
                let u_word = &codebook.u_words[k][j1][j2];
                let v_word = &codebook.v_words[k][j2];
                let mut w = 1.0;
                for t in 0..self.n {
                    w *= self.k.x_given_uv[u_word[t] * self.cv + v_word[t]][x_word[t]];
                }
                weights.push(w);
            }
        }
        weights
    }

    /// Likelihood-encoder weights over (j1, j2), flat j1-major:
    /// w ∝ ∏_t Q_{X|UV}(x_t | u_t(k,j1,j2), v_t(k,j2)), normalized.
    /// Errors with AtypicalSource when the block has zero likelihood under
    /// every message pair.
    pub fn encode_node1(
        &self,
        codebook: &SccsCodebook,
        x_word: &[usize],
        k: usize,
    ) -> Result<Vec<f64>> {
        if x_word.len() != self.n || k >= self.m0 {
            return Err(Error::InvalidArgument("bad block length or randomness index".into()));
        }
        let mut weights = self.encode_raw(codebook, x_word, k);
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::AtypicalSource);
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        Ok(weights)
    }

    /// Total version of the encoder: a block with zero likelihood under
    /// every message pair gets the uniform distribution over (j1, j2) —
    /// the protocol always transmits. Returns whether the fallback fired.
    fn encode_node1_total(
        &self,
        codebook: &SccsCodebook,
        x_word: &[usize],
        k: usize,
    ) -> (Vec<f64>, bool) {
        let mut weights = self.encode_raw(codebook, x_word, k);
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            let unif = 1.0 / weights.len() as f64;
            weights.iter_mut().for_each(|w| *w = unif);
            return (weights, true);
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        (weights, false)
    }

    fn block_axes(&self, bx: usize, by: usize, bz: usize) -> Vec<Axis> {
        vec![
            Axis::new("xb", bx),
            Axis::new("yb", by),
            Axis::new("zb", bz),
            Axis::new("k", self.m0),
            Axis::new("j1", self.m1),
            Axis::new("j2", self.m2),
        ]
    }

    /// Reference joint: uniform (k, j1, j2) pushed through the per-symbol
    /// generators ∏Q_{XY|UV} · ∏Q_{Z|V}.
    pub fn ideal_joint(&self, codebook: &SccsCodebook, budget: &Budget) -> Result<JointDist> {
        let (bx, by, bz) = self.check_budget(budget)?;
        let scale = 1.0 / (self.m0 * self.m1 * self.m2) as f64;
        let mut mass = vec![0.0; bx * by * bz * self.m0 * self.m1 * self.m2];
        let xsyms: Vec<Vec<usize>> = (0..bx).map(|b| self.symbols(b, self.nx)).collect();
        let ysyms: Vec<Vec<usize>> = (0..by).map(|b| self.symbols(b, self.ny)).collect();
        let zsyms: Vec<Vec<usize>> = (0..bz).map(|b| self.symbols(b, self.nz)).collect();
        for k in 0..self.m0 {
            for j1 in 0..self.m1 {
                for j2 in 0..self.m2 {
                    let u_word = &codebook.u_words[k][j1][j2];
                    let v_word = &codebook.v_words[k][j2];
                    for xb in 0..bx {
                        for yb in 0..by {
                            let mut pxy = scale;
                            for t in 0..self.n {
                                let uv = u_word[t] * self.cv + v_word[t];
                                pxy *= self.k.xy_given_uv[uv]
                                    [xsyms[xb][t] * self.ny + ysyms[yb][t]];
                            }
                            if pxy == 0.0 {
                                continue;
                            }
                            for zb in 0..bz {
                                let mut p = pxy;
                                for t in 0..self.n {
                                    p *= self.k.z_given_v[v_word[t]][zsyms[zb][t]];
                                }
                                let idx = ((((xb * by + yb) * bz + zb) * self.m0 + k)
                                    * self.m1
                                    + j1)
                                    * self.m2
                                    + j2;
                                mass[idx] = p;
                            }
                        }
                    }
                }
            }
        }
        JointDist::new(self.block_axes(bx, by, bz), mass)
    }

    /// Operational joint: iid source, likelihood encoder, decoder
    /// synthesis channels. Source blocks the encoder cannot explain under
    /// any message pair are carried by its uniform-message fallback; see
    /// [`SecurityReport::encoder_fallback_mass`] for how much mass that is.
    pub fn operational_joint(&self, codebook: &SccsCodebook, budget: &Budget) -> Result<JointDist> {
        Ok(self.operational_joint_traced(codebook, budget)?.0)
    }

    /// [`Self::operational_joint`] plus the probability mass of (block, k)
    /// pairs served by the encoder's uniform fallback.
    fn operational_joint_traced(
        &self,
        codebook: &SccsCodebook,
        budget: &Budget,
    ) -> Result<(JointDist, f64)> {
        let (bx, by, bz) = self.check_budget(budget)?;
        let mut mass = vec![0.0; bx * by * bz * self.m0 * self.m1 * self.m2];
        let xsyms: Vec<Vec<usize>> = (0..bx).map(|b| self.symbols(b, self.nx)).collect();
        let ysyms: Vec<Vec<usize>> = (0..by).map(|b| self.symbols(b, self.ny)).collect();
        let zsyms: Vec<Vec<usize>> = (0..bz).map(|b| self.symbols(b, self.nz)).collect();
        let k_scale = 1.0 / self.m0 as f64;
        let mut fallback_mass = 0.0;
        for xb in 0..bx {
            let mut px = k_scale;
            for t in 0..self.n {
                px *= self.k.q_x[xsyms[xb][t]];
            }
            for k in 0..self.m0 {
                let (enc, fell_back) = self.encode_node1_total(codebook, &xsyms[xb], k);
                if fell_back {
                    fallback_mass += px;
                }
                for j1 in 0..self.m1 {
                    for j2 in 0..self.m2 {
                        let w = enc[j1 * self.m2 + j2];
                        if w == 0.0 {
                            continue;
                        }
                        let u_word = &codebook.u_words[k][j1][j2];
                        let v_word = &codebook.v_words[k][j2];
                        for yb in 0..by {
                            let mut py = px * w;
                            for t in 0..self.n {
                                py *= self.k.y_given_uv[u_word[t] * self.cv + v_word[t]]
                                    [ysyms[yb][t]];
                            }
                            if py == 0.0 {
                                continue;
                            }
                            for zb in 0..bz {
                                let mut p = py;
                                for t in 0..self.n {
                                    p *= self.k.z_given_v[v_word[t]][zsyms[zb][t]];
                                }
                                let idx = ((((xb * by + yb) * bz + zb) * self.m0 + k)
                                    * self.m1
                                    + j1)
                                    * self.m2
                                    + j2;
                                mass[idx] += p;
                            }
                        }
                    }
                }
            }
        }
        Ok((JointDist::new(self.block_axes(bx, by, bz), mass)?, fallback_mass))
    }

    /// Iid block law of the target (x, y, z) triple, flat over (xb,yb,zb).
    fn iid_xyz(&self, bx: usize, by: usize, bz: usize) -> Vec<f64> {
        let xsyms: Vec<Vec<usize>> = (0..bx).map(|b| self.symbols(b, self.nx)).collect();
        let ysyms: Vec<Vec<usize>> = (0..by).map(|b| self.symbols(b, self.ny)).collect();
        let zsyms: Vec<Vec<usize>> = (0..bz).map(|b| self.symbols(b, self.nz)).collect();
        let mut out = Vec::with_capacity(bx * by * bz);
        for xb in 0..bx {
            for yb in 0..by {
                for zb in 0..bz {
                    let mut p = 1.0;
                    for t in 0..self.n {
                        p *= self.k.q_xyz[(xsyms[xb][t] * self.ny + ysyms[yb][t]) * self.nz
                            + zsyms[zb][t]];
                    }
                    out.push(p);
                }
            }
        }
        out
    }
}

/// Exact secrecy metrics of one (scheme, codebook) instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecurityReport {
    /// TV between the synthesized (x,y,z) block law and the iid target.
    pub synthesis_tv: f64,
    /// TV between P(xyz blocks, j1, j2) and uniform(j) ⊗ iid target.
    pub product_tv: f64,
    /// TV between P(xyz blocks, j1, j2) and P(j1, j2) ⊗ iid target: the
    /// secrecy leakage through the messages.
    pub secrecy_tv: f64,
    /// secrecy_tv ≤ 2 · product_tv, which holds exactly for any joint.
    pub doubling_ok: bool,
    /// Probability mass of (source block, k) pairs the likelihood encoder
    /// served through its uniform-message fallback (zero likelihood under
    /// every message pair). Zero whenever Q_{X|UV} has full support;
    /// positive for deterministic auxiliaries at small block lengths.
    pub encoder_fallback_mass: f64,
}

pub fn security_audit(
    scheme: &SccsScheme,
    codebook: &SccsCodebook,
    budget: &Budget,
) -> Result<SecurityReport> {
    let (op, encoder_fallback_mass) = scheme.operational_joint_traced(codebook, budget)?;
    let (bx, by, bz) = scheme.check_budget(budget)?;
    let iid = scheme.iid_xyz(bx, by, bz);

    let xyz = op.marginal(&["xb", "yb", "zb"])?;
    let synthesis_tv =
        0.5 * xyz.mass().iter().zip(&iid).map(|(a, b)| (a - b).abs()).sum::<f64>();

    let xyzj = op.marginal(&["xb", "yb", "zb", "j1", "j2"])?;
    let nj = scheme.m1 * scheme.m2;
    let mut pj = vec![0.0; nj];
    for (i, &p) in xyzj.mass().iter().enumerate() {
        pj[i % nj] += p;
    }
    let mut product_tv = 0.0;
    let mut secrecy_tv = 0.0;
    let unif = 1.0 / nj as f64;
    for (cell, &p) in xyzj.mass().iter().enumerate() {
        let target = iid[cell / nj];
        product_tv += (p - target * unif).abs();
        secrecy_tv += (p - target * pj[cell % nj]).abs();
    }
    product_tv *= 0.5;
    secrecy_tv *= 0.5;
    Ok(SecurityReport {
        synthesis_tv,
        product_tv,
        secrecy_tv,
        doubling_ok: secrecy_tv <= 2.0 * product_tv + 1e-12,
        encoder_fallback_mass,
    })
}

/// Exact closeness of the operational system to its ideal reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// TV between the full operational and ideal joints (blocks and all
    /// indices).
    pub full_tv: f64,
    /// TV between the ideal (x-block, k) marginal and iid ⊗ uniform: how
    /// well the codebook covers the source space. The full gap never
    /// exceeds it, because both systems share the encoder and decoder
    /// channels exactly.
    pub coverage_tv: f64,
}

pub fn consistency_audit(
    scheme: &SccsScheme,
    codebook: &SccsCodebook,
    budget: &Budget,
) -> Result<ConsistencyReport> {
    let op = scheme.operational_joint(codebook, budget)?;
    let ideal = scheme.ideal_joint(codebook, budget)?;
    let full_tv = op.tv_distance(&ideal)?;
    let xk = ideal.marginal(&["xb", "k"])?;
    let bx = scheme.block_count(scheme.nx)?;
    let xsyms: Vec<Vec<usize>> = (0..bx).map(|b| scheme.symbols(b, scheme.nx)).collect();
    let unif = 1.0 / scheme.m0 as f64;
    let mut coverage_tv = 0.0;
    for xb in 0..bx {
        let mut px = unif;
        for t in 0..scheme.n {
            px *= scheme.k.q_x[xsyms[xb][t]];
        }
        for k in 0..scheme.m0 {
            coverage_tv += (xk.prob(&[xb, k]) - px).abs();
        }
    }
    coverage_tv *= 0.5;
    Ok(ConsistencyReport { full_tv, coverage_tv })
}

/// One sampled run of the operational protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Episode {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub z: Vec<usize>,
    pub k: usize,
    pub j1: usize,
    pub j2: usize,
}

/// Episodes plus the number of blocks where the likelihood encoder fell
/// back to a uniform message (zero posterior mass under every message
/// pair). Fallback episodes are kept — the protocol always transmits —
/// and counted here so audits can separate coverage failures from mixing
/// quality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub episodes: Vec<Episode>,
    pub encoder_errors: usize,
}

/// Samples `attempts` operational episodes (iid source, likelihood
/// encoder, decoder channels), counting encoder fallbacks instead of
/// failing on them. Matches the exact operational joint, fallback
/// included.
pub fn run_protocol_counting(
    scheme: &SccsScheme,
    codebook: &SccsCodebook,
    attempts: usize,
    seed: u64,
) -> Result<ProtocolRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed2(seed, codebook.seed, CTX_EPISODE));
    let x_cdf = cdf_of(&scheme.k.q_x);
    let y_cdfs: Vec<Vec<f64>> = scheme.k.y_given_uv.iter().map(|r| cdf_of(r)).collect();
    let z_cdfs: Vec<Vec<f64>> = scheme.k.z_given_v.iter().map(|r| cdf_of(r)).collect();
    let mut episodes = Vec::with_capacity(attempts);
    let mut encoder_errors = 0usize;
    for _ in 0..attempts {
        let k = rng.gen_range(0..scheme.m0);
        let x: Vec<usize> = (0..scheme.n).map(|_| sample_cdf(&x_cdf, &mut rng)).collect();
        let (enc, fell_back) = scheme.encode_node1_total(codebook, &x, k);
        if fell_back {
            encoder_errors += 1;
        }
        let j = sample_cdf(&cdf_of(&enc), &mut rng);
        let (j1, j2) = (j / scheme.m2, j % scheme.m2);
        let u_word = &codebook.u_words[k][j1][j2];
        let v_word = &codebook.v_words[k][j2];
        let y = (0..scheme.n)
            .map(|t| sample_cdf(&y_cdfs[u_word[t] * scheme.cv + v_word[t]], &mut rng))
            .collect();
        let z = (0..scheme.n).map(|t| sample_cdf(&z_cdfs[v_word[t]], &mut rng)).collect();
        episodes.push(Episode { x, y, z, k, j1, j2 });
    }
    Ok(ProtocolRun { episodes, encoder_errors })
}

/// Samples operational episodes (iid source, likelihood encoder, decoder
/// channels), reproducible from the seed. Any encoder fallback is an
/// error here; use [`run_protocol_counting`] to tolerate and count them.
pub fn run_protocol(
    scheme: &SccsScheme,
    codebook: &SccsCodebook,
    episodes: usize,
    seed: u64,
) -> Result<Vec<Episode>> {
    let run = run_protocol_counting(scheme, codebook, episodes, seed)?;
    if run.encoder_errors > 0 {
        return Err(Error::AtypicalSource);
    }
    Ok(run.episodes)
}

/// Goodness-of-fit of sampled episodes against the target triple law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub episodes: usize,
    /// Pooled chi-square across all positions.
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Per-position p-values.
    pub position_p: Vec<f64>,
    /// P-values of the per-message-j2 pools: secrecy says each message
    /// value should still see the target law.
    pub message_p: Vec<f64>,
    pub alpha: f64,
    pub pass: bool,
}

fn chi2_p(counts: &[u64], expected: &[f64]) -> (f64, usize, f64) {
    let mut chi2 = 0.0;
    let mut dof = 0usize;
    for (&c, &e) in counts.iter().zip(expected) {
        if e > 0.0 {
            let d = c as f64 - e;
            chi2 += d * d / e;
            dof += 1;
        }
    }
    let dof = dof.saturating_sub(1);
    if dof == 0 {
        return (chi2, 0, 1.0);
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    (chi2, dof, 1.0 - dist.cdf(chi2))
}

/// Samples episodes and chi-square-tests the synthesized symbol triples
/// against the target: pooled over positions, per position, and pooled
/// per second-message value (a sampled secrecy check).
pub fn statistical_audit(
    scheme: &SccsScheme,
    codebook: &SccsCodebook,
    episodes: usize,
    alpha: f64,
    seed: u64,
) -> Result<AuditReport> {
    if episodes == 0 || !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidArgument("need episodes ≥ 1 and 0 < alpha < 1".into()));
    }
    let runs = run_protocol(scheme, codebook, episodes, seed)?;
    let ncells = scheme.nx * scheme.ny * scheme.nz;
    let cell = |x: usize, y: usize, z: usize| (x * scheme.ny + y) * scheme.nz + z;

    let mut pooled = vec![0u64; ncells];
    let mut per_pos = vec![vec![0u64; ncells]; scheme.n];
    let mut per_msg = vec![vec![0u64; ncells]; scheme.m2];
    for ep in &runs {
        for t in 0..scheme.n {
            let c = cell(ep.x[t], ep.y[t], ep.z[t]);
            pooled[c] += 1;
            per_pos[t][c] += 1;
            per_msg[ep.j2][c] += 1;
        }
    }
    let expect = |total: f64| -> Vec<f64> {
        scheme.k.q_xyz.iter().map(|&p| p * total).collect()
    };
    let (chi2, dof, p_value) = chi2_p(&pooled, &expect((episodes * scheme.n) as f64));
    let position_p = per_pos
        .iter()
        .map(|c| chi2_p(c, &expect(episodes as f64)).2)
        .collect::<Vec<f64>>();
    let message_p = per_msg
        .iter()
        .map(|c| {
            let total: u64 = c.iter().sum();
            chi2_p(c, &expect(total as f64)).2
        })
        .collect::<Vec<f64>>();
    let pass = p_value >= alpha
        && position_p.iter().all(|&p| p >= alpha / scheme.n as f64)
        && message_p.iter().all(|&p| p >= alpha / scheme.m2.max(1) as f64);
    Ok(AuditReport {
        episodes,
        chi2,
        dof,
        p_value,
        position_p,
        message_p,
        alpha,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Axis;

    /// Full-support auxiliary with correlated (U, V) and soft kernels.
    fn demo_aux() -> JointDist {
        let p_uv = JointDist::new(
            vec![Axis::new("u", 2), Axis::new("v", 2)],
            vec![0.35, 0.15, 0.15, 0.35],
        )
        .unwrap();
        let kx = Kernel::new(
            vec![Axis::new("u", 2), Axis::new("v", 2)],
            vec![Axis::new("x", 2)],
            vec![0.8, 0.2, 0.6, 0.4, 0.4, 0.6, 0.2, 0.8],
        )
        .unwrap();
        let ky = Kernel::new(
            vec![Axis::new("u", 2), Axis::new("v", 2)],
            vec![Axis::new("y", 2)],
            vec![0.7, 0.3, 0.5, 0.5, 0.5, 0.5, 0.3, 0.7],
        )
        .unwrap();
        let kz = Kernel::new(
            vec![Axis::new("v", 2)],
            vec![Axis::new("z", 2)],
            vec![0.75, 0.25, 0.25, 0.75],
        )
        .unwrap();
        assemble_chain_joint(&p_uv, &kx, &ky, &kz).unwrap()
    }

    fn demo_rates(aux: &JointDist, margin: f64) -> RateTriple {
        let r0 = aux.mutual_information(&["x", "y", "z"], &["u", "v"], &[]).unwrap();
        let r1 = aux.mutual_information(&["x"], &["u", "v"], &[]).unwrap();
        let r2 = aux.mutual_information(&["x"], &["v"], &[]).unwrap();
        RateTriple::new(r0 + margin, r1 + margin, r2 + margin)
    }

    #[test]
    fn assembled_joint_is_chain_exact() {
        let aux = demo_aux();
        let (c1, c2) = crate::region::cascade_chains();
        assert!(aux.markov_violation(&c1).unwrap() < 1e-12);
        assert!(aux.markov_violation(&c2).unwrap() < 1e-12);
    }

    #[test]
    fn joints_are_normalized_and_comparable() {
        let aux = demo_aux();
        let scheme = SccsScheme::build(&aux, demo_rates(&aux, 0.15), 2).unwrap();
        let cb = scheme.sample_codebook(1);
        let budget = Budget::default();
        let op = scheme.operational_joint(&cb, &budget).unwrap();
        let ideal = scheme.ideal_joint(&cb, &budget).unwrap();
        let tv = op.tv_distance(&ideal).unwrap();
        assert!(tv >= 0.0 && tv <= 1.0);
    }

    #[test]
    fn operational_ideal_gap_equals_coverage_gap() {
        // Both systems share the encoder and both decoder channels, so the
        // full-system TV collapses to the (x-block, k) front-end TV.
        let aux = demo_aux();
        let scheme = SccsScheme::build(&aux, demo_rates(&aux, 0.15), 2).unwrap();
        let budget = Budget::default();
        for seed in [1, 2, 3] {
            let cb = scheme.sample_codebook(seed);
            let rep = consistency_audit(&scheme, &cb, &budget).unwrap();
            assert!(
                rep.full_tv <= rep.coverage_tv + 1e-12,
                "full {} coverage {}",
                rep.full_tv,
                rep.coverage_tv
            );
        }
    }

    #[test]
    fn source_independent_of_auxiliaries_gives_zero_gap() {
        // X ⟂ (U,V): the likelihood encoder is uniform and the ideal
        // x-marginal is already iid.
        let p_uv = JointDist::new(
            vec![Axis::new("u", 2), Axis::new("v", 2)],
            vec![0.35, 0.15, 0.15, 0.35],
        )
        .unwrap();
        let kx = Kernel::new(
            vec![Axis::new("u", 2), Axis::new("v", 2)],
            vec![Axis::new("x", 2)],
            [0.6, 0.4].repeat(4),
        )
        .unwrap();
        let ky = Kernel::new(
            vec![Axis::new("u", 2), Axis::new("v", 2)],
            vec![Axis::new("y", 2)],
            vec![0.7, 0.3, 0.5, 0.5, 0.5, 0.5, 0.3, 0.7],
        )
        .unwrap();
        let kz = Kernel::new(
            vec![Axis::new("v", 2)],
            vec![Axis::new("z", 2)],
            vec![0.75, 0.25, 0.25, 0.75],
        )
        .unwrap();
        let aux = assemble_chain_joint(&p_uv, &kx, &ky, &kz).unwrap();
        let scheme = SccsScheme::build(&aux, RateTriple::new(0.4, 0.3, 0.2), 2).unwrap();
        let cb = scheme.sample_codebook(5);
        let rep = consistency_audit(&scheme, &cb, &Budget::default()).unwrap();
        assert!(rep.full_tv < 1e-12, "gap {}", rep.full_tv);
    }

    #[test]
    fn security_doubling_inequality_holds() {
        let aux = demo_aux();
        let scheme = SccsScheme::build(&aux, demo_rates(&aux, 0.15), 2).unwrap();
        let budget = Budget::default();
        for seed in 0..4 {
            let cb = scheme.sample_codebook(seed);
            let rep = security_audit(&scheme, &cb, &budget).unwrap();
            assert!(rep.doubling_ok, "secrecy {} product {}", rep.secrecy_tv, rep.product_tv);
            assert!(rep.synthesis_tv <= rep.product_tv + 1e-12);
        }
    }

    #[test]
    fn rejects_inverted_link_rates() {
        let aux = demo_aux();
        assert!(SccsScheme::build(&aux, RateTriple::new(0.5, 0.2, 0.4), 2).is_err());
    }

    #[test]
    fn episodes_follow_scheme_shapes() {
        let aux = demo_aux();
        let scheme = SccsScheme::build(&aux, demo_rates(&aux, 0.15), 3).unwrap();
        let cb = scheme.sample_codebook(9);
        let eps = run_protocol(&scheme, &cb, 50, 13).unwrap();
        assert_eq!(eps.len(), 50);
        for ep in &eps {
            assert_eq!(ep.x.len(), 3);
            assert!(ep.k < scheme.m0 && ep.j1 < scheme.m1 && ep.j2 < scheme.m2);
        }
    }

    #[test]
    fn statistical_audit_passes_on_faithful_scheme() {
        let aux = demo_aux();
        let scheme = SccsScheme::build(&aux, demo_rates(&aux, 0.25), 2).unwrap();
        let cb = scheme.sample_codebook(2);
        let rep = statistical_audit(&scheme, &cb, 3000, 0.001, 77).unwrap();
        assert!(rep.p_value > 0.0);
        assert_eq!(rep.position_p.len(), 2);
    }

    #[test]
    fn statistical_audit_calibrates_on_exact_source() {
        // (X, Y, Z) mutually independent with kernels constant in (u, v):
        // the encoder is uniform and every episode is a true iid draw from
        // the target, so the audit should pass at alpha = 0.01 for almost
        // every seed. The seed set is frozen, so the count is exact.
        let qx = [0.6, 0.4];
        let qy = [0.3, 0.7];
        let qz = [0.7, 0.3];
        let aux = JointDist::from_fn(
            vec![
                Axis::new("x", 2),
                Axis::new("y", 2),
                Axis::new("z", 2),
                Axis::new("u", 2),
                Axis::new("v", 2),
            ],
            |c| 0.25 * qx[c[0]] * qy[c[1]] * qz[c[2]],
        )
        .unwrap();
        let scheme =
            SccsScheme::build(&aux, RateTriple::new(0.3, 0.3, 0.3), 4).unwrap();
        let cb = scheme.sample_codebook(11);
        let passes = (0..20u64)
            .filter(|&s| statistical_audit(&scheme, &cb, 3000, 0.01, s).unwrap().pass)
            .count();
        assert!(passes >= 19, "only {passes}/20 calibration runs passed");
    }

    #[test]
    fn statistical_audit_rejects_corrupted_codebook() {
        // Forcing every second-layer codeword to the same symbol pins the
        // z-channel input, shifting the synthesized law; the pooled
        // chi-square must notice.
        let aux = demo_aux();
        let scheme = SccsScheme::build(&aux, demo_rates(&aux, 0.25), 2).unwrap();
        let mut cb = scheme.sample_codebook(2);
        for per_k in cb.v_words.iter_mut() {
            for word in per_k.iter_mut() {
                word.iter_mut().for_each(|s| *s = 0);
            }
        }
        let rep = statistical_audit(&scheme, &cb, 3000, 0.01, 77).unwrap();
        assert!(!rep.pass, "corrupted codebook passed (p = {})", rep.p_value);
    }

    #[test]
    fn full_support_auxiliary_never_falls_back() {
        let aux = demo_aux();
        let scheme = SccsScheme::build(&aux, demo_rates(&aux, 0.15), 2).unwrap();
        let rep = security_audit(&scheme, &scheme.sample_codebook(3), &Budget::default())
            .unwrap();
        assert_eq!(rep.encoder_fallback_mass, 0.0);
        let run = run_protocol_counting(&scheme, &scheme.sample_codebook(3), 100, 8).unwrap();
        assert_eq!(run.encoder_errors, 0);
    }

    #[test]
    fn deterministic_auxiliary_reports_fallback_mass() {
        // X is a function of (U, V), so short codebooks leave some source
        // blocks unexplained; the uniform fallback keeps the protocol and
        // its exact joint total, and the audit reports how much mass it
        // carried.
        let aux = crate::task::construct_auxiliary(3, 2, 1, &Budget::default())
            .unwrap()
            .joint;
        let scheme = SccsScheme::build(&aux, demo_rates(&aux, 0.1), 2).unwrap();
        let cb = scheme.sample_codebook(0);
        let rep = security_audit(&scheme, &cb, &Budget::default()).unwrap();
        assert!(
            rep.encoder_fallback_mass > 0.0 && rep.encoder_fallback_mass < 1.0,
            "fallback mass {}",
            rep.encoder_fallback_mass
        );
        assert!(rep.doubling_ok);

        let run = run_protocol_counting(&scheme, &cb, 200, 4).unwrap();
        assert_eq!(run.episodes.len(), 200, "fallback episodes are kept");
        assert!(run.encoder_errors > 0);
        assert!(matches!(run_protocol(&scheme, &cb, 200, 4), Err(Error::AtypicalSource)));
    }
}
