//! Codebook-averaged output statistics for the two covering lemmas.
//!
//! Cloud mixing: a random codebook of ⌈2^{nR}⌉ input words, drawn iid from
//! Q_U, pushes a uniform word choice through the memoryless channel
//! Q_{V|U}. When R exceeds I(U;V), the induced output-block law converges
//! to the iid law ∏Q_V in total variation as n grows; below the threshold
//! it stays bounded away.
//!
//! Two-encoder version: an outer codebook U^n(m1) at rate R1 and, nested
//! inside each outer word, inner words V^n(m1, m2) at rate R2 drawn
//! per-symbol from Q_{V|U}. The output law through Q_{Z|UV} converges to
//! ∏Q_Z when R1 > I(U;Z), R2 > I(U,V;Z) − H(U), and R1 + R2 > I(U,V;Z).
//!
//! Everything here enumerates output blocks exactly; randomness enters
//! only through codebook sampling, so every report is reproducible from
//! its seed.

use crate::budget::Budget;
use crate::dist::JointDist;
use crate::error::Error;
use crate::seeding::derive_seed2;
use crate::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Stream tags inside one trial: the outer codebook stream is shared by
/// both lemmas so the two-encoder path reduces bit-exactly to cloud
/// mixing when the inner alphabet is degenerate.
const STREAM_OUTER: u64 = 1;
const STREAM_INNER: u64 = 2;

/// A block codebook: `words[m][t]` is symbol t of word m.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Codebook {
    pub words: Vec<Vec<usize>>,
    pub n: usize,
}

/// ⌈2^{nR}⌉ as a checked size.
pub fn codebook_size(rate: f64, n: usize) -> Result<usize> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::InvalidArgument("rate must be a nonnegative float".into()));
    }
    let raw = (rate * n as f64).exp2().ceil();
    if raw > 1e12 {
        return Err(Error::Capacity { needed: raw as u128, limit: 1_000_000_000_000 });
    }
    Ok(raw as usize)
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

/// `size` words of length `n`, symbols iid from `marginal`.
pub fn sample_codebook(marginal: &[f64], size: usize, n: usize, rng: &mut ChaCha8Rng) -> Codebook {
    let cdf = cdf_of(marginal);
    let words = (0..size)
        .map(|_| (0..n).map(|_| sample_cdf(&cdf, rng)).collect())
        .collect();
    Codebook { words, n }
}

/// Exact output-block law of a uniformly chosen word pushed through the
/// memoryless channel whose rows are `rows[u][v]` (`nv` outputs). Blocks
/// are flat-indexed big-endian: symbol 0 carries the highest stride.
pub fn induced_distribution(
    codebook: &Codebook,
    rows: &[Vec<f64>],
    nv: usize,
    budget: &Budget,
) -> Result<Vec<f64>> {
    let blocks = (nv as u128).checked_pow(codebook.n as u32).ok_or(Error::Capacity {
        needed: u128::MAX,
        limit: budget.max_cells,
    })?;
    budget.check(blocks.saturating_mul(codebook.words.len().max(1) as u128))?;
    let blocks = blocks as usize;
    let mut out = vec![0.0; blocks];
    let scale = 1.0 / codebook.words.len() as f64;
    let mut word_law = Vec::with_capacity(blocks);
    for word in &codebook.words {
        word_law.clear();
        word_law.push(1.0);
        for &u in word {
            let row = &rows[u];
            let mut next = Vec::with_capacity(word_law.len() * nv);
            for &p in &word_law {
                for &r in row.iter().take(nv) {
                    next.push(p * r);
                }
            }
            word_law = next;
        }
        for (o, &p) in out.iter_mut().zip(&word_law) {
            *o += p * scale;
        }
    }
    Ok(out)
}

fn tv_to_iid(induced: &[f64], single: &[f64], n: usize) -> f64 {
    let nv = single.len();
    let mut iid = vec![1.0];
    for _ in 0..n {
        let mut next = Vec::with_capacity(iid.len() * nv);
        for &p in &iid {
            for &q in single {
                next.push(p * q);
            }
        }
        iid = next;
    }
    0.5 * induced.iter().zip(&iid).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloudMixingReport {
    pub n: usize,
    pub rate: f64,
    pub trials: usize,
    pub codebook_size: usize,
    /// I(U;V): the mixing threshold.
    pub threshold: f64,
    pub tvs: Vec<f64>,
    pub mean_tv: f64,
}

/// Splits a two-axis joint into (input marginal, conditional rows,
/// output marginal).
fn split_pair(q: &JointDist) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    if q.axes().len() != 2 {
        return Err(Error::AxisMismatch("pair joint must have exactly two axes".into()));
    }
    let sizes = q.sizes();
    let (nu, nv) = (sizes[0], sizes[1]);
    let mass = q.mass();
    let mut mu = vec![0.0; nu];
    let mut mv = vec![0.0; nv];
    for u in 0..nu {
        for v in 0..nv {
            let p = mass[u * nv + v];
            mu[u] += p;
            mv[v] += p;
        }
    }
    let rows = (0..nu)
        .map(|u| {
            if mu[u] > 0.0 {
                (0..nv).map(|v| mass[u * nv + v] / mu[u]).collect()
            } else {
                vec![1.0 / nv as f64; nv]
            }
        })
        .collect();
    Ok((mu, rows, mv))
}

/// Mean TV between the codebook-induced output law and the iid target,
/// over independently sampled codebooks. Axis 0 of `q_pair` is the
/// codeword alphabet, axis 1 the channel output.
pub fn cloud_mixing_tv(
    q_pair: &JointDist,
    rate: f64,
    n: usize,
    trials: usize,
    seed: u64,
    budget: &Budget,
) -> Result<CloudMixingReport> {
    if n == 0 || trials == 0 {
        return Err(Error::InvalidArgument("need n ≥ 1 and trials ≥ 1".into()));
    }
    let (mu, rows, mv) = split_pair(q_pair)?;
    let size = codebook_size(rate, n)?;
    budget.check((mv.len() as u128).saturating_pow(n as u32).saturating_mul(size as u128))?;
    let names: Vec<&str> = q_pair.axes().iter().map(|a| a.name.as_str()).collect();
    let threshold = q_pair.mutual_information(&[names[0]], &[names[1]], &[])?;
    let tvs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed2(seed, t as u64, STREAM_OUTER));
            let cb = sample_codebook(&mu, size, n, &mut rng);
            let induced = induced_distribution(&cb, &rows, mv.len(), budget)?;
            Ok(tv_to_iid(&induced, &mv, n))
        })
        .collect::<Result<_>>()?;
    let mean_tv = tvs.iter().sum::<f64>() / tvs.len() as f64;
    Ok(CloudMixingReport {
        n,
        rate,
        trials,
        codebook_size: size,
        threshold,
        tvs,
        mean_tv,
    })
}

/// The three sufficient conditions for two-encoder mixing, with margins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoEncoderConditions {
    pub i_uz: f64,
    pub i_uvz: f64,
    pub h_u: f64,
    /// R1 − I(U;Z)
    pub margin_outer: f64,
    /// R2 − (I(U,V;Z) − H(U))
    pub margin_inner: f64,
    /// R1 + R2 − I(U,V;Z)
    pub margin_sum: f64,
    pub all_met: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoEncoderReport {
    pub n: usize,
    pub rate_outer: f64,
    pub rate_inner: f64,
    pub trials: usize,
    pub outer_size: usize,
    pub inner_size: usize,
    pub conditions: TwoEncoderConditions,
    pub tvs: Vec<f64>,
    pub mean_tv: f64,
}

/// Mean TV between the nested-codebook output law and ∏Q_Z. Axes of
/// `q_uvz`: outer codeword, inner codeword, channel output — in that
/// order.
pub fn two_encoder_tv(
    q_uvz: &JointDist,
    rate_outer: f64,
    rate_inner: f64,
    n: usize,
    trials: usize,
    seed: u64,
    budget: &Budget,
) -> Result<TwoEncoderReport> {
    if q_uvz.axes().len() != 3 {
        return Err(Error::AxisMismatch("need axes (outer, inner, output)".into()));
    }
    if n == 0 || trials == 0 {
        return Err(Error::InvalidArgument("need n ≥ 1 and trials ≥ 1".into()));
    }
    let sizes = q_uvz.sizes();
    let (nu, nv, nz) = (sizes[0], sizes[1], sizes[2]);
    let mass = q_uvz.mass();
    let mut mu = vec![0.0; nu];
    let mut muv = vec![0.0; nu * nv];
    let mut mz = vec![0.0; nz];
    for u in 0..nu {
        for v in 0..nv {
            for z in 0..nz {
                let p = mass[(u * nv + v) * nz + z];
                mu[u] += p;
                muv[u * nv + v] += p;
                mz[z] += p;
            }
        }
    }
    // Per-symbol conditionals: inner word given outer symbol, output given
    // the pair.
    let v_rows: Vec<Vec<f64>> = (0..nu)
        .map(|u| {
            if mu[u] > 0.0 {
                (0..nv).map(|v| muv[u * nv + v] / mu[u]).collect()
            } else {
                vec![1.0 / nv as f64; nv]
            }
        })
        .collect();
    let z_rows: Vec<Vec<f64>> = (0..nu * nv)
        .map(|uv| {
            if muv[uv] > 0.0 {
                (0..nz).map(|z| mass[uv * nz + z] / muv[uv]).collect()
            } else {
                vec![1.0 / nz as f64; nz]
            }
        })
        .collect();

    let outer_size = codebook_size(rate_outer, n)?;
    let inner_size = codebook_size(rate_inner, n)?;
    budget.check(
        (nz as u128)
            .saturating_pow(n as u32)
            .saturating_mul(outer_size as u128)
            .saturating_mul(inner_size as u128),
    )?;

    let names: Vec<&str> = q_uvz.axes().iter().map(|a| a.name.as_str()).collect();
    let i_uz = q_uvz.mutual_information(&[names[0]], &[names[2]], &[])?;
    let i_uvz = q_uvz.mutual_information(&[names[0], names[1]], &[names[2]], &[])?;
    let h_u = q_uvz.entropy(&[names[0]])?;
    let conditions = TwoEncoderConditions {
        i_uz,
        i_uvz,
        h_u,
        margin_outer: rate_outer - i_uz,
        margin_inner: rate_inner - (i_uvz - h_u),
        margin_sum: rate_outer + rate_inner - i_uvz,
        all_met: rate_outer > i_uz
            && rate_inner > i_uvz - h_u
            && rate_outer + rate_inner > i_uvz,
    };

    let v_cdfs: Vec<Vec<f64>> = v_rows.iter().map(|r| cdf_of(r)).collect();
    let tvs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng_outer =
                ChaCha8Rng::seed_from_u64(derive_seed2(seed, t as u64, STREAM_OUTER));
            let outer = sample_codebook(&mu, outer_size, n, &mut rng_outer);
            let mut rng_inner =
                ChaCha8Rng::seed_from_u64(derive_seed2(seed, t as u64, STREAM_INNER));
            let blocks = (nz as usize).pow(n as u32);
            let mut induced = vec![0.0; blocks];
            let scale = 1.0 / (outer_size * inner_size) as f64;
            for m1 in 0..outer_size {
                let u_word = &outer.words[m1];
                for _m2 in 0..inner_size {
                    let v_word: Vec<usize> =
                        u_word.iter().map(|&u| sample_cdf(&v_cdfs[u], &mut rng_inner)).collect();
                    let mut law = vec![1.0];
                    for (&u, &v) in u_word.iter().zip(&v_word) {
                        let row = &z_rows[u * nv + v];
                        let mut next = Vec::with_capacity(law.len() * nz);
                        for &p in &law {
                            for &r in row {
                                next.push(p * r);
                            }
                        }
                        law = next;
                    }
                    for (o, &p) in induced.iter_mut().zip(&law) {
                        *o += p * scale;
                    }
                }
            }
            tv_to_iid(&induced, &mz, n)
        })
        .collect();
    let mean_tv = tvs.iter().sum::<f64>() / tvs.len() as f64;
    Ok(TwoEncoderReport {
        n,
        rate_outer,
        rate_inner,
        trials,
        outer_size,
        inner_size,
        conditions,
        tvs,
        mean_tv,
    })
}
