//! Rate region for a line network with any number of receivers.
//!
//! Node 1 observes X and forwards messages down a cascade of m−1
//! receivers; receiver i must output Y_i. The auxiliary structure is a
//! stack U_1 → U_2 → ... → U_{m−1} in which each later auxiliary is a
//! deterministic function of the previous one (a surjection between
//! shrinking alphabets), so the whole stack is parameterized by the
//! conditional P(U_1 | X, Y_1..Y_{m−1}) plus the function tables. The
//! constraints are
//!
//! * R_i ≥ I(X; U_i)          (link i carries the tail of the stack),
//! * R_0 ≥ I(X, Y_1..Y_{m−1}; U_1),
//!
//! subject to the chains X − U_1 − Y_1 and
//! (X, Y_1..Y_j, U_1) − U_{j+1} − Y_{j+1} for each later hop. For m = 3
//! this searches the functional-second-auxiliary slice of the two-hop
//! region, which spans the same rate region as the general two-auxiliary
//! parameterization.

use super::optimizer::{eg_step, make_init, SELECT_TOL, TIGHTEN};
use super::Decision;
use crate::dist::{Axis, JointDist};
use crate::error::Error;
use crate::info::entropy_of;
use crate::seeding::{derive_seed, derive_seed2};
use crate::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const CTX_MNODE: u64 = 0x4d4e_4f44;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MnodeConfig {
    /// Cap on |U_1|; later alphabets never exceed it.
    pub card_cap: usize,
    /// Restarts per (cards, maps) rung.
    pub restarts: usize,
    pub penalty_schedule: Vec<f64>,
    pub iters_per_stage: u32,
    pub eta: f64,
    pub grad_clip: f64,
    pub tol_markov: f64,
    pub tol_rate: f64,
    pub seed: u64,
}

impl Default for MnodeConfig {
    fn default() -> Self {
        MnodeConfig {
            card_cap: 4,
            restarts: 16,
            penalty_schedule: vec![10.0, 100.0, 1000.0, 1e4],
            iters_per_stage: 500,
            eta: 0.35,
            grad_clip: 30.0,
            tol_markov: 1e-6,
            tol_rate: 5e-3,
            seed: 0,
        }
    }
}

/// Certificate joint over (X, Y_1..Y_{m−1}, U_1) plus the function tables
/// defining the rest of the stack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MnodeSolution {
    /// Axes: the source axes followed by "u1".
    pub joint: JointDist,
    /// maps[i][a] = value of U_{i+2} when U_{i+1} = a, for i = 0..m−3.
    pub maps: Vec<Vec<usize>>,
    /// Alphabet sizes of U_1..U_{m−1}.
    pub cards: Vec<usize>,
    /// [I(X,Y..;U_1), I(X;U_1), I(X;U_2), ..]: the left sides of the rate
    /// constraints in (R_0, R_1, .., R_{m−1}) order.
    pub rate_terms: Vec<f64>,
    /// Chain violations, first hop first.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MnodeVerdict {
    pub decision: Decision,
    pub max_slack: f64,
    pub certificate: MnodeSolution,
}

/// Fixed data for one (cards, surjections) rung.
struct MnodeProblem {
    q: Vec<f64>,
    sizes: Vec<usize>,
    m: usize,
    coords: Vec<Vec<usize>>,
    /// pref_idx[j][s]: flat index of (x, y_1..y_j); j ranges 0..m−2.
    pref_idx: Vec<Vec<usize>>,
    npref: Vec<usize>,
    support: Vec<bool>,
    h_src: f64,
    h_x: f64,
    cards: Vec<usize>,
    /// Composed level maps g_i: gmaps[i][a] = value of U_{i+1} given
    /// U_1 = a; gmaps[0] is the identity.
    gmaps: Vec<Vec<usize>>,
}

struct MnodeWorkspace {
    m_u: Vec<Vec<f64>>,
    m_xu: Vec<Vec<f64>>,
    m_yu: Vec<Vec<f64>>,
    m_pref: Vec<Vec<f64>>,
    g: Vec<f64>,
}

#[derive(Debug, Clone)]
struct MnodeTerms {
    i_src_u1: f64,
    i_x_u: Vec<f64>,
    pens: Vec<f64>,
}

impl MnodeTerms {
    fn pen(&self) -> f64 {
        self.pens.iter().sum()
    }

    fn max_slack(&self, rates: &[f64]) -> f64 {
        let mut worst = self.i_src_u1 - rates[0];
        for (i, &term) in self.i_x_u.iter().enumerate() {
            worst = worst.max(term - rates[i + 1]);
        }
        worst
    }

    /// Index of the active constraint: 0 for the common-randomness rate,
    /// i ≥ 1 for link i.
    fn active(&self, rates: &[f64]) -> usize {
        let mut worst = self.i_src_u1 - rates[0];
        let mut idx = 0;
        for (i, &term) in self.i_x_u.iter().enumerate() {
            let slack = term - rates[i + 1];
            if slack > worst {
                worst = slack;
                idx = i + 1;
            }
        }
        idx
    }
}

impl MnodeProblem {
    fn new(q: &JointDist, cards: Vec<usize>, maps: &[Vec<usize>]) -> Self {
        let sizes = q.sizes().to_vec();
        let m = sizes.len();
        let mass = q.mass().to_vec();
        let coords: Vec<Vec<usize>> = (0..mass.len())
            .map(|s| {
                let mut c = vec![0; m];
                crate::dist::unravel(s, &sizes, &mut c);
                c
            })
            .collect();
        let mut npref = Vec::new();
        let mut pref_idx = Vec::new();
        for j in 0..m - 1 {
            let np: usize = sizes[..=j].iter().product();
            npref.push(np);
            pref_idx.push(
                coords
                    .iter()
                    .map(|c| c[..=j].iter().zip(&sizes[..=j]).fold(0, |acc, (&v, &n)| acc * n + v))
                    .collect(),
            );
        }
        let support: Vec<bool> = mass.iter().map(|&p| p > 0.0).collect();
        let h_src = entropy_of(&mass);
        let mut qx = vec![0.0; sizes[0]];
        for (s, &p) in mass.iter().enumerate() {
            qx[coords[s][0]] += p;
        }
        let c1 = cards[0];
        let mut gmaps: Vec<Vec<usize>> = vec![(0..c1).collect()];
        for (i, map) in maps.iter().enumerate() {
            let prev = &gmaps[i];
            gmaps.push(prev.iter().map(|&a| map[a]).collect());
        }
        MnodeProblem {
            q: mass,
            sizes,
            m,
            coords,
            pref_idx,
            npref,
            support,
            h_src,
            h_x: entropy_of(&qx),
            cards,
            gmaps,
        }
    }

    fn c1(&self) -> usize {
        self.cards[0]
    }

    fn workspace(&self) -> MnodeWorkspace {
        let levels = self.m - 1;
        let c1 = self.c1();
        MnodeWorkspace {
            m_u: (0..levels).map(|i| vec![0.0; self.cards[i]]).collect(),
            m_xu: (0..levels).map(|i| vec![0.0; self.sizes[0] * self.cards[i]]).collect(),
            m_yu: (0..levels).map(|i| vec![0.0; self.sizes[i + 1] * self.cards[i]]).collect(),
            m_pref: (0..levels).map(|j| vec![0.0; self.npref[j] * c1]).collect(),
            g: vec![0.0; self.q.len() * c1],
        }
    }

    /// Returns (terms, h_all); marginals in `ws` are left current for the
    /// gradient pass.
    fn terms(&self, r: &[f64], ws: &mut MnodeWorkspace) -> (MnodeTerms, f64) {
        let levels = self.m - 1;
        let c1 = self.c1();
        for arr in ws.m_u.iter_mut().chain(&mut ws.m_xu).chain(&mut ws.m_yu).chain(&mut ws.m_pref)
        {
            arr.iter_mut().for_each(|e| *e = 0.0);
        }
        let mut h_all = 0.0;
        for s in 0..self.q.len() {
            if !self.support[s] {
                continue;
            }
            let x = self.coords[s][0];
            for a in 0..c1 {
                let p = self.q[s] * r[s * c1 + a];
                if p > 0.0 {
                    h_all -= p * p.log2();
                }
                for i in 0..levels {
                    let ui = self.gmaps[i][a];
                    let ci = self.cards[i];
                    ws.m_u[i][ui] += p;
                    ws.m_xu[i][x * ci + ui] += p;
                    ws.m_yu[i][self.coords[s][i + 1] * ci + ui] += p;
                }
                for j in 0..levels {
                    ws.m_pref[j][self.pref_idx[j][s] * c1 + a] += p;
                }
            }
        }
        let h_u: Vec<f64> = ws.m_u.iter().map(|m| entropy_of(m)).collect();
        let h_xu: Vec<f64> = ws.m_xu.iter().map(|m| entropy_of(m)).collect();
        let h_yu: Vec<f64> = ws.m_yu.iter().map(|m| entropy_of(m)).collect();
        let h_pref: Vec<f64> = ws.m_pref.iter().map(|m| entropy_of(m)).collect();
        let i_src_u1 = self.h_src + h_u[0] - h_all;
        let i_x_u = (0..levels).map(|i| self.h_x + h_u[i] - h_xu[i]).collect();
        // Chain j: I(X, Y_1..Y_j, U_1; Y_{j+1} | U_{j+1}); the left group's
        // entropy with Y_{j+1} appended is the next prefix marginal, or the
        // full joint on the last hop.
        let pens = (0..levels)
            .map(|j| {
                let h_ljy = if j + 1 < levels { h_pref[j + 1] } else { h_all };
                h_pref[j] + h_yu[j] - h_ljy - h_u[j]
            })
            .collect();
        (MnodeTerms { i_src_u1, i_x_u, pens }, h_all)
    }

    /// Gradient of (active constraint term + λ · Σ chains) with respect to
    /// each conditional cell, in bits. Marginals must be current.
    fn gradient(&self, r: &[f64], active: usize, lambda: f64, ws: &mut MnodeWorkspace) {
        let levels = self.m - 1;
        let c1 = self.c1();
        let lg = |m: f64| m.max(1e-300).log2();
        for s in 0..self.q.len() {
            if !self.support[s] {
                continue;
            }
            let x = self.coords[s][0];
            for a in 0..c1 {
                let l_all = (self.q[s] * r[s * c1 + a]).max(1e-300).log2();
                let mut g = if active == 0 {
                    l_all - lg(ws.m_u[0][a])
                } else {
                    let i = active - 1;
                    let ui = self.gmaps[i][a];
                    let ci = self.cards[i];
                    lg(ws.m_xu[i][x * ci + ui]) - lg(ws.m_u[i][ui])
                };
                for j in 0..levels {
                    let ci = self.cards[j];
                    let uj = self.gmaps[j][a];
                    let l_pref = lg(ws.m_pref[j][self.pref_idx[j][s] * c1 + a]);
                    let l_ljy = if j + 1 < levels {
                        lg(ws.m_pref[j + 1][self.pref_idx[j + 1][s] * c1 + a])
                    } else {
                        l_all
                    };
                    let l_yu = lg(ws.m_yu[j][self.coords[s][j + 1] * ci + uj]);
                    let l_u = lg(ws.m_u[j][uj]);
                    g += lambda * (l_ljy + l_u - l_pref - l_yu);
                }
                ws.g[s * c1 + a] = g;
            }
        }
    }
}

fn run_mnode(
    prob: &MnodeProblem,
    r: &mut Vec<f64>,
    rates: &[f64],
    schedule: &[(f64, u32)],
    eta: f64,
    clip: f64,
    ws: &mut MnodeWorkspace,
) {
    let c1 = prob.c1();
    for &(lambda, iters) in schedule {
        for _ in 0..iters {
            let (t, _) = prob.terms(r, ws);
            let active = t.active(rates);
            prob.gradient(r, active, lambda, ws);
            eg_step(r, &ws.g, &prob.support, c1, eta, clip);
        }
    }
}

#[derive(Clone)]
struct MnodeCandidate {
    r: Vec<f64>,
    cards: Vec<usize>,
    maps: Vec<Vec<usize>>,
    terms: MnodeTerms,
    slack: f64,
}

impl MnodeCandidate {
    fn key(&self) -> (bool, f64) {
        if self.terms.pen() <= SELECT_TOL {
            (false, self.slack)
        } else {
            (true, self.terms.pen())
        }
    }
}

/// Non-increasing alphabet ladders for the auxiliary stack.
fn card_ladders(levels: usize, cap: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let push = |c: Vec<usize>, out: &mut Vec<Vec<usize>>| {
        if !out.contains(&c) {
            out.push(c);
        }
    };
    push(vec![1; levels], &mut out);
    push(vec![2.min(cap); levels], &mut out);
    if cap > 2 {
        push(vec![cap; levels], &mut out);
        let mut halving = Vec::with_capacity(levels);
        let mut c = cap;
        for _ in 0..levels {
            halving.push(c);
            c = (c / 2).max(1);
        }
        push(halving, &mut out);
    }
    out
}

/// Surjection [c_from] → [c_to]; k = 0 yields the canonical block map,
/// other draws cover every target then assign the rest uniformly.
fn surjection(c_from: usize, c_to: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if k == 0 || c_from == c_to {
        return (0..c_from).map(|a| a * c_to / c_from).collect();
    }
    let mut order: Vec<usize> = (0..c_from).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut map = vec![0; c_from];
    for (rank, &a) in order.iter().enumerate() {
        map[a] = if rank < c_to { rank } else { rng.gen_range(0..c_to) };
    }
    map
}

fn mnode_copy_maps(q: &JointDist, c1: usize) -> Vec<Vec<usize>> {
    let sizes = q.sizes().to_vec();
    let n = q.mass().len();
    let mut coord = vec![0; sizes.len()];
    let mut m1 = Vec::with_capacity(n);
    let mut m2 = Vec::with_capacity(n);
    for s in 0..n {
        crate::dist::unravel(s, &sizes, &mut coord);
        let tail = coord[1..].iter().zip(&sizes[1..]).fold(0, |acc, (&v, &m)| acc * m + v);
        m1.push(tail % c1);
        m2.push(coord[0] % c1);
    }
    vec![m1, m2]
}

/// Decides whether (R_0, R_1, .., R_{m−1}) lies in the line-network rate
/// region of the source `q` (axes: X first, then each receiver's target
/// variable in cascade order). `rates` is indexed the same way.
pub fn membership_m_node(q: &JointDist, rates: &[f64], cfg: &MnodeConfig) -> Result<MnodeVerdict> {
    let m = q.axes().len();
    if m < 3 {
        return Err(Error::AxisMismatch(
            "line-network source needs X plus at least two receiver axes".into(),
        ));
    }
    if rates.len() != m {
        return Err(Error::InvalidArgument(format!(
            "need {} rates (common randomness plus one per link), got {}",
            m,
            rates.len()
        )));
    }
    if cfg.card_cap < 1 || cfg.restarts < 1 || cfg.penalty_schedule.is_empty() {
        return Err(Error::InvalidArgument("invalid search configuration".into()));
    }
    let levels = m - 1;
    let schedule: Vec<(f64, u32)> =
        cfg.penalty_schedule.iter().map(|&l| (l, cfg.iters_per_stage)).collect();
    let base = derive_seed(cfg.seed, CTX_MNODE);

    let mut pool: Vec<MnodeCandidate> = Vec::new();
    for cards in card_ladders(levels, cfg.card_cap) {
        let rung_tag = cards.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &c| {
            (h ^ c as u64).wrapping_mul(0x1000_0000_01b3)
        });
        let copy_maps = mnode_copy_maps(q, cards[0]);
        let rung: Vec<MnodeCandidate> = (0..cfg.restarts)
            .into_par_iter()
            .map(|k| {
                let seed = derive_seed2(base, rung_tag, k as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let maps: Vec<Vec<usize>> = (0..levels - 1)
                    .map(|i| surjection(cards[i], cards[i + 1], k, &mut rng))
                    .collect();
                let prob = MnodeProblem::new(q, cards.clone(), &maps);
                let mut r = make_init(k, &copy_maps, prob.q.len(), cards[0], &mut rng);
                let mut ws = prob.workspace();
                run_mnode(&prob, &mut r, rates, &schedule, cfg.eta, cfg.grad_clip, &mut ws);
                let (terms, _) = prob.terms(&r, &mut ws);
                let slack = terms.max_slack(rates);
                MnodeCandidate { r, cards: cards.clone(), maps, terms, slack }
            })
            .collect();
        pool.extend(rung);
    }

    let mut best = 0;
    for i in 1..pool.len() {
        if pool[i].key() < pool[best].key() {
            best = i;
        }
    }
    let winner = {
        let cand = pool[best].clone();
        let prob = MnodeProblem::new(q, cand.cards.clone(), &cand.maps);
        let mut r = cand.r.clone();
        let mut ws = prob.workspace();
        run_mnode(&prob, &mut r, rates, &TIGHTEN, cfg.eta, cfg.grad_clip, &mut ws);
        let (terms, _) = prob.terms(&r, &mut ws);
        if terms.pen() <= SELECT_TOL.min(cand.terms.pen().max(1e-12)) || terms.pen() <= 1e-9 {
            let slack = terms.max_slack(rates);
            MnodeCandidate { r, cards: cand.cards, maps: cand.maps, terms, slack }
        } else {
            cand
        }
    };

    let c1 = winner.cards[0];
    let mut axes: Vec<Axis> = q.axes().to_vec();
    axes.push(Axis::new("u1", c1));
    let mut mass = Vec::with_capacity(q.mass().len() * c1);
    for (s, &qs) in q.mass().iter().enumerate() {
        for a in 0..c1 {
            mass.push(qs * winner.r[s * c1 + a]);
        }
    }
    let joint = JointDist::new(axes, mass)?;
    let mut rate_terms = vec![winner.terms.i_src_u1];
    rate_terms.extend(winner.terms.i_x_u.iter());
    let certificate = MnodeSolution {
        joint,
        maps: winner.maps.clone(),
        cards: winner.cards.clone(),
        rate_terms,
        residuals: winner.terms.pens.clone(),
    };
    let feasible = winner.terms.pen() <= cfg.tol_markov;
    let decision = if winner.slack <= cfg.tol_rate && feasible {
        Decision::Member
    } else {
        Decision::NonMemberAtTolerance
    };
    Ok(MnodeVerdict { decision, max_slack: winner.slack, certificate })
}
