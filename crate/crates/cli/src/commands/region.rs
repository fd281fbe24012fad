//! `region`: weighted rate minimization, membership tests, and boundary
//! traces over the cascade rate region.

use std::path::Path;

use serde::Serialize;
use synthcascade_core::region::{min_weighted_rates, region_membership, Decision};
use synthcascade_core::seeding::derive_seed2;
use synthcascade_core::{AuxSolution, JointDist, RateTriple};

use crate::config::{CliError, Config, Result};
use crate::emit::{Emitter, Field, TOOLKIT_VERSION};

/// Sweep-cell tag space for derived seeds; distinct per command.
const CTX_CELL: u64 = 0x5245_4749;

fn decision_str(d: Decision) -> &'static str {
    match d {
        Decision::Member => "member",
        Decision::NonMemberAtTolerance => "non-member-at-tolerance",
    }
}

#[derive(Serialize)]
struct SolutionRecord<'a> {
    config_hash: &'a str,
    toolkit_version: &'a str,
    command: &'a str,
    mode: &'a str,
    seed: u64,
    rates: [f64; 3],
    markov_residual: f64,
    marginal_residual: f64,
    card_u: usize,
    card_v: usize,
    penalty_failure: bool,
    joint: &'a JointDist,
}

#[derive(Serialize)]
struct MemberRecord<'a> {
    config_hash: &'a str,
    toolkit_version: &'a str,
    command: &'a str,
    mode: &'a str,
    seed: u64,
    requested_rates: [f64; 3],
    verdict: &'a str,
    max_slack: f64,
    certificate: SolutionRecord<'a>,
}

fn solution_record<'a>(
    sol: &'a AuxSolution,
    hash: &'a str,
    mode: &'a str,
    seed: u64,
) -> SolutionRecord<'a> {
    SolutionRecord {
        config_hash: hash,
        toolkit_version: TOOLKIT_VERSION,
        command: "region",
        mode,
        seed,
        rates: [sol.rates.r0, sol.rates.r1, sol.rates.r2],
        markov_residual: sol.markov_residual,
        marginal_residual: sol.marginal_residual,
        card_u: sol.card_u,
        card_v: sol.card_v,
        penalty_failure: sol.penalty_failure,
        joint: &sol.joint,
    }
}

pub fn run(cfg: &Config, out: &Path) -> Result<()> {
    let mode = cfg.str_or("region.mode", "weighted")?.to_string();
    let q = cfg.dist_at("dist")?;
    let opt = cfg.optimizer_at("region.optimizer")?;
    let mut emitter = Emitter::new(out, &cfg.hash())?;
    let hash = emitter.config_hash().to_string();

    match mode.as_str() {
        "weighted" => {
            let w = (
                cfg.f64_or("region.weights.w0", 1.0)?,
                cfg.f64_or("region.weights.w1", 1.0)?,
                cfg.f64_or("region.weights.w2", 1.0)?,
            );
            let sol = min_weighted_rates(&q, w, &opt)?;
            emitter.write_json(
                "region_weighted.json",
                &solution_record(&sol, &hash, "weighted", opt.seed),
            )?;
            emitter.finish("region", &[opt.seed], cfg.echo())
        }
        "member" => {
            let rates = RateTriple::new(
                cfg.f64_at("region.rates.r0")?,
                cfg.f64_at("region.rates.r1")?,
                cfg.f64_at("region.rates.r2")?,
            );
            let verdict = region_membership(&q, &rates, &opt)?;
            let record = MemberRecord {
                config_hash: &hash,
                toolkit_version: TOOLKIT_VERSION,
                command: "region",
                mode: "member",
                seed: opt.seed,
                requested_rates: [rates.r0, rates.r1, rates.r2],
                verdict: decision_str(verdict.decision),
                max_slack: verdict.max_slack,
                certificate: solution_record(&verdict.certificate, &hash, "member", opt.seed),
            };
            emitter.write_json("region_member.json", &record)?;
            emitter.finish("region", &[opt.seed], cfg.echo())
        }
        "pareto" => {
            let grid = cfg.rows_at("region.pareto.weights", 3)?;
            let mut csv = emitter.csv(
                "region_pareto.csv",
                &["w0", "w1", "w2", "R0", "R1", "R2", "markov_residual", "restarts_used", "seed"],
            );
            let mut seeds = vec![opt.seed];
            for (i, w) in grid.iter().enumerate() {
                let mut cell_opt = opt.clone();
                cell_opt.seed = derive_seed2(opt.seed, i as u64, CTX_CELL);
                seeds.push(cell_opt.seed);
                let sol = min_weighted_rates(&q, (w[0], w[1], w[2]), &cell_opt)?;
                csv.row(&[
                    Field::F(w[0]),
                    Field::F(w[1]),
                    Field::F(w[2]),
                    Field::F(sol.rates.r0),
                    Field::F(sol.rates.r1),
                    Field::F(sol.rates.r2),
                    Field::F(sol.markov_residual),
                    Field::U(cell_opt.restarts as u64),
                    Field::U(cell_opt.seed),
                ]);
            }
            emitter.write_csv(csv)?;
            emitter.finish("region", &seeds, cfg.echo())
        }
        other => Err(CliError::Config(format!(
            "unknown region mode `{other}` (weighted, member, pareto)"
        ))),
    }
}
