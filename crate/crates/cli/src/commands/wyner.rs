//! `wyner`: joint computation of the cascade-constrained and single-variable
//! common information of a source, with the gap between them.

use std::path::Path;

use serde::Serialize;
use synthcascade_core::region::common_info_pair;
use synthcascade_core::JointDist;

use crate::config::{Config, Result};
use crate::emit::{Emitter, Field, TOOLKIT_VERSION};

#[derive(Serialize)]
struct WynerRecord<'a> {
    config_hash: &'a str,
    toolkit_version: &'a str,
    command: &'a str,
    seed: u64,
    cascade_common_info: f64,
    wyner_common_info: f64,
    gap: f64,
    cascade_rates: [f64; 3],
    cascade_markov_residual: f64,
    cascade_card_u: usize,
    cascade_card_v: usize,
    cascade_penalty_failure: bool,
    wyner_tc_residual: f64,
    wyner_card_u: usize,
    wyner_penalty_failure: bool,
    cascade_joint: &'a JointDist,
    wyner_joint: &'a JointDist,
}

pub fn run(cfg: &Config, out: &Path) -> Result<()> {
    let q = cfg.dist_at("dist")?;
    let opt = cfg.optimizer_at("wyner.optimizer")?;
    let mut emitter = Emitter::new(out, &cfg.hash())?;
    let hash = emitter.config_hash().to_string();

    let (cascade, wyner) = common_info_pair(&q, &opt)?;
    let record = WynerRecord {
        config_hash: &hash,
        toolkit_version: TOOLKIT_VERSION,
        command: "wyner",
        seed: opt.seed,
        cascade_common_info: cascade.rates.r0,
        wyner_common_info: wyner.common_info,
        gap: cascade.rates.r0 - wyner.common_info,
        cascade_rates: [cascade.rates.r0, cascade.rates.r1, cascade.rates.r2],
        cascade_markov_residual: cascade.markov_residual,
        cascade_card_u: cascade.card_u,
        cascade_card_v: cascade.card_v,
        cascade_penalty_failure: cascade.penalty_failure,
        wyner_tc_residual: wyner.tc_residual,
        wyner_card_u: wyner.card_u,
        wyner_penalty_failure: wyner.penalty_failure,
        cascade_joint: &cascade.joint,
        wyner_joint: &wyner.joint,
    };
    emitter.write_json("wyner.json", &record)?;

    let mut csv = emitter.csv(
        "wyner.csv",
        &[
            "cascade_common_info",
            "wyner_common_info",
            "gap",
            "cascade_markov_residual",
            "wyner_tc_residual",
            "seed",
        ],
    );
    csv.row(&[
        Field::F(cascade.rates.r0),
        Field::F(wyner.common_info),
        Field::F(cascade.rates.r0 - wyner.common_info),
        Field::F(cascade.markov_residual),
        Field::F(wyner.tc_residual),
        Field::U(opt.seed),
    ]);
    emitter.write_csv(csv)?;
    emitter.finish("wyner", &[opt.seed], cfg.echo())
}
