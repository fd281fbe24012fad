//! `task-assign`: closed-form rate corners and explicit auxiliary
//! constructions for the committee-selection channel.

use std::path::Path;

use serde::Serialize;
use synthcascade_core::task::{closed_form_corners, construct_auxiliary, min_r0_corner};
use synthcascade_core::JointDist;

use crate::config::{CliError, Config, Result};
use crate::emit::{Emitter, Field, TOOLKIT_VERSION};

#[derive(Serialize)]
struct AuxiliaryRecord<'a> {
    config_hash: &'a str,
    toolkit_version: &'a str,
    command: &'a str,
    mode: &'a str,
    m: usize,
    a: usize,
    b: usize,
    rates: [f64; 3],
    achieved_rates: [f64; 3],
    markov_residual: f64,
    card_u: usize,
    card_v: usize,
    joint: &'a JointDist,
}

pub fn run(cfg: &Config, out: &Path) -> Result<()> {
    let mode = cfg.str_or("task-assign.mode", "corners")?.to_string();
    let m = cfg.u64_at("task-assign.m")? as usize;
    let mut emitter = Emitter::new(out, &cfg.hash())?;
    let hash = emitter.config_hash().to_string();

    match mode.as_str() {
        "corners" => {
            let corners = closed_form_corners(m)?;
            let best = min_r0_corner(m)?;
            let mut csv =
                emitter.csv("task_corners.csv", &["m", "a", "b", "R0", "R1", "R2"]);
            for c in &corners {
                csv.row(&[
                    Field::U(m as u64),
                    Field::U(c.a as u64),
                    Field::U(c.b as u64),
                    Field::F(c.rates.r0),
                    Field::F(c.rates.r1),
                    Field::F(c.rates.r2),
                ]);
            }
            emitter.write_csv(csv)?;
            emitter.write_json(
                "task_summary.json",
                &serde_json::json!({
                    "config_hash": hash,
                    "toolkit_version": TOOLKIT_VERSION,
                    "command": "task-assign",
                    "mode": "corners",
                    "m": m,
                    "corner_count": corners.len(),
                    "min_r0_corner": { "a": best.a, "b": best.b,
                        "rates": [best.rates.r0, best.rates.r1, best.rates.r2] },
                }),
            )?;
            emitter.finish("task-assign", &[], cfg.echo())
        }
        "auxiliary" => {
            let a = cfg.u64_at("task-assign.a")? as usize;
            let b = cfg.u64_at("task-assign.b")? as usize;
            let budget = cfg.budget()?;
            let sol = construct_auxiliary(m, a, b, &budget)?;
            let closed = synthcascade_core::task::corner_rates(m, a, b)?;
            let record = AuxiliaryRecord {
                config_hash: &hash,
                toolkit_version: TOOLKIT_VERSION,
                command: "task-assign",
                mode: "auxiliary",
                m,
                a,
                b,
                rates: [closed.r0, closed.r1, closed.r2],
                achieved_rates: [sol.rates.r0, sol.rates.r1, sol.rates.r2],
                markov_residual: sol.markov_residual,
                card_u: sol.card_u,
                card_v: sol.card_v,
                joint: &sol.joint,
            };
            emitter.write_json("task_auxiliary.json", &record)?;
            emitter.finish("task-assign", &[], cfg.echo())
        }
        other => Err(CliError::Config(format!(
            "unknown task-assign mode `{other}` (corners, auxiliary)"
        ))),
    }
}
