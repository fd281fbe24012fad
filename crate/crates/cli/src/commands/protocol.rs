//! `protocol`: builds cascade schemes from a configured auxiliary source,
//! samples codebooks, and records exact security diagnostics per
//! (block length, codebook seed) cell.

use std::path::Path;

use synthcascade_core::protocol::{run_protocol_counting, security_audit, SccsScheme};
use synthcascade_core::seeding::derive_seed2;
use synthcascade_core::task::{construct_auxiliary, min_r0_corner};
use synthcascade_core::{AuxSolution, JointDist, RateTriple};

use crate::config::{CliError, Config, Result};
use crate::emit::{Emitter, Field};

/// Sweep-cell tag space for derived seeds; distinct per command.
const CTX_CELL: u64 = 0x5052_4f54;

/// Resolves the auxiliary joint over (x,y,z,u,v) shared by `protocol` and
/// `audit`: either the committee-selection construction (`source = "task"`,
/// with m/a/b under [task-assign]) or an explicit tensor under [aux].
pub(crate) fn resolve_aux(cfg: &Config) -> Result<JointDist> {
    let source = match cfg.get("protocol.source") {
        Some(v) => v
            .as_str()
            .ok_or_else(|| CliError::Config("protocol.source must be a string".into()))?
            .to_string(),
        None if cfg.get("task-assign.m").is_some() => "task".to_string(),
        None if cfg.get("aux").is_some() => "aux".to_string(),
        None => {
            return Err(CliError::Config(
                "no auxiliary source: set task-assign.m (committee channel) \
                 or an [aux] tensor"
                    .into(),
            ))
        }
    };
    match source.as_str() {
        "task" => {
            let m = cfg.u64_at("task-assign.m")? as usize;
            let (da, db) = {
                let c = min_r0_corner(m)?;
                (c.a as u64, c.b as u64)
            };
            let a = cfg.opt_u64_at("task-assign.a")?.unwrap_or(da) as usize;
            let b = cfg.opt_u64_at("task-assign.b")?.unwrap_or(db) as usize;
            let budget = cfg.budget()?;
            Ok(construct_auxiliary(m, a, b, &budget)?.joint)
        }
        "aux" => cfg.dist_at("aux"),
        other => Err(CliError::Config(format!(
            "unknown protocol source `{other}` (task, aux)"
        ))),
    }
}

/// Operating rates: explicit [protocol.rates] r0/r1/r2, or the auxiliary's
/// measured rate triple plus a uniform margin (protocol.margin, default
/// 0.1 bits).
pub(crate) fn resolve_rates(cfg: &Config, aux: &JointDist) -> Result<RateTriple> {
    if cfg.get("protocol.rates").is_some() {
        return Ok(RateTriple::new(
            cfg.f64_at("protocol.rates.r0")?,
            cfg.f64_at("protocol.rates.r1")?,
            cfg.f64_at("protocol.rates.r2")?,
        ));
    }
    let margin = cfg.f64_or("protocol.margin", 0.1)?;
    let (rates, _) = AuxSolution::measure(aux)?;
    Ok(RateTriple::new(rates.r0 + margin, rates.r1 + margin, rates.r2 + margin))
}

pub fn run(cfg: &Config, out: &Path) -> Result<()> {
    let aux = resolve_aux(cfg)?;
    let rates = resolve_rates(cfg, &aux)?;
    let ns = cfg.usize_list_at("protocol.n")?;
    let base_seed = cfg.seed()?;
    let codebook_seeds = match cfg.get("protocol.codebook_seeds") {
        Some(_) => cfg.u64_list_at("protocol.codebook_seeds")?,
        None => vec![base_seed],
    };
    let episodes = cfg.usize_or("protocol.episodes", 256)?;
    let emit_codebooks = cfg.bool_or("protocol.emit_codebooks", false)?;
    let budget = cfg.budget()?;

    let mut emitter = Emitter::new(out, &cfg.hash())?;
    let mut csv = emitter.csv(
        "protocol.csv",
        &[
            "n",
            "R0",
            "R1",
            "R2",
            "codebook_seed",
            "trial_seed",
            "synthesis_tv",
            "secrecy_tv",
            "encoder_error_count",
        ],
    );
    let mut seeds = vec![base_seed];
    let mut row = 0u64;
    for &n in &ns {
        let scheme = SccsScheme::build(&aux, rates, n)?;
        for &cb_seed in &codebook_seeds {
            let trial_seed = derive_seed2(base_seed, row, CTX_CELL);
            seeds.push(trial_seed);
            row += 1;
            let codebook = scheme.sample_codebook(cb_seed);
            let security = security_audit(&scheme, &codebook, &budget)?;
            let run = run_protocol_counting(&scheme, &codebook, episodes, trial_seed)?;
            csv.row(&[
                Field::U(n as u64),
                Field::F(rates.r0),
                Field::F(rates.r1),
                Field::F(rates.r2),
                Field::U(cb_seed),
                Field::U(trial_seed),
                Field::F(security.synthesis_tv),
                Field::F(security.secrecy_tv),
                Field::U(run.encoder_errors as u64),
            ]);
            if emit_codebooks {
                emitter.write_json(
                    &format!("codebook_n{n}_s{cb_seed}.json"),
                    &codebook,
                )?;
            }
        }
    }
    emitter.write_csv(csv)?;
    emitter.finish("protocol", &seeds, cfg.echo())
}
