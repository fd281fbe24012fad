//! Config ingestion: TOML file, `--set` dotted-path overrides, typed
//! accessors, and a canonical hash stamped on every emitted file.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use synthcascade_core::{Axis, Budget, Error as CoreError, JointDist, OptimizerConfig};

/// CLI failure classes; each maps to one process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid or missing configuration (exit 2).
    Config(String),
    /// Enumeration budget exceeded (exit 3).
    Budget(String),
    /// Internal invariant failure (exit 4).
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Budget(m) => write!(f, "budget: {m}"),
            CliError::Invariant(m) => write!(f, "invariant: {m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Capacity { .. } => CliError::Budget(e.to_string()),
            CoreError::Invariant(_) | CoreError::AtypicalSource => {
                CliError::Invariant(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// The merged configuration tree plus its canonical hash.
pub struct Config {
    root: toml::Table,
}

impl Config {
    pub fn load(path: Option<&Path>, sets: &[(String, String)]) -> Result<Config> {
        let mut root = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| cfg_err(format!("cannot read {}: {e}", p.display())))?;
                toml::Table::from_str(&text)
                    .map_err(|e| cfg_err(format!("cannot parse {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (key, raw) in sets {
            set_path(&mut root, key, raw)?;
        }
        Ok(Config { root })
    }

    /// Hex SHA-256 of the canonical JSON form (sorted keys) of the merged
    /// config; identical configs hash identically regardless of key order
    /// or TOML formatting.
    pub fn hash(&self) -> String {
        let json = serde_json::to_value(&self.root).expect("toml maps to json");
        let text = serde_json::to_string(&json).expect("json serializes");
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The merged config as a JSON value, for manifest echoing.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(&self.root).expect("toml maps to json")
    }

    pub fn get(&self, path: &str) -> Option<&toml::Value> {
        let mut cur: Option<&toml::Value> = None;
        let mut table = &self.root;
        for part in path.split('.') {
            cur = table.get(part);
            match cur {
                Some(toml::Value::Table(t)) => table = t,
                Some(_) => table = EMPTY.get_or_init(toml::Table::new),
                None => return None,
            }
        }
        cur
    }

    pub fn f64_at(&self, path: &str) -> Result<f64> {
        self.opt_f64_at(path)?
            .ok_or_else(|| cfg_err(format!("missing required key `{path}`")))
    }

    pub fn opt_f64_at(&self, path: &str) -> Result<Option<f64>> {
        match self.get(path) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(*x)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(cfg_err(format!("key `{path}` must be a number"))),
        }
    }

    pub fn f64_or(&self, path: &str, default: f64) -> Result<f64> {
        Ok(self.opt_f64_at(path)?.unwrap_or(default))
    }

    pub fn u64_at(&self, path: &str) -> Result<u64> {
        self.opt_u64_at(path)?
            .ok_or_else(|| cfg_err(format!("missing required key `{path}`")))
    }

    pub fn opt_u64_at(&self, path: &str) -> Result<Option<u64>> {
        match self.get(path) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(cfg_err(format!("key `{path}` must be a nonnegative integer"))),
        }
    }

    pub fn usize_or(&self, path: &str, default: usize) -> Result<usize> {
        Ok(self.opt_u64_at(path)?.map(|v| v as usize).unwrap_or(default))
    }

    pub fn str_or<'a>(&'a self, path: &str, default: &'a str) -> Result<&'a str> {
        match self.get(path) {
            None => Ok(default),
            Some(toml::Value::String(s)) => Ok(s),
            Some(_) => Err(cfg_err(format!("key `{path}` must be a string"))),
        }
    }

    pub fn bool_or(&self, path: &str, default: bool) -> Result<bool> {
        match self.get(path) {
            None => Ok(default),
            Some(toml::Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(cfg_err(format!("key `{path}` must be a boolean"))),
        }
    }

    pub fn f64_list_at(&self, path: &str) -> Result<Vec<f64>> {
        let arr = self.array_at(path)?;
        arr.iter()
            .map(|v| match v {
                toml::Value::Float(x) => Ok(*x),
                toml::Value::Integer(i) => Ok(*i as f64),
                _ => Err(cfg_err(format!("key `{path}` must be a list of numbers"))),
            })
            .collect()
    }

    pub fn usize_list_at(&self, path: &str) -> Result<Vec<usize>> {
        let arr = self.array_at(path)?;
        arr.iter()
            .map(|v| match v {
                toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                _ => Err(cfg_err(format!("key `{path}` must be a list of nonnegative integers"))),
            })
            .collect()
    }

    pub fn u64_list_at(&self, path: &str) -> Result<Vec<u64>> {
        Ok(self.usize_list_at(path)?.into_iter().map(|v| v as u64).collect())
    }

    /// Array of fixed-width numeric rows, e.g. pareto weight triples.
    pub fn rows_at(&self, path: &str, width: usize) -> Result<Vec<Vec<f64>>> {
        let arr = self.array_at(path)?;
        arr.iter()
            .map(|v| match v {
                toml::Value::Array(inner) => {
                    let row: Vec<f64> = inner
                        .iter()
                        .map(|x| match x {
                            toml::Value::Float(f) => Ok(*f),
                            toml::Value::Integer(i) => Ok(*i as f64),
                            _ => Err(cfg_err(format!("key `{path}` rows must be numeric"))),
                        })
                        .collect::<Result<_>>()?;
                    if row.len() != width {
                        return Err(cfg_err(format!(
                            "key `{path}` rows must have {width} entries"
                        )));
                    }
                    Ok(row)
                }
                _ => Err(cfg_err(format!("key `{path}` must be a list of lists"))),
            })
            .collect()
    }

    fn array_at(&self, path: &str) -> Result<&[toml::Value]> {
        match self.get(path) {
            Some(toml::Value::Array(a)) if !a.is_empty() => Ok(a),
            Some(toml::Value::Array(_)) => Err(cfg_err(format!("key `{path}` must be nonempty"))),
            Some(_) => Err(cfg_err(format!("key `{path}` must be a list"))),
            None => Err(cfg_err(format!("missing required key `{path}`"))),
        }
    }

    /// Base seed for randomized commands. Required explicitly: experiments
    /// never default to wall-clock entropy.
    pub fn seed(&self) -> Result<u64> {
        self.opt_u64_at("seed")?
            .ok_or_else(|| cfg_err("missing required key `seed` (explicit seeds only)"))
    }

    pub fn budget(&self) -> Result<Budget> {
        Ok(match self.opt_u64_at("budget.max_cells")? {
            Some(cells) => Budget::new(cells),
            None => Budget::default(),
        })
    }

    /// A joint distribution from `<table>.path` (JSON file) or the inline
    /// `axes`/`sizes`/`mass` triple.
    pub fn dist_at(&self, table: &str) -> Result<JointDist> {
        if self.get(table).is_none() {
            return Err(cfg_err(format!("missing required table `[{table}]`")));
        }
        if let Some(toml::Value::String(p)) = self.get(&format!("{table}.path")) {
            let text = fs::read_to_string(p)
                .map_err(|e| cfg_err(format!("cannot read {p}: {e}")))?;
            return serde_json::from_str::<JointDist>(&text)
                .map_err(|e| cfg_err(format!("cannot parse {p}: {e}")));
        }
        let names = match self.get(&format!("{table}.axes")) {
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => Ok(s.clone()),
                    _ => Err(cfg_err(format!("`{table}.axes` must be a list of names"))),
                })
                .collect::<Result<Vec<_>>>()?,
            _ => return Err(cfg_err(format!("missing `{table}.axes` (or `{table}.path`)"))),
        };
        let sizes = self.usize_list_at(&format!("{table}.sizes"))?;
        if sizes.len() != names.len() {
            return Err(cfg_err(format!("`{table}.axes` and `{table}.sizes` differ in length")));
        }
        let mass = self.f64_list_at(&format!("{table}.mass"))?;
        let axes: Vec<Axis> =
            names.iter().zip(&sizes).map(|(n, &s)| Axis::new(n, s)).collect();
        Ok(JointDist::new(axes, mass)?)
    }

    /// Optimizer settings under `<table>`, falling back to defaults; the
    /// seed falls back to the top-level base seed, then 0.
    pub fn optimizer_at(&self, table: &str) -> Result<OptimizerConfig> {
        let mut cfg = OptimizerConfig::default();
        cfg.card_u = self.usize_or(&format!("{table}.card_u"), cfg.card_u)?;
        cfg.card_v = self.usize_or(&format!("{table}.card_v"), cfg.card_v)?;
        cfg.restarts = self.usize_or(&format!("{table}.restarts"), cfg.restarts)?;
        if self.get(&format!("{table}.penalty_schedule")).is_some() {
            cfg.penalty_schedule = self.f64_list_at(&format!("{table}.penalty_schedule"))?;
        }
        cfg.iters_per_stage =
            self.usize_or(&format!("{table}.iters_per_stage"), cfg.iters_per_stage as usize)?
                as u32;
        cfg.eta = self.f64_or(&format!("{table}.eta"), cfg.eta)?;
        cfg.grad_clip = self.f64_or(&format!("{table}.grad_clip"), cfg.grad_clip)?;
        cfg.tol_markov = self.f64_or(&format!("{table}.tol_markov"), cfg.tol_markov)?;
        cfg.tol_rate = self.f64_or(&format!("{table}.tol_rate"), cfg.tol_rate)?;
        cfg.seed = match self.opt_u64_at(&format!("{table}.seed"))? {
            Some(s) => s,
            None => self.opt_u64_at("seed")?.unwrap_or(0),
        };
        if self.get(&format!("{table}.card_ladder")).is_some() {
            let rows = self.rows_at(&format!("{table}.card_ladder"), 2)?;
            cfg.card_ladder = Some(
                rows.iter()
                    .map(|r| (r[0] as usize, r[1] as usize))
                    .collect(),
            );
        }
        Ok(cfg)
    }
}

static EMPTY: std::sync::OnceLock<toml::Table> = std::sync::OnceLock::new();

/// Writes `raw` at the dotted `key` path. Values parse as TOML literals
/// (`3`, `0.5`, `true`, `[1, 2]`, `"text"`); anything unparsable is taken
/// as a bare string.
fn set_path(root: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(cfg_err(format!("bad --set key `{key}`")));
    }
    let value = match toml::Table::from_str(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed assignment has v"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => table = t,
            _ => {
                return Err(cfg_err(format!(
                    "--set key `{key}` descends through non-table `{part}`"
                )))
            }
        }
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
