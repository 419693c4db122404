//! Run configuration read from TOML.

use crate::error::{CliError, Result};
use coulomb_core::landau::Regime;
use coulomb_core::Potential;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Sample,
    Fekete,
    Kernel,
    Concentrate,
    Verify,
    Stats,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Fekete => "fekete",
            Command::Kernel => "kernel",
            Command::Concentrate => "concentrate",
            Command::Verify => "verify",
            Command::Stats => "stats",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PotentialSpec {
    #[default]
    Ginibre,
    /// `|ζ|^{2p}`
    Radial { p: u32 },
    /// `|ζ|^{2p} − t·Re ζ^d`
    Harmonic { p: u32, t: f64, d: u32 },
}

impl PotentialSpec {
    pub fn build(&self) -> Result<Potential> {
        Ok(match *self {
            PotentialSpec::Ginibre => Potential::ginibre(),
            PotentialSpec::Radial { p } => Potential::radial_monomial(p)?,
            PotentialSpec::Harmonic { p, t, d } => Potential::harmonic(p, t, d)?,
        })
    }
}

/// Where a `stats` run gets its configurations when it has no `inputs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gibbs,
    Fekete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Special,
    Ensemble,
    Polyspace,
    Limits,
    Landau,
    Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_grid: Option<Vec<f64>>,
    /// Edge offsets `l` for kernel profiles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Vicinity margin `M`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zoom: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<Suite>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<PathBuf>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub plots: bool,
}

fn default_seeds() -> usize {
    1
}

fn default_true() -> bool {
    true
}

const TOP_KEYS: &[&str] = &[
    "command",
    "potential",
    "n",
    "n_grid",
    "c",
    "beta",
    "seeds",
    "seed",
    "sweeps",
    "l_grid",
    "l_values",
    "rho",
    "gamma",
    "margin",
    "regime",
    "theta",
    "zoom",
    "s",
    "family",
    "suite",
    "inputs",
    "output",
    "plots",
];

fn potential_keys(kind: Option<&str>) -> &'static [&'static str] {
    match kind {
        Some("radial") => &["kind", "p"],
        Some("harmonic") => &["kind", "p", "t", "d"],
        _ => &["kind"],
    }
}

/// Every key of `table` not understood by [`RunConfig`], as dotted paths.
pub fn unknown_keys(table: &toml::Table) -> Vec<String> {
    let mut out = Vec::new();
    for (k, v) in table {
        if !TOP_KEYS.contains(&k.as_str()) {
            out.push(k.clone());
        } else if k == "potential" {
            if let Some(t) = v.as_table() {
                let allowed = potential_keys(t.get("kind").and_then(|x| x.as_str()));
                out.extend(
                    t.keys()
                        .filter(|x| !allowed.contains(&x.as_str()))
                        .map(|x| format!("potential.{x}")),
                );
            }
        }
    }
    out
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Validation(e.to_string()))?;
        let unknown = unknown_keys(&table);
        if !unknown.is_empty() {
            return Err(CliError::Validation(format!(
                "configuration error: unknown keys: {}",
                unknown.join(", ")
            )));
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Validation(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn n_values(&self) -> Vec<usize> {
        match (&self.n, &self.n_grid) {
            (Some(n), _) => vec![*n],
            (None, Some(g)) => g.clone(),
            (None, None) => Vec::new(),
        }
    }

    /// `β` for size `n`, from `beta` or from `c` as `c·ln n`.
    pub fn beta_for(&self, n: usize) -> Option<f64> {
        match (self.beta, self.c) {
            (Some(b), _) => Some(b),
            (None, Some(c)) => Some(coulomb_core::beta_from_c(c, n)),
            _ => None,
        }
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps.unwrap_or(1000)
    }

    pub fn l_grid(&self) -> Vec<f64> {
        self.l_grid.clone().unwrap_or_else(|| match self.command {
            Command::Concentrate => vec![2.0, 4.0, 6.0],
            _ => (2..=10).map(f64::from).collect(),
        })
    }

    pub fn l_values(&self) -> Vec<f64> {
        self.l_values.clone().unwrap_or_else(|| vec![-2.0, 0.0, 1.0])
    }

    pub fn suite(&self) -> Suite {
        self.suite.unwrap_or(Suite::All)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut present = BTreeSet::new();
        if self.n.is_some() && self.n_grid.is_some() {
            errs.push("give either n or n_grid, not both".to_string());
        }
        if self.c.is_some() && self.beta.is_some() {
            errs.push("give either c or beta, not both".to_string());
        }
        for n in self.n_values() {
            if n < 2 {
                errs.push(format!("n = {n} must be at least 2"));
            }
        }
        if let Some(g) = &self.n_grid {
            if g.is_empty() {
                errs.push("n_grid is empty".into());
            }
            if g.windows(2).any(|w| w[0] >= w[1]) {
                errs.push("n_grid must be strictly ascending".into());
            }
        }
        for (name, v) in [("c", self.c), ("beta", self.beta), ("rho", self.rho)] {
            if let Some(x) = v {
                present.insert(name);
                if !(x > 0.0 && x.is_finite()) {
                    errs.push(format!("{name} must be positive and finite"));
                }
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                errs.push("gamma must lie in (0, 1)".into());
            }
        }
        for (name, v) in [("margin", self.margin), ("s", self.s)] {
            if let Some(x) = v {
                if !(x >= 0.0 && x.is_finite()) {
                    errs.push(format!("{name} must be non-negative"));
                }
            }
        }
        if let Some(t) = self.theta {
            if !t.is_finite() {
                errs.push("theta must be finite".into());
            }
        }
        if let Some(g) = &self.l_grid {
            if g.is_empty() || g.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                errs.push("l_grid must be a non-empty list of positive numbers".into());
            }
            if g.windows(2).any(|w| w[0] >= w[1]) {
                errs.push("l_grid must be strictly ascending".into());
            }
        }
        if let Some(v) = &self.l_values {
            if v.iter().any(|l| !l.is_finite()) {
                errs.push("l_values must be finite".into());
            }
        }
        if self.seeds == 0 {
            errs.push("seeds must be at least 1".into());
        }
        if self.sweeps == Some(0) {
            errs.push("sweeps must be at least 1".into());
        }
        if let Err(e) = self.potential.build() {
            errs.push(e.to_string());
        }
        let has_n = !self.n_values().is_empty();
        let has_temp = self.c.is_some() || self.beta.is_some();
        match self.command {
            Command::Sample => {
                if !has_n {
                    errs.push("sample needs n or n_grid".into());
                }
                if !has_temp {
                    errs.push("sample needs c or beta".into());
                }
            }
            Command::Fekete => {
                if !has_n {
                    errs.push("fekete needs n or n_grid".into());
                }
                if has_temp {
                    errs.push("fekete configurations have no temperature; drop c/beta".into());
                }
            }
            Command::Kernel | Command::Concentrate => {
                if !has_n {
                    errs.push(format!("{} needs n or n_grid (the space order)", self.command.name()));
                }
            }
            Command::Stats => match (&self.inputs, self.family) {
                (Some(_), Some(_)) => errs.push("stats takes either inputs or a generated family".into()),
                (Some(i), None) if i.is_empty() => errs.push("stats inputs are empty".into()),
                (Some(_), None) => {}
                (None, fam) => {
                    if !has_n {
                        errs.push("stats without inputs needs n or n_grid".into());
                    }
                    match fam.unwrap_or(Family::Gibbs) {
                        Family::Gibbs if !has_temp => errs.push("a gibbs family needs c or beta".into()),
                        Family::Fekete if has_temp => errs.push("a fekete family has no temperature".into()),
                        _ => {}
                    }
                }
            },
            Command::Verify | Command::Report => {}
        }
        if self.command == Command::Report && self.inputs.is_none() {
            errs.push("report needs inputs (run directories)".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(errs.join("; ")))
        }
    }

    /// A small working configuration for `command`.
    pub fn template(command: Command) -> Self {
        let mut cfg = RunConfig {
            command,
            potential: PotentialSpec::Ginibre,
            n: None,
            n_grid: None,
            c: None,
            beta: None,
            seeds: 1,
            seed: 0,
            sweeps: None,
            l_grid: None,
            l_values: None,
            rho: None,
            gamma: None,
            margin: None,
            regime: None,
            theta: None,
            zoom: None,
            s: None,
            family: None,
            suite: None,
            inputs: None,
            output: None,
            plots: true,
        };
        match command {
            Command::Sample => {
                cfg.n = Some(64);
                cfg.c = Some(4.0);
                cfg.seeds = 4;
                cfg.sweeps = Some(1000);
            }
            Command::Fekete => cfg.n_grid = Some(vec![128, 256]),
            Command::Kernel => {
                cfg.n = Some(256);
                cfg.l_values = Some(vec![-2.0, 0.0, 1.0]);
            }
            Command::Concentrate => {
                cfg.n = Some(256);
                cfg.l_grid = Some(vec![2.0, 4.0, 6.0]);
                cfg.regime = Some(Regime::Bulk);
                cfg.rho = Some(1.0);
            }
            Command::Verify => cfg.suite = Some(Suite::All),
            Command::Stats => {
                cfg.n_grid = Some(vec![64, 128]);
                cfg.c = Some(4.0);
                cfg.seeds = 4;
                cfg.sweeps = Some(500);
                cfg.family = Some(Family::Gibbs);
            }
            Command::Report => cfg.inputs = Some(Vec::new()),
        }
        cfg
    }
}
