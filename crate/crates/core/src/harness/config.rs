//! Flat `key = value` configuration with command-line overrides.
//!
//! ```text
//! problem    = anisotropic        # or diffusion, or a name for a described problem
//! method     = ercm
//! nx         = 40
//! train_grid = 32x32
//! nmax       = 17
//! tol        = 1e-8
//! seed       = 1                 # greedy first pick
//! test_seed  = 2                 # study samples
//! samples    = 200
//!
//! # a described problem: terms are `<tag> | <coefficient in mu1..mud>`
//! domain = 0.1:4, 0:2
//! op.1   = dxx      | -1
//! op.2   = dyy      | -mu1
//! op.3   = identity | -mu2
//! rhs.1  = -10.0 * math::sin(8.0 * x * (y - 1.0)) | 1
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{AffineProblem, CustomProblem, ProblemSpec, RhsDecl, TermDecl};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lsrcm,
    Ercm,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "lsrcm" => Ok(Method::Lsrcm),
            "ercm" => Ok(Method::Ercm),
            other => Err(Error::Config(format!("unknown method `{other}` (expected lsrcm or ercm)"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Lsrcm => "lsrcm",
            Method::Ercm => "ercm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub problem: String,
    pub custom: Option<CustomProblem>,
    pub method: Method,
    /// Truth grid order; deliberately has no default.
    pub nx: Option<usize>,
    pub train_grid: Vec<usize>,
    pub n_max: usize,
    pub tol: f64,
    /// Greedy first-pick seed.
    pub seed: u64,
    /// Seed for test-parameter sampling in the studies.
    pub test_seed: u64,
    pub samples: usize,
    pub mu: Vec<f64>,
    pub nx_list: Vec<usize>,
    pub ref_nx: usize,
    pub repetitions: usize,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            problem: "anisotropic".into(),
            custom: None,
            method: Method::Ercm,
            nx: None,
            train_grid: vec![32, 32],
            n_max: 17,
            tol: 1e-8,
            seed: 1,
            test_seed: 2,
            samples: 200,
            mu: vec![1.0, 0.5],
            nx_list: (12..=48).step_by(4).collect(),
            ref_nx: 80,
            repetitions: 200,
            model: None,
            out: None,
        }
    }
}

/// `AxB` (or `A,B`, `AxBxC`) into counts.
pub fn parse_grid(s: &str) -> Result<Vec<usize>> {
    s.split(['x', 'X', ','])
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid training grid `{s}` (expected e.g. 32x32)")))
        })
        .collect()
}

pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("invalid {what} `{s}`")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
}

fn parse_bounds(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(|iv| {
            let (lo, hi) = iv
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("invalid interval `{iv}` (expected lo:hi)")))?;
            Ok((parse_one("domain", lo)?, parse_one("domain", hi)?))
        })
        .collect()
}

fn split_decl(key: &str, v: &str) -> Result<(String, String)> {
    let (a, b) = v
        .split_once('|')
        .ok_or_else(|| Error::Config(format!("`{key}` needs the form `<term> | <coefficient>`")))?;
    Ok((a.trim().to_string(), b.trim().to_string()))
}

impl StudyConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str_config(&text)
    }

    pub fn from_str_config(text: &str) -> Result<Self> {
        let mut cfg = StudyConfig::default();
        let mut ops = BTreeMap::new();
        let mut rhs = BTreeMap::new();
        let mut bounds = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(k) = key.strip_prefix("op.") {
                ops.insert(parse_one::<usize>(key, k)?, split_decl(key, value)?);
                continue;
            }
            if let Some(k) = key.strip_prefix("rhs.") {
                rhs.insert(parse_one::<usize>(key, k)?, split_decl(key, value)?);
                continue;
            }
            cfg.set(key, value)?;
            if key == "domain" {
                bounds = Some(parse_bounds(value)?);
            }
        }
        if !ops.is_empty() || !rhs.is_empty() {
            let bounds = bounds.ok_or_else(|| Error::Config("a described problem needs `domain`".into()))?;
            cfg.custom = Some(CustomProblem {
                name: cfg.problem.clone(),
                nx: cfg.nx.unwrap_or(0),
                train: cfg.train_grid.clone(),
                bounds,
                terms: ops
                    .into_values()
                    .map(|(op, coefficient)| TermDecl { op, coefficient })
                    .collect(),
                rhs: rhs
                    .into_values()
                    .map(|(source, coefficient)| RhsDecl { source, coefficient })
                    .collect(),
            });
        }
        Ok(cfg)
    }

    /// Apply a single `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "problem" => self.problem = value.to_string(),
            "method" => self.method = Method::parse(value)?,
            "nx" => self.nx = Some(parse_one(key, value)?),
            "train_grid" | "train-grid" => self.train_grid = parse_grid(value)?,
            "nmax" | "n_max" => self.n_max = parse_one(key, value)?,
            "tol" => self.tol = parse_one(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "test_seed" | "test-seed" => self.test_seed = parse_one(key, value)?,
            "samples" => self.samples = parse_one(key, value)?,
            "mu" => self.mu = parse_list(value, "parameter")?,
            "nx_list" | "nx-list" => self.nx_list = parse_list(value, "order list")?,
            "ref_nx" | "ref-nx" => self.ref_nx = parse_one(key, value)?,
            "reps" | "repetitions" => self.repetitions = parse_one(key, value)?,
            "model" => self.model = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "domain" => {}
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Checks shared by every command.
    pub fn validate(&self) -> Result<()> {
        if self.custom.is_none() && !matches!(self.problem.as_str(), "diffusion" | "anisotropic") {
            return Err(Error::Config(format!(
                "unknown problem `{}` (expected diffusion or anisotropic, or a described problem)",
                self.problem
            )));
        }
        if let Some(nx) = self.nx {
            if nx < 4 {
                return Err(Error::Config(format!("nx must be at least 4, got {nx}")));
            }
        }
        if self.n_max == 0 {
            return Err(Error::Config("nmax must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tol must be non-negative, got {}", self.tol)));
        }
        if self.train_grid.is_empty() || self.train_grid.contains(&0) {
            return Err(Error::Config("training grid counts must be positive".into()));
        }
        if self.samples == 0 || self.repetitions == 0 {
            return Err(Error::Config("samples and reps must be positive".into()));
        }
        if self.nx_list.iter().any(|&n| n < 4) {
            return Err(Error::Config("every order in nx_list must be at least 4".into()));
        }
        Ok(())
    }

    pub fn require_nx(&self) -> Result<usize> {
        self.nx
            .ok_or_else(|| Error::Config("the truth grid order is required (--nx or `nx =`)".into()))
    }

    pub fn problem_spec(&self, nx: usize) -> Result<ProblemSpec> {
        if let Some(c) = &self.custom {
            let mut c = c.clone();
            c.nx = nx;
            c.train = self.train_grid.clone();
            return Ok(ProblemSpec::Custom(c));
        }
        match self.problem.as_str() {
            "diffusion" => Ok(ProblemSpec::Diffusion {
                nx,
                train: self.train_grid.clone(),
            }),
            "anisotropic" => Ok(ProblemSpec::Anisotropic {
                nx,
                train: self.train_grid.clone(),
            }),
            other => Err(Error::Config(format!("unknown problem `{other}`"))),
        }
    }

    pub fn build_problem(&self) -> Result<AffineProblem> {
        self.validate()?;
        AffineProblem::from_spec(&self.problem_spec(self.require_nx()?)?)
    }

    /// One-line JSON echo embedded in every output.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let cfg = StudyConfig::from_str_config(
            "problem = diffusion\nmethod = lsrcm # trailing\nnx = 24\ntrain_grid = 8x6\nnmax=5\ntol = 1e-6\n",
        )
        .unwrap();
        assert_eq!(cfg.problem, "diffusion");
        assert_eq!(cfg.method, Method::Lsrcm);
        assert_eq!(cfg.nx, Some(24));
        assert_eq!(cfg.train_grid, vec![8, 6]);
        assert_eq!(cfg.n_max, 5);
        assert_eq!(cfg.tol, 1e-6);
        let p = cfg.build_problem().unwrap();
        assert_eq!(p.domain().train_counts, vec![8, 6]);
    }

    #[test]
    fn described_problem() {
        let cfg = StudyConfig::from_str_config(
            "problem = wave\nnx = 10\ntrain_grid = 4x3\ndomain = 0.1:4, 0:2\n\
             op.1 = dxx | -1\nop.2 = dyy | -mu1\nop.3 = identity | -mu2\n\
             rhs.1 = -10.0 * math::sin(8.0 * x * (y - 1.0)) | 1\n",
        )
        .unwrap();
        let custom = cfg.build_problem().unwrap();
        let builtin = crate::problem::build_anisotropic(10).unwrap();
        let mu = [1.3, 0.7].into();
        let diff = &custom.operator_at(&mu).unwrap() - &builtin.operator_at(&mu).unwrap();
        assert!(diff.norm_l2() < 1e-12);
        assert_eq!(custom.rhs_at(&mu).unwrap(), builtin.rhs_at(&mu).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(StudyConfig::from_str_config("nx = many").is_err());
        assert!(StudyConfig::from_str_config("colour = blue").is_err());
        assert!(StudyConfig::from_str_config("op.1 = dxx | 1").is_err());
        let cfg = StudyConfig::from_str_config("problem = heat").unwrap();
        assert_eq!(cfg.validate().unwrap_err().kind(), "config");
        let cfg = StudyConfig::default();
        assert!(cfg.build_problem().is_err());
        assert_eq!(parse_grid("64x64").unwrap(), vec![64, 64]);
        assert!(parse_grid("64by64").is_err());
    }
}
