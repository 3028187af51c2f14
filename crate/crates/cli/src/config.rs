//! Run configuration, read from TOML. Every field has a default, so an empty
//! file (or no file) is a valid configuration.
//!
//! ```toml
//! out = "out"
//!
//! [extractor]
//! spec = "reference"        # or a path to a spec text file
//! weights_seed = 42         # ignored when weights_file is set
//! # weights_file = "w.dmtw"
//!
//! [traversal]
//! sigma = "median"          # or a number
//! lambdas = [1e-2, 1e-3, 1e-4]
//! lambda_scale = "per_sigma" # or "absolute"
//!
//! [reconstruct]
//! lambda_tv = 0.001
//! beta = 2.0
//! init = "source"           # or "mid_gray"
//!
//! [solver]
//! max_iters = 500
//!
//! [evaluate]
//! c_reg = 1.0
//! adversarial_max_iters = 200
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use dmt_core::features::{init_weights, read_weights, ExtractorSpec, WeightSet};
use dmt_core::optim::{LineSearchConfig, MinimizeConfig};
use dmt_core::{Error, KernelConfig, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    pub extractor: ExtractorConfig,
    pub traversal: TraversalSection,
    pub reconstruct: ReconstructSection,
    pub solver: SolverSection,
    pub evaluate: EvaluateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            extractor: ExtractorConfig::default(),
            traversal: TraversalSection::default(),
            reconstruct: ReconstructSection::default(),
            solver: SolverSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    pub spec: String,
    pub weights_seed: u64,
    pub weights_file: Option<PathBuf>,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            spec: "reference".into(),
            weights_seed: 42,
            weights_file: None,
        }
    }
}

/// `"median"` or an explicit positive width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    Median,
    Value(f64),
}

impl Sigma {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "median" {
            return Ok(Sigma::Median);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Sigma::Value(v)),
            _ => Err(Error::InvalidInput(format!("sigma must be \"median\" or a positive number, got {s:?}"))),
        }
    }

    pub fn kernel(self) -> KernelConfig {
        match self {
            Sigma::Median => KernelConfig::MedianHeuristic,
            Sigma::Value(v) => KernelConfig::Explicit(v),
        }
    }
}

impl Serialize for Sigma {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Sigma::Median => s.serialize_str("median"),
            Sigma::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Sigma {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Name(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(v) => Sigma::parse(&v.to_string()),
            Raw::Int(v) => Sigma::parse(&v.to_string()),
            Raw::Name(s) => Sigma::parse(&s),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaScale {
    Absolute,
    /// Each configured value is divided by the resolved σ.
    PerSigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraversalSection {
    pub sigma: Sigma,
    pub lambdas: Vec<f64>,
    pub lambda_scale: LambdaScale,
    /// Also solve each λ from the target mean and keep the better result.
    pub target_restart: bool,
}

impl Default for TraversalSection {
    fn default() -> Self {
        Self {
            sigma: Sigma::Median,
            lambdas: vec![1e-2, 1e-3, 1e-4],
            lambda_scale: LambdaScale::PerSigma,
            target_restart: true,
        }
    }
}

impl TraversalSection {
    pub fn resolve_lambdas(&self, sigma: f64) -> Vec<f64> {
        match self.lambda_scale {
            LambdaScale::Absolute => self.lambdas.clone(),
            LambdaScale::PerSigma => self.lambdas.iter().map(|l| l / sigma).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitChoice {
    Source,
    MidGray,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructSection {
    pub lambda_tv: f64,
    pub beta: f64,
    pub init: InitChoice,
}

impl Default for ReconstructSection {
    fn default() -> Self {
        Self {
            lambda_tv: 0.001,
            beta: 2.0,
            init: InitChoice::Source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub history_size: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = MinimizeConfig::default();
        Self {
            max_iters: d.max_iters,
            grad_tol: d.grad_tol,
            step_tol: d.step_tol,
            history_size: d.history_size,
        }
    }
}

impl SolverSection {
    pub fn minimize_config(&self) -> MinimizeConfig {
        MinimizeConfig {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            step_tol: self.step_tol,
            history_size: self.history_size,
            line_search: LineSearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub c_reg: f64,
    pub adversarial_max_iters: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            c_reg: 1.0,
            adversarial_max_iters: 200,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from a file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display()))?;
        let mut cfg = Self::parse(&text).map_err(|e| e.context(path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.out = base.join(&cfg.out);
        if let Some(w) = &cfg.extractor.weights_file {
            cfg.extractor.weights_file = Some(base.join(w));
        }
        if !is_builtin(&cfg.extractor.spec) {
            cfg.extractor.spec = base.join(&cfg.extractor.spec).display().to_string();
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.minimize_config().validate()?;
        if self.traversal.lambdas.is_empty() {
            return Err(Error::InvalidInput("config: traversal.lambdas is empty".into()));
        }
        if !(self.reconstruct.lambda_tv >= 0.0) {
            return Err(Error::InvalidInput("config: reconstruct.lambda_tv must be >= 0".into()));
        }
        if !(self.reconstruct.beta > 0.0) {
            return Err(Error::InvalidInput("config: reconstruct.beta must be > 0".into()));
        }
        if !(self.evaluate.c_reg > 0.0) {
            return Err(Error::InvalidInput("config: evaluate.c_reg must be > 0".into()));
        }
        if self.evaluate.adversarial_max_iters == 0 {
            return Err(Error::InvalidInput("config: evaluate.adversarial_max_iters must be > 0".into()));
        }
        Ok(())
    }

    /// The extractor spec and weights this configuration names.
    pub fn extractor(&self) -> Result<(ExtractorSpec, WeightSet)> {
        if let Some(path) = &self.extractor.weights_file {
            let file = fs::File::open(path).map_err(|e| Error::from(e).context(path.display()))?;
            let (spec, weights) =
                read_weights(std::io::BufReader::new(file)).map_err(|e| e.context(path.display()))?;
            if self.extractor.spec != "reference" && resolve_spec(&self.extractor.spec)? != spec {
                return Err(Error::InvalidInput(format!(
                    "weights file {} was written for a different extractor spec",
                    path.display()
                )));
            }
            return Ok((spec, weights));
        }
        let spec = resolve_spec(&self.extractor.spec)?;
        let weights = init_weights(&spec, self.extractor.weights_seed);
        Ok((spec, weights))
    }
}

fn is_builtin(name: &str) -> bool {
    name == "reference" || name.starts_with("identity:")
}

/// `reference`, `identity:HxWxC`, or a spec text file.
pub fn resolve_spec(name: &str) -> Result<ExtractorSpec> {
    if name == "reference" {
        return Ok(ExtractorSpec::reference());
    }
    if let Some(dims) = name.strip_prefix("identity:") {
        let parts: Vec<usize> = dims
            .split('x')
            .map(|p| p.parse().map_err(|_| Error::InvalidInput(format!("bad identity spec {name:?}"))))
            .collect::<Result<_>>()?;
        return match parts.as_slice() {
            &[h, w, c] => ExtractorSpec::identity(h, w, c),
            _ => Err(Error::InvalidInput(format!("identity spec needs HxWxC, got {name:?}"))),
        };
    }
    let path = Path::new(name);
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display()))?;
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect();
    ExtractorSpec::from_lines(&lines).map_err(|e| e.context(path.display()))
}
