//! Run configurations. Each command resolves defaults, then an optional JSON
//! file (`--config`), then command-line flags. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hfprec_core::{GridOptions, LambdaMaxScale, Method, Penalty};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScaleArg {
    #[default]
    Covariance,
    Correlation,
}

impl From<ScaleArg> for LambdaMaxScale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Covariance => LambdaMaxScale::Covariance,
            ScaleArg::Correlation => LambdaMaxScale::Correlation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyArg {
    #[default]
    Weighted,
    Unweighted,
}

impl From<PenaltyArg> for Penalty {
    fn from(p: PenaltyArg) -> Self {
        match p {
            PenaltyArg::Weighted => Penalty::Weighted,
            PenaltyArg::Unweighted => Penalty::Unweighted,
        }
    }
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn check(cond: bool, msg: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Input(msg.to_string()))
    }
}

// ---------------------------------------------------------------------------
// estimate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub y: Option<PathBuf>,
    pub x: Option<PathBuf>,
    /// Panel files hold returns rather than levels.
    pub returns: bool,
    pub m: usize,
    pub epsilon: Option<f64>,
    pub lambda_scale: ScaleArg,
    pub penalty: PenaltyArg,
    /// Fixed penalty; skips the BIC search.
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            y: None,
            x: None,
            returns: false,
            m: 10,
            epsilon: None,
            lambda_scale: ScaleArg::Covariance,
            penalty: PenaltyArg::Weighted,
            lambda: None,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

impl EstimateConfig {
    pub fn grid(&self) -> GridOptions {
        GridOptions {
            m: self.m,
            epsilon: self.epsilon,
            scale: self.lambda_scale.into(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        check(self.y.is_some(), "missing --y")?;
        check(self.m >= 1, "m must be at least 1")?;
        check(self.epsilon.is_none_or(|e| e > 0.0 && e < 1.0), "epsilon must lie in (0, 1)")?;
        check(self.lambda.is_none_or(|l| l > 0.0 && l.is_finite()), "lambda must be positive")?;
        check(self.tol > 0.0 && self.tol.is_finite(), "tol must be positive")?;
        check(self.max_iter >= 1, "max_iter must be at least 1")
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct EstimateFlags {
    /// Asset panel CSV.
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Factor panel CSV; omit for no factor adjustment.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Treat panel values as returns and cumulate them.
    #[arg(long)]
    pub returns: bool,
    /// Number of grid points.
    #[arg(long)]
    pub m: Option<usize>,
    /// Ratio λ_min / λ_max.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub lambda_scale: Option<ScaleArg>,
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyArg>,
    /// Fixed penalty instead of BIC selection.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl EstimateFlags {
    pub fn apply(&self, cfg: &mut EstimateConfig) {
        if self.y.is_some() {
            cfg.y.clone_from(&self.y);
        }
        if self.x.is_some() {
            cfg.x.clone_from(&self.x);
        }
        cfg.returns |= self.returns;
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if self.epsilon.is_some() {
            cfg.epsilon = self.epsilon;
        }
        if let Some(v) = self.lambda_scale {
            cfg.lambda_scale = v;
        }
        if let Some(v) = self.penalty {
            cfg.penalty = v;
        }
        if self.lambda.is_some() {
            cfg.lambda = self.lambda;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
    }
}

// ---------------------------------------------------------------------------
// infer

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub estimate: EstimateConfig,
    /// `"i,j;k,l"`, 1-based. `None` means every pair `i ≤ j`.
    pub pairs: Option<String>,
    pub level: f64,
    /// Multiplier draws for the simultaneous band; 0 disables it.
    pub draws: usize,
    pub seed: u64,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            estimate: EstimateConfig::default(),
            pairs: None,
            level: 0.95,
            draws: 0,
            seed: 0,
        }
    }
}

impl InferConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.estimate.validate()?;
        check(self.level > 0.0 && self.level < 1.0, "level must lie in (0, 1)")?;
        check(self.draws == 0 || self.draws >= 100, "draws must be 0 or at least 100")
    }
}

/// Parses `"1,2;3,4"` into 0-based pairs, checking them against `d`.
pub fn parse_pairs(s: &str, d: usize) -> Result<Vec<(usize, usize)>, CliError> {
    let mut out = Vec::new();
    for item in s.split(';').map(str::trim).filter(|t| !t.is_empty()) {
        let parts: Vec<&str> = item.split(',').map(str::trim).collect();
        let bad = || CliError::Input(format!("bad pair '{item}': expected 'i,j' with 1 ≤ i, j ≤ {d}"));
        if parts.len() != 2 {
            return Err(bad());
        }
        let i: usize = parts[0].parse().map_err(|_| bad())?;
        let j: usize = parts[1].parse().map_err(|_| bad())?;
        if i == 0 || j == 0 || i > d || j > d {
            return Err(bad());
        }
        out.push((i - 1, j - 1));
    }
    if out.is_empty() {
        return Err(CliError::Input("no pairs given".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, Args)]
pub struct InferFlags {
    /// Entries to test, 1-based: "1,2;3,4".
    #[arg(long)]
    pub pairs: Option<String>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Multiplier draws for a simultaneous band (0 disables).
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl InferFlags {
    pub fn apply(&self, cfg: &mut InferConfig) {
        if self.pairs.is_some() {
            cfg.pairs.clone_from(&self.pairs);
        }
        if let Some(v) = self.level {
            cfg.level = v;
        }
        if let Some(v) = self.draws {
            cfg.draws = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
    }
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// 1 (block-equicorrelated residuals) or 2 (Chung–Lu graph).
    pub design: u8,
    pub d: usize,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub levels: Vec<f64>,
    pub alpha: f64,
    pub literal_covariance: bool,
    pub substeps: usize,
    pub m: usize,
    pub epsilon: Option<f64>,
    pub lambda_scale: ScaleArg,
    pub tol: f64,
    pub max_iter: usize,
    /// Also write the panels and truth of replication 0.
    pub emit_panels: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            design: 1,
            d: 40,
            n: 390,
            reps: 100,
            seed: 0,
            methods: Method::ALL.to_vec(),
            levels: vec![0.95, 0.99],
            alpha: 2.5,
            literal_covariance: false,
            substeps: 10,
            m: 10,
            epsilon: None,
            lambda_scale: ScaleArg::Covariance,
            tol: 1e-6,
            max_iter: 1000,
            emit_panels: false,
        }
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check(self.design == 1 || self.design == 2, "design must be 1 or 2")?;
        check(!self.methods.is_empty(), "no methods selected")?;
        check(self.levels.iter().all(|&l| l > 0.0 && l < 1.0), "levels must lie in (0, 1)")?;
        check(self.epsilon.is_none_or(|e| e > 0.0 && e < 1.0), "epsilon must lie in (0, 1)")
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateFlags {
    /// Residual design: 1 or 2.
    #[arg(long)]
    pub design: Option<u8>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated: rc,glasso,wglasso,f-glasso,f-wglasso,f-thr.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Comma-separated coverage levels.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Chung–Lu power-law exponent (design 2).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Read the design-2 graph matrix as the residual covariance.
    #[arg(long)]
    pub literal_covariance: bool,
    /// Euler substeps per observation interval.
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub lambda_scale: Option<ScaleArg>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub emit_panels: bool,
}

impl SimulateFlags {
    pub fn apply(&self, cfg: &mut SimulateConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f.clone() {
                    cfg.$f = v;
                }
            )*};
        }
        set!(design, d, n, reps, seed, methods, levels, alpha, substeps, m, lambda_scale, tol, max_iter);
        if self.epsilon.is_some() {
            cfg.epsilon = self.epsilon;
        }
        cfg.literal_covariance |= self.literal_covariance;
        cfg.emit_panels |= self.emit_panels;
    }
}

// ---------------------------------------------------------------------------
// bench

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub n: usize,
    /// Timed repetitions per dimension; the minimum is reported.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dims: vec![10, 20, 40, 80],
            n: 390,
            repeats: 3,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check(!self.dims.is_empty() && self.dims.iter().all(|&d| d >= 2), "dims must be at least 2")?;
        check(self.repeats >= 1, "repeats must be at least 1")
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct BenchFlags {
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl BenchFlags {
    pub fn apply(&self, cfg: &mut BenchConfig) {
        if let Some(v) = self.dims.clone() {
            cfg.dims = v;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
    }
}
