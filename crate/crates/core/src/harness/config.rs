//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! mesh_h = 1/3
//! final_time = 20
//! steps = 50
//! ```
//!
//! `dt` may be given; it must then agree with `final_time / steps`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::construction::{GreedyMode, GrowthPolicy, Weighting, DEFAULT_MAX_BASIS};
use crate::error::{Error, Result};
use crate::solvers::COERCIVITY_LOWER_BOUND;
use crate::stochastics::{
    DensityModel, BETA_SHAPE, BETA_SUPPORT, DEFAULT_KL_TERMS, KL_CORRELATION_LENGTH, KL_MEAN, UNIFORM_HALF_WIDTH,
};

const TIME_GRID_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Small enough for CI: about 300 nodes, `K = 50`, 100 training and MC samples.
    Coarse,
    /// The benchmark at full size.
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coarse" => Ok(Profile::Coarse),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::InvalidInput(format!("unknown profile `{s}` (coarse|paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mesh_h: f64,
    pub final_time: f64,
    pub steps: usize,
    /// Explicit time step; `None` means `final_time / steps`.
    pub dt: Option<f64>,
    pub kl_terms: usize,
    pub correlation_length: f64,
    pub kl_mean: f64,
    pub density: DensityModel,
    pub alpha_bar: f64,
    pub training_size: usize,
    pub mc_samples: usize,
    pub max_basis: usize,
    pub tolerance: Option<f64>,
    pub seed_train: u64,
    pub seed_mc: u64,
    pub mode: GreedyMode,
    pub weighting: Weighting,
    pub policy: GrowthPolicy,
    pub output_dir: PathBuf,
    /// Write wall-clock seconds into greedy traces (breaks byte-identical reruns).
    pub record_timings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ExperimentConfig {
    pub fn paper() -> Self {
        Self {
            mesh_h: 1.0 / 6.0,
            final_time: 20.0,
            steps: 100,
            dt: None,
            kl_terms: DEFAULT_KL_TERMS,
            correlation_length: KL_CORRELATION_LENGTH,
            kl_mean: KL_MEAN,
            density: DensityModel {
                uniform_half_width: UNIFORM_HALF_WIDTH,
                beta_support: BETA_SUPPORT,
                beta_shape: BETA_SHAPE,
            },
            alpha_bar: COERCIVITY_LOWER_BOUND,
            training_size: 500,
            mc_samples: 500,
            max_basis: DEFAULT_MAX_BASIS,
            tolerance: None,
            seed_train: 1,
            seed_mc: 2,
            mode: GreedyMode::Primal,
            weighting: Weighting::Uniform,
            policy: GrowthPolicy::Both,
            output_dir: PathBuf::from("out"),
            record_timings: false,
        }
    }

    pub fn coarse() -> Self {
        Self {
            mesh_h: 1.0 / 3.0,
            steps: 50,
            training_size: 100,
            mc_samples: 100,
            max_basis: 15,
            ..Self::paper()
        }
    }

    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Coarse => Self::coarse(),
            Profile::Paper => Self::paper(),
        }
    }

    pub fn time_step(&self) -> f64 {
        self.dt.unwrap_or(self.final_time / self.steps as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.mesh_h > 0.0 && self.mesh_h <= 1.0) {
            return bad(format!("mesh_h = {} must lie in (0, 1]", self.mesh_h));
        }
        if !(self.final_time > 0.0) || self.steps == 0 {
            return bad("final_time must be positive and steps at least 1".into());
        }
        let dt = self.time_step();
        if !(dt > 0.0)
            || (dt * self.steps as f64 - self.final_time).abs() > TIME_GRID_TOLERANCE * self.final_time.max(1.0)
        {
            return bad(format!(
                "dt * steps = {} does not equal final_time = {}",
                dt * self.steps as f64,
                self.final_time
            ));
        }
        if self.kl_terms == 0 {
            return bad("kl_terms must be at least 1".into());
        }
        if !(self.correlation_length > 0.0) || !(self.kl_mean > 0.0) || !(self.alpha_bar > 0.0) {
            return bad("correlation_length, kl_mean and alpha_bar must be positive".into());
        }
        let d = &self.density;
        if !(d.uniform_half_width > 0.0)
            || !(d.beta_support.0 > 0.0 && d.beta_support.1 > d.beta_support.0)
            || !(d.beta_shape.0 > 0.0 && d.beta_shape.1 > 0.0)
        {
            return bad("distribution parameters are out of range".into());
        }
        if self.training_size == 0 || self.mc_samples == 0 || self.max_basis == 0 {
            return bad("training_size, mc_samples and max_basis must be positive".into());
        }
        if self.tolerance.is_some_and(|t| !(t >= 0.0)) {
            return bad("tolerance must be nonnegative".into());
        }
        Ok(())
    }

    /// Sets one key from its text form.
    pub fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse `{v}`"))
        }
        match key {
            "mesh_h" => self.mesh_h = parse_fraction(value)?,
            "final_time" => self.final_time = num(value)?,
            "steps" => self.steps = num(value)?,
            "dt" => self.dt = Some(num(value)?),
            "kl_terms" => self.kl_terms = num(value)?,
            "correlation_length" => self.correlation_length = num(value)?,
            "kl_mean" => self.kl_mean = num(value)?,
            "uniform_half_width" => self.density.uniform_half_width = parse_fraction(value)?,
            "beta_lower" => self.density.beta_support.0 = num(value)?,
            "beta_upper" => self.density.beta_support.1 = num(value)?,
            "beta_shape_a" => self.density.beta_shape.0 = num(value)?,
            "beta_shape_b" => self.density.beta_shape.1 = num(value)?,
            "alpha_bar" => self.alpha_bar = num(value)?,
            "training_size" => self.training_size = num(value)?,
            "mc_samples" => self.mc_samples = num(value)?,
            "max_basis" => self.max_basis = num(value)?,
            "tolerance" => {
                self.tolerance = match value {
                    "none" => None,
                    v => Some(num(v)?),
                }
            }
            "seed_train" => self.seed_train = num(value)?,
            "seed_mc" => self.seed_mc = num(value)?,
            "mode" => {
                self.mode = match value {
                    "primal" => GreedyMode::Primal,
                    "output" => GreedyMode::Output,
                    _ => return Err(format!("mode must be primal or output, got `{value}`")),
                }
            }
            "weighting" => {
                self.weighting = match value {
                    "uniform" => Weighting::Uniform,
                    "pdf" => Weighting::Pdf,
                    _ => return Err(format!("weighting must be uniform or pdf, got `{value}`")),
                }
            }
            "policy" => {
                self.policy = match value {
                    "both" => GrowthPolicy::Both,
                    "alternate" => GrowthPolicy::Alternate,
                    _ => return Err(format!("policy must be both or alternate, got `{value}`")),
                }
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "record_timings" => self.record_timings = num(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Applies `key=value` text on top of `self`, reporting errors with
    /// their line number in `origin`.
    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let err = |message: String| Error::Config {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            self.apply(key, value).map_err(err)?;
        }
        self.validate().map_err(|e| Error::Config {
            path: origin.to_string(),
            line: 0,
            message: e.to_string(),
        })
    }

    /// Reads a file on top of a profile.
    pub fn load(path: &Path, base: Profile) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::profile(base);
        config.merge_text(&text, &path.display().to_string())?;
        Ok(config)
    }

    /// Text form that [`merge_text`](Self::merge_text) reads back exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let d = &self.density;
        let mode = match self.mode {
            GreedyMode::Primal => "primal",
            GreedyMode::Output => "output",
        };
        let weighting = match self.weighting {
            Weighting::Uniform => "uniform",
            Weighting::Pdf => "pdf",
        };
        let policy = match self.policy {
            GrowthPolicy::Both => "both",
            GrowthPolicy::Alternate => "alternate",
        };
        let mut line = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("writing to a String");
        line("mesh_h", format!("{:?}", self.mesh_h));
        line("final_time", format!("{:?}", self.final_time));
        line("steps", self.steps.to_string());
        if let Some(dt) = self.dt {
            line("dt", format!("{dt:?}"));
        }
        line("kl_terms", self.kl_terms.to_string());
        line("correlation_length", format!("{:?}", self.correlation_length));
        line("kl_mean", format!("{:?}", self.kl_mean));
        line("uniform_half_width", format!("{:?}", d.uniform_half_width));
        line("beta_lower", format!("{:?}", d.beta_support.0));
        line("beta_upper", format!("{:?}", d.beta_support.1));
        line("beta_shape_a", format!("{:?}", d.beta_shape.0));
        line("beta_shape_b", format!("{:?}", d.beta_shape.1));
        line("alpha_bar", format!("{:?}", self.alpha_bar));
        line("training_size", self.training_size.to_string());
        line("mc_samples", self.mc_samples.to_string());
        line("max_basis", self.max_basis.to_string());
        line("tolerance", self.tolerance.map_or("none".into(), |t| format!("{t:?}")));
        line("seed_train", self.seed_train.to_string());
        line("seed_mc", self.seed_mc.to_string());
        line("mode", mode.into());
        line("weighting", weighting.into());
        line("policy", policy.into());
        line("output_dir", self.output_dir.display().to_string());
        line("record_timings", self.record_timings.to_string());
        s
    }
}

/// Decimal or `p/q`.
fn parse_fraction(v: &str) -> std::result::Result<f64, String> {
    let err = || format!("cannot parse `{v}`");
    match v.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| err())?;
            let q: f64 = q.trim().parse().map_err(|_| err())?;
            Ok(p / q)
        }
        None => v.parse().map_err(|_| err()),
    }
}
