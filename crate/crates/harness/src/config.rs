//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment; lists are comma-separated.
//! Unknown keys are errors. Every key has an experiment-specific default.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use emlmc_core::agfem::PenaltyScaling;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key '{key}' given twice")]
    Duplicate { line: usize, key: String },
    #[error("bad value for '{key}': '{value}' ({reason})")]
    Value { key: String, value: String, reason: String },
    #[error("missing key 'experiment'")]
    MissingExperiment,
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    CircleConvergence,
    PopcornRobustness,
    TwoHolesFlux,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::CircleConvergence => "circle_convergence",
            Experiment::PopcornRobustness => "popcorn_robustness",
            Experiment::TwoHolesFlux => "two_holes_flux",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().replace('-', "_").as_str() {
            "circle_convergence" => Ok(Experiment::CircleConvergence),
            "popcorn_robustness" => Ok(Experiment::PopcornRobustness),
            "two_holes_flux" => Ok(Experiment::TwoHolesFlux),
            other => Err(format!("unknown experiment '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// `[x_min, y_min, x_max, y_max]`.
    pub bbox: [f64; 4],
    pub n0: usize,
    pub refinement: usize,
    /// Finest level `L`.
    pub levels: usize,
    /// `N_L`.
    pub finest_samples: usize,
    pub gamma: f64,
    /// `K`.
    pub realizations: usize,
    pub root_seed: u64,
    pub threads: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub nitsche_factor: f64,
    pub penalty_scaling: PenaltyScaling,
    /// Aggregation threshold `eta0`.
    pub threshold: f64,
    pub quadrature_degree: usize,
    pub hole_radii: Vec<f64>,
    /// Samples per level of the robustness study.
    pub samples_per_level: usize,
    /// Wave number of the popcorn exact solution.
    pub kappa: f64,
    /// Half width `delta` of the box quantity.
    pub box_half_width: f64,
    pub max_attempts: u32,
    pub sample_cap: u64,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            bbox: [0.0, 0.0, 1.0, 1.0],
            n0: 8,
            refinement: 2,
            levels: 3,
            finest_samples: 6,
            gamma: 3.5,
            realizations: 20,
            root_seed: 20_241_018,
            threads: 1,
            cg_tol: 1e-8,
            cg_max_iter: 100_000,
            nitsche_factor: 100.0,
            penalty_scaling: PenaltyScaling::InverseH,
            threshold: 1.0,
            quadrature_degree: 2,
            hole_radii: vec![0.18, 0.2, 0.22],
            samples_per_level: 200,
            kappa: 4.0,
            box_half_width: 0.125,
            max_attempts: 100,
            sample_cap: emlmc_core::mlmc::DEFAULT_SAMPLE_CAP,
        };
        match experiment {
            Experiment::CircleConvergence => base,
            Experiment::PopcornRobustness => Self {
                n0: 32,
                levels: 4,
                realizations: 1,
                cg_max_iter: 20_000,
                quadrature_degree: 4,
                ..base
            },
            Experiment::TwoHolesFlux => Self {
                finest_samples: 4,
                realizations: 1,
                ..base
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if entries.iter().any(|(_, k, _)| *k == key) {
                return Err(ConfigError::Duplicate { line: i + 1, key });
            }
            entries.push((i + 1, key, value.trim().to_string()));
        }
        let experiment = entries
            .iter()
            .find(|(_, k, _)| k == "experiment")
            .ok_or(ConfigError::MissingExperiment)?;
        let experiment: Experiment = parse_value("experiment", &experiment.2)?;
        let mut config = Self::defaults(experiment);
        for (line, key, value) in &entries {
            config.set(*line, key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "experiment" => {}
            "box" => {
                let v: Vec<f64> = parse_list(key, value)?;
                self.bbox = v
                    .try_into()
                    .map_err(|_| bad(key, value, "expected x_min, y_min, x_max, y_max"))?;
            }
            "n0" => self.n0 = parse_value(key, value)?,
            "refinement" => self.refinement = parse_value(key, value)?,
            "levels" => self.levels = parse_value(key, value)?,
            "finest_samples" => self.finest_samples = parse_value(key, value)?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "realizations" => self.realizations = parse_value(key, value)?,
            "root_seed" => self.root_seed = parse_value(key, value)?,
            "threads" => self.threads = parse_value(key, value)?,
            "cg_tol" => self.cg_tol = parse_value(key, value)?,
            "cg_max_iter" => self.cg_max_iter = parse_value(key, value)?,
            "nitsche_factor" => self.nitsche_factor = parse_value(key, value)?,
            "penalty_scaling" => {
                self.penalty_scaling = match value {
                    "h" => PenaltyScaling::InverseH,
                    "h2" => PenaltyScaling::InverseHSquared,
                    _ => return Err(bad(key, value, "expected h or h2")),
                }
            }
            "threshold" => self.threshold = parse_value(key, value)?,
            "quadrature_degree" => self.quadrature_degree = parse_value(key, value)?,
            "hole_radii" => self.hole_radii = parse_list(key, value)?,
            "samples_per_level" => self.samples_per_level = parse_value(key, value)?,
            "kappa" => self.kappa = parse_value(key, value)?,
            "box_half_width" => self.box_half_width = parse_value(key, value)?,
            "max_attempts" => self.max_attempts = parse_value(key, value)?,
            "sample_cap" => self.sample_cap = parse_value(key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let [x0, y0, x1, y1] = self.bbox;
        if !(x1 > x0 && y1 > y0) || ((x1 - x0) - (y1 - y0)).abs() > 1e-12 * (x1 - x0) {
            return fail("box must be a non-degenerate square");
        }
        if self.n0 == 0 || self.refinement < 2 {
            return fail("n0 >= 1 and refinement >= 2 required");
        }
        if self.finest_samples == 0 || self.realizations == 0 || self.samples_per_level == 0 {
            return fail("sample and realization counts must be positive");
        }
        if !(self.gamma >= 0.0) {
            return fail("gamma must be non-negative");
        }
        if self.threads == 0 {
            return fail("threads must be at least 1");
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iter == 0 {
            return fail("cg_tol > 0 and cg_max_iter >= 1 required");
        }
        if !(self.nitsche_factor > 0.0) {
            return fail("nitsche_factor must be positive");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail("threshold must lie in [0, 1]");
        }
        if emlmc_core::agfem::triangle_rule(self.quadrature_degree).is_err() {
            return fail("quadrature_degree must be at most 5");
        }
        if self.hole_radii.iter().any(|r| !(*r >= 0.0)) {
            return fail("hole radii must be non-negative");
        }
        if self.experiment == Experiment::TwoHolesFlux && self.hole_radii.is_empty() {
            return fail("two_holes_flux needs at least one radius");
        }
        if !(self.box_half_width > 0.0) || self.max_attempts == 0 {
            return fail("box_half_width > 0 and max_attempts >= 1 required");
        }
        Ok(())
    }

    /// `key=value` lines of every setting, in a fixed order.
    pub fn to_manifest(&self) -> String {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let scaling = match self.penalty_scaling {
            PenaltyScaling::InverseH => "h",
            PenaltyScaling::InverseHSquared => "h2",
        };
        let _ = writeln!(s, "experiment={}", self.experiment.name());
        let _ = writeln!(s, "box={}", list(&self.bbox));
        let _ = writeln!(s, "n0={}", self.n0);
        let _ = writeln!(s, "refinement={}", self.refinement);
        let _ = writeln!(s, "levels={}", self.levels);
        let _ = writeln!(s, "finest_samples={}", self.finest_samples);
        let _ = writeln!(s, "gamma={}", self.gamma);
        let _ = writeln!(s, "realizations={}", self.realizations);
        let _ = writeln!(s, "root_seed={}", self.root_seed);
        let _ = writeln!(s, "cg_tol={}", self.cg_tol);
        let _ = writeln!(s, "cg_max_iter={}", self.cg_max_iter);
        let _ = writeln!(s, "nitsche_factor={}", self.nitsche_factor);
        let _ = writeln!(s, "penalty_scaling={scaling}");
        let _ = writeln!(s, "threshold={}", self.threshold);
        let _ = writeln!(s, "quadrature_degree={}", self.quadrature_degree);
        let _ = writeln!(s, "hole_radii={}", list(&self.hole_radii));
        let _ = writeln!(s, "samples_per_level={}", self.samples_per_level);
        let _ = writeln!(s, "kappa={}", self.kappa);
        let _ = writeln!(s, "box_half_width={}", self.box_half_width);
        let _ = writeln!(s, "max_attempts={}", self.max_attempts);
        let _ = writeln!(s, "sample_cap={}", self.sample_cap);
        s
    }
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| bad(key, value, e.to_string()))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_value(key, v)).collect()
}
