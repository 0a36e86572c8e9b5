use clap::ValueEnum;
use perclab::estimators::GmEventKind;
use perclab::field::ParamPoint;
use perclab::lattice::{ClassRule, MAX_D};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Theta,
    OneArm,
    Crossing,
    Bisect,
    QcCurve,
    SlabCurve,
    Uniqueness,
    Trifurcations,
    Certificate,
    GmEvent,
    Renorm,
    Oracle,
    MtpCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Theta => "theta",
            Command::OneArm => "one-arm",
            Command::Crossing => "crossing",
            Command::Bisect => "bisect",
            Command::QcCurve => "qc-curve",
            Command::SlabCurve => "slab-curve",
            Command::Uniqueness => "uniqueness",
            Command::Trifurcations => "trifurcations",
            Command::Certificate => "certificate",
            Command::GmEvent => "gm-event",
            Command::Renorm => "renorm",
            Command::Oracle => "oracle",
            Command::MtpCheck => "mtp-check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Box with side L on the sublattice axes (all axes under the axis rule).
    #[default]
    Box,
    /// Planar pair of (L+1) x L boxes, axis rule only.
    SelfDual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Desk,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    NearestToTop,
    SameHCluster,
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MtpModeKind {
    #[default]
    MonteCarlo,
    Exact,
}

/// One experiment. Fields a command does not use are ignored by it but still
/// echoed, so every output carries the complete configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub d: usize,
    pub s: usize,
    pub rule: ClassRule,
    pub p: Option<f64>,
    pub q: Option<f64>,
    /// Parameter of the edges below H; defaults to p.
    pub t: Option<f64>,
    /// Explicit (p, q) points, run as independent streams.
    pub grid: Option<Vec<[f64; 2]>>,
    /// p values for `qc-curve`.
    pub p_values: Option<Vec<f64>>,
    pub m: usize,
    pub radii: Vec<usize>,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "N")]
    pub n_slab: Option<usize>,
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    /// Box radii for `trifurcations`.
    pub n_values: Vec<usize>,
    pub axis: usize,
    pub min_fraction: f64,
    pub samples: u64,
    /// Sample cap of the bisection; defaults to four times `samples`.
    pub max_samples: Option<u64>,
    pub tolerance: f64,
    pub design: Design,
    pub alpha: f64,
    pub beta: f64,
    pub gm_n: usize,
    pub kind: GmEventKind,
    pub delta: f64,
    /// Closedness level on the region boundary for `gm-event`.
    pub level: f64,
    /// Unconditioned draws for the rejection sampler; defaults to 5 * samples.
    pub draws: Option<u64>,
    pub preset: Preset,
    pub eta: f64,
    /// Overrides of the preset geometry.
    pub renorm_n: Option<usize>,
    pub renorm_m: Option<usize>,
    pub renorm_alpha: Option<f64>,
    pub renorm_delta: Option<f64>,
    pub strict: bool,
    pub runs: u64,
    pub max_sites: usize,
    /// Largest edge count for the exhaustive inequality check.
    pub max_edges: usize,
    pub transport: TransportKind,
    pub mode: MtpModeKind,
    pub torus: Vec<usize>,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    #[serde(skip_serializing)]
    pub out: Option<String>,
    #[serde(skip_serializing)]
    pub format: Option<Format>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: None,
            d: 2,
            s: 1,
            rule: ClassRule::DefectSublattice,
            p: None,
            q: None,
            t: None,
            grid: None,
            p_values: None,
            m: 1,
            radii: (4..=24).step_by(2).collect(),
            l: 32,
            n_slab: None,
            n_list: vec![0, 1, 2, 4, 8],
            n_values: vec![8, 12, 16, 24, 32],
            axis: 0,
            min_fraction: 0.01,
            samples: 10_000,
            max_samples: None,
            tolerance: 1e-3,
            design: Design::Box,
            alpha: 0.5,
            beta: 1.0,
            gm_n: 8,
            kind: GmEventKind::SeedReach,
            delta: 0.1,
            level: 0.05,
            draws: None,
            preset: Preset::Desk,
            eta: 0.3,
            renorm_n: None,
            renorm_m: None,
            renorm_alpha: None,
            renorm_delta: None,
            strict: false,
            runs: 100,
            max_sites: 1,
            max_edges: 5,
            transport: TransportKind::NearestToTop,
            mode: MtpModeKind::MonteCarlo,
            torus: vec![6, 6, 3],
            seed: 1,
            workers: None,
            out: None,
            format: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
}

fn field(name: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: name.to_string(), message: message.into() }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        // for unknown keys the path already ends with the offending key
        let path = e.path().to_string();
        ConfigError::Field { field: path, message: e.into_inner().to_string() }
    })
}

pub fn load(path: &str) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_string(), source })?;
    parse(&text)
}

fn check_prob(name: &str, x: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(field(name, format!("{x} is not in [0, 1]")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.command.is_none() {
            return Err(field("command", "no command given on the command line or in the config"));
        }
        if self.d == 0 || self.d > MAX_D {
            return Err(field("d", format!("must lie in 1..={MAX_D}")));
        }
        if self.s > self.d {
            return Err(field("s", "must not exceed d"));
        }
        for (name, v) in [("p", self.p), ("q", self.q), ("t", self.t)] {
            if let Some(x) = v {
                check_prob(name, x)?;
            }
        }
        if let Some(g) = &self.grid {
            if g.is_empty() {
                return Err(field("grid", "empty"));
            }
            for (i, pt) in g.iter().enumerate() {
                check_prob(&format!("grid[{i}][0]"), pt[0])?;
                check_prob(&format!("grid[{i}][1]"), pt[1])?;
            }
        }
        if let Some(ps) = &self.p_values {
            for (i, &x) in ps.iter().enumerate() {
                check_prob(&format!("p_values[{i}]"), x)?;
            }
        }
        if self.samples == 0 {
            return Err(field("samples", "must be positive"));
        }
        if self.axis >= self.d {
            return Err(field("axis", "must be below d"));
        }
        if let Some(0) = self.workers {
            return Err(field("workers", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.delta) && self.command == Some(Command::GmEvent) {
            return Err(field("delta", "must lie in [0, 1)"));
        }
        if self.torus.len() != self.d && self.command == Some(Command::MtpCheck) {
            return Err(field("torus", format!("needs one length per axis (d = {})", self.d)));
        }
        Ok(())
    }

    /// The (p, q) points to run: `grid` when given, else the single point.
    pub fn points(&self) -> Result<Vec<ParamPoint>, ConfigError> {
        let raw: Vec<(f64, f64)> = match &self.grid {
            Some(g) => g.iter().map(|pt| (pt[0], pt[1])).collect(),
            None => {
                let p = self.p.ok_or_else(|| field("p", "required"))?;
                let q = self.q.ok_or_else(|| field("q", "required"))?;
                vec![(p, q)]
            }
        };
        raw.into_iter()
            .map(|(p, q)| {
                let pt = match self.t {
                    Some(t) => ParamPoint::with_t(p, q, t),
                    None => ParamPoint::new(p, q),
                };
                pt.map_err(|e| field("grid", e.to_string()))
            })
            .collect()
    }

    pub fn point(&self) -> Result<ParamPoint, ConfigError> {
        let pts = self.points()?;
        if pts.len() != 1 {
            return Err(field("grid", "this command takes a single (p, q)"));
        }
        Ok(pts[0])
    }
}
