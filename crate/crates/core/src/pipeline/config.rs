use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kvfile::{parse_switch, KeyValues};
use crate::message_flow::{FlowMode, Neighborhood};
use crate::ot::SinkhornConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OtMode {
    /// Match `M = round(lambda * F)` units.
    #[default]
    Partial,
    /// Match everything that can be matched, `M = min(w_s, w_d)`.
    Full,
}

impl FromStr for OtMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "partial" => Ok(Self::Partial),
            "full" => Ok(Self::Full),
            _ => Err(Error::Config(format!("unknown ot mode `{s}`"))),
        }
    }
}

impl fmt::Display for OtMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Partial => "partial",
            Self::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub episode: PathBuf,
    /// Parameter store directory; random initialisation from `seed` if absent.
    pub params: Option<PathBuf>,
    pub out: PathBuf,
    pub lambda: f64,
    pub tau: f64,
    pub ot_mode: OtMode,
    pub mfm: bool,
    pub prior_mask: bool,
    /// Schedule overrides; a loaded store must agree with them.
    pub schedule: Option<FlowMode>,
    pub steps: Option<usize>,
    pub neighborhood: Neighborhood,
    pub seed: u64,
    pub sinkhorn: SinkhornConfig,
    /// Class label of the episode foreground, used in metric keys.
    pub class: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            episode: PathBuf::new(),
            params: None,
            out: PathBuf::new(),
            lambda: 1.0,
            tau: 0.5,
            ot_mode: OtMode::Partial,
            mfm: true,
            prior_mask: true,
            schedule: None,
            steps: None,
            neighborhood: Neighborhood::Eight,
            seed: 0,
            sinkhorn: SinkhornConfig::default(),
            class: "1".into(),
        }
    }
}

fn switch(kv: &KeyValues, key: &str, default: bool) -> Result<bool> {
    match kv.get(key) {
        None => Ok(default),
        Some(v) => parse_switch(v).ok_or_else(|| Error::Config(format!("`{key}` must be on or off, got `{v}`"))),
    }
}

impl PipelineConfig {
    /// Applies any recognised keys of `kv` on top of `self`.
    pub fn apply(mut self, kv: &KeyValues) -> Result<Self> {
        if let Some(v) = kv.get("episode") {
            self.episode = v.into();
        }
        if let Some(v) = kv.get("params") {
            self.params = Some(v.into());
        }
        if let Some(v) = kv.get("out") {
            self.out = v.into();
        }
        self.lambda = kv.parse_or("lambda", self.lambda)?;
        self.tau = kv.parse_or("tau", self.tau)?;
        self.ot_mode = kv.parse_or("ot_mode", self.ot_mode)?;
        self.mfm = switch(kv, "mfm", self.mfm)?;
        self.prior_mask = switch(kv, "prior_mask", self.prior_mask)?;
        self.schedule = kv.parse_opt("schedule")?.or(self.schedule);
        self.steps = kv.parse_opt("steps")?.or(self.steps);
        self.neighborhood = kv.parse_or("neighborhood", self.neighborhood)?;
        self.seed = kv.parse_or("seed", self.seed)?;
        self.sinkhorn.epsilon_scale = kv.parse_or("epsilon_scale", self.sinkhorn.epsilon_scale)?;
        self.sinkhorn.max_iters = kv.parse_or("max_iters", self.sinkhorn.max_iters)?;
        self.sinkhorn.tolerance = kv.parse_or("tolerance", self.sinkhorn.tolerance)?;
        self.sinkhorn.anneal_steps = kv.parse_or("anneal_steps", self.sinkhorn.anneal_steps)?;
        if let Some(v) = kv.get("class") {
            self.class = v.to_string();
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if self.steps == Some(0) {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.class.is_empty() || self.class.contains(char::is_whitespace) {
            return Err(Error::Config(format!("invalid class label `{}`", self.class)));
        }
        self.sinkhorn.validate()
    }

    /// Config echo in `key = value` form.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("episode", self.episode.display());
        if let Some(p) = &self.params {
            kv.set("params", p.display());
        }
        kv.set("out", self.out.display());
        kv.set("lambda", self.lambda);
        kv.set("tau", self.tau);
        kv.set("ot_mode", self.ot_mode);
        kv.set("mfm", if self.mfm { "on" } else { "off" });
        kv.set("prior_mask", if self.prior_mask { "on" } else { "off" });
        if let Some(s) = self.schedule {
            kv.set("schedule", s);
        }
        if let Some(s) = self.steps {
            kv.set("steps", s);
        }
        kv.set("neighborhood", self.neighborhood);
        kv.set("seed", self.seed);
        kv.set("epsilon_scale", self.sinkhorn.epsilon_scale);
        kv.set("max_iters", self.sinkhorn.max_iters);
        kv.set("tolerance", self.sinkhorn.tolerance);
        kv.set("anneal_steps", self.sinkhorn.anneal_steps);
        kv.set("class", &self.class);
        kv
    }
}

/// Parses `a..b` (inclusive) or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("invalid seed list `{s}`"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}
