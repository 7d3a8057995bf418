use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::PipelineConfig;
use super::run::{run_match, RunSummary};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::kvfile::{parse_switch, KeyValues};
use crate::tensor_io::{generate_synthetic_episode, EpisodeSpec};

/// Batch of synthetic episodes run under one or two pipeline variants.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub episode: EpisodeSpec,
    pub pipeline: PipelineConfig,
    pub out: PathBuf,
    /// Episodes are assigned class `1 + seed % classes`.
    pub classes: u64,
    /// Run every seed with message flow both on and off.
    pub compare_mfm: bool,
}

impl SuiteConfig {
    /// Reads a suite file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let kv = KeyValues::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_kv(&kv, base).map_err(|e| e.in_file(path))
    }

    pub fn from_kv(kv: &KeyValues, base: &Path) -> Result<Self> {
        let episode = episode_spec(kv)?;
        let mut pipeline = PipelineConfig::default().apply(kv)?;
        pipeline.params = pipeline.params.map(|p| base.join(p));
        let out = base.join(kv.get("out").unwrap_or("suite_out"));
        let classes: u64 = kv.parse_or("classes", 1)?;
        if classes == 0 {
            return Err(Error::Config("classes must be >= 1".into()));
        }
        let compare_mfm = match kv.get("compare_mfm") {
            Some(v) => parse_switch(v).ok_or_else(|| Error::Config(format!("invalid compare_mfm `{v}`")))?,
            None => false,
        };
        Ok(Self { episode, pipeline, out, classes, compare_mfm })
    }
}

/// Reads `height`, `width`, `channels`, `fg_fraction`, `separation`,
/// `noise_std` and `shared_background` over the defaults.
pub(crate) fn episode_spec(kv: &KeyValues) -> Result<EpisodeSpec> {
    let d = EpisodeSpec::default();
    let spec = EpisodeSpec {
        height: kv.parse_or("height", d.height)?,
        width: kv.parse_or("width", d.width)?,
        channels: kv.parse_or("channels", d.channels)?,
        fg_fraction: kv.parse_or("fg_fraction", d.fg_fraction)?,
        separation: kv.parse_or("separation", d.separation)?,
        noise_std: kv.parse_or("noise_std", d.noise_std)?,
        shared_background: match kv.get("shared_background") {
            Some(v) => parse_switch(v).ok_or_else(|| Error::Config(format!("invalid shared_background `{v}`")))?,
            None => d.shared_background,
        },
    };
    spec.validate()?;
    Ok(spec)
}

impl EpisodeSpec {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        episode_spec(kv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub name: String,
    pub episodes: usize,
    pub failures: Vec<(u64, String)>,
    pub fbiou: (f64, f64),
    pub miou: (f64, f64),
    /// Per-class IoU, macro-averaged over that class's episodes.
    pub per_class: BTreeMap<String, f64>,
    pub miou_classwise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub seeds: Vec<u64>,
    pub variants: Vec<VariantSummary>,
    /// First error seen, if any run failed.
    pub first_error: Option<String>,
}

impl SuiteReport {
    pub fn failed(&self) -> bool {
        self.variants.iter().any(|v| !v.failures.is_empty())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# flowmatch suite\n# per-class IoU: macro average over episodes of that class\n");
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        writeln!(s, "seeds = {}", seeds.join(",")).unwrap();
        for v in &self.variants {
            let p = &v.name;
            writeln!(s, "{p}.episodes = {}", v.episodes).unwrap();
            writeln!(s, "{p}.failed = {}", v.failures.len()).unwrap();
            for (seed, err) in &v.failures {
                writeln!(s, "# {p} seed {seed} failed: {err}").unwrap();
            }
            writeln!(s, "{p}.fbiou_mean = {:.6}", v.fbiou.0).unwrap();
            writeln!(s, "{p}.fbiou_std = {:.6}", v.fbiou.1).unwrap();
            writeln!(s, "{p}.miou_mean = {:.6}", v.miou.0).unwrap();
            writeln!(s, "{p}.miou_std = {:.6}", v.miou.1).unwrap();
            writeln!(s, "{p}.miou_classwise = {:.6}", v.miou_classwise).unwrap();
            for (class, iou) in &v.per_class {
                writeln!(s, "{p}.iou_{class} = {iou:.6}").unwrap();
            }
        }
        s
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(name: String, results: &[(u64, Result<RunSummary>)]) -> VariantSummary {
    let mut failures = Vec::new();
    let mut fb = Vec::new();
    let mut mi = Vec::new();
    let mut by_class: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (seed, r) in results {
        match r {
            Ok(RunSummary { metrics: Some(m), .. }) => {
                fb.push(m.fbiou);
                mi.push(m.miou);
                for (c, v) in &m.per_class {
                    by_class.entry(c.clone()).or_default().push(*v);
                }
            }
            Ok(_) => failures.push((*seed, "run produced no metrics".to_string())),
            Err(e) => failures.push((*seed, e.to_string())),
        }
    }
    let per_class: BTreeMap<String, f64> = by_class.into_iter().map(|(c, v)| (c, mean_std(&v).0)).collect();
    let classwise: Vec<f64> = per_class.values().copied().collect();
    VariantSummary {
        name,
        episodes: results.len(),
        failures,
        fbiou: mean_std(&fb),
        miou: mean_std(&mi),
        miou_classwise: mean_std(&classwise).0,
        per_class,
    }
}

/// Generates one episode per seed under `out/episodes`, runs each variant
/// into `out/runs/<variant>/seed_<n>` and writes `out/suite.txt`. Failed
/// runs are recorded and the suite carries on.
pub fn run_suite(cfg: &SuiteConfig, seeds: &[u64]) -> Result<SuiteReport> {
    if seeds.is_empty() {
        return Err(Error::EmptyInput("suite needs at least one seed".into()));
    }
    cfg.pipeline.validate()?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let variants: Vec<bool> = if cfg.compare_mfm { vec![true, false] } else { vec![cfg.pipeline.mfm] };

    let mut first_error = None;
    let mut summaries = Vec::new();
    for mfm in variants {
        let name = if mfm { "mfm_on" } else { "mfm_off" }.to_string();
        let results: Vec<(u64, Result<RunSummary>)> = seeds
            .par_iter()
            .map(|&seed| {
                let episode = cfg.out.join("episodes").join(format!("seed_{seed}"));
                let run = || -> Result<RunSummary> {
                    generate_synthetic_episode(seed, &cfg.episode, &episode)?;
                    let pc = PipelineConfig {
                        episode: episode.clone(),
                        out: cfg.out.join("runs").join(&name).join(format!("seed_{seed}")),
                        mfm,
                        class: (1 + seed % cfg.classes).to_string(),
                        ..cfg.pipeline.clone()
                    };
                    run_match(&pc)
                };
                (seed, run())
            })
            .collect();
        if first_error.is_none() {
            first_error = results.iter().find_map(|(_, r)| r.as_ref().err().map(|e| e.to_string()));
        }
        summaries.push(summarize(name, &results));
    }
    let report = SuiteReport { seeds: seeds.to_vec(), variants: summaries, first_error };
    write_atomic(&cfg.out.join("suite.txt"), report.to_text().as_bytes())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }

    #[test]
    fn spec_keys() {
        let kv = KeyValues::parse("height = 6\nchannels = 4\nshared_background = on").unwrap();
        let spec = episode_spec(&kv).unwrap();
        assert_eq!((spec.height, spec.width, spec.channels), (6, 8, 4));
        assert!(spec.shared_background);
        assert!(episode_spec(&KeyValues::parse("channels = 3").unwrap()).is_err());
    }
}
