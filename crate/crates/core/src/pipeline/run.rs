use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::config::{OtMode, PipelineConfig};
use super::write_atomic;
use crate::correspondence::{
    best_match_map, filter_by_support_mask, foreground_probability_map, prior_mask, threshold_prediction,
};
use crate::error::{Error, Result};
use crate::message_flow::{fuse_position, run_message_flow, FlowSchedule, ParameterStore, PositionalEncoder};
use crate::metrics::MetricReport;
use crate::ot::{
    build_partial_problem, cosine_cost_matrix, select_matched_mass, sinkhorn_solve, strip_dummies, MarginalWeights,
};
use crate::tensor_io::{
    downsample_mask, encode_tensor, episode_files::*, read_tensor, BinaryMask, Episode, FeatureGrid, Tensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub matched_mass: f64,
    pub real_block_mass: f64,
    pub achieved_cost: f64,
    pub iterations: usize,
    pub marginal_defect: f64,
    pub metrics: Option<MetricReport>,
    pub prior_metrics: Option<MetricReport>,
}

fn load<T>(dir: &Path, name: &str, convert: impl Fn(&Tensor) -> Result<T>) -> Result<T> {
    let path = dir.join(name);
    let t = read_tensor(&path)?;
    convert(&t).map_err(|e| e.in_file(&path))
}

fn to_resolution(mask: BinaryMask, height: usize, width: usize, what: &Path) -> Result<BinaryMask> {
    if (mask.height(), mask.width()) == (height, width) {
        return Ok(mask);
    }
    downsample_mask(&mask, height, width).map_err(|e| e.in_file(what))
}

/// Loads an episode directory, aligning masks to the feature resolution.
/// The ground truth is empty when `query_gt.cmt` is absent.
pub fn load_episode(dir: &Path) -> Result<(Episode, bool)> {
    let support = load(dir, SUPPORT_FEAT, FeatureGrid::from_tensor)?;
    let query = load(dir, QUERY_FEAT, FeatureGrid::from_tensor)?;
    if support.channels() != query.channels() {
        return Err(Error::ShapeMismatch(format!(
            "support has {} channels, query has {}",
            support.channels(),
            query.channels()
        )));
    }
    let mask = load(dir, SUPPORT_MASK, BinaryMask::from_tensor)?;
    let support_mask = to_resolution(mask, support.height(), support.width(), &dir.join(SUPPORT_MASK))?;
    let gt_path = dir.join(QUERY_GT);
    let (query_gt, has_gt) = if gt_path.is_file() {
        let gt = load(dir, QUERY_GT, BinaryMask::from_tensor)?;
        (to_resolution(gt, query.height(), query.width(), &gt_path)?, true)
    } else {
        (BinaryMask::filled(query.height(), query.width(), false)?, false)
    };
    Ok((Episode { support, query, support_mask, query_gt }, has_gt))
}

fn parameter_store(cfg: &PipelineConfig, channels: usize) -> Result<ParameterStore> {
    let store = match &cfg.params {
        Some(dir) => {
            let store = ParameterStore::load(dir)?;
            let clash = cfg.schedule.is_some_and(|m| m != store.schedule.mode)
                || cfg.steps.is_some_and(|s| s != store.schedule.steps);
            if clash {
                return Err(Error::Config(format!(
                    "schedule flags disagree with {}",
                    dir.join(crate::message_flow::PARAMS_CFG).display()
                )));
            }
            store
        }
        None => {
            let schedule = FlowSchedule {
                mode: cfg.schedule.unwrap_or_default(),
                steps: cfg.steps.unwrap_or(1),
                neighborhood: cfg.neighborhood,
            };
            ParameterStore::random(channels, schedule, cfg.seed)
        }
    };
    if store.channels != channels {
        return Err(Error::Config(format!(
            "parameters are for {} channels, features have {channels}",
            store.channels
        )));
    }
    Ok(store)
}

struct Artifacts {
    files: Vec<(&'static str, Vec<u8>)>,
    summary: RunSummary,
}

fn compute(cfg: &PipelineConfig, ep: &Episode, has_gt: bool) -> Result<(Artifacts, String)> {
    let mut log = String::new();
    let (mut support, mut query) = (ep.support.clone(), ep.query.clone());
    if cfg.mfm {
        let store = parameter_store(cfg, support.channels())?;
        let encoder = PositionalEncoder { map: store.pos_map.clone(), ..PositionalEncoder::new(store.channels) };
        support = fuse_position(&support, &encoder.encode(support.height(), support.width())?)?;
        query = fuse_position(&query, &encoder.encode(query.height(), query.width())?)?;
        (query, support) = run_message_flow(&query, &support, &store.schedule, &store)?;
        writeln!(log, "flow_mode = {}", store.schedule.mode).unwrap();
        writeln!(log, "flow_steps = {}", store.schedule.steps).unwrap();
    }

    let cost = cosine_cost_matrix(&support, &query)?;
    let (m, k) = (cost.rows(), cost.cols());
    let foreground = ep.support_mask.count_ones();
    let matched = match cfg.ot_mode {
        OtMode::Partial => select_matched_mass(foreground, cfg.lambda, m, k),
        OtMode::Full => m.min(k) as f64,
    };
    let weights = MarginalWeights::unit(m, k, matched)?;
    let problem = build_partial_problem(&weights, &cost)?;
    let solved = sinkhorn_solve(&problem, &cfg.sinkhorn)?;
    let real_block_mass = problem.real_mass(&solved);
    let block = strip_dummies(&solved, m, k)?;

    let filtered = filter_by_support_mask(&block, &ep.support_mask)?;
    let prob = foreground_probability_map(&filtered, &weights, query.height(), query.width())?;
    let pred = threshold_prediction(&prob, cfg.tau)?;
    let best = best_match_map(&block, query.height(), query.width())?;
    let plan_tensor = Tensor::from_f32(vec![m, k], block.flows().iter().map(|&x| x as f32).collect())?;

    let mut files = vec![
        ("prob.cmt", encode_tensor(&prob.to_tensor())),
        ("best_match.csv", best.to_csv(support.width()).into_bytes()),
        ("plan.cmt", encode_tensor(&plan_tensor)),
    ];
    let mut prior_metrics = None;
    if cfg.prior_mask {
        let prior = prior_mask(&query, &support, &ep.support_mask)?;
        if has_gt {
            let prior_pred = threshold_prediction(&prior, cfg.tau)?;
            prior_metrics = Some(MetricReport::for_episode(&prior_pred, &ep.query_gt, &cfg.class)?);
        }
        files.push(("prior.cmt", encode_tensor(&prior.to_tensor())));
    }
    let metrics = if has_gt {
        let report = MetricReport::for_episode(&pred, &ep.query_gt, &cfg.class)?;
        let mut text = String::from("# metrics: per-class IoU is the episode foreground IoU\n");
        text.push_str(&report.to_text());
        if let Some(p) = &prior_metrics {
            writeln!(text, "prior_fbiou = {:.6}", p.fbiou).unwrap();
            writeln!(text, "prior_iou_fg = {:.6}", p.iou_fg).unwrap();
        }
        files.push(("metrics.txt", text.into_bytes()));
        Some(report)
    } else {
        None
    };

    writeln!(log, "support_foreground = {foreground}").unwrap();
    writeln!(log, "epsilon = {:e}", cfg.sinkhorn.base_epsilon(&problem)).unwrap();
    writeln!(log, "matched_mass = {matched}").unwrap();
    writeln!(log, "real_block_mass = {real_block_mass:.12}").unwrap();
    writeln!(log, "sinkhorn_iterations = {}", solved.iterations).unwrap();
    writeln!(log, "marginal_defect = {:e}", solved.marginal_violation).unwrap();
    writeln!(log, "achieved_cost = {:.9}", solved.cost).unwrap();

    // written last so an incomplete run never leaves a prediction behind
    files.push(("pred.cmt", encode_tensor(&pred.to_tensor())));
    let summary = RunSummary {
        matched_mass: matched,
        real_block_mass,
        achieved_cost: solved.cost,
        iterations: solved.iterations,
        marginal_defect: solved.marginal_violation,
        metrics,
        prior_metrics,
    };
    Ok((Artifacts { files, summary }, log))
}

/// Runs one episode and writes `prob.cmt`, `pred.cmt`, `best_match.csv`,
/// `plan.cmt`, `prior.cmt` (when enabled), `metrics.txt` (when ground truth
/// exists) and `run.log` into `cfg.out`. Nothing is written on failure.
pub fn run_match(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let (episode, has_gt) = load_episode(&cfg.episode)?;
    let (artifacts, diagnostics) = compute(cfg, &episode, has_gt)?;

    let out: &PathBuf = &cfg.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let stale = out.join("pred.cmt");
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }

    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut log = format!("# flowmatch run\n# unix_time = {started}\n");
    log.push_str(&cfg.to_kv().to_text());
    log.push_str(&diagnostics);

    let (last, rest) = artifacts.files.split_last().expect("artifact list is nonempty");
    for (name, bytes) in rest {
        write_atomic(&out.join(name), bytes)?;
    }
    write_atomic(&out.join("run.log"), log.as_bytes())?;
    write_atomic(&out.join(last.0), &last.1)?;
    Ok(artifacts.summary)
}
