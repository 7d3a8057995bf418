//! Attention parameters and their on-disk store.
//!
//! Linear maps are stored `[inputs, outputs]` and applied to row vectors:
//! `y_j = sum_i x_i W[i, j] + b_j`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::schedule::{FlowMode, FlowSchedule};
use crate::error::{Error, Result};
use crate::kvfile::KeyValues;
use crate::tensor_io::{read_tensor, write_tensor, Tensor};

pub const PARAMS_CFG: &str = "params.cfg";

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    inputs: usize,
    outputs: usize,
    weight: Vec<f32>,
    bias: Option<Vec<f32>>,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, weight: Vec<f32>, bias: Option<Vec<f32>>) -> Result<Self> {
        if inputs == 0 || outputs == 0 || weight.len() != inputs * outputs {
            return Err(Error::InvalidShape(format!(
                "{inputs}x{outputs} weight with {} entries",
                weight.len()
            )));
        }
        if bias.as_ref().is_some_and(|b| b.len() != outputs) {
            return Err(Error::InvalidShape(format!("bias must have {outputs} entries")));
        }
        if weight.iter().chain(bias.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidShape("non-finite parameter".into()));
        }
        Ok(Self { inputs, outputs, weight, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize, with_bias: bool) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: with_bias.then(|| vec![0.0; outputs]),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut weight = vec![0.0; n * n];
        (0..n).for_each(|i| weight[i * n + i] = 1.0);
        Self { inputs: n, outputs: n, weight, bias: None }
    }

    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, with_bias: bool, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt() as f32;
        let weight = (0..inputs * outputs).map(|_| rng.random_range(-limit..=limit)).collect();
        Self { inputs, outputs, weight, bias: with_bias.then(|| vec![0.0; outputs]) }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn bias(&self) -> Option<&[f32]> {
        self.bias.as_deref()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        let mut y: Vec<f64> = match &self.bias {
            Some(b) => b.iter().map(|&v| v as f64).collect(),
            None => vec![0.0; self.outputs],
        };
        for (xi, row) in x.iter().zip(self.weight.chunks_exact(self.outputs)) {
            for (yj, &w) in y.iter_mut().zip(row) {
                *yj += xi * w as f64;
            }
        }
        y
    }

    pub fn is_zero(&self) -> bool {
        self.weight.iter().chain(self.bias.iter().flatten()).all(|&v| v == 0.0)
    }

    fn weight_tensor(&self) -> Tensor {
        Tensor::from_f32(vec![self.inputs, self.outputs], self.weight.clone()).expect("weight shape")
    }

    fn load(dir: &Path, name: &str, bias: Option<&str>, inputs: usize, outputs: usize) -> Result<Self> {
        let path = dir.join(name);
        let t = read_tensor(&path)?;
        if t.shape() != [inputs, outputs] {
            return Err(Error::ShapeMismatch(format!(
                "expected [{inputs}, {outputs}], found {:?}",
                t.shape()
            ))
            .in_file(&path));
        }
        let weight = t.as_f32().ok_or_else(|| Error::Format("weights must be float32".into()).in_file(&path))?;
        let bias = match bias {
            Some(b) => {
                let path = dir.join(b);
                let t = read_tensor(&path)?;
                if t.shape() != [outputs] {
                    return Err(Error::ShapeMismatch(format!("expected [{outputs}], found {:?}", t.shape()))
                        .in_file(&path));
                }
                Some(t.as_f32().ok_or_else(|| Error::Format("bias must be float32".into()).in_file(&path))?.to_vec())
            }
            None => None,
        };
        Self::new(inputs, outputs, weight.to_vec(), bias).map_err(|e| e.in_file(&path))
    }

    fn save(&self, dir: &Path, name: &str, bias: Option<&str>) -> Result<()> {
        write_tensor(&self.weight_tensor(), dir.join(name))?;
        if let (Some(b), Some(values)) = (bias, &self.bias) {
            write_tensor(&Tensor::from_f32(vec![self.outputs], values.clone())?, dir.join(b))?;
        }
        Ok(())
    }
}

/// Projections for queries, keys and values plus the update MLP
/// (`2C -> C -> C`, rectifier in between).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub mlp1: Linear,
    pub mlp2: Linear,
}

impl AttentionParams {
    pub fn channels(&self) -> usize {
        self.wq.inputs()
    }

    pub fn random(channels: usize, rng: &mut impl Rng) -> Self {
        let c = channels;
        Self {
            wq: Linear::glorot(c, c, false, rng),
            wk: Linear::glorot(c, c, false, rng),
            wv: Linear::glorot(c, c, false, rng),
            mlp1: Linear::glorot(2 * c, c, true, rng),
            mlp2: Linear::glorot(c, c, true, rng),
        }
    }

    /// Random projections with an all-zero MLP: every update is the identity.
    pub fn zero_mlp(channels: usize, rng: &mut impl Rng) -> Self {
        let c = channels;
        Self {
            mlp1: Linear::zeros(2 * c, c, true),
            mlp2: Linear::zeros(c, c, true),
            ..Self::random(c, rng)
        }
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        let c = channels;
        let expect = [
            ("wq", &self.wq, c, c),
            ("wk", &self.wk, c, c),
            ("wv", &self.wv, c, c),
            ("mlp1", &self.mlp1, 2 * c, c),
            ("mlp2", &self.mlp2, c, c),
        ];
        for (name, l, i, o) in expect {
            if l.inputs() != i || l.outputs() != o {
                return Err(Error::ShapeMismatch(format!(
                    "{name} is {}x{}, expected {i}x{o}",
                    l.inputs(),
                    l.outputs()
                )));
            }
        }
        Ok(())
    }

    fn load(dir: &Path, c: usize) -> Result<Self> {
        Ok(Self {
            wq: Linear::load(dir, "wq.cmt", None, c, c)?,
            wk: Linear::load(dir, "wk.cmt", None, c, c)?,
            wv: Linear::load(dir, "wv.cmt", None, c, c)?,
            mlp1: Linear::load(dir, "mlp1_w.cmt", Some("mlp1_b.cmt"), 2 * c, c)?,
            mlp2: Linear::load(dir, "mlp2_w.cmt", Some("mlp2_b.cmt"), c, c)?,
        })
    }

    fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.wq.save(dir, "wq.cmt", None)?;
        self.wk.save(dir, "wk.cmt", None)?;
        self.wv.save(dir, "wv.cmt", None)?;
        self.mlp1.save(dir, "mlp1_w.cmt", Some("mlp1_b.cmt"))?;
        self.mlp2.save(dir, "mlp2_w.cmt", Some("mlp2_b.cmt"))
    }
}

/// Immutable parameter sets for one schedule.
///
/// On disk: `params.cfg` (`channels`, `steps`, `mode`, `neighborhood`), an
/// optional root-level `pos_map.cmt`, and either root-level tensors (one
/// shared set) or `block_0/`, `block_1/`, ... (one set per stacked step).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    pub channels: usize,
    pub schedule: FlowSchedule,
    pub blocks: Vec<AttentionParams>,
    pub pos_map: Option<Linear>,
}

impl ParameterStore {
    /// Seeded random initialisation: one set for iterative schedules, one
    /// per step for stacked ones.
    pub fn random(channels: usize, schedule: FlowSchedule, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = schedule.parameter_sets();
        let blocks = (0..n).map(|_| AttentionParams::random(channels, &mut rng)).collect();
        Self { channels, schedule, blocks, pos_map: None }
    }

    pub fn zero_mlp(channels: usize, schedule: FlowSchedule, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = schedule.parameter_sets();
        let blocks = (0..n).map(|_| AttentionParams::zero_mlp(channels, &mut rng)).collect();
        Self { channels, schedule, blocks, pos_map: None }
    }

    /// Parameter set used at `step`.
    pub fn block(&self, step: usize) -> &AttentionParams {
        match self.schedule.mode {
            FlowMode::Iterative => &self.blocks[0],
            FlowMode::Stacked => &self.blocks[step],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        let want = self.schedule.parameter_sets();
        if self.blocks.len() != want {
            return Err(Error::Config(format!(
                "{:?} schedule with {} steps needs {want} parameter sets, store has {}",
                self.schedule.mode,
                self.schedule.steps,
                self.blocks.len()
            )));
        }
        for b in &self.blocks {
            b.validate(self.channels)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cfg = KeyValues::load(&dir.join(PARAMS_CFG))?;
        let channels: usize = cfg.require("channels")?;
        let schedule = FlowSchedule {
            mode: cfg.require("mode")?,
            steps: cfg.require("steps")?,
            neighborhood: cfg.parse_or("neighborhood", Default::default())?,
        };
        schedule.validate()?;
        let mut blocks = Vec::new();
        if dir.join("block_0").is_dir() {
            while dir.join(format!("block_{}", blocks.len())).is_dir() {
                let sub = dir.join(format!("block_{}", blocks.len()));
                blocks.push(AttentionParams::load(&sub, channels)?);
            }
        } else {
            blocks.push(AttentionParams::load(dir, channels)?);
        }
        let pos_map = if dir.join("pos_map.cmt").is_file() {
            Some(Linear::load(dir, "pos_map.cmt", None, channels, channels)?)
        } else {
            None
        };
        let store = Self { channels, schedule, blocks, pos_map };
        store.validate()?;
        Ok(store)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut cfg = KeyValues::default();
        cfg.set("channels", self.channels);
        cfg.set("steps", self.schedule.steps);
        cfg.set("mode", self.schedule.mode);
        cfg.set("neighborhood", self.schedule.neighborhood);
        crate::pipeline::write_atomic(&dir.join(PARAMS_CFG), cfg.to_text().as_bytes())?;
        match self.schedule.mode {
            FlowMode::Iterative => self.blocks[0].save(dir)?,
            FlowMode::Stacked => {
                for (i, b) in self.blocks.iter().enumerate() {
                    b.save(&dir.join(format!("block_{i}")))?;
                }
            }
        }
        if let Some(map) = &self.pos_map {
            map.save(dir, "pos_map.cmt", None)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message_flow::Neighborhood;

    #[test]
    fn linear_apply() {
        let l = Linear::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], Some(vec![0.5, 0.0, -1.0])).unwrap();
        assert_eq!(l.apply(&[1.0, -1.0]), vec![-2.5, -3.0, -4.0]);
        assert!(Linear::new(2, 2, vec![0.0; 3], None).is_err());
        assert!(Linear::zeros(3, 2, true).is_zero());
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = Linear::glorot(16, 8, true, &mut rng);
        let limit = (6.0f32 / 24.0).sqrt();
        assert!(l.weight().iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for mode in [FlowMode::Iterative, FlowMode::Stacked] {
            let schedule = FlowSchedule { mode, steps: 3, neighborhood: Neighborhood::Four };
            let mut store = ParameterStore::random(4, schedule, 7);
            store.pos_map = Some(Linear::identity(4));
            let path = dir.path().join(format!("{mode}"));
            store.save(&path).unwrap();
            assert_eq!(ParameterStore::load(&path).unwrap(), store);
        }
    }

    #[test]
    fn mode_count_mismatch() {
        let schedule = FlowSchedule { mode: FlowMode::Stacked, steps: 3, neighborhood: Neighborhood::Eight };
        let mut store = ParameterStore::random(4, schedule, 1);
        store.blocks.pop();
        assert!(matches!(store.validate(), Err(Error::Config(_))));
    }
}
