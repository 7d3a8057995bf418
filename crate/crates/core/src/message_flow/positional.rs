use super::params::Linear;
use crate::error::{Error, Result};
use crate::tensor_io::{FeatureGrid, Tensor};

pub const DEFAULT_BASE: f64 = 10000.0;

/// Sinusoidal 2-D encoding, `[H, W, C]`.
///
/// Channels `[0, C/2)` encode the row and `[C/2, C)` the column. Inside each
/// half, channel `2i` is `sin(p / base^(4i/C))` and `2i + 1` the matching
/// cosine.
pub fn positional_encode(height: usize, width: usize, channels: usize, base: f64) -> Result<Tensor> {
    if channels == 0 || !channels.is_multiple_of(4) {
        return Err(Error::InvalidShape(format!(
            "positional encoding needs channels divisible by 4, got {channels}"
        )));
    }
    let half = channels / 2;
    let inv_freq: Vec<f64> = (0..half / 2)
        .map(|i| base.powf(-(4.0 * i as f64) / channels as f64))
        .collect();
    let mut values = Vec::with_capacity(height * width * channels);
    for r in 0..height {
        for c in 0..width {
            for p in [r as f64, c as f64] {
                for &f in &inv_freq {
                    let a = p * f;
                    values.push(a.sin() as f32);
                    values.push(a.cos() as f32);
                }
            }
        }
    }
    Tensor::from_f32(vec![height, width, channels], values)
}

/// Fixed sinusoidal encoding, optionally passed through a learned `C x C` map.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncoder {
    pub channels: usize,
    pub base: f64,
    pub map: Option<Linear>,
}

impl PositionalEncoder {
    pub fn new(channels: usize) -> Self {
        Self { channels, base: DEFAULT_BASE, map: None }
    }

    pub fn encode(&self, height: usize, width: usize) -> Result<Tensor> {
        let raw = positional_encode(height, width, self.channels, self.base)?;
        let Some(map) = &self.map else {
            return Ok(raw);
        };
        if map.inputs() != self.channels || map.outputs() != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "positional map is {}x{}, expected {c}x{c}",
                map.inputs(),
                map.outputs(),
                c = self.channels
            )));
        }
        let src = raw.as_f32().expect("encoding is float");
        let mut out = Vec::with_capacity(src.len());
        for node in src.chunks_exact(self.channels) {
            let x: Vec<f64> = node.iter().map(|&v| v as f64).collect();
            out.extend(map.apply(&x).into_iter().map(|v| v as f32));
        }
        Tensor::from_f32(raw.shape().to_vec(), out)
    }
}

/// `f = f_a + P_enc(p)`, elementwise.
pub fn fuse_position(features: &FeatureGrid, enc: &Tensor) -> Result<FeatureGrid> {
    let shape = [features.height(), features.width(), features.channels()];
    if enc.shape() != shape {
        return Err(Error::ShapeMismatch(format!(
            "features are {shape:?}, encoding is {:?}",
            enc.shape()
        )));
    }
    let e = enc
        .as_f32()
        .ok_or_else(|| Error::Format("positional encoding must be float32".into()))?;
    let values = features.values().iter().zip(e).map(|(a, b)| a + b).collect();
    FeatureGrid::new(shape[0], shape[1], shape[2], values)
}
