//! Seeded two-cluster episodes where the correct matching is known a priori.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::episode_files::*;
use super::format::write_tensor;
use super::tensor::{BinaryMask, FeatureGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Fraction of cells that are foreground, in both images.
    pub fg_fraction: f64,
    /// Euclidean distance between the foreground centroid and each
    /// background centroid.
    pub separation: f64,
    /// Per-channel standard deviation around each centroid.
    pub noise_std: f64,
    /// When false the query background is drawn around its own centroid,
    /// so only the foreground is shared between the two images.
    pub shared_background: bool,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        Self {
            height: 8,
            width: 8,
            channels: 8,
            fg_fraction: 0.25,
            separation: 4.0,
            noise_std: 0.25,
            shared_background: false,
        }
    }
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidShape(format!(
                "episode grid {}x{} is empty",
                self.height, self.width
            )));
        }
        if self.channels < 2 || !self.channels.is_multiple_of(2) {
            return Err(Error::InvalidShape(format!(
                "feature channels must be even and >= 2, got {}",
                self.channels
            )));
        }
        if !(self.fg_fraction > 0.0 && self.fg_fraction < 1.0) {
            return Err(Error::Config(format!(
                "fg_fraction must lie in (0, 1), got {}",
                self.fg_fraction
            )));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::Config(format!("invalid separation {}", self.separation)));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config(format!("invalid noise_std {}", self.noise_std)));
        }
        Ok(())
    }

    /// Number of foreground cells per image, `round(fg_fraction * H * W)`
    /// kept inside `[1, H*W - 1]` so both classes are present.
    pub fn foreground_cells(&self) -> usize {
        let n = self.height * self.width;
        let fg = (self.fg_fraction * n as f64).round() as usize;
        fg.clamp(1, n.saturating_sub(1).max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub support: FeatureGrid,
    pub query: FeatureGrid,
    pub support_mask: BinaryMask,
    pub query_gt: BinaryMask,
}

impl Episode {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_tensor(&self.support.to_tensor(), dir.join(SUPPORT_FEAT))?;
        write_tensor(&self.query.to_tensor(), dir.join(QUERY_FEAT))?;
        write_tensor(&self.support_mask.to_tensor(), dir.join(SUPPORT_MASK))?;
        write_tensor(&self.query_gt.to_tensor(), dir.join(QUERY_GT))
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Gram-Schmidt over fresh Gaussian draws. Returns `count` unit vectors,
/// mutually orthogonal while `count <= dim`.
fn orthonormal_directions(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian(rng, dim);
        if basis.len() < dim {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

/// Picks `count` cells closest to a random centre (ties by row-major index),
/// giving a compact blob.
fn blob_mask(rng: &mut ChaCha8Rng, height: usize, width: usize, count: usize) -> Result<BinaryMask> {
    let cy = rng.random::<f64>() * height as f64;
    let cx = rng.random::<f64>() * width as f64;
    let mut cells: Vec<(f64, usize)> = (0..height * width)
        .map(|i| {
            let (r, c) = ((i / width) as f64 + 0.5, (i % width) as f64 + 0.5);
            ((r - cy).powi(2) + (c - cx).powi(2), i)
        })
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut values = vec![0u8; height * width];
    for &(_, i) in &cells[..count] {
        values[i] = 1;
    }
    BinaryMask::new(height, width, values)
}

fn draw_features(
    rng: &mut ChaCha8Rng,
    spec: &EpisodeSpec,
    mask: &BinaryMask,
    fg: &[f64],
    bg: &[f64],
) -> Result<FeatureGrid> {
    let c = spec.channels;
    let mut values = Vec::with_capacity(mask.len() * c);
    for &m in mask.values() {
        let centre = if m == 1 { fg } else { bg };
        for &mu in centre {
            let z: f64 = rng.sample(StandardNormal);
            values.push((mu + spec.noise_std * z) as f32);
        }
    }
    FeatureGrid::new(spec.height, spec.width, c, values)
}

/// Builds an episode in memory; a pure function of `(seed, spec)`.
pub fn synthesize_episode(seed: u64, spec: &EpisodeSpec) -> Result<Episode> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = orthonormal_directions(&mut rng, spec.channels, 3);
    let radius = spec.separation / std::f64::consts::SQRT_2;
    let scale = |v: &Vec<f64>| v.iter().map(|x| x * radius).collect::<Vec<_>>();
    let fg = scale(&dirs[0]);
    let bg_support = scale(&dirs[1]);
    let bg_query = if spec.shared_background { bg_support.clone() } else { scale(&dirs[2]) };

    let count = spec.foreground_cells();
    let support_mask = blob_mask(&mut rng, spec.height, spec.width, count)?;
    let query_gt = blob_mask(&mut rng, spec.height, spec.width, count)?;
    let support = draw_features(&mut rng, spec, &support_mask, &fg, &bg_support)?;
    let query = draw_features(&mut rng, spec, &query_gt, &fg, &bg_query)?;
    Ok(Episode { support, query, support_mask, query_gt })
}

/// Synthesises an episode and writes it in the episode directory layout.
pub fn generate_synthetic_episode(seed: u64, spec: &EpisodeSpec, out: &Path) -> Result<Episode> {
    let ep = synthesize_episode(seed, spec)?;
    ep.write(out)?;
    Ok(ep)
}
