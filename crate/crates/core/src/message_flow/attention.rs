use rayon::prelude::*;

use super::params::AttentionParams;
use crate::error::{Error, Result};
use crate::tensor_io::{FeatureGrid, Tensor};

/// Node features on an `H x W` grid, `C` values per node.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphNodeState {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f32>,
}

impl GraphNodeState {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidShape(format!("empty {height}x{width}x{channels} graph")));
        }
        if values.len() != height * width * channels {
            return Err(Error::InvalidShape(format!(
                "{height}x{width}x{channels} graph with {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidShape("non-finite node feature".into()));
        }
        Ok(Self { height, width, channels, values })
    }

    pub fn nodes(&self) -> usize {
        self.height * self.width
    }

    pub fn node(&self, i: usize) -> &[f32] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }

    fn node_f64(&self, i: usize) -> Vec<f64> {
        self.node(i).iter().map(|&v| v as f64).collect()
    }
}

impl From<&FeatureGrid> for GraphNodeState {
    fn from(g: &FeatureGrid) -> Self {
        Self { height: g.height(), width: g.width(), channels: g.channels(), values: g.values().to_vec() }
    }
}

impl TryFrom<GraphNodeState> for FeatureGrid {
    type Error = Error;

    fn try_from(s: GraphNodeState) -> Result<Self> {
        FeatureGrid::new(s.height, s.width, s.channels, s.values)
    }
}

/// For every target node, the source nodes it receives messages from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    pub sources: Vec<Vec<usize>>,
}

impl Adjacency {
    /// Every target connected to every source.
    pub fn complete(targets: usize, sources: usize) -> Self {
        Self { sources: vec![(0..sources).collect(); targets] }
    }

    /// Grid neighbours with truncated borders; a lone node connects to itself.
    pub fn grid(height: usize, width: usize, eight: bool) -> Self {
        Self::neighbours(height, width, eight, false)
    }

    /// Grid neighbours wrapping around both axes.
    pub fn torus(height: usize, width: usize, eight: bool) -> Self {
        Self::neighbours(height, width, eight, true)
    }

    fn neighbours(height: usize, width: usize, eight: bool, wrap: bool) -> Self {
        let offsets: &[(isize, isize)] = if eight {
            &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
        } else {
            &[(-1, 0), (0, -1), (0, 1), (1, 0)]
        };
        let (h, w) = (height as isize, width as isize);
        let sources = (0..height * width)
            .map(|i| {
                let (r, c) = ((i / width) as isize, (i % width) as isize);
                let mut out: Vec<usize> = offsets
                    .iter()
                    .filter_map(|&(dr, dc)| {
                        let (mut nr, mut nc) = (r + dr, c + dc);
                        if wrap {
                            nr = nr.rem_euclid(h);
                            nc = nc.rem_euclid(w);
                        } else if nr < 0 || nr >= h || nc < 0 || nc >= w {
                            return None;
                        }
                        let j = (nr * w + nc) as usize;
                        (j != i).then_some(j)
                    })
                    .collect();
                out.sort_unstable();
                out.dedup();
                if out.is_empty() {
                    out.push(i);
                }
                out
            })
            .collect();
        Self { sources }
    }
}

fn project(state: &GraphNodeState, map: &super::params::Linear) -> Vec<Vec<f64>> {
    (0..state.nodes()).into_par_iter().map(|i| map.apply(&state.node_f64(i))).collect()
}

fn check_widths(targets: &GraphNodeState, sources: &GraphNodeState, edges: &Adjacency, params: &AttentionParams) -> Result<()> {
    if targets.channels != sources.channels {
        return Err(Error::ShapeMismatch(format!(
            "target width {} differs from source width {}",
            targets.channels, sources.channels
        )));
    }
    params.validate(targets.channels)?;
    if edges.sources.len() != targets.nodes() {
        return Err(Error::ShapeMismatch(format!(
            "adjacency lists {} targets, graph has {}",
            edges.sources.len(),
            targets.nodes()
        )));
    }
    for (i, list) in edges.sources.iter().enumerate() {
        if list.is_empty() {
            return Err(Error::IsolatedNode(i));
        }
        if let Some(&j) = list.iter().find(|&&j| j >= sources.nodes()) {
            return Err(Error::ShapeMismatch(format!("edge {i} -> {j} leaves the source graph")));
        }
    }
    Ok(())
}

/// Softmax over connected sources of `(W_q f_i) . (W_k f_j)`, one row per
/// target in adjacency order. Uses max subtraction.
pub fn attention_weights(
    targets: &GraphNodeState,
    sources: &GraphNodeState,
    edges: &Adjacency,
    params: &AttentionParams,
) -> Result<Vec<Vec<f64>>> {
    check_widths(targets, sources, edges, params)?;
    let q = project(targets, &params.wq);
    let k = project(sources, &params.wk);
    Ok(softmax_rows(&q, &k, edges))
}

fn softmax_rows(q: &[Vec<f64>], k: &[Vec<f64>], edges: &Adjacency) -> Vec<Vec<f64>> {
    edges
        .sources
        .par_iter()
        .enumerate()
        .map(|(i, list)| {
            let logits: Vec<f64> = list
                .iter()
                .map(|&j| q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum())
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / z).collect()
        })
        .collect()
}

/// `m_i = sum_j alpha_ij W_v f_j`, returned as an `[N, C]` tensor.
pub fn attention_aggregate(
    targets: &GraphNodeState,
    sources: &GraphNodeState,
    edges: &Adjacency,
    params: &AttentionParams,
) -> Result<Tensor> {
    check_widths(targets, sources, edges, params)?;
    let q = project(targets, &params.wq);
    let k = project(sources, &params.wk);
    let v = project(sources, &params.wv);
    let alpha = softmax_rows(&q, &k, edges);
    let c = targets.channels;
    let values: Vec<f32> = edges
        .sources
        .par_iter()
        .zip(alpha.par_iter())
        .flat_map_iter(|(list, weights)| {
            let mut m = vec![0.0f64; c];
            for (&j, &a) in list.iter().zip(weights) {
                m.iter_mut().zip(&v[j]).for_each(|(acc, x)| *acc += a * x);
            }
            m.into_iter().map(|x| x as f32)
        })
        .collect();
    Tensor::from_f32(vec![targets.nodes(), c], values)
}

/// `f' = f + mlp2(relu(mlp1([f, m])))`.
pub fn residual_update(state: &GraphNodeState, messages: &Tensor, params: &AttentionParams) -> Result<GraphNodeState> {
    let c = state.channels;
    if messages.shape() != [state.nodes(), c] {
        return Err(Error::ShapeMismatch(format!(
            "messages are {:?}, expected [{}, {c}]",
            messages.shape(),
            state.nodes()
        )));
    }
    params.validate(c)?;
    let m = messages
        .as_f32()
        .ok_or_else(|| Error::Format("messages must be float32".into()))?;
    let values: Vec<f32> = (0..state.nodes())
        .into_par_iter()
        .flat_map_iter(|i| {
            let f = state.node(i);
            let input: Vec<f64> = f.iter().chain(&m[i * c..(i + 1) * c]).map(|&v| v as f64).collect();
            let hidden: Vec<f64> = params.mlp1.apply(&input).into_iter().map(|h| h.max(0.0)).collect();
            let delta = params.mlp2.apply(&hidden);
            f.iter()
                .zip(delta)
                .map(|(&x, d)| (x as f64 + d) as f32)
                .collect::<Vec<_>>()
        })
        .collect();
    GraphNodeState::new(state.height, state.width, c, values)
}

/// Aggregation followed by the residual update.
pub fn message_step(
    targets: &GraphNodeState,
    sources: &GraphNodeState,
    edges: &Adjacency,
    params: &AttentionParams,
) -> Result<GraphNodeState> {
    let messages = attention_aggregate(targets, sources, edges, params)?;
    residual_update(targets, &messages, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message_flow::Linear;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(n: usize, values: Vec<f32>) -> GraphNodeState {
        GraphNodeState::new(1, n, values.len() / n, values).unwrap()
    }

    fn params_with(wq: Linear, wk: Linear, wv: Linear) -> AttentionParams {
        let c = wq.inputs();
        AttentionParams { wq, wk, wv, mlp1: Linear::zeros(2 * c, c, true), mlp2: Linear::zeros(c, c, true) }
    }

    fn random_params(c: usize, seed: u64) -> AttentionParams {
        AttentionParams::random(c, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn singleton_softmax() {
        let p = random_params(2, 3);
        let t = state(1, vec![0.3, -0.7]);
        let s = state(1, vec![1.5, 2.0]);
        let m = attention_aggregate(&t, &s, &Adjacency::complete(1, 1), &p).unwrap();
        let expected = p.wv.apply(&[1.5, 2.0]);
        assert_eq!(m.as_f32().unwrap(), &[expected[0] as f32, expected[1] as f32]);
    }

    #[test]
    fn equal_logits_split_evenly() {
        let id = Linear::identity(2);
        let p = params_with(id.clone(), Linear::zeros(2, 2, false), id);
        let t = state(1, vec![1.0, 1.0]);
        let s = state(2, vec![1.0, 0.0, 0.0, 1.0]);
        let w = attention_weights(&t, &s, &Adjacency::complete(1, 2), &p).unwrap();
        assert_eq!(w, vec![vec![0.5, 0.5]]);
    }

    #[test]
    fn closed_form_softmax() {
        let ln3 = 3f32.ln();
        let wk = Linear::new(2, 2, vec![0.0, 0.0, ln3, 0.0], None).unwrap();
        let p = params_with(Linear::identity(2), wk, Linear::identity(2));
        let t = state(1, vec![1.0, 0.0]);
        let s = state(2, vec![1.0, 0.0, 0.0, 1.0]);
        let m = attention_aggregate(&t, &s, &Adjacency::complete(1, 2), &p).unwrap();
        let m = m.as_f32().unwrap();
        assert!((m[0] - 0.25).abs() < 1e-6 && (m[1] - 0.75).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn isolated_target() {
        let p = random_params(2, 0);
        let t = state(2, vec![1.0; 4]);
        let edges = Adjacency { sources: vec![vec![0], vec![]] };
        assert!(matches!(attention_aggregate(&t, &t, &edges, &p), Err(Error::IsolatedNode(1))));
    }

    #[test]
    fn residual_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = AttentionParams::zero_mlp(4, &mut rng);
        let s = GraphNodeState::new(2, 2, 4, (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let m = Tensor::from_f32(vec![4, 4], (0..16).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        assert_eq!(residual_update(&s, &m, &p).unwrap(), s);

        // zero messages, zero biases, zero mlp2 but nonzero mlp1
        let mut q = random_params(4, 9);
        q.mlp2 = Linear::zeros(4, 4, true);
        let zero = Tensor::from_f32(vec![4, 4], vec![0.0; 16]).unwrap();
        assert_eq!(residual_update(&s, &zero, &q).unwrap(), s);

        let wrong = Tensor::from_f32(vec![3, 4], vec![0.0; 12]).unwrap();
        assert!(matches!(residual_update(&s, &wrong, &q), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn residual_stays_finite() {
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = 4;
            let mut uniform = |n: usize| (0..n).map(|_| rng.random_range(-1.0f32..=1.0)).collect::<Vec<_>>();
            let p = AttentionParams {
                wq: Linear::new(c, c, uniform(c * c), None).unwrap(),
                wk: Linear::new(c, c, uniform(c * c), None).unwrap(),
                wv: Linear::new(c, c, uniform(c * c), None).unwrap(),
                mlp1: Linear::new(2 * c, c, uniform(2 * c * c), Some(uniform(c))).unwrap(),
                mlp2: Linear::new(c, c, uniform(c * c), Some(uniform(c))).unwrap(),
            };
            let s = GraphNodeState::new(3, 3, c, uniform(9 * c)).unwrap();
            let m = Tensor::from_f32(vec![9, c], uniform(9 * c)).unwrap();
            let out = residual_update(&s, &m, &p).unwrap();
            assert!(out.values.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn grid_adjacency_shapes() {
        let a = Adjacency::grid(3, 3, true);
        assert_eq!(a.sources[4].len(), 8);
        assert_eq!(a.sources[0], vec![1, 3, 4]);
        let a4 = Adjacency::grid(3, 3, false);
        assert_eq!(a4.sources[4], vec![1, 3, 5, 7]);
        assert_eq!(Adjacency::grid(1, 1, true).sources, vec![vec![0]]);
        let t = Adjacency::torus(4, 4, true);
        assert!(t.sources.iter().all(|s| s.len() == 8));
    }
}
