use crate::procgen::{Activation, PriorConfig};
use crate::rng::{stream, sub_rng, Rng};
use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RootDistribution {
    Normal,
    /// Uniform on `[-sqrt(3), sqrt(3)]` (unit variance).
    Uniform,
    Mixture {
        weights: [f64; 3],
        means: [f64; 3],
        sds: [f64; 3],
    },
}

/// Dense layer `y = W x + b` with `W` stored row-major as outputs × inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NodeFunction {
    Root { distribution: RootDistribution },
    /// The activation follows every layer except the last.
    Mlp { layers: Vec<DenseLayer>, activation: Activation },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmNode {
    pub parents: Vec<usize>,
    pub function: NodeFunction,
    pub noise_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Warp {
    /// Replace values with their index among `bins` quantile bins.
    Quantize { bins: usize },
    /// Replace values with normal scores of their ranks.
    RankGaussianize,
}

/// A fully sampled SCM. Nodes are in topological order (parents precede
/// children); `warps[j]` applies to feature column `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub nodes: Vec<ScmNode>,
    pub feature_nodes: Vec<usize>,
    pub target_node: usize,
    pub warps: Vec<Option<Warp>>,
    pub rows: usize,
    pub seed: u64,
}

impl ScmSpec {
    /// Structural validity: acyclic ordering, target distinct from features.
    pub fn validate(&self) -> Result<(), String> {
        for (i, node) in self.nodes.iter().enumerate() {
            if node.parents.iter().any(|&p| p >= i) {
                return Err(format!("node {i} has a parent that does not precede it"));
            }
            match &node.function {
                NodeFunction::Root { .. } if !node.parents.is_empty() => {
                    return Err(format!("root node {i} has parents"));
                }
                NodeFunction::Mlp { layers, .. } => {
                    let mut width = node.parents.len();
                    for l in layers {
                        if l.inputs != width || l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                            return Err(format!("node {i}: inconsistent layer shapes"));
                        }
                        width = l.outputs;
                    }
                    if width != 1 || node.parents.is_empty() {
                        return Err(format!("node {i}: MLP must map its parents to one output"));
                    }
                }
                _ => {}
            }
            if !(node.noise_scale >= 0.0) {
                return Err(format!("node {i}: negative noise scale"));
            }
        }
        if self.target_node >= self.nodes.len() || self.feature_nodes.iter().any(|&f| f >= self.nodes.len()) {
            return Err("node index out of range".into());
        }
        if self.feature_nodes.contains(&self.target_node) {
            return Err("target node is also a feature".into());
        }
        if self.warps.len() != self.feature_nodes.len() {
            return Err("one warp slot per feature required".into());
        }
        if self.rows < 2 {
            return Err("rows < 2".into());
        }
        Ok(())
    }

    /// All ancestors of `node`.
    pub fn ancestors(&self, node: usize) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = self.nodes[node].parents.clone();
        while let Some(p) = stack.pop() {
            if !seen[p] {
                seen[p] = true;
                stack.extend(self.nodes[p].parents.iter().copied());
            }
        }
        (0..self.nodes.len()).filter(|&i| seen[i]).collect()
    }
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn uniform_incl(rng: &mut Rng, [lo, hi]: [usize; 2]) -> usize {
    rng.random_range(lo..=hi)
}

fn log_uniform(rng: &mut Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        return lo;
    }
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn dense(rng: &mut Rng, inputs: usize, outputs: usize) -> DenseLayer {
    let scale = 1.0 / (inputs as f64).sqrt();
    DenseLayer {
        inputs,
        outputs,
        weights: (0..inputs * outputs)
            .map(|_| scale * normal(rng))
            .collect(),
        bias: (0..outputs)
            .map(|_| 0.5 * normal(rng))
            .collect(),
    }
}

fn root_distribution(rng: &mut Rng) -> RootDistribution {
    match rng.random_range(0..3) {
        0 => RootDistribution::Normal,
        1 => RootDistribution::Uniform,
        _ => {
            let raw: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..1.0));
            let total: f64 = raw.iter().sum();
            RootDistribution::Mixture {
                weights: raw.map(|w| w / total),
                means: std::array::from_fn(|_| 1.5 * normal(rng)),
                sds: std::array::from_fn(|_| rng.random_range(0.2..1.0)),
            }
        }
    }
}

/// Sample one SCM from the prior. Deterministic in `(config, seed)`.
pub fn sample_spec(config: &PriorConfig, seed: u64) -> ScmSpec {
    let mut rng = sub_rng(seed, stream::SAMPLE_SPEC, 0);
    let f = uniform_incl(&mut rng, config.feature_count_range);
    let extra = uniform_incl(&mut rng, config.extra_node_range);
    let n_nodes = f + extra;

    let mut nodes = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let is_root = i == 0 || rng.random::<f64>() < config.root_probability;
        let noise_scale = log_uniform(&mut rng, config.noise_scale_range);
        let node = if is_root {
            ScmNode {
                parents: Vec::new(),
                function: NodeFunction::Root { distribution: root_distribution(&mut rng) },
                noise_scale,
            }
        } else {
            let k = rng.random_range(1..=config.max_parents.min(i));
            let mut parents = sample_indices(&mut rng, i, k).into_vec();
            parents.sort_unstable();
            let width = uniform_incl(&mut rng, config.mlp_width_range);
            let depth = uniform_incl(&mut rng, config.mlp_depth_range);
            let activation = config.activations[rng.random_range(0..config.activations.len())];
            let mut layers = vec![dense(&mut rng, k, width)];
            for _ in 1..depth {
                layers.push(dense(&mut rng, width, width));
            }
            layers.push(dense(&mut rng, width, 1));
            ScmNode { parents, function: NodeFunction::Mlp { layers, activation }, noise_scale }
        };
        nodes.push(node);
    }

    let non_roots: Vec<usize> = (0..n_nodes).filter(|&i| !nodes[i].parents.is_empty()).collect();
    let target_node = if non_roots.is_empty() {
        rng.random_range(0..n_nodes)
    } else {
        non_roots[rng.random_range(0..non_roots.len())]
    };
    let others: Vec<usize> = (0..n_nodes).filter(|&i| i != target_node).collect();
    let mut feature_nodes: Vec<usize> = sample_indices(&mut rng, others.len(), f)
        .into_iter()
        .map(|k| others[k])
        .collect();

    let mut spec = ScmSpec {
        nodes,
        feature_nodes: Vec::new(),
        target_node,
        warps: Vec::new(),
        rows: config.rows,
        seed,
    };
    // Make sure at least one feature is an ancestor of the target when possible.
    let ancestors = spec.ancestors(target_node);
    if !ancestors.is_empty() && !feature_nodes.iter().any(|n| ancestors.contains(n)) {
        let slot = rng.random_range(0..feature_nodes.len());
        feature_nodes[slot] = ancestors[rng.random_range(0..ancestors.len())];
    }
    spec.warps = feature_nodes
        .iter()
        .map(|_| {
            (rng.random::<f64>() < config.warp_probability).then(|| {
                if rng.random::<bool>() {
                    Warp::Quantize { bins: rng.random_range(2..=10) }
                } else {
                    Warp::RankGaussianize
                }
            })
        })
        .collect();
    spec.feature_nodes = feature_nodes;
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_counts() {
        let config = PriorConfig {
            feature_count_range: [2, 2],
            extra_node_range: [1, 1],
            ..PriorConfig::default()
        };
        for seed in 0..20 {
            let spec = sample_spec(&config, seed);
            assert_eq!(spec.nodes.len(), 3);
            assert_eq!(spec.feature_nodes.len(), 2);
            assert!(!spec.feature_nodes.contains(&spec.target_node));
            spec.validate().unwrap();
        }
    }

    #[test]
    fn deterministic() {
        let c = PriorConfig::default();
        assert_eq!(sample_spec(&c, 42), sample_spec(&c, 42));
        assert_ne!(sample_spec(&c, 42), sample_spec(&c, 43));
    }

    #[test]
    fn feature_counts_cover_every_decile() {
        let c = PriorConfig::default();
        let mut hist = [0usize; 10];
        for seed in 0..1000 {
            let spec = sample_spec(&c, seed);
            let f = spec.feature_nodes.len();
            assert!((2..=100).contains(&f));
            hist[((f - 2) * 10 / 99).min(9)] += 1;
            spec.validate().unwrap();
        }
        assert!(hist.iter().all(|&h| h > 0), "{hist:?}");
    }

    #[test]
    fn target_has_a_feature_ancestor_when_it_has_ancestors() {
        let c = PriorConfig::default();
        for seed in 0..200 {
            let spec = sample_spec(&c, seed);
            let anc = spec.ancestors(spec.target_node);
            if !anc.is_empty() {
                assert!(spec.feature_nodes.iter().any(|f| anc.contains(f)), "seed {seed}");
            }
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = sample_spec(&PriorConfig::default(), 9);
        let json = serde_json::to_string(&spec).unwrap();
        let back: ScmSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }
}
