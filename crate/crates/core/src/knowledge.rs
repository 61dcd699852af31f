//! Knowledge tree: historical sequences correlated with the target's recent
//! window, grouped in time stages, pruned, deduplicated and capped, each
//! carrying the completion the correlation model derives from it.
//!
//! Construction follows four steps:
//!
//! 1. fix the correlation threshold, the per-layer cap `Y` and the total
//!    cap `Z`;
//! 2. in every stage keep the nodes meeting the threshold, at most the `Y`
//!    best;
//! 3. drop layers too similar to a more recent kept layer;
//! 4. keep the global top `Z`; if nothing survived, lower the threshold and
//!    repeat from step 2.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::correlation::{pearson, CenteredRef, WindowMatch};
use crate::error::{check_len, Error, Result};
use crate::fracprog::{forecast, Bounds};
use crate::series::SiteGrid;

pub const TREE_SCHEMA_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub corr_threshold: f64,
    pub max_neighbors: usize,
    pub total_cap: usize,
    pub layer_sim_threshold: f64,
    pub relax_step: f64,
    pub corr_floor: f64,
    pub stage_len: usize,
    pub m: usize,
    pub n: usize,
    /// Also scan the target's own past.
    pub include_target_site: bool,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            corr_threshold: 0.8,
            max_neighbors: 5,
            total_cap: 10,
            layer_sim_threshold: 0.95,
            relax_step: 0.05,
            corr_floor: 0.5,
            stage_len: 144,
            m: 36,
            n: 6,
            include_target_site: true,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.corr_floor
            && self.corr_floor <= self.corr_threshold
            && self.corr_threshold <= 1.0)
        {
            return Err(Error::param(
                "corr_threshold",
                "need 0 < corr_floor <= corr_threshold <= 1",
            ));
        }
        if self.max_neighbors == 0 {
            return Err(Error::param("max_neighbors", "must be >= 1"));
        }
        if self.total_cap == 0 {
            return Err(Error::param("total_cap", "must be >= 1"));
        }
        if !(self.relax_step > 0.0) {
            return Err(Error::param("relax_step", "must be positive"));
        }
        if self.stage_len == 0 {
            return Err(Error::param("stage_len", "must be positive"));
        }
        if self.m < 2 || self.n == 0 {
            return Err(Error::param("m/n", "need m >= 2 and n >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeNode {
    pub source_site: String,
    pub site_index: usize,
    pub stage_id: usize,
    pub offset: usize,
    /// `m` values matched against the recent window, then `n` continuation values.
    pub sequence: Vec<f64>,
    /// Signed correlation of the first `m` values with the recent window.
    pub rho: f64,
    pub prediction: Option<Vec<f64>>,
    /// Correlation achieved by the completion behind `prediction`.
    pub prediction_rho: Option<f64>,
}

impl KnowledgeNode {
    /// Best first: larger `|rho|`, then earlier offset, then smaller site index.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .rho
            .abs()
            .total_cmp(&self.rho.abs())
            .then(self.offset.cmp(&other.offset))
            .then(self.site_index.cmp(&other.site_index))
    }

    /// Encoder input order: the reverse of the rank order, ascending `|rho|`.
    pub fn ascending_cmp(&self, other: &Self) -> Ordering {
        other.rank_cmp(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeLayer {
    pub stage_id: usize,
    /// Ascending `|rho|`.
    pub nodes: Vec<KnowledgeNode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeTree {
    pub target_site: String,
    pub recent_window: Vec<f64>,
    /// Ordered by stage.
    pub layers: Vec<KnowledgeLayer>,
    pub params_used: TreeParams,
    /// Rounds of threshold relaxation needed to obtain a nonempty tree.
    pub relaxations: usize,
}

impl KnowledgeTree {
    pub fn node_count(&self) -> usize {
        self.layers.iter().map(|l| l.nodes.len()).sum()
    }

    /// Every node across layers in ascending `|rho|`.
    pub fn ordered_nodes(&self) -> Vec<KnowledgeNode> {
        let mut nodes: Vec<KnowledgeNode> = self
            .layers
            .iter()
            .flat_map(|l| l.nodes.iter().cloned())
            .collect();
        nodes.sort_by(KnowledgeNode::ascending_cmp);
        nodes
    }
}

/// Offsets `[start, end)` of each stage, oldest first, aligned so the last
/// stage ends at the latest window with a fully observed continuation.
fn stage_offsets(len: usize, params: &TreeParams) -> Result<Vec<(usize, usize)>> {
    let required = params.stage_len + params.m + params.n;
    if len < required {
        return Err(Error::InsufficientData {
            required,
            actual: len,
        });
    }
    let candidates = len - params.m - params.n + 1;
    let stages = candidates / params.stage_len;
    let first = candidates - stages * params.stage_len;
    Ok((0..stages)
        .map(|k| {
            let start = first + k * params.stage_len;
            (start, start + params.stage_len)
        })
        .collect())
}

/// One candidate node per site and stage: the window inside the stage with
/// the largest `|rho|` against `recent` (earliest offset on ties). Sites
/// whose windows are all flat in a stage contribute nothing to it.
pub fn segment_layers(
    grid: &SiteGrid,
    recent: &[f64],
    params: &TreeParams,
) -> Result<Vec<KnowledgeLayer>> {
    params.validate()?;
    check_len(params.m, recent.len())?;
    let stages = stage_offsets(grid.len(), params)?;
    let reference = CenteredRef::new(recent)?;
    let (m, n) = (params.m, params.n);

    let mut layers: Vec<KnowledgeLayer> = (0..stages.len())
        .map(|stage_id| KnowledgeLayer {
            stage_id,
            nodes: Vec::new(),
        })
        .collect();
    for (site_index, series) in grid.series().iter().enumerate() {
        if !params.include_target_site && site_index == grid.target_index() {
            continue;
        }
        let values = series.values();
        for (stage_id, &(start, end)) in stages.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for offset in start..end {
                if let Some(rho) = reference.rho(&values[offset..offset + m]) {
                    if best.is_none_or(|(_, b)| rho.abs() > b.abs()) {
                        best = Some((offset, rho));
                    }
                }
            }
            if let Some((offset, rho)) = best {
                layers[stage_id].nodes.push(KnowledgeNode {
                    source_site: grid.sites()[site_index].id.clone(),
                    site_index,
                    stage_id,
                    offset,
                    sequence: values[offset..offset + m + n].to_vec(),
                    rho,
                    prediction: None,
                    prediction_rho: None,
                });
            }
        }
    }
    for layer in &mut layers {
        layer.nodes.sort_by(KnowledgeNode::ascending_cmp);
    }
    Ok(layers)
}

/// Keeps nodes with `|rho| >= corr_threshold`, at most `max_neighbors` of
/// them (the best by `|rho|`). A layer with no survivor comes back empty.
pub fn prune_layer(
    layer: &KnowledgeLayer,
    corr_threshold: f64,
    max_neighbors: usize,
) -> KnowledgeLayer {
    let mut kept: Vec<KnowledgeNode> = layer
        .nodes
        .iter()
        .filter(|nd| nd.rho.abs() >= corr_threshold)
        .cloned()
        .collect();
    kept.sort_by(KnowledgeNode::rank_cmp);
    kept.truncate(max_neighbors);
    kept.reverse();
    KnowledgeLayer {
        stage_id: layer.stage_id,
        nodes: kept,
    }
}

/// Mean `|rho|` between the two layers' node sequences paired by rank.
pub fn layer_similarity(a: &KnowledgeLayer, b: &KnowledgeLayer) -> f64 {
    let mut ra: Vec<&KnowledgeNode> = a.nodes.iter().collect();
    let mut rb: Vec<&KnowledgeNode> = b.nodes.iter().collect();
    ra.sort_by(|x, y| x.rank_cmp(y));
    rb.sort_by(|x, y| x.rank_cmp(y));
    let pairs = ra.len().min(rb.len());
    if pairs == 0 {
        return 0.0;
    }
    let total: f64 = ra
        .iter()
        .zip(&rb)
        .map(|(x, y)| pearson(&x.sequence, &y.sequence).map_or(0.0, |c| c.rho.abs()))
        .sum();
    total / pairs as f64
}

/// Walks layers from the most recent stage backwards, dropping empty layers
/// and any layer whose similarity to an already kept (later) layer reaches
/// `layer_sim_threshold`.
pub fn dedupe_layers(layers: Vec<KnowledgeLayer>, layer_sim_threshold: f64) -> Vec<KnowledgeLayer> {
    let mut by_time = layers;
    by_time.sort_by_key(|l| l.stage_id);
    let mut kept: Vec<KnowledgeLayer> = Vec::new();
    for layer in by_time.into_iter().rev() {
        if layer.nodes.is_empty() {
            continue;
        }
        if kept
            .iter()
            .all(|k| layer_similarity(&layer, k) < layer_sim_threshold)
        {
            kept.push(layer);
        }
    }
    kept.reverse();
    kept
}

pub fn assemble_tree(
    grid: &SiteGrid,
    recent: &[f64],
    params: &TreeParams,
) -> Result<KnowledgeTree> {
    let raw = segment_layers(grid, recent, params)?;
    let mut relaxations = 0;
    loop {
        let threshold = params.corr_threshold - relaxations as f64 * params.relax_step;
        let pruned: Vec<KnowledgeLayer> = raw
            .iter()
            .map(|l| prune_layer(l, threshold, params.max_neighbors))
            .collect();
        let mut layers = dedupe_layers(pruned, params.layer_sim_threshold);
        let total: usize = layers.iter().map(|l| l.nodes.len()).sum();
        if total == 0 {
            let next = params.corr_threshold - (relaxations + 1) as f64 * params.relax_step;
            if next < params.corr_floor - 1e-12 {
                return Err(Error::EmptyTree {
                    floor: params.corr_floor,
                });
            }
            relaxations += 1;
            continue;
        }
        if total > params.total_cap {
            let mut all: Vec<&KnowledgeNode> = layers.iter().flat_map(|l| &l.nodes).collect();
            all.sort_by(|a, b| a.rank_cmp(b));
            let keep: Vec<(usize, usize)> = all[..params.total_cap]
                .iter()
                .map(|nd| (nd.site_index, nd.offset))
                .collect();
            for layer in &mut layers {
                layer
                    .nodes
                    .retain(|nd| keep.contains(&(nd.site_index, nd.offset)));
            }
            layers.retain(|l| !l.nodes.is_empty());
        }
        return Ok(KnowledgeTree {
            target_site: grid.target_site().to_string(),
            recent_window: recent.to_vec(),
            layers,
            params_used: TreeParams {
                corr_threshold: threshold,
                ..params.clone()
            },
            relaxations,
        });
    }
}

/// Completes every node's horizon against the tree's recent window. Nodes
/// whose solve fails are dropped with a warning.
pub fn attach_predictions(tree: &KnowledgeTree, bounds: Bounds) -> Result<KnowledgeTree> {
    if tree.node_count() == 0 {
        return Err(Error::EmptyTree {
            floor: tree.params_used.corr_floor,
        });
    }
    let m = tree.recent_window.len();
    let mut out = tree.clone();
    for layer in &mut out.layers {
        let mut kept = Vec::with_capacity(layer.nodes.len());
        for mut node in layer.nodes.drain(..) {
            let matched = WindowMatch {
                source_site: node.source_site.clone(),
                offset: node.offset,
                his: node.sequence[..m].to_vec(),
                reference: node.sequence[m..].to_vec(),
                rho: node.rho,
                pred: None,
            };
            match forecast(&matched, &tree.recent_window, bounds) {
                Ok((filled, sol)) => {
                    node.prediction = filled.pred;
                    node.prediction_rho = Some(sol.rho_achieved);
                    kept.push(node);
                }
                Err(e) => warn!(
                    "dropping node {}@{} from the knowledge tree: {e}",
                    node.source_site, node.offset
                ),
            }
        }
        layer.nodes = kept;
    }
    out.layers.retain(|l| !l.nodes.is_empty());
    if out.node_count() == 0 {
        return Err(Error::Contract(
            "correlation model failed on every knowledge node".into(),
        ));
    }
    Ok(out)
}

#[derive(Serialize)]
struct TreeDocumentRef<'a> {
    schema_version: u64,
    tree: &'a KnowledgeTree,
}

pub fn save_tree(tree: &KnowledgeTree, path: &Path) -> Result<()> {
    let doc = TreeDocumentRef {
        schema_version: TREE_SCHEMA_VERSION,
        tree,
    };
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub fn load_tree(path: &Path) -> Result<KnowledgeTree> {
    let mut doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let found = doc
        .get("schema_version")
        .and_then(serde_json::Value::as_u64);
    if found != Some(TREE_SCHEMA_VERSION) {
        return Err(Error::SchemaVersion {
            found,
            expected: TREE_SCHEMA_VERSION,
        });
    }
    let tree = doc
        .get_mut("tree")
        .map(serde_json::Value::take)
        .ok_or_else(|| Error::Contract("tree document has no `tree` field".into()))?;
    Ok(serde_json::from_value(tree)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{lattice_sites, synth_start_time, WindSeries};

    fn node(site: usize, offset: usize, rho: f64) -> KnowledgeNode {
        KnowledgeNode {
            source_site: format!("S{}", site + 1),
            site_index: site,
            stage_id: 0,
            offset,
            sequence: vec![1.0, 2.0, 3.0],
            rho,
            prediction: None,
            prediction_rho: None,
        }
    }

    fn grid_from(rows: Vec<Vec<f64>>) -> SiteGrid {
        let sites = lattice_sites(rows.len());
        let series = sites
            .iter()
            .zip(rows)
            .map(|(s, v)| WindSeries::new(s.id.clone(), synth_start_time(), v).unwrap())
            .collect();
        SiteGrid::new(sites, series, "S1").unwrap()
    }

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(1.0..9.0)).collect()
    }

    #[test]
    fn prune_keeps_top_y_above_threshold() {
        let layer = KnowledgeLayer {
            stage_id: 0,
            nodes: vec![
                node(0, 0, 0.9),
                node(1, 0, -0.85),
                node(2, 0, 0.7),
                node(3, 0, 0.3),
            ],
        };
        let pruned = prune_layer(&layer, 0.8, 2);
        let rhos: Vec<f64> = pruned.nodes.iter().map(|n| n.rho).collect();
        assert_eq!(rhos, vec![-0.85, 0.9]);
    }

    #[test]
    fn prune_all_below_gives_empty_layer() {
        let layer = KnowledgeLayer {
            stage_id: 3,
            nodes: vec![node(0, 0, 0.2), node(1, 0, 0.1)],
        };
        assert!(prune_layer(&layer, 0.5, 4).nodes.is_empty());
    }

    #[test]
    fn prune_no_op_bounds_only_reorders() {
        let layer = KnowledgeLayer {
            stage_id: 0,
            nodes: vec![node(0, 0, 0.9), node(1, 4, 0.2), node(2, 1, -0.5)],
        };
        let pruned = prune_layer(&layer, 0.0, 10);
        let rhos: Vec<f64> = pruned.nodes.iter().map(|n| n.rho).collect();
        assert_eq!(rhos, vec![0.2, -0.5, 0.9]);
    }

    #[test]
    fn prune_tie_break_prefers_earlier_offset_then_site() {
        let layer = KnowledgeLayer {
            stage_id: 0,
            nodes: vec![node(2, 5, 0.9), node(1, 5, 0.9), node(0, 9, 0.9)],
        };
        let pruned = prune_layer(&layer, 0.5, 2);
        let kept: Vec<(usize, usize)> = pruned
            .nodes
            .iter()
            .map(|n| (n.site_index, n.offset))
            .collect();
        assert_eq!(kept, vec![(2, 5), (1, 5)]);
    }

    #[test]
    fn identical_layers_keep_the_later_one() {
        let a = KnowledgeLayer {
            stage_id: 1,
            nodes: vec![node(0, 3, 0.9)],
        };
        let b = KnowledgeLayer {
            stage_id: 4,
            nodes: vec![node(0, 40, 0.9)],
        };
        let kept = dedupe_layers(vec![a, b], 0.95);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].stage_id, 4);
    }

    #[test]
    fn uncorrelated_layers_both_survive() {
        let mut a = node(0, 0, 0.9);
        a.sequence = noise(40, 1);
        let mut b = node(1, 0, 0.9);
        b.sequence = noise(40, 2);
        let sim = pearson(&a.sequence, &b.sequence).unwrap().rho.abs();
        assert!(sim < 0.95);
        let la = KnowledgeLayer {
            stage_id: 0,
            nodes: vec![a],
        };
        let lb = KnowledgeLayer {
            stage_id: 1,
            nodes: vec![b],
        };
        assert_eq!(dedupe_layers(vec![la, lb], 0.95).len(), 2);
    }

    #[test]
    fn single_layer_unchanged() {
        let la = KnowledgeLayer {
            stage_id: 2,
            nodes: vec![node(0, 0, 0.9)],
        };
        assert_eq!(dedupe_layers(vec![la.clone()], 0.95), vec![la]);
    }

    #[test]
    fn paper_shaped_grid_has_36_layers_of_31() {
        let params = TreeParams {
            stage_len: 10,
            m: 6,
            n: 2,
            ..Default::default()
        };
        let len = 36 * 10 + 8;
        let grid = grid_from((0..31).map(|s| noise(len, s)).collect());
        let recent = noise(6, 999);
        let layers = segment_layers(&grid, &recent, &params).unwrap();
        assert_eq!(layers.len(), 36);
        assert!(layers.iter().all(|l| l.nodes.len() <= 31));
        assert!(layers.windows(2).all(|w| w[0].stage_id < w[1].stage_id));
    }

    #[test]
    fn one_stage_history() {
        let params = TreeParams {
            stage_len: 10,
            m: 4,
            n: 2,
            ..Default::default()
        };
        let grid = grid_from(vec![noise(16, 3)]);
        assert_eq!(
            segment_layers(&grid, &noise(4, 4), &params).unwrap().len(),
            1
        );
        let short = grid_from(vec![noise(15, 3)]);
        assert!(matches!(
            segment_layers(&short, &noise(4, 4), &params),
            Err(Error::InsufficientData { .. })
        ));
    }

    fn planted_grid(copies: &[(usize, usize)], len: usize, recent: &[f64]) -> SiteGrid {
        // a sawtooth uncorrelated-ish with the planted shape elsewhere
        let mut rows: Vec<Vec<f64>> = (0..3).map(|s| noise(len, 100 + s as u64)).collect();
        for &(site, offset) in copies {
            rows[site][offset..offset + recent.len()].copy_from_slice(recent);
        }
        grid_from(rows)
    }

    #[test]
    fn planted_windows_form_the_tree() {
        let recent = vec![1.0, 5.0, 2.0, 8.0, 3.0, 7.0, 4.0, 6.0];
        let params = TreeParams {
            stage_len: 40,
            m: 8,
            n: 2,
            corr_threshold: 0.995,
            corr_floor: 0.99,
            ..Default::default()
        };
        let grid = planted_grid(&[(0, 10), (1, 70), (2, 150)], 210, &recent);
        // oracle: exhaustive scan of every window with a continuation
        let mut oracle = Vec::new();
        for (s, series) in grid.series().iter().enumerate() {
            for o in 0..=210 - 10 {
                if let Ok(c) = pearson(&recent, &series.values()[o..o + 8]) {
                    if c.rho.abs() >= 0.995 {
                        oracle.push((s, o));
                    }
                }
            }
        }
        assert_eq!(oracle.len(), 3);
        let tree = assemble_tree(&grid, &recent, &params).unwrap();
        assert_eq!(tree.node_count(), 3);
        assert_eq!(tree.relaxations, 0);
        let mut got: Vec<(usize, usize)> = tree
            .ordered_nodes()
            .iter()
            .map(|n| (n.site_index, n.offset))
            .collect();
        got.sort();
        assert_eq!(got, oracle);
    }

    #[test]
    fn empty_when_nothing_reaches_the_floor() {
        let recent = noise(8, 77);
        let params = TreeParams {
            stage_len: 20,
            m: 8,
            n: 2,
            corr_threshold: 1.0,
            corr_floor: 0.999,
            relax_step: 0.0005,
            ..Default::default()
        };
        let grid = grid_from(vec![noise(100, 5), noise(100, 6)]);
        assert!(matches!(
            assemble_tree(&grid, &recent, &params),
            Err(Error::EmptyTree { .. })
        ));
    }

    #[test]
    fn relaxes_until_candidates_appear() {
        let recent = vec![1.0, 5.0, 2.0, 8.0, 3.0, 7.0, 4.0, 6.0];
        let mut noisy = recent.clone();
        noisy[3] = 5.0;
        let r = pearson(&recent, &noisy).unwrap().rho;
        assert!(r < 0.95 && r > 0.85);
        let mut rows = vec![noise(120, 1)];
        rows[0][30..38].copy_from_slice(&noisy);
        let grid = grid_from(rows);
        let params = TreeParams {
            stage_len: 30,
            m: 8,
            n: 2,
            corr_threshold: 0.99,
            corr_floor: 0.5,
            ..Default::default()
        };
        let tree = assemble_tree(&grid, &recent, &params).unwrap();
        assert!(tree.relaxations > 0);
        assert!(tree.params_used.corr_threshold <= r + 1e-12);
        assert!(tree.params_used.corr_threshold > r - params.relax_step);
        assert!(tree
            .ordered_nodes()
            .iter()
            .all(|n| n.rho.abs() >= tree.params_used.corr_threshold));
    }

    #[test]
    fn total_cap_keeps_largest() {
        let recent = noise(6, 50);
        let params = TreeParams {
            stage_len: 12,
            m: 6,
            n: 1,
            corr_threshold: 0.05,
            corr_floor: 0.05,
            max_neighbors: 5,
            total_cap: 10,
            layer_sim_threshold: 1.1,
            ..Default::default()
        };
        let grid = grid_from((0..5).map(|s| noise(12 * 6 + 7, 60 + s)).collect());
        let raw = segment_layers(&grid, &recent, &params).unwrap();
        let mut all: Vec<f64> = raw
            .iter()
            .map(|l| prune_layer(l, 0.05, 5))
            .flat_map(|l| l.nodes.into_iter().map(|n| n.rho.abs()))
            .collect();
        assert!(all.len() > 10);
        all.sort_by(|a, b| b.total_cmp(a));
        let tree = assemble_tree(&grid, &recent, &params).unwrap();
        let got: Vec<f64> = tree
            .ordered_nodes()
            .iter()
            .rev()
            .map(|n| n.rho.abs())
            .collect();
        assert_eq!(got, all[..10].to_vec());
    }

    #[test]
    fn collinear_node_predicts_its_tail() {
        let recent = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let tree = KnowledgeTree {
            target_site: "S1".into(),
            recent_window: recent.clone(),
            layers: vec![KnowledgeLayer {
                stage_id: 0,
                nodes: vec![KnowledgeNode {
                    sequence: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
                    rho: 1.0,
                    ..node(1, 0, 1.0)
                }],
            }],
            params_used: TreeParams {
                m: 6,
                n: 1,
                ..Default::default()
            },
            relaxations: 0,
        };
        let done = attach_predictions(&tree, Bounds::new(0.0, 20.0).unwrap()).unwrap();
        let nd = &done.layers[0].nodes[0];
        assert!((nd.prediction.as_ref().unwrap()[0] - 7.0).abs() < 1e-9);
        assert!((nd.prediction_rho.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn failing_nodes_are_dropped() {
        let recent = vec![1.0, 2.0, 3.0];
        let mut flat = node(0, 0, 0.9);
        flat.sequence = vec![4.0, 4.0, 4.0, 4.0];
        let mut good = node(1, 0, 0.95);
        good.sequence = vec![1.0, 2.0, 3.0, 4.0];
        let tree = KnowledgeTree {
            target_site: "S1".into(),
            recent_window: recent,
            layers: vec![KnowledgeLayer {
                stage_id: 0,
                nodes: vec![flat.clone(), good],
            }],
            params_used: TreeParams {
                m: 3,
                n: 1,
                ..Default::default()
            },
            relaxations: 0,
        };
        let done = attach_predictions(&tree, Bounds::new(0.0, 10.0).unwrap()).unwrap();
        assert_eq!(done.node_count(), 1);
        let only_flat = KnowledgeTree {
            layers: vec![KnowledgeLayer {
                stage_id: 0,
                nodes: vec![flat],
            }],
            ..tree
        };
        assert!(attach_predictions(&only_flat, Bounds::new(0.0, 10.0).unwrap()).is_err());
    }

    #[test]
    fn save_load_round_trip_and_errors() {
        let recent = vec![1.0, 5.0, 2.0, 8.0, 3.0, 7.0, 4.0, 6.0];
        let params = TreeParams {
            stage_len: 40,
            m: 8,
            n: 2,
            corr_threshold: 0.6,
            ..Default::default()
        };
        let grid = planted_grid(&[(1, 70)], 210, &recent);
        let tree = assemble_tree(&grid, &recent, &params).unwrap();
        let tree = attach_predictions(&tree, Bounds::new(0.0, 15.0).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.json");
        save_tree(&tree, &path).unwrap();
        assert_eq!(load_tree(&path).unwrap(), tree);

        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_tree(&path), Err(Error::Json(_))));

        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc.as_object_mut().unwrap().remove("schema_version");
        fs::write(&path, doc.to_string()).unwrap();
        assert!(matches!(
            load_tree(&path),
            Err(Error::SchemaVersion { found: None, .. })
        ));
    }
}
