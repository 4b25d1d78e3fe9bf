use rand::seq::index;
use rand::Rng;

use super::EncoderError;
use crate::collector::quantile_sorted;
use crate::tabular::RowSample;
use crate::utility::FeatureMatrix;

pub const DEFAULT_PERCENTILE: f64 = 0.95;

/// Feature-feature similarity graph. Node `q` carries column `q` of the
/// feature set restricted to the run's row sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGraph {
    /// `m` rows of `r` attribute values.
    pub attrs: Vec<Vec<f64>>,
    adjacency: Vec<bool>,
}

impl FeatureGraph {
    /// Builds a graph from explicit attributes and an undirected edge list.
    pub fn from_edges(attrs: Vec<Vec<f64>>, edges: &[(usize, usize)]) -> FeatureGraph {
        let m = attrs.len();
        let mut g = FeatureGraph {
            attrs,
            adjacency: vec![false; m * m],
        };
        for &(a, b) in edges {
            assert!(a != b && a < m && b < m, "bad edge ({a}, {b})");
            g.set_edge(a, b, true);
        }
        g
    }

    pub fn n_nodes(&self) -> usize {
        self.attrs.len()
    }

    pub fn attr_width(&self) -> usize {
        self.attrs.first().map_or(0, Vec::len)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a * self.n_nodes() + b]
    }

    fn set_edge(&mut self, a: usize, b: usize, on: bool) {
        let m = self.n_nodes();
        self.adjacency[a * m + b] = on;
        self.adjacency[b * m + a] = on;
    }

    /// Unordered edges `(a, b)` with `a < b`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let m = self.n_nodes();
        (0..m)
            .flat_map(|a| ((a + 1)..m).map(move |b| (a, b)))
            .filter(|&(a, b)| self.has_edge(a, b))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&u| self.has_edge(v, u)).collect()
    }

    pub fn is_symmetric_without_loops(&self) -> bool {
        let m = self.n_nodes();
        (0..m).all(|a| !self.has_edge(a, a) && (0..m).all(|b| self.has_edge(a, b) == self.has_edge(b, a)))
    }

    /// Relabels nodes: new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> FeatureGraph {
        let attrs = perm.iter().map(|&p| self.attrs[p].clone()).collect();
        let pos: Vec<usize> = {
            let mut inv = vec![0; perm.len()];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            inv
        };
        let edges: Vec<(usize, usize)> = self.edges().into_iter().map(|(a, b)| (pos[a], pos[b])).collect();
        FeatureGraph::from_edges(attrs, &edges)
    }
}

/// Cosine similarity on raw values; 0 if either vector is all-zero. Inputs
/// are rescaled by their largest magnitude first so very large clamped
/// values cannot overflow the dot products.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let sa = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sb = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sa == 0.0 || sb == 0.0 {
        return 0.0;
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x / sa, y / sb);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Connects every feature pair whose cosine similarity is at or above the
/// `percentile` quantile (linear interpolation) of all pair similarities.
pub fn build_graph(f: &FeatureMatrix, rows: &RowSample, percentile: f64) -> Result<FeatureGraph, EncoderError> {
    let m = f.n_cols();
    if m < 2 {
        return Err(EncoderError::SingleFeature);
    }
    let attrs: Vec<Vec<f64>> = f
        .columns()
        .iter()
        .map(|c| rows.indices.iter().map(|&i| c[i]).collect())
        .collect();
    let mut pairs = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        for b in (a + 1)..m {
            pairs.push((a, b, cosine_similarity(&attrs[a], &attrs[b])));
        }
    }
    let mut sims: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    sims.sort_by(f64::total_cmp);
    let cutoff = quantile_sorted(&sims, percentile);
    let edges: Vec<(usize, usize)> = pairs.iter().filter(|p| p.2 >= cutoff).map(|p| (p.0, p.1)).collect();
    Ok(FeatureGraph::from_edges(attrs, &edges))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentMode {
    EdgePerturb,
    AttrMask,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub edge_ratio: f64,
    pub mask_ratio: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            edge_ratio: 0.2,
            mask_ratio: 0.2,
        }
    }
}

/// Edge perturbation flips `round(edge_ratio * |E|)` pairs, each flip
/// dropping a random existing edge or adding a random absent pair with equal
/// probability (falling back to the other when one kind is unavailable).
/// Attribute masking zeroes the attribute rows of `round(mask_ratio * m)`
/// random nodes.
pub fn augment<R: Rng + ?Sized>(g: &FeatureGraph, mode: AugmentMode, cfg: &AugmentConfig, rng: &mut R) -> FeatureGraph {
    let mut out = g.clone();
    let m = g.n_nodes();
    match mode {
        AugmentMode::EdgePerturb => {
            let flips = (cfg.edge_ratio * g.edge_count() as f64).round() as usize;
            let all_pairs = m * (m - 1) / 2;
            for _ in 0..flips {
                let present = out.edges();
                let drop = match (present.is_empty(), present.len() == all_pairs) {
                    (true, true) => break,
                    (true, false) => false,
                    (false, true) => true,
                    (false, false) => rng.gen_bool(0.5),
                };
                if drop {
                    let (a, b) = present[rng.gen_range(0..present.len())];
                    out.set_edge(a, b, false);
                } else {
                    let absent: Vec<(usize, usize)> = (0..m)
                        .flat_map(|a| ((a + 1)..m).map(move |b| (a, b)))
                        .filter(|&(a, b)| !out.has_edge(a, b))
                        .collect();
                    let (a, b) = absent[rng.gen_range(0..absent.len())];
                    out.set_edge(a, b, true);
                }
            }
        }
        AugmentMode::AttrMask => {
            let k = ((cfg.mask_ratio * m as f64).round() as usize).min(m);
            for v in index::sample(rng, m, k) {
                out.attrs[v].iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }
    out
}
