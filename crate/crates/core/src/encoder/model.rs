use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::graph::FeatureGraph;
use crate::nn::{relu, relu_backward, Dense, Param, Parameterized};

pub const EMBED_DIM: usize = 64;

/// Several graphs stacked into one node matrix. Attribute rows are
/// standardized per node (zero mean, unit variance; constant rows become
/// zero) so crosses of wildly different scale share one input projection.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    pub x: Array2<f64>,
    /// Global neighbor indices of every node.
    pub neighbors: Vec<Vec<usize>>,
    /// `(first node, node count)` of every graph.
    pub spans: Vec<(usize, usize)>,
}

impl GraphBatch {
    pub fn new(graphs: &[&FeatureGraph]) -> GraphBatch {
        let width = graphs[0].attr_width();
        let total: usize = graphs.iter().map(|g| g.n_nodes()).sum();
        let mut x = Array2::zeros((total, width));
        let mut neighbors = Vec::with_capacity(total);
        let mut spans = Vec::with_capacity(graphs.len());
        let mut base = 0;
        for g in graphs {
            assert_eq!(g.attr_width(), width, "graphs of one batch need equal attribute width");
            for (v, row) in g.attrs.iter().enumerate() {
                let n = row.len() as f64;
                let mean = row.iter().sum::<f64>() / n;
                let sd = (row.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
                if sd > 1e-12 && sd.is_finite() {
                    for (k, a) in row.iter().enumerate() {
                        x[[base + v, k]] = (a - mean) / sd;
                    }
                }
                neighbors.push(g.neighbors(v).into_iter().map(|u| u + base).collect());
            }
            spans.push((base, g.n_nodes()));
            base += g.n_nodes();
        }
        GraphBatch { x, neighbors, spans }
    }

    pub fn n_graphs(&self) -> usize {
        self.spans.len()
    }
}

/// Mean of neighbor rows; isolated nodes get the zero vector.
fn neighbor_mean(h: ArrayView2<f64>, neighbors: &[Vec<usize>]) -> Array2<f64> {
    let mut out = Array2::zeros(h.raw_dim());
    for (v, nb) in neighbors.iter().enumerate() {
        if nb.is_empty() {
            continue;
        }
        let mut row = out.row_mut(v);
        for &u in nb {
            row += &h.row(u);
        }
        row /= nb.len() as f64;
    }
    out
}

/// Transpose of [`neighbor_mean`]: scatters each node's gradient back to its
/// neighbors.
fn neighbor_mean_backward(d: ArrayView2<f64>, neighbors: &[Vec<usize>]) -> Array2<f64> {
    let mut out = Array2::zeros(d.raw_dim());
    for (v, nb) in neighbors.iter().enumerate() {
        if nb.is_empty() {
            continue;
        }
        let scaled = &d.row(v) / nb.len() as f64;
        for &u in nb {
            let mut row = out.row_mut(u);
            row += &scaled;
        }
    }
    out
}

/// `ReLU(W · concat(h_v, mean of neighbor h_u) + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnLayer {
    pub dense: Dense,
}

#[derive(Debug, Clone)]
pub struct GnnCache {
    concat: Array2<f64>,
    pre: Array2<f64>,
}

impl GnnLayer {
    pub fn new<R: Rng + ?Sized>(name: &str, dim: usize, rng: &mut R) -> GnnLayer {
        GnnLayer {
            dense: Dense::new(name, 2 * dim, dim, rng),
        }
    }

    pub fn forward(&self, h: ArrayView2<f64>, neighbors: &[Vec<usize>]) -> (Array2<f64>, GnnCache) {
        let agg = neighbor_mean(h, neighbors);
        let concat = concatenate![Axis(1), h, agg];
        let pre = self.dense.forward(concat.view());
        (relu(&pre), GnnCache { concat, pre })
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. `h`.
    pub fn backward(&mut self, cache: &GnnCache, neighbors: &[Vec<usize>], dy: &Array2<f64>) -> Array2<f64> {
        let dpre = relu_backward(&cache.pre, dy);
        let dcat = self.dense.backward(cache.concat.view(), dpre.view());
        let dim = dcat.ncols() / 2;
        let mut dh = dcat.slice(s![.., ..dim]).to_owned();
        dh += &neighbor_mean_backward(dcat.slice(s![.., dim..]), neighbors);
        dh
    }
}

impl Parameterized for GnnLayer {
    fn params(&self) -> Vec<&Param> {
        self.dense.params()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.dense.params_mut()
    }
}

/// Two-layer perceptron `W2 · ReLU(W1 h + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub first: Dense,
    pub second: Dense,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
}

impl ProjectionHead {
    pub fn new<R: Rng + ?Sized>(name: &str, dim: usize, rng: &mut R) -> ProjectionHead {
        ProjectionHead {
            first: Dense::new(&format!("{name}.0"), dim, dim, rng),
            second: Dense::new(&format!("{name}.1"), dim, dim, rng),
        }
    }

    pub fn forward(&self, h: ArrayView2<f64>) -> (Array2<f64>, HeadCache) {
        let pre = self.first.forward(h);
        let hidden = relu(&pre);
        let z = self.second.forward(hidden.view());
        (
            z,
            HeadCache {
                input: h.to_owned(),
                pre,
                hidden,
            },
        )
    }

    pub fn backward(&mut self, cache: &HeadCache, dz: &Array2<f64>) -> Array2<f64> {
        let dhid = self.second.backward(cache.hidden.view(), dz.view());
        let dpre = relu_backward(&cache.pre, &dhid);
        self.first.backward(cache.input.view(), dpre.view())
    }
}

impl Parameterized for ProjectionHead {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.first.params();
        v.extend(self.second.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.first.params_mut();
        v.extend(self.second.params_mut());
        v
    }
}

/// Input projection, two GNN layers, mean readout and projection head.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub input: Dense,
    pub layers: [GnnLayer; 2],
    pub head: ProjectionHead,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    x: Array2<f64>,
    neighbors: Vec<Vec<usize>>,
    spans: Vec<(usize, usize)>,
    gnn: Vec<GnnCache>,
    head: HeadCache,
}

#[derive(Debug, Clone)]
pub struct Encoded {
    /// Graph-level readouts, one row per graph.
    pub h: Array2<f64>,
    /// Projected embeddings, one row per graph.
    pub z: Array2<f64>,
    pub cache: EncoderCache,
}

impl EncoderModel {
    pub fn new<R: Rng + ?Sized>(attr_width: usize, rng: &mut R) -> EncoderModel {
        EncoderModel {
            input: Dense::new("encoder.input", attr_width, EMBED_DIM, rng),
            layers: [
                GnnLayer::new("encoder.gnn0", EMBED_DIM, rng),
                GnnLayer::new("encoder.gnn1", EMBED_DIM, rng),
            ],
            head: ProjectionHead::new("encoder.head", EMBED_DIM, rng),
        }
    }

    pub fn attr_width(&self) -> usize {
        self.input.input_dim()
    }

    pub fn forward(&self, batch: &GraphBatch) -> Encoded {
        let mut node = self.input.forward(batch.x.view());
        let mut gnn = Vec::with_capacity(2);
        for layer in &self.layers {
            let (next, cache) = layer.forward(node.view(), &batch.neighbors);
            node = next;
            gnn.push(cache);
        }
        let mut h = Array2::zeros((batch.n_graphs(), EMBED_DIM));
        for (g, &(start, len)) in batch.spans.iter().enumerate() {
            let block = node.slice(s![start..start + len, ..]);
            h.row_mut(g).assign(&block.mean_axis(Axis(0)).expect("graphs have nodes"));
        }
        let (z, head) = self.head.forward(h.view());
        Encoded {
            h,
            z,
            cache: EncoderCache {
                x: batch.x.clone(),
                neighbors: batch.neighbors.clone(),
                spans: batch.spans.clone(),
                gnn,
                head,
            },
        }
    }

    /// Accumulates parameter gradients for an upstream gradient on `z`.
    pub fn backward(&mut self, cache: &EncoderCache, dz: &Array2<f64>) {
        let dh = self.head.backward(&cache.head, dz);
        let total = cache.x.nrows();
        let mut dnode = Array2::zeros((total, EMBED_DIM));
        for (g, &(start, len)) in cache.spans.iter().enumerate() {
            let share = &dh.row(g) / len as f64;
            for v in start..start + len {
                dnode.row_mut(v).assign(&share);
            }
        }
        for (layer, lc) in self.layers.iter_mut().zip(&cache.gnn).rev() {
            dnode = layer.backward(lc, &cache.neighbors, &dnode);
        }
        self.input.accumulate(cache.x.view(), dnode.view());
    }

    /// `z` of a single graph.
    pub fn embed(&self, g: &FeatureGraph) -> Vec<f64> {
        self.forward(&GraphBatch::new(&[g])).z.row(0).to_vec()
    }
}

impl Parameterized for EncoderModel {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.input.params();
        for l in &self.layers {
            v.extend(l.params());
        }
        v.extend(self.head.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.input.params_mut();
        for l in &mut self.layers {
            v.extend(l.params_mut());
        }
        v.extend(self.head.params_mut());
        v
    }
}
