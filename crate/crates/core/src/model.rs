//! The graph classifier: two edge-conditioned convolutions with batch
//! normalisation and ReLU, one pooling layer, and an MLP head producing one
//! logit per graph.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BatchStats, Checkpoint, NormMode, ParamId, ParamStore, Tape, Tensor, Var};
use crate::ecc::{concat_plans, message_plan, EccLayer, EdgeUpdate};
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NeighborIndex};
use crate::init::uniform_fan_in;
use crate::pool::{pool_forward_batch, ClusterAssignment, PoolConfig, PoolParams};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// What sits between the convolutions and the head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Ehc,
    /// No pooling: the graph embedding is the mean node feature (`h2` wide).
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub node_dim: usize,
    pub edge_dim: usize,
    /// Output widths of the two convolutions.
    pub conv_dims: [usize; 2],
    /// Hidden width of each convolution's filter network; `None` means `2 d_e + 1`.
    pub filter_hidden: Option<usize>,
    pub pool: PoolConfig,
    pub pooling: Pooling,
    /// Learnable edge transform before pooling.
    pub edge_update: bool,
    /// Head hidden width; `None` means twice the head input plus one.
    pub head_hidden: Option<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub folds: usize,
    pub repeats: usize,
}

impl ModelConfig {
    pub fn new(node_dim: usize, edge_dim: usize) -> Self {
        ModelConfig {
            node_dim,
            edge_dim,
            conv_dims: [8, 8],
            filter_hidden: None,
            pool: PoolConfig::default(),
            pooling: Pooling::Ehc,
            edge_update: false,
            head_hidden: None,
            lr: 1e-3,
            epochs: 500,
            batch_size: 8,
            seed: 0,
            folds: 5,
            repeats: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("node_dim", self.node_dim),
            ("edge_dim", self.edge_dim),
            ("conv_dims[0]", self.conv_dims[0]),
            ("conv_dims[1]", self.conv_dims[1]),
            ("batch_size", self.batch_size),
            ("repeats", self.repeats),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.filter_hidden == Some(0) || self.head_hidden == Some(0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        self.pool.validate()
    }

    pub fn head_input(&self) -> usize {
        match self.pooling {
            Pooling::Ehc => self.pool.gamma * self.conv_dims[1],
            Pooling::Identity => self.conv_dims[1],
        }
    }

    pub fn head_hidden_width(&self) -> usize {
        self.head_hidden.unwrap_or(2 * self.head_input() + 1)
    }
}

/// Batch-norm affine parameters and running statistics for one layer.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(store: &mut ParamStore, prefix: &str, dim: usize) -> Self {
        BatchNorm {
            gamma: store.add(format!("{prefix}.gamma"), Tensor::filled(1, dim, 1.0)),
            beta: store.add(format!("{prefix}.beta"), Tensor::zeros(1, dim)),
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
        }
    }

    fn update(&mut self, stats: &BatchStats) {
        for (r, m) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
        }
        for (r, v) in self.running_var.iter_mut().zip(&stats.var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
        }
    }
}

#[derive(Clone, Debug)]
pub struct Head {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// A graph with its neighbour index and message plan, computed once.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub graph: AttributedGraph,
    pub index: NeighborIndex,
    plan: crate::autodiff::MessagePlan,
}

impl PreparedGraph {
    pub fn new(graph: AttributedGraph) -> Self {
        let index = NeighborIndex::build(&graph);
        let plan = message_plan(&graph, &index);
        PreparedGraph { graph, index, plan }
    }

    pub fn plan(&self) -> &crate::autodiff::MessagePlan {
        &self.plan
    }
}

pub fn prepare(graphs: &[AttributedGraph]) -> Vec<PreparedGraph> {
    graphs.iter().cloned().map(PreparedGraph::new).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Batch statistics in normalisation; running statistics are returned.
    Train,
    /// Running statistics in normalisation.
    Eval,
}

pub struct ForwardOutput {
    /// `B x 1` logits.
    pub logits: Var,
    /// Per-graph cluster assignments (empty under [`Pooling::Identity`]).
    pub assignments: Vec<ClusterAssignment>,
    pub bn_stats: Vec<BatchStats>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub conv: [EccLayer; 2],
    pub bn: [BatchNorm; 2],
    pub edge_update: Option<EdgeUpdate>,
    pub pool: PoolParams,
    pub head: Head,
}

fn stack_rows<'a>(parts: impl Iterator<Item = &'a Tensor>, cols: usize) -> Tensor {
    let mut data = Vec::new();
    for t in parts {
        data.extend_from_slice(t.data());
    }
    let rows = data.len() / cols.max(1);
    Tensor::from_vec(rows, cols, data).expect("row-major concatenation")
}

impl Model {
    /// `ECC(d -> h1) + BN + ReLU -> ECC(h1 -> h2) + BN + ReLU -> pool ->
    /// flatten -> Linear + ReLU -> Linear -> logit`. Parameters are drawn
    /// from a ChaCha8 stream seeded with `cfg.seed`.
    pub fn build(cfg: &ModelConfig) -> Result<Model> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let [h1, h2] = cfg.conv_dims;
        let conv0 = EccLayer::new(&mut store, "conv0", cfg.edge_dim, cfg.node_dim, h1, cfg.filter_hidden, &mut rng);
        let bn0 = BatchNorm::new(&mut store, "bn0", h1);
        let conv1 = EccLayer::new(&mut store, "conv1", cfg.edge_dim, h1, h2, cfg.filter_hidden, &mut rng);
        let bn1 = BatchNorm::new(&mut store, "bn1", h2);
        let edge_update = cfg
            .edge_update
            .then(|| EdgeUpdate::new(&mut store, "edge_update", cfg.edge_dim, &mut rng));
        let pool = PoolParams::new(&mut store, "pool", h2, cfg.edge_dim, &mut rng);
        let (fin, hid) = (cfg.head_input(), cfg.head_hidden_width());
        let head = Head {
            w1: store.add("head.w1", uniform_fan_in(&mut rng, fin, hid, fin)),
            b1: store.add("head.b1", uniform_fan_in(&mut rng, 1, hid, fin)),
            w2: store.add("head.w2", uniform_fan_in(&mut rng, hid, 1, hid)),
            b2: store.add("head.b2", uniform_fan_in(&mut rng, 1, 1, hid)),
        };
        Ok(Model {
            cfg: cfg.clone(),
            store,
            conv: [conv0, conv1],
            bn: [bn0, bn1],
            edge_update,
            pool,
            head,
        })
    }

    fn check_graph(&self, g: &AttributedGraph) -> Result<()> {
        if g.node_dim() != self.cfg.node_dim || g.edge_dim() != self.cfg.edge_dim {
            return Err(Error::shape(
                "graph feature dims",
                format!("d = {}, d_e = {}", self.cfg.node_dim, self.cfg.edge_dim),
                format!("d = {}, d_e = {}", g.node_dim(), g.edge_dim()),
            ));
        }
        if g.n == 0 {
            return Err(Error::EmptyGraph);
        }
        Ok(())
    }

    /// Records the network on `tape` for a batch of graphs, treated as one
    /// disjoint union for convolution and normalisation.
    pub fn forward(&self, tape: &mut Tape, batch: &[&PreparedGraph], phase: Phase) -> Result<ForwardOutput> {
        self.forward_with(tape, &self.store, batch, phase)
    }

    /// As [`Model::forward`] but reading parameters from `store`, which must
    /// have this model's layout.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &[&PreparedGraph],
        phase: Phase,
    ) -> Result<ForwardOutput> {
        if batch.is_empty() {
            return Err(Error::EmptySet);
        }
        for p in batch {
            self.check_graph(&p.graph)?;
        }
        let x = tape.constant(stack_rows(batch.iter().map(|p| &p.graph.x), self.cfg.node_dim));
        let l = tape.constant(stack_rows(batch.iter().map(|p| &p.graph.l), self.cfg.edge_dim));
        let plan = Arc::new(concat_plans(batch.iter().map(|p| &p.plan)));

        let mut h = x;
        let mut bn_stats = Vec::new();
        for (conv, bn) in self.conv.iter().zip(&self.bn) {
            let z = conv.forward(tape, store, l, h, plan.clone())?;
            let gamma = tape.param(store, bn.gamma);
            let beta = tape.param(store, bn.beta);
            let mode = match phase {
                Phase::Train => NormMode::Train { eps: BN_EPS },
                Phase::Eval => NormMode::Eval {
                    mean: &bn.running_mean,
                    var: &bn.running_var,
                    eps: BN_EPS,
                },
            };
            let (z, stats) = tape.batch_norm(z, gamma, beta, mode)?;
            bn_stats.extend(stats);
            h = tape.relu(z)?;
        }

        let mut assignments = Vec::new();
        let embedding = match self.cfg.pooling {
            Pooling::Ehc => {
                let l_pool = match &self.edge_update {
                    Some(eu) => eu.forward(tape, store, l)?,
                    None => l,
                };
                let graphs: Vec<_> = batch.iter().map(|p| (&p.graph, &p.index)).collect();
                let out = pool_forward_batch(tape, store, &graphs, h, l_pool, &self.pool, &self.cfg.pool)?;
                assignments = out.assignments;
                tape.reshape(out.pooled, batch.len(), self.cfg.pool.gamma * self.cfg.conv_dims[1])?
            }
            Pooling::Identity => {
                let mut owner = Vec::new();
                let mut inv = Vec::with_capacity(batch.len());
                for (b, p) in batch.iter().enumerate() {
                    owner.extend(std::iter::repeat(b).take(p.graph.n));
                    inv.push(1.0 / p.graph.n as f64);
                }
                let sums = tape.scatter_add_rows(h, owner, batch.len())?;
                let inv = tape.constant(Tensor::column_vector(&inv));
                tape.row_scale(sums, inv)?
            }
        };

        let w1 = tape.param(store, self.head.w1);
        let b1 = tape.param(store, self.head.b1);
        let w2 = tape.param(store, self.head.w2);
        let b2 = tape.param(store, self.head.b2);
        let hid = tape.matmul(embedding, w1)?;
        let hid = tape.add_row(hid, b1)?;
        let hid = tape.relu(hid)?;
        let logits = tape.matmul(hid, w2)?;
        let logits = tape.add_row(logits, b2)?;
        Ok(ForwardOutput {
            logits,
            assignments,
            bn_stats,
        })
    }

    /// Folds batch statistics from a training forward pass into the running
    /// estimates.
    pub fn update_running_stats(&mut self, stats: &[BatchStats]) {
        for (bn, s) in self.bn.iter_mut().zip(stats) {
            bn.update(s);
        }
    }

    /// Eval-phase logits, one per graph.
    pub fn predict_logits(&self, graphs: &[&PreparedGraph]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, graphs, Phase::Eval)?;
        Ok(tape.value(out.logits).data().to_vec())
    }

    /// Eval-phase cluster assignment of one graph.
    pub fn assign_clusters(&self, g: &PreparedGraph) -> Result<ClusterAssignment> {
        if self.cfg.pooling != Pooling::Ehc {
            return Err(Error::Config("cluster export needs a model with the pooling layer".into()));
        }
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, &[g], Phase::Eval)?;
        Ok(out.assignments.into_iter().next().expect("one graph in, one assignment out"))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let extra = serde_json::json!({
            "config": self.cfg,
            "batch_norm": self.bn.iter().map(|b| serde_json::json!({
                "running_mean": b.running_mean,
                "running_var": b.running_var,
            })).collect::<Vec<_>>(),
        });
        Checkpoint::from_store(&self.store, extra)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Model> {
        let cfg: ModelConfig = serde_json::from_value(ck.extra["config"].clone())
            .map_err(|e| Error::CheckpointMismatch(format!("model config: {e}")))?;
        let mut model = Model::build(&cfg)?;
        ck.restore_into(&mut model.store)?;
        let stats = ck.extra["batch_norm"]
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| Error::CheckpointMismatch("expected two batch-norm entries".into()))?;
        for (bn, s) in model.bn.iter_mut().zip(stats) {
            let field = |k: &str| -> Result<Vec<f64>> {
                serde_json::from_value(s[k].clone()).map_err(|e| Error::CheckpointMismatch(format!("{k}: {e}")))
            };
            let (mean, var) = (field("running_mean")?, field("running_var")?);
            if mean.len() != bn.running_mean.len() || var.len() != bn.running_var.len() {
                return Err(Error::CheckpointMismatch("batch-norm statistics width".into()));
            }
            bn.running_mean = mean;
            bn.running_var = var;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        Model::from_checkpoint(&Checkpoint::load(path)?)
    }
}
