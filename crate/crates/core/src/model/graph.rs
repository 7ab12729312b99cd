//! Static layer graphs with named parameters and skip wiring.

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Architecture, ModelConfig};
use crate::nn::{self, BatchNormCache, DropoutMask, Kernel, LayerKind, LayerSpec, Mode};
use crate::tensor::Tensor;

/// A named parameter or buffer. Running batch-norm statistics are stored
/// here too, with `trainable == false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
    pub trainable: bool,
}

pub type ParamStore = IndexMap<String, Param>;

/// Identifies a tensor flowing through the graph: `0` is the network input,
/// `i + 1` the output of node `i`.
pub type ValueId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub spec: LayerSpec,
    pub inputs: Vec<ValueId>,
}

impl Node {
    fn param(&self, suffix: &str) -> String {
        format!("{}.{}", self.name, suffix)
    }
}

/// Batch-norm hyperparameters shared by every normalisation layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    pub eps: f64,
    pub momentum: f64,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig { eps: 1e-5, momentum: 0.99 }
    }
}

/// Per-parameter gradients from one backward pass, plus the gradient with
/// respect to the network input.
#[derive(Debug, Clone, Default)]
pub struct GradientTape {
    pub params: IndexMap<String, Vec<f32>>,
    pub input: Option<Tensor>,
}

enum Cache {
    None,
    Pool(Vec<usize>),
    Norm(BatchNormCache<f32>),
    Dropout(DropoutMask<f32>),
}

/// A node's output, its backward cache and updated running statistics.
type NodeOutput = (Tensor, Cache, Option<(Vec<f32>, Vec<f32>)>);

/// Everything a train-mode forward pass leaves behind for backward.
pub struct Trace {
    values: Vec<Option<Tensor>>,
    caches: Vec<Cache>,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.values.last().and_then(Option::as_ref).expect("forward produced an output")
    }
}

#[derive(Debug, Clone)]
pub struct ModelGraph {
    pub architecture: Architecture,
    /// Settings the graph was built from.
    pub config: ModelConfig,
    pub nodes: Vec<Node>,
    pub params: ParamStore,
    /// Named skip taps (value ids) in encoder order, plus the bottleneck.
    pub taps: Vec<(String, ValueId)>,
    pub norm: NormConfig,
    pub mode: Mode,
    input_channels: usize,
}

impl ModelGraph {
    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn trainable_param_count(&self) -> usize {
        self.params.values().filter(|p| p.trainable).map(|p| p.data.len()).sum()
    }

    /// Spatial divisor the input height/width must be a multiple of.
    pub fn spatial_multiple(&self) -> usize {
        1 << self.nodes.iter().filter(|n| n.spec.kind == LayerKind::Maxpool2x2).count()
    }

    fn param(&self, name: &str) -> Result<&Param> {
        self.params.get(name).ok_or_else(|| Error::MissingWeight(name.to_string()))
    }

    fn kernel(&self, node: &Node) -> Result<Kernel<'_, f32>> {
        Ok(Kernel {
            weight: &self.param(&node.param("weight"))?.data,
            bias: &self.param(&node.param("bias"))?.data,
            in_channels: node.spec.in_channels,
            out_channels: node.spec.out_channels,
            size: node.spec.kernel_size().unwrap_or(0),
        })
    }

    fn norm_params(&self, node: &Node) -> Result<nn::BatchNormParams<'_, f32>> {
        Ok(nn::BatchNormParams {
            gamma: &self.param(&node.param("gamma"))?.data,
            beta: &self.param(&node.param("beta"))?.data,
            running_mean: &self.param(&node.param("running_mean"))?.data,
            running_var: &self.param(&node.param("running_var"))?.data,
            eps: self.norm.eps,
            momentum: self.norm.momentum,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let m = self.spatial_multiple();
        if x.channels() != self.input_channels || x.height() % m != 0 || x.width() % m != 0 {
            return Err(Error::ShapeMismatch(format!(
                "model expects (N, {}, H, W) with H, W divisible by {m}, got {:?}",
                self.input_channels,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Last node index that reads each value (`None` if never read).
    fn last_uses(&self) -> Vec<Option<usize>> {
        let mut last = vec![None; self.nodes.len() + 1];
        for (i, node) in self.nodes.iter().enumerate() {
            for &v in &node.inputs {
                last[v] = Some(i);
            }
        }
        last
    }

    /// Single-node forward. Returns the output, the backward cache and, for
    /// train-mode batch norm, the updated running statistics.
    fn run_node<R: Rng + ?Sized>(
        &self,
        node: &Node,
        args: &[&Tensor],
        mode: Mode,
        rng: &mut R,
    ) -> Result<NodeOutput> {
        let x = args[0];
        Ok(match node.spec.kind {
            LayerKind::Conv3x3 | LayerKind::Conv1x1 => (nn::conv2d_forward(x, self.kernel(node)?)?, Cache::None, None),
            LayerKind::ConvTranspose2x => (nn::conv_transpose2x_forward(x, self.kernel(node)?)?, Cache::None, None),
            LayerKind::Maxpool2x2 => {
                let (y, idx) = nn::maxpool2x2_forward(x)?;
                (y, Cache::Pool(idx), None)
            }
            LayerKind::UpsampleNearest2x => (nn::upsample_nearest2x_forward(x), Cache::None, None),
            LayerKind::Batchnorm => {
                let out = nn::batchnorm_forward(x, self.norm_params(node)?, mode)?;
                let stats = (mode == Mode::Train).then_some((out.running_mean, out.running_var));
                (out.output, Cache::Norm(out.cache), stats)
            }
            LayerKind::Relu => (nn::relu_forward(x), Cache::None, None),
            LayerKind::Sigmoid => (nn::sigmoid_forward(x), Cache::None, None),
            LayerKind::Concat => (nn::concat_channels(x, args[1])?, Cache::None, None),
            LayerKind::Dropout => {
                let rate = node.spec.dropout_rate.unwrap_or(0.0);
                let (y, mask) = nn::dropout_forward(x, rate, mode, rng)?;
                (y, Cache::Dropout(mask), None)
            }
        })
    }

    /// Forward pass in the graph's current mode.
    ///
    /// In train mode every activation is kept for [`ModelGraph::backward`]
    /// and batch-norm running statistics are updated in place. In infer mode
    /// intermediates are dropped as soon as they are consumed.
    pub fn forward<R: Rng + ?Sized>(&mut self, x: &Tensor, rng: &mut R) -> Result<Trace> {
        self.check_input(x)?;
        let mode = self.mode;
        let last_use = self.last_uses();
        let mut values: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len() + 1);
        values.push(Some(x.clone()));
        let mut caches = Vec::with_capacity(self.nodes.len());
        for i in 0..self.nodes.len() {
            let node = &self.nodes[i];
            let args: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|&v| values[v].as_ref().expect("value alive until last use"))
                .collect();
            let (y, cache, stats) = self.run_node(node, &args, mode, rng)?;
            if let Some((mean, var)) = stats {
                let (mname, vname) = (node.param("running_mean"), node.param("running_var"));
                self.params.get_mut(&mname).expect("checked in run_node").data = mean;
                self.params.get_mut(&vname).expect("checked in run_node").data = var;
            }
            if mode == Mode::Infer {
                let inputs = self.nodes[i].inputs.clone();
                for v in inputs {
                    if last_use[v] == Some(i) {
                        values[v] = None;
                    }
                }
                caches.push(Cache::None);
            } else {
                caches.push(cache);
            }
            values.push(Some(y));
        }
        Ok(Trace { values, caches })
    }

    /// Infer-mode forward that never touches the graph; safe to share.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.infer_values(x, &[])?.pop().expect("output"))
    }

    /// Infer-mode activations of the named taps on `x`, in tap order.
    pub fn tap_activations(&self, x: &Tensor) -> Result<Vec<(String, Tensor)>> {
        let ids: Vec<ValueId> = self.taps.iter().map(|t| t.1).collect();
        let mut vals = self.infer_values(x, &ids)?;
        vals.pop();
        Ok(self.taps.iter().map(|t| t.0.clone()).zip(vals).collect())
    }

    /// Returns the requested values followed by the network output.
    fn infer_values(&self, x: &Tensor, keep: &[ValueId]) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let last_use = self.last_uses();
        let mut values: Vec<Option<Tensor>> = vec![None; self.nodes.len() + 1];
        values[0] = Some(x.clone());
        let mut kept = vec![None; keep.len()];
        let mut noop = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        for (i, node) in self.nodes.iter().enumerate() {
            let args: Vec<&Tensor> = node.inputs.iter().map(|&v| values[v].as_ref().expect("alive")).collect();
            let (y, _, _) = self.run_node(node, &args, Mode::Infer, &mut noop)?;
            for &v in &node.inputs {
                if last_use[v] == Some(i) {
                    if let Some(pos) = keep.iter().position(|&k| k == v) {
                        kept[pos] = values[v].take();
                    }
                    values[v] = None;
                }
            }
            values[i + 1] = Some(y);
        }
        let out = values.pop().flatten().expect("output");
        let mut res: Vec<Tensor> = keep
            .iter()
            .zip(kept)
            .map(|(&k, t)| t.or_else(|| values.get(k).cloned().flatten()).expect("tap value"))
            .collect();
        res.push(out);
        Ok(res)
    }

    /// Backpropagates `grad_out` (gradient w.r.t. the network output)
    /// through a train-mode trace.
    pub fn backward(&self, trace: &Trace, grad_out: &Tensor) -> Result<GradientTape> {
        if trace.caches.len() != self.nodes.len() {
            return Err(Error::ShapeMismatch("trace does not belong to this graph".into()));
        }
        grad_out.ensure_shape(trace.output().shape(), "output gradient")?;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len() + 1];
        grads[self.nodes.len()] = Some(grad_out.clone());
        let mut param_grads: IndexMap<String, Vec<f32>> = IndexMap::new();

        let value = |v: ValueId| trace.values[v].as_ref().ok_or_else(|| Error::ShapeMismatch("trace was recorded in infer mode".into()));

        for (i, node) in self.nodes.iter().enumerate().rev() {
            let Some(g) = grads[i + 1].take() else { continue };
            let x = value(node.inputs[0])?;
            let input_grads: Vec<Tensor> = match (node.spec.kind, &trace.caches[i]) {
                (LayerKind::Conv3x3 | LayerKind::Conv1x1, _) => {
                    let kg = nn::conv2d_backward(x, self.kernel(node)?, &g)?;
                    param_grads.insert(node.param("weight"), kg.weight);
                    param_grads.insert(node.param("bias"), kg.bias);
                    vec![kg.input]
                }
                (LayerKind::ConvTranspose2x, _) => {
                    let kg = nn::conv_transpose2x_backward(x, self.kernel(node)?, &g)?;
                    param_grads.insert(node.param("weight"), kg.weight);
                    param_grads.insert(node.param("bias"), kg.bias);
                    vec![kg.input]
                }
                (LayerKind::Maxpool2x2, Cache::Pool(idx)) => vec![nn::maxpool2x2_backward(x.shape(), idx, &g)?],
                (LayerKind::UpsampleNearest2x, _) => vec![nn::upsample_nearest2x_backward(&g)?],
                (LayerKind::Batchnorm, Cache::Norm(cache)) => {
                    let gamma = &self.param(&node.param("gamma"))?.data;
                    let (dx, dgamma, dbeta) = nn::batchnorm_backward(cache, gamma, &g)?;
                    param_grads.insert(node.param("gamma"), dgamma);
                    param_grads.insert(node.param("beta"), dbeta);
                    vec![dx]
                }
                (LayerKind::Relu, _) => vec![nn::relu_backward(x, &g)?],
                (LayerKind::Sigmoid, _) => vec![nn::sigmoid_backward(value(i + 1)?, &g)?],
                (LayerKind::Concat, _) => {
                    let (a, b) = nn::concat_backward(x.channels(), &g)?;
                    vec![a, b]
                }
                (LayerKind::Dropout, Cache::Dropout(mask)) => vec![nn::dropout_backward(mask, &g)?],
                (kind, _) => {
                    return Err(Error::ShapeMismatch(format!("missing forward cache for {kind:?} node `{}`", node.name)))
                }
            };
            for (&src, dg) in node.inputs.iter().zip(input_grads) {
                match &mut grads[src] {
                    Some(acc) => acc.data_mut().iter_mut().zip(dg.data()).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(dg),
                }
            }
        }

        // Reorder to the parameter store's order so optimiser state lines up.
        let mut ordered = IndexMap::with_capacity(param_grads.len());
        for name in self.params.keys() {
            if let Some(g) = param_grads.shift_remove(name) {
                ordered.insert(name.clone(), g);
            }
        }
        Ok(GradientTape { params: ordered, input: grads[0].take() })
    }
}

/// Incremental graph construction used by the architecture builders.
pub struct GraphBuilder<'r, R: Rng + ?Sized> {
    nodes: Vec<Node>,
    params: ParamStore,
    taps: Vec<(String, ValueId)>,
    channels: Vec<usize>,
    rng: &'r mut R,
    input_channels: usize,
}

impl<'r, R: Rng + ?Sized> GraphBuilder<'r, R> {
    pub fn new(input_channels: usize, rng: &'r mut R) -> Self {
        GraphBuilder {
            nodes: Vec::new(),
            params: ParamStore::new(),
            taps: Vec::new(),
            channels: vec![input_channels],
            rng,
            input_channels,
        }
    }

    pub const INPUT: ValueId = 0;

    pub fn channels(&self, v: ValueId) -> usize {
        self.channels[v]
    }

    fn push(&mut self, name: String, spec: LayerSpec, inputs: Vec<ValueId>) -> ValueId {
        self.channels.push(spec.out_channels);
        self.nodes.push(Node { name, spec, inputs });
        self.nodes.len()
    }

    fn add_param(&mut self, name: String, shape: Vec<usize>, data: Vec<f32>, trainable: bool) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.params.insert(name, Param { shape, data, trainable });
    }

    fn conv_like(&mut self, name: &str, src: ValueId, out: usize, kind: LayerKind) -> ValueId {
        let spec = LayerSpec::new(kind, self.channels[src], out);
        let shape = spec.weight_shape().expect("conv kind");
        let fan_in = match kind {
            // each transposed-conv output pixel sums one tap per input channel
            LayerKind::ConvTranspose2x => spec.in_channels,
            _ => spec.in_channels * shape[2] * shape[3],
        };
        let w = nn::he_normal(shape.iter().product(), fan_in, self.rng);
        self.add_param(format!("{name}.weight"), shape, w, true);
        self.add_param(format!("{name}.bias"), vec![out], vec![0.0; out], true);
        self.push(name.to_string(), spec, vec![src])
    }

    pub fn conv3x3(&mut self, name: &str, src: ValueId, out: usize) -> ValueId {
        self.conv_like(name, src, out, LayerKind::Conv3x3)
    }

    pub fn conv1x1(&mut self, name: &str, src: ValueId, out: usize) -> ValueId {
        self.conv_like(name, src, out, LayerKind::Conv1x1)
    }

    pub fn conv_transpose2x(&mut self, name: &str, src: ValueId, out: usize) -> ValueId {
        self.conv_like(name, src, out, LayerKind::ConvTranspose2x)
    }

    pub fn batchnorm(&mut self, name: &str, src: ValueId) -> ValueId {
        let c = self.channels[src];
        self.add_param(format!("{name}.gamma"), vec![c], vec![1.0; c], true);
        self.add_param(format!("{name}.beta"), vec![c], vec![0.0; c], true);
        self.add_param(format!("{name}.running_mean"), vec![c], vec![0.0; c], false);
        self.add_param(format!("{name}.running_var"), vec![c], vec![1.0; c], false);
        self.push(name.to_string(), LayerSpec::new(LayerKind::Batchnorm, c, c), vec![src])
    }

    fn simple(&mut self, name: &str, src: ValueId, kind: LayerKind) -> ValueId {
        let c = self.channels[src];
        self.push(name.to_string(), LayerSpec::new(kind, c, c), vec![src])
    }

    pub fn relu(&mut self, name: &str, src: ValueId) -> ValueId {
        self.simple(name, src, LayerKind::Relu)
    }

    pub fn sigmoid(&mut self, name: &str, src: ValueId) -> ValueId {
        self.simple(name, src, LayerKind::Sigmoid)
    }

    pub fn maxpool(&mut self, name: &str, src: ValueId) -> ValueId {
        self.simple(name, src, LayerKind::Maxpool2x2)
    }

    pub fn upsample(&mut self, name: &str, src: ValueId) -> ValueId {
        self.simple(name, src, LayerKind::UpsampleNearest2x)
    }

    pub fn dropout(&mut self, name: &str, src: ValueId, rate: f64) -> ValueId {
        let c = self.channels[src];
        let mut spec = LayerSpec::new(LayerKind::Dropout, c, c);
        spec.dropout_rate = Some(rate);
        self.push(name.to_string(), spec, vec![src])
    }

    pub fn concat(&mut self, name: &str, a: ValueId, b: ValueId) -> ValueId {
        let (ca, cb) = (self.channels[a], self.channels[b]);
        self.push(name.to_string(), LayerSpec::new(LayerKind::Concat, ca, ca + cb), vec![a, b])
    }

    pub fn tap(&mut self, name: &str, v: ValueId) {
        self.taps.push((name.to_string(), v));
    }

    pub fn finish(self, architecture: Architecture, config: ModelConfig) -> ModelGraph {
        ModelGraph {
            architecture,
            config,
            nodes: self.nodes,
            params: self.params,
            taps: self.taps,
            norm: config.norm,
            mode: Mode::Train,
            input_channels: self.input_channels,
        }
    }
}
