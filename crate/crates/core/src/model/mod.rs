//! The encoder: a feedforward trunk with two heads and hand-written
//! forward/backward passes.
//!
//! The main path runs the whole trunk, the main head (its last layer linear,
//! producing the global feature `x_g`) and a linear classifier over identity
//! logits. The cross-view path reuses the first `shared_depth` trunk layers,
//! then applies its own copies of the remaining trunk layers and a two-layer
//! cross-view head producing `x_cv`. The unshared trunk tail is the analog
//! of the unshared top backbone stage in the full-scale setup; the
//! cross-view head carries no classifier, it is trained by the cross-view
//! regression alone.
//!
//! All hidden layers use ReLU; each head's final layer is linear.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, StageTag};

use crate::numerics::{Matrix, SeededRng};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
}

/// Architecture of the two-headed encoder.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub obs_dim: usize,
    /// Widths of the trunk layers, applied in order to the observation.
    pub trunk_layers: Vec<usize>,
    /// How many leading trunk layers the cross-view path reuses.
    pub shared_depth: usize,
    /// Widths of the main head; the last entry is the embedding dimension.
    pub main_head_layers: Vec<usize>,
    /// Widths of the cross-view head; exactly two layers, ending in the
    /// same embedding dimension as the main head.
    pub wcvl_head_layers: Vec<usize>,
}

impl ArchConfig {
    /// Desk-scale default: a five-layer trunk wide enough to generalize
    /// from a few hundred samples, with only the first layer shared. The
    /// cross-view branch has to amplify identity directions the
    /// discriminative path learns to discount, so it needs near-raw inputs;
    /// deeper sharing starves it (the shared-depth sweep shows the same
    /// trend).
    pub fn reference(obs_dim: usize) -> Self {
        Self {
            obs_dim,
            trunk_layers: vec![128, 256, 256, 256, 256],
            shared_depth: 1,
            main_head_layers: vec![128, 32],
            wcvl_head_layers: vec![128, 32],
        }
    }

    pub fn embedding_dim(&self) -> usize {
        *self.main_head_layers.last().expect("validated non-empty")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.obs_dim == 0 {
            return Err(ModelError::InvalidArch("obs_dim must be > 0".into()));
        }
        if self.trunk_layers.is_empty() {
            return Err(ModelError::InvalidArch("trunk needs at least one layer".into()));
        }
        if self.main_head_layers.is_empty() {
            return Err(ModelError::InvalidArch("main head needs at least one layer".into()));
        }
        if self.wcvl_head_layers.len() != 2 {
            return Err(ModelError::InvalidArch(format!(
                "cross-view head must have exactly two layers, got {}",
                self.wcvl_head_layers.len()
            )));
        }
        if self.shared_depth > self.trunk_layers.len() {
            return Err(ModelError::InvalidArch(format!(
                "shared_depth {} exceeds trunk depth {}",
                self.shared_depth,
                self.trunk_layers.len()
            )));
        }
        if self.main_head_layers.last() != self.wcvl_head_layers.last() {
            return Err(ModelError::InvalidArch(
                "both heads must end in the same embedding dimension: fusion requires it".into(),
            ));
        }
        if self
            .trunk_layers
            .iter()
            .chain(&self.main_head_layers)
            .chain(&self.wcvl_head_layers)
            .any(|w| *w == 0)
        {
            return Err(ModelError::InvalidArch("layer widths must be > 0".into()));
        }
        Ok(())
    }
}

/// One affine layer: `y = x Wᵀ + b` with `W` stored out×in.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn in_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// All parameters of the encoder. Doubles as the gradient container: a
/// [`Gradients`] value is shape-congruent with the parameters it
/// differentiates.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub trunk: Vec<Layer>,
    /// Private copies of trunk layers `shared_depth..` for the cross-view path.
    pub wcvl_trunk_tail: Vec<Layer>,
    pub main_head: Vec<Layer>,
    pub classifier: Layer,
    pub wcvl_head: Vec<Layer>,
}

pub type Gradients = EncoderParams;

/// Which parameter family a tensor belongs to; training stages freeze or
/// update whole groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Trunk,
    WcvlTrunkTail,
    MainHead,
    Classifier,
    WcvlHead,
}

impl ParamGroup {
    /// Groups touched by main-stage (discriminative) training.
    pub fn in_main_stage(self) -> bool {
        matches!(self, ParamGroup::Trunk | ParamGroup::MainHead | ParamGroup::Classifier)
    }

    /// Groups touched by pluggable cross-view training.
    pub fn in_wcvl_stage(self) -> bool {
        matches!(self, ParamGroup::WcvlTrunkTail | ParamGroup::WcvlHead)
    }
}

impl EncoderParams {
    pub fn shared_depth(&self) -> usize {
        self.trunk.len() - self.wcvl_trunk_tail.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk[0].in_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.main_head.last().expect("non-empty").out_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.out_dim()
    }

    /// Zero-filled parameters with the same shape tree; the gradient
    /// accumulator.
    pub fn zeros_like(&self) -> Gradients {
        let z = |ls: &Vec<Layer>| {
            ls.iter()
                .map(|l| Layer::zeros(l.out_dim(), l.in_dim()))
                .collect()
        };
        EncoderParams {
            trunk: z(&self.trunk),
            wcvl_trunk_tail: z(&self.wcvl_trunk_tail),
            main_head: z(&self.main_head),
            classifier: Layer::zeros(self.classifier.out_dim(), self.classifier.in_dim()),
            wcvl_head: z(&self.wcvl_head),
        }
    }

    /// Flat views over every tensor, in declaration order. The group tag
    /// lets callers mask updates per training stage.
    pub fn tensors(&self) -> Vec<(ParamGroup, &[f64])> {
        fn push<'a>(out: &mut Vec<(ParamGroup, &'a [f64])>, g: ParamGroup, ls: &'a [Layer]) {
            for l in ls {
                out.push((g, l.weight.data()));
                out.push((g, l.bias.as_slice()));
            }
        }
        let mut out: Vec<(ParamGroup, &[f64])> = Vec::new();
        push(&mut out, ParamGroup::Trunk, &self.trunk);
        push(&mut out, ParamGroup::WcvlTrunkTail, &self.wcvl_trunk_tail);
        push(&mut out, ParamGroup::MainHead, &self.main_head);
        out.push((ParamGroup::Classifier, self.classifier.weight.data()));
        out.push((ParamGroup::Classifier, self.classifier.bias.as_slice()));
        push(&mut out, ParamGroup::WcvlHead, &self.wcvl_head);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        let mut out: Vec<(ParamGroup, &mut [f64])> = Vec::new();
        fn push<'a>(
            out: &mut Vec<(ParamGroup, &'a mut [f64])>,
            g: ParamGroup,
            ls: &'a mut [Layer],
        ) {
            for l in ls {
                out.push((g, l.weight.data_mut()));
                out.push((g, l.bias.as_mut_slice()));
            }
        }
        push(&mut out, ParamGroup::Trunk, &mut self.trunk);
        push(&mut out, ParamGroup::WcvlTrunkTail, &mut self.wcvl_trunk_tail);
        push(&mut out, ParamGroup::MainHead, &mut self.main_head);
        out.push((ParamGroup::Classifier, self.classifier.weight.data_mut()));
        out.push((ParamGroup::Classifier, self.classifier.bias.as_mut_slice()));
        push(&mut out, ParamGroup::WcvlHead, &mut self.wcvl_head);
        out
    }

    /// Concatenation of all tensor data, declaration order. Handy for
    /// byte-level comparisons in tests.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }
}

fn init_layer(out_dim: usize, in_dim: usize, rng: &mut SeededRng) -> Layer {
    // He-style fan-in scaling on a uniform support; biases start at zero.
    let limit = (6.0 / in_dim as f64).sqrt();
    let data = (0..out_dim * in_dim)
        .map(|_| rng.uniform(-limit, limit))
        .collect();
    Layer {
        weight: Matrix::from_vec(out_dim, in_dim, data),
        bias: vec![0.0; out_dim],
    }
}

fn init_chain(in_dim: usize, widths: &[usize], rng: &mut SeededRng) -> Vec<Layer> {
    let mut layers = Vec::with_capacity(widths.len());
    let mut prev = in_dim;
    for &w in widths {
        layers.push(init_layer(w, prev, rng));
        prev = w;
    }
    layers
}

/// Initializes encoder parameters: weights uniform in ±√(6/fan_in), biases
/// zero, drawn in declaration order so the result is a pure function of the
/// rng state.
pub fn init_params(
    arch: &ArchConfig,
    num_classes: usize,
    rng: &mut SeededRng,
) -> Result<EncoderParams, ModelError> {
    arch.validate()?;
    if num_classes == 0 {
        return Err(ModelError::InvalidArch("num_classes must be > 0".into()));
    }
    let trunk = init_chain(arch.obs_dim, &arch.trunk_layers, rng);
    let tail_in = if arch.shared_depth == 0 {
        arch.obs_dim
    } else {
        arch.trunk_layers[arch.shared_depth - 1]
    };
    let wcvl_trunk_tail = init_chain(tail_in, &arch.trunk_layers[arch.shared_depth..], rng);
    let trunk_out = *arch.trunk_layers.last().expect("validated");
    let main_head = init_chain(trunk_out, &arch.main_head_layers, rng);
    let classifier = init_layer(num_classes, arch.embedding_dim(), rng);
    // The tail ends at the trunk's final width whether or not it is shared.
    let wcvl_head = init_chain(trunk_out, &arch.wcvl_head_layers, rng);
    Ok(EncoderParams {
        trunk,
        wcvl_trunk_tail,
        main_head,
        classifier,
        wcvl_head,
    })
}

/// Rebuilds the cross-view branch (trunk tail + head) at initialization for
/// a new shared depth, keeping the main-module parameters. This is the
/// plug-in step: attach a fresh cross-view module to a trained baseline.
pub fn replug_wcvl(
    params: &EncoderParams,
    arch: &ArchConfig,
    rng: &mut SeededRng,
) -> Result<EncoderParams, ModelError> {
    arch.validate()?;
    let widths: Vec<usize> = params.trunk.iter().map(Layer::out_dim).collect();
    if widths != arch.trunk_layers || params.obs_dim() != arch.obs_dim {
        return Err(ModelError::ArchMismatch(
            "main-module parameters do not fit the requested architecture".into(),
        ));
    }
    let tail_in = if arch.shared_depth == 0 {
        arch.obs_dim
    } else {
        arch.trunk_layers[arch.shared_depth - 1]
    };
    let wcvl_trunk_tail = init_chain(tail_in, &arch.trunk_layers[arch.shared_depth..], rng);
    let trunk_out = *arch.trunk_layers.last().expect("validated");
    let wcvl_head = init_chain(trunk_out, &arch.wcvl_head_layers, rng);
    Ok(EncoderParams {
        trunk: params.trunk.clone(),
        wcvl_trunk_tail,
        main_head: params.main_head.clone(),
        classifier: params.classifier.clone(),
        wcvl_head,
    })
}

fn affine(layer: &Layer, x: &Matrix) -> Matrix {
    let n = x.rows();
    let out_dim = layer.out_dim();
    let mut y = Matrix::zeros(n, out_dim);
    for i in 0..n {
        let xi = x.row(i);
        let yi = y.row_mut(i);
        for o in 0..out_dim {
            let w = layer.weight.row(o);
            let mut acc = layer.bias[o];
            for (wk, xk) in w.iter().zip(xi) {
                acc += wk * xk;
            }
            yi[o] = acc;
        }
    }
    y
}

fn relu(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Cached activations of one layer chain.
#[derive(Debug, Clone)]
struct ChainCache {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Matrix>,
    /// Pre-activation of each layer (for the ReLU mask).
    pres: Vec<Matrix>,
    out: Matrix,
}

/// Runs a chain; every layer ReLU except, when `last_linear`, the final one.
fn forward_chain(layers: &[Layer], x: &Matrix, last_linear: bool) -> Result<ChainCache, ModelError> {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pres = Vec::with_capacity(layers.len());
    let mut cur = x.clone();
    for (i, layer) in layers.iter().enumerate() {
        if cur.cols() != layer.in_dim() {
            return Err(ModelError::ShapeMismatch(format!(
                "layer expects {} inputs, got {}",
                layer.in_dim(),
                cur.cols()
            )));
        }
        let pre = affine(layer, &cur);
        let is_last = i + 1 == layers.len();
        let act = if last_linear && is_last { pre.clone() } else { relu(&pre) };
        inputs.push(cur);
        pres.push(pre);
        cur = act;
    }
    Ok(ChainCache {
        inputs,
        pres,
        out: cur,
    })
}

/// Backpropagates through a chain, accumulating parameter gradients into
/// `grads` and returning the gradient at the chain input.
fn backward_chain(
    layers: &[Layer],
    cache: &ChainCache,
    grads: &mut [Layer],
    d_out: &Matrix,
    last_linear: bool,
) -> Matrix {
    let mut d_act = d_out.clone();
    for i in (0..layers.len()).rev() {
        let layer = &layers[i];
        let pre = &cache.pres[i];
        let input = &cache.inputs[i];
        let n = pre.rows();

        // ReLU mask unless this is the chain's linear output layer.
        let is_last = i + 1 == layers.len();
        let mut d_pre = d_act;
        if !(last_linear && is_last) {
            for r in 0..n {
                let pr = pre.row(r);
                let dr = d_pre.row_mut(r);
                for (d, p) in dr.iter_mut().zip(pr) {
                    if *p <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
        }

        let g = &mut grads[i];
        for r in 0..n {
            let dp = d_pre.row(r);
            let xi = input.row(r);
            for o in 0..layer.out_dim() {
                let go = g.weight.row_mut(o);
                let d = dp[o];
                if d != 0.0 {
                    for (gk, xk) in go.iter_mut().zip(xi) {
                        *gk += d * xk;
                    }
                    g.bias[o] += d;
                }
            }
        }

        let mut d_in = Matrix::zeros(n, layer.in_dim());
        for r in 0..n {
            let dp = d_pre.row(r);
            let di = d_in.row_mut(r);
            for o in 0..layer.out_dim() {
                let d = dp[o];
                if d != 0.0 {
                    let w = layer.weight.row(o);
                    for (dk, wk) in di.iter_mut().zip(w) {
                        *dk += d * wk;
                    }
                }
            }
        }
        d_act = d_in;
    }
    d_act
}

/// Every intermediate needed to backpropagate one batch.
pub struct ForwardCache {
    trunk: ChainCache,
    wcvl_tail: Option<ChainCache>,
    main_head: ChainCache,
    classifier: Option<ChainCache>,
    wcvl_head: Option<ChainCache>,
    shared_depth: usize,
}

/// Outputs of a full forward pass.
pub struct ForwardOutput {
    pub x_g: Matrix,
    pub logits: Option<Matrix>,
    pub x_cv: Option<Matrix>,
}

fn check_obs(params: &EncoderParams, obs: &Matrix) -> Result<(), ModelError> {
    if obs.cols() != params.obs_dim() {
        return Err(ModelError::ShapeMismatch(format!(
            "observation dim {} but encoder expects {}",
            obs.cols(),
            params.obs_dim()
        )));
    }
    Ok(())
}

/// Full forward pass with cached intermediates. `with_logits` and
/// `with_wcvl` control the optional branches.
pub fn forward_full(
    params: &EncoderParams,
    obs: &Matrix,
    with_logits: bool,
    with_wcvl: bool,
) -> Result<(ForwardOutput, ForwardCache), ModelError> {
    check_obs(params, obs)?;
    let shared_depth = params.shared_depth();
    let trunk = forward_chain(&params.trunk, obs, false)?;
    let main_head = forward_chain(&params.main_head, &trunk.out, true)?;
    let classifier = if with_logits {
        Some(forward_chain(
            std::slice::from_ref(&params.classifier),
            &main_head.out,
            true,
        )?)
    } else {
        None
    };

    let (wcvl_tail, wcvl_head) = if with_wcvl {
        let shared_out = if shared_depth == 0 {
            obs
        } else {
            // Output of trunk layer shared_depth-1 is its successor's input,
            // or the trunk output when everything is shared.
            if shared_depth == params.trunk.len() {
                &trunk.out
            } else {
                &trunk.inputs[shared_depth]
            }
        };
        let tail = forward_chain(&params.wcvl_trunk_tail, shared_out, false)?;
        let head = forward_chain(&params.wcvl_head, &tail.out, true)?;
        (Some(tail), Some(head))
    } else {
        (None, None)
    };

    let out = ForwardOutput {
        x_g: main_head.out.clone(),
        logits: classifier.as_ref().map(|c| c.out.clone()),
        x_cv: wcvl_head.as_ref().map(|c| c.out.clone()),
    };
    Ok((
        out,
        ForwardCache {
            trunk,
            wcvl_tail,
            main_head,
            classifier,
            wcvl_head,
            shared_depth,
        },
    ))
}

/// Main-path forward: the global feature and, on request, identity logits.
pub fn forward_main(
    params: &EncoderParams,
    obs: &Matrix,
    with_logits: bool,
) -> Result<(Matrix, Option<Matrix>), ModelError> {
    let (out, _) = forward_full(params, obs, with_logits, false)?;
    Ok((out.x_g, out.logits))
}

/// Cross-view forward: shared trunk prefix, private tail, cross-view head.
pub fn forward_wcvl(params: &EncoderParams, obs: &Matrix) -> Result<Matrix, ModelError> {
    let (out, _) = forward_full(params, obs, false, true)?;
    Ok(out.x_cv.expect("requested"))
}

/// Exact reverse-mode gradients for the composed loss whose per-output
/// gradients are supplied. Branches with a `None` upstream contribute
/// nothing; cross-view gradients flow through the private tail and into the
/// shared trunk prefix.
pub fn backward(
    params: &EncoderParams,
    cache: &ForwardCache,
    d_x_g: Option<&Matrix>,
    d_logits: Option<&Matrix>,
    d_x_cv: Option<&Matrix>,
) -> Result<Gradients, ModelError> {
    let mut grads = params.zeros_like();
    let n = cache.trunk.inputs[0].rows();
    let emb = params.embedding_dim();

    // Gradient reaching x_g: direct plus through the classifier.
    let mut d_xg_total = Matrix::zeros(n, emb);
    if let Some(d) = d_x_g {
        if d.rows() != n || d.cols() != emb {
            return Err(ModelError::ShapeMismatch("d_x_g shape".into()));
        }
        for (t, s) in d_xg_total.data_mut().iter_mut().zip(d.data()) {
            *t += s;
        }
    }
    if let Some(d) = d_logits {
        let ccache = cache
            .classifier
            .as_ref()
            .ok_or_else(|| ModelError::ShapeMismatch("no logits in forward cache".into()))?;
        let mut clf_grads = vec![Layer::zeros(
            params.classifier.out_dim(),
            params.classifier.in_dim(),
        )];
        let d_in = backward_chain(
            std::slice::from_ref(&params.classifier),
            ccache,
            &mut clf_grads,
            d,
            true,
        );
        grads.classifier = clf_grads.pop().expect("one layer");
        for (t, s) in d_xg_total.data_mut().iter_mut().zip(d_in.data()) {
            *t += s;
        }
    }

    // Main head back to trunk output.
    let mut d_trunk_out =
        backward_chain(&params.main_head, &cache.main_head, &mut grads.main_head, &d_xg_total, true);

    // Cross-view branch back to the shared cut.
    let mut d_shared: Option<Matrix> = None;
    if let Some(d) = d_x_cv {
        let head_cache = cache
            .wcvl_head
            .as_ref()
            .ok_or_else(|| ModelError::ShapeMismatch("no cross-view branch in cache".into()))?;
        let tail_cache = cache.wcvl_tail.as_ref().expect("paired with head");
        let d_tail_out =
            backward_chain(&params.wcvl_head, head_cache, &mut grads.wcvl_head, d, true);
        let d_cut = backward_chain(
            &params.wcvl_trunk_tail,
            tail_cache,
            &mut grads.wcvl_trunk_tail,
            &d_tail_out,
            false,
        );
        d_shared = Some(d_cut);
    }

    // Trunk: walk down from the top, merging the cross-view contribution at
    // the shared cut. A cut at the trunk output merges before the walk; a
    // cut at depth 0 would land on the observation and is discarded.
    let t = params.trunk.len();
    if cache.shared_depth == t {
        if let Some(d) = &d_shared {
            for (a, b) in d_trunk_out.data_mut().iter_mut().zip(d.data()) {
                *a += b;
            }
            d_shared = None;
        }
    }
    let mut d_act = d_trunk_out;
    for i in (0..t).rev() {
        let layer = &params.trunk[i];
        let sub_cache = ChainCache {
            inputs: vec![cache.trunk.inputs[i].clone()],
            pres: vec![cache.trunk.pres[i].clone()],
            out: Matrix::zeros(0, 0),
        };
        let mut layer_grads = vec![Layer::zeros(layer.out_dim(), layer.in_dim())];
        let d_in = backward_chain(
            std::slice::from_ref(layer),
            &sub_cache,
            &mut layer_grads,
            &d_act,
            false,
        );
        grads.trunk[i] = layer_grads.pop().expect("one layer");
        d_act = d_in;
        if i == cache.shared_depth {
            if let Some(d) = d_shared.take() {
                for (a, b) in d_act.data_mut().iter_mut().zip(d.data()) {
                    *a += b;
                }
            }
        }
    }

    Ok(grads)
}

fn chain_activations(cache: &ChainCache) -> Vec<Matrix> {
    if cache.inputs.is_empty() {
        return Vec::new();
    }
    let mut acts: Vec<Matrix> = cache.inputs[1..].to_vec();
    acts.push(cache.out.clone());
    acts
}

/// Activations after each trunk layer for the main path, used to check
/// which prefix the two paths literally share.
pub fn trunk_activations(params: &EncoderParams, obs: &Matrix) -> Result<Vec<Matrix>, ModelError> {
    check_obs(params, obs)?;
    let cache = forward_chain(&params.trunk, obs, false)?;
    Ok(chain_activations(&cache))
}

/// Activations after each cross-view tail layer (positions shared_depth..).
pub fn wcvl_tail_activations(
    params: &EncoderParams,
    obs: &Matrix,
) -> Result<Vec<Matrix>, ModelError> {
    check_obs(params, obs)?;
    let shared_depth = params.shared_depth();
    let trunk = forward_chain(&params.trunk, obs, false)?;
    let shared_out = if shared_depth == 0 {
        obs.clone()
    } else if shared_depth == params.trunk.len() {
        trunk.out.clone()
    } else {
        trunk.inputs[shared_depth].clone()
    };
    let tail = forward_chain(&params.wcvl_trunk_tail, &shared_out, false)?;
    Ok(chain_activations(&tail))
}
