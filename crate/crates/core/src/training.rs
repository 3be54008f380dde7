//! Smooth forward pass, reverse-mode gradients and mask-projected gradient
//! descent for compiled acceptors.
//!
//! The smooth pass runs the same closure/step/closure schedule as the
//! symbolic runtime but never binarizes, so it is piecewise linear in the
//! weights. The head is `sigmoid(f . s_T - b)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nfa::Nfa;
use crate::random::derive_seed;
use crate::relu::{parse_alphabet, ReluAcceptor, SymbolRows, TransitionMatrix};

pub const DEFAULT_BIAS: f64 = 0.5;
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;
/// Activations are clipped here during the smooth pass.
pub const ACTIVATION_CLIP: f64 = 1e6;
const PROB_EPS: f64 = 1e-7;
/// Weights with magnitude above this count as present in the audit.
pub const AUDIT_TOLERANCE: f64 = 1e-9;

const MODEL_KIND: &str = "masked_model";

/// Identifies one weight matrix of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Symbol(usize),
    Epsilon,
}

/// Trainable copy of an acceptor with a fixed sparsity pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedModel {
    alphabet: Vec<char>,
    // one matrix per symbol, then epsilon last
    weights: Vec<TransitionMatrix>,
    masks: Vec<Vec<bool>>,
    start: usize,
    accept_vector: Vec<f64>,
    bias: f64,
    closure_iterations: usize,
}

impl MaskedModel {
    /// Exact symbolic weights, masks equal to their nonzero pattern.
    pub fn from_acceptor(acceptor: &ReluAcceptor) -> Self {
        let m = acceptor.alphabet().len();
        let mut weights: Vec<TransitionMatrix> =
            (0..m).map(|x| acceptor.symbol_matrix(x).clone()).collect();
        weights.push(acceptor.eps_matrix().clone());
        let masks = weights
            .iter()
            .map(|w| w.entries().iter().map(|&v| v != 0.0).collect())
            .collect();
        MaskedModel {
            alphabet: acceptor.alphabet().to_vec(),
            weights,
            masks,
            start: acceptor.start(),
            accept_vector: acceptor.accept_vector().to_vec(),
            bias: DEFAULT_BIAS,
            closure_iterations: acceptor.closure_iterations(),
        }
    }

    fn index(&self, slot: Slot) -> usize {
        match slot {
            Slot::Symbol(x) => x,
            Slot::Epsilon => self.alphabet.len(),
        }
    }

    pub fn states(&self) -> usize {
        self.accept_vector.len()
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn matrix(&self, slot: Slot) -> &TransitionMatrix {
        &self.weights[self.index(slot)]
    }

    pub fn mask(&self, slot: Slot) -> &[bool] {
        &self.masks[self.index(slot)]
    }

    pub fn slots(&self) -> impl Iterator<Item = Slot> {
        (0..self.alphabet.len())
            .map(Slot::Symbol)
            .chain(std::iter::once(Slot::Epsilon))
    }

    pub fn weight(&self, slot: Slot, target: usize, source: usize) -> f64 {
        self.matrix(slot).get(target, source)
    }

    /// Overwrites one weight, ignoring the mask. Negative values clamp to 0.
    pub fn set_weight(&mut self, slot: Slot, target: usize, source: usize, value: f64) {
        let i = self.index(slot);
        self.weights[i].set(target, source, value);
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn accept_vector(&self) -> &[f64] {
        &self.accept_vector
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn set_bias(&mut self, bias: f64) {
        self.bias = bias;
    }

    pub fn closure_iterations(&self) -> usize {
        self.closure_iterations
    }

    /// Adds uniform noise in `[0, amount]` at every masked-in position.
    pub fn jitter(&mut self, amount: f64, seed: u64) {
        if amount <= 0.0 {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (w, mask) in self.weights.iter_mut().zip(&self.masks) {
            for (v, &keep) in w.entries_mut().iter_mut().zip(mask) {
                if keep {
                    *v += rng.gen_range(0.0..=amount);
                }
            }
        }
    }

    /// Count of masked-out positions holding a nonzero weight.
    pub fn mask_violations(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.masks)
            .map(|(w, mask)| {
                w.entries()
                    .iter()
                    .zip(mask)
                    .filter(|(&v, &keep)| !keep && v != 0.0)
                    .count()
            })
            .sum()
    }

    pub fn encode(&self, input: &str) -> Result<Vec<usize>> {
        input
            .chars()
            .enumerate()
            .map(|(position, symbol)| {
                self.alphabet
                    .iter()
                    .position(|&c| c == symbol)
                    .ok_or(Error::UnknownSymbol { symbol, position })
            })
            .collect()
    }

    /// Thresholded smooth prediction (`p > 0.5`).
    pub fn accepts(&self, input: &str) -> Result<bool> {
        Ok(forward_smooth(self, input)?.0 > 0.5)
    }

    /// Converts back to a runtime acceptor carrying the current weights.
    pub fn to_acceptor(&self) -> ReluAcceptor {
        let m = self.alphabet.len();
        ReluAcceptor::from_parts(
            self.alphabet.clone(),
            self.weights[..m].to_vec(),
            self.weights[m].clone(),
            self.start,
            self.accept_vector.clone(),
            self.closure_iterations,
        )
        .expect("model dimensions are consistent")
    }

    pub fn to_json(&self) -> String {
        let m = self.alphabet.len();
        let mask_rows = |mask: &[bool]| -> Vec<Vec<u8>> {
            mask.chunks(self.states().max(1))
                .map(|row| row.iter().map(|&b| u8::from(b)).collect())
                .collect()
        };
        let doc = ModelDocument {
            kind: MODEL_KIND.into(),
            n: self.states(),
            alphabet: self.alphabet.iter().map(|c| c.to_string()).collect(),
            transitions: self.weights[..m]
                .iter()
                .zip(&self.alphabet)
                .map(|(w, c)| SymbolRows {
                    symbol: c.to_string(),
                    rows: w.rows(),
                })
                .collect(),
            eps: self.weights[m].rows(),
            masks: self.masks[..m].iter().map(|mk| mask_rows(mk)).collect(),
            eps_mask: mask_rows(&self.masks[m]),
            start: self.start,
            accept: self.accept_vector.clone(),
            bias: self.bias,
            closure_iterations: self.closure_iterations,
        };
        serde_json::to_string_pretty(&doc).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        if doc.kind != MODEL_KIND {
            return Err(Error::InvalidField {
                field: "kind".into(),
                message: format!("expected {MODEL_KIND:?}, found {:?}", doc.kind),
            });
        }
        let alphabet = parse_alphabet(&doc.alphabet)?;
        if doc.transitions.len() != alphabet.len() || doc.masks.len() != alphabet.len() {
            return Err(Error::DimensionMismatch {
                expected: alphabet.len(),
                found: doc.transitions.len(),
            });
        }
        let mut weights = Vec::with_capacity(alphabet.len() + 1);
        for (entry, &c) in doc.transitions.iter().zip(&alphabet) {
            weights.push(TransitionMatrix::from_rows(&entry.rows, Some(c))?);
        }
        weights.push(TransitionMatrix::from_rows(&doc.eps, None)?);
        let mut masks = Vec::with_capacity(weights.len());
        for rows in doc.masks.iter().chain(std::iter::once(&doc.eps_mask)) {
            let flat: Vec<bool> = rows.iter().flatten().map(|&b| b != 0).collect();
            if flat.len() != doc.n * doc.n {
                return Err(Error::DimensionMismatch {
                    expected: doc.n * doc.n,
                    found: flat.len(),
                });
            }
            masks.push(flat);
        }
        if let Some(w) = weights.iter().find(|w| w.dim() != doc.n) {
            return Err(Error::DimensionMismatch {
                expected: doc.n,
                found: w.dim(),
            });
        }
        if doc.accept.len() != doc.n || doc.start >= doc.n {
            return Err(Error::InvalidField {
                field: "accept/start".into(),
                message: "inconsistent with n".into(),
            });
        }
        Ok(MaskedModel {
            alphabet,
            weights,
            masks,
            start: doc.start,
            accept_vector: doc.accept,
            bias: doc.bias,
            closure_iterations: doc.closure_iterations.max(1),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    kind: String,
    n: usize,
    alphabet: Vec<String>,
    transitions: Vec<SymbolRows>,
    eps: Vec<Vec<f64>>,
    masks: Vec<Vec<Vec<u8>>>,
    eps_mask: Vec<Vec<u8>>,
    start: usize,
    accept: Vec<f64>,
    bias: f64,
    closure_iterations: usize,
}

#[derive(Clone, Debug)]
enum Layer {
    /// `out = clip(input + relu(W_eps input))`
    Closure {
        input: Vec<f64>,
        pre: Vec<f64>,
        out: Vec<f64>,
    },
    /// `out = clip(relu(W_x input))`
    Step {
        slot: usize,
        input: Vec<f64>,
        pre: Vec<f64>,
        out: Vec<f64>,
    },
}

/// Intermediate values recorded by [`forward_smooth`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    layers: Vec<Layer>,
    final_state: Vec<f64>,
    logit: f64,
    probability: f64,
}

impl ForwardCache {
    pub fn final_state(&self) -> &[f64] {
        &self.final_state
    }

    pub fn logit(&self) -> f64 {
        self.logit
    }

    /// Smallest |pre-activation| among strictly nonzero ones; a kink check
    /// for finite-difference tests.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Closure { pre, .. } | Layer::Step { pre, .. } => pre.iter(),
            })
            .map(|v| v.abs())
            .filter(|&v| v > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// True when any activation hit the clip ceiling.
    pub fn clipped(&self) -> bool {
        self.layers.iter().any(|l| match l {
            Layer::Closure { out, .. } | Layer::Step { out, .. } => {
                out.iter().any(|&v| v >= ACTIVATION_CLIP)
            }
        })
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn matvec(w: &TransitionMatrix, s: &[f64]) -> Vec<f64> {
    w.apply(s)
}

/// Differentiable pass: returns `sigmoid(f . s_T - b)` and the cache.
pub fn forward_smooth(model: &MaskedModel, input: &str) -> Result<(f64, ForwardCache)> {
    let word = model.encode(input)?;
    Ok(forward_encoded(model, &word))
}

pub(crate) fn forward_encoded(model: &MaskedModel, word: &[usize]) -> (f64, ForwardCache) {
    let n = model.states();
    let eps = model.alphabet.len();
    let mut layers = Vec::with_capacity((word.len() + 1) * (model.closure_iterations + 1));
    let mut s = vec![0.0; n];
    s[model.start] = 1.0;

    let close = |s: Vec<f64>, layers: &mut Vec<Layer>| -> Vec<f64> {
        let mut s = s;
        for _ in 0..model.closure_iterations {
            let pre = matvec(&model.weights[eps], &s);
            let out: Vec<f64> = s
                .iter()
                .zip(&pre)
                .map(|(a, p)| (a + p.max(0.0)).min(ACTIVATION_CLIP))
                .collect();
            layers.push(Layer::Closure {
                input: s,
                pre,
                out: out.clone(),
            });
            s = out;
        }
        s
    };

    s = close(s, &mut layers);
    for &x in word {
        let pre = matvec(&model.weights[x], &s);
        let out: Vec<f64> = pre.iter().map(|p| p.clamp(0.0, ACTIVATION_CLIP)).collect();
        layers.push(Layer::Step {
            slot: x,
            input: s,
            pre,
            out: out.clone(),
        });
        s = close(out, &mut layers);
    }

    let score: f64 = model.accept_vector.iter().zip(&s).map(|(f, v)| f * v).sum();
    let logit = score - model.bias;
    let probability = sigmoid(logit);
    (
        probability,
        ForwardCache {
            layers,
            final_state: s,
            logit,
            probability,
        },
    )
}

/// Binary cross-entropy with the prediction clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(prediction: f64, label: bool) -> f64 {
    let p = prediction.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Gradients of the BCE loss for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    /// Same layout as the model weights: symbols, then epsilon.
    pub weights: Vec<Vec<f64>>,
    pub bias: f64,
}

impl Gradients {
    fn zeros(model: &MaskedModel) -> Self {
        let n = model.states();
        Gradients {
            weights: vec![vec![0.0; n * n]; model.weights.len()],
            bias: 0.0,
        }
    }

    pub fn get(&self, model: &MaskedModel, slot: Slot, target: usize, source: usize) -> f64 {
        self.weights[model.index(slot)][target * model.states() + source]
    }

    fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        self.bias += scale * other.bias;
    }
}

/// Reverse pass through the cached layers. Gradients at masked-out
/// positions are zeroed; the ReLU derivative at exactly 0 is 0.
pub fn backward(model: &MaskedModel, cache: &ForwardCache, label: bool) -> Gradients {
    let mut grads = backward_unmasked(model, cache, label);
    for (g, mask) in grads.weights.iter_mut().zip(&model.masks) {
        for (v, &keep) in g.iter_mut().zip(mask) {
            if !keep {
                *v = 0.0;
            }
        }
    }
    grads
}

fn backward_unmasked(model: &MaskedModel, cache: &ForwardCache, label: bool) -> Gradients {
    let n = model.states();
    let eps = model.alphabet.len();
    let mut grads = Gradients::zeros(model);

    // d BCE / d logit of the unclamped loss
    let dz = cache.probability - if label { 1.0 } else { 0.0 };
    grads.bias = -dz;
    if dz == 0.0 {
        return grads;
    }
    let mut g: Vec<f64> = model.accept_vector.iter().map(|f| f * dz).collect();

    for layer in cache.layers.iter().rev() {
        match layer {
            Layer::Closure { input, pre, out } => {
                let w = &model.weights[eps];
                let g_out: Vec<f64> = g
                    .iter()
                    .zip(out)
                    .map(|(&gv, &o)| if o >= ACTIVATION_CLIP { 0.0 } else { gv })
                    .collect();
                let g_pre: Vec<f64> = g_out
                    .iter()
                    .zip(pre)
                    .map(|(&gv, &p)| if p > 0.0 { gv } else { 0.0 })
                    .collect();
                accumulate_outer(&mut grads.weights[eps], &g_pre, input, n);
                let mut g_in = g_out;
                add_transpose_apply(&mut g_in, w, &g_pre);
                g = g_in;
            }
            Layer::Step {
                slot,
                input,
                pre,
                out,
            } => {
                let w = &model.weights[*slot];
                let g_pre: Vec<f64> = g
                    .iter()
                    .zip(pre.iter().zip(out))
                    .map(|(&gv, (&p, &o))| {
                        if p > 0.0 && o < ACTIVATION_CLIP {
                            gv
                        } else {
                            0.0
                        }
                    })
                    .collect();
                accumulate_outer(&mut grads.weights[*slot], &g_pre, input, n);
                let mut g_in = vec![0.0; n];
                add_transpose_apply(&mut g_in, w, &g_pre);
                g = g_in;
            }
        }
    }
    grads
}

fn accumulate_outer(g_w: &mut [f64], g_pre: &[f64], input: &[f64], n: usize) {
    for (j, &gj) in g_pre.iter().enumerate() {
        if gj == 0.0 {
            continue;
        }
        let row = &mut g_w[j * n..(j + 1) * n];
        for (slot, &si) in row.iter_mut().zip(input) {
            *slot += gj * si;
        }
    }
}

fn add_transpose_apply(acc: &mut [f64], w: &TransitionMatrix, g_pre: &[f64]) {
    let n = w.dim();
    let entries = w.entries();
    for (j, &gj) in g_pre.iter().enumerate() {
        if gj == 0.0 {
            continue;
        }
        for (i, a) in acc.iter_mut().enumerate() {
            *a += entries[j * n + i] * gj;
        }
    }
}

/// One labeled string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledString {
    pub string: String,
    pub label: bool,
}

/// Where a dataset came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub min_len: usize,
    pub max_len: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabeledDataset {
    pub items: Vec<LabeledString>,
    pub provenance: Provenance,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        self.items.iter().filter(|i| i.label).count() as f64 / self.items.len() as f64
    }

    /// One JSON record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&serde_json::to_string(item).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let item: LabeledString = serde_json::from_str(line)
                .map_err(|e| Error::Malformed(format!("record on line {}: {e}", i + 1)))?;
            items.push(item);
        }
        Ok(LabeledDataset {
            items,
            provenance: Provenance::default(),
        })
    }
}

/// Samples `count` strings (uniform length in `[min_len, max_len]`, then
/// uniform symbols) and labels them with the set-based acceptance check.
pub fn generate_dataset(
    nfa: &Nfa,
    count: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    let strings = sample_strings(nfa.alphabet(), count, min_len, max_len, seed)?;
    let items = strings
        .into_iter()
        .map(|string| {
            let label = nfa.accepts(&string).expect("sampled from the alphabet");
            LabeledString { string, label }
        })
        .collect();
    Ok(LabeledDataset {
        items,
        provenance: Provenance {
            seed: Some(seed),
            min_len,
            max_len,
        },
    })
}

/// Uniform length, then uniform symbols.
pub fn sample_strings(
    alphabet: &[char],
    count: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<String>> {
    if min_len > max_len {
        return Err(Error::InvalidField {
            field: "min_len".into(),
            message: format!("min_len {min_len} exceeds max_len {max_len}"),
        });
    }
    if alphabet.is_empty() && max_len > 0 {
        return Err(Error::InvalidField {
            field: "alphabet".into(),
            message: "cannot sample nonempty strings over an empty alphabet".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let len = rng.gen_range(min_len..=max_len);
            (0..len)
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub init_jitter: f64,
    /// Project gradients and weights onto the mask. Off only for ablations.
    pub masked: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: 5,
            batch_size: None,
            seed: 0,
            init_jitter: 0.0,
            masked: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidField {
                field: "learning_rate".into(),
                message: "must be a finite nonnegative number".into(),
            });
        }
        if self.epochs == 0 {
            return Err(Error::InvalidField {
                field: "epochs".into(),
                message: "must be at least 1".into(),
            });
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidField {
                field: "batch_size".into(),
                message: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    /// Mean loss over the training set at the start of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Masked-out positions holding a nonzero weight after each epoch.
    pub epoch_mask_violations: Vec<usize>,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub violations: usize,
    pub final_bias: f64,
}

/// Mean loss and accuracy of `model` on `data`.
pub fn evaluate(model: &MaskedModel, data: &LabeledDataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Ok((0.0, 1.0));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for item in &data.items {
        let (p, _) = forward_smooth(model, &item.string)?;
        loss += bce_loss(p, item.label);
        if (p > 0.5) == item.label {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mask-projected gradient descent. `reference` is the acceptor whose
/// zero pattern the final audit checks against.
pub fn train(
    model: &mut MaskedModel,
    train_data: &LabeledDataset,
    test_data: &LabeledDataset,
    reference: &ReluAcceptor,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    model.jitter(config.init_jitter, derive_seed(config.seed, 1));

    let encoded: Vec<(Vec<usize>, bool)> = train_data
        .items
        .iter()
        .map(|item| Ok((model.encode(&item.string)?, item.label)))
        .collect::<Result<_>>()?;
    let batch = config.batch_size.unwrap_or(encoded.len()).max(1);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2));

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut epoch_mask_violations = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if batch < encoded.len() {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let mut total = Gradients::zeros(model);
            for &i in chunk {
                let (word, label) = &encoded[i];
                let (p, cache) = forward_encoded(model, word);
                epoch_loss += bce_loss(p, *label);
                let g = if config.masked {
                    backward(model, &cache, *label)
                } else {
                    backward_unmasked(model, &cache, *label)
                };
                total.add_scaled(&g, 1.0 / chunk.len() as f64);
            }
            apply_update(model, &total, config.learning_rate, config.masked);
        }
        let mean = epoch_loss / encoded.len().max(1) as f64;
        let weights_finite = model
            .weights
            .iter()
            .all(|w| w.entries().iter().all(|v| v.is_finite()));
        if !mean.is_finite() || !model.bias.is_finite() || !weights_finite {
            return Err(Error::Divergence { epoch, loss: mean });
        }
        epoch_losses.push(mean);
        let violations = model.mask_violations();
        if config.masked {
            debug_assert_eq!(violations, 0, "masked update leaked outside the mask");
        }
        epoch_mask_violations.push(violations);
    }

    let (final_loss, train_accuracy) = evaluate(model, train_data)?;
    let (_, test_accuracy) = evaluate(model, test_data)?;
    if !final_loss.is_finite() {
        return Err(Error::Divergence {
            epoch: config.epochs,
            loss: final_loss,
        });
    }
    Ok(TrainReport {
        config: config.clone(),
        epoch_losses,
        epoch_mask_violations,
        final_loss,
        train_accuracy,
        test_accuracy,
        violations: audit_sparsity(model, reference),
        final_bias: model.bias,
    })
}

fn apply_update(model: &mut MaskedModel, grads: &Gradients, lr: f64, masked: bool) {
    for ((w, g), mask) in model
        .weights
        .iter_mut()
        .zip(&grads.weights)
        .zip(&model.masks)
    {
        for ((v, &gv), &keep) in w.entries_mut().iter_mut().zip(g).zip(mask) {
            if masked && !keep {
                *v = 0.0;
            } else {
                *v = (*v - lr * gv).max(0.0);
            }
        }
    }
    model.bias -= lr * grads.bias;
}

/// Positions where the model holds a weight but the reference has none.
pub fn audit_sparsity(model: &MaskedModel, reference: &ReluAcceptor) -> usize {
    model
        .slots()
        .map(|slot| {
            let w = model.matrix(slot);
            let r = match slot {
                Slot::Symbol(x) => reference.symbol_matrix(x),
                Slot::Epsilon => reference.eps_matrix(),
            };
            w.entries()
                .iter()
                .zip(r.entries())
                .filter(|(&wv, &rv)| wv.abs() > AUDIT_TOLERANCE && rv == 0.0)
                .count()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{generate_random_nfa, RandomNfaConfig};
    use crate::regex::regex_to_nfa;
    use crate::relu::compile;

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, true) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(1.0, true) < 1e-6);
        assert!(bce_loss(0.0, true).is_finite());
        assert!((bce_loss(0.25, false) - (-(0.75f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn rejected_string_gives_sigmoid_of_minus_bias() {
        let nfa = regex_to_nfa("(ab)*").unwrap();
        let model = MaskedModel::from_acceptor(&compile(&nfa));
        let (p, cache) = forward_smooth(&model, "aba").unwrap();
        assert_eq!(cache.logit(), -0.5);
        assert!((p - 0.377_540_668_798_145_4).abs() < 1e-12);
        let (p, _) = forward_smooth(&model, "abab").unwrap();
        assert!(p > 0.5);
    }

    #[test]
    fn empty_string_with_accepting_start() {
        let mut nfa = Nfa::new(2, ['a']).unwrap();
        nfa.add_accept(0).unwrap();
        nfa.add_epsilon(0, 1).unwrap();
        let model = MaskedModel::from_acceptor(&compile(&nfa));
        let (p, cache) = forward_smooth(&model, "").unwrap();
        let c = cache.logit() + 0.5;
        assert!(c >= 1.0);
        assert!((p - sigmoid(c - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn unknown_symbol_rejected() {
        let model = MaskedModel::from_acceptor(&compile(&regex_to_nfa("a").unwrap()));
        assert!(matches!(
            forward_smooth(&model, "ab"),
            Err(Error::UnknownSymbol {
                symbol: 'b',
                position: 1
            })
        ));
    }

    #[test]
    fn empty_string_touches_only_eps_and_bias() {
        let nfa = generate_random_nfa(&RandomNfaConfig::six_state(2).with_eps_probability(0.5));
        let mut model = MaskedModel::from_acceptor(&compile(&nfa));
        model.jitter(0.1, 9);
        for label in [true, false] {
            let (_, cache) = forward_smooth(&model, "").unwrap();
            let g = backward(&model, &cache, label);
            for x in 0..nfa.alphabet().len() {
                assert!(g.weights[x].iter().all(|&v| v == 0.0));
            }
            if !label {
                assert!(g.bias != 0.0);
                assert!(g.weights[nfa.alphabet().len()].iter().any(|&v| v != 0.0));
            }
        }
    }

    #[test]
    fn audit_detects_poked_weight() {
        let acc = compile(&generate_random_nfa(&RandomNfaConfig::six_state(0)));
        let mut model = MaskedModel::from_acceptor(&acc);
        assert_eq!(audit_sparsity(&model, &acc), 0);
        let (t, s) = (0..6)
            .flat_map(|t| (0..6).map(move |s| (t, s)))
            .find(|&(t, s)| acc.symbol_matrix(0).get(t, s) == 0.0)
            .unwrap();
        model.set_weight(Slot::Symbol(0), t, s, 0.5);
        assert_eq!(audit_sparsity(&model, &acc), 1);
        assert_eq!(model.mask_violations(), 1);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let nfa = generate_random_nfa(&RandomNfaConfig::six_state(1));
        let acc = compile(&nfa);
        let mut model = MaskedModel::from_acceptor(&acc);
        let before = model.clone();
        let data = generate_dataset(&nfa, 50, 1, 10, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &data, &data, &acc, &cfg).unwrap();
        assert_eq!(model, before);
        assert_eq!(report.violations, 0);
        let (_, untrained) = evaluate(&before, &data).unwrap();
        assert_eq!(report.train_accuracy, untrained);
    }

    #[test]
    fn dataset_is_deterministic_and_labeled_by_oracle() {
        let nfa = generate_random_nfa(&RandomNfaConfig::six_state(4));
        let a = generate_dataset(&nfa, 200, 1, 10, 11).unwrap();
        let b = generate_dataset(&nfa, 200, 1, 10, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        for item in &a.items {
            assert!((1..=10).contains(&item.string.len()));
            assert_eq!(item.label, nfa.accepts(&item.string).unwrap());
        }
        assert!(generate_dataset(&nfa, 1, 5, 4, 0).is_err());
    }

    #[test]
    fn dataset_jsonl_round_trip() {
        let nfa = regex_to_nfa("a|b").unwrap();
        let mut data = generate_dataset(&nfa, 20, 0, 3, 1).unwrap();
        let back = LabeledDataset::from_jsonl(&data.to_jsonl()).unwrap();
        data.provenance = Provenance::default();
        assert_eq!(back, data);
        assert!(LabeledDataset::from_jsonl("{\"string\": 1}").is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let acc = compile(&generate_random_nfa(&RandomNfaConfig::six_state(5)));
        let mut model = MaskedModel::from_acceptor(&acc);
        model.jitter(0.1, 3);
        model.set_bias(0.625);
        let back = MaskedModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: f64::NAN,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let nfa = generate_random_nfa(&RandomNfaConfig::six_state(1));
        let acc = compile(&nfa);
        let mut model = MaskedModel::from_acceptor(&acc);
        let (t, s) = (0..6)
            .flat_map(|t| (0..6).map(move |s| (t, s)))
            .find(|&(t, s)| acc.symbol_matrix(0).get(t, s) != 0.0)
            .unwrap();
        model.set_weight(Slot::Symbol(0), t, s, f64::INFINITY);
        let data = generate_dataset(&nfa, 20, 1, 5, 3).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&mut model, &data, &data, &acc, &cfg),
            Err(Error::Divergence { epoch: 0, .. })
        ));
    }
}
