use super::batch::{Batch, Domain};
use super::config::{DomainWeights, KernelMode, ModelConfig, PretrainCoeffs};
use super::vocab::Vocab;
use crate::analysis::INF;
use crate::tensor::{load_checkpoint, save_checkpoint, CheckpointError, ParamId, ParamStore, Tape, Tensor, TensorError, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("sequence of {len} tokens exceeds the maximum length {max}")]
    TooLong { len: usize, max: usize },
    #[error("{what} id {id} is outside a vocabulary of {size}")]
    OutOfVocabulary { what: &'static str, id: usize, size: usize },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

/// Kernel weight `exp(-d² / (2σ²))` for each distance; `INF` gives 0.
pub fn rbf_weights(distances: &[u32], sigma: f64) -> Vec<f64> {
    distances
        .iter()
        .map(|&d| if d == INF { 0.0 } else { (-(d as f64).powi(2) / (2.0 * sigma * sigma)).exp() })
        .collect()
}

#[derive(Debug, Clone)]
struct LayerParams {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
    /// Log bandwidth; σ = exp(ρ) stays positive.
    rho: ParamId,
}

#[derive(Debug, Clone)]
struct Params {
    token_emb: ParamId,
    tag_emb: ParamId,
    pos_emb: ParamId,
    alpha: ParamId,
    beta: ParamId,
    layers: Vec<LayerParams>,
    mlm_w: ParamId,
    mlm_b: ParamId,
    nsp_w: ParamId,
    nsp_b: ParamId,
    type_w: ParamId,
    type_b: ParamId,
}

/// Loss terms of one pretraining sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub mlm: f64,
    pub nsp: f64,
    pub sigma: f64,
    pub total: f64,
}

/// Transformer encoder with syntax-enhanced inputs, optional kernelized
/// attention and three output heads (masked token, next segment, type).
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    ids: Params,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in &mut t.data {
        *v = rng.gen_range(-bound..bound);
    }
    t
}

fn xavier(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    uniform(rng, &[fan_in, fan_out], (6.0 / (fan_in + fan_out) as f64).sqrt())
}

impl Model {
    /// A freshly initialized model. Parameter names and order depend only
    /// on the config, so checkpoints of equal configs are interchangeable.
    pub fn new(mut config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Model, ModelError> {
        config.token_vocab = vocab.len();
        config.validate().map_err(ModelError::Config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.dim;
        let emb = 0.2;
        let token_emb = store.add("embed.token", uniform(&mut rng, &[config.token_vocab, d], emb));
        let tag_emb = store.add("embed.tag", uniform(&mut rng, &[config.tag_vocab, d], emb));
        let pos_emb = store.add("embed.position", uniform(&mut rng, &[config.max_len, d], emb));
        let alpha = store.add("embed.alpha", Tensor::full(&[d], 1.0));
        let beta = store.add("embed.beta", Tensor::full(&[d], 1.0));
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let mut add = |name: &str, t: Tensor| store.add(format!("layer{l}.{name}"), t);
            layers.push(LayerParams {
                wq: add("wq", xavier(&mut rng, d, d)),
                bq: add("bq", Tensor::zeros(&[d])),
                wk: add("wk", xavier(&mut rng, d, d)),
                bk: add("bk", Tensor::zeros(&[d])),
                wv: add("wv", xavier(&mut rng, d, d)),
                bv: add("bv", Tensor::zeros(&[d])),
                wo: add("wo", xavier(&mut rng, d, d)),
                bo: add("bo", Tensor::zeros(&[d])),
                ln1_gain: add("ln1.gain", Tensor::full(&[d], 1.0)),
                ln1_bias: add("ln1.bias", Tensor::zeros(&[d])),
                w1: add("ff.w1", xavier(&mut rng, d, config.ff_dim)),
                b1: add("ff.b1", Tensor::zeros(&[config.ff_dim])),
                w2: add("ff.w2", xavier(&mut rng, config.ff_dim, d)),
                b2: add("ff.b2", Tensor::zeros(&[d])),
                ln2_gain: add("ln2.gain", Tensor::full(&[d], 1.0)),
                ln2_bias: add("ln2.bias", Tensor::zeros(&[d])),
                rho: add("rho", Tensor::scalar(config.sigma_init.ln())),
            });
        }
        let mlm_w = store.add("head.mlm.w", xavier(&mut rng, d, config.token_vocab));
        let mlm_b = store.add("head.mlm.b", Tensor::zeros(&[config.token_vocab]));
        let nsp_w = store.add("head.nsp.w", xavier(&mut rng, d, 2));
        let nsp_b = store.add("head.nsp.b", Tensor::zeros(&[2]));
        let type_w = store.add("head.type.w", xavier(&mut rng, d, config.type_vocab));
        let type_b = store.add("head.type.b", Tensor::zeros(&[config.type_vocab]));
        let ids = Params { token_emb, tag_emb, pos_emb, alpha, beta, layers, mlm_w, mlm_b, nsp_w, nsp_b, type_w, type_b };
        Ok(Model { config, vocab, params: store, ids })
    }

    /// Same architecture with a different attention mode; parameters are
    /// shared by name.
    pub fn with_kernel(&self, kernel: KernelMode) -> Model {
        let mut m = self.clone();
        m.config.kernel = kernel;
        m
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.ids.layers.iter().map(|l| self.params.value(l.rho).item().exp()).collect()
    }

    pub fn set_sigma(&mut self, layer: usize, sigma: f64) {
        let id = self.ids.layers[layer].rho;
        self.params.value_mut(id).data[0] = sigma.ln();
    }

    /// Ids of the enhancement weight vectors (α, β).
    pub fn enhancement_ids(&self) -> (ParamId, ParamId) {
        (self.ids.alpha, self.ids.beta)
    }

    fn p(&self, tape: &Tape, id: ParamId) -> Var {
        tape.param(&self.params, id)
    }

    fn linear(&self, tape: &Tape, x: Var, w: ParamId, b: ParamId) -> Result<Var, TensorError> {
        let h = tape.matmul(x, self.p(tape, w))?;
        tape.add_row(h, self.p(tape, b))
    }

    fn check_ids(&self, tokens: &[usize], tags: &[usize], positions: &[usize]) -> Result<(), ModelError> {
        let c = &self.config;
        for (what, ids, size) in [("token", tokens, c.token_vocab), ("tag", tags, c.tag_vocab), ("position", positions, c.max_len)] {
            if let Some(&id) = ids.iter().find(|&&i| i >= size) {
                return Err(ModelError::OutOfVocabulary { what, id, size });
            }
        }
        if tokens.len() != tags.len() || tokens.len() != positions.len() {
            return Err(ModelError::Config(format!(
                "{} tokens, {} tags and {} positions differ in length",
                tokens.len(),
                tags.len(),
                positions.len()
            )));
        }
        Ok(())
    }

    /// `emb(x) ⊙ α + emb(s) ⊙ β + pos`. Without syntax enhancement the tag
    /// term is dropped.
    pub fn embed_inputs(&self, tape: &Tape, tokens: &[usize], tags: &[usize], positions: &[usize]) -> Result<Var, ModelError> {
        if tokens.len() > self.config.max_len {
            return Err(ModelError::TooLong { len: tokens.len(), max: self.config.max_len });
        }
        self.check_ids(tokens, tags, positions)?;
        let tok = tape.embedding_lookup(self.p(tape, self.ids.token_emb), tokens)?;
        let mut c = tape.mul_row(tok, self.p(tape, self.ids.alpha))?;
        if self.config.syntax_enhancement {
            let tag = tape.embedding_lookup(self.p(tape, self.ids.tag_emb), tags)?;
            let tag = tape.mul_row(tag, self.p(tape, self.ids.beta))?;
            c = tape.add(c, tag)?;
        }
        let pos = tape.embedding_lookup(self.p(tape, self.ids.pos_emb), positions)?;
        Ok(tape.add(c, pos)?)
    }

    /// Kernel matrix of `layer` over the given distances.
    pub fn kernel(&self, tape: &Tape, layer: usize, distances: &Arc<Tensor>) -> Result<Var, TensorError> {
        let sigma = tape.exp(self.p(tape, self.ids.layers[layer].rho));
        tape.rbf(Arc::clone(distances), sigma)
    }

    /// Multi-head attention of `layer`. With a kernel, each head's
    /// attention probabilities are multiplied by it and renormalized per
    /// row; a row with no weight left attends to itself only.
    pub fn attention(&self, tape: &Tape, layer: usize, c: Var, kernel: Option<Var>) -> Result<Var, TensorError> {
        let lp = &self.ids.layers[layer];
        let q = self.linear(tape, c, lp.wq, lp.bq)?;
        let k = self.linear(tape, c, lp.wk, lp.bk)?;
        let v = self.linear(tape, c, lp.wv, lp.bv)?;
        let dh = self.config.dim / self.config.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.heads);
        for h in 0..self.config.heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = tape.slice(q, 1, lo, hi)?;
            let kh = tape.slice(k, 1, lo, hi)?;
            let vh = tape.slice(v, 1, lo, hi)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.scale(tape.matmul(qh, kt)?, scale);
            let mut w = tape.softmax(scores)?;
            if let Some(kernel) = kernel {
                w = tape.row_normalize(tape.mul(w, kernel)?)?;
            }
            heads.push(tape.matmul(w, vh)?);
        }
        let joined = if heads.len() == 1 { heads[0] } else { tape.concat(&heads, 1)? };
        self.linear(tape, joined, lp.wo, lp.bo)
    }

    /// Attention sub-block of `layer` under this model's kernel mode.
    pub fn kernelized_attention(&self, tape: &Tape, layer: usize, c: Var, distances: &Arc<Tensor>) -> Result<Var, TensorError> {
        let kernel = match self.config.kernel {
            KernelMode::Kernelized => Some(self.kernel(tape, layer, distances)?),
            KernelMode::Plain => None,
        };
        self.attention(tape, layer, c, kernel)
    }

    fn block(&self, tape: &Tape, layer: usize, c: Var, distances: &Arc<Tensor>) -> Result<Var, TensorError> {
        let lp = &self.ids.layers[layer];
        let a = self.kernelized_attention(tape, layer, c, distances)?;
        let c = tape.layer_norm(tape.add(c, a)?, self.p(tape, lp.ln1_gain), self.p(tape, lp.ln1_bias))?;
        let f = self.linear(tape, c, lp.w1, lp.b1)?;
        let f = self.linear(tape, tape.gelu(f), lp.w2, lp.b2)?;
        tape.layer_norm(tape.add(c, f)?, self.p(tape, lp.ln2_gain), self.p(tape, lp.ln2_bias))
    }

    /// Final hidden states of every position. The same distance matrix
    /// regulates every layer.
    pub fn encode(&self, tape: &Tape, batch: &Batch) -> Result<Var, ModelError> {
        if batch.vtc.len() != batch.len() {
            return Err(ModelError::Config(format!("distance matrix is {} wide for {} tokens", batch.vtc.len(), batch.len())));
        }
        let mut c = self.embed_inputs(tape, &batch.tokens, &batch.tags, &batch.positions)?;
        let distances = Arc::new(batch.distances());
        for layer in 0..self.config.layers {
            c = self.block(tape, layer, c, &distances)?;
        }
        Ok(c)
    }

    fn head(&self, tape: &Tape, hidden: Var, rows: &[usize], w: ParamId, b: ParamId) -> Result<Var, TensorError> {
        let picked = tape.embedding_lookup(hidden, rows)?;
        self.linear(tape, picked, w, b)
    }

    /// Summed cross-entropy of the masked-token head; 0 without masks.
    pub fn loss_mlm(&self, tape: &Tape, hidden: Var, positions: &[usize], targets: &[usize]) -> Result<Var, TensorError> {
        if positions.is_empty() {
            return Ok(tape.constant(Tensor::scalar(0.0)));
        }
        let logits = self.head(tape, hidden, positions, self.ids.mlm_w, self.ids.mlm_b)?;
        let mean = tape.cross_entropy(logits, targets)?;
        Ok(tape.scale(mean, positions.len() as f64))
    }

    /// Two-way cross-entropy of the next-segment head read at position 0.
    pub fn loss_nsp(&self, tape: &Tape, hidden: Var, label: usize) -> Result<Var, TensorError> {
        let logits = self.head(tape, hidden, &[0], self.ids.nsp_w, self.ids.nsp_b)?;
        tape.cross_entropy(logits, &[label])
    }

    /// `Σ σ²` over layers.
    pub fn sigma_penalty(&self, tape: &Tape) -> Result<Var, TensorError> {
        let mut total = tape.constant(Tensor::scalar(0.0));
        for lp in &self.ids.layers {
            let sigma = tape.exp(self.p(tape, lp.rho));
            total = tape.add(total, tape.mul(sigma, sigma)?)?;
        }
        Ok(total)
    }

    /// `a·L_mlm + b·L_nsp + γ·Σσ²`. The bandwidth penalty only applies in
    /// kernelized mode, where σ is used.
    pub fn loss_pretrain(&self, tape: &Tape, batch: &Batch, coeffs: PretrainCoeffs) -> Result<(Var, LossParts), ModelError> {
        let hidden = self.encode(tape, batch)?;
        let mlm = self.loss_mlm(tape, hidden, &batch.mlm_positions, &batch.mlm_targets)?;
        let nsp = match batch.nsp_label {
            Some(label) => self.loss_nsp(tape, hidden, label)?,
            None => tape.constant(Tensor::scalar(0.0)),
        };
        let sigma = match self.config.kernel {
            KernelMode::Kernelized => self.sigma_penalty(tape)?,
            KernelMode::Plain => tape.constant(Tensor::scalar(0.0)),
        };
        let total = tape.add(tape.scale(mlm, coeffs.mlm), tape.scale(nsp, coeffs.nsp))?;
        let total = tape.add(total, tape.scale(sigma, coeffs.sigma))?;
        let parts = LossParts {
            mlm: tape.value(mlm).item(),
            nsp: tape.value(nsp).item(),
            sigma: tape.value(sigma).item(),
            total: tape.value(total).item(),
        };
        Ok((total, parts))
    }

    /// Logits of the type head at `positions`.
    pub fn type_logits(&self, tape: &Tape, hidden: Var, positions: &[usize]) -> Result<Var, TensorError> {
        self.head(tape, hidden, positions, self.ids.type_w, self.ids.type_b)
    }

    /// Domain-weighted summed negative log-likelihood of the type labels.
    pub fn loss_finetune(&self, tape: &Tape, batch: &Batch, weights: DomainWeights) -> Result<Var, ModelError> {
        if let Some(&t) = batch.type_targets.iter().find(|&&t| t >= self.config.type_vocab) {
            return Err(ModelError::OutOfVocabulary { what: "type", id: t, size: self.config.type_vocab });
        }
        if batch.type_positions.is_empty() {
            return Ok(tape.constant(Tensor::scalar(0.0)));
        }
        let hidden = self.encode(tape, batch)?;
        let logits = self.type_logits(tape, hidden, &batch.type_positions)?;
        let mean = tape.cross_entropy(logits, &batch.type_targets)?;
        let w = match batch.domain {
            Domain::Source => weights.source,
            Domain::Target => weights.target,
        };
        Ok(tape.scale(mean, w * batch.type_positions.len() as f64))
    }

    /// Type distributions at the batch's annotation sites.
    pub fn type_distributions(&self, batch: &Batch) -> Result<Vec<Vec<f64>>, ModelError> {
        if batch.type_positions.is_empty() {
            return Ok(Vec::new());
        }
        let tape = Tape::new();
        let hidden = self.encode(&tape, batch)?;
        let logits = self.type_logits(&tape, hidden, &batch.type_positions)?;
        let probs = tape.value(logits).softmax(1)?;
        Ok((0..batch.type_positions.len()).map(|i| probs.row(i).to_vec()).collect())
    }

    /// Writes the checkpoint plus `<path>.config.json` and `<path>.vocab.txt`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        let config = serde_json::to_value(&self.config).expect("config serializes");
        save_checkpoint(path, &self.params, &config)?;
        let sidecar = sidecar_path(path, "config.json");
        let text = serde_json::to_string_pretty(&self.config).expect("config serializes");
        std::fs::write(&sidecar, text + "\n").map_err(|e| ModelError::File { path: sidecar, message: e.to_string() })?;
        let vocab = sidecar_path(path, "vocab.txt");
        self.vocab.save(&vocab).map_err(|e| ModelError::File { path: vocab, message: e.to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model, ModelError> {
        let path = path.as_ref();
        let (store, config) = load_checkpoint(path)?;
        let config: ModelConfig = serde_json::from_value(config)
            .map_err(|e| ModelError::File { path: path.to_path_buf(), message: format!("bad config in header: {e}") })?;
        let vocab_path = sidecar_path(path, "vocab.txt");
        let vocab = Vocab::load(&vocab_path).map_err(|e| ModelError::File { path: vocab_path, message: e.to_string() })?;
        let mut model = Model::new(config, vocab, 0)?;
        if model.params.load_matching(&store) != model.params.len() || store.len() != model.params.len() {
            return Err(ModelError::File { path: path.to_path_buf(), message: "parameters do not match the config".into() });
        }
        Ok(model)
    }
}

pub fn sidecar_path(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
