//! Pre-norm Transformer encoder-decoder with tied embeddings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    dropout, dropout_backward, Attention, AttentionCache, FeedForward, FeedForwardCache, LayerNorm, LayerNormCache, Params,
};
use super::tensor::{matmul, matmul_nt, matmul_tn_acc, softmax_in_place, Matrix};
use crate::encoding::{EncodingTables, SinusoidalTable, SourceLayout};
use crate::seed::derive_seed;
use crate::textprep::{BOS_ID, EOS_ID};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub label_smoothing: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 64,
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 4,
            ffn_dim: 256,
            dropout: 0.1,
            max_len: 256,
            label_smoothing: 0.1,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("dimension {} is not divisible by {} heads", self.dim, self.heads)));
        }
        if self.ffn_dim == 0 || self.max_len == 0 {
            return Err(Error::Config("feed-forward dimension and max length must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(format!("label smoothing {} outside [0, 1)", self.label_smoothing)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer<T> {
    pub norm1: LayerNorm<T>,
    pub attention: Attention<T>,
    pub norm2: LayerNorm<T>,
    pub ffn: FeedForward<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderLayer<T> {
    pub norm1: LayerNorm<T>,
    pub self_attention: Attention<T>,
    pub norm2: LayerNorm<T>,
    pub cross_attention: Attention<T>,
    pub norm3: LayerNorm<T>,
    pub ffn: FeedForward<T>,
}

type Rng<'a> = Option<&'a mut ChaCha8Rng>;

struct EncoderLayerCache<T> {
    ln1: LayerNormCache<T>,
    attn_in: Matrix<T>,
    attn: AttentionCache<T>,
    drop1: Option<Vec<T>>,
    ln2: LayerNormCache<T>,
    ffn_in: Matrix<T>,
    ffn: FeedForwardCache<T>,
    drop2: Option<Vec<T>>,
}

struct DecoderLayerCache<T> {
    ln1: LayerNormCache<T>,
    self_in: Matrix<T>,
    self_attn: AttentionCache<T>,
    drop1: Option<Vec<T>>,
    ln2: LayerNormCache<T>,
    cross_in: Matrix<T>,
    cross_attn: AttentionCache<T>,
    drop2: Option<Vec<T>>,
    ln3: LayerNormCache<T>,
    ffn_in: Matrix<T>,
    ffn: FeedForwardCache<T>,
    drop3: Option<Vec<T>>,
}

impl<T: Scalar> EncoderLayer<T> {
    fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        EncoderLayer {
            norm1: LayerNorm::new(cfg.dim),
            attention: Attention::new(cfg.dim, rng),
            norm2: LayerNorm::new(cfg.dim),
            ffn: FeedForward::new(cfg.dim, cfg.ffn_dim, rng),
        }
    }

    fn forward(&self, x: &Matrix<T>, cfg: &ModelConfig, rng: &mut Rng) -> (Matrix<T>, EncoderLayerCache<T>) {
        let (attn_in, ln1) = self.norm1.forward(x);
        let (mut a, attn) = self.attention.forward(&attn_in, &attn_in, cfg.heads, false);
        let drop1 = dropout(&mut a, cfg.dropout, rng.as_deref_mut());
        a.add_assign(x);
        let h1 = a;
        let (ffn_in, ln2) = self.norm2.forward(&h1);
        let (mut f, ffn) = self.ffn.forward(&ffn_in);
        let drop2 = dropout(&mut f, cfg.dropout, rng.as_deref_mut());
        f.add_assign(&h1);
        let cache = EncoderLayerCache {
            ln1,
            attn_in,
            attn,
            drop1,
            ln2,
            ffn_in,
            ffn,
            drop2,
        };
        (f, cache)
    }

    fn backward(&self, c: &EncoderLayerCache<T>, dy: Matrix<T>, g: &mut EncoderLayer<T>) -> Matrix<T> {
        let mut df = dy.clone();
        dropout_backward(&mut df, &c.drop2);
        let dffn_in = self.ffn.backward(&c.ffn, &c.ffn_in, &df, &mut g.ffn);
        let mut dh1 = dy;
        dh1.add_assign(&self.norm2.backward(&c.ln2, &dffn_in, &mut g.norm2));
        let mut da = dh1.clone();
        dropout_backward(&mut da, &c.drop1);
        let (mut dq, dkv) = self.attention.backward(&c.attn, &c.attn_in, &c.attn_in, &da, &mut g.attention);
        dq.add_assign(&dkv);
        dh1.add_assign(&self.norm1.backward(&c.ln1, &dq, &mut g.norm1));
        dh1
    }
}

impl<T: Scalar> DecoderLayer<T> {
    fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        DecoderLayer {
            norm1: LayerNorm::new(cfg.dim),
            self_attention: Attention::new(cfg.dim, rng),
            norm2: LayerNorm::new(cfg.dim),
            cross_attention: Attention::new(cfg.dim, rng),
            norm3: LayerNorm::new(cfg.dim),
            ffn: FeedForward::new(cfg.dim, cfg.ffn_dim, rng),
        }
    }

    fn forward(&self, y: &Matrix<T>, memory: &Matrix<T>, cfg: &ModelConfig, rng: &mut Rng) -> (Matrix<T>, DecoderLayerCache<T>) {
        let (self_in, ln1) = self.norm1.forward(y);
        let (mut s, self_attn) = self.self_attention.forward(&self_in, &self_in, cfg.heads, true);
        let drop1 = dropout(&mut s, cfg.dropout, rng.as_deref_mut());
        s.add_assign(y);
        let h1 = s;
        let (cross_in, ln2) = self.norm2.forward(&h1);
        let (mut c, cross_attn) = self.cross_attention.forward(&cross_in, memory, cfg.heads, false);
        let drop2 = dropout(&mut c, cfg.dropout, rng.as_deref_mut());
        c.add_assign(&h1);
        let h2 = c;
        let (ffn_in, ln3) = self.norm3.forward(&h2);
        let (mut f, ffn) = self.ffn.forward(&ffn_in);
        let drop3 = dropout(&mut f, cfg.dropout, rng.as_deref_mut());
        f.add_assign(&h2);
        let cache = DecoderLayerCache {
            ln1,
            self_in,
            self_attn,
            drop1,
            ln2,
            cross_in,
            cross_attn,
            drop2,
            ln3,
            ffn_in,
            ffn,
            drop3,
        };
        (f, cache)
    }

    /// Returns the input gradient and adds the memory gradient into `dmemory`.
    fn backward(
        &self,
        c: &DecoderLayerCache<T>,
        memory: &Matrix<T>,
        dy: Matrix<T>,
        g: &mut DecoderLayer<T>,
        dmemory: &mut Matrix<T>,
    ) -> Matrix<T> {
        let mut df = dy.clone();
        dropout_backward(&mut df, &c.drop3);
        let dffn_in = self.ffn.backward(&c.ffn, &c.ffn_in, &df, &mut g.ffn);
        let mut dh2 = dy;
        dh2.add_assign(&self.norm3.backward(&c.ln3, &dffn_in, &mut g.norm3));

        let mut dc = dh2.clone();
        dropout_backward(&mut dc, &c.drop2);
        let (dcross_in, dmem) = self.cross_attention.backward(&c.cross_attn, &c.cross_in, memory, &dc, &mut g.cross_attention);
        dmemory.add_assign(&dmem);
        let mut dh1 = dh2;
        dh1.add_assign(&self.norm2.backward(&c.ln2, &dcross_in, &mut g.norm2));

        let mut ds = dh1.clone();
        dropout_backward(&mut ds, &c.drop1);
        let (mut dq, dkv) = self.self_attention.backward(&c.self_attn, &c.self_in, &c.self_in, &ds, &mut g.self_attention);
        dq.add_assign(&dkv);
        dh1.add_assign(&self.norm1.backward(&c.ln1, &dq, &mut g.norm1));
        dh1
    }
}

impl<T: Scalar> Params<T> for EncoderLayer<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a [T])) {
        self.norm1.visit(&format!("{prefix}.norm1"), f);
        self.attention.visit(&format!("{prefix}.attention"), f);
        self.norm2.visit(&format!("{prefix}.norm2"), f);
        self.ffn.visit(&format!("{prefix}.ffn"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(&str, &'a mut [T])) {
        self.norm1.visit_mut(&format!("{prefix}.norm1"), f);
        self.attention.visit_mut(&format!("{prefix}.attention"), f);
        self.norm2.visit_mut(&format!("{prefix}.norm2"), f);
        self.ffn.visit_mut(&format!("{prefix}.ffn"), f);
    }
}

impl<T: Scalar> Params<T> for DecoderLayer<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a [T])) {
        self.norm1.visit(&format!("{prefix}.norm1"), f);
        self.self_attention.visit(&format!("{prefix}.self_attention"), f);
        self.norm2.visit(&format!("{prefix}.norm2"), f);
        self.cross_attention.visit(&format!("{prefix}.cross_attention"), f);
        self.norm3.visit(&format!("{prefix}.norm3"), f);
        self.ffn.visit(&format!("{prefix}.ffn"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(&str, &'a mut [T])) {
        self.norm1.visit_mut(&format!("{prefix}.norm1"), f);
        self.self_attention.visit_mut(&format!("{prefix}.self_attention"), f);
        self.norm2.visit_mut(&format!("{prefix}.norm2"), f);
        self.cross_attention.visit_mut(&format!("{prefix}.cross_attention"), f);
        self.norm3.visit_mut(&format!("{prefix}.norm3"), f);
        self.ffn.visit_mut(&format!("{prefix}.ffn"), f);
    }
}

/// Encoder-decoder whose word embeddings feed the encoder, the decoder and
/// the output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel<T> {
    pub config: ModelConfig,
    pub tables: EncodingTables<T>,
    pub encoder: Vec<EncoderLayer<T>>,
    pub encoder_norm: LayerNorm<T>,
    pub decoder: Vec<DecoderLayer<T>>,
    pub decoder_norm: LayerNorm<T>,
    pe: SinusoidalTable<T>,
}

pub(crate) struct EncoderCache<T> {
    input_drop: Option<Vec<T>>,
    layers: Vec<EncoderLayerCache<T>>,
    norm: LayerNormCache<T>,
}

pub(crate) struct DecoderCache<T> {
    input_drop: Option<Vec<T>>,
    layers: Vec<DecoderLayerCache<T>>,
    norm: LayerNormCache<T>,
    /// Final normalized states, `target × d`.
    pub(crate) hidden: Matrix<T>,
}

impl<T: Scalar> DecoderCache<T> {
    /// Cross-attention weights, layer → head → `target × source`.
    pub(crate) fn cross_attention(&self) -> Vec<Vec<Matrix<T>>> {
        self.layers.iter().map(|l| l.cross_attn.probs.clone()).collect()
    }
}

/// Loss totals for one or more sentences.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    /// Label-smoothed cross-entropy summed over target tokens.
    pub loss: f64,
    /// Negative log-likelihood summed over target tokens.
    pub nll: f64,
    pub tokens: usize,
}

impl LossStats {
    pub fn add(&mut self, other: LossStats) {
        self.loss += other.loss;
        self.nll += other.nll;
        self.tokens += other.tokens;
    }
}

impl<T: Scalar> TransformerModel<T> {
    /// Randomly initialized model; all draws derive from `config.seed`.
    pub fn new(config: ModelConfig, vocab_size: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "init"));
        let tables = EncodingTables::new(vocab_size, config.dim, &mut rng);
        let encoder = (0..config.encoder_layers).map(|_| EncoderLayer::new(&config, &mut rng)).collect();
        let decoder = (0..config.decoder_layers).map(|_| DecoderLayer::new(&config, &mut rng)).collect();
        Ok(TransformerModel {
            encoder_norm: LayerNorm::new(config.dim),
            decoder_norm: LayerNorm::new(config.dim),
            pe: SinusoidalTable::new(config.max_len, config.dim),
            tables,
            encoder,
            decoder,
            config,
        })
    }

    /// A copy with every parameter set to zero, used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub fn fill_zero(&mut self) {
        self.visit_mut("", &mut |_, p| p.iter_mut().for_each(|x| *x = T::zero()));
    }

    pub fn vocab_size(&self) -> usize {
        self.tables.we.rows()
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn positions(&self) -> &SinusoidalTable<T> {
        &self.pe
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| n += p.len());
        n
    }

    /// Same parameters in another precision.
    pub fn cast<U: Scalar>(&self) -> TransformerModel<U> {
        let mut values = Vec::new();
        self.visit("", &mut |_, p| values.extend(p.iter().map(|x| x.as_f64())));
        let mut out = TransformerModel::<U>::new(self.config.clone(), self.vocab_size()).expect("config already validated");
        let mut it = values.into_iter();
        out.visit_mut("", &mut |_, p| p.iter_mut().for_each(|x| *x = U::of(it.next().expect("same layout"))));
        out
    }

    /// Encoder input rows for a source layout.
    pub fn embed_source(&self, layout: &SourceLayout) -> Result<Matrix<T>> {
        self.tables.embed(&self.pe, layout)
    }

    fn embed_target(&self, prefix: &[u32]) -> Result<Matrix<T>> {
        let mut m = Matrix::zeros(prefix.len(), self.dim());
        for (i, &id) in prefix.iter().enumerate() {
            if id as usize >= self.vocab_size() {
                return Err(Error::Dimension(format!("target id {id} outside vocabulary of {}", self.vocab_size())));
            }
            m.row_mut(i).copy_from_slice(&self.tables.encode_base_token(&self.pe, id, i + 1)?);
        }
        Ok(m)
    }

    pub(crate) fn run_encoder(&self, x: &Matrix<T>, rng: &mut Rng) -> Result<(Matrix<T>, EncoderCache<T>)> {
        if x.cols() != self.dim() {
            return Err(Error::Dimension(format!("encoder input has {} columns, model dimension is {}", x.cols(), self.dim())));
        }
        if x.rows() == 0 {
            return Err(Error::Dimension("empty source sequence".into()));
        }
        let mut h = x.clone();
        let input_drop = dropout(&mut h, self.config.dropout, rng.as_deref_mut());
        let mut layers = Vec::with_capacity(self.encoder.len());
        for layer in &self.encoder {
            let (next, cache) = layer.forward(&h, &self.config, rng);
            layers.push(cache);
            h = next;
        }
        let (memory, norm) = self.encoder_norm.forward(&h);
        Ok((memory, EncoderCache { input_drop, layers, norm }))
    }

    pub(crate) fn run_decoder(&self, prefix: &[u32], memory: &Matrix<T>, rng: &mut Rng) -> Result<DecoderCache<T>> {
        if prefix.is_empty() || prefix.len() > self.config.max_len {
            return Err(Error::Dimension(format!(
                "target prefix length {} outside 1..={}",
                prefix.len(),
                self.config.max_len
            )));
        }
        let mut h = self.embed_target(prefix)?;
        let input_drop = dropout(&mut h, self.config.dropout, rng.as_deref_mut());
        let mut layers = Vec::with_capacity(self.decoder.len());
        for layer in &self.decoder {
            let (next, cache) = layer.forward(&h, memory, &self.config, rng);
            layers.push(cache);
            h = next;
        }
        let (hidden, norm) = self.decoder_norm.forward(&h);
        Ok(DecoderCache {
            input_drop,
            layers,
            norm,
            hidden,
        })
    }

    /// Encoder output for a source without dropout.
    pub fn encode(&self, source: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.run_encoder(source, &mut None)?.0)
    }

    /// Next-token distribution after `prefix`, given encoder memory.
    pub fn next_distribution(&self, memory: &Matrix<T>, prefix: &[u32]) -> Result<Vec<T>> {
        let cache = self.run_decoder(prefix, memory, &mut None)?;
        let last = cache.hidden.rows() - 1;
        let mut row = matmul_nt(&Matrix::from_vec(1, self.dim(), cache.hidden.row(last).to_vec()), &self.tables.we)
            .data()
            .to_vec();
        softmax_in_place(&mut row);
        Ok(row)
    }

    /// Per-step vocabulary distributions (`prefix.len() × vocab`) for an
    /// encoded source and a decoder input that normally starts with `<s>`.
    pub fn forward(&self, source: &Matrix<T>, prefix: &[u32]) -> Result<Matrix<T>> {
        let memory = self.encode(source)?;
        let cache = self.run_decoder(prefix, &memory, &mut None)?;
        let mut probs = matmul_nt(&cache.hidden, &self.tables.we);
        for i in 0..probs.rows() {
            softmax_in_place(probs.row_mut(i));
        }
        Ok(probs)
    }

    /// Forward and backward for one pair. The decoder reads `<s> target` and
    /// predicts `target </s>`. Gradients of the summed loss are added to `grad`.
    pub fn loss_and_grad(
        &self,
        source: &SourceLayout,
        target: &[u32],
        grad: &mut TransformerModel<T>,
        mut rng: Rng,
    ) -> Result<LossStats> {
        let x = self.embed_source(source)?;
        let (memory, enc) = self.run_encoder(&x, &mut rng)?;
        let mut input = Vec::with_capacity(target.len() + 1);
        input.push(BOS_ID);
        input.extend_from_slice(target);
        let dec = self.run_decoder(&input, &memory, &mut rng)?;

        let mut logits = matmul_nt(&dec.hidden, &self.tables.we);
        let vocab = self.vocab_size();
        let eps = self.config.label_smoothing;
        let uniform = T::of(eps / vocab as f64);
        let gold = T::of(1.0 - eps);
        let mut stats = LossStats {
            tokens: input.len(),
            ..Default::default()
        };
        for i in 0..logits.rows() {
            let y = target.get(i).copied().unwrap_or(EOS_ID) as usize;
            let row = logits.row_mut(i);
            softmax_in_place(row);
            let logp_y = row[y].ln().as_f64();
            let mean_logp = row.iter().map(|p| p.ln().as_f64().max(-1e30)).sum::<f64>() / vocab as f64;
            stats.nll -= logp_y;
            stats.loss -= (1.0 - eps) * logp_y + eps * mean_logp;
            for p in row.iter_mut() {
                *p -= uniform;
            }
            row[y] -= gold;
        }
        let dlogits = logits;

        // Output projection shares WE.
        matmul_tn_acc(&dlogits, &dec.hidden, &mut grad.tables.we);
        let dhidden = matmul(&dlogits, &self.tables.we);

        let mut dmemory = Matrix::zeros(memory.rows(), memory.cols());
        let mut dh = self.decoder_norm.backward(&dec.norm, &dhidden, &mut grad.decoder_norm);
        for (idx, layer) in self.decoder.iter().enumerate().rev() {
            dh = layer.backward(&dec.layers[idx], &memory, dh, &mut grad.decoder[idx], &mut dmemory);
        }
        dropout_backward(&mut dh, &dec.input_drop);
        let scale = self.tables.scale();
        for (i, &id) in input.iter().enumerate() {
            let g = grad.tables.we.row_mut(id as usize);
            for (gj, &d) in g.iter_mut().zip(dh.row(i)) {
                *gj += scale * d;
            }
        }

        let mut dx = self.encoder_norm.backward(&enc.norm, &dmemory, &mut grad.encoder_norm);
        for (idx, layer) in self.encoder.iter().enumerate().rev() {
            dx = layer.backward(&enc.layers[idx], dx, &mut grad.encoder[idx]);
        }
        dropout_backward(&mut dx, &enc.input_drop);
        self.tables.backward(source, &dx, &mut grad.tables);
        Ok(stats)
    }

    /// Summed loss without gradients and without dropout.
    pub fn loss(&self, source: &SourceLayout, target: &[u32]) -> Result<LossStats> {
        let x = self.embed_source(source)?;
        let mut input = vec![BOS_ID];
        input.extend_from_slice(target);
        let probs = self.forward(&x, &input)?;
        let vocab = self.vocab_size() as f64;
        let eps = self.config.label_smoothing;
        let mut stats = LossStats {
            tokens: input.len(),
            ..Default::default()
        };
        for i in 0..probs.rows() {
            let y = target.get(i).copied().unwrap_or(EOS_ID) as usize;
            let row = probs.row(i);
            let logp_y = row[y].ln().as_f64();
            let mean_logp = row.iter().map(|p| p.ln().as_f64().max(-1e30)).sum::<f64>() / vocab;
            stats.nll -= logp_y;
            stats.loss -= (1.0 - eps) * logp_y + eps * mean_logp;
        }
        Ok(stats)
    }
}

impl<T: Scalar> Params<T> for TransformerModel<T> {
    fn visit<'a>(&'a self, _prefix: &str, f: &mut dyn FnMut(&str, &'a [T])) {
        f("we", self.tables.we.data());
        f("dpe", self.tables.dpe.data());
        for (i, l) in self.encoder.iter().enumerate() {
            l.visit(&format!("encoder.{i}"), f);
        }
        self.encoder_norm.visit("encoder.norm", f);
        for (i, l) in self.decoder.iter().enumerate() {
            l.visit(&format!("decoder.{i}"), f);
        }
        self.decoder_norm.visit("decoder.norm", f);
    }

    fn visit_mut<'a>(&'a mut self, _prefix: &str, f: &mut dyn FnMut(&str, &'a mut [T])) {
        f("we", self.tables.we.data_mut());
        f("dpe", self.tables.dpe.data_mut());
        for (i, l) in self.encoder.iter_mut().enumerate() {
            l.visit_mut(&format!("encoder.{i}"), f);
        }
        self.encoder_norm.visit_mut("encoder.norm", f);
        for (i, l) in self.decoder.iter_mut().enumerate() {
            l.visit_mut(&format!("decoder.{i}"), f);
        }
        self.decoder_norm.visit_mut("decoder.norm", f);
    }
}
