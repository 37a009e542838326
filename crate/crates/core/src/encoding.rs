//! Input vectors for attached sentences.
//!
//! A base token at 0-based index `i` with id `f` is encoded as
//! `√d·WE[f] + PE[i + 1]`. A definition token `d` at 1-based definition
//! position `q`, attached to the anchor `f` at index `i`, is encoded as
//! `√d·WE[f] + PE[i + 1] + √d·WE[d] + DPE[q]`. PE is the fixed sinusoid; WE and
//! DPE are learned. Position information lives entirely in the row vectors, so
//! the order of the appended definition rows is irrelevant to the encoder.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::attach::{AttachedSentence, MAX_DEFINITION_LEN};
use crate::model::Matrix;
use crate::textprep::Vocabulary;
use crate::{Error, Result, Scalar};

/// Sinusoid for 1-based position `p`, computed in `f64`.
pub fn sinusoid(p: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| {
            let pair = (j / 2) as f64;
            let angle = p as f64 / 10000f64.powf(2.0 * pair / dim as f64);
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Precomputed sinusoidal positions `PE[0..=max_len]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinusoidalTable<T> {
    table: Matrix<T>,
}

impl<T: Scalar> SinusoidalTable<T> {
    pub fn new(max_len: usize, dim: usize) -> Self {
        let rows: Vec<Vec<T>> = (0..=max_len)
            .map(|p| sinusoid(p, dim).into_iter().map(T::of).collect())
            .collect();
        SinusoidalTable {
            table: Matrix::from_rows(&rows),
        }
    }

    /// Largest position available.
    pub fn max_len(&self) -> usize {
        self.table.rows() - 1
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn get(&self, p: usize) -> Result<&[T]> {
        if p > self.max_len() {
            return Err(Error::Dimension(format!("position {p} exceeds maximum length {}", self.max_len())));
        }
        Ok(self.table.row(p))
    }
}

/// The learned input tables: word embeddings (shared with the decoder and the
/// output projection) and definition-position encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingTables<T> {
    /// `vocab × d`
    pub we: Matrix<T>,
    /// `MAX_DEFINITION_LEN × d`; row `q - 1` holds `DPE[q]`.
    pub dpe: Matrix<T>,
}

impl<T: Scalar> EncodingTables<T> {
    /// Both tables drawn from `U(-1/√d, 1/√d)`; scaled by `√d` they have unit-order entries.
    pub fn new<R: Rng>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid range");
        let mut draw = |rows: usize| {
            let data = (0..rows * dim).map(|_| T::of(dist.sample(rng))).collect();
            Matrix::from_vec(rows, dim, data)
        };
        let we = draw(vocab_size);
        let dpe = draw(MAX_DEFINITION_LEN);
        EncodingTables { we, dpe }
    }

    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        EncodingTables {
            we: Matrix::zeros(vocab_size, dim),
            dpe: Matrix::zeros(MAX_DEFINITION_LEN, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.we.cols()
    }

    pub fn scale(&self) -> T {
        T::of_usize(self.dim()).sqrt()
    }

    fn word(&self, id: u32) -> &[T] {
        let id = id as usize;
        if id < self.we.rows() {
            self.we.row(id)
        } else {
            self.we.row(crate::textprep::UNK_ID as usize)
        }
    }

    /// `√d·WE[f] + PE[p]`
    pub fn encode_base_token(&self, pe: &SinusoidalTable<T>, f: u32, p: usize) -> Result<Vec<T>> {
        let s = self.scale();
        Ok(self.word(f).iter().zip(pe.get(p)?).map(|(&w, &e)| s * w + e).collect())
    }

    /// `√d·WE[f] + PE[p] + √d·WE[d] + DPE[q]`, with `1 ≤ q ≤ 50`.
    pub fn encode_definition_token(&self, pe: &SinusoidalTable<T>, f: u32, p: usize, d: u32, q: usize) -> Result<Vec<T>> {
        if q == 0 || q > self.dpe.rows() {
            return Err(Error::InvalidArgument(format!("definition position {q} outside 1..={}", self.dpe.rows())));
        }
        let s = self.scale();
        let mut v = self.encode_base_token(pe, f, p)?;
        for ((x, &w), &dp) in v.iter_mut().zip(self.word(d)).zip(self.dpe.row(q - 1)) {
            *x += s * w + dp;
        }
        Ok(v)
    }

    /// Build the row vectors for a layout.
    pub fn embed(&self, pe: &SinusoidalTable<T>, layout: &SourceLayout) -> Result<Matrix<T>> {
        let mut m = Matrix::zeros(layout.rows.len(), self.dim());
        for (r, row) in layout.rows.iter().enumerate() {
            let v = match row.definition {
                None => self.encode_base_token(pe, row.word, row.position)?,
                Some((d, q)) => self.encode_definition_token(pe, row.word, row.position, d, q)?,
            };
            m.row_mut(r).copy_from_slice(&v);
        }
        Ok(m)
    }

    /// Scatter the gradient of the row vectors into `grad.we` and `grad.dpe`.
    pub fn backward(&self, layout: &SourceLayout, d_rows: &Matrix<T>, grad: &mut EncodingTables<T>) {
        let s = self.scale();
        for (r, row) in layout.rows.iter().enumerate() {
            let g = d_rows.row(r);
            add_scaled(grad.we.row_mut(row.word as usize), s, g);
            if let Some((d, q)) = row.definition {
                add_scaled(grad.we.row_mut(d as usize), s, g);
                add_scaled(grad.dpe.row_mut(q - 1), T::one(), g);
            }
        }
    }
}

fn add_scaled<T: Scalar>(dst: &mut [T], a: T, src: &[T]) {
    for (x, &g) in dst.iter_mut().zip(src) {
        *x += a * g;
    }
}

/// Where an encoder input row comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowSource {
    /// Base token at this 0-based index.
    Base(usize),
    /// Definition token `q` (1-based) attached to the base token at `anchor`.
    Definition { anchor: usize, q: usize },
}

/// Parameter-free description of one encoder input row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRow {
    pub source: RowSource,
    /// Token id (the anchor's id for definition rows).
    pub word: u32,
    /// 1-based sinusoidal position.
    pub position: usize,
    /// `(definition token id, q)` for definition rows.
    pub definition: Option<(u32, usize)>,
}

/// Ids and positions for a source sentence, independent of the learned tables.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceLayout {
    pub rows: Vec<InputRow>,
    pub base_len: usize,
}

impl SourceLayout {
    /// Base tokens in order, then definition tokens by anchor index and `q`.
    /// Definitions that would push the sequence past `max_len` are dropped
    /// from the end.
    pub fn from_attached(s: &AttachedSentence, vocab: &Vocabulary, max_len: usize) -> Result<Self> {
        s.validate()?;
        if s.tokens.len() > max_len {
            return Err(Error::Dimension(format!(
                "sentence of {} tokens exceeds maximum length {max_len}",
                s.tokens.len()
            )));
        }
        let mut rows: Vec<InputRow> = s
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| InputRow {
                source: RowSource::Base(i),
                word: vocab.id(t),
                position: i + 1,
                definition: None,
            })
            .collect();
        let mut attachments: Vec<_> = s.attachments.iter().collect();
        attachments.sort_by_key(|a| a.pos);
        let mut dropped = 0;
        for a in attachments {
            let anchor = vocab.id(&a.anchor);
            for (k, tok) in a.definition.iter().enumerate() {
                if rows.len() >= max_len {
                    dropped += 1;
                    continue;
                }
                rows.push(InputRow {
                    source: RowSource::Definition { anchor: a.pos, q: k + 1 },
                    word: anchor,
                    position: a.pos + 1,
                    definition: Some((vocab.id(tok), k + 1)),
                });
            }
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} definition tokens beyond maximum length {max_len}");
        }
        Ok(SourceLayout {
            rows,
            base_len: s.tokens.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn provenance(&self) -> Vec<RowSource> {
        self.rows.iter().map(|r| r.source).collect()
    }

    /// Reorder rows; `order[i]` is the old index of new row `i`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        SourceLayout {
            rows: order.iter().map(|&i| self.rows[i]).collect(),
            base_len: self.base_len,
        }
    }
}

/// An encoded source sentence: one input vector per row of the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence<T> {
    pub layout: SourceLayout,
    pub vectors: Matrix<T>,
}

impl<T: Scalar> EncodedSequence<T> {
    pub fn provenance(&self) -> Vec<RowSource> {
        self.layout.provenance()
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        EncodedSequence {
            layout: self.layout.permuted(order),
            vectors: self.vectors.select_rows(order),
        }
    }
}

/// Encode an attached sentence with the given tables.
pub fn encode_sentence<T: Scalar>(
    s: &AttachedSentence,
    vocab: &Vocabulary,
    tables: &EncodingTables<T>,
    pe: &SinusoidalTable<T>,
) -> Result<EncodedSequence<T>> {
    if vocab.len() != tables.we.rows() {
        return Err(Error::Dimension(format!(
            "vocabulary has {} types but the embedding table has {} rows",
            vocab.len(),
            tables.we.rows()
        )));
    }
    let layout = SourceLayout::from_attached(s, vocab, pe.max_len())?;
    let vectors = tables.embed(pe, &layout)?;
    Ok(EncodedSequence { layout, vectors })
}
