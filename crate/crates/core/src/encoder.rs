//! Per-token context vectors: a backend vector (trainable embedding row or a
//! precomputed contextual vector) concatenated with the UPOS one-hot.
//!
//! Precomputed vectors are how externally produced contextual embeddings are
//! injected. Exporters are expected to emit one vector per word, using the
//! first subtoken's vector when a word splits into several subtokens.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::corpus::{Document, Vocabularies};
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("no precomputed vector for document {doc}, sentence {sentence}, token {token}")]
    MissingVector { doc: String, sentence: usize, token: usize },
    #[error("vector width {found} does not match configured width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("unknown UPOS tag {0:?}")]
    UnknownPos(String),
    #[error("vector file: {0}")]
    Format(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendKind {
    Embedding,
    Precomputed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub backend: BackendKind,
    pub d_tok: usize,
    pub pos_width: usize,
}

impl EncoderConfig {
    /// Width of each context row.
    pub fn context_width(&self) -> usize {
        self.d_tok + self.pos_width
    }
}

/// Vectors keyed by `(document id, 0-based sentence, 1-based token)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrecomputedVectors {
    width: usize,
    vectors: HashMap<(String, usize, usize), Vec<f64>>,
}

impl PrecomputedVectors {
    pub fn new(width: usize) -> Self {
        PrecomputedVectors {
            width,
            vectors: HashMap::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, doc: &str, sentence: usize, token: usize, v: Vec<f64>) -> Result<(), EncoderError> {
        if v.len() != self.width {
            return Err(EncoderError::WidthMismatch {
                expected: self.width,
                found: v.len(),
            });
        }
        self.vectors.insert((doc.to_string(), sentence, token), v);
        Ok(())
    }

    pub fn get(&self, doc: &str, sentence: usize, token: usize) -> Option<&[f64]> {
        self.vectors.get(&(doc.to_string(), sentence, token)).map(Vec::as_slice)
    }

    /// Header line `width count`, then `doc sent idx v1 ... v_width` per
    /// token with 1-based sentence and token indices.
    pub fn parse(text: &str) -> Result<Self, EncoderError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| EncoderError::Format("empty file".into()))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| EncoderError::Format(format!("bad header {header:?}")))
            })
            .collect::<Result<_, _>>()?;
        let [width, count] = nums[..] else {
            return Err(EncoderError::Format(format!("bad header {header:?}")));
        };
        let mut out = PrecomputedVectors::new(width);
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() < 3 {
                return Err(EncoderError::Format(format!("short record {line:?}")));
            }
            if f.len() - 3 != width {
                return Err(EncoderError::WidthMismatch {
                    expected: width,
                    found: f.len() - 3,
                });
            }
            let idx = |s: &str| {
                s.parse::<usize>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| EncoderError::Format(format!("bad index {s:?}")))
            };
            let (sent, tok) = (idx(f[1])?, idx(f[2])?);
            let v: Vec<f64> = f[3..]
                .iter()
                .map(|s| s.parse().map_err(|_| EncoderError::Format(format!("bad value {s:?}"))))
                .collect::<Result<_, _>>()?;
            out.insert(f[0], sent - 1, tok, v)?;
        }
        if out.len() != count {
            return Err(EncoderError::Format(format!(
                "header announces {count} vectors, found {}",
                out.len()
            )));
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut keys: Vec<&(String, usize, usize)> = self.vectors.keys().collect();
        keys.sort();
        let mut out = format!("{} {}\n", self.width, keys.len());
        for k in keys {
            let _ = write!(out, "{} {} {}", k.0, k.1 + 1, k.2);
            for v in &self.vectors[k] {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Reads a precomputed vector file.
pub fn load_precomputed(path: impl AsRef<Path>) -> Result<PrecomputedVectors, EncoderError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| EncoderError::Format(format!("{}: {e}", path.as_ref().display())))?;
    PrecomputedVectors::parse(&text)
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    embedding: Option<ParamId>,
    vectors: Option<PrecomputedVectors>,
}

impl Encoder {
    /// Trainable embedding table of `vocabs.token_count() x d_tok`; row 0 is
    /// the shared unknown-token row.
    pub fn with_embedding<R: Rng>(
        store: &mut ParamStore,
        vocabs: &Vocabularies,
        d_tok: usize,
        rng: &mut R,
    ) -> Result<Self, EncoderError> {
        let id = store.add_uniform("encoder/embedding", &[vocabs.token_count(), d_tok], 0.02, rng)?;
        Ok(Encoder {
            config: EncoderConfig {
                backend: BackendKind::Embedding,
                d_tok,
                pos_width: vocabs.upos_count(),
            },
            embedding: Some(id),
            vectors: None,
        })
    }

    pub fn with_vectors(
        vectors: PrecomputedVectors,
        vocabs: &Vocabularies,
        d_tok: usize,
    ) -> Result<Self, EncoderError> {
        if vectors.width() != d_tok {
            return Err(EncoderError::WidthMismatch {
                expected: d_tok,
                found: vectors.width(),
            });
        }
        Ok(Encoder {
            config: EncoderConfig {
                backend: BackendKind::Precomputed,
                d_tok,
                pos_width: vocabs.upos_count(),
            },
            embedding: None,
            vectors: Some(vectors),
        })
    }

    pub fn context_width(&self) -> usize {
        self.config.context_width()
    }

    pub fn embedding_param(&self) -> Option<ParamId> {
        self.embedding
    }

    /// One row per token of the window sentences, in surface order:
    /// backend vector followed by the UPOS one-hot (a constant block).
    pub fn encode_window(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        doc: &Document,
        window: &[usize],
        vocabs: &Vocabularies,
    ) -> Result<Var, EncoderError> {
        let tokens: Vec<(usize, &crate::corpus::Token)> = window
            .iter()
            .flat_map(|&s| doc.sentences[s].iter().map(move |t| (s, t)))
            .collect();
        let pw = self.config.pos_width;
        let mut onehot = vec![0.0; tokens.len() * pw];
        for (row, (_, tok)) in tokens.iter().enumerate() {
            let p = vocabs
                .upos_id(&tok.upos)
                .ok_or_else(|| EncoderError::UnknownPos(tok.upos.clone()))?;
            onehot[row * pw + p] = 1.0;
        }
        let pos = tape.constant(Tensor::matrix(tokens.len(), pw, onehot)?);
        let base = match (&self.embedding, &self.vectors) {
            (Some(id), _) => {
                let table = tape.param(store, *id);
                let ids: Vec<usize> = tokens.iter().map(|(_, t)| vocabs.token_id(&t.form)).collect();
                tape.gather_rows(table, &ids)?
            }
            (None, Some(vectors)) => {
                let mut data = Vec::with_capacity(tokens.len() * self.config.d_tok);
                for (s, t) in &tokens {
                    let v = vectors
                        .get(&doc.id, *s, t.index)
                        .ok_or_else(|| EncoderError::MissingVector {
                            doc: doc.id.clone(),
                            sentence: s + 1,
                            token: t.index,
                        })?;
                    data.extend_from_slice(v);
                }
                tape.constant(Tensor::matrix(tokens.len(), self.config.d_tok, data)?)
            }
            (None, None) => unreachable!("encoder always has a backend"),
        };
        Ok(tape.concat_cols(&[base, pos])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_conllu;
    use crate::tensor::Gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corpus() -> (Vec<Document>, Vocabularies) {
        let docs = parse_conllu(
            "# newdoc id = d\n1\tA\t_\tDET\t_\t_\t2\tdet\t_\t_\n2\tdog\t_\tNOUN\t_\t_\t3\tnsubj\t_\t_\n3\tran\t_\tVERB\t_\t_\t0\troot\t_\t_\n4\t.\t_\tPUNCT\t_\t_\t3\tpunct\t_\t_\n\n\
1\tIt\t_\tPRON\t_\t_\t2\tnsubj\t_\t_\n2\tstopped\t_\tVERB\t_\t_\t0\troot\t_\t_\n\n",
        )
        .unwrap();
        let v = Vocabularies::build(&docs);
        (docs, v)
    }

    #[test]
    fn one_hot_block_and_width() {
        let (docs, v) = corpus();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = Encoder::with_embedding(&mut store, &v, 8, &mut rng).unwrap();
        // DET NOUN PRON PUNCT VERB
        assert_eq!(enc.context_width(), 8 + 5);
        let mut tape = Tape::new();
        let c = enc.encode_window(&mut tape, &store, &docs[0], &[0], &v).unwrap();
        let t = tape.value(c);
        assert_eq!(t.shape(), &[4, 13]);
        // "ran" is VERB, id 4 of 5
        assert_eq!(&t.row_slice(2)[8..], &[0.0, 0.0, 0.0, 0.0, 1.0]);
        for r in 0..4 {
            let block = &t.row_slice(r)[8..];
            assert_eq!(block.iter().sum::<f64>(), 1.0);
            assert_eq!(block.iter().filter(|x| **x != 0.0).count(), 1);
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let (docs, v) = corpus();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc = Encoder::with_embedding(&mut store, &v, 4, &mut rng).unwrap();
        let run = || {
            let mut tape = Tape::new();
            let c = enc.encode_window(&mut tape, &store, &docs[0], &[0, 1], &v).unwrap();
            tape.value(c).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn gradient_reaches_only_window_rows() {
        let (docs, v) = corpus();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::with_embedding(&mut store, &v, 3, &mut rng).unwrap();
        let mut tape = Tape::new();
        let c = enc.encode_window(&mut tape, &store, &docs[0], &[1], &v).unwrap();
        let loss = tape.sum(c);
        let mut grads = Gradients::new(&store);
        tape.backward(loss, &mut grads).unwrap();
        let g = grads.get(enc.embedding_param().unwrap());
        for id in 0..v.token_count() {
            let touched = g.row_slice(id).iter().any(|x| *x != 0.0);
            let in_window = ["It", "stopped"].contains(&v.token(id));
            assert_eq!(touched, in_window, "{}", v.token(id));
        }
    }

    #[test]
    fn precomputed_vectors() {
        let (docs, v) = corpus();
        let mut pv = PrecomputedVectors::new(2);
        for (s, sent) in docs[0].sentences.iter().enumerate() {
            for t in sent {
                pv.insert("d", s, t.index, vec![s as f64 + 0.1, t.index as f64 / 3.0])
                    .unwrap();
            }
        }
        let back = PrecomputedVectors::parse(&pv.to_text()).unwrap();
        assert_eq!(back, pv);

        assert!(Encoder::with_vectors(pv.clone(), &v, 2).is_ok());
        assert_eq!(
            Encoder::with_vectors(PrecomputedVectors::new(16), &v, 8).unwrap_err(),
            EncoderError::WidthMismatch { expected: 8, found: 16 }
        );

        let mut partial = PrecomputedVectors::new(2);
        partial.insert("d", 0, 1, vec![0.0, 0.0]).unwrap();
        let enc = Encoder::with_vectors(partial, &v, 2).unwrap();
        let mut tape = Tape::new();
        let err = enc
            .encode_window(&mut tape, &ParamStore::new(), &docs[0], &[0], &v)
            .unwrap_err();
        assert_eq!(
            err,
            EncoderError::MissingVector {
                doc: "d".into(),
                sentence: 1,
                token: 2
            }
        );
    }

    #[test]
    fn vector_file_width_mismatch() {
        assert!(matches!(
            PrecomputedVectors::parse("2 1\nd 1 1 0.5 0.5 0.5\n"),
            Err(EncoderError::WidthMismatch { expected: 2, found: 3 })
        ));
    }
}
