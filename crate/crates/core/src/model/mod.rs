//! The syntax-guided graph transformer: parameters, layer operations and
//! the event and relation heads.
//!
//! All weight matrices are stored `[in, out]` and applied to row vectors.

mod heads;
mod layers;

pub use heads::{event_scores, loss_event, loss_relation, relation_scores};
pub use layers::{
    forward, fuse, graph_self_attention, init_nodes, syntax_guided_attention, triple_rep, ForwardOutput, ForwardTrace,
    LayerTrace,
};

use rand::Rng;
use thiserror::Error;

use crate::corpus::LabelScheme;
use crate::encoder::{Encoder, EncoderError};
use crate::graph::{GraphError, Triple};
use crate::tensor::{ParamId, ParamStore, TensorError};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("pair ({0}, {0}) is not two distinct nodes")]
    SameNode(usize),
    #[error("pair ({0}, {1}) has no syntax context triples")]
    DegeneratePair(usize, usize),
    #[error("syntax context lists triple {0:?} more than once")]
    DuplicateTriple(Triple),
    #[error("single-node window cannot carry an event pair")]
    SingleNodeWindow,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Node state width.
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    /// Relation embedding width.
    pub d_r: usize,
    /// Context row width produced by the encoder.
    pub d_c: usize,
    /// Number of dependency relation ids, cross-sentence included.
    pub relation_count: usize,
    pub scheme: LabelScheme,
    /// Event-detection class weights (non-event, event); sum to 1.
    pub alpha: [f64; 2],
    /// Relation class weights aligned with `scheme.labels`.
    pub beta: Vec<f64>,
    pub ln_eps: f64,
    /// Half-width of the uniform initializer for weight matrices.
    pub init_scale: f64,
}

impl ModelConfig {
    pub fn new(
        d: usize,
        layers: usize,
        heads: usize,
        d_r: usize,
        d_c: usize,
        relation_count: usize,
        scheme: LabelScheme,
    ) -> Self {
        let k = scheme.len();
        ModelConfig {
            d,
            layers,
            heads,
            d_r,
            d_c,
            relation_count,
            scheme,
            alpha: [0.5, 0.5],
            beta: vec![1.0; k],
            ln_eps: 1e-5,
            init_scale: 0.02,
        }
    }

    pub fn head_width(&self) -> usize {
        self.d / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.d == 0 || self.d_r == 0 || self.d_c == 0 || self.layers == 0 || self.heads == 0 {
            return bad("widths, layer and head counts must be positive".into());
        }
        if !self.d.is_multiple_of(self.heads) {
            return bad(format!(
                "node width {} is not divisible by {} heads",
                self.d, self.heads
            ));
        }
        if (self.alpha[0] + self.alpha[1] - 1.0).abs() > 1e-9 || self.alpha.iter().any(|a| *a < 0.0) {
            return bad(format!(
                "event class weights {:?} must be nonnegative and sum to 1",
                self.alpha
            ));
        }
        if self.beta.len() != self.scheme.len() || self.beta.iter().any(|b| !(*b > 0.0)) {
            return bad(format!(
                "relation class weights {:?} must be {} positive values",
                self.beta,
                self.scheme.len()
            ));
        }
        if self.relation_count == 0 {
            return bad("relation vocabulary is empty".into());
        }
        if !(self.ln_eps > 0.0) {
            return bad("layer norm epsilon must be positive".into());
        }
        Ok(())
    }
}

/// Per-head projections of both attention mechanisms.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_u: ParamId,
    pub w_r: ParamId,
    pub b_r: ParamId,
    pub syn_w_q: ParamId,
    pub syn_w_k: ParamId,
    pub syn_w_u: ParamId,
    pub syn_w_r: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub heads: Vec<HeadParams>,
    /// Shared across heads of the syntax-guided attention.
    pub syn_b_r: ParamId,
    pub w_o: ParamId,
    pub w_p: ParamId,
    pub w_f: ParamId,
    pub w_t: ParamId,
    pub norm_gain: ParamId,
    pub norm_bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub w_e: ParamId,
    pub b_e: ParamId,
    /// Relation embedding table, shared by all layers and both attentions.
    pub relations: ParamId,
    pub layers: Vec<LayerParams>,
    pub w_eve: ParamId,
    pub b_eve: ParamId,
    pub w_z: ParamId,
    pub b_t: ParamId,
}

impl ModelParams {
    /// Registers every parameter: matrices uniform in `±init_scale`, biases
    /// zero, LayerNorm gains one.
    pub fn register<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let (d, dk, dr, dc) = (cfg.d, cfg.head_width(), cfg.d_r, cfg.d_c);
        let triple_in = 2 * d + dr;
        let s = cfg.init_scale;
        let k = cfg.scheme.len();
        let w_e = store.add_uniform("init/W_e", &[dc, d], s, rng)?;
        let b_e = store.add_filled("init/b_e", &[d], 0.0)?;
        let relations = store.add_uniform("relation_embeddings", &[cfg.relation_count, dr], s, rng)?;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let mut heads = Vec::with_capacity(cfg.heads);
            for m in 0..cfg.heads {
                let p = format!("layer{l}/head{m}");
                heads.push(HeadParams {
                    w_q: store.add_uniform(format!("{p}/graph/W_q"), &[d, dk], s, rng)?,
                    w_k: store.add_uniform(format!("{p}/graph/W_k"), &[d, dk], s, rng)?,
                    w_u: store.add_uniform(format!("{p}/graph/W_u"), &[d, dk], s, rng)?,
                    w_r: store.add_uniform(format!("{p}/graph/W_r"), &[triple_in, d], s, rng)?,
                    b_r: store.add_filled(format!("{p}/graph/b_r"), &[d], 0.0)?,
                    syn_w_q: store.add_uniform(format!("{p}/syntax/W_q"), &[2 * d, dk], s, rng)?,
                    syn_w_k: store.add_uniform(format!("{p}/syntax/W_k"), &[d, dk], s, rng)?,
                    syn_w_u: store.add_uniform(format!("{p}/syntax/W_u"), &[d, dk], s, rng)?,
                    syn_w_r: store.add_uniform(format!("{p}/syntax/W_r"), &[triple_in, d], s, rng)?,
                });
            }
            let p = format!("layer{l}");
            layers.push(LayerParams {
                heads,
                syn_b_r: store.add_filled(format!("{p}/syntax/b_r"), &[d], 0.0)?,
                w_o: store.add_uniform(format!("{p}/graph/W_o"), &[d, d], s, rng)?,
                w_p: store.add_uniform(format!("{p}/syntax/W_p"), &[d, d], s, rng)?,
                w_f: store.add_uniform(format!("{p}/fuse/W_f"), &[2 * d, d], s, rng)?,
                w_t: store.add_uniform(format!("{p}/W_t"), &[d, d], s, rng)?,
                norm_gain: store.add_filled(format!("{p}/norm/gain"), &[d], 1.0)?,
                norm_bias: store.add_filled(format!("{p}/norm/bias"), &[d], 0.0)?,
            });
        }
        Ok(ModelParams {
            w_e,
            b_e,
            relations,
            layers,
            w_eve: store.add_uniform("event/W_eve", &[dc, 2], s, rng)?,
            b_eve: store.add_filled("event/b_eve", &[2], 0.0)?,
            w_z: store.add_uniform("relation/W_z", &[2 * d, k], s, rng)?,
            b_t: store.add_filled("relation/b_t", &[k], 0.0)?,
        })
    }

    /// Parameters that only the relation path touches (everything but the
    /// event head and the encoder).
    pub fn relation_side(&self) -> Vec<ParamId> {
        let mut out = vec![self.w_e, self.b_e, self.relations, self.w_z, self.b_t];
        for l in &self.layers {
            out.extend([l.syn_b_r, l.w_o, l.w_p, l.w_f, l.w_t, l.norm_gain, l.norm_bias]);
            for h in &l.heads {
                out.extend([
                    h.w_q, h.w_k, h.w_u, h.w_r, h.b_r, h.syn_w_q, h.syn_w_k, h.syn_w_u, h.syn_w_r,
                ]);
            }
        }
        out
    }
}

/// Encoder, configuration, parameter layout and values together.
#[derive(Clone, Debug)]
pub struct SgtModel {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub params: ModelParams,
    pub store: ParamStore,
}

impl SgtModel {
    /// `store` already holds the encoder's parameters (if any).
    pub fn new<R: Rng>(config: ModelConfig, encoder: Encoder, mut store: ParamStore, rng: &mut R) -> Result<Self> {
        if config.d_c != encoder.context_width() {
            return Err(ModelError::Config(format!(
                "model expects context width {}, encoder produces {}",
                config.d_c,
                encoder.context_width()
            )));
        }
        let params = ModelParams::register(&mut store, &config, rng)?;
        Ok(SgtModel {
            config,
            encoder,
            params,
            store,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::new(6, 1, 4, 2, 5, 3, LabelScheme::matres());
        assert!(c.validate().is_err());
        c.heads = 3;
        assert!(c.validate().is_ok());
        c.alpha = [0.3, 0.6];
        assert!(c.validate().is_err());
        c.alpha = [0.3, 0.7];
        c.beta[1] = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn parameter_layout() {
        let cfg = ModelConfig::new(4, 2, 2, 3, 5, 7, LabelScheme::tbdense());
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ModelParams::register(&mut store, &cfg, &mut rng).unwrap();
        // 5 globals + per layer 7 + per head 9, plus 4 head weights
        assert_eq!(store.len(), 3 + 2 * (7 + 2 * 9) + 4);
        assert_eq!(store.get(p.layers[1].heads[1].w_r).shape(), &[11, 4]);
        assert_eq!(store.get(p.layers[0].heads[0].syn_w_q).shape(), &[8, 2]);
        assert_eq!(store.get(p.w_z).shape(), &[8, 6]);
        assert_eq!(store.get(p.relations).shape(), &[7, 3]);
        assert!(store.get(p.layers[0].norm_gain).data().iter().all(|g| *g == 1.0));
        assert!(store.get(p.b_e).data().iter().all(|b| *b == 0.0));
        assert!(store.get(p.w_e).data().iter().all(|w| w.abs() <= 0.02));
        assert!(store.id("layer1/head0/syntax/W_u").is_some());
    }
}
