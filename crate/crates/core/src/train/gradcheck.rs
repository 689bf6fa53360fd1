use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;
use super::runner::batch_loss;
use super::{Result, TrainError};
use crate::corpus::{Document, EventMention, LabelScheme, LabeledPair, Relation, Token, Vocabularies};
use crate::encoder::Encoder;
use crate::model::{ModelConfig, SgtModel};
use crate::tensor::{GradCheckReport, ParamStore, TensorError};

/// Finite-difference step and relative-error floor used by [`gradient_check`].
pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Two sentences over `tokens` tokens in total, one event in each, one
/// labeled pair between them.
pub fn gradcheck_document(tokens: usize) -> Result<Document> {
    if tokens < 2 {
        return Err(TrainError::Config(format!(
            "gradient fixture needs at least 2 tokens, got {tokens}"
        )));
    }
    let first = tokens / 2;
    let sizes = [first, tokens - first];
    let upos = ["VERB", "NOUN", "ADJ"];
    let deprels = ["nsubj", "obj", "amod"];
    let mut sentences = Vec::new();
    let mut w = 0;
    for &n in &sizes {
        let root = n.div_ceil(2);
        let sent: Vec<Token> = (1..=n)
            .map(|i| {
                w += 1;
                Token {
                    index: i,
                    form: format!("w{w}"),
                    upos: if i == root { "VERB".into() } else { upos[i % 3].into() },
                    head: if i == root {
                        0
                    } else if i < root {
                        i + 1
                    } else {
                        i - 1
                    },
                    deprel: if i == root {
                        "root".into()
                    } else {
                        deprels[i % 3].into()
                    },
                }
            })
            .collect();
        sentences.push(sent);
    }
    let events = vec![
        EventMention {
            id: "e1".into(),
            sentence: 0,
            first: 1,
            last: 1,
        },
        EventMention {
            id: "e2".into(),
            sentence: 1,
            first: sizes[1],
            last: sizes[1],
        },
    ];
    Ok(Document {
        id: "gradcheck".into(),
        sentences,
        events,
        pairs: vec![LabeledPair {
            source: 0,
            target: 1,
            label: Relation::Before,
        }],
    })
}

/// Compares backpropagated gradients of `L_eve + L_rel` with central
/// differences for every parameter of a model with `layers` layers and
/// `heads` heads on [`gradcheck_document`]. Weights are drawn from a wide
/// range so that no gradient group is vanishingly small.
pub fn gradient_check(tokens: usize, layers: usize, heads: usize, seed: u64) -> Result<GradCheckReport> {
    let doc = gradcheck_document(tokens)?;
    let scheme = LabelScheme::matres();
    let vocabs = Vocabularies::build(std::slice::from_ref(&doc));
    let data = Dataset::build(vec![doc], &vocabs, &scheme)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let encoder = Encoder::with_embedding(&mut store, &vocabs, 3, &mut rng)?;
    let emb = encoder.embedding_param().expect("embedding backend");
    for v in store.get_mut(emb).data_mut() {
        *v *= 25.0;
    }
    let mut config = ModelConfig::new(
        2 * heads,
        layers,
        heads,
        2,
        encoder.context_width(),
        vocabs.deprel_count(),
        scheme,
    );
    config.init_scale = 0.5;
    config.alpha = [0.3, 0.7];
    config.beta = vec![0.5, 1.5, 1.2, 0.8];
    let model = SgtModel::new(config, encoder, store, &mut rng)?;
    let sentences: Vec<usize> = (0..data.sentences.len()).collect();
    let pairs: Vec<usize> = (0..data.pairs.len()).collect();
    // surface data errors before the closures, which can only report tensor errors
    batch_loss(
        &mut crate::tensor::Tape::new(),
        &model.store,
        &model,
        &data,
        &sentences,
        &pairs,
    )?;
    let report = GradCheckReport::run(&model.store, GRADCHECK_STEP, GRADCHECK_FLOOR, |store, tape| {
        batch_loss(tape, store, &model, &data, &sentences, &pairs)
            .map(|(loss, _, _)| loss)
            .map_err(|e| TensorError::Invalid {
                op: "gradcheck",
                detail: e.to_string(),
            })
    })?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_two_valid_sentences() {
        for n in 2..=6 {
            let d = gradcheck_document(n).unwrap();
            assert_eq!(d.sentences.iter().map(Vec::len).sum::<usize>(), n);
            for s in &d.sentences {
                crate::corpus::validate_tree(s).unwrap();
            }
        }
        assert!(gradcheck_document(1).is_err());
    }

    #[test]
    fn minimal_fixture_passes() {
        let r = gradient_check(2, 1, 1, 0).unwrap();
        assert!(r.passes(1e-4), "{:?}", r.groups);
    }
}
