use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::dataset::{Dataset, PairInstance, SentenceInstance};
use super::metrics::{evaluate_events, evaluate_relations, EvalReport, EventKey, PairKey, Setting};
use super::{Result, TrainError};
use crate::corpus::Relation;
use crate::model::{event_scores, forward, loss_event, loss_relation, relation_scores, ForwardTrace, SgtModel};
use crate::tensor::{Adam, AdamConfig, Checkpoint, Gradients, ParamStore, Schedule, Tape, Var};

/// One grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RunSettings {
    pub lr: f64,
    pub batch_size: usize,
    pub layers: usize,
    pub heads: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Leading epochs that train event detection only.
    pub warmup_epochs: usize,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub layer_counts: Vec<usize>,
    pub head_counts: Vec<usize>,
    pub seed: u64,
    pub alpha: Option<[f64; 2]>,
    pub beta: Option<Vec<f64>>,
    pub clip_norm: Option<f64>,
    /// Linear learning-rate warmup over this fraction of all steps, then
    /// linear decay; constant rate when absent.
    pub lr_warmup_fraction: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            warmup_epochs: 5,
            learning_rates: vec![3e-6, 1e-5],
            batch_sizes: vec![16, 32],
            layer_counts: vec![4, 12],
            head_counts: vec![1, 8],
            seed: 0,
            alpha: None,
            beta: None,
            clip_norm: None,
            lr_warmup_fraction: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_epochs > self.epochs {
            return Err(TrainError::Config(format!(
                "warmup epochs {} exceed total epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.learning_rates.iter().any(|lr| !(*lr > 0.0)) {
            return Err(TrainError::Config("learning rates must be positive".into()));
        }
        if self.batch_sizes.contains(&0) || self.layer_counts.contains(&0) || self.head_counts.contains(&0) {
            return Err(TrainError::Config(
                "batch sizes, layer and head counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Event,
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub lr: f64,
    pub event_loss: f64,
    pub relation_loss: f64,
    pub dev_event_f: f64,
    pub dev_relation_f: f64,
    pub dev_accuracy: f64,
}

impl EpochRecord {
    pub fn to_line(&self) -> String {
        format!(
            "epoch {} phase {} lr {:.6e} event_loss {:.6} relation_loss {:.6} dev_event_f {:.6} dev_relation_f {:.6} dev_accuracy {:.6}",
            self.epoch,
            match self.phase {
                Phase::Event => "event",
                Phase::Joint => "joint",
            },
            self.lr,
            self.event_loss,
            self.relation_loss,
            self.dev_event_f,
            self.dev_relation_f,
            self.dev_accuracy
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best: Checkpoint,
}

impl TrainOutcome {
    pub fn log_text(&self) -> String {
        let mut out = String::new();
        for r in &self.log {
            let _ = writeln!(out, "{}", r.to_line());
        }
        let _ = writeln!(out, "best_epoch {}", self.best_epoch);
        out
    }

    pub fn log_records(&self) -> String {
        let mut out = String::new();
        for r in &self.log {
            let _ = writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"));
        }
        out
    }
}

pub(crate) fn sentence_scores(
    tape: &mut Tape,
    store: &ParamStore,
    model: &SgtModel,
    data: &Dataset,
    s: &SentenceInstance,
) -> Result<Var> {
    let doc = &data.docs[s.doc];
    let ctx = model
        .encoder
        .encode_window(tape, store, doc, &[s.sentence], &data.vocabs)?;
    Ok(event_scores(tape, store, &model.params, ctx)?)
}

pub(crate) fn pair_scores(
    tape: &mut Tape,
    store: &ParamStore,
    model: &SgtModel,
    data: &Dataset,
    p: &PairInstance,
) -> Result<(Var, ForwardTrace)> {
    let doc = &data.docs[p.doc];
    let ctx = model.encoder.encode_window(tape, store, doc, &p.window, &data.vocabs)?;
    let graph = &data.graphs[p.graph];
    let (out, trace) = forward(tape, store, &model.config, &model.params, ctx, graph, &p.context)?;
    let scores = relation_scores(tape, store, &model.params, out.last(), out.source, out.target)?;
    Ok((scores, trace))
}

/// `L_eve` over `sentences` plus, when `pairs` is nonempty, `L_rel` over
/// `pairs`, using the model's class weights. Returns the summed loss and the
/// two parts' values.
pub(crate) fn batch_loss(
    tape: &mut Tape,
    store: &ParamStore,
    model: &SgtModel,
    data: &Dataset,
    sentences: &[usize],
    pairs: &[usize],
) -> Result<(Var, f64, f64)> {
    let mut rows = Vec::with_capacity(sentences.len());
    let mut tags = Vec::new();
    for &s in sentences {
        let inst = &data.sentences[s];
        rows.push(sentence_scores(tape, store, model, data, inst)?);
        tags.extend_from_slice(&inst.gold);
    }
    let all = tape.concat_rows(&rows)?;
    let loss = loss_event(tape, all, &tags, &model.config.alpha)?;
    let ev = tape.value(loss).data()[0];
    if pairs.is_empty() {
        return Ok((loss, ev, 0.0));
    }
    let mut scores = Vec::with_capacity(pairs.len());
    let mut gold = Vec::with_capacity(pairs.len());
    for &p in pairs {
        let inst = &data.pairs[p];
        scores.push(pair_scores(tape, store, model, data, inst)?.0);
        gold.push(inst.gold);
    }
    let rel = loss_relation(tape, &scores, &gold, &model.config.beta)?;
    let rv = tape.value(rel).data()[0];
    Ok((tape.add(loss, rel)?, ev, rv))
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Relation probabilities and the attention trace for pair instance `index`.
pub fn predict_pair(model: &SgtModel, data: &Dataset, index: usize) -> Result<(Vec<f64>, ForwardTrace)> {
    let mut tape = Tape::new();
    let (scores, trace) = pair_scores(&mut tape, &model.store, model, data, &data.pairs[index])?;
    Ok((tape.value(scores).data().to_vec(), trace))
}

/// Detected event head tokens: maximal runs of tokens tagged as event, each
/// reduced to its head token.
pub fn detect_events(model: &SgtModel, data: &Dataset) -> Result<BTreeSet<EventKey>> {
    let mut found = BTreeSet::new();
    for s in &data.sentences {
        let mut tape = Tape::new();
        let scores = sentence_scores(&mut tape, &model.store, model, data, s)?;
        let probs = tape.value(scores);
        let tags: Vec<bool> = (0..probs.rows()).map(|i| probs.get(i, 1) > probs.get(i, 0)).collect();
        let mut i = 0;
        while i < tags.len() {
            if !tags[i] {
                i += 1;
                continue;
            }
            let start = i;
            while i < tags.len() && tags[i] {
                i += 1;
            }
            found.insert(data.span_head(s.doc, s.sentence, start + 1, i)?);
        }
    }
    Ok(found)
}

/// Event detection and relation scores on `data` in either setting.
pub fn evaluate_model(model: &SgtModel, data: &Dataset, setting: Setting) -> Result<EvalReport> {
    let detected = detect_events(model, data)?;
    let gold_events: BTreeSet<EventKey> = data.event_heads.iter().flatten().copied().collect();
    let event = evaluate_events(&detected, &gold_events);
    let mut predictions: BTreeMap<PairKey, Relation> = BTreeMap::new();
    let mut gold_heads: BTreeSet<(EventKey, EventKey)> = BTreeSet::new();
    for (i, p) in data.pairs.iter().enumerate() {
        let hs = data.event_heads[p.doc][p.source_event];
        let ht = data.event_heads[p.doc][p.target_event];
        gold_heads.insert((hs.min(ht), hs.max(ht)));
        if setting == Setting::Joint && !(detected.contains(&hs) && detected.contains(&ht)) {
            continue;
        }
        let (probs, _) = predict_pair(model, data, i)?;
        predictions.insert(p.key(), data.scheme.label(argmax(&probs)));
    }
    let mut report = evaluate_relations(&data.gold_pairs(), &predictions, &data.scheme, setting)?;
    report.event = Some(event);
    if setting == Setting::Joint {
        let found: Vec<EventKey> = detected.iter().copied().collect();
        for (i, a) in found.iter().enumerate() {
            for b in &found[i + 1..] {
                if b.0 == a.0 && b.1 - a.1 <= 1 && a != b && !gold_heads.contains(&(*a, *b)) {
                    report.extra_candidates += 1;
                }
            }
        }
    }
    Ok(report)
}

fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(size)
}

/// Two-phase training: event detection alone for the warmup epochs, then
/// event and relation losses together on gold pairs. Keeps the parameters
/// of the best dev epoch (relation F in the joint phase, event F when there
/// is none; later epochs win ties) and leaves them in `model`.
pub fn train(
    model: &mut SgtModel,
    train_data: &Dataset,
    dev: Option<&Dataset>,
    run: &RunSettings,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_data.sentences.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if config.epochs > config.warmup_epochs && train_data.pairs.is_empty() {
        return Err(TrainError::NoPairs);
    }
    if run.batch_size == 0 || !(run.lr > 0.0) {
        return Err(TrainError::Config(
            "batch size and learning rate must be positive".into(),
        ));
    }
    let dev = dev.unwrap_or(train_data);
    let steps = |n: usize| n.div_ceil(run.batch_size);
    let total_steps = config.warmup_epochs * steps(train_data.sentences.len())
        + (config.epochs - config.warmup_epochs) * steps(train_data.pairs.len());
    let schedule = match config.lr_warmup_fraction {
        Some(f) => Schedule::WarmupLinear {
            warmup_fraction: f,
            total_steps,
        },
        None => Schedule::Constant,
    };
    let mut adam = Adam::new(
        AdamConfig {
            lr: run.lr,
            schedule,
            clip_norm: config.clip_norm,
            ..AdamConfig::default()
        },
        &model.store,
    );
    let mut grads = Gradients::new(&model.store);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Checkpoint)> = None;
    let sentence_index: BTreeMap<(usize, usize), usize> = train_data
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| ((s.doc, s.sentence), i))
        .collect();

    for epoch in 0..config.epochs {
        let phase = if epoch < config.warmup_epochs {
            Phase::Event
        } else {
            Phase::Joint
        };
        let (mut event_total, mut relation_total) = (0.0, 0.0);
        let n = match phase {
            Phase::Event => train_data.sentences.len(),
            Phase::Joint => train_data.pairs.len(),
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for batch in batches(&order, run.batch_size) {
            let mut tape = Tape::new();
            let sentences: Vec<usize> = match phase {
                Phase::Event => batch.to_vec(),
                Phase::Joint => {
                    let set: BTreeSet<usize> = batch
                        .iter()
                        .flat_map(|&p| {
                            let pi = &train_data.pairs[p];
                            let sentence_index = &sentence_index;
                            pi.window.iter().map(move |&s| sentence_index[&(pi.doc, s)])
                        })
                        .collect();
                    set.into_iter().collect()
                }
            };
            let pairs: &[usize] = match phase {
                Phase::Event => &[],
                Phase::Joint => batch,
            };
            let (loss, ev, rel) = batch_loss(&mut tape, &model.store, model, train_data, &sentences, pairs)?;
            event_total += ev;
            relation_total += rel;
            grads.zero();
            tape.backward(loss, &mut grads)?;
            adam.step(&mut model.store, &grads)?;
        }
        let report = evaluate_model(model, dev, Setting::Gold)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            phase,
            lr: adam.current_lr(),
            event_loss: event_total,
            relation_loss: relation_total,
            dev_event_f: report.event.map_or(0.0, |e| e.f1),
            dev_relation_f: report.relation.f1,
            dev_accuracy: report.accuracy,
        };
        let has_joint = config.epochs > config.warmup_epochs;
        let score = match (phase, has_joint) {
            (Phase::Joint, _) => Some(record.dev_relation_f),
            (Phase::Event, false) => Some(record.dev_event_f),
            (Phase::Event, true) => None,
        };
        if let Some(score) = score {
            if best.as_ref().is_none_or(|(b, _, _)| score >= *b) {
                best = Some((score, epoch + 1, model.store.to_checkpoint()));
            }
        }
        log.push(record);
    }
    let (best_epoch, best) = match best {
        Some((_, e, c)) => (e, c),
        None => (0, model.store.to_checkpoint()),
    };
    model.store.load_checkpoint(&best)?;
    Ok(TrainOutcome { log, best_epoch, best })
}

fn sorted_f64(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn sorted_usize(xs: &[usize]) -> Vec<usize> {
    let mut v = xs.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Cartesian product of the candidate lists, each sorted ascending and
/// deduplicated, in learning rate, batch size, layers, heads order.
pub fn grid_cells(config: &TrainConfig) -> Result<Vec<RunSettings>> {
    config.validate()?;
    let mut cells = Vec::new();
    for &lr in &sorted_f64(&config.learning_rates) {
        for &batch_size in &sorted_usize(&config.batch_sizes) {
            for &layers in &sorted_usize(&config.layer_counts) {
                for &heads in &sorted_usize(&config.head_counts) {
                    cells.push(RunSettings {
                        lr,
                        batch_size,
                        layers,
                        heads,
                    });
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(TrainError::EmptyGrid);
    }
    Ok(cells)
}

/// Index of the highest score; the earliest wins ties. NaN never wins.
pub fn select_best(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub cells: Vec<(RunSettings, f64)>,
    pub best: usize,
}

impl GridResult {
    pub fn best_settings(&self) -> RunSettings {
        self.cells[self.best].0
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("cell\tlr\tbatch\tlayers\theads\tdev_relation_f\n");
        for (i, (c, f)) in self.cells.iter().enumerate() {
            let mark = if i == self.best { "\tbest" } else { "" };
            let _ = writeln!(
                out,
                "{i}\t{:e}\t{}\t{}\t{}\t{:.6}{mark}",
                c.lr, c.batch_size, c.layers, c.heads, f
            );
        }
        out
    }
}

/// Runs `evaluate` (dev relation F of one trained cell) over every cell.
pub fn grid_search<F>(config: &TrainConfig, mut evaluate: F) -> Result<GridResult>
where
    F: FnMut(usize, &RunSettings) -> Result<f64>,
{
    let cells = grid_cells(config)?;
    let mut scored = Vec::with_capacity(cells.len());
    for (i, c) in cells.into_iter().enumerate() {
        let f = evaluate(i, &c)?;
        scored.push((c, f));
    }
    let scores: Vec<f64> = scored.iter().map(|(_, f)| *f).collect();
    let best = select_best(&scores).ok_or(TrainError::EmptyGrid)?;
    Ok(GridResult { cells: scored, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_sixteen_ordered_cells() {
        let cells = grid_cells(&TrainConfig::default()).unwrap();
        assert_eq!(cells.len(), 16);
        assert_eq!(
            cells[0],
            RunSettings {
                lr: 3e-6,
                batch_size: 16,
                layers: 4,
                heads: 1
            }
        );
        assert_eq!(cells[1].heads, 8);
        assert_eq!(
            cells[15],
            RunSettings {
                lr: 1e-5,
                batch_size: 32,
                layers: 12,
                heads: 8
            }
        );
    }

    #[test]
    fn grid_is_order_invariant() {
        let mut shuffled = TrainConfig::default();
        shuffled.learning_rates = vec![1e-5, 3e-6, 1e-5];
        shuffled.head_counts = vec![8, 1];
        assert_eq!(
            grid_cells(&shuffled).unwrap(),
            grid_cells(&TrainConfig::default()).unwrap()
        );
    }

    #[test]
    fn best_prefers_earlier_ties() {
        assert_eq!(select_best(&[0.1, 0.5, 0.5, 0.2]), Some(1));
        assert_eq!(select_best(&[f64::NAN, 0.0]), Some(1));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn single_cell_grid() {
        let cfg = TrainConfig {
            learning_rates: vec![0.1],
            batch_sizes: vec![4],
            layer_counts: vec![1],
            head_counts: vec![2],
            ..TrainConfig::default()
        };
        let r = grid_search(&cfg, |_, _| Ok(0.25)).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.best, 0);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let cfg = TrainConfig {
            head_counts: vec![],
            ..TrainConfig::default()
        };
        assert!(matches!(grid_cells(&cfg), Err(TrainError::EmptyGrid)));
    }

    #[test]
    fn warmup_beyond_total_rejected() {
        let cfg = TrainConfig {
            warmup_epochs: 11,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
