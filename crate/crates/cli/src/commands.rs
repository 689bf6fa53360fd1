use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sgt_core::corpus::{
    generate_synthetic, load_annotations, load_conllu, write_annotations, write_conllu, CorpusStats, Document,
    LabelScheme, LabelStats, Relation, SynthConfig, Vocabularies,
};
use sgt_core::encoder::{load_precomputed, BackendKind, Encoder};
use sgt_core::model::{ModelConfig, SgtModel};
use sgt_core::tensor::{Checkpoint, GradCheckReport, ParamStore};
use sgt_core::train::{
    class_weights, consistency_report, context_width_report, cue_report, evaluate_model, gradient_check, grid_cells,
    predict_pair, select_best, train, ConsistencyReport, Dataset, EvalReport, Phase, RunSettings, Setting,
    TrainOutcome, WidthItem,
};

use crate::config::{RunConfig, Split};

/// Splits loaded and indexed with the training vocabulary.
pub struct Prepared {
    pub vocabs: Vocabularies,
    pub train: Dataset,
    pub dev: Option<Dataset>,
    pub eval: Dataset,
}

fn load_split(cfg: &RunConfig, split: Split) -> Result<Vec<Document>> {
    let paths = cfg
        .split(split)
        .with_context(|| format!("{} split is not configured", split.name()))?;
    let docs = load_conllu(&paths.conllu)?;
    let (docs, report) = load_annotations(&paths.annotations, docs, &cfg.scheme)?;
    log::info!(
        "{} split: {} documents, {} events, {} pairs ({} dropped outside the window)",
        split.name(),
        docs.len(),
        report.events,
        report.accepted_pairs,
        report.dropped_pairs
    );
    Ok(docs)
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let train_docs = load_split(cfg, Split::Train)?;
    let vocabs = Vocabularies::build(&train_docs);
    let build = |docs| Dataset::build(docs, &vocabs, &cfg.scheme);
    let dev = match cfg.dev_split {
        Some(_) => Some(build(load_split(cfg, Split::Dev)?)?),
        None => None,
    };
    let eval = match cfg.eval_split {
        Split::Train => None,
        s => Some(build(load_split(cfg, s)?)?),
    };
    let train = build(train_docs)?;
    let eval = eval.unwrap_or_else(|| train.clone());
    Ok(Prepared {
        vocabs,
        train,
        dev,
        eval,
    })
}

/// Fresh model for one grid cell. Class weights come from the training
/// split unless the configuration fixes them.
pub fn build_model(cfg: &RunConfig, prep: &Prepared, layers: usize, heads: usize, seed: u64) -> Result<SgtModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let encoder = match cfg.backend {
        BackendKind::Embedding => Encoder::with_embedding(&mut store, &prep.vocabs, cfg.d_tok, &mut rng)?,
        BackendKind::Precomputed => {
            let path = cfg.vectors.as_ref().expect("checked at config load");
            Encoder::with_vectors(load_precomputed(path)?, &prep.vocabs, cfg.d_tok)?
        }
    };
    let mut mc = ModelConfig::new(
        cfg.d,
        layers,
        heads,
        cfg.d_r,
        encoder.context_width(),
        prep.vocabs.deprel_count(),
        cfg.scheme.clone(),
    );
    let (alpha, beta) = class_weights(&prep.train);
    mc.alpha = cfg.train.alpha.unwrap_or(alpha);
    mc.beta = cfg.train.beta.clone().unwrap_or(beta);
    mc.init_scale = cfg.init_scale;
    mc.ln_eps = cfg.ln_eps;
    mc.validate()?;
    Ok(SgtModel::new(mc, encoder, store, &mut rng)?)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    ckpt.write(BufWriter::new(f))?;
    Ok(())
}

fn cell_score(outcome: &TrainOutcome) -> f64 {
    match outcome.best_epoch.checked_sub(1).map(|i| &outcome.log[i]) {
        Some(r) if r.phase == Phase::Joint => r.dev_relation_f,
        Some(r) => r.dev_event_f,
        None => f64::NAN,
    }
}

/// Files written by [`cmd_train`].
#[derive(Clone, Debug)]
pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub records: PathBuf,
    pub grid: PathBuf,
    pub best: RunSettings,
}

/// Trains every grid cell (cell `i` seeded with `seed + i`), keeps the cell
/// with the best dev score and writes its checkpoint.
pub fn cmd_train(config: &Path, jobs: usize) -> Result<TrainArtifacts> {
    let cfg = RunConfig::load(config)?;
    let prep = prepare(&cfg)?;
    let cells = grid_cells(&cfg.train)?;
    log::info!("{} grid cell(s), {} job(s)", cells.len(), jobs);
    let run_cell = |(i, cell): (usize, &RunSettings)| -> Result<TrainOutcome> {
        let seed = cfg.train.seed + i as u64;
        let mut model = build_model(&cfg, &prep, cell.layers, cell.heads, seed)?;
        let tc = sgt_core::train::TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let outcome = train(&mut model, &prep.train, prep.dev.as_ref(), cell, &tc)?;
        log::info!(
            "cell {i} done, best epoch {}, score {:.4}",
            outcome.best_epoch,
            cell_score(&outcome)
        );
        Ok(outcome)
    };
    let outcomes: Vec<TrainOutcome> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
        pool.install(|| cells.par_iter().enumerate().map(run_cell).collect::<Result<_>>())?
    } else {
        cells.iter().enumerate().map(run_cell).collect::<Result<_>>()?
    };
    let scores: Vec<f64> = outcomes.iter().map(cell_score).collect();
    let best = select_best(&scores).context("no grid cell produced a score")?;

    std::fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let mut log_text = String::new();
    let mut records = String::new();
    let mut grid = String::from("cell\tlr\tbatch\tlayers\theads\tbest_epoch\tscore\n");
    for (i, (cell, outcome)) in cells.iter().zip(&outcomes).enumerate() {
        let _ = writeln!(
            log_text,
            "cell {i} lr {:e} batch {} layers {} heads {}",
            cell.lr, cell.batch_size, cell.layers, cell.heads
        );
        log_text.push_str(&outcome.log_text());
        for line in outcome.log_records().lines() {
            let _ = writeln!(records, "{{\"cell\":{i},\"record\":{line}}}");
        }
        let mark = if i == best { "\tbest" } else { "" };
        let _ = writeln!(
            grid,
            "{i}\t{:e}\t{}\t{}\t{}\t{}\t{:.6}{mark}",
            cell.lr, cell.batch_size, cell.layers, cell.heads, outcome.best_epoch, scores[i]
        );
    }
    let _ = writeln!(log_text, "best_cell {best}");
    let artifacts = TrainArtifacts {
        checkpoint: cfg.output_file("checkpoint.json"),
        log: cfg.output_file("train.log"),
        records: cfg.output_file("train.jsonl"),
        grid: cfg.output_file("grid.tsv"),
        best: cells[best],
    };
    write_checkpoint(&artifacts.checkpoint, &outcomes[best].best)?;
    write_file(&artifacts.log, &log_text)?;
    write_file(&artifacts.records, &records)?;
    write_file(&artifacts.grid, &grid)?;
    log::info!("checkpoint written to {}", artifacts.checkpoint.display());
    Ok(artifacts)
}

/// Layer and head counts implied by the parameter names of a checkpoint.
pub fn checkpoint_shape(ckpt: &Checkpoint) -> Result<(usize, usize)> {
    let index_after = |name: &str, prefix: &str| -> Option<usize> {
        let rest = name.strip_prefix(prefix)?;
        rest[..rest.find('/')?].parse().ok()
    };
    let layers = ckpt
        .params
        .iter()
        .filter_map(|p| index_after(&p.name, "layer"))
        .max()
        .map(|l| l + 1);
    let heads = ckpt
        .params
        .iter()
        .filter_map(|p| index_after(&p.name, "layer0/head"))
        .max()
        .map(|m| m + 1);
    match (layers, heads) {
        (Some(l), Some(m)) => Ok((l, m)),
        _ => bail!("checkpoint holds no layer parameters"),
    }
}

pub fn load_model(cfg: &RunConfig, prep: &Prepared, checkpoint: &Path) -> Result<SgtModel> {
    let f = File::open(checkpoint).with_context(|| format!("opening checkpoint {}", checkpoint.display()))?;
    let ckpt = Checkpoint::read(std::io::BufReader::new(f))?;
    let (layers, heads) = checkpoint_shape(&ckpt)?;
    let mut model = build_model(cfg, prep, layers, heads, cfg.train.seed)?;
    model.store.load_checkpoint(&ckpt)?;
    Ok(model)
}

/// Evaluates a checkpoint on the configured evaluation split.
pub fn cmd_eval(config: &Path, checkpoint: &Path, setting: Setting) -> Result<(EvalReport, PathBuf)> {
    let cfg = RunConfig::load(config)?;
    let prep = prepare(&cfg)?;
    let model = load_model(&cfg, &prep, checkpoint)?;
    let report = evaluate_model(&model, &prep.eval, setting)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let out = cfg.output_file(&format!("eval-{}-{}.txt", cfg.eval_split.name(), setting.name()));
    write_file(&out, &report.to_table())?;
    write_file(&out.with_extension("json"), &format!("{}\n", report.to_record()))?;
    Ok((report, out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportKind {
    Stats,
    Consistency,
    Width,
    Cues,
}

impl ReportKind {
    pub fn name(self) -> &'static str {
        match self {
            ReportKind::Stats => "stats",
            ReportKind::Consistency => "consistency",
            ReportKind::Width => "width",
            ReportKind::Cues => "cues",
        }
    }
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

fn predicted_labels(model: &SgtModel, data: &Dataset) -> Result<Vec<Relation>> {
    (0..data.pairs.len())
        .map(|i| Ok(data.scheme.label(argmax(&predict_pair(model, data, i)?.0))))
        .collect()
}

fn node_form(data: &Dataset, doc: usize, graph: usize, node: usize) -> &str {
    let r = data.graphs[graph].node(node);
    &data.docs[doc].sentences[r.sentence][r.token - 1].form
}

/// Writes one analysis report on the evaluation split; returns its path.
pub fn cmd_analyze(config: &Path, checkpoint: Option<&Path>, kind: ReportKind) -> Result<PathBuf> {
    let cfg = RunConfig::load(config)?;
    let prep = prepare(&cfg)?;
    let data = &prep.eval;
    let mut text = String::new();
    let mut records = String::new();
    if kind == ReportKind::Stats {
        let labels = LabelStats::compute(&data.docs, &cfg.scheme, cfg.reference_total);
        text.push_str(&labels.to_table());
        text.push('\n');
        text.push_str(&CorpusStats::compute(&data.docs).to_records());
        records.push_str(&labels.to_records());
    } else {
        let checkpoint = checkpoint.with_context(|| format!("report {} needs --checkpoint", kind.name()))?;
        let model = load_model(&cfg, &prep, checkpoint)?;
        let labels = predicted_labels(&model, data)?;
        match kind {
            ReportKind::Stats => unreachable!(),
            ReportKind::Consistency => {
                let mut per_doc: BTreeMap<usize, Vec<(usize, usize, Relation)>> = BTreeMap::new();
                for (p, &l) in data.pairs.iter().zip(&labels) {
                    per_doc
                        .entry(p.doc)
                        .or_default()
                        .push((p.source_event, p.target_event, l));
                }
                let mut total = ConsistencyReport::default();
                let _ = writeln!(text, "doc\tsymmetry\ttransitivity\tsimultaneous_chain");
                for (doc, preds) in &per_doc {
                    let r = consistency_report(preds);
                    let _ = writeln!(
                        text,
                        "{}\t{}\t{}\t{}",
                        data.docs[*doc].id, r.symmetry, r.transitivity, r.simultaneous_chain
                    );
                    total.symmetry += r.symmetry;
                    total.transitivity += r.transitivity;
                    total.simultaneous_chain += r.simultaneous_chain;
                }
                let _ = writeln!(
                    text,
                    "total\t{}\t{}\t{}",
                    total.symmetry, total.transitivity, total.simultaneous_chain
                );
                let _ = writeln!(records, "{}", serde_json::to_string(&total)?);
            }
            ReportKind::Width => {
                let items: Vec<WidthItem> = data
                    .pairs
                    .iter()
                    .zip(&labels)
                    .map(|(p, &l)| WidthItem {
                        key: p.key(),
                        width: p.width(),
                        gold: p.label,
                        predicted: Some(l),
                    })
                    .collect();
                let buckets = context_width_report(&items, &cfg.scheme)?;
                let _ = writeln!(text, "bucket\tcount\tprecision\trecall\tf1");
                for b in &buckets {
                    match &b.relation {
                        Some(r) => {
                            let _ = writeln!(
                                text,
                                "{}\t{}\t{:.4}\t{:.4}\t{:.4}",
                                b.name, b.count, r.precision, r.recall, r.f1
                            );
                        }
                        None => {
                            let _ = writeln!(text, "{}\t0\t-\t-\t-", b.name);
                        }
                    }
                    let _ = writeln!(records, "{}", serde_json::to_string(b)?);
                }
            }
            ReportKind::Cues => {
                for (i, p) in data.pairs.iter().enumerate() {
                    let (_, trace) = predict_pair(&model, data, i)?;
                    let cues = cue_report(&trace, &p.context, cfg.top_k);
                    let doc = &data.docs[p.doc];
                    let _ = writeln!(
                        text,
                        "{}\t{}\t{}\tgold {}\tpredicted {}",
                        doc.id,
                        doc.events[p.source_event].id,
                        doc.events[p.target_event].id,
                        p.label.name(),
                        labels[i].name()
                    );
                    for c in &cues.cues {
                        let _ = writeln!(
                            text,
                            "\t{} -{}-> {}\t{:.4}\t{}",
                            node_form(data, p.doc, p.graph, c.triple.head),
                            prep.vocabs.deprel(c.triple.rel),
                            node_form(data, p.doc, p.graph, c.triple.dep),
                            c.weight,
                            c.provenance.name()
                        );
                    }
                    let _ = writeln!(
                        records,
                        "{{\"doc\":{},\"source\":{},\"target\":{},\"report\":{}}}",
                        serde_json::to_string(&doc.id)?,
                        serde_json::to_string(&doc.events[p.source_event].id)?,
                        serde_json::to_string(&doc.events[p.target_event].id)?,
                        serde_json::to_string(&cues)?
                    );
                }
            }
        }
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    let out = cfg.output_file(&format!("{}-{}.txt", kind.name(), cfg.eval_split.name()));
    write_file(&out, &text)?;
    let records_ext = if kind == ReportKind::Stats { "tsv" } else { "jsonl" };
    write_file(&out.with_extension(records_ext), &records)?;
    Ok(out)
}

/// Gradient check over one and two layers and heads.
pub fn cmd_gradcheck(size: usize, seed: u64) -> Result<Vec<(usize, usize, GradCheckReport)>> {
    let mut out = Vec::new();
    for layers in 1..=2 {
        for heads in 1..=2 {
            out.push((layers, heads, gradient_check(size, layers, heads, seed)?));
        }
    }
    Ok(out)
}

/// Settings written into the configuration that accompanies a synthetic
/// corpus. Small widths and a wide initializer so that a few epochs suffice.
pub const SYNTH_CONFIG: &str = "\
data.train.conllu = train.conllu
data.train.annotations = train.ann
data.scheme = {scheme}
encoder.backend = embedding
encoder.d_tok = 16
model.d = 16
model.d_r = 8
model.layers = 1
model.heads = 2
model.init_scale = 0.5
train.epochs = 10
train.warmup_epochs = 5
train.lr = 3e-3
train.batch_size = 8
seed = 0
output.dir = out
";

/// Writes `train.conllu`, `train.ann` and a ready-to-train `run.cfg` into `out`.
pub fn cmd_synth(out: &Path, seed: u64, windows: usize, scheme: &LabelScheme) -> Result<PathBuf> {
    if windows == 0 {
        bail!("synthetic corpus needs at least one window");
    }
    let mut sc = SynthConfig::new(scheme.clone());
    sc.windows = windows;
    let docs = generate_synthetic(&sc, seed);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_file(&out.join("train.conllu"), &write_conllu(&docs))?;
    write_file(&out.join("train.ann"), &write_annotations(&docs))?;
    let scheme_name = if *scheme == LabelScheme::tbdense() {
        "tbdense"
    } else {
        "matres"
    };
    let cfg = out.join("run.cfg");
    write_file(&cfg, &SYNTH_CONFIG.replace("{scheme}", scheme_name))?;
    Ok(cfg)
}
