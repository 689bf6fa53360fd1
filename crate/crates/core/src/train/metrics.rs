use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::{Result, TrainError};
use crate::corpus::{LabelScheme, Relation};

/// `(document, source event, target event)`, event indices into the
/// document's event list.
pub type PairKey = (usize, usize, usize);

/// `(document, sentence, head token)` with a 1-based token index.
pub type EventKey = (usize, usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Events come from the detector.
    Joint,
    /// Gold event mentions are given.
    Gold,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Joint => "joint",
            Setting::Gold => "gold",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Prf {
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            correct,
            predicted,
            gold,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GoldPair {
    pub key: PairKey,
    pub label: Relation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub setting: Setting,
    pub event: Option<Prf>,
    pub relation: Prf,
    /// Exact-label accuracy over all gold pairs, Vague included.
    pub accuracy: f64,
    pub labels: Vec<String>,
    /// Rows: gold label; columns: predicted label, then "none" for pairs
    /// without a prediction. Gold-Vague rows are empty after removal.
    pub confusion: Vec<Vec<usize>>,
    pub evaluated: usize,
    pub removed_vague: usize,
    pub unpredicted: usize,
    /// Joint-setting candidate pairs with no gold annotation.
    pub extra_candidates: usize,
}

/// Micro P/R/F with gold-Vague pairs removed. Predicted Vague counts as no
/// relation: it lowers recall but is not in the precision denominator. A gold
/// pair absent from `predictions` is an error in the gold setting and
/// unpredicted in the joint setting.
pub fn evaluate_relations(
    gold: &[GoldPair],
    predictions: &BTreeMap<PairKey, Relation>,
    scheme: &LabelScheme,
    setting: Setting,
) -> Result<EvalReport> {
    let known: BTreeSet<PairKey> = gold.iter().map(|g| g.key).collect();
    if let Some(k) = predictions.keys().find(|k| !known.contains(k)) {
        return Err(TrainError::UnknownPair(*k));
    }
    let k = scheme.len();
    let idx = |r: Relation| {
        scheme
            .index(r)
            .ok_or_else(|| TrainError::LabelOutsideScheme(r.name().to_string()))
    };
    let mut confusion = vec![vec![0usize; k + 1]; k];
    let (mut exact, mut removed, mut unpredicted) = (0, 0, 0);
    for g in gold {
        let gi = idx(g.label)?;
        let pred = match predictions.get(&g.key) {
            Some(&p) => Some(idx(p)?),
            None if setting == Setting::Gold => return Err(TrainError::MissingPrediction(g.key)),
            None => None,
        };
        if pred == Some(gi) {
            exact += 1;
        }
        if gi == scheme.vague {
            removed += 1;
            continue;
        }
        match pred {
            Some(p) => confusion[gi][p] += 1,
            None => {
                unpredicted += 1;
                confusion[gi][k] += 1;
            }
        }
    }
    let relation = prf_from_confusion(&confusion, scheme.vague);
    Ok(EvalReport {
        setting,
        event: None,
        relation,
        accuracy: if gold.is_empty() {
            0.0
        } else {
            exact as f64 / gold.len() as f64
        },
        labels: scheme.labels.iter().map(|l| l.name().to_string()).collect(),
        confusion,
        evaluated: gold.len() - removed,
        removed_vague: removed,
        unpredicted,
        extra_candidates: 0,
    })
}

/// Micro P/R/F recomputed from a confusion matrix laid out as in
/// [`EvalReport::confusion`].
pub fn prf_from_confusion(confusion: &[Vec<usize>], vague: usize) -> Prf {
    let k = confusion.len();
    let correct = (0..k).filter(|&i| i != vague).map(|i| confusion[i][i]).sum();
    let predicted = (0..k)
        .filter(|&j| j != vague)
        .map(|j| confusion.iter().map(|row| row[j]).sum::<usize>())
        .sum();
    let gold = confusion.iter().flatten().sum();
    Prf::from_counts(correct, predicted, gold)
}

/// Micro P/R/F over event head tokens.
pub fn evaluate_events(predicted: &BTreeSet<EventKey>, gold: &BTreeSet<EventKey>) -> Prf {
    Prf::from_counts(predicted.intersection(gold).count(), predicted.len(), gold.len())
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "setting {}", self.setting.name());
        if let Some(e) = &self.event {
            let _ = writeln!(
                out,
                "event     P {:.4}  R {:.4}  F {:.4}  ({} correct / {} predicted / {} gold)",
                e.precision, e.recall, e.f1, e.correct, e.predicted, e.gold
            );
        }
        let r = &self.relation;
        let _ = writeln!(
            out,
            "relation  P {:.4}  R {:.4}  F {:.4}  ({} correct / {} predicted / {} gold)",
            r.precision, r.recall, r.f1, r.correct, r.predicted, r.gold
        );
        let _ = writeln!(out, "accuracy  {:.4}", self.accuracy);
        let _ = writeln!(
            out,
            "pairs: {} evaluated, {} gold Vague removed, {} unpredicted, {} extra candidates",
            self.evaluated, self.removed_vague, self.unpredicted, self.extra_candidates
        );
        let _ = write!(out, "{:<14}", "gold\\pred");
        for l in &self.labels {
            let _ = write!(out, "{:>14}", l);
        }
        let _ = writeln!(out, "{:>14}", "none");
        for (l, row) in self.labels.iter().zip(&self.confusion) {
            let _ = write!(out, "{:<14}", l);
            for c in row {
                let _ = write!(out, "{:>14}", c);
            }
            let _ = writeln!(out);
        }
        out
    }

    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}
