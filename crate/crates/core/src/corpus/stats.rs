use std::fmt::Write as _;

use super::{Document, LabelScheme, Relation};

#[derive(Clone, Debug, PartialEq)]
pub struct LabelRow {
    pub label: Relation,
    pub count: usize,
    pub percent: f64,
}

impl LabelRow {
    /// Percentage rounded to one decimal, as printed in tables.
    pub fn percent_1dp(&self) -> f64 {
        (self.percent * 10.0).round() / 10.0
    }
}

/// Per-label pair counts and percentages.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelStats {
    pub rows: Vec<LabelRow>,
    /// Number of labeled pairs counted.
    pub total: usize,
    /// Denominator of the percentages; equals `total` unless a reference
    /// pair count was supplied.
    pub denominator: usize,
}

pub fn label_stats(docs: &[Document], scheme: &LabelScheme) -> LabelStats {
    LabelStats::compute(docs, scheme, None)
}

impl LabelStats {
    /// `reference_total` replaces the counted total as the percentage
    /// denominator, for corpora whose published pair count differs from the
    /// sum of their label counts.
    pub fn compute(docs: &[Document], scheme: &LabelScheme, reference_total: Option<usize>) -> Self {
        let mut counts = vec![0usize; scheme.len()];
        for pair in docs.iter().flat_map(|d| &d.pairs) {
            if let Some(i) = scheme.index(pair.label) {
                counts[i] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let denominator = reference_total.unwrap_or(total);
        let rows = scheme
            .labels
            .iter()
            .zip(counts)
            .map(|(&label, count)| LabelRow {
                label,
                count,
                percent: if denominator == 0 {
                    0.0
                } else {
                    100.0 * count as f64 / denominator as f64
                },
            })
            .collect();
        LabelStats {
            rows,
            total,
            denominator,
        }
    }

    pub fn row(&self, label: Relation) -> Option<&LabelRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<14}{:>8}{:>9}", "Label", "Count", "Percent");
        for r in &self.rows {
            let _ = writeln!(out, "{:<14}{:>8}{:>8.1}%", r.label.name(), r.count, r.percent);
        }
        let _ = writeln!(
            out,
            "{:<14}{:>8}  (denominator {})",
            "Total", self.total, self.denominator
        );
        out
    }

    /// One `label<TAB>count<TAB>percent` record per line.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{:.1}", r.label.name(), r.count, r.percent);
        }
        out
    }
}

/// Document-level counts in the style of a corpus statistics table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub documents: usize,
    pub sentences: usize,
    pub tokens: usize,
    pub events: usize,
    pub pairs: usize,
}

impl CorpusStats {
    pub fn compute(docs: &[Document]) -> Self {
        CorpusStats {
            documents: docs.len(),
            sentences: docs.iter().map(|d| d.sentences.len()).sum(),
            tokens: docs.iter().flat_map(|d| &d.sentences).map(Vec::len).sum(),
            events: docs.iter().map(|d| d.events.len()).sum(),
            pairs: docs.iter().map(|d| d.pairs.len()).sum(),
        }
    }

    pub fn to_records(&self) -> String {
        format!(
            "documents\t{}\nsentences\t{}\ntokens\t{}\nevents\t{}\npairs\t{}\n",
            self.documents, self.sentences, self.tokens, self.events, self.pairs
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EventMention, LabeledPair};

    fn doc_with(labels: &[Relation]) -> Document {
        let events = vec![
            EventMention {
                id: "a".into(),
                sentence: 0,
                first: 1,
                last: 1,
            },
            EventMention {
                id: "b".into(),
                sentence: 0,
                first: 1,
                last: 1,
            },
        ];
        Document {
            id: "x".into(),
            sentences: vec![],
            events,
            pairs: labels
                .iter()
                .map(|&label| LabeledPair {
                    source: 0,
                    target: 1,
                    label,
                })
                .collect(),
        }
    }

    #[test]
    fn empty_corpus_is_all_zero() {
        let s = label_stats(&[], &LabelScheme::tbdense());
        assert_eq!(s.total, 0);
        assert!(s.rows.iter().all(|r| r.count == 0 && r.percent == 0.0));
        assert_eq!(s.rows.len(), 6);
    }

    #[test]
    fn single_pair_is_one_hundred_percent() {
        let s = label_stats(&[doc_with(&[Relation::After])], &LabelScheme::matres());
        assert_eq!(s.row(Relation::After).unwrap().percent, 100.0);
        assert_eq!(s.row(Relation::Before).unwrap().count, 0);
    }

    #[test]
    fn percentages_sum_to_one_hundred() {
        use Relation::*;
        let s = label_stats(
            &[doc_with(&[Before, Before, After, Vague, Simultaneous, Before, After])],
            &LabelScheme::matres(),
        );
        let sum: f64 = s.rows.iter().map(|r| r.percent).sum();
        assert!((sum - 100.0).abs() < 0.1);
        assert!(s.to_table().contains("Before"));
        assert_eq!(s.to_records().lines().count(), 4);
    }
}
