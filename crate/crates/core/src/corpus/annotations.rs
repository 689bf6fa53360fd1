use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{read_file, CorpusError, Document, EventMention, LabelScheme, LabeledPair};

/// Outcome counters of attaching annotations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnnotationReport {
    pub events: usize,
    pub accepted_pairs: usize,
    /// Pairs whose events are neither in the same nor in adjacent sentences.
    pub dropped_pairs: usize,
}

/// Attaches events and labeled pairs from an annotation side file.
///
/// Line format (`#` starts a comment, sentence and token indices 1-based):
///
/// ```text
/// DOC <doc id>
/// EVENT <event id> <sentence> <first token> <last token>
/// PAIR <source event id> <target event id> <label>
/// ```
pub fn load_annotations(
    path: impl AsRef<Path>,
    docs: Vec<Document>,
    scheme: &LabelScheme,
) -> Result<(Vec<Document>, AnnotationReport), CorpusError> {
    parse_annotations(&read_file(path.as_ref())?, docs, scheme)
}

pub fn parse_annotations(
    text: &str,
    mut docs: Vec<Document>,
    scheme: &LabelScheme,
) -> Result<(Vec<Document>, AnnotationReport), CorpusError> {
    let by_id: HashMap<String, usize> = docs.iter().enumerate().map(|(i, d)| (d.id.clone(), i)).collect();
    let mut report = AnnotationReport::default();
    let mut current: Option<usize> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let malformed = |detail: String| CorpusError::Malformed { line: line_no, detail };
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| malformed(format!("{s:?} is not an index")))
        };
        match fields[0] {
            "DOC" if fields.len() == 2 => {
                let idx = *by_id.get(fields[1]).ok_or_else(|| CorpusError::Annotation {
                    doc: fields[1].to_string(),
                    detail: "no parsed document with this id".into(),
                })?;
                current = Some(idx);
            }
            "EVENT" if fields.len() == 5 => {
                let doc = &mut docs[current.ok_or_else(|| malformed("EVENT before any DOC".into()))?];
                let (sent, first, last) = (num(fields[2])?, num(fields[3])?, num(fields[4])?);
                let in_bounds = sent >= 1
                    && sent <= doc.sentences.len()
                    && first >= 1
                    && first <= last
                    && last <= doc.sentences[sent - 1].len();
                if !in_bounds {
                    return Err(CorpusError::Annotation {
                        doc: doc.id.clone(),
                        detail: format!(
                            "event {} span sentence {sent} tokens {first}..{last} is outside the document",
                            fields[1]
                        ),
                    });
                }
                if doc.event_index(fields[1]).is_some() {
                    return Err(CorpusError::Annotation {
                        doc: doc.id.clone(),
                        detail: format!("event {} defined twice", fields[1]),
                    });
                }
                doc.events.push(EventMention {
                    id: fields[1].to_string(),
                    sentence: sent - 1,
                    first,
                    last,
                });
                report.events += 1;
            }
            "PAIR" if fields.len() == 4 => {
                let doc = &mut docs[current.ok_or_else(|| malformed("PAIR before any DOC".into()))?];
                let label = scheme.parse_label(fields[3])?;
                let lookup = |eid: &str| {
                    doc.event_index(eid).ok_or_else(|| CorpusError::Annotation {
                        doc: doc.id.clone(),
                        detail: format!("pair references unknown event {eid}"),
                    })
                };
                let (source, target) = (lookup(fields[1])?, lookup(fields[2])?);
                if source == target {
                    return Err(CorpusError::Annotation {
                        doc: doc.id.clone(),
                        detail: format!("pair of event {} with itself", fields[1]),
                    });
                }
                let gap = doc.events[source].sentence.abs_diff(doc.events[target].sentence);
                if gap > 1 {
                    report.dropped_pairs += 1;
                    continue;
                }
                doc.pairs.push(LabeledPair { source, target, label });
                report.accepted_pairs += 1;
            }
            _ => return Err(malformed(format!("unrecognized record {line:?}"))),
        }
    }
    Ok((docs, report))
}

pub fn write_annotations(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        if doc.events.is_empty() && doc.pairs.is_empty() {
            continue;
        }
        let _ = writeln!(out, "DOC {}", doc.id);
        for e in &doc.events {
            let _ = writeln!(out, "EVENT {} {} {} {}", e.id, e.sentence + 1, e.first, e.last);
        }
        for p in &doc.pairs {
            let _ = writeln!(
                out,
                "PAIR {} {} {}",
                doc.events[p.source].id,
                doc.events[p.target].id,
                p.label.name().to_uppercase()
            );
        }
    }
    out
}
