use std::fmt::Write as _;
use std::path::Path;

use super::{read_file, validate_tree, CorpusError, Document, Sentence, Token};

/// Reads a CoNLL-U file. Only ID, FORM, UPOS, HEAD and DEPREL are kept;
/// `# newdoc` comments start a new document (`# newdoc id = X` names it).
pub fn load_conllu(path: impl AsRef<Path>) -> Result<Vec<Document>, CorpusError> {
    parse_conllu(&read_file(path.as_ref())?)
}

pub fn parse_conllu(text: &str) -> Result<Vec<Document>, CorpusError> {
    let mut docs: Vec<Document> = Vec::new();
    let mut current: Sentence = Vec::new();

    fn flush(docs: &mut Vec<Document>, current: &mut Sentence) -> Result<(), CorpusError> {
        if current.is_empty() {
            return Ok(());
        }
        if docs.is_empty() {
            docs.push(Document {
                id: "doc0".into(),
                ..Document::default()
            });
        }
        let doc = docs.last_mut().expect("pushed above");
        validate_tree(current).map_err(|detail| CorpusError::InvalidTree {
            doc: doc.id.clone(),
            sentence: doc.sentences.len() + 1,
            detail,
        })?;
        doc.sentences.push(std::mem::take(current));
        Ok(())
    }

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut docs, &mut current)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(rest) = comment.strip_prefix("newdoc") {
                flush(&mut docs, &mut current)?;
                let id = rest
                    .trim()
                    .strip_prefix("id")
                    .and_then(|r| r.trim().strip_prefix('='))
                    .map(|r| r.trim().to_string())
                    .filter(|r| !r.is_empty())
                    .unwrap_or_else(|| format!("doc{}", docs.len()));
                docs.push(Document {
                    id,
                    ..Document::default()
                });
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(CorpusError::ColumnCount {
                line: line_no,
                found: cols.len(),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            return Err(CorpusError::UnsupportedId {
                line: line_no,
                id: cols[0].to_string(),
            });
        }
        let parse_num = |s: &str, what: &str| {
            s.parse::<usize>().map_err(|_| CorpusError::Malformed {
                line: line_no,
                detail: format!("{what} {s:?} is not a non-negative integer"),
            })
        };
        let index = parse_num(cols[0], "ID")?;
        let head = parse_num(cols[6], "HEAD")?;
        current.push(Token {
            index,
            form: cols[1].to_string(),
            upos: cols[3].to_string(),
            head,
            deprel: cols[7].to_string(),
        });
    }
    flush(&mut docs, &mut current)?;
    docs.retain(|d| !d.sentences.is_empty());
    Ok(docs)
}

/// Writes documents back as CoNLL-U; unused columns are `_`.
pub fn write_conllu(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        let _ = writeln!(out, "# newdoc id = {}", doc.id);
        for sent in &doc.sentences {
            for t in sent {
                let _ = writeln!(
                    out,
                    "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
                    t.index, t.form, t.upos, t.head, t.deprel
                );
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "# newdoc id = d1\n\
# text = Dogs bark loudly .\n\
1\tDogs\tdog\tNOUN\t_\t_\t2\tnsubj\t_\t_\n\
2\tbark\tbark\tVERB\t_\t_\t0\troot\t_\t_\n\
3\tloudly\tloudly\tADV\t_\t_\t2\tadvmod\t_\t_\n\
4\t.\t.\tPUNCT\t_\t_\t2\tpunct\t_\t_\n\
\n\
1\tThey\tthey\tPRON\t_\t_\t2\tnsubj\t_\t_\n\
2\tslept\tsleep\tVERB\t_\t_\t0\troot\t_\t_\n\
\n";

    #[test]
    fn minimal_tree() {
        let text = "1\tdogs\t_\tNOUN\t_\t_\t2\tnsubj\t_\t_\n2\tbark\t_\tVERB\t_\t_\t0\troot\t_\t_\n";
        let docs = parse_conllu(text).unwrap();
        assert_eq!(docs.len(), 1);
        let heads: Vec<usize> = docs[0].sentences[0].iter().map(|t| t.head).collect();
        assert_eq!(heads, vec![2, 0]);
    }

    #[test]
    fn self_loop_rejected() {
        let text = "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n3\tc\t_\tX\t_\t_\t3\tdep\t_\t_\n";
        let err = parse_conllu(text).unwrap_err();
        assert!(matches!(err, CorpusError::InvalidTree { sentence: 1, .. }), "{err}");
    }

    #[test]
    fn multiple_roots_rejected() {
        let text = "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\tX\t_\t_\t0\troot\t_\t_\n";
        assert!(parse_conllu(text).unwrap_err().to_string().contains("one root"));
    }

    #[test]
    fn column_count_and_multiword_rejected() {
        assert_eq!(
            parse_conllu("1\ta\t_\tX\t0\troot\n").unwrap_err(),
            CorpusError::ColumnCount { line: 1, found: 6 }
        );
        let mw = "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n";
        assert!(matches!(parse_conllu(mw), Err(CorpusError::UnsupportedId { .. })));
        let empty = "1.1\tx\t_\tX\t_\t_\t_\t_\t_\t_\n";
        assert!(matches!(parse_conllu(empty), Err(CorpusError::UnsupportedId { .. })));
    }

    #[test]
    fn fixture_with_two_sentences() {
        let docs = parse_conllu(FIXTURE).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].id, "d1");
        assert_eq!(docs[0].sentences.len(), 2);
        assert_eq!(docs[0].sentences[0][3].deprel, "punct");
        assert_eq!(docs[0].sentences[1][1].form, "slept");
    }

    #[test]
    fn newdoc_splits_documents_and_round_trips() {
        let text = format!("{FIXTURE}# newdoc id = d2\n1\tGo\t_\tVERB\t_\t_\t0\troot\t_\t_\n\n");
        let docs = parse_conllu(&text).unwrap();
        assert_eq!(docs.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["d1", "d2"]);
        assert_eq!(parse_conllu(&write_conllu(&docs)).unwrap(), docs);
    }
}
