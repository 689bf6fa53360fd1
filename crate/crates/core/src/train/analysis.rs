use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::metrics::{evaluate_relations, GoldPair, Prf, Setting};
use super::Result;
use crate::corpus::{LabelScheme, Relation};
use crate::graph::{SyntaxContext, Triple};
use crate::model::ForwardTrace;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConsistencyReport {
    /// Unordered pairs predicted in both directions with non-converse labels.
    pub symmetry: usize,
    /// Unordered event triples breaking the Before chain rule.
    pub transitivity: usize,
    /// Unordered triples where a chain through Simultaneous is not carried
    /// over. Informational.
    pub simultaneous_chain: usize,
}

/// Checks predictions `(source, target, label)` over one document's events.
/// A missing direction is read as the converse of the other.
pub fn consistency_report(predictions: &[(usize, usize, Relation)]) -> ConsistencyReport {
    let mut forward: BTreeMap<(usize, usize), Relation> = BTreeMap::new();
    for &(a, b, r) in predictions {
        forward.insert((a, b), r);
    }
    let rel = |x: usize, y: usize| {
        forward
            .get(&(x, y))
            .copied()
            .or_else(|| forward.get(&(y, x)).map(|r| r.converse()))
    };
    let mut report = ConsistencyReport::default();
    for (&(a, b), &r) in &forward {
        if a < b {
            if let Some(&back) = forward.get(&(b, a)) {
                if back != r.converse() {
                    report.symmetry += 1;
                }
            }
        }
    }
    let events: BTreeSet<usize> = forward.keys().flat_map(|&(a, b)| [a, b]).collect();
    let events: Vec<usize> = events.into_iter().collect();
    let mut neighbors: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(a, b) in forward.keys() {
        neighbors.entry(a).or_default().insert(b);
        neighbors.entry(b).or_default().insert(a);
    }
    for (i, &a) in events.iter().enumerate() {
        for (j, &b) in events.iter().enumerate().skip(i + 1) {
            if !neighbors[&a].contains(&b) {
                continue;
            }
            for &c in &events[j + 1..] {
                let tri = [a, b, c];
                let orders = [
                    (tri[0], tri[1], tri[2]),
                    (tri[0], tri[2], tri[1]),
                    (tri[1], tri[0], tri[2]),
                    (tri[1], tri[2], tri[0]),
                    (tri[2], tri[0], tri[1]),
                    (tri[2], tri[1], tri[0]),
                ];
                let mut chain = false;
                let mut simultaneous = false;
                for &(x, y, z) in &orders {
                    let (Some(xy), Some(yz), Some(xz)) = (rel(x, y), rel(y, z), rel(x, z)) else {
                        continue;
                    };
                    if xy == Relation::Before && yz == Relation::Before && xz != Relation::Before {
                        chain = true;
                    }
                    let implied = match (xy, yz) {
                        (Relation::Simultaneous, other) | (other, Relation::Simultaneous)
                            if other != Relation::Vague =>
                        {
                            Some(other)
                        }
                        _ => None,
                    };
                    if implied.is_some_and(|r| r != xz) {
                        simultaneous = true;
                    }
                }
                report.transitivity += chain as usize;
                report.simultaneous_chain += simultaneous as usize;
            }
        }
    }
    report
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WidthItem {
    pub key: (usize, usize, usize),
    pub width: usize,
    pub gold: Relation,
    pub predicted: Option<Relation>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WidthBucket {
    pub name: &'static str,
    pub count: usize,
    /// Absent for an empty bucket.
    pub relation: Option<Prf>,
}

const BUCKETS: [(&str, usize, usize); 3] = [("<10", 0, 9), ("10-20", 10, 20), (">20", 21, usize::MAX)];

/// Instance counts and micro P/R/F (gold Vague removed) per context width
/// bucket: fewer than 10 tokens, 10 to 20, more than 20.
pub fn context_width_report(items: &[WidthItem], scheme: &LabelScheme) -> Result<Vec<WidthBucket>> {
    let mut out = Vec::with_capacity(BUCKETS.len());
    for (name, lo, hi) in BUCKETS {
        let inside: Vec<&WidthItem> = items.iter().filter(|i| (lo..=hi).contains(&i.width)).collect();
        let relation = if inside.is_empty() {
            None
        } else {
            let gold: Vec<GoldPair> = inside
                .iter()
                .map(|i| GoldPair {
                    key: i.key,
                    label: i.gold,
                })
                .collect();
            let preds = inside.iter().filter_map(|i| i.predicted.map(|p| (i.key, p))).collect();
            Some(evaluate_relations(&gold, &preds, scheme, Setting::Joint)?.relation)
        };
        out.push(WidthBucket {
            name,
            count: inside.len(),
            relation,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// On the dependency path and touching one of the two event nodes.
    Both,
    /// On the dependency path only.
    PathOnly,
    /// A neighbor triple of a path node, off the path.
    NeighborOnly,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Both => "both",
            Provenance::PathOnly => "path-only",
            Provenance::NeighborOnly => "neighbor-only",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cue {
    pub triple: Triple,
    pub weight: f64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CueInstance {
    pub cues: Vec<Cue>,
    /// Set when fewer than `k` triples were available.
    pub truncated: bool,
    /// Sum of all head-averaged weights; 1 up to rounding.
    pub total_weight: f64,
}

fn provenance(ctx: &SyntaxContext, t: &Triple) -> Provenance {
    if !ctx.path.contains(t) {
        Provenance::NeighborOnly
    } else if [t.head, t.dep].iter().any(|&n| n == ctx.source || n == ctx.target) {
        Provenance::Both
    } else {
        Provenance::PathOnly
    }
}

/// Top-`k` syntax context triples by final-layer attention averaged over
/// heads. Ties keep the context order.
pub fn cue_report(trace: &ForwardTrace, ctx: &SyntaxContext, k: usize) -> CueInstance {
    let last = trace.layers.last().expect("at least one layer");
    let heads = last.syntax_weights.len() as f64;
    let mut avg = vec![0.0; trace.phi.len()];
    for w in &last.syntax_weights {
        for (a, x) in avg.iter_mut().zip(w) {
            *a += x / heads;
        }
    }
    let mut order: Vec<usize> = (0..avg.len()).collect();
    order.sort_by(|&a, &b| avg[b].total_cmp(&avg[a]).then(a.cmp(&b)));
    let cues = order
        .iter()
        .take(k)
        .map(|&i| Cue {
            triple: trace.phi[i],
            weight: avg[i],
            provenance: provenance(ctx, &trace.phi[i]),
        })
        .collect();
    CueInstance {
        cues,
        truncated: k > avg.len(),
        total_weight: avg.iter().sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SentenceGraph;
    use crate::model::LayerTrace;
    use Relation::*;

    #[test]
    fn ordered_chain_is_consistent() {
        assert_eq!(
            consistency_report(&[(0, 1, Before), (1, 2, Before), (0, 2, Before)]),
            ConsistencyReport::default()
        );
    }

    #[test]
    fn before_cycle_counts_once() {
        let r = consistency_report(&[(0, 1, Before), (1, 2, Before), (2, 0, Before)]);
        assert_eq!(r.transitivity, 1);
        assert_eq!(r.symmetry, 0);
    }

    #[test]
    fn vague_closure_is_inconsistent() {
        let r = consistency_report(&[(0, 1, Before), (1, 2, Before), (0, 2, Vague)]);
        assert_eq!(r.transitivity, 1);
    }

    #[test]
    fn symmetric_before_is_a_violation() {
        let r = consistency_report(&[(0, 1, Before), (1, 0, Before)]);
        assert_eq!(r.symmetry, 1);
        let ok = consistency_report(&[
            (0, 1, Before),
            (1, 0, After),
            (2, 3, Simultaneous),
            (3, 2, Simultaneous),
        ]);
        assert_eq!(ok.symmetry, 0);
    }

    #[test]
    fn simultaneous_chain_is_informational() {
        let r = consistency_report(&[(0, 1, Simultaneous), (1, 2, Before), (0, 2, Simultaneous)]);
        assert_eq!(r.simultaneous_chain, 1);
        assert_eq!(r.transitivity, 0);
    }

    fn item(i: usize, width: usize, gold: Relation, predicted: Option<Relation>) -> WidthItem {
        WidthItem {
            key: (0, i, i + 1),
            width,
            gold,
            predicted,
        }
    }

    #[test]
    fn width_buckets() {
        let items = [
            item(0, 5, Before, Some(Before)),
            item(1, 15, After, Some(Before)),
            item(2, 25, Before, None),
        ];
        let b = context_width_report(&items, &LabelScheme::matres()).unwrap();
        assert_eq!(b.iter().map(|x| x.count).collect::<Vec<_>>(), vec![1, 1, 1]);
        assert_eq!(b[0].relation.unwrap().f1, 1.0);
        assert_eq!(b[1].relation.unwrap().f1, 0.0);
        let edge = [
            item(0, 0, Before, Some(Before)),
            item(1, 10, Before, None),
            item(2, 20, After, None),
        ];
        let b = context_width_report(&edge, &LabelScheme::matres()).unwrap();
        assert_eq!(b.iter().map(|x| x.count).collect::<Vec<_>>(), vec![1, 2, 0]);
        assert!(b[2].relation.is_none());
    }

    #[test]
    fn cue_top_one_and_tags() {
        // 0 -> 1 -> 2, 1 -> 3
        let g = SentenceGraph::from_triples(
            4,
            vec![
                Triple {
                    head: 0,
                    rel: 1,
                    dep: 1,
                },
                Triple {
                    head: 1,
                    rel: 2,
                    dep: 2,
                },
                Triple {
                    head: 1,
                    rel: 3,
                    dep: 3,
                },
            ],
        )
        .unwrap();
        let ctx = g.syntax_context(0, 2).unwrap();
        assert_eq!(ctx.phi.len(), 3);
        let trace = ForwardTrace {
            layers: vec![LayerTrace {
                graph_weights: vec![],
                syntax_weights: vec![vec![0.2, 0.1, 0.7], vec![0.2, 0.5, 0.3]],
            }],
            phi: ctx.phi.clone(),
            layer_norms: 1,
        };
        let c = cue_report(&trace, &ctx, 1);
        assert_eq!(c.cues[0].triple, ctx.phi[2]);
        assert!((c.cues[0].weight - 0.5).abs() < 1e-15);
        assert_eq!(c.cues[0].provenance, Provenance::NeighborOnly);
        assert!((c.total_weight - 1.0).abs() < 1e-12);
        let all = cue_report(&trace, &ctx, 5);
        assert!(all.truncated);
        assert_eq!(all.cues.len(), 3);
        let tags: Vec<Provenance> = all.cues.iter().map(|c| c.provenance).collect();
        assert!(tags.contains(&Provenance::Both));
    }
}
