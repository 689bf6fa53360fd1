use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgt_core::corpus::LabelScheme;
use sgt_core::graph::{SentenceGraph, Triple};
use sgt_core::model::{graph_self_attention, syntax_guided_attention, triple_rep, ModelConfig, ModelParams};
use sgt_core::tensor::{ParamStore, Tape, Tensor};

const RELS: usize = 5;

#[derive(Debug)]
struct Fixture {
    n: usize,
    d: usize,
    triples: Vec<Triple>,
    states: Vec<f64>,
    params: ModelParams,
    store: ParamStore,
}

fn fixture(n: usize, heads: usize, parents: &[usize], rels: &[usize], states: Vec<f64>, seed: u64) -> Fixture {
    let d = 2 * heads;
    let triples = (1..n)
        .map(|i| Triple {
            head: parents[i - 1] % i,
            rel: rels[i - 1],
            dep: i,
        })
        .collect();
    let mut cfg = ModelConfig::new(d, 1, heads, 3, 4, RELS, LabelScheme::matres());
    cfg.init_scale = 0.5;
    let mut store = ParamStore::new();
    let params = ModelParams::register(&mut store, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    Fixture {
        n,
        d,
        triples,
        states,
        params,
        store,
    }
}

fn strategy() -> impl Strategy<Value = Fixture> {
    (3usize..9, 1usize..3, any::<u64>()).prop_flat_map(|(n, heads, seed)| {
        (
            proptest::collection::vec(0usize..100, n - 1),
            proptest::collection::vec(0usize..RELS, n - 1),
            proptest::collection::vec(-2.0f64..2.0, n * 2 * heads),
        )
            .prop_map(move |(p, r, h)| fixture(n, heads, &p, &r, h, seed))
    })
}

fn graph_run(f: &Fixture, states: &[f64], triples: &[Triple]) -> (Tensor, Vec<Tensor>) {
    let mut tape = Tape::new();
    let h = tape.constant(Tensor::matrix(f.n, f.d, states.to_vec()).unwrap());
    let rel = tape.param(&f.store, f.params.relations);
    let (out, w) = graph_self_attention(&mut tape, &f.store, &f.params.layers[0], h, rel, triples).unwrap();
    (tape.value(out).clone(), w)
}

fn syntax_run(f: &Fixture, s: usize, t: usize, phi: &[Triple]) -> (Tensor, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let h = tape.constant(Tensor::matrix(f.n, f.d, f.states.clone()).unwrap());
    let rel = tape.param(&f.store, f.params.relations);
    let (out, w) = syntax_guided_attention(&mut tape, &f.store, &f.params.layers[0], h, rel, s, t, phi).unwrap();
    (tape.value(out).clone(), w)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn graph_rows_are_distributions_over_incident_triples(f in strategy()) {
        let (_, weights) = graph_run(&f, &f.states, &f.triples);
        let g = SentenceGraph::from_triples(f.n, f.triples.clone()).unwrap();
        for w in &weights {
            for i in 0..f.n {
                let row = w.row_slice(i);
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                let incident = g.incident_edges(i).unwrap();
                for (e, &x) in row.iter().enumerate() {
                    prop_assert!(x >= 0.0);
                    if !incident.contains(&e) {
                        prop_assert_eq!(x, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn graph_output_ignores_triple_order(f in strategy(), rot in 0usize..16) {
        let k = rot % f.triples.len();
        let mut rotated = f.triples.clone();
        rotated.rotate_left(k);
        let (a, wa) = graph_run(&f, &f.states, &f.triples);
        let (b, wb) = graph_run(&f, &f.states, &rotated);
        prop_assert!(max_diff(a.data(), b.data()) <= 1e-12);
        let e = f.triples.len();
        for (x, y) in wa.iter().zip(&wb) {
            for i in 0..f.n {
                for j in 0..e {
                    prop_assert!((x.get(i, (j + k) % e) - y.get(i, j)).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn graph_output_follows_node_relabeling(f in strategy()) {
        // reversal of node ids
        let p = |v: usize| f.n - 1 - v;
        let relabeled: Vec<Triple> = f.triples.iter().map(|t| Triple { head: p(t.head), rel: t.rel, dep: p(t.dep) }).collect();
        let mut states = vec![0.0; f.states.len()];
        for v in 0..f.n {
            states[p(v) * f.d..(p(v) + 1) * f.d].copy_from_slice(&f.states[v * f.d..(v + 1) * f.d]);
        }
        let (a, _) = graph_run(&f, &f.states, &f.triples);
        let (b, _) = graph_run(&f, &states, &relabeled);
        for v in 0..f.n {
            prop_assert!(max_diff(a.row_slice(v), b.row_slice(p(v))) <= 1e-12);
        }
    }

    #[test]
    fn syntax_weights_are_distributions_and_order_free(f in strategy(), rot in 0usize..16) {
        let g = SentenceGraph::from_triples(f.n, f.triples.clone()).unwrap();
        let (s, t) = (f.n - 1, 0);
        let ctx = g.syntax_context(s, t).unwrap();
        let (a, wa) = syntax_run(&f, s, t, &ctx.phi);
        for w in &wa {
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|x| *x >= 0.0));
        }
        let k = rot % ctx.phi.len();
        let mut rotated = ctx.phi.clone();
        rotated.rotate_left(k);
        let (b, wb) = syntax_run(&f, s, t, &rotated);
        prop_assert!(max_diff(a.data(), b.data()) <= 1e-12);
        let m = ctx.phi.len();
        for (x, y) in wa.iter().zip(&wb) {
            for j in 0..m {
                prop_assert!((x[(j + k) % m] - y[j]).abs() <= 1e-12);
            }
        }
    }
}

/// With one head and an identity output projection the pair representation
/// is a convex combination of the per-triple values.
#[test]
fn syntax_output_lies_in_value_hull() {
    let mut rng_seed = 0;
    for n in 3..9 {
        rng_seed += 1;
        let states = (0..n * 2).map(|i| ((i * 7919 % 13) as f64 - 6.0) / 3.0).collect();
        let parents: Vec<usize> = (0..n).map(|i| i * 31 + 7).collect();
        let rels: Vec<usize> = (0..n).map(|i| i % RELS).collect();
        let mut f = fixture(n, 1, &parents, &rels, states, rng_seed);
        let layer = f.params.layers[0].clone();
        *f.store.get_mut(layer.w_p) = Tensor::identity(f.d);
        let g = SentenceGraph::from_triples(n, f.triples.clone()).unwrap();
        let ctx = g.syntax_context(n - 1, 0).unwrap();
        let (out, w) = syntax_run(&f, n - 1, 0, &ctx.phi);

        let mut tape = Tape::new();
        let h = tape.constant(Tensor::matrix(n, f.d, f.states.clone()).unwrap());
        let rel = tape.param(&f.store, f.params.relations);
        let heads: Vec<usize> = ctx.phi.iter().map(|t| t.head).collect();
        let deps: Vec<usize> = ctx.phi.iter().map(|t| t.dep).collect();
        let ids: Vec<usize> = ctx.phi.iter().map(|t| t.rel).collect();
        let hh = tape.gather_rows(h, &heads).unwrap();
        let rr = tape.gather_rows(rel, &ids).unwrap();
        let hd = tape.gather_rows(h, &deps).unwrap();
        let w_r = tape.param(&f.store, layer.heads[0].syn_w_r);
        let b_r = tape.param(&f.store, layer.syn_b_r);
        let reps = triple_rep(&mut tape, hh, rr, hd, w_r, b_r).unwrap();
        let w_u = tape.param(&f.store, layer.heads[0].syn_w_u);
        let u = tape.matmul(reps, w_u).unwrap();
        let values = tape.value(u);
        for c in 0..f.d {
            let column: Vec<f64> = (0..ctx.phi.len()).map(|j| values.get(j, c)).collect();
            let expected: f64 = column.iter().zip(&w[0]).map(|(v, a)| v * a).sum();
            assert!((out.get(0, c) - expected).abs() < 1e-12);
            let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(out.get(0, c) >= lo - 1e-12 && out.get(0, c) <= hi + 1e-12);
        }
    }
}
