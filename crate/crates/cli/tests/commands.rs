use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use sgt_cli::{cmd_analyze, cmd_eval, cmd_gradcheck, cmd_synth, cmd_train, run, ReportKind};
use sgt_core::corpus::LabelScheme;
use sgt_core::train::Setting;

/// Small synthetic corpus with a short schedule.
fn quick_corpus(dir: &Path, seed: u64) -> PathBuf {
    let cfg = cmd_synth(dir, seed, 60, &LabelScheme::matres()).unwrap();
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("train.epochs = 10", "train.epochs = 4")
        .replace("train.warmup_epochs = 5", "train.warmup_epochs = 2");
    std::fs::write(&cfg, text).unwrap();
    cfg
}

fn arg(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn synth_seed_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let read = |sub: &str, seed| {
        let out = dir.path().join(sub);
        cmd_synth(&out, seed, 20, &LabelScheme::matres()).unwrap();
        std::fs::read_to_string(out.join("train.conllu")).unwrap()
    };
    assert_eq!(read("a", 4), read("b", 4));
    assert_ne!(read("a", 4), read("c", 5));
}

#[test]
fn train_eval_analyze_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_corpus(dir.path(), 2);
    let artifacts = cmd_train(&cfg, 1).unwrap();
    assert!(artifacts.checkpoint.starts_with(dir.path().join("out")));
    let log = std::fs::read_to_string(&artifacts.log).unwrap();
    assert_eq!(log.lines().filter(|l| l.starts_with("epoch ")).count(), 4);

    let (gold, _) = cmd_eval(&cfg, &artifacts.checkpoint, Setting::Gold).unwrap();
    let (joint, path) = cmd_eval(&cfg, &artifacts.checkpoint, Setting::Joint).unwrap();
    assert!(path.starts_with(dir.path().join("out")));
    assert!(joint.relation.f1 <= gold.relation.f1 + 1e-12);

    let width = cmd_analyze(&cfg, Some(&artifacts.checkpoint), ReportKind::Width).unwrap();
    let text = std::fs::read_to_string(width).unwrap();
    let buckets: Vec<&str> = text.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(buckets, ["<10", "10-20", ">20"]);
    for kind in [ReportKind::Consistency, ReportKind::Cues] {
        let p = cmd_analyze(&cfg, Some(&artifacts.checkpoint), kind).unwrap();
        assert!(p.starts_with(dir.path().join("out")));
    }
    assert!(cmd_analyze(&cfg, None, ReportKind::Cues).is_err());
    assert!(cmd_eval(&cfg, &dir.path().join("missing.json"), Setting::Gold).is_err());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_corpus(dir.path(), 1);
    let missing = arg(&dir.path().join("missing.json"));
    assert_eq!(
        run(["sgt", "eval", "--config", &arg(&cfg), "--checkpoint", &missing]),
        2
    );
    assert_eq!(run(["sgt", "analyze", "--config", &arg(&cfg), "--report", "bogus"]), 1);
    assert_eq!(run(["sgt", "analyze", "--config", &arg(&cfg), "--report", "stats"]), 0);
    let broken = dir.path().join("broken.cfg");
    std::fs::write(
        &broken,
        "data.train.conllu = nowhere.conllu\ndata.train.annotations = train.ann\noutput.dir = out\n",
    )
    .unwrap();
    assert_eq!(run(["sgt", "train", "--config", &arg(&broken)]), 2);
}

#[test]
fn minimal_gradcheck_is_fast() {
    let start = Instant::now();
    for (_, _, report) in cmd_gradcheck(2, 0).unwrap() {
        assert!(report.passes(1e-4), "{:?}", report.groups);
    }
    assert!(start.elapsed() < Duration::from_secs(10));
}

/// One two-token document per labeled pair.
fn write_label_corpus(dir: &Path, rows: &[(&str, usize)]) {
    let (mut conllu, mut ann) = (String::new(), String::new());
    let mut k = 0;
    for &(label, count) in rows {
        for _ in 0..count {
            let _ = writeln!(conllu, "# newdoc id = d{k}\n1\tx\tx\tVERB\t_\t_\t0\troot\t_\t_");
            let _ = writeln!(conllu, "2\ty\ty\tVERB\t_\t_\t1\tobj\t_\t_\n");
            let _ = writeln!(ann, "DOC d{k}\nEVENT a 1 1 1\nEVENT b 1 2 2\nPAIR a b {label}");
            k += 1;
        }
    }
    std::fs::write(dir.join("train.conllu"), conllu).unwrap();
    std::fs::write(dir.join("train.ann"), ann).unwrap();
}

fn stats_report(dir: &Path, scheme: &str, reference: Option<usize>) -> String {
    let mut cfg = format!(
        "data.train.conllu = train.conllu\ndata.train.annotations = train.ann\ndata.scheme = {scheme}\noutput.dir = out\n"
    );
    if let Some(r) = reference {
        let _ = writeln!(cfg, "data.reference_total = {r}");
    }
    let path = dir.join("stats.cfg");
    std::fs::write(&path, cfg).unwrap();
    let out = cmd_analyze(&path, None, ReportKind::Stats).unwrap();
    std::fs::read_to_string(out.with_extension("tsv")).unwrap()
}

#[test]
fn stats_report_reproduces_label_tables() {
    let dir = tempfile::tempdir().unwrap();
    write_label_corpus(
        dir.path(),
        &[
            ("BEFORE", 384),
            ("AFTER", 274),
            ("INCLUDES", 56),
            ("IS_INCLUDED", 53),
            ("SIMULTANEOUS", 22),
            ("VAGUE", 638),
        ],
    );
    assert_eq!(
        stats_report(dir.path(), "tbdense", None),
        "Before\t384\t26.9\nAfter\t274\t19.2\nIncludes\t56\t3.9\nIs_Included\t53\t3.7\nSimultaneous\t22\t1.5\nVague\t638\t44.7\n"
    );

    let dir = tempfile::tempdir().unwrap();
    write_label_corpus(
        dir.path(),
        &[("BEFORE", 417), ("AFTER", 266), ("SIMULTANEOUS", 31), ("VAGUE", 133)],
    );
    assert_eq!(
        stats_report(dir.path(), "matres", Some(837)),
        "Before\t417\t49.8\nAfter\t266\t31.8\nSimultaneous\t31\t3.7\nVague\t133\t15.9\n"
    );
}
