//! `key = value` run configuration.
//!
//! ```text
//! # comment
//! data.train.conllu = train.conllu
//! data.train.annotations = train.ann
//! data.scheme = matres
//! model.layers = 1
//! train.lr = 3e-3, 1e-3
//! output.dir = out
//! ```
//!
//! Relative paths resolve against the configuration file's directory.
//! Candidate lists are comma separated.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use sgt_core::corpus::LabelScheme;
use sgt_core::encoder::BackendKind;
use sgt_core::train::TrainConfig;
use sha2::{Digest, Sha256};

pub const KNOWN_KEYS: &[&str] = &[
    "data.train.conllu",
    "data.train.annotations",
    "data.dev.conllu",
    "data.dev.annotations",
    "data.test.conllu",
    "data.test.annotations",
    "data.vectors",
    "data.scheme",
    "data.reference_total",
    "encoder.backend",
    "encoder.d_tok",
    "model.d",
    "model.d_r",
    "model.layers",
    "model.heads",
    "model.init_scale",
    "model.ln_eps",
    "model.alpha",
    "model.beta",
    "train.epochs",
    "train.warmup_epochs",
    "train.lr",
    "train.batch_size",
    "train.clip_norm",
    "train.lr_warmup_fraction",
    "eval.split",
    "analyze.top_k",
    "seed",
    "output.dir",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitPaths {
    pub conllu: PathBuf,
    pub annotations: PathBuf,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Raw entries as written, used for the configuration hash.
    pub entries: BTreeMap<String, String>,
    pub train_split: SplitPaths,
    pub dev_split: Option<SplitPaths>,
    pub test_split: Option<SplitPaths>,
    pub vectors: Option<PathBuf>,
    pub scheme: LabelScheme,
    pub reference_total: Option<usize>,
    pub backend: BackendKind,
    pub d_tok: usize,
    pub d: usize,
    pub d_r: usize,
    pub init_scale: f64,
    pub ln_eps: f64,
    pub train: TrainConfig,
    pub eval_split: Split,
    pub top_k: usize,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", no + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                bail!("line {}: unknown key {key:?}", no + 1);
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                bail!("line {}: key {key} given twice", no + 1);
            }
        }
        let e = Entries { map: &entries, base };

        let train_split = e
            .split("train")?
            .ok_or_else(|| anyhow!("missing key data.train.conllu"))?;
        let dev_split = e.split("dev")?;
        let test_split = e.split("test")?;
        let vectors = e.path("data.vectors")?;
        let backend = match e.raw("encoder.backend").unwrap_or("embedding") {
            "embedding" => BackendKind::Embedding,
            "precomputed" => BackendKind::Precomputed,
            other => bail!("encoder.backend: expected embedding or precomputed, got {other:?}"),
        };
        if backend == BackendKind::Precomputed && vectors.is_none() {
            bail!("missing key data.vectors (required by encoder.backend = precomputed)");
        }
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            epochs: e.parse("train.epochs")?.unwrap_or(defaults.epochs),
            warmup_epochs: e.parse("train.warmup_epochs")?.unwrap_or(defaults.warmup_epochs),
            learning_rates: e.list("train.lr")?.unwrap_or(defaults.learning_rates),
            batch_sizes: e.list("train.batch_size")?.unwrap_or(defaults.batch_sizes),
            layer_counts: e.list("model.layers")?.unwrap_or(defaults.layer_counts),
            head_counts: e.list("model.heads")?.unwrap_or(defaults.head_counts),
            seed: e.parse("seed")?.unwrap_or(0),
            alpha: match e.list::<f64>("model.alpha")? {
                None => None,
                Some(v) if v.len() == 2 => Some([v[0], v[1]]),
                Some(v) => bail!("model.alpha: expected 2 values, got {}", v.len()),
            },
            beta: e.list("model.beta")?,
            clip_norm: e.parse("train.clip_norm")?,
            lr_warmup_fraction: e.parse("train.lr_warmup_fraction")?,
        };
        train.validate()?;
        let eval_split = match e.raw("eval.split") {
            Some("train") => Split::Train,
            Some("dev") => Split::Dev,
            Some("test") => Split::Test,
            Some(other) => bail!("eval.split: expected train, dev or test, got {other:?}"),
            None if test_split.is_some() => Split::Test,
            None if dev_split.is_some() => Split::Dev,
            None => Split::Train,
        };
        match eval_split {
            Split::Dev if dev_split.is_none() => bail!("eval.split = dev but data.dev.conllu is not set"),
            Split::Test if test_split.is_none() => bail!("eval.split = test but data.test.conllu is not set"),
            _ => {}
        }
        let output_dir = e
            .raw("output.dir")
            .map(|p| base.join(p))
            .ok_or_else(|| anyhow!("missing key output.dir"))?;
        Ok(RunConfig {
            train_split,
            dev_split,
            test_split,
            vectors,
            scheme: e.parse("data.scheme")?.unwrap_or_else(LabelScheme::matres),
            reference_total: e.parse("data.reference_total")?,
            backend,
            d_tok: e.parse("encoder.d_tok")?.unwrap_or(16),
            d: e.parse("model.d")?.unwrap_or(16),
            d_r: e.parse("model.d_r")?.unwrap_or(8),
            init_scale: e.parse("model.init_scale")?.unwrap_or(0.02),
            ln_eps: e.parse("model.ln_eps")?.unwrap_or(1e-5),
            train,
            eval_split,
            top_k: e.parse("analyze.top_k")?.unwrap_or(1),
            output_dir,
            entries,
        })
    }

    pub fn split(&self, split: Split) -> Option<&SplitPaths> {
        match split {
            Split::Train => Some(&self.train_split),
            Split::Dev => self.dev_split.as_ref(),
            Split::Test => self.test_split.as_ref(),
        }
    }

    /// First 16 hex digits of SHA-256 over the sorted entries, seed excluded.
    pub fn hash(&self) -> String {
        let mut canon = String::new();
        for (k, v) in self.entries.iter().filter(|(k, _)| k.as_str() != "seed") {
            let _ = writeln!(canon, "{k}={v}");
        }
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Output file stem: configuration hash and seed.
    pub fn stem(&self) -> String {
        format!("{}-s{}", self.hash(), self.train.seed)
    }

    pub fn output_file(&self, suffix: &str) -> PathBuf {
        self.output_dir.join(format!("{}.{suffix}", self.stem()))
    }
}

struct Entries<'a> {
    map: &'a BTreeMap<String, String>,
    base: &'a Path,
}

impl Entries<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("{key}: cannot parse {v:?}: {e}")))
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let items = v
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<T>()
                    .map_err(|e| anyhow!("{key}: cannot parse {s:?}: {e}"))
            })
            .collect::<Result<Vec<T>>>()?;
        if items.is_empty() {
            bail!("{key}: empty list");
        }
        Ok(Some(items))
    }

    /// Existing path under `key`.
    fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let p = self.base.join(v);
        if !p.exists() {
            bail!("{key}: {} does not exist", p.display());
        }
        Ok(Some(p))
    }

    fn split(&self, name: &str) -> Result<Option<SplitPaths>> {
        let conllu = self.path(&format!("data.{name}.conllu"))?;
        let annotations = self.path(&format!("data.{name}.annotations"))?;
        match (conllu, annotations) {
            (Some(conllu), Some(annotations)) => Ok(Some(SplitPaths { conllu, annotations })),
            (None, None) => Ok(None),
            (Some(_), None) => bail!("missing key data.{name}.annotations"),
            (None, Some(_)) => bail!("missing key data.{name}.conllu"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir_with_files() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.conllu"), "").unwrap();
        std::fs::write(dir.path().join("a.ann"), "").unwrap();
        dir
    }

    const MINIMAL: &str = "data.train.conllu = a.conllu\ndata.train.annotations = a.ann\noutput.dir = out\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let dir = dir_with_files();
        let c = RunConfig::parse(MINIMAL, dir.path()).unwrap();
        assert_eq!(c.train.layer_counts, vec![4, 12]);
        assert_eq!(c.eval_split, Split::Train);
        assert_eq!(c.scheme, LabelScheme::matres());
    }

    #[test]
    fn missing_path_names_the_key() {
        let dir = dir_with_files();
        let err = RunConfig::parse("data.train.conllu = nope.conllu\n", dir.path()).unwrap_err();
        assert!(err.to_string().contains("data.train.conllu"), "{err}");
        let err = RunConfig::parse("output.dir = x\n", dir.path()).unwrap_err();
        assert!(err.to_string().contains("data.train.conllu"), "{err}");
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let dir = dir_with_files();
        assert!(RunConfig::parse(&format!("{MINIMAL}model.depth = 3\n"), dir.path()).is_err());
        assert!(RunConfig::parse(&format!("{MINIMAL}seed = 1\nseed = 2\n"), dir.path()).is_err());
    }

    #[test]
    fn hash_ignores_seed_and_order() {
        let dir = dir_with_files();
        let a = RunConfig::parse(&format!("{MINIMAL}seed = 1\ntrain.lr = 1e-3\n"), dir.path()).unwrap();
        let b = RunConfig::parse(&format!("train.lr = 1e-3\n{MINIMAL}seed = 7\n"), dir.path()).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.stem(), b.stem());
        let c = RunConfig::parse(&format!("{MINIMAL}train.lr = 2e-3\n"), dir.path()).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
