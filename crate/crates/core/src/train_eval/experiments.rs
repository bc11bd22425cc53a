use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::{evaluate, train, Metrics, TrainConfig, TrainError, TrainReport};
use crate::data::{
    build_vocab, filter_split, gen_kg, gen_questions, make_unseen_split, preprocess, to_jsonl, Category, DataError,
    DatasetRecord, GeneratedKg, KgSize, Profile, QuestionConfig,
};
use crate::kg::KnowledgeGraph;
use crate::model::{Model, ModelConfig, TrainingExample};
use crate::text::{RelationCatalog, TokenVocab};
use crate::util::{sha256_hex, write_atomic};

/// A generated graph with its question set.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub profile: Profile,
    pub generated: GeneratedKg,
    pub kg: KnowledgeGraph,
    pub catalog: RelationCatalog,
    pub records: Vec<DatasetRecord>,
}

impl Corpus {
    pub fn generate(profile: Profile, seed: u64, size: KgSize, questions: &QuestionConfig) -> Result<Self, DataError> {
        let generated = gen_kg(profile, seed, size);
        let kg = generated.to_kg();
        let catalog = generated.catalog(&kg);
        let (records, _) = gen_questions(&kg, profile, questions, seed)?;
        Ok(Self {
            profile,
            generated,
            kg,
            catalog,
            records,
        })
    }

    pub fn split(&self, name: &str) -> Vec<DatasetRecord> {
        filter_split(&self.records, name)
    }

    /// Records of one split restricted to a category.
    pub fn split_of(&self, name: &str, category: Category) -> Vec<DatasetRecord> {
        self.split(name).into_iter().filter(|r| r.category() == category).collect()
    }

    /// Hashes identifying the exact data used.
    pub fn manifest_hashes(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let p = self.profile.name();
        out.insert(format!("{p}/triples.tsv"), sha256_hex(self.generated.triples_tsv().as_bytes()));
        out.insert(format!("{p}/all.jsonl"), sha256_hex(to_jsonl(&self.records).as_bytes()));
        out
    }
}

/// Vocabulary over every question and relation surface of the corpora.
pub fn shared_vocab(corpora: &[&Corpus]) -> TokenVocab {
    let records: Vec<DatasetRecord> = corpora.iter().flat_map(|c| c.records.iter().cloned()).collect();
    let catalogs: Vec<&RelationCatalog> = corpora.iter().map(|c| &c.catalog).collect();
    build_vocab(&records, &catalogs)
}

fn to_examples(model: &Model, catalog: &RelationCatalog, records: &[DatasetRecord]) -> Vec<TrainingExample> {
    let cfg = model.config();
    let (ex, report) = preprocess(records, catalog, model.vocab(), cfg.max_question_len, cfg.max_skeleton_len);
    if report.rejected() > 0 {
        log::warn!("preprocess rejected {} of {} records: {report:?}", report.rejected(), records.len());
    }
    ex
}

/// Trains `model` on `train_records` with early stopping on `val_records`.
pub fn fit(
    model: &mut Model,
    catalog: &RelationCatalog,
    train_records: &[DatasetRecord],
    val_records: &[DatasetRecord],
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    let train_ex = to_examples(model, catalog, train_records);
    let val_ex = to_examples(model, catalog, val_records);
    let surfaces = model.surface_ids(catalog);
    train(model, &train_ex, &val_ex, &surfaces, cfg)
}

/// Stable hex digest of a `key=value` configuration snapshot.
pub fn config_hash(pairs: &BTreeMap<String, String>) -> String {
    let text: String = pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    sha256_hex(text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub manifests: BTreeMap<String, String>,
    pub tables: serde_json::Value,
    /// Plot-ready rows, header first.
    pub csv: String,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    /// `<name>-<first 12 hex of config hash>-seed<seed>`.
    pub fn stem(&self) -> String {
        format!("{}-{}-seed{}", self.name, &config_hash(&self.config)[..12], self.seed)
    }

    /// Writes the JSON report and CSV next to each other; returns both paths.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf), TrainError> {
        let json_path = dir.join(format!("{}.json", self.stem()));
        let csv_path = dir.join(format!("{}.csv", self.stem()));
        let body = serde_json::to_string_pretty(self).expect("report serializes") + "\n";
        for (path, bytes) in [(&json_path, body.as_bytes()), (&csv_path, self.csv.as_bytes())] {
            write_atomic(path, bytes).map_err(|source| TrainError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        Ok((json_path, csv_path))
    }
}

fn snapshot(model: &ModelConfig, extra: &[(&str, &TrainConfig)], more: Vec<(String, String)>) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> = model.to_pairs().into_iter().map(|(k, v)| (format!("model.{k}"), v)).collect();
    for (prefix, t) in extra {
        for (k, v) in t.to_pairs() {
            out.insert(format!("{prefix}.{k}"), v);
        }
    }
    out.extend(more);
    out
}

fn metrics_json(m: &Metrics) -> serde_json::Value {
    json!({
        "count": m.count,
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
        "hits_at_1": m.hits_at_1,
        "per_category": m.per_category,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

/// Trains on the corpus train split (early stopping on dev) and evaluates on
/// test, per category. Returns the trained model with the report.
pub fn run_full(cfg: &FullConfig, corpus: &Corpus, vocab: TokenVocab) -> Result<(Model, ExperimentReport), TrainError> {
    let start = Instant::now();
    let mut model = Model::new(cfg.model.clone(), vocab, cfg.seed)?;
    let train_cfg = TrainConfig {
        seed: cfg.seed,
        ..cfg.train
    };
    let report = fit(&mut model, &corpus.catalog, &corpus.split("train"), &corpus.split("dev"), &train_cfg)?;
    let test = evaluate(&model, &corpus.kg, &corpus.catalog, &corpus.split("test"));
    let mut csv = String::from("category,count,precision,recall,f1,hits_at_1\n");
    for (name, s) in &test.per_category {
        csv.push_str(&format!("{name},{},{},{},{},{}\n", s.count, s.precision, s.recall, s.f1, s.hits_at_1));
    }
    csv.push_str(&format!(
        "all,{},{},{},{},{}\n",
        test.count, test.precision, test.recall, test.f1, test.hits_at_1
    ));
    let out = ExperimentReport {
        name: "full".into(),
        seed: cfg.seed,
        config: snapshot(&cfg.model, &[("train", &train_cfg)], vec![("profile".into(), corpus.profile.name().into())]),
        manifests: corpus.manifest_hashes(),
        tables: json!({ "test": metrics_json(&test), "training": report }),
        csv,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((model, out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    pub model: ModelConfig,
    pub finetune: TrainConfig,
    /// Target training-set sizes; 0 evaluates without fine-tuning.
    pub grid: Vec<usize>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferRow {
    pub seed: u64,
    pub n: usize,
    pub pretrained_hits: f64,
    pub scratch_hits: f64,
    pub pretrained_f1: f64,
    pub scratch_f1: f64,
}

/// Low-resource transfer to the 2-hop questions of `target`: for every seed
/// and every N, fine-tunes `pretrained` on N target examples and trains a
/// fresh model on the same N, then evaluates both on the target test split.
/// `pretrained` must share the vocabulary used for the target.
pub fn run_transfer(
    cfg: &TransferConfig,
    pretrained: &Model,
    target: &Corpus,
    source_manifests: BTreeMap<String, String>,
) -> Result<(Vec<TransferRow>, ExperimentReport), TrainError> {
    let start = Instant::now();
    let pool = target.split_of("train", Category::TwoHop);
    let dev = target.split_of("dev", Category::TwoHop);
    let test = target.split_of("test", Category::TwoHop);
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let mut shuffled = pool.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for &n in &cfg.grid {
            let subset = &shuffled[..n.min(shuffled.len())];
            let tcfg = TrainConfig { seed, ..cfg.finetune };
            let mut pre = pretrained.clone();
            let mut scratch = Model::new(cfg.model.clone(), pretrained.vocab().clone(), seed)?;
            if !subset.is_empty() {
                fit(&mut pre, &target.catalog, subset, &dev, &tcfg)?;
                fit(&mut scratch, &target.catalog, subset, &dev, &tcfg)?;
            }
            let mp = evaluate(&pre, &target.kg, &target.catalog, &test);
            let ms = evaluate(&scratch, &target.kg, &target.catalog, &test);
            log::info!("transfer seed {seed} n {n}: pretrained {:.4} scratch {:.4}", mp.hits_at_1, ms.hits_at_1);
            rows.push(TransferRow {
                seed,
                n,
                pretrained_hits: mp.hits_at_1,
                scratch_hits: ms.hits_at_1,
                pretrained_f1: mp.f1,
                scratch_f1: ms.f1,
            });
        }
    }
    let mut csv = String::from("seed,n,pretrained_hits_at_1,scratch_hits_at_1,pretrained_f1,scratch_f1\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.seed, r.n, r.pretrained_hits, r.scratch_hits, r.pretrained_f1, r.scratch_f1
        ));
    }
    let mut means = Vec::new();
    for &n in &cfg.grid {
        let at: Vec<&TransferRow> = rows.iter().filter(|r| r.n == n).collect();
        let k = at.len().max(1) as f64;
        let pre = at.iter().map(|r| r.pretrained_hits).sum::<f64>() / k;
        let scr = at.iter().map(|r| r.scratch_hits).sum::<f64>() / k;
        csv.push_str(&format!("mean,{n},{pre},{scr},,\n"));
        means.push(json!({ "n": n, "pretrained_hits_at_1": pre, "scratch_hits_at_1": scr }));
    }
    let mut manifests = source_manifests;
    manifests.extend(target.manifest_hashes());
    let report = ExperimentReport {
        name: "transfer".into(),
        seed: cfg.seeds.first().copied().unwrap_or(0),
        config: snapshot(
            &cfg.model,
            &[("finetune", &cfg.finetune)],
            vec![
                ("grid".into(), format!("{:?}", cfg.grid)),
                ("seeds".into(), format!("{:?}", cfg.seeds)),
                ("target".into(), target.profile.name().into()),
            ],
        ),
        manifests,
        tables: json!({ "rows": rows, "means": means, "test_size": test.len() }),
        csv,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((rows, report))
}

/// Mean Hits@1 over rows with the given N.
pub fn mean_hits(rows: &[TransferRow], n: usize, pretrained: bool) -> f64 {
    let at: Vec<f64> = rows
        .iter()
        .filter(|r| r.n == n)
        .map(|r| if pretrained { r.pretrained_hits } else { r.scratch_hits })
        .collect();
    at.iter().sum::<f64>() / at.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnseenConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub excluded: Vec<String>,
    pub seed: u64,
}

/// Compositional generalization on 2-hop questions: records containing an
/// excluded relation chain are withheld from training and evaluated
/// separately. Early stopping uses the `dev` part of seen-dev.
pub fn run_unseen(cfg: &UnseenConfig, corpus: &Corpus) -> Result<(Metrics, Metrics, ExperimentReport), TrainError> {
    let start = Instant::now();
    let two_hop: Vec<DatasetRecord> = corpus
        .records
        .iter()
        .filter(|r| r.category() == Category::TwoHop)
        .cloned()
        .collect();
    let split = make_unseen_split(&two_hop, &cfg.excluded)?;
    let vocab = shared_vocab(&[corpus]);
    let mut model = Model::new(cfg.model.clone(), vocab, cfg.seed)?;
    let val: Vec<DatasetRecord> = split
        .seen_dev
        .iter()
        .filter(|r| r.split.as_deref() == Some("dev"))
        .cloned()
        .collect();
    let train_cfg = TrainConfig {
        seed: cfg.seed,
        ..cfg.train
    };
    let report = fit(&mut model, &corpus.catalog, &split.train, &val, &train_cfg)?;
    let seen = evaluate(&model, &corpus.kg, &corpus.catalog, &split.seen_dev);
    let unseen = evaluate(&model, &corpus.kg, &corpus.catalog, &split.unseen_dev);
    let ratio = if seen.hits_at_1 > 0.0 { unseen.hits_at_1 / seen.hits_at_1 } else { 0.0 };
    let csv = format!(
        "split,count,hits_at_1,f1\nseen,{},{},{}\nunseen,{},{},{}\n",
        seen.count, seen.hits_at_1, seen.f1, unseen.count, unseen.hits_at_1, unseen.f1
    );
    let out = ExperimentReport {
        name: "unseen".into(),
        seed: cfg.seed,
        config: snapshot(
            &cfg.model,
            &[("train", &train_cfg)],
            vec![("excluded".into(), cfg.excluded.join(","))],
        ),
        manifests: corpus.manifest_hashes(),
        tables: json!({
            "train_size": split.train.len(),
            "seen": metrics_json(&seen),
            "unseen": metrics_json(&unseen),
            "ratio": ratio,
            "training": report,
        }),
        csv,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((seen, unseen, out))
}
