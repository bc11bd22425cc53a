//! `kbqa`: build graphs, generate data, train, evaluate, ask, and run the
//! transfer and unseen-composition experiments.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use kbqa::data::{
    filter_split, gen_kg, gen_questions, load_kg_dir, preprocess, question_vocab_jaccard, read_jsonl, write_dataset,
    build_vocab, DatasetRecord, KgSize, Profile, QuestionConfig,
};
use kbqa::executor::QueryResult;
use kbqa::grounder::Grounder;
use kbqa::kg::KnowledgeGraph;
use kbqa::model::Model;
use kbqa::query::print_sparql;
use kbqa::text::RelationCatalog;
use kbqa::train_eval::{
    evaluate, mean_hits, run_transfer, run_unseen, shared_vocab, train, Corpus, ExperimentReport, FullConfig,
    TransferConfig, UnseenConfig,
};
use kbqa::util::write_atomic;

use config::{Failure, Resolved};

#[derive(Parser, Debug)]
#[command(name = "kbqa", version, about = "Sketch-then-ground question answering over knowledge graphs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// RNG seed (the STAG_SEED environment variable takes precedence).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key=value` config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding triples.tsv, labels.tsv and optionally relations.tsv.
    #[arg(long, global = true)]
    pub kg: Option<PathBuf>,
    /// Entity label file overriding `<kg>/labels.tsv`.
    #[arg(long, global = true)]
    pub labels: Option<PathBuf>,
    /// Relation label file overriding `<kg>/relations.tsv`.
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    /// JSON-lines dataset.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Model checkpoint to read.
    #[arg(long, global = true)]
    pub ckpt: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub beam: Option<usize>,
    #[arg(long, global = true)]
    pub shortlist: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    /// movie-A or movie-B.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    /// Comma-separated training-set sizes for transfer-exp.
    #[arg(long, global = true)]
    pub n: Option<String>,
    /// Comma-separated relation chains such as `starred_actors>directed_by`.
    #[arg(long = "exclude-paths", global = true)]
    pub exclude_paths: Option<String>,
    /// Print or keep the full candidate trace.
    #[arg(long, global = true)]
    pub trace: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic movie KG into --out.
    BuildKg,
    /// Generate a KG plus questions into --out (KG under <out>/kg).
    GenData,
    /// Train a model on the train split of --dataset (early stopping on its
    /// dev split); --ckpt continues from a checkpoint.
    Train,
    /// Evaluate --ckpt on --dataset against --kg.
    Eval,
    /// Answer one question.
    Ask { question: String },
    /// Pretrain on movie-A, then fine-tune on movie-B 2-hop subsets.
    TransferExp,
    /// Train with relation chains held out and compare seen vs unseen.
    UnseenExp,
    /// Write the candidate trace of every --dataset question as JSON lines.
    ExportTrace,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = Resolved::new(&cli.common)?;
    log::info!("resolved config: {}", cfg.describe());
    match cli.command {
        Command::BuildKg => build_kg(&cfg),
        Command::GenData => gen_data(&cfg),
        Command::Train => train_cmd(&cfg),
        Command::Eval => eval_cmd(&cfg),
        Command::Ask { question } => ask_cmd(&cfg, &question),
        Command::TransferExp => transfer_cmd(&cfg),
        Command::UnseenExp => unseen_cmd(&cfg),
        Command::ExportTrace => export_trace(&cfg),
    }
}

fn profile(cfg: &Resolved) -> Result<Profile, Failure> {
    cfg.profile.parse().map_err(|e| Failure::usage(format!("{e}")))
}

fn build_kg(cfg: &Resolved) -> Result<(), Failure> {
    let out = cfg.require_out()?;
    let g = gen_kg(profile(cfg)?, cfg.seed, KgSize::default());
    let m = g.write(out).map_err(Failure::data)?;
    println!(
        "kg {} entities={} relations={} triples={} dir={}",
        m.profile,
        m.entity_count,
        m.relation_count,
        m.triple_count,
        out.display()
    );
    Ok(())
}

fn gen_data(cfg: &Resolved) -> Result<(), Failure> {
    let out = cfg.require_out()?;
    let p = profile(cfg)?;
    let g = gen_kg(p, cfg.seed, KgSize::default());
    g.write(&out.join("kg")).map_err(Failure::data)?;
    let kg = g.to_kg();
    let (records, stats) = gen_questions(&kg, p, &QuestionConfig::default(), cfg.seed).map_err(Failure::data)?;
    let m = write_dataset(out, p, cfg.seed, &records, stats, &g).map_err(Failure::data)?;
    println!(
        "dataset {} records={} signatures={} dropped_linker={} dir={}",
        m.profile,
        m.records,
        m.signatures,
        m.dropped_linker,
        out.display()
    );
    Ok(())
}

fn load_kg(cfg: &Resolved) -> Result<(KnowledgeGraph, RelationCatalog), Failure> {
    let dir = cfg.require_kg()?;
    load_kg_dir(dir, cfg.common.labels.as_deref(), cfg.common.catalog.as_deref()).map_err(Failure::data)
}

fn load_dataset(cfg: &Resolved) -> Result<Vec<DatasetRecord>, Failure> {
    let path = cfg
        .common
        .dataset
        .as_deref()
        .ok_or_else(|| Failure::usage("--dataset is required".into()))?;
    read_jsonl(path).map_err(Failure::data)
}

fn load_model(cfg: &Resolved) -> Result<Model, Failure> {
    let path = cfg
        .common
        .ckpt
        .as_deref()
        .ok_or_else(|| Failure::usage("--ckpt is required".into()))?;
    let mut m = Model::load(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(Failure::data)?;
    let c = m.config().clone();
    m.set_search(
        cfg.common.beam.unwrap_or(c.beam_width),
        cfg.common.shortlist.unwrap_or(c.shortlist),
        c.candidate_cap,
    );
    Ok(m)
}

fn train_cmd(cfg: &Resolved) -> Result<(), Failure> {
    let out = cfg.require_out()?;
    let (_kg, catalog) = load_kg(cfg)?;
    let records = load_dataset(cfg)?;
    let train_records: Vec<DatasetRecord> = records
        .iter()
        .filter(|r| matches!(r.split.as_deref(), None | Some("train")))
        .cloned()
        .collect();
    let dev = filter_split(&records, "dev");
    let mut model = match &cfg.common.ckpt {
        Some(_) => load_model(cfg)?,
        None => {
            let vocab = build_vocab(&records, &[&catalog]);
            Model::new(cfg.model.clone(), vocab, cfg.seed).map_err(Failure::data)?
        }
    };
    let mc = model.config().clone();
    let (train_ex, rep) = preprocess(&train_records, &catalog, model.vocab(), mc.max_question_len, mc.max_skeleton_len);
    log::info!("preprocess: {rep:?}");
    let (dev_ex, _) = preprocess(&dev, &catalog, model.vocab(), mc.max_question_len, mc.max_skeleton_len);
    let surfaces = model.surface_ids(&catalog);
    let report = train(&mut model, &train_ex, &dev_ex, &surfaces, &cfg.train).map_err(Failure::runtime)?;
    model.save(out).map_err(Failure::runtime)?;
    let best = report.history.get(report.best_round);
    println!(
        "trained steps={} rounds={} best_round={} val_exact={:.4} ckpt={}",
        report.steps,
        report.rounds,
        report.best_round,
        best.map_or(0.0, |b| b.val_exact_match),
        out.display()
    );
    Ok(())
}

fn eval_cmd(cfg: &Resolved) -> Result<(), Failure> {
    let (kg, catalog) = load_kg(cfg)?;
    let records = load_dataset(cfg)?;
    let model = load_model(cfg)?;
    let m = evaluate(&model, &kg, &catalog, &records);
    println!("{}", m.summary_line());
    for (name, s) in &m.per_category {
        println!("  {name}: Hits@1={:.4} F1={:.4} n={}", s.hits_at_1, s.f1, s.count);
    }
    if let Some(out) = &cfg.common.out {
        let body = serde_json::to_string_pretty(&m).map_err(Failure::runtime)? + "\n";
        write_atomic(out, body.as_bytes())
            .with_context(|| format!("writing {}", out.display()))
            .map_err(Failure::runtime)?;
    }
    Ok(())
}

fn labels_of(kg: &KnowledgeGraph, r: &QueryResult) -> Vec<String> {
    match r {
        QueryResult::Entities(es) => {
            let mut v: Vec<String> = es.iter().map(|&e| kg.entity(e).label.clone()).collect();
            v.sort();
            v
        }
        other => other.to_answer_strings(kg),
    }
}

fn ask_cmd(cfg: &Resolved, question: &str) -> Result<(), Failure> {
    let (kg, catalog) = load_kg(cfg)?;
    let model = load_model(cfg)?;
    let grounder = Grounder::new(&model, &kg, &catalog);
    let answer = grounder.answer(&model, question);
    if cfg.common.trace {
        println!("{}", serde_json::to_string_pretty(&answer.trace(question, &kg)).map_err(Failure::runtime)?);
        return Ok(());
    }
    match (&answer.result, &answer.chosen) {
        (Some(r), Some(q)) => {
            let labels = if answer.flagged_empty { Vec::new() } else { labels_of(&kg, r) };
            println!("answer: {}", labels.join(" | "));
            println!("sparql: {}", print_sparql(q, &kg));
            if answer.flagged_empty {
                println!("note: every candidate query returned an empty result");
            }
        }
        _ => println!(
            "unanswered: {}",
            answer.unanswered.as_deref().unwrap_or("no candidate query")
        ),
    }
    Ok(())
}

fn write_report(cfg: &Resolved, report: &ExperimentReport) -> Result<(), Failure> {
    if let Some(out) = &cfg.common.out {
        let (j, c) = report.write(out).map_err(Failure::runtime)?;
        log::info!("wrote {} and {}", j.display(), c.display());
    }
    Ok(())
}

fn transfer_cmd(cfg: &Resolved) -> Result<(), Failure> {
    let q = QuestionConfig::default();
    let a = Corpus::generate(Profile::MovieA, cfg.seed, KgSize::default(), &q).map_err(Failure::data)?;
    let b = Corpus::generate(Profile::MovieB, cfg.seed, KgSize::default(), &q).map_err(Failure::data)?;
    log::info!("question vocabulary overlap {:.3}", question_vocab_jaccard(&a.records, &b.records));
    let vocab = shared_vocab(&[&a, &b]);
    let full = FullConfig {
        model: cfg.model.clone(),
        train: cfg.train,
        seed: cfg.seed,
    };
    let (pretrained, pre_report) = kbqa::train_eval::run_full(&full, &a, vocab).map_err(Failure::runtime)?;
    write_report(cfg, &pre_report)?;
    let tcfg = TransferConfig {
        model: cfg.model.clone(),
        finetune: cfg.finetune,
        grid: cfg.grid.clone(),
        seeds: (0..3).map(|i| cfg.seed + i).collect(),
    };
    let (rows, report) = run_transfer(&tcfg, &pretrained, &b, a.manifest_hashes()).map_err(Failure::runtime)?;
    write_report(cfg, &report)?;
    for &n in &tcfg.grid {
        println!(
            "n={n} pretrained_hits@1={:.4} scratch_hits@1={:.4}",
            mean_hits(&rows, n, true),
            mean_hits(&rows, n, false)
        );
    }
    Ok(())
}

fn unseen_cmd(cfg: &Resolved) -> Result<(), Failure> {
    let q = QuestionConfig::default();
    let a = Corpus::generate(Profile::MovieA, cfg.seed, KgSize::default(), &q).map_err(Failure::data)?;
    let ucfg = UnseenConfig {
        model: cfg.model.clone(),
        train: cfg.train,
        excluded: cfg.excluded.clone(),
        seed: cfg.seed,
    };
    let (seen, unseen, report) = run_unseen(&ucfg, &a).map_err(|e| match e {
        kbqa::train_eval::TrainError::Data(d) => Failure::data(d),
        other => Failure::runtime(other),
    })?;
    write_report(cfg, &report)?;
    println!(
        "seen_hits@1={:.4} (n={}) unseen_hits@1={:.4} (n={})",
        seen.hits_at_1, seen.count, unseen.hits_at_1, unseen.count
    );
    Ok(())
}

fn export_trace(cfg: &Resolved) -> Result<(), Failure> {
    let out = cfg.require_out()?;
    let (kg, catalog) = load_kg(cfg)?;
    let records = load_dataset(cfg)?;
    let model = load_model(cfg)?;
    let grounder = Grounder::new(&model, &kg, &catalog);
    let mut body = String::new();
    for r in &records {
        let mut t = grounder.answer(&model, &r.question).trace(&r.question, &kg);
        t["gold"] = serde_json::json!(r.answers);
        body.push_str(&serde_json::to_string(&t).map_err(Failure::runtime)?);
        body.push('\n');
    }
    write_atomic(out, body.as_bytes())
        .with_context(|| format!("writing {}", out.display()))
        .map_err(Failure::runtime)?;
    println!("traces={} out={}", records.len(), out.display());
    Ok(())
}
