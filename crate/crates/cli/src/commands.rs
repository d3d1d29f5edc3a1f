use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::ValueEnum;
use guidedel::engine::{
    DenseRetriever, EntityRetriever, FixedRetriever, GuidedConfig, GuidedLinker, LinkResult, Linker, SpanSource,
    VanillaConfig, VanillaLinker,
};
use guidedel::eval::{benchmark_with, format_table, micro_f1_inkb, EvalReport};
use guidedel::icl::{
    build_icl_prompt, parse_icl_response, Completion, CompletionRequest, GenerationParams, IclDiagnostics,
    IclExemplar, IclParseOptions, ReplayCompletion, TEMPLATE_VERSION,
};
use guidedel::kb::{
    build_entity_trie, expand_coreference, DictOptions, EntityRecord, EntityToMentionMap, KnowledgeBase, MentionDict,
    PrefixTrie, Stopwords,
};
use guidedel::markup::{
    char_annotations, read_dataset, write_dataset, AnnotatedDocument, CharAnnotation, Document, RuleTokenizer, Vocab,
};
use guidedel::retriever::{
    build_index, chunk_examples, recall_curve, train_retriever as train_dual_encoder, DualEncoder, EncoderConfig,
    EntityIndex, TrainConfig, DEFAULT_CHUNK_LEN,
};
use guidedel::scorer::{clm_loss, NgramConfig, NgramScorer, TrainingExample, UniformScorer};
use guidedel::synthetic::{SyntheticConfig, SyntheticCorpus};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;
use crate::{
    BenchArgs, BuildDictsArgs, BuildKbArgs, DecodeArgs, EvalArgs, LinkArgs, Mode, SynthArgs, TrainRetrieverArgs,
    TrainScorerArgs,
};

/// F1 fell below the `--min-f1` threshold.
#[derive(Debug)]
pub struct ThresholdError {
    pub f1: f64,
    pub min_f1: f64,
}

impl std::fmt::Display for ThresholdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "F1 {:.6} is below the required {:.6}", self.f1, self.min_f1)
    }
}

impl std::error::Error for ThresholdError {}

/// Machine-readable name for the first recognized error in the chain.
pub fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(g) = cause.downcast_ref::<guidedel::Error>() {
            return g.kind();
        }
        if cause.is::<ThresholdError>() {
            return "ThresholdError";
        }
        if cause.is::<toml::de::Error>() {
            return "ConfigError";
        }
        if cause.is::<std::io::Error>() {
            return "IoError";
        }
    }
    "Error"
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn dataset(path: &Path) -> anyhow::Result<Vec<AnnotatedDocument>> {
    read_dataset(path, &RuleTokenizer).with_context(|| format!("reading dataset {}", path.display()))
}

fn knowledge_base(path: &Path) -> anyhow::Result<KnowledgeBase> {
    KnowledgeBase::read(path).with_context(|| format!("reading knowledge base {}", path.display()))
}

pub fn build_kb(args: &BuildKbArgs) -> anyhow::Result<()> {
    let kb = knowledge_base(&args.input)?;
    kb.write(&args.output)?;
    let aliases: usize = kb.iter().map(|e| e.aliases.len()).sum();
    print_json(&serde_json::json!({ "entities": kb.len(), "aliases": aliases }))
}

pub fn build_dicts(args: &BuildDictsArgs, config: &Config) -> anyhow::Result<()> {
    let c = &config.build_dicts;
    let opts = DictOptions {
        casefold: args.casefold.or(c.casefold).unwrap_or(true),
        strict: args.strict.or(c.strict).unwrap_or(false),
    };
    let kb = knowledge_base(&args.kb)?;
    let mut corpus = dataset(&args.corpus)?;
    if args.coref.or(c.coref).unwrap_or(false) {
        for ad in &mut corpus {
            let mut expanded = expand_coreference(&ad.doc, &ad.annotations);
            expanded.sort();
            ad.annotations = expanded;
        }
    }
    let mut dict = MentionDict::build(&corpus, &kb, opts)?;
    if args.aliases.or(c.aliases).unwrap_or(false) {
        dict.add_aliases(&kb);
    }
    let stopwords = match &args.stopwords {
        Some(p) => Stopwords::read(p).with_context(|| format!("reading stopwords {}", p.display()))?,
        None => Stopwords::default(),
    };
    let map = EntityToMentionMap::invert(&dict, &stopwords);
    dict.write(&args.dict_out)?;
    map.write(&args.e2m_out)?;
    print_json(&serde_json::json!({ "mentions": dict.len(), "entities": map.len() }))
}

/// Vocabulary over document texts and every knowledge-base title.
fn scorer_vocab(corpus: &[AnnotatedDocument], kb: &KnowledgeBase) -> Vocab {
    guidedel::synthetic::build_vocab(corpus, kb, &RuleTokenizer)
}

pub fn train_scorer(args: &TrainScorerArgs, config: &Config) -> anyhow::Result<()> {
    let c = &config.train_scorer;
    let defaults = NgramConfig::default();
    let ngram = NgramConfig {
        order: args.order.or(c.order).unwrap_or(defaults.order),
        smoothing: args.smoothing.or(c.smoothing).unwrap_or(defaults.smoothing),
    };
    let kb = knowledge_base(&args.kb)?;
    let mut corpus = dataset(&args.corpus)?;
    for ad in &mut corpus {
        ad.annotations.retain(|a| kb.contains(&a.entity));
    }
    let vocab = scorer_vocab(&corpus, &kb);
    let examples = corpus
        .iter()
        .filter(|ad| !ad.doc.is_empty())
        .map(|ad| TrainingExample::from_annotated(&ad.doc, &ad.annotations, &vocab, &RuleTokenizer))
        .collect::<guidedel::Result<Vec<_>>>()?;
    let scorer = NgramScorer::train(&examples, vocab.len(), ngram)?;
    scorer.save(&args.output, &vocab)?;
    let uniform = UniformScorer::new(vocab.len())?;
    let (mut loss, mut base, mut tokens) = (0.0, 0.0, 0usize);
    for ex in &examples {
        loss += clm_loss(&scorer, ex)?;
        base += clm_loss(&uniform, ex)?;
        tokens += ex.target().len();
    }
    print_json(&serde_json::json!({
        "examples": examples.len(),
        "vocab_size": vocab.len(),
        "order": ngram.order,
        "train_loss_per_token": loss / tokens as f64,
        "uniform_loss_per_token": base / tokens as f64,
    }))
}

pub fn train_retriever(args: &TrainRetrieverArgs, config: &Config, seed: u64) -> anyhow::Result<()> {
    let c = &config.train_retriever;
    let td = TrainConfig::default();
    let ed = EncoderConfig::default();
    let train = TrainConfig {
        epochs: args.epochs.or(c.epochs).unwrap_or(td.epochs),
        batch_size: args.batch_size.or(c.batch_size).unwrap_or(td.batch_size),
        learning_rate: args.learning_rate.or(c.learning_rate).unwrap_or(td.learning_rate),
        negatives: args.negatives.or(c.negatives).unwrap_or(td.negatives),
        seed,
        chunk_len: args.chunk_len.or(c.chunk_len).unwrap_or(td.chunk_len),
    };
    let enc_cfg = EncoderConfig {
        dim: args.dim.or(c.dim).unwrap_or(ed.dim),
        buckets: args.buckets.or(c.buckets).unwrap_or(ed.buckets),
        init_scale: args.init_scale.or(c.init_scale).unwrap_or(ed.init_scale),
        init_seed: seed,
        ..ed
    };
    if train.chunk_len == 0 {
        bail!(guidedel::Error::Config("chunk_len must be positive".into()));
    }
    let kb = knowledge_base(&args.kb)?;
    let examples = chunk_examples(&dataset(&args.corpus)?, &kb, train.chunk_len);
    let (encoder, report) = train_dual_encoder(DualEncoder::new(enc_cfg)?, &examples, &kb, &train)?;
    let index = build_index(&encoder, &kb);
    encoder.save(&args.encoder_out)?;
    index.save(&args.index_out)?;

    let mut summary = serde_json::json!({
        "chunks": examples.len(),
        "steps": report.steps,
        "initial_loss": report.initial_loss,
        "final_loss": report.final_loss,
        "epoch_losses": report.epoch_losses,
    });
    if let Some(path) = &args.eval_corpus {
        let held_out = chunk_examples(&dataset(path)?, &kb, train.chunk_len);
        let ks: Vec<usize> = [1, 5, 10, 20, 50, 100].into_iter().filter(|&k| k <= kb.len()).collect();
        let curve = recall_curve(&encoder, &index, &held_out, &ks)?;
        let recall: serde_json::Map<String, serde_json::Value> =
            ks.iter().zip(curve).map(|(k, r)| (format!("recall@{k}"), r.into())).collect();
        summary["eval"] = recall.into();
    }
    print_json(&summary)
}

/// Everything a linker may need, loaded once from disk.
struct Resources {
    kb: KnowledgeBase,
    scorer: Option<(NgramScorer, Vocab)>,
    map: Option<EntityToMentionMap>,
    dict: Option<MentionDict>,
    dense: Option<(DualEncoder, EntityIndex)>,
    trie: Option<PrefixTrie>,
}

#[derive(Debug, Clone, Copy)]
struct Settings {
    k: usize,
    offset: f64,
    beam_size: usize,
    parallelism: usize,
    chunk_len: usize,
}

fn settings(d: &DecodeArgs, config: &Config) -> anyhow::Result<Settings> {
    let c = &config.link;
    let s = Settings {
        k: d.k.or(c.k).unwrap_or(GuidedConfig::default().k),
        offset: d.offset.or(c.offset).unwrap_or(0.0),
        beam_size: d.beam_size.or(c.beam_size).unwrap_or(VanillaConfig::default().beam_size),
        parallelism: d.parallelism.or(c.parallelism).unwrap_or(1),
        chunk_len: d.chunk_len.or(c.chunk_len).unwrap_or(DEFAULT_CHUNK_LEN),
    };
    if s.parallelism == 0 || s.chunk_len == 0 || s.k == 0 {
        bail!(guidedel::Error::Config("k, parallelism and chunk_len must be positive".into()));
    }
    Ok(s)
}

impl Resources {
    fn load(d: &DecodeArgs, modes: &[Mode]) -> anyhow::Result<Self> {
        let kb = knowledge_base(&d.kb)?;
        let needs_scorer = modes.iter().any(|m| *m != Mode::IclPrompt);
        let scorer = match (&d.scorer, needs_scorer) {
            (Some(p), _) => Some(NgramScorer::load(p).with_context(|| format!("reading scorer {}", p.display()))?),
            (None, true) => bail!(guidedel::Error::Config("--scorer is required for guided and vanilla modes".into())),
            (None, false) => None,
        };
        let map = match (&d.e2m, modes.contains(&Mode::Guided)) {
            (Some(p), _) => Some(EntityToMentionMap::read(p).with_context(|| format!("reading {}", p.display()))?),
            (None, true) => bail!(guidedel::Error::Config("--e2m is required for guided mode".into())),
            (None, false) => None,
        };
        let dict = match &d.dict {
            Some(p) => Some(MentionDict::read(p).with_context(|| format!("reading {}", p.display()))?),
            None => None,
        };
        let dense = match (&d.encoder, &d.index) {
            (Some(e), Some(i)) => {
                let encoder = DualEncoder::load(e).with_context(|| format!("reading encoder {}", e.display()))?;
                let index = EntityIndex::load(i).with_context(|| format!("reading index {}", i.display()))?;
                if index.dim() != encoder.dim() {
                    bail!(guidedel::Error::DimMismatch {
                        left: encoder.dim(),
                        right: index.dim()
                    });
                }
                Some((encoder, index))
            }
            _ => None,
        };
        let trie = match (&scorer, modes.contains(&Mode::Vanilla)) {
            (Some((_, vocab)), true) => Some(build_entity_trie(&kb, vocab, &RuleTokenizer)?),
            _ => None,
        };
        Ok(Self {
            kb,
            scorer,
            map,
            dict,
            dense,
            trie,
        })
    }

    fn retriever(&self, s: &Settings) -> Box<dyn EntityRetriever + '_> {
        match &self.dense {
            Some((encoder, index)) => Box::new(DenseRetriever {
                encoder,
                index,
                chunk_len: s.chunk_len,
            }),
            None => {
                log::warn!("no encoder/index given; every knowledge-base entity is a candidate");
                Box::new(FixedRetriever(self.kb.titles().map(String::from).collect()))
            }
        }
    }

    fn linker<'a>(&'a self, mode: Mode, retriever: &'a dyn EntityRetriever, s: &Settings) -> anyhow::Result<Box<dyn Linker + 'a>> {
        let (scorer, vocab) = self.scorer.as_ref().expect("scorer loaded for decoding modes");
        Ok(match mode {
            Mode::Guided => Box::new(GuidedLinker {
                scorer,
                vocab,
                tokenizer: &RuleTokenizer,
                spans: SpanSource {
                    map: self.map.as_ref().expect("map loaded for guided mode"),
                    retriever,
                },
                config: GuidedConfig {
                    mention_start_offset: s.offset,
                    k: s.k,
                },
            }),
            Mode::Vanilla => Box::new(VanillaLinker {
                scorer,
                vocab,
                tokenizer: &RuleTokenizer,
                kb: &self.kb,
                trie: self.trie.as_ref().expect("trie built for vanilla mode"),
                dict: self.dict.as_ref(),
                config: VanillaConfig { beam_size: s.beam_size },
            }),
            Mode::IclPrompt => bail!(guidedel::Error::Config("icl-prompt mode has no decoder to benchmark".into())),
        })
    }
}

/// Links `docs` with up to `parallelism` threads, keeping input order.
fn link_all(linker: &dyn Linker, docs: &[&Document], parallelism: usize) -> guidedel::Result<Vec<LinkResult>> {
    if parallelism <= 1 {
        return docs.iter().map(|d| linker.link(d)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| guidedel::Error::Config(format!("cannot start thread pool: {e}")))?;
    pool.install(|| docs.par_iter().map(|d| linker.link(d)).collect())
}

#[derive(Serialize)]
struct LinkRecord<'a> {
    doc_id: &'a str,
    text: &'a str,
    annotations: Vec<CharAnnotation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lm_forwards: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<IclDiagnostics>,
}

fn parse_mode(name: &str) -> anyhow::Result<Mode> {
    Mode::from_str(name, true).map_err(|_| guidedel::Error::Config(format!("unknown mode {name:?}")).into())
}

pub fn link(args: &LinkArgs, config: &Config) -> anyhow::Result<()> {
    let mode = match (args.mode, &config.link.mode) {
        (Some(m), _) => m,
        (None, Some(name)) => parse_mode(name)?,
        (None, None) => Mode::Guided,
    };
    let s = settings(&args.decode, config)?;
    let res = Resources::load(&args.decode, &[mode])?;
    let corpus = dataset(&args.input)?;
    let retriever = res.retriever(&s);

    if mode == Mode::IclPrompt {
        return link_icl(args, config, &res, retriever.as_ref(), &s, &corpus);
    }
    let linker = res.linker(mode, retriever.as_ref(), &s)?;
    let docs: Vec<&Document> = corpus.iter().map(|ad| &ad.doc).collect();
    let results = link_all(linker.as_ref(), &docs, s.parallelism)?;
    let (forwards, mentions) = results
        .iter()
        .fold((0u64, 0usize), |(f, m), r| (f + r.lm_forwards, m + r.annotations.len()));
    write_jsonl(
        &args.output,
        docs.iter().zip(results).map(|(d, r)| LinkRecord {
            doc_id: &d.doc_id,
            text: &d.text,
            annotations: char_annotations(d, &r.annotations),
            lm_forwards: Some(r.lm_forwards),
            generated: Some(r.generated),
            wall_time_ms: args.record_timing.then_some(r.wall_time.as_secs_f64() * 1e3),
            diagnostics: None,
        }),
    )?;
    print_json(&serde_json::json!({
        "mode": linker.name(),
        "docs": docs.len(),
        "annotations": mentions,
        "lm_forwards": forwards,
    }))
}

fn link_icl(
    args: &LinkArgs,
    config: &Config,
    res: &Resources,
    retriever: &dyn EntityRetriever,
    s: &Settings,
    corpus: &[AnnotatedDocument],
) -> anyhow::Result<()> {
    let exemplar = match &args.exemplar {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading exemplar {}", p.display()))?;
            let ex: IclExemplar = serde_json::from_str(&text).map_err(guidedel::Error::from)?;
            ex.validate()?;
            ex
        }
        None => IclExemplar::default(),
    };
    let mut requests = Vec::with_capacity(corpus.len());
    for ad in corpus {
        let entities = retriever.retrieve(&ad.doc, s.k)?;
        requests.push(CompletionRequest {
            doc_id: ad.doc.doc_id.clone(),
            template: TEMPLATE_VERSION.to_string(),
            prompt: build_icl_prompt(&ad.doc, &entities, &exemplar),
            params: GenerationParams::default(),
        });
    }
    let Some(path) = &args.responses else {
        write_jsonl(&args.output, &requests)?;
        return print_json(&serde_json::json!({ "mode": "icl-prompt", "prompts": requests.len() }));
    };
    let completion = ReplayCompletion::load(path).with_context(|| format!("reading responses {}", path.display()))?;
    let opts = IclParseOptions {
        context_window: args
            .context_window
            .or(config.link.context_window)
            .unwrap_or(IclParseOptions::default().context_window),
    };
    let mut totals = IclDiagnostics::default();
    let mut records = Vec::with_capacity(corpus.len());
    for (ad, req) in corpus.iter().zip(&requests) {
        let started = Instant::now();
        let parsed = parse_icl_response(&completion.complete(req)?, &ad.doc, &res.kb, opts);
        let d = &parsed.diagnostics;
        totals.lines += d.lines;
        totals.accepted += d.accepted;
        totals.malformed += d.malformed;
        totals.out_of_kb += d.out_of_kb;
        totals.unlocated += d.unlocated;
        totals.overlapping += d.overlapping;
        records.push(LinkRecord {
            doc_id: &ad.doc.doc_id,
            text: &ad.doc.text,
            annotations: char_annotations(&ad.doc, &parsed.annotations),
            lm_forwards: None,
            generated: None,
            wall_time_ms: args.record_timing.then(|| started.elapsed().as_secs_f64() * 1e3),
            diagnostics: Some(parsed.diagnostics),
        });
    }
    write_jsonl(&args.output, records)?;
    print_json(&serde_json::json!({ "mode": "icl-prompt", "docs": corpus.len(), "diagnostics": totals }))
}

pub fn bench(args: &BenchArgs, config: &Config, seed: u64) -> anyhow::Result<()> {
    let modes = match (&args.modes, &config.bench.modes) {
        (Some(m), _) => m.clone(),
        (None, Some(names)) => names.iter().map(|n| parse_mode(n)).collect::<anyhow::Result<_>>()?,
        (None, None) => vec![Mode::Guided, Mode::Vanilla],
    };
    let repeats = args.repeats.or(config.bench.repeats).unwrap_or(10);
    let s = settings(&args.decode, config)?;
    let res = Resources::load(&args.decode, &modes)?;
    let gold = dataset(&args.input)?;
    let retriever = res.retriever(&s);
    let mut rows = Vec::with_capacity(modes.len());
    for &mode in &modes {
        let linker = res.linker(mode, retriever.as_ref(), &s)?;
        rows.push(benchmark_with(linker.as_ref(), &gold, &res.kb, repeats, seed, &|l, docs| {
            link_all(l, docs, s.parallelism)
        })?);
    }
    print!("{}", format_table(&rows));
    if let Some(path) = &args.output {
        write_json(path, &rows)?;
    }
    Ok(())
}

fn eval_table(r: &EvalReport) -> String {
    format!(
        "{:<10} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6}\n{:<10} {:>8.4} {:>8.4} {:>8.4} {:>6} {:>6} {:>6}\n",
        "", "P", "R", "F1", "tp", "fp", "fn", "micro", r.precision, r.recall, r.f1, r.tp, r.fp, r.fn_
    )
}

pub fn eval(args: &EvalArgs, config: &Config) -> anyhow::Result<()> {
    let kb = knowledge_base(&args.kb)?;
    let pred = dataset(&args.pred)?;
    let gold = dataset(&args.gold)?;
    let report = micro_f1_inkb(&pred, &gold, &kb);
    print!("{}", eval_table(&report));
    if let Some(path) = &args.output {
        write_json(path, &report)?;
    }
    let min_f1 = args.min_f1.or(config.eval.min_f1).unwrap_or(0.0);
    if report.f1 < min_f1 {
        return Err(ThresholdError { f1: report.f1, min_f1 }.into());
    }
    Ok(())
}

pub fn synth(args: &SynthArgs, seed: u64) -> anyhow::Result<()> {
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let cfg = SyntheticConfig {
        entities: args.entities,
        families: args.families,
        docs: args.docs,
        seed,
        ..Default::default()
    };
    if cfg.entities == 0 || cfg.families == 0 {
        bail!(guidedel::Error::Config("entities and families must be positive".into()));
    }
    let train = SyntheticCorpus::generate(&cfg);
    let test = SyntheticCorpus::generate(&SyntheticConfig {
        docs: args.test_docs,
        seed: seed.wrapping_add(1),
        ..cfg
    });
    let test_docs: Vec<AnnotatedDocument> = test
        .docs
        .into_iter()
        .map(|mut ad| {
            ad.doc.doc_id = format!("test-{}", ad.doc.doc_id);
            ad
        })
        .collect();
    let records: Vec<EntityRecord> = train.kb.iter().cloned().collect();
    KnowledgeBase::build(records)?.write(&args.out_dir.join("kb.jsonl"))?;
    write_dataset(&args.out_dir.join("train.jsonl"), &train.docs)?;
    write_dataset(&args.out_dir.join("test.jsonl"), &test_docs)?;
    print_json(&serde_json::json!({
        "entities": train.kb.len(),
        "train_docs": train.docs.len(),
        "test_docs": test_docs.len(),
    }))
}
