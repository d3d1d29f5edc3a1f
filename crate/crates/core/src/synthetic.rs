//! Seeded synthetic corpora for tests, benchmarks and demos.
//!
//! Entity names are made-up capitalized words and filler text uses a fixed
//! list of lower-case English words, so the two vocabularies never collide
//! even after case folding.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kb::{DictOptions, EntityRecord, EntityToMentionMap, KnowledgeBase, MentionDict, Stopwords};
use crate::markup::{AnnotatedDocument, Annotation, Document, RuleTokenizer, Tokenizer, Vocab};

const FILLER: &[&str] = &[
    "river", "market", "after", "quiet", "morning", "people", "small", "green", "house", "during", "winter", "report",
    "early", "paper", "city", "table", "music", "later", "water", "north", "season", "group", "local", "light",
    "second", "story", "field", "simple", "public", "travel", "garden", "under", "again", "bright", "found", "across",
    "several", "window", "letter", "spoke", "visit", "known", "behind", "rather", "built", "often", "street", "sound",
];

const PUNCT: &[&str] = &[",", ";", ":"];

const SYLLABLES: &[&str] = &[
    "ka", "zo", "vel", "mir", "tau", "qu", "rix", "bel", "dor", "fen", "gul", "hax", "jor", "lum", "nex", "pra",
    "sov", "tir", "ul", "wen", "yor", "zed", "cra", "ith",
];

/// Distinct made-up word for each index (capitalized when `upper`).
pub fn pseudo_word(index: usize, salt: usize, upper: bool) -> String {
    let mut n = index * 7 + salt;
    let mut w = String::new();
    for _ in 0..3 {
        w.push_str(SYLLABLES[n % SYLLABLES.len()]);
        n /= SYLLABLES.len();
    }
    w.push_str(&format!("{index}"));
    if upper {
        let mut c = w.chars();
        let first = c.next().unwrap().to_ascii_uppercase();
        format!("{first}{}", c.as_str())
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub entities: usize,
    /// Entities in the same family share the first word of their title,
    /// which is also a possible (ambiguous) mention.
    pub families: usize,
    pub docs: usize,
    pub min_mentions: usize,
    pub max_mentions: usize,
    pub min_filler: usize,
    pub max_filler: usize,
    /// Probability of mentioning an entity by one title word rather than by
    /// its full title.
    pub short_mention_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            entities: 60,
            families: 20,
            docs: 200,
            min_mentions: 2,
            max_mentions: 4,
            min_filler: 4,
            max_filler: 10,
            short_mention_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub kb: KnowledgeBase,
    pub docs: Vec<AnnotatedDocument>,
    pub dict: MentionDict,
    pub map: EntityToMentionMap,
}

impl SyntheticCorpus {
    pub fn generate(cfg: &SyntheticConfig) -> Self {
        assert!(cfg.entities > 0 && cfg.families > 0, "need at least one entity and family");
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let family_words: Vec<String> = (0..cfg.families).map(|f| pseudo_word(f, 3, true)).collect();
        let records: Vec<EntityRecord> = (0..cfg.entities)
            .map(|i| {
                let fam = &family_words[i % cfg.families];
                let own = pseudo_word(i, 11, true);
                let desc: Vec<String> = (0..4).map(|k| pseudo_word(i * 4 + k, 5, false)).collect();
                let mut r = EntityRecord::new(format!("{fam} {own}"), format!("{fam} {own} {}", desc.join(" ")));
                r.aliases = vec![fam.clone(), own];
                r
            })
            .collect();
        let kb = KnowledgeBase::build(records).expect("generated titles are unique");

        let docs = (0..cfg.docs)
            .map(|d| {
                let n_mentions = rng.gen_range(cfg.min_mentions..=cfg.max_mentions);
                let mut text = String::new();
                let mut spans: Vec<(usize, usize, String)> = Vec::new();
                for m in 0..=n_mentions {
                    let n_fill = rng.gen_range(cfg.min_filler..=cfg.max_filler);
                    for w in 0..n_fill {
                        if !text.is_empty() {
                            text.push(' ');
                        }
                        text.push_str(FILLER.choose(&mut rng).unwrap());
                        if w + 1 < n_fill && rng.gen_bool(0.1) {
                            text.push_str(PUNCT.choose(&mut rng).unwrap());
                        }
                    }
                    if m == n_mentions {
                        break;
                    }
                    let e = kb.get(rng.gen_range(0..kb.len()));
                    let surface = if rng.gen_bool(cfg.short_mention_rate) {
                        e.aliases.choose(&mut rng).unwrap().clone()
                    } else {
                        e.title.clone()
                    };
                    if !text.is_empty() {
                        text.push(' ');
                    }
                    spans.push((text.len(), text.len() + surface.len(), e.title.clone()));
                    text.push_str(&surface);
                }
                text.push('.');
                let doc = Document::new(format!("doc{d:04}"), text, &RuleTokenizer);
                let annotations = spans
                    .into_iter()
                    .map(|(s, e, ent)| {
                        let (ts, te) = doc.char_to_token_span(s, e).expect("mentions are token aligned");
                        Annotation::new(ts, te, ent)
                    })
                    .collect();
                AnnotatedDocument { doc, annotations }
            })
            .collect::<Vec<_>>();

        let dict = MentionDict::build(&docs, &kb, DictOptions::default()).expect("all gold entities are in the KB");
        let map = EntityToMentionMap::invert(&dict, &Stopwords::default());
        Self { kb, docs, dict, map }
    }

    /// Vocabulary covering every document and every title, with titles
    /// tokenized on their own.
    pub fn vocab(&self) -> Vocab {
        build_vocab(&self.docs, &self.kb, &RuleTokenizer)
    }
}

/// Vocabulary over document texts and entity titles.
pub fn build_vocab(docs: &[AnnotatedDocument], kb: &KnowledgeBase, tokenizer: &dyn Tokenizer) -> Vocab {
    let mut v = Vocab::new();
    for d in docs {
        v.extend_from_text(&d.doc.text, tokenizer);
    }
    for t in kb.titles() {
        v.extend_from_text(t, tokenizer);
    }
    v
}

/// A corpus on which a bag-of-words retriever can separate entities
/// perfectly: each entity owns a disjoint set of words, and each document
/// mentions one entity surrounded by its own words and some shared filler.
pub fn separable_corpus(entities: usize, docs_per_entity: usize, seed: u64) -> (KnowledgeBase, Vec<AnnotatedDocument>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let own_words: Vec<Vec<String>> = (0..entities)
        .map(|i| (0..8).map(|k| pseudo_word(i * 8 + k, 17, false)).collect())
        .collect();
    let kb = KnowledgeBase::build((0..entities).map(|i| {
        EntityRecord::new(pseudo_word(i, 29, true), own_words[i].join(" "))
    }))
    .expect("unique titles");
    let mut docs = Vec::new();
    for (i, words_i) in own_words.iter().enumerate() {
        for j in 0..docs_per_entity {
            let title = &kb.get(i).title;
            let mut words: Vec<String> = Vec::new();
            for _ in 0..12 {
                if rng.gen_bool(0.6) {
                    words.push(words_i.choose(&mut rng).unwrap().clone());
                } else {
                    words.push(FILLER.choose(&mut rng).unwrap().to_string());
                }
            }
            let at = rng.gen_range(0..=words.len());
            words.insert(at, title.clone());
            let text = words.join(" ");
            let doc = Document::new(format!("sep{i:03}_{j}"), text, &RuleTokenizer);
            docs.push(AnnotatedDocument {
                annotations: vec![Annotation::new(at, at + 1, title.clone())],
                doc,
            });
        }
    }
    docs.shuffle(&mut rng);
    (kb, docs)
}
