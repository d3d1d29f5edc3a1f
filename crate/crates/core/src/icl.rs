//! In-context-learning prompts for a general-purpose completion model, and
//! parsing of its line-oriented answers back into annotations.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::markup::{read_jsonl, Annotation, Document};

/// Identifier of the shipped instruction template.
pub const TEMPLATE_VERSION: &str = "icl_v1";
const TEMPLATE: &str = include_str!("../templates/icl_v1.txt");

/// One demonstrated prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclPrediction {
    pub mention: String,
    pub context: String,
    pub entity: String,
}

impl IclPrediction {
    pub fn render(&self, number: usize) -> String {
        format!(
            "{number}. mention: \"{}\" | context: \"{}\" | entity: {}",
            self.mention, self.context, self.entity
        )
    }
}

/// The fixed demonstration shown before the query document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclExemplar {
    pub document: String,
    pub entities: Vec<String>,
    pub predictions: Vec<IclPrediction>,
}

impl Default for IclExemplar {
    fn default() -> Self {
        let p = |m: &str, c: &str, e: &str| IclPrediction {
            mention: m.into(),
            context: c.into(),
            entity: e.into(),
        };
        Self {
            document: "Steve became CEO of Apple in 1997, and under his lead Apple released the iPod.".into(),
            entities: ["Steve Jobs", "Apple", "Apple Inc.", "Chief executive officer", "IPod", "Steve Wozniak"]
                .map(String::from)
                .to_vec(),
            predictions: vec![
                p("Steve", "Steve became CEO", "Steve Jobs"),
                p("CEO", "Steve became CEO of Apple", "Chief executive officer"),
                p("Apple", "became CEO of Apple in 1997", "Apple Inc."),
                p("Apple", "his lead Apple released the", "Apple Inc."),
                p("iPod", "released the iPod.", "IPod"),
            ],
        }
    }
}

impl IclExemplar {
    /// Checks that each demonstrated context occurs in the document and
    /// contains its mention, and that each entity is listed.
    pub fn validate(&self) -> Result<()> {
        for p in &self.predictions {
            if !p.context.contains(&p.mention) || !self.document.contains(&p.context) {
                return Err(Error::Config(format!("exemplar prediction {:?} is not grounded in the document", p.mention)));
            }
            if !self.entities.contains(&p.entity) {
                return Err(Error::Config(format!("exemplar entity {:?} is not in the exemplar list", p.entity)));
            }
        }
        Ok(())
    }
}

fn entity_lines(entities: &[String]) -> String {
    entities.iter().map(|e| format!("- {e}")).collect::<Vec<_>>().join("\n")
}

/// Single-pass substitution of `{key}` placeholders; text inserted for one
/// placeholder is never rescanned.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}').and_then(|close| {
            let key = &after[..close];
            values.iter().find(|(k, _)| *k == key).map(|(_, v)| (close, *v))
        }) {
            Some((close, v)) => {
                out.push_str(v);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Instruction, demonstration, candidate list and query document, in that
/// order.
pub fn build_icl_prompt(doc: &Document, entities: &[String], exemplar: &IclExemplar) -> String {
    let demo = exemplar
        .predictions
        .iter()
        .enumerate()
        .map(|(i, p)| p.render(i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    fill(
        TEMPLATE,
        &[
            ("exemplar_entities", &entity_lines(&exemplar.entities)),
            ("exemplar_document", &exemplar.document),
            ("exemplar_predictions", &demo),
            ("entities", &entity_lines(entities)),
            ("document", &doc.text),
        ],
    )
}

/// Generation settings recorded alongside each prompt. They are metadata
/// for whatever client sends the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 300,
            top_p: 1.0,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub doc_id: String,
    pub template: String,
    pub prompt: String,
    pub params: GenerationParams,
}

/// Text-completion backend.
pub trait Completion: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedResponse {
    pub doc_id: String,
    pub response: String,
}

/// Replays canned responses keyed by document id.
#[derive(Debug, Clone, Default)]
pub struct ReplayCompletion {
    responses: HashMap<String, String>,
}

impl ReplayCompletion {
    pub fn new(records: impl IntoIterator<Item = RecordedResponse>) -> Self {
        Self {
            responses: records.into_iter().map(|r| (r.doc_id, r.response)).collect(),
        }
    }

    /// JSON Lines of `{"doc_id": ..., "response": ...}`.
    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(read_jsonl::<RecordedResponse>(path)?))
    }
}

impl Completion for ReplayCompletion {
    fn complete(&self, request: &CompletionRequest) -> Result<String> {
        self.responses
            .get(&request.doc_id)
            .cloned()
            .ok_or_else(|| Error::Config(format!("no recorded response for document {:?}", request.doc_id)))
    }
}

/// Tallies of what happened to each response line.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclDiagnostics {
    pub lines: usize,
    pub accepted: usize,
    pub malformed: usize,
    pub out_of_kb: usize,
    pub unlocated: usize,
    pub overlapping: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IclParse {
    pub annotations: Vec<Annotation>,
    pub diagnostics: IclDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IclParseOptions {
    /// Document tokens compared on each side of a candidate occurrence.
    pub context_window: usize,
}

impl Default for IclParseOptions {
    fn default() -> Self {
        Self { context_window: 3 }
    }
}

fn line_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"^\s*\d+\.\s*mention:\s*"(.*)"\s*\|\s*context:\s*"(.*)"\s*\|\s*entity:\s*(.+?)\s*$"#)
            .expect("valid pattern")
    })
}

fn words(s: &str) -> Vec<String> {
    crate::markup::tokenize(s)
        .into_iter()
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Token-aligned occurrences of `mention` in the document, matched
/// exactly, or case-insensitively when there is no exact match.
fn occurrences(doc: &Document, mention: &str) -> Vec<(usize, usize)> {
    let target = mention.trim();
    if target.is_empty() {
        return Vec::new();
    }
    let mut exact = Vec::new();
    let mut folded = Vec::new();
    let lower = target.to_lowercase();
    for s in 0..doc.len() {
        if doc.surface(s).trim().is_empty() {
            continue;
        }
        for e in s + 1..=doc.len() {
            let text = doc.span_text(s, e);
            if text.len() > 3 * target.len() + 8 {
                break;
            }
            if text == target {
                exact.push((s, e));
            } else if text.to_lowercase() == lower {
                folded.push((s, e));
            }
        }
    }
    if exact.is_empty() {
        folded
    } else {
        exact
    }
}

/// Agreement between the reported context and the `window` document
/// tokens around an occurrence, counted position by position outward from
/// the mention.
fn context_score(doc: &Document, (s, e): (usize, usize), mention: &str, context: &str, window: usize) -> usize {
    let ctx = context.to_lowercase();
    let m = mention.trim().to_lowercase();
    let (left, right) = match ctx.find(&m) {
        Some(i) => (words(&ctx[..i]), words(&ctx[i + m.len()..])),
        None => (words(&ctx), words(&ctx)),
    };
    let doc_word = |i: usize| doc.surface(i).trim().to_lowercase();
    let content_before: Vec<String> = (0..s).rev().map(doc_word).filter(|w| !w.is_empty()).take(window).collect();
    let content_after: Vec<String> = (e..doc.len()).map(doc_word).filter(|w| !w.is_empty()).take(window).collect();
    let l = content_before.iter().zip(left.iter().rev()).filter(|(a, b)| a == b).count();
    let r = content_after.iter().zip(right.iter()).filter(|(a, b)| a == b).count();
    l + r
}

/// Extracts predictions from a model response and grounds them in the
/// document. Lines that do not match the answer format, entities outside
/// the knowledge base, mentions that cannot be located, and predictions
/// overlapping an earlier accepted one are dropped and counted.
pub fn parse_icl_response(response: &str, doc: &Document, kb: &KnowledgeBase, opts: IclParseOptions) -> IclParse {
    let mut diag = IclDiagnostics::default();
    let mut anns: Vec<Annotation> = Vec::new();
    for line in response.lines().filter(|l| !l.trim().is_empty()) {
        diag.lines += 1;
        let Some(cap) = line_pattern().captures(line) else {
            diag.malformed += 1;
            continue;
        };
        let (mention, context, entity) = (&cap[1], &cap[2], cap[3].trim());
        if !kb.contains(entity) {
            diag.out_of_kb += 1;
            continue;
        }
        let occ = occurrences(doc, mention);
        if occ.is_empty() {
            diag.unlocated += 1;
            continue;
        }
        let mut ranked: Vec<((usize, usize), usize)> = occ
            .into_iter()
            .map(|o| (o, context_score(doc, o, mention, context, opts.context_window)))
            .collect();
        // best context agreement first, earlier occurrence on ties
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let free = ranked
            .iter()
            .map(|&(o, _)| o)
            .find(|&(s, e)| !anns.iter().any(|a| a.overlaps(s, e)));
        match free {
            Some((s, e)) => {
                anns.push(Annotation::new(s, e, entity));
                diag.accepted += 1;
            }
            None => diag.overlapping += 1,
        }
    }
    anns.sort();
    IclParse {
        annotations: anns,
        diagnostics: diag,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::EntityRecord;
    use crate::markup::RuleTokenizer;

    fn doc(text: &str) -> Document {
        Document::new("d", text, &RuleTokenizer)
    }

    fn kb() -> KnowledgeBase {
        KnowledgeBase::build(["Apple Inc.", "Apple", "Steve Jobs", "Paris"].map(|t| EntityRecord::new(t, ""))).unwrap()
    }

    #[test]
    fn default_exemplar_is_grounded() {
        IclExemplar::default().validate().unwrap();
        let mut bad = IclExemplar::default();
        bad.predictions[0].context = "not in document Steve".into();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn prompt_layout() {
        let ex = IclExemplar::default();
        let empty = build_icl_prompt(&doc(""), &["Apple".to_string()], &ex);
        assert!(empty.starts_with("## Task\n"));
        assert!(empty.contains(&ex.document));
        assert!(empty.contains("1. mention: \"Steve\" | context: \"Steve became CEO\" | entity: Steve Jobs"));
        let d = doc("Jobs left Apple {entities}.");
        let p = build_icl_prompt(&d, &["Apple".to_string(), "Steve Jobs".to_string()], &ex);
        assert!(p.ends_with("### Document\nJobs left Apple {entities}.\n### Predictions\n"));
        assert!(p.contains("## Input\n### Candidate entities\n- Apple\n- Steve Jobs\n"));
        assert_eq!(p, build_icl_prompt(&d, &["Apple".to_string(), "Steve Jobs".to_string()], &ex));
    }

    #[test]
    fn prompt_grows_linearly() {
        let ex = IclExemplar::default();
        let d = doc("x");
        let list = |n: usize| (0..n).map(|i| format!("Entity{i:04}")).collect::<Vec<_>>();
        let base = build_icl_prompt(&d, &list(0), &ex).len();
        let l10 = build_icl_prompt(&d, &list(10), &ex).len();
        let l20 = build_icl_prompt(&d, &list(20), &ex).len();
        // twelve bytes per entry plus a newline between entries
        assert_eq!((l10 - base, l20 - l10), (10 * 12 + 9, 10 * 13));
    }

    #[test]
    fn unique_mention() {
        let d = doc("Steve Jobs founded a company.");
        let r = parse_icl_response("1. mention: \"Steve Jobs\" | context: \"Steve Jobs founded\" | entity: Steve Jobs", &d, &kb(), Default::default());
        assert_eq!(r.annotations, vec![Annotation::new(0, 2, "Steve Jobs")]);
        assert_eq!(r.diagnostics.accepted, 1);
    }

    #[test]
    fn context_picks_the_right_duplicate() {
        let d = doc("I ate an apple near Apple headquarters, then Apple stock rose.");
        let resp = "1. mention: \"Apple\" | context: \"then Apple stock rose\" | entity: Apple Inc.";
        let r = parse_icl_response(resp, &d, &kb(), Default::default());
        let second = (0..d.len()).filter(|&i| d.surface(i).trim() == "Apple").nth(1).unwrap();
        assert_eq!(r.annotations, vec![Annotation::new(second, second + 1, "Apple Inc.")]);
    }

    #[test]
    fn hallucination_and_junk_counted() {
        let d = doc("Paris is nice.");
        let resp = "Here are the predictions:\n1. mention: \"Paris\" | context: \"Paris is nice\" | entity: Paris Hilton\n2. mention: \"Rome\" | context: \"Rome\" | entity: Paris\n3. mention: \"Paris\" | context: \"Paris is\" | entity: Paris\n4. mention: \"Paris\" | context: \"Paris is\" | entity: Paris";
        let r = parse_icl_response(resp, &d, &kb(), Default::default());
        assert_eq!(r.annotations, vec![Annotation::new(0, 1, "Paris")]);
        assert_eq!(
            r.diagnostics,
            IclDiagnostics {
                lines: 5,
                accepted: 1,
                malformed: 1,
                out_of_kb: 1,
                unlocated: 1,
                overlapping: 1
            }
        );
    }

    proptest::proptest! {
        #[test]
        fn parse_is_sound(
            preds in proptest::collection::vec((0usize..6, 1usize..3, 0usize..6, proptest::bool::ANY), 0..8)
        ) {
            let d = doc("Paris and Apple met Steve Jobs in Paris near Apple Inc. offices");
            let words: Vec<&str> = d.text.split(' ').collect();
            let titles = ["Paris", "Apple", "Steve Jobs", "Apple Inc.", "Rome", "Nope"];
            let resp: String = preds
                .iter()
                .enumerate()
                .map(|(i, &(s, l, e, junk))| {
                    let m = words[s..(s + l).min(words.len())].join(" ");
                    if junk {
                        format!("{}) {m} -> {}\n", i + 1, titles[e])
                    } else {
                        format!("{}. mention: \"{m}\" | context: \"{m}\" | entity: {}\n", i + 1, titles[e])
                    }
                })
                .collect();
            let r = parse_icl_response(&resp, &d, &kb(), Default::default());
            for w in r.annotations.windows(2) {
                proptest::prop_assert!(w[0].end <= w[1].start);
            }
            proptest::prop_assert!(r.annotations.iter().all(|a| kb().contains(&a.entity)));
            let t = &r.diagnostics;
            proptest::prop_assert_eq!(t.accepted + t.malformed + t.out_of_kb + t.unlocated + t.overlapping, t.lines);
        }
    }

    #[test]
    fn replay_stub() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        std::fs::write(&p, "{\"doc_id\":\"d\",\"response\":\"1. mention: \\\"x\\\" | context: \\\"x\\\" | entity: Paris\"}\n").unwrap();
        let c = ReplayCompletion::load(&p).unwrap();
        let req = CompletionRequest {
            doc_id: "d".into(),
            template: TEMPLATE_VERSION.into(),
            prompt: String::new(),
            params: GenerationParams::default(),
        };
        assert!(c.complete(&req).unwrap().contains("Paris"));
        let missing = CompletionRequest { doc_id: "zz".into(), ..req };
        assert!(c.complete(&missing).is_err());
        assert_eq!(GenerationParams::default().max_tokens, 300);
    }
}
