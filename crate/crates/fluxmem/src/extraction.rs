//! Information-extraction providers: entities, relation triples, topic
//! labels, summaries, and durable-fact drafts.
//!
//! The rule-based implementation is pure and deterministic; the HTTP
//! implementation drives an OpenAI-compatible chat endpoint with the
//! shipped prompt templates (`FLUXMEM_LLM_BASE_URL`, `FLUXMEM_LLM_KEY`,
//! `FLUXMEM_LLM_MODEL`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ltsm::EntryKind;
use crate::page::Page;
use crate::text::{first_sentence, split_sentences, tokenize};

/// Env vars selecting the LLM-backed extractor/responder.
pub const LLM_URL_VAR: &str = "FLUXMEM_LLM_BASE_URL";
pub const LLM_KEY_VAR: &str = "FLUXMEM_LLM_KEY";
pub const LLM_MODEL_VAR: &str = "FLUXMEM_LLM_MODEL";

/// Version tag of the shipped prompt templates.
pub const PROMPT_VERSION: &str = "v1";

pub const RESPONSE_PROMPT: &str = include_str!("../assets/prompts/response_v1.txt");
pub const META_INFO_PROMPT: &str = include_str!("../assets/prompts/meta_info_v1.txt");
pub const ENTITY_RELATION_PROMPT: &str =
    include_str!("../assets/prompts/entity_relation_v1.txt");
pub const HIERARCHY_PROMPT: &str = include_str!("../assets/prompts/hierarchy_v1.txt");
pub const PROCEDURAL_PROMPT: &str = include_str!("../assets/prompts/procedural_v1.txt");

/// Fixed 50-word stopword list. Part of the deterministic contract:
/// changing it changes summaries, labels and entity runs everywhere.
pub const STOPWORDS: [&str; 50] = [
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "can", "do", "for", "from", "has",
    "have", "he", "her", "his", "how", "i", "if", "in", "is", "it", "my", "no", "not", "of",
    "on", "or", "she", "so", "that", "the", "their", "there", "they", "this", "to", "was",
    "we", "were", "what", "when", "where", "which", "who", "will", "with", "you",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

/// A durable-knowledge draft produced from an episodic session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactDraft {
    pub kind: EntryKind,
    pub content: String,
    pub confidence: f64,
}

/// Extraction results bundled for callers that want everything at once.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Extraction {
    pub entities: Vec<String>,
    pub relations: Vec<(String, String, String)>,
    pub topic_label: String,
    pub summary: String,
}

pub trait Extractor: Send + Sync {
    /// Lowercased, deduplicated, sorted entity mentions.
    fn extract_entities(&self, text: &str) -> Result<Vec<String>>;
    /// (head, relation, tail) triples; endpoints always appear among
    /// `extract_entities` of the same text.
    fn extract_relations(&self, text: &str) -> Result<Vec<(String, String, String)>>;
    fn summarize(&self, pages: &[Page]) -> Result<String>;
    fn topic_label(&self, pages: &[Page]) -> Result<String>;
    /// Durable facts/profiles for semantic consolidation.
    fn extract_facts(&self, summary: &str, pages: &[Page]) -> Result<Vec<FactDraft>>;
}

/// Deterministic rule-based extractor.
#[derive(Debug, Clone, Default)]
pub struct RuleBasedExtractor;

fn strip_word(word: &str) -> &str {
    word.trim_matches(|c: char| !c.is_alphanumeric())
}

fn is_capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(|c| c.is_uppercase())
}

/// Entity runs per sentence, in order of appearance. A run is a maximal
/// sequence of capitalized words; a sentence-initial stopword ("The",
/// "I", "Where") never starts one.
fn entity_runs(sentence: &str) -> Vec<String> {
    let words: Vec<&str> = sentence.split_whitespace().collect();
    let mut runs = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for (idx, raw) in words.iter().enumerate() {
        let word = strip_word(raw);
        let mut keep = !word.is_empty() && is_capitalized(word);
        if keep && idx == 0 && current.is_empty() && is_stopword(&word.to_lowercase()) {
            keep = false;
        }
        if keep {
            current.push(word.to_lowercase());
        } else if !current.is_empty() {
            runs.push(current.join(" "));
            current.clear();
        }
    }
    if !current.is_empty() {
        runs.push(current.join(" "));
    }
    runs
}

impl Extractor for RuleBasedExtractor {
    fn extract_entities(&self, text: &str) -> Result<Vec<String>> {
        let mut entities: Vec<String> = split_sentences(text)
            .iter()
            .flat_map(|s| entity_runs(s))
            .collect();
        entities.sort();
        entities.dedup();
        Ok(entities)
    }

    fn extract_relations(&self, text: &str) -> Result<Vec<(String, String, String)>> {
        let mut triples = Vec::new();
        for sentence in split_sentences(text) {
            let mut seen = Vec::new();
            for entity in entity_runs(sentence) {
                if !seen.contains(&entity) {
                    seen.push(entity);
                }
            }
            if seen.len() >= 2 {
                let head = seen[0].clone();
                for tail in &seen[1..] {
                    triples.push((head.clone(), "related_to".to_string(), tail.clone()));
                }
            }
        }
        Ok(triples)
    }

    fn summarize(&self, pages: &[Page]) -> Result<String> {
        if pages.is_empty() {
            return Err(Error::EmptyInput("pages"));
        }
        let lead = first_sentence(&pages[0].user_text);
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for page in pages {
            for token in tokenize(&page.text()) {
                if !is_stopword(&token) {
                    *counts.entry(token).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut parts = Vec::new();
        if !lead.is_empty() {
            parts.push(lead);
        }
        parts.extend(ranked.into_iter().take(3).map(|(t, _)| t));
        Ok(parts.join(" "))
    }

    fn topic_label(&self, pages: &[Page]) -> Result<String> {
        if pages.is_empty() {
            return Err(Error::EmptyInput("pages"));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for page in pages {
            for token in tokenize(&page.text()) {
                if !is_stopword(&token) {
                    *counts.entry(token).or_insert(0) += 1;
                }
            }
        }
        Ok(counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(t, _)| t)
            .unwrap_or_else(|| "general".to_string()))
    }

    fn extract_facts(&self, summary: &str, pages: &[Page]) -> Result<Vec<FactDraft>> {
        let mut drafts = Vec::new();
        for page in pages {
            for sentence in split_sentences(&page.user_text) {
                let lower = sentence.to_lowercase();
                let kind = if lower.starts_with("i am ")
                    || lower.starts_with("i'm ")
                    || lower.starts_with("my name")
                {
                    Some(EntryKind::UserProfile)
                } else if lower.starts_with("i ") || lower.starts_with("my ") {
                    Some(EntryKind::UserFact)
                } else {
                    None
                };
                if let Some(kind) = kind {
                    drafts.push(FactDraft {
                        kind,
                        content: sentence.to_string(),
                        confidence: 1.0,
                    });
                }
            }
        }
        if !summary.trim().is_empty() {
            drafts.push(FactDraft {
                kind: EntryKind::GeneralKnowledge,
                content: summary.trim().to_string(),
                confidence: 0.5,
            });
        }
        drafts.dedup_by(|a, b| a.kind == b.kind && a.content == b.content);
        Ok(drafts)
    }
}

fn render_pages(pages: &[Page]) -> String {
    pages
        .iter()
        .map(|p| format!("USER: {}\nAGENT: {}", p.user_text, p.agent_text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One OpenAI-compatible chat-completions call at temperature 0.
pub fn chat_completion(
    base_url: &str,
    key: Option<&str>,
    model: &str,
    prompt: &str,
) -> Result<String> {
    let url = format!("{}/chat/completions", base_url.trim_end_matches('/'));
    let body = serde_json::json!({
        "model": model,
        "temperature": 0,
        "messages": [{"role": "user", "content": prompt}],
    });
    let mut request = ureq::post(&url);
    if let Some(key) = key {
        request = request.header("authorization", format!("Bearer {key}"));
    }
    let mut response = request
        .send_json(&body)
        .map_err(|e| Error::ProviderUnreachable(format!("{url}: {e}")))?;
    let payload: serde_json::Value = response
        .body_mut()
        .read_json()
        .map_err(|e| Error::ProviderUnreachable(format!("{url}: {e}")))?;
    payload
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| Error::MalformedResponse {
            reason: "missing choices[0].message.content".into(),
            payload: payload.to_string(),
        })
}

/// LLM-backed extractor speaking the OpenAI chat-completions protocol
/// at temperature 0.
pub struct HttpExtractor {
    base_url: String,
    key: Option<String>,
    model: String,
}

impl HttpExtractor {
    pub fn new(base_url: impl Into<String>, key: Option<String>, model: impl Into<String>) -> Self {
        Self { base_url: base_url.into(), key, model: model.into() }
    }

    pub fn from_env() -> Option<Self> {
        let base_url = std::env::var(LLM_URL_VAR).ok().filter(|v| !v.is_empty())?;
        let key = std::env::var(LLM_KEY_VAR).ok();
        let model = std::env::var(LLM_MODEL_VAR).unwrap_or_else(|_| "gpt-4.1".to_string());
        Some(Self::new(base_url, key, model))
    }

    /// One chat call; returns the assistant message content.
    pub fn chat(&self, prompt: &str) -> Result<String> {
        chat_completion(&self.base_url, self.key.as_deref(), &self.model, prompt)
    }

    fn parsed(&self, prompt: &str) -> Result<serde_json::Value> {
        let content = self.chat(prompt)?;
        serde_json::from_str(content.trim()).map_err(|e| Error::MalformedResponse {
            reason: format!("expected JSON object: {e}"),
            payload: content,
        })
    }
}

impl Extractor for HttpExtractor {
    fn extract_entities(&self, text: &str) -> Result<Vec<String>> {
        let prompt = ENTITY_RELATION_PROMPT.replace("{text}", text);
        let value = self.parsed(&prompt)?;
        let mut entities: Vec<String> = value
            .get("entities")
            .and_then(|v| v.as_array())
            .map(|items| {
                items
                    .iter()
                    .filter_map(|v| v.as_str())
                    .map(|s| s.to_lowercase())
                    .collect()
            })
            .ok_or_else(|| Error::MalformedResponse {
                reason: "missing entities array".into(),
                payload: value.to_string(),
            })?;
        entities.sort();
        entities.dedup();
        Ok(entities)
    }

    fn extract_relations(&self, text: &str) -> Result<Vec<(String, String, String)>> {
        let prompt = ENTITY_RELATION_PROMPT.replace("{text}", text);
        let value = self.parsed(&prompt)?;
        let raw = value.get("relations").and_then(|v| v.as_array()).ok_or_else(|| {
            Error::MalformedResponse {
                reason: "missing relations array".into(),
                payload: value.to_string(),
            }
        })?;
        let mut triples = Vec::new();
        for item in raw {
            let parts: Option<Vec<&str>> =
                item.as_array().map(|a| a.iter().filter_map(|v| v.as_str()).collect());
            match parts.as_deref() {
                Some([head, rel, tail]) => triples.push((
                    head.to_lowercase(),
                    rel.to_string(),
                    tail.to_lowercase(),
                )),
                _ => {
                    return Err(Error::MalformedResponse {
                        reason: "relation triple must be [head, relation, tail]".into(),
                        payload: item.to_string(),
                    })
                }
            }
        }
        Ok(triples)
    }

    fn summarize(&self, pages: &[Page]) -> Result<String> {
        if pages.is_empty() {
            return Err(Error::EmptyInput("pages"));
        }
        let prompt = META_INFO_PROMPT.replace("{pages}", &render_pages(pages));
        let value = self.parsed(&prompt)?;
        value
            .get("summary")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| Error::MalformedResponse {
                reason: "missing summary".into(),
                payload: value.to_string(),
            })
    }

    fn topic_label(&self, pages: &[Page]) -> Result<String> {
        if pages.is_empty() {
            return Err(Error::EmptyInput("pages"));
        }
        let prompt = HIERARCHY_PROMPT.replace("{pages}", &render_pages(pages));
        let value = self.parsed(&prompt)?;
        value
            .get("topic")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| Error::MalformedResponse {
                reason: "missing topic".into(),
                payload: value.to_string(),
            })
    }

    fn extract_facts(&self, _summary: &str, pages: &[Page]) -> Result<Vec<FactDraft>> {
        let prompt = PROCEDURAL_PROMPT.replace("{pages}", &render_pages(pages));
        let value = self.parsed(&prompt)?;
        let raw = value.get("facts").and_then(|v| v.as_array()).ok_or_else(|| {
            Error::MalformedResponse {
                reason: "missing facts array".into(),
                payload: value.to_string(),
            }
        })?;
        let mut drafts = Vec::new();
        for item in raw {
            let kind = match item.get("kind").and_then(|v| v.as_str()) {
                Some("user_profile") => EntryKind::UserProfile,
                Some("user_fact") => EntryKind::UserFact,
                Some("general_knowledge") => EntryKind::GeneralKnowledge,
                Some("strategy") => EntryKind::Strategy,
                other => {
                    return Err(Error::MalformedResponse {
                        reason: format!("unknown fact kind {other:?}"),
                        payload: item.to_string(),
                    })
                }
            };
            let content = item
                .get("content")
                .and_then(|v| v.as_str())
                .ok_or_else(|| Error::MalformedResponse {
                    reason: "fact missing content".into(),
                    payload: item.to_string(),
                })?
                .to_string();
            let confidence =
                item.get("confidence").and_then(|v| v.as_f64()).unwrap_or(0.5);
            drafts.push(FactDraft { kind, content, confidence: confidence.clamp(0.0, 1.0) });
        }
        Ok(drafts)
    }
}

/// Select the extractor from the environment: LLM-backed when
/// `FLUXMEM_LLM_BASE_URL` is set, otherwise rule-based.
pub fn extractor_from_env() -> Box<dyn Extractor> {
    match HttpExtractor::from_env() {
        Some(extractor) => Box::new(extractor),
        None => Box::new(RuleBasedExtractor),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;
    use crate::page::{make_page, PageIdGen};

    fn pages(texts: &[(&str, &str)]) -> Vec<Page> {
        let embedder = HashEmbedder::new(32);
        let mut ids = PageIdGen::new();
        texts
            .iter()
            .enumerate()
            .map(|(i, (u, a))| make_page(&mut ids, u, a, i as i64, &embedder).unwrap())
            .collect()
    }

    #[test]
    fn entities_from_capitalization() {
        let x = RuleBasedExtractor;
        assert_eq!(
            x.extract_entities("I met Alice in Paris").unwrap(),
            vec!["alice", "paris"]
        );
        assert!(x.extract_entities("").unwrap().is_empty());
        assert!(x.extract_entities("the cat sat").unwrap().is_empty());
    }

    #[test]
    fn multiword_entities_and_initial_stopwords() {
        let x = RuleBasedExtractor;
        assert_eq!(
            x.extract_entities("New York is loud. The Hague is quiet.").unwrap(),
            vec!["hague", "new york"]
        );
        // Sentence-initial "Where" is a stopword, "Alice" is not.
        assert_eq!(x.extract_entities("Where does Alice live?").unwrap(), vec!["alice"]);
        assert_eq!(x.extract_entities("Alice visited Bob").unwrap(), vec!["alice", "bob"]);
    }

    #[test]
    fn relations_pair_first_entity_with_others() {
        let x = RuleBasedExtractor;
        assert_eq!(
            x.extract_relations("Alice visited Bob").unwrap(),
            vec![("alice".into(), "related_to".into(), "bob".into())]
        );
        assert!(x.extract_relations("Alice went home.").unwrap().is_empty());
        // No cross-sentence pairing.
        assert!(x.extract_relations("Alice left. Bob stayed.").unwrap().is_empty());
    }

    #[test]
    fn relation_endpoints_are_entities() {
        let x = RuleBasedExtractor;
        let text = "Alice met Bob at Carol Plaza. Dave waved.";
        let entities = x.extract_entities(text).unwrap();
        for (head, _, tail) in x.extract_relations(text).unwrap() {
            assert!(entities.contains(&head));
            assert!(entities.contains(&tail));
        }
    }

    #[test]
    fn summary_starts_with_first_sentence() {
        let x = RuleBasedExtractor;
        let pages = pages(&[("I love hiking. It clears my head.", "Sounds great")]);
        let summary = x.summarize(&pages).unwrap();
        assert!(summary.starts_with("I love hiking."), "summary: {summary}");
        // Deterministic.
        assert_eq!(summary, x.summarize(&pages).unwrap());
        assert!(matches!(x.summarize(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn topic_label_frequency_and_fallback() {
        let x = RuleBasedExtractor;
        let hiking =
            pages(&[("hiking is fun", "hiking shoes help"), ("more hiking", "yes")]);
        assert_eq!(x.topic_label(&hiking).unwrap(), "hiking");
        let stop = pages(&[("the of and", "a an")]);
        assert_eq!(x.topic_label(&stop).unwrap(), "general");
        let tie = pages(&[("cat dog", "")]);
        assert_eq!(x.topic_label(&tie).unwrap(), "cat");
    }

    #[test]
    fn facts_from_first_person_sentences() {
        let x = RuleBasedExtractor;
        let sydney = pages(&[("I live in Sydney. The weather is great.", "Nice!")]);
        let facts = x.extract_facts("", &sydney).unwrap();
        assert_eq!(facts.len(), 1);
        assert_eq!(facts[0].kind, EntryKind::UserFact);
        assert_eq!(facts[0].content, "I live in Sydney");
        assert_eq!(facts[0].confidence, 1.0);

        let profile = x
            .extract_facts("", &pages(&[("I am a teacher.", "")]))
            .unwrap();
        assert_eq!(profile[0].kind, EntryKind::UserProfile);
    }

    #[test]
    fn summary_becomes_inferred_knowledge() {
        let x = RuleBasedExtractor;
        let sky = pages(&[("The sky is blue.", "Indeed.")]);
        let facts = x.extract_facts("sky color talk", &sky).unwrap();
        assert_eq!(facts.len(), 1);
        assert_eq!(facts[0].kind, EntryKind::GeneralKnowledge);
        assert_eq!(facts[0].confidence, 0.5);
    }

    #[test]
    fn stopword_list_is_fixed() {
        assert_eq!(STOPWORDS.len(), 50);
        assert!(is_stopword("the"));
        assert!(is_stopword("where"));
        assert!(!is_stopword("alice"));
    }

    #[test]
    fn http_extractor_unreachable() {
        let x = HttpExtractor::new("http://127.0.0.1:1", None, "test");
        assert!(matches!(
            x.extract_entities("hello"),
            Err(Error::ProviderUnreachable(_))
        ));
    }
}
