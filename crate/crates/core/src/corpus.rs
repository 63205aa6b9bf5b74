//! Corpus loading and validation.
//!
//! The on-disk format is a single JSON document:
//!
//! ```json
//! {
//!   "documents": [{"doc_id": "1_1ecb", "topic_id": "1", "subtopic_id": "1_ecb",
//!                  "sentences": [["Tara", "Reid", "checked", "into", "rehab"]]}],
//!   "mentions":  [{"doc_id": "1_1ecb", "start": 2, "end": 3, "type": "event",
//!                  "cluster_id": "ACT123"}],
//!   "splits":    {"train": ["1"], "dev": [], "test": []}
//! }
//! ```
//!
//! Token indices are document-global, zero based and inclusive on both ends.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionType {
    Event,
    Entity,
}

impl MentionType {
    pub fn as_str(self) -> &'static str {
        match self {
            MentionType::Event => "event",
            MentionType::Entity => "entity",
        }
    }
}

impl fmt::Display for MentionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which gold mentions a run works on. `All` is joint event + entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionMode {
    Event,
    Entity,
    All,
}

impl MentionMode {
    pub fn admits(self, ty: MentionType) -> bool {
        match self {
            MentionMode::Event => ty == MentionType::Event,
            MentionMode::Entity => ty == MentionType::Entity,
            MentionMode::All => true,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MentionMode::Event => "event",
            MentionMode::Entity => "entity",
            MentionMode::All => "all",
        }
    }
}

impl fmt::Display for MentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MentionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "event" => Ok(MentionMode::Event),
            "entity" => Ok(MentionMode::Entity),
            "all" => Ok(MentionMode::All),
            other => Err(Error::Config(format!("unknown mention mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub doc_id: String,
    pub sentence_index: usize,
    pub token_index: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub topic_id: String,
    pub subtopic_id: String,
    pub tokens: Vec<Token>,
    /// Inclusive token ranges of each sentence.
    sentences: Vec<(usize, usize)>,
}

impl Document {
    /// Builds a document from pre-split sentences. Empty sentences are dropped.
    pub fn new(
        doc_id: impl Into<String>,
        topic_id: impl Into<String>,
        subtopic_id: impl Into<String>,
        sentences: &[Vec<String>],
    ) -> Self {
        let doc_id = doc_id.into();
        let mut tokens = Vec::new();
        let mut bounds = Vec::new();
        for words in sentences.iter().filter(|s| !s.is_empty()) {
            let sentence_index = bounds.len();
            let start = tokens.len();
            for word in words {
                tokens.push(Token {
                    doc_id: doc_id.clone(),
                    sentence_index,
                    token_index: tokens.len(),
                    text: word.clone(),
                });
            }
            bounds.push((start, tokens.len() - 1));
        }
        Document {
            doc_id,
            topic_id: topic_id.into(),
            subtopic_id: subtopic_id.into(),
            tokens,
            sentences: bounds,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn sentences(&self) -> &[(usize, usize)] {
        &self.sentences
    }

    pub fn sentence_of(&self, token: usize) -> Option<usize> {
        self.tokens.get(token).map(|t| t.sentence_index)
    }

    pub fn sentences_as_words(&self) -> Vec<Vec<String>> {
        self.sentences
            .iter()
            .map(|&(s, e)| self.tokens[s..=e].iter().map(|t| t.text.clone()).collect())
            .collect()
    }
}

/// Identity of a mention for matching and scoring: exact `(doc_id, start, end)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MentionKey {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
}

impl MentionKey {
    pub fn new(doc_id: impl Into<String>, start: usize, end: usize) -> Self {
        MentionKey {
            doc_id: doc_id.into(),
            start,
            end,
        }
    }
}

impl fmt::Display for MentionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}..={}]", self.doc_id, self.start, self.end)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldMention {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub mention_type: MentionType,
    pub cluster_id: String,
}

impl GoldMention {
    pub fn key(&self) -> MentionKey {
        MentionKey::new(self.doc_id.clone(), self.start, self.end)
    }

    pub fn cluster(&self) -> ClusterKey {
        ClusterKey {
            mention_type: self.mention_type,
            cluster_id: self.cluster_id.clone(),
        }
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }
}

/// Gold clusters are scoped by mention type so that joint runs keep event and
/// entity chains apart even when their raw ids collide.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClusterKey {
    pub mention_type: MentionType,
    pub cluster_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusSplit {
    pub name: Split,
    pub topic_ids: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct RawDocument {
    doc_id: String,
    topic_id: String,
    subtopic_id: String,
    sentences: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct RawCorpus {
    documents: Vec<RawDocument>,
    mentions: Vec<GoldMention>,
    #[serde(default)]
    splits: BTreeMap<Split, Vec<String>>,
}

/// A validated, immutable corpus.
#[derive(Clone, Debug)]
pub struct Corpus {
    documents: Vec<Document>,
    index: HashMap<String, usize>,
    mentions: Vec<GoldMention>,
    splits: BTreeMap<Split, CorpusSplit>,
    warnings: Vec<String>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.documents == other.documents && self.mentions == other.mentions && self.splits == other.splits
    }
}

impl Corpus {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawCorpus = serde_json::from_str(text)?;
        let documents = raw
            .documents
            .into_iter()
            .map(|d| Document::new(d.doc_id, d.topic_id, d.subtopic_id, &d.sentences))
            .collect();
        Self::new(documents, raw.mentions, raw.splits)
    }

    /// Validates and assembles a corpus.
    pub fn new(
        documents: Vec<Document>,
        mentions: Vec<GoldMention>,
        splits: BTreeMap<Split, Vec<String>>,
    ) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::Validation("corpus has no documents".into()));
        }
        let mut index = HashMap::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            if doc.is_empty() {
                return Err(Error::Validation(format!("document `{}` has no tokens", doc.doc_id)));
            }
            if index.insert(doc.doc_id.clone(), i).is_some() {
                return Err(Error::DuplicateDocument(doc.doc_id.clone()));
            }
        }

        let mut seen = HashSet::new();
        let mut cluster_types: HashMap<&str, MentionType> = HashMap::new();
        let mut cluster_topics: HashMap<ClusterKey, BTreeSet<&str>> = HashMap::new();
        for m in &mentions {
            let doc = index
                .get(&m.doc_id)
                .map(|&i| &documents[i])
                .ok_or_else(|| Error::Validation(format!("mention refers to unknown document `{}`", m.doc_id)))?;
            if m.start > m.end || m.end >= doc.len() {
                return Err(Error::Validation(format!(
                    "mention {}..={} out of range for `{}` ({} tokens)",
                    m.start,
                    m.end,
                    m.doc_id,
                    doc.len()
                )));
            }
            if doc.sentence_of(m.start) != doc.sentence_of(m.end) {
                return Err(Error::Validation(format!(
                    "mention {}..={} in `{}` crosses a sentence boundary",
                    m.start, m.end, m.doc_id
                )));
            }
            if !seen.insert((m.key(), m.mention_type)) {
                return Err(Error::Validation(format!(
                    "duplicate {} mention {}",
                    m.mention_type,
                    m.key()
                )));
            }
            match cluster_types.get(m.cluster_id.as_str()) {
                Some(&ty) if ty != m.mention_type => {
                    return Err(Error::Validation(format!(
                        "cluster `{}` mixes {} and {} mentions",
                        m.cluster_id, ty, m.mention_type
                    )))
                }
                _ => {
                    cluster_types.insert(&m.cluster_id, m.mention_type);
                }
            }
            cluster_topics
                .entry(m.cluster())
                .or_default()
                .insert(doc.topic_id.as_str());
        }

        let mut warnings = Vec::new();
        let mut reused: Vec<_> = cluster_topics
            .iter()
            .filter(|(_, topics)| topics.len() > 1)
            .map(|(k, topics)| (k.clone(), topics.len()))
            .collect();
        reused.sort();
        for (k, n) in reused {
            let msg = format!(
                "{} cluster `{}` is reused across {} topics",
                k.mention_type, k.cluster_id, n
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }

        let known_topics: BTreeSet<&str> = documents.iter().map(|d| d.topic_id.as_str()).collect();
        let mut owner: HashMap<String, Split> = HashMap::new();
        let mut out_splits = BTreeMap::new();
        for (name, topics) in splits {
            let mut set = BTreeSet::new();
            for t in topics {
                if !known_topics.contains(t.as_str()) {
                    return Err(Error::Validation(format!("split {name} names unknown topic `{t}`")));
                }
                if let Some(prev) = owner.insert(t.clone(), name) {
                    if prev != name {
                        return Err(Error::Validation(format!(
                            "topic `{t}` appears in both {prev} and {name}"
                        )));
                    }
                }
                set.insert(t);
            }
            out_splits.insert(name, CorpusSplit { name, topic_ids: set });
        }

        Ok(Corpus {
            documents,
            index,
            mentions,
            splits: out_splits,
            warnings,
        })
    }

    pub fn to_json_string(&self) -> String {
        let raw = RawCorpus {
            documents: self
                .documents
                .iter()
                .map(|d| RawDocument {
                    doc_id: d.doc_id.clone(),
                    topic_id: d.topic_id.clone(),
                    subtopic_id: d.subtopic_id.clone(),
                    sentences: d.sentences_as_words(),
                })
                .collect(),
            mentions: self.mentions.clone(),
            splits: self
                .splits
                .iter()
                .map(|(k, s)| (*k, s.topic_ids.iter().cloned().collect()))
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("corpus serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.index.get(doc_id).map(|&i| &self.documents[i])
    }

    /// Position of a document in corpus order; used for canonical pair ordering.
    pub fn document_index(&self, doc_id: &str) -> Option<usize> {
        self.index.get(doc_id).copied()
    }

    pub fn mentions(&self) -> &[GoldMention] {
        &self.mentions
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn split(&self, name: Split) -> Option<&CorpusSplit> {
        self.splits.get(&name)
    }

    pub fn topics(&self) -> BTreeSet<&str> {
        self.documents.iter().map(|d| d.topic_id.as_str()).collect()
    }

    /// Documents of a split in corpus order. A missing split yields nothing.
    pub fn split_documents(&self, name: Split) -> Vec<&Document> {
        match self.splits.get(&name) {
            Some(split) => self
                .documents
                .iter()
                .filter(|d| split.topic_ids.contains(&d.topic_id))
                .collect(),
            None => Vec::new(),
        }
    }

    /// Gold mentions of the requested type(s).
    ///
    /// In `All` mode a span annotated as both an event and an entity is kept
    /// once, as the event, so mention identities stay unique.
    pub fn select_mentions(&self, mode: MentionMode) -> MentionView<'_> {
        let mut mentions: Vec<&GoldMention> = self.mentions.iter().filter(|m| mode.admits(m.mention_type)).collect();
        if mode == MentionMode::All {
            let events: HashSet<MentionKey> = mentions
                .iter()
                .filter(|m| m.mention_type == MentionType::Event)
                .map(|m| m.key())
                .collect();
            mentions.retain(|m| m.mention_type == MentionType::Event || !events.contains(&m.key()));
        }
        MentionView {
            corpus: self,
            mode,
            mentions,
        }
    }
}

/// Gold mentions of a corpus filtered by type and, optionally, by documents.
#[derive(Clone, Debug)]
pub struct MentionView<'a> {
    corpus: &'a Corpus,
    mode: MentionMode,
    mentions: Vec<&'a GoldMention>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SingletonStats {
    pub mention_count: usize,
    pub singleton_count: usize,
    pub cluster_count: usize,
}

impl SingletonStats {
    pub fn singleton_ratio(&self) -> f64 {
        if self.mention_count == 0 {
            0.0
        } else {
            self.singleton_count as f64 / self.mention_count as f64
        }
    }
}

impl<'a> MentionView<'a> {
    pub fn mode(&self) -> MentionMode {
        self.mode
    }

    pub fn corpus(&self) -> &'a Corpus {
        self.corpus
    }

    pub fn mentions(&self) -> &[&'a GoldMention] {
        &self.mentions
    }

    pub fn len(&self) -> usize {
        self.mentions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mentions.is_empty()
    }

    pub fn restrict_to_split(&self, split: Split) -> MentionView<'a> {
        let docs: HashSet<&str> = self
            .corpus
            .split_documents(split)
            .into_iter()
            .map(|d| d.doc_id.as_str())
            .collect();
        self.restrict(|m| docs.contains(m.doc_id.as_str()))
    }

    pub fn restrict(&self, mut keep: impl FnMut(&GoldMention) -> bool) -> MentionView<'a> {
        MentionView {
            corpus: self.corpus,
            mode: self.mode,
            mentions: self.mentions.iter().copied().filter(|m| keep(m)).collect(),
        }
    }

    /// Mentions of one document ordered by `(start, end)`.
    pub fn in_document(&self, doc_id: &str) -> Vec<&'a GoldMention> {
        let mut out: Vec<_> = self.mentions.iter().copied().filter(|m| m.doc_id == doc_id).collect();
        out.sort_by_key(|m| (m.start, m.end));
        out
    }

    pub fn clusters(&self) -> BTreeMap<ClusterKey, Vec<&'a GoldMention>> {
        let mut out: BTreeMap<ClusterKey, Vec<&GoldMention>> = BTreeMap::new();
        for m in &self.mentions {
            out.entry(m.cluster()).or_default().push(m);
        }
        out
    }

    /// Gold clusters as lists of mention identities.
    pub fn key_clusters(&self) -> Vec<Vec<MentionKey>> {
        self.clusters()
            .into_values()
            .map(|ms| ms.into_iter().map(|m| m.key()).collect())
            .collect()
    }

    pub fn singleton_stats(&self) -> SingletonStats {
        let clusters = self.clusters();
        SingletonStats {
            mention_count: self.mentions.len(),
            singleton_count: clusters.values().filter(|c| c.len() == 1).count(),
            cluster_count: clusters.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn mention(doc: &str, start: usize, end: usize, ty: MentionType, c: &str) -> GoldMention {
        GoldMention {
            doc_id: doc.into(),
            start,
            end,
            mention_type: ty,
            cluster_id: c.into(),
        }
    }

    pub(crate) fn toy() -> Corpus {
        let docs = vec![
            Document::new(
                "d1",
                "t1",
                "t1a",
                &[words("Thieves pulled off a heist"), words("They fled")],
            ),
            Document::new("d2", "t1", "t1a", &[words("Four men made off with jewels")]),
        ];
        let mentions = vec![
            mention("d1", 1, 2, MentionType::Event, "heist"),
            mention("d2", 2, 3, MentionType::Event, "heist"),
            mention("d1", 0, 0, MentionType::Entity, "thieves"),
        ];
        let splits = BTreeMap::from([(Split::Train, vec!["t1".to_string()])]);
        Corpus::new(docs, mentions, splits).unwrap()
    }

    #[test]
    fn toy_fixture_counts() {
        let c = toy();
        assert_eq!(c.documents().len(), 2);
        assert_eq!(c.mentions().len(), 3);
        assert_eq!(c.select_mentions(MentionMode::All).clusters().len(), 2);
        assert_eq!(c.document("d1").unwrap().sentences(), &[(0, 4), (5, 6)]);
    }

    #[test]
    fn token_indices_are_global_and_consecutive() {
        let c = toy();
        let d = c.document("d1").unwrap();
        for (i, t) in d.tokens.iter().enumerate() {
            assert_eq!(t.token_index, i);
        }
        assert!(d.tokens.windows(2).all(|w| w[0].sentence_index <= w[1].sentence_index));
        assert_eq!(d.tokens[5].sentence_index, 1);
    }

    #[test]
    fn empty_document_list_is_rejected() {
        let err = Corpus::from_json_str(r#"{"documents": [], "mentions": []}"#).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let err = Corpus::from_json_str(r#"{"documents": [}"#).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn rejects_bad_mentions() {
        let docs = || vec![Document::new("d1", "t", "s", &[words("a b c"), words("d e")])];
        let crossing = vec![mention("d1", 2, 3, MentionType::Event, "x")];
        let err = Corpus::new(docs(), crossing, BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("crosses a sentence boundary"));

        let out_of_range = vec![mention("d1", 4, 5, MentionType::Event, "x")];
        assert!(Corpus::new(docs(), out_of_range, BTreeMap::new()).is_err());

        let reversed = vec![mention("d1", 2, 1, MentionType::Event, "x")];
        assert!(Corpus::new(docs(), reversed, BTreeMap::new()).is_err());

        let mixed = vec![
            mention("d1", 0, 0, MentionType::Event, "x"),
            mention("d1", 1, 1, MentionType::Entity, "x"),
        ];
        let err = Corpus::new(docs(), mixed, BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("mixes"));

        let unknown = vec![mention("nope", 0, 0, MentionType::Event, "x")];
        assert!(Corpus::new(docs(), unknown, BTreeMap::new()).is_err());
    }

    #[test]
    fn duplicate_doc_id_is_rejected() {
        let docs = vec![
            Document::new("d1", "t", "s", &[words("a")]),
            Document::new("d1", "t", "s", &[words("b")]),
        ];
        let err = Corpus::new(docs, vec![], BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::DuplicateDocument(id) if id == "d1"));
    }

    #[test]
    fn overlapping_splits_are_rejected() {
        let docs = vec![Document::new("d1", "t", "s", &[words("a")])];
        let splits = BTreeMap::from([
            (Split::Train, vec!["t".to_string()]),
            (Split::Test, vec!["t".to_string()]),
        ]);
        assert!(Corpus::new(docs, vec![], splits).is_err());
    }

    #[test]
    fn cross_topic_cluster_reuse_only_warns() {
        let docs = vec![
            Document::new("d1", "t1", "s", &[words("a b")]),
            Document::new("d2", "t2", "s", &[words("c d")]),
        ];
        let ms = vec![
            mention("d1", 0, 0, MentionType::Event, "x"),
            mention("d2", 1, 1, MentionType::Event, "x"),
        ];
        let c = Corpus::new(docs, ms, BTreeMap::new()).unwrap();
        assert_eq!(c.warnings().len(), 1);
    }

    #[test]
    fn select_mentions_by_mode() {
        let c = toy();
        assert_eq!(c.select_mentions(MentionMode::Event).len(), 2);
        assert_eq!(c.select_mentions(MentionMode::Entity).len(), 1);
        assert_eq!(c.select_mentions(MentionMode::All).len(), 3);

        let docs = vec![Document::new("d1", "t", "s", &[words("a b")])];
        let events_only = Corpus::new(
            docs,
            vec![mention("d1", 0, 0, MentionType::Event, "x")],
            BTreeMap::new(),
        )
        .unwrap();
        assert!(events_only.select_mentions(MentionMode::Entity).is_empty());
    }

    #[test]
    fn all_mode_keeps_types_disjoint() {
        let docs = vec![Document::new("d1", "t", "s", &[words("a b c")])];
        let ms = vec![
            mention("d1", 0, 0, MentionType::Event, "1"),
            mention("d1", 2, 2, MentionType::Entity, "1"),
        ];
        // Same raw id under both types is a validation error...
        assert!(Corpus::new(docs.clone(), ms, BTreeMap::new()).is_err());
        // ...but distinct ids always stay apart in the joint view.
        let ms = vec![
            mention("d1", 0, 0, MentionType::Event, "1"),
            mention("d1", 1, 1, MentionType::Event, "1"),
            mention("d1", 2, 2, MentionType::Entity, "2"),
        ];
        let c = Corpus::new(docs, ms, BTreeMap::new()).unwrap();
        let all = c.select_mentions(MentionMode::All);
        assert_eq!(all.clusters().len(), 2);
        assert_eq!(all.singleton_stats().singleton_count, 1);
    }

    #[test]
    fn singleton_stats_all_singletons() {
        let docs = vec![Document::new("d1", "t", "s", &[words("a b c")])];
        let ms = (0..3)
            .map(|i| mention("d1", i, i, MentionType::Event, &i.to_string()))
            .collect();
        let c = Corpus::new(docs, ms, BTreeMap::new()).unwrap();
        let s = c.select_mentions(MentionMode::Event).singleton_stats();
        assert_eq!(s.singleton_count, s.mention_count);
        assert_eq!(s.cluster_count, 3);
    }

    #[test]
    fn json_round_trip() {
        let c = toy();
        let back = Corpus::from_json_str(&c.to_json_string()).unwrap();
        assert_eq!(back, c);
    }
}
