//! Synthetic ECB+-shaped corpora.
//!
//! Each topic has two subtopics with disjoint vocabularies. Mentions of a
//! subtopic draw from a small pool of event and entity clusters, with a
//! fraction of fresh singletons. Pair this with
//! [`synthetic_embeddings`](crate::embeddings::synthetic_embeddings) to get a
//! workspace whose coreference structure is learnable by construction.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, GoldMention, MentionType, Split};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthCorpusConfig {
    pub topics: usize,
    pub docs_per_topic: usize,
    pub sentences_per_doc: usize,
    pub tokens_per_sentence: usize,
    pub events_per_sentence: usize,
    pub entities_per_sentence: usize,
    pub event_clusters_per_subtopic: usize,
    pub entity_clusters_per_subtopic: usize,
    /// Probability that a mention starts its own singleton cluster.
    pub singleton_rate: f64,
    pub max_mention_width: usize,
    pub dev_topics: usize,
    pub test_topics: usize,
    pub seed: u64,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        SynthCorpusConfig {
            topics: 5,
            docs_per_topic: 4,
            sentences_per_doc: 16,
            tokens_per_sentence: 8,
            events_per_sentence: 2,
            entities_per_sentence: 1,
            event_clusters_per_subtopic: 3,
            entity_clusters_per_subtopic: 2,
            singleton_rate: 0.2,
            max_mention_width: 1,
            dev_topics: 1,
            test_topics: 1,
            seed: 0,
        }
    }
}

const FILLER_VOCAB: usize = 30;

pub fn synthetic_corpus(cfg: &SynthCorpusConfig) -> Result<Corpus> {
    if cfg.topics == 0 || cfg.docs_per_topic == 0 || cfg.sentences_per_doc == 0 {
        return Err(Error::Config(
            "synthetic corpus needs topics, documents and sentences".into(),
        ));
    }
    if cfg.dev_topics + cfg.test_topics >= cfg.topics {
        return Err(Error::Config(
            "synthetic corpus must leave at least one training topic".into(),
        ));
    }
    let per_sentence = cfg.events_per_sentence + cfg.entities_per_sentence;
    // Each mention takes at most `max_mention_width` tokens plus a one-token gap.
    if per_sentence * (cfg.max_mention_width.max(1) + 1) > cfg.tokens_per_sentence + 1 {
        return Err(Error::Config("sentences too short for the requested mentions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut documents = Vec::new();
    let mut mentions = Vec::new();
    let mut singleton_ids = 0usize;

    for topic in 0..cfg.topics {
        let topic_id = format!("t{topic}");
        for d in 0..cfg.docs_per_topic {
            let sub = d % 2;
            let subtopic_id = format!("t{topic}s{sub}");
            let doc_id = format!("{subtopic_id}d{d}");
            let mut sentences = Vec::with_capacity(cfg.sentences_per_doc);
            let mut offset = 0;
            for _ in 0..cfg.sentences_per_doc {
                let mut words: Vec<String> = (0..cfg.tokens_per_sentence)
                    .map(|_| format!("{subtopic_id}w{}", rng.random_range(0..FILLER_VOCAB)))
                    .collect();
                let mut types: Vec<MentionType> = std::iter::repeat_n(MentionType::Event, cfg.events_per_sentence)
                    .chain(std::iter::repeat_n(MentionType::Entity, cfg.entities_per_sentence))
                    .collect();
                types.shuffle(&mut rng);
                let spans = place_spans(
                    &mut rng,
                    cfg.tokens_per_sentence,
                    types.len(),
                    cfg.max_mention_width.max(1),
                );
                for (ty, (s, e)) in types.into_iter().zip(spans) {
                    let cluster_id = if rng.random_bool(cfg.singleton_rate) {
                        singleton_ids += 1;
                        format!("{subtopic_id}_{ty}_single{singleton_ids}")
                    } else {
                        let pool = match ty {
                            MentionType::Event => cfg.event_clusters_per_subtopic,
                            MentionType::Entity => cfg.entity_clusters_per_subtopic,
                        };
                        format!("{subtopic_id}_{ty}{}", rng.random_range(0..pool.max(1)))
                    };
                    for (k, w) in words[s..=e].iter_mut().enumerate() {
                        *w = format!("{cluster_id}#{k}");
                    }
                    mentions.push(GoldMention {
                        doc_id: doc_id.clone(),
                        start: offset + s,
                        end: offset + e,
                        mention_type: ty,
                        cluster_id,
                    });
                }
                offset += words.len();
                sentences.push(words);
            }
            documents.push(Document::new(doc_id, topic_id.clone(), subtopic_id, &sentences));
        }
    }

    let mut splits: BTreeMap<Split, Vec<String>> = BTreeMap::new();
    let train = cfg.topics - cfg.dev_topics - cfg.test_topics;
    for topic in 0..cfg.topics {
        let split = if topic < train {
            Split::Train
        } else if topic < train + cfg.dev_topics {
            Split::Dev
        } else {
            Split::Test
        };
        splits.entry(split).or_default().push(format!("t{topic}"));
    }
    Corpus::new(documents, mentions, splits)
}

/// Non-adjacent spans inside a sentence of `len` tokens, sorted by start.
fn place_spans(rng: &mut ChaCha8Rng, len: usize, count: usize, max_width: usize) -> Vec<(usize, usize)> {
    loop {
        let mut taken = vec![false; len];
        let mut spans = Vec::with_capacity(count);
        let mut starts: Vec<usize> = (0..len).collect();
        starts.shuffle(rng);
        for s in starts {
            if spans.len() == count {
                break;
            }
            let w = rng.random_range(1..=max_width);
            let e = s + w - 1;
            if e >= len {
                continue;
            }
            let lo = s.saturating_sub(1);
            let hi = (e + 1).min(len - 1);
            if taken[lo..=hi].iter().any(|&t| t) {
                continue;
            }
            taken[s..=e].iter_mut().for_each(|t| *t = true);
            spans.push((s, e));
        }
        if spans.len() == count {
            spans.sort();
            return spans;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MentionMode;

    #[test]
    fn default_shape() {
        let cfg = SynthCorpusConfig::default();
        let c = synthetic_corpus(&cfg).unwrap();
        assert_eq!(c.documents().len(), 20);
        assert_eq!(c.split_documents(Split::Train).len(), 12);
        assert_eq!(c.split_documents(Split::Dev).len(), 4);
        assert_eq!(c.split_documents(Split::Test).len(), 4);
        assert!(c.documents().iter().all(|d| d.len() == 128));
        assert_eq!(c.select_mentions(MentionMode::Event).len(), 20 * 32);
        assert_eq!(c.select_mentions(MentionMode::Entity).len(), 20 * 16);
    }

    #[test]
    fn mentions_never_touch() {
        let cfg = SynthCorpusConfig {
            max_mention_width: 2,
            ..Default::default()
        };
        let c = synthetic_corpus(&cfg).unwrap();
        let view = c.select_mentions(MentionMode::All);
        for doc in c.documents() {
            let ms = view.in_document(&doc.doc_id);
            for w in ms.windows(2) {
                if doc.sentence_of(w[0].end) == doc.sentence_of(w[1].start) {
                    assert!(w[0].end + 1 < w[1].start);
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthCorpusConfig::default();
        assert_eq!(synthetic_corpus(&cfg).unwrap(), synthetic_corpus(&cfg).unwrap());
        let other = SynthCorpusConfig { seed: 1, ..cfg };
        assert_ne!(
            synthetic_corpus(&other).unwrap().to_json_string(),
            synthetic_corpus(&SynthCorpusConfig::default())
                .unwrap()
                .to_json_string()
        );
    }

    #[test]
    fn rejects_impossible_layouts() {
        let cfg = SynthCorpusConfig {
            tokens_per_sentence: 3,
            ..Default::default()
        };
        assert!(synthetic_corpus(&cfg).is_err());
        let cfg = SynthCorpusConfig {
            dev_topics: 3,
            test_topics: 2,
            ..Default::default()
        };
        assert!(synthetic_corpus(&cfg).is_err());
    }
}
