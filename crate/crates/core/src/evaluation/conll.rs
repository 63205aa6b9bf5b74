//! CoNLL-2012-style key/response files.
//!
//! ```text
//! #begin document (doc_id); part 000
//! doc_id  0  0  word  (3
//! doc_id  0  1  word  3)|(5)
//! <blank line between sentences>
//! #end document
//! ```
//!
//! Columns are tab-separated: document, part, token index, word, clusters.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use super::metrics::Clusters;
use crate::corpus::{Document, MentionKey};
use crate::error::{Error, Result};

/// Writes every document in `docs`; cluster ids are positions in `clusters`.
pub fn write_conll(w: &mut impl Write, docs: &[&Document], clusters: &Clusters) -> std::io::Result<()> {
    let mut opens: HashMap<(&str, usize), Vec<(usize, usize)>> = HashMap::new();
    let mut closes: HashMap<(&str, usize), Vec<(usize, usize)>> = HashMap::new();
    for (c, members) in clusters.iter().enumerate() {
        for m in members {
            opens.entry((m.doc_id.as_str(), m.start)).or_default().push((m.end, c));
            closes.entry((m.doc_id.as_str(), m.end)).or_default().push((m.start, c));
        }
    }
    for doc in docs {
        writeln!(w, "#begin document ({}); part 000", doc.doc_id)?;
        for (si, &(s0, e0)) in doc.sentences().iter().enumerate() {
            if si > 0 {
                writeln!(w)?;
            }
            for t in s0..=e0 {
                let key = (doc.doc_id.as_str(), t);
                let mut parts = Vec::new();
                // Longer spans open first and close last.
                let mut o = opens.get(&key).cloned().unwrap_or_default();
                o.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                for &(end, c) in &o {
                    if end == t {
                        continue;
                    }
                    parts.push(format!("({c}"));
                }
                let mut singles: Vec<usize> = o.iter().filter(|(end, _)| *end == t).map(|&(_, c)| c).collect();
                singles.sort_unstable();
                parts.extend(singles.iter().map(|c| format!("({c})")));
                let mut cl = closes.get(&key).cloned().unwrap_or_default();
                cl.retain(|&(start, _)| start != t);
                cl.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                parts.extend(cl.iter().map(|&(_, c)| format!("{c})")));
                let tag = if parts.is_empty() {
                    "-".to_string()
                } else {
                    parts.join("|")
                };
                writeln!(w, "{}\t0\t{}\t{}\t{}", doc.doc_id, t, doc.tokens[t].text, tag)?;
            }
        }
        writeln!(w, "#end document")?;
    }
    Ok(())
}

/// Parses clusters back, merging same-numbered clusters across documents.
pub fn read_conll(text: &str) -> Result<Clusters> {
    let mut clusters: BTreeMap<usize, Vec<MentionKey>> = BTreeMap::new();
    let mut open: HashMap<(String, usize), Vec<usize>> = HashMap::new();
    let bad = |line: usize, msg: &str| Error::Validation(format!("CoNLL line {}: {msg}", line + 1));
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with("#begin") || line.starts_with("#end") {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 5 {
            return Err(bad(ln, "expected 5 tab-separated columns"));
        }
        let doc = cols[0].to_string();
        let t: usize = cols[2].parse().map_err(|_| bad(ln, "token index is not a number"))?;
        let tag = cols[cols.len() - 1];
        if tag == "-" {
            continue;
        }
        for part in tag.split('|') {
            let (starts, ends) = (part.starts_with('('), part.ends_with(')'));
            let digits = part.trim_start_matches('(').trim_end_matches(')');
            let c: usize = digits.parse().map_err(|_| bad(ln, "malformed cluster tag"))?;
            match (starts, ends) {
                (true, true) => clusters.entry(c).or_default().push(MentionKey::new(doc.clone(), t, t)),
                (true, false) => open.entry((doc.clone(), c)).or_default().push(t),
                (false, true) => {
                    let start = open
                        .get_mut(&(doc.clone(), c))
                        .and_then(Vec::pop)
                        .ok_or_else(|| bad(ln, "closing bracket without opening"))?;
                    clusters
                        .entry(c)
                        .or_default()
                        .push(MentionKey::new(doc.clone(), start, t));
                }
                (false, false) => return Err(bad(ln, "malformed cluster tag")),
            }
        }
    }
    if open.values().any(|v| !v.is_empty()) {
        return Err(Error::Validation("CoNLL file has unclosed mentions".into()));
    }
    Ok(clusters
        .into_values()
        .map(|mut c| {
            c.sort();
            c
        })
        .collect())
}
