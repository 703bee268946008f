use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::attribution::AttributionScores;
use crate::data::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagImportance {
    pub mean: f64,
    pub count: usize,
}

/// Mean attribution score per part-of-speech tag over every scored token.
///
/// Per-tag values are summed in sorted order, so the result does not depend
/// on the order of documents.
pub fn pos_importance(
    docs: &[Document],
    attributions: &[AttributionScores],
) -> Result<BTreeMap<String, TagImportance>> {
    let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for a in attributions {
        let doc = by_id
            .get(a.doc_id.as_str())
            .ok_or_else(|| Error::data(format!("attribution for unknown document {}", a.doc_id)))?;
        let tags = doc
            .pos_tags
            .as_ref()
            .ok_or_else(|| Error::data(format!("document {} has no pos_tags", doc.id)))?;
        if tags.len() != doc.tokens.len() {
            return Err(Error::data(format!(
                "document {}: {} tags for {} tokens",
                doc.id,
                tags.len(),
                doc.tokens.len()
            )));
        }
        if a.scores.len() > tags.len() {
            return Err(Error::data(format!(
                "document {}: {} scores for {} tags",
                doc.id,
                a.scores.len(),
                tags.len()
            )));
        }
        for (tag, &s) in tags.iter().zip(&a.scores) {
            values.entry(tag.as_str()).or_default().push(s);
        }
    }
    Ok(values
        .into_iter()
        .map(|(tag, mut v)| {
            v.sort_by(f64::total_cmp);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (tag.to_string(), TagImportance { mean, count: v.len() })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::AttributionMethod;

    fn tagged(id: &str, tags: &[&str]) -> Document {
        let mut d = Document::new(id, tags.iter().map(|t| t.to_lowercase()).collect(), 0).unwrap();
        d.pos_tags = Some(tags.iter().map(|t| t.to_string()).collect());
        d
    }

    fn attr(id: &str, scores: &[f64]) -> AttributionScores {
        AttributionScores {
            doc_id: id.into(),
            method: AttributionMethod::Alpha,
            predicted_class: 0,
            scores: scores.to_vec(),
        }
    }

    #[test]
    fn one_document() {
        let m = pos_importance(&[tagged("a", &["ADJ", "NOUN"])], &[attr("a", &[0.7, 0.3])]).unwrap();
        assert_eq!(m["ADJ"], TagImportance { mean: 0.7, count: 1 });
        assert_eq!(m["NOUN"], TagImportance { mean: 0.3, count: 1 });
    }

    #[test]
    fn shared_tag_is_averaged() {
        let docs = [tagged("a", &["ADJ"]), tagged("b", &["ADJ"])];
        let m = pos_importance(&docs, &[attr("a", &[0.2]), attr("b", &[0.6])]).unwrap();
        assert!((m["ADJ"].mean - 0.4).abs() < 1e-15);
        assert_eq!(m["ADJ"].count, 2);
    }

    #[test]
    fn untagged_document_is_named_in_the_error() {
        let d = Document::new("plain", vec!["x".into()], 0).unwrap();
        let err = pos_importance(&[d], &[attr("plain", &[1.0])]).unwrap_err();
        assert!(err.to_string().contains("plain"));
    }
}
