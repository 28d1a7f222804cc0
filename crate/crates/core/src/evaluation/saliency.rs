use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::argmax;
use crate::autograd::Tape;
use crate::data::Document;
use crate::error::{Error, Result};
use crate::model::CoherenceModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSaliency {
    pub token: String,
    /// L2 norm of the score gradient with respect to the token's embedding.
    pub norm: f64,
}

/// Gradient of the coherence score (the highest-scoring class for graded
/// models) with respect to each input word embedding, with dropout off.
pub fn saliency(model: &CoherenceModel, doc: &Document) -> Result<Vec<TokenSaliency>> {
    doc.validate()?;
    let mut tape = Tape::new();
    let embeddings = model
        .embedding_values(doc)
        .into_iter()
        .map(|v| tape.vector(v))
        .collect::<Result<Vec<_>>>()?;
    let f = model.forward_from_embeddings(&mut tape, doc, &embeddings, None)?;
    let class = argmax(tape.values(f.score));
    let target = tape.pick(f.score, class)?;
    tape.backward(target)?;
    let out: Vec<TokenSaliency> = doc
        .tokens()
        .zip(&embeddings)
        .map(|(t, &e)| TokenSaliency {
            token: t.surface.clone(),
            norm: tape
                .grad(e)
                .map_or(0.0, |g| g.iter().map(|x| x * x).sum::<f64>().sqrt()),
        })
        .collect();
    if out.iter().any(|s| !s.norm.is_finite()) {
        return Err(Error::NumericFailure(format!("saliency of `{}`", doc.id)));
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Standalone page with one `<span class="tok">` per token, shaded by its
/// norm relative to the largest one. Sentences become paragraphs.
pub fn saliency_html(doc: &Document, records: &[TokenSaliency]) -> Result<String> {
    if records.len() != doc.num_tokens() {
        return Err(Error::LengthMismatch {
            left: records.len(),
            right: doc.num_tokens(),
        });
    }
    let max = records.iter().map(|r| r.norm).fold(0.0, f64::max);
    let mut html = String::new();
    let title = escape(&doc.id);
    let _ = write!(
        html,
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>{title}</title>\n</head>\n\
         <body style=\"font-family: sans-serif; line-height: 1.8\">\n<h1>{title}</h1>\n"
    );
    let mut records = records.iter();
    for sentence in doc.sentences() {
        html.push_str("<p>");
        for (i, _) in sentence.iter().enumerate() {
            let r = records.next().expect("length checked");
            let weight = if max > 0.0 { r.norm / max } else { 0.0 };
            if i > 0 {
                html.push(' ');
            }
            let _ = write!(
                html,
                "<span class=\"tok\" style=\"background-color: rgba(200, 30, 0, {weight:.3})\" \
                 title=\"{:.6e}\">{}</span>",
                r.norm,
                escape(&r.token)
            );
        }
        html.push_str("</p>\n");
    }
    html.push_str("</body>\n</html>\n");
    Ok(html)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Token;

    #[test]
    fn html_has_one_span_per_token_and_escapes() {
        let doc = Document::from_sentences(
            "a<b",
            vec![
                vec![Token::new("x&y", None), Token::new("z", None)],
                vec![Token::new("<w>", None)],
            ],
        );
        let recs: Vec<_> = doc
            .tokens()
            .zip([0.5, 1.0, 0.0])
            .map(|(t, n)| TokenSaliency {
                token: t.surface.clone(),
                norm: n,
            })
            .collect();
        let html = saliency_html(&doc, &recs).unwrap();
        assert_eq!(html.matches("<span class=\"tok\"").count(), 3);
        assert!(html.contains("x&amp;y"));
        assert!(html.contains("&lt;w&gt;"));
        assert!(html.contains("rgba(200, 30, 0, 1.000)"));
        assert!(html.contains("rgba(200, 30, 0, 0.500)"));
        assert!(saliency_html(&doc, &recs[..2]).is_err());
    }
}
