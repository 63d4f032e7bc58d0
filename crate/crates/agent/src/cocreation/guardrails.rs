//! Hard checks applied to every reasoner effect before it takes hold.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::LazyLock;

use intentforge_core::catalog::CatalogGraph;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::reasoner::Effect;
use super::session::Session;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GuardrailRule {
    /// Product not in the catalog.
    G1,
    /// Order submission without confirmation.
    G2,
    /// Quote shown without its total.
    G3,
    /// Claims about features the catalog does not describe.
    G4,
    /// Products named before any catalog lookup.
    G5,
}

impl fmt::Display for GuardrailRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Allowed,
    Vetoed { rule: GuardrailRule, detail: String, names: Vec<String> },
}

impl Verdict {
    fn veto(rule: GuardrailRule, detail: impl Into<String>) -> Self {
        Verdict::Vetoed { rule, detail: detail.into(), names: Vec::new() }
    }
}

/// Catalog vocabulary used for product-name matching.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    /// Lowercased offering names, longest first.
    names: Vec<String>,
    /// Original-case offering names keyed by their lowercase form.
    display: Vec<(String, String)>,
}

impl Vocabulary {
    pub fn from_catalog(graph: &CatalogGraph) -> Self {
        let mut names: Vec<String> = graph.families();
        names.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        names.dedup();
        let display = names.iter().map(|n| (n.to_lowercase(), n.clone())).collect();
        Vocabulary { names: names.iter().map(|n| n.to_lowercase()).collect(), display }
    }

    /// Does a candidate phrase denote a catalog offering?
    pub fn knows(&self, phrase: &str) -> bool {
        let p = phrase.to_lowercase();
        let words = p.split_whitespace().count();
        self.names.iter().any(|n| p.contains(n.as_str()) || (words >= 2 && n.contains(p.as_str())))
    }

    /// Catalog offering names that occur in `text`, in catalog-name order.
    pub fn mentioned(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        self.display.iter().filter(|(l, _)| lower.contains(l.as_str())).map(|(_, d)| d.clone()).collect()
    }

    /// `text` with every catalog name removed.
    pub fn strip(&self, text: &str) -> String {
        let mut lower = text.to_lowercase();
        for n in &self.names {
            lower = lower.replace(n.as_str(), " ");
        }
        lower
    }
}

static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\s*(?:[-*•]|\d+[.)])\s+(.+)$").unwrap());
static RECOMMEND: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"\b(?:[Rr]ecommend|[Ss]uggest|[Pp]ropose|[Oo]ffer)(?:s|ed|ing)?\s+(?:(?:the|a|an|our|my|your)\s+)?(\p{Lu}[\w()/-]*(?:\s+(?:(?:and|of|for|the|with)\s+)?\p{Lu}[\w()/-]*)+)",
    )
    .unwrap()
});
static CLAIMS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bservices?\b|\bguarantee\w*|\bcapabilit(?:y|ies)\b|\bunlimited\b|\b[48]k\b").unwrap()
});

const CONNECTORS: [&str; 8] = ["and", "of", "for", "the", "with", "&", "on", "to"];
/// Labels that look like capitalized phrases but never name a product.
const LABELS: [&str; 8] =
    ["total cost", "start date", "end date", "total price", "order summary", "order id", "next steps", "grand total"];

fn is_capitalized_phrase(phrase: &str) -> bool {
    let words: Vec<&str> = phrase.split_whitespace().collect();
    if words.len() < 2 || words.len() > 8 {
        return false;
    }
    let starts_upper = |w: &str| w.chars().next().is_some_and(|c| c.is_uppercase() || c.is_ascii_digit());
    starts_upper(words[0]) && words.iter().all(|w| starts_upper(w) || CONNECTORS.contains(&w.to_lowercase().as_str()))
}

/// Capitalized multi-word phrases presented as orderable products: bullet
/// items and objects of recommend/suggest/propose/offer.
pub fn product_candidates(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for c in BULLET.captures_iter(text) {
        let line = c[1].replace("**", "").replace("__", "");
        let cut = [":", " (", " - ", " \u{2013} ", " \u{2014} ", ","]
            .iter()
            .filter_map(|sep| line.find(sep))
            .min()
            .unwrap_or(line.len());
        let phrase = line[..cut].trim().trim_end_matches('.').to_string();
        if is_capitalized_phrase(&phrase) && !LABELS.contains(&phrase.to_lowercase().as_str()) {
            out.push(phrase);
        }
    }
    for c in RECOMMEND.captures_iter(text) {
        let phrase = c[1].trim().to_string();
        if is_capitalized_phrase(&phrase) && !out.contains(&phrase) {
            out.push(phrase);
        }
    }
    out
}

/// Distinct candidates (case-insensitive) that match no catalog offering.
pub fn unknown_products(vocab: &Vocabulary, text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    product_candidates(text).into_iter().filter(|p| !vocab.knows(p)).filter(|p| seen.insert(p.to_lowercase())).collect()
}

/// Evaluates G1..G5 in order; the first rule that fires decides.
pub fn check_guardrails(session: &Session, vocab: &Vocabulary, effect: &Effect) -> Verdict {
    match effect {
        Effect::Reply { text } => {
            let unknown = unknown_products(vocab, text);
            if !unknown.is_empty() {
                return Verdict::Vetoed {
                    rule: GuardrailRule::G1,
                    detail: format!("not in the catalog: {}", unknown.join(", ")),
                    names: unknown,
                };
            }
            if let Some(total) = session.pending_total() {
                if !text.contains(&total) {
                    return Verdict::veto(GuardrailRule::G3, format!("quote shown without its total {total}"));
                }
            }
            if let Some(m) = CLAIMS.find(&vocab.strip(text)) {
                return Verdict::veto(GuardrailRule::G4, format!("unsupported claim `{}`", m.as_str()));
            }
            let names_products = !vocab.mentioned(text).is_empty() || !product_candidates(text).is_empty();
            if names_products && !session.used_catalog_tools() {
                return Verdict::veto(GuardrailRule::G5, "products named before any catalog lookup");
            }
            Verdict::Allowed
        }
        Effect::ToolCall { name, .. } if name == "order.submit" && !session.draft.confirmed => {
            Verdict::veto(GuardrailRule::G2, "order submission without explicit confirmation")
        }
        _ => Verdict::Allowed,
    }
}

/// Text shown in place of a vetoed effect.
pub fn corrective_text(rule: GuardrailRule, detail: &str) -> String {
    let lead = match rule {
        GuardrailRule::G1 => "That reply named products that are not in the catalog and was withheld",
        GuardrailRule::G2 => "An order cannot be placed before you confirm it",
        GuardrailRule::G3 => "That quote was withheld because it did not state the total cost",
        GuardrailRule::G4 => "That reply described features the catalog does not list and was withheld",
        GuardrailRule::G5 => "That reply named products before consulting the catalog and was withheld",
    };
    format!("{lead} ({detail}).")
}
