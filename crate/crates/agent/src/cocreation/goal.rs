//! Deterministic goal structuring from operator messages.

use std::sync::LazyLock;

use chrono::NaiveDate;
use intentforge_core::traversal::{IntentConstraints, Period};
use intentforge_core::{Decimal, Money};
use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "camelCase")]
pub enum Constraint {
    Budget(Money),
    MinConcurrentUsers(i64),
    LatencyCeilingMs(Decimal),
    Location(String),
    DurationDays(u32),
    StartDate(NaiveDate),
}

impl Constraint {
    pub fn name(&self) -> &'static str {
        match self {
            Constraint::Budget(_) => "budget",
            Constraint::MinConcurrentUsers(_) => "minConcurrentUsers",
            Constraint::LatencyCeilingMs(_) => "latencyCeilingMs",
            Constraint::Location(_) => "location",
            Constraint::DurationDays(_) => "duration",
            Constraint::StartDate(_) => "startDate",
        }
    }
}

/// A constraint together with the transcript turn that stated it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConstraintEntry {
    pub constraint: Constraint,
    pub turn: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StructuredGoal {
    pub objective: String,
    /// Append-only; the latest entry of each kind is in force.
    pub explicit_constraints: Vec<ConstraintEntry>,
    pub assumptions: Vec<String>,
    pub missing_info: Vec<String>,
}

/// Gaps reported in `missing_info`, in this order.
const REQUIRED: [&str; 4] = ["location", "duration", "startDate", "budget"];

impl StructuredGoal {
    fn latest(&self, name: &str) -> Option<&ConstraintEntry> {
        self.explicit_constraints.iter().rev().find(|e| e.constraint.name() == name)
    }

    /// Turn of the entry currently in force for `name`.
    pub fn stated_at(&self, name: &str) -> Option<usize> {
        self.latest(name).map(|e| e.turn)
    }

    pub fn budget(&self) -> Option<Money> {
        match self.latest("budget").map(|e| &e.constraint) {
            Some(Constraint::Budget(m)) => Some(m.clone()),
            _ => None,
        }
    }

    pub fn min_users(&self) -> Option<i64> {
        match self.latest("minConcurrentUsers").map(|e| &e.constraint) {
            Some(Constraint::MinConcurrentUsers(n)) => Some(*n),
            _ => None,
        }
    }

    pub fn latency_ceiling_ms(&self) -> Option<Decimal> {
        match self.latest("latencyCeilingMs").map(|e| &e.constraint) {
            Some(Constraint::LatencyCeilingMs(d)) => Some(*d),
            _ => None,
        }
    }

    pub fn location(&self) -> Option<&str> {
        match self.latest("location").map(|e| &e.constraint) {
            Some(Constraint::Location(s)) => Some(s),
            _ => None,
        }
    }

    pub fn duration_days(&self) -> Option<u32> {
        match self.latest("duration").map(|e| &e.constraint) {
            Some(Constraint::DurationDays(d)) => Some(*d),
            _ => None,
        }
    }

    pub fn start_date(&self) -> Option<NaiveDate> {
        match self.latest("startDate").map(|e| &e.constraint) {
            Some(Constraint::StartDate(d)) => Some(*d),
            _ => None,
        }
    }

    pub fn period(&self) -> Option<Period> {
        Some(Period { start_date: self.start_date()?, days: self.duration_days()? })
    }

    /// Latest turn that changed the start date or the duration.
    pub fn period_stated_at(&self) -> Option<usize> {
        self.period()?;
        self.stated_at("startDate").max(self.stated_at("duration"))
    }

    /// Latest turn that changed budget or user count.
    pub fn sizing_stated_at(&self) -> Option<usize> {
        self.stated_at("budget").max(self.stated_at("minConcurrentUsers"))
    }

    pub fn intent_constraints(&self) -> IntentConstraints {
        IntentConstraints {
            budget: self.budget(),
            min_concurrent_users: self.min_users(),
            latency_ceiling_ms: self.latency_ceiling_ms(),
        }
    }

    fn refresh_missing(&mut self) {
        self.missing_info =
            REQUIRED.iter().filter(|name| self.latest(name).is_none()).map(|name| name.to_string()).collect();
    }
}

/// Folds one operator message into the goal.
///
/// Returns `None` only while no goal exists and the message is blank.
/// Constraints are appended when their value differs from the one in force.
pub fn interpret(previous: Option<StructuredGoal>, message: &str, turn: usize) -> Option<StructuredGoal> {
    let text = message.trim();
    let mut goal = match previous {
        Some(g) => g,
        None if text.is_empty() => return None,
        None => StructuredGoal { objective: first_sentence(text), ..StructuredGoal::default() },
    };
    let (found, assumptions) = extract_constraints(text);
    for constraint in found {
        let current = goal.latest(constraint.name()).map(|e| &e.constraint);
        if current != Some(&constraint) {
            goal.explicit_constraints.push(ConstraintEntry { constraint, turn });
        }
    }
    for a in assumptions {
        if !goal.assumptions.contains(&a) {
            goal.assumptions.push(a);
        }
    }
    goal.refresh_missing();
    Some(goal)
}

fn first_sentence(text: &str) -> String {
    static END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.!?](\s|$)").unwrap());
    match END.find(text) {
        Some(m) => text[..m.start() + 1].trim().to_string(),
        None => text.to_string(),
    }
}

static BUDGET_CUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(budget|afford|spend|up to|at most|no more than|maximum|max|cap)\b").unwrap());
static AMOUNT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)€\s*(\d[\d,]*(?:\.\d{1,2})?)|(\d[\d,]*(?:\.\d{1,2})?)\s*(?:€|eur(?:os?)?\b)").unwrap()
});
static USERS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(\d[\d,]*)\s+(?:(?:simultaneous|concurrent)\s+)?(?:users|viewers|devices|spectators)\b").unwrap()
});
static LATENCY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:<=?|under|below|less than|at most|within)\s*(\d+(?:\.\d+)?)\s*ms\b").unwrap());
static LOCATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:[Cc]ity of|[Ll]ocated in)\s+(\p{Lu}[\p{L}-]+)|\bin\s+(\p{Lu}[\p{L}-]+),\s*\p{Lu}").unwrap()
});
static DURATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(\d+|an?|one|two|three|four|five|six|seven|eight|nine|ten)[\s-]+(days?|weeks?)\b").unwrap()
});
static ISO_DATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d{4}-\d{2}-\d{2})\b").unwrap());
static LONG_DATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(january|february|march|april|may|june|july|august|september|october|november|december)\s+(\d{1,2})(?:st|nd|rd|th)?,?\s+(\d{4})\b",
    )
    .unwrap()
});

fn number_word(w: &str) -> Option<u32> {
    let w = w.to_lowercase();
    let words = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
    if w == "a" || w == "an" {
        return Some(1);
    }
    if let Some(i) = words.iter().position(|x| *x == w) {
        return Some(i as u32 + 1);
    }
    w.parse().ok()
}

fn parse_count(text: &str) -> Option<i64> {
    text.replace(',', "").parse().ok()
}

/// Pulls every recognizable constraint out of one message.
pub fn extract_constraints(text: &str) -> (Vec<Constraint>, Vec<String>) {
    let mut out = Vec::new();
    let mut assumptions = Vec::new();

    if let Some(c) = LOCATION.captures(text) {
        let city = c.get(1).or_else(|| c.get(2)).map(|m| m.as_str().to_string());
        if let Some(city) = city {
            out.push(Constraint::Location(city));
        }
    }
    if let Some(c) = DURATION.captures(text) {
        if let Some(n) = number_word(&c[1]) {
            let unit = c[2].to_lowercase();
            let days = if unit.starts_with("week") {
                assumptions.push(format!("\"{}\" is read as {} consecutive days", &c[0], n * 7));
                n * 7
            } else {
                n
            };
            if days > 0 {
                out.push(Constraint::DurationDays(days));
            }
        }
    }
    let date = ISO_DATE.captures(text).and_then(|c| NaiveDate::parse_from_str(&c[1], "%Y-%m-%d").ok()).or_else(|| {
        LONG_DATE
            .captures(text)
            .and_then(|c| NaiveDate::parse_from_str(&format!("{} {} {}", &c[1], &c[2], &c[3]), "%B %d %Y").ok())
    });
    if let Some(d) = date {
        out.push(Constraint::StartDate(d));
    }
    if BUDGET_CUE.is_match(text) {
        let amount = AMOUNT
            .captures_iter(text)
            .filter_map(|c| c.get(1).or_else(|| c.get(2)).and_then(|m| Money::parse_eur(m.as_str())))
            .last();
        if let Some(m) = amount {
            out.push(Constraint::Budget(m));
        }
    }
    if let Some(n) = USERS.captures(text).and_then(|c| parse_count(&c[1])) {
        out.push(Constraint::MinConcurrentUsers(n));
    }
    if let Some(ms) = LATENCY.captures(text).and_then(|c| c[1].parse::<Decimal>().ok()) {
        out.push(Constraint::LatencyCeilingMs(ms));
    }
    (out, assumptions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations() {
        let (c, a) = extract_constraints("for one week");
        assert_eq!(c, vec![Constraint::DurationDays(7)]);
        assert_eq!(a.len(), 1);
        assert_eq!(extract_constraints("run it for 3 days").0, vec![Constraint::DurationDays(3)]);
    }

    #[test]
    fn budget_needs_a_cue() {
        assert!(extract_constraints("it was 500 EUR last time").0.is_empty());
        assert_eq!(extract_constraints("my budget is €9,000").0, vec![Constraint::Budget(Money::eur(9000))]);
    }

    #[test]
    fn long_dates() {
        assert_eq!(
            extract_constraints("start on June 1st, 2026").0,
            vec![Constraint::StartDate(NaiveDate::from_ymd_opt(2026, 6, 1).unwrap())]
        );
    }
}
