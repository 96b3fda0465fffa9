//! Parsing of critic verdicts.
//!
//! The critic must answer with one verdict from a closed set. ESConv, CIMA and
//! P4G use `Solved` / `Ongoing`; CraigslistBargain uses `Deal <price>` /
//! `Rejected` / `Ongoing`. Matching is case-insensitive and ignores
//! surrounding quotes, markdown emphasis and trailing punctuation. Anything
//! else is malformed.

use std::sync::OnceLock;

use regex::Regex;

use crate::action::Dataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticVerdict {
    Solved,
    Ongoing,
    /// `price` is `None` when the critic confirmed a deal without a
    /// readable price.
    Deal { price: Option<f64> },
    Rejected,
}

fn price_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(\d{1,3}(?:,\d{3})+|\d+)(\.\d+)?").expect("valid regex")
    })
}

/// First price-looking number in `text`. Tolerates a currency symbol and
/// thousands separators.
pub fn extract_deal_price(text: &str) -> Option<f64> {
    let caps = price_pattern().captures(text)?;
    let whole = caps[1].replace(',', "");
    let frac = caps.get(2).map_or("", |m| m.as_str());
    format!("{whole}{frac}").parse().ok()
}

fn trim_decoration(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || "*_`\"'.,;:!".contains(c))
}

pub fn parse_verdict(dataset: Dataset, text: &str) -> Option<CriticVerdict> {
    let line = trim_decoration(text.lines().find(|l| !l.trim().is_empty())?);
    let mut words = line.splitn(2, char::is_whitespace);
    let head = trim_decoration(words.next()?).to_ascii_lowercase();
    let rest = words.next().unwrap_or("").trim();
    let bargaining = dataset == Dataset::CraigslistBargain;
    match head.as_str() {
        "ongoing" if rest.is_empty() => Some(CriticVerdict::Ongoing),
        "solved" if rest.is_empty() && !bargaining => Some(CriticVerdict::Solved),
        "rejected" if rest.is_empty() && bargaining => Some(CriticVerdict::Rejected),
        "deal" if bargaining => Some(CriticVerdict::Deal {
            price: extract_deal_price(rest),
        }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prices() {
        assert_eq!(extract_deal_price("12"), Some(12.0));
        assert_eq!(extract_deal_price("$12.50"), Some(12.5));
        assert_eq!(extract_deal_price("we agreed on $1,650 in the end"), Some(1650.0));
        assert_eq!(extract_deal_price("no deal"), None);
    }

    #[test]
    fn verdicts() {
        use CriticVerdict::*;
        assert_eq!(parse_verdict(Dataset::EsConv, "Solved"), Some(Solved));
        assert_eq!(parse_verdict(Dataset::EsConv, "  **solved.** "), Some(Solved));
        assert_eq!(parse_verdict(Dataset::P4g, "ONGOING\n"), Some(Ongoing));
        assert_eq!(parse_verdict(Dataset::EsConv, "I think it is solved"), None);
        assert_eq!(parse_verdict(Dataset::EsConv, "Deal 12"), None);
        assert_eq!(parse_verdict(Dataset::EsConv, ""), None);
        assert_eq!(
            parse_verdict(Dataset::CraigslistBargain, "Deal 12"),
            Some(Deal { price: Some(12.0) })
        );
        assert_eq!(
            parse_verdict(Dataset::CraigslistBargain, "deal at $12.50"),
            Some(Deal { price: Some(12.5) })
        );
        assert_eq!(
            parse_verdict(Dataset::CraigslistBargain, "Deal"),
            Some(Deal { price: None })
        );
        assert_eq!(parse_verdict(Dataset::CraigslistBargain, "Rejected"), Some(Rejected));
        assert_eq!(parse_verdict(Dataset::CraigslistBargain, "Solved"), None);
    }
}
