//! Per-dataset, per-label tallies of post-summary categories.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use mgdil_core::ingest::Label;
use mgdil_core::summary::{Dimension, PostSummary};

use crate::LearnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub dataset: String,
    pub label: String,
    pub dimension: String,
    pub category: String,
    /// Users carrying this category (each user counts once per category).
    pub count: usize,
    pub users: usize,
    /// `count / users`.
    pub frequency: f64,
}

/// Rows for every category of every dimension, per (dataset, label) group
/// that has at least one user. Groups are ordered by dataset then label.
pub fn distribution_report(items: &[(PostSummary, Label, String)]) -> Vec<DistributionRow> {
    let mut groups: BTreeMap<(String, usize), Vec<&PostSummary>> = BTreeMap::new();
    for (s, label, dataset) in items {
        groups.entry((dataset.clone(), label.index())).or_default().push(s);
    }
    let mut rows = Vec::new();
    for ((dataset, label), summaries) in groups {
        let users = summaries.len();
        for dim in Dimension::ALL {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for s in &summaries {
                let mut seen = s.labels(dim);
                seen.sort_unstable();
                seen.dedup();
                for l in seen {
                    *counts.entry(l).or_default() += 1;
                }
            }
            for category in dim.labels() {
                let count = counts.get(category).copied().unwrap_or(0);
                rows.push(DistributionRow {
                    dataset: dataset.clone(),
                    label: Label::ALL[label].as_str().to_string(),
                    dimension: dim.as_str().to_string(),
                    category: category.to_string(),
                    count,
                    users,
                    frequency: count as f64 / users as f64,
                });
            }
        }
    }
    rows
}

pub fn write_distribution_csv<W: std::io::Write>(w: W, rows: &[DistributionRow]) -> Result<(), LearnError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| LearnError::Io(e.to_string()))?;
    }
    out.flush().map_err(|e| LearnError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    use mgdil_core::summary::{Emotion, Function, LabelSet, Sentiment, Style, Theme};

    fn s(theme: Vec<Theme>, emo: Vec<Emotion>) -> PostSummary {
        PostSummary {
            theme: LabelSet::new(theme).unwrap(),
            sent: LabelSet::new(vec![Sentiment::Negative]).unwrap(),
            emo: LabelSet::new(emo).unwrap(),
            style: LabelSet::new(vec![Style::Formal]).unwrap(),
            func: LabelSet::new(vec![Function::InformationSharing]).unwrap(),
        }
    }

    fn freq(rows: &[DistributionRow], ds: &str, label: &str, dim: &str, cat: &str) -> f64 {
        rows.iter()
            .find(|r| r.dataset == ds && r.label == label && r.dimension == dim && r.category == cat)
            .map(|r| r.frequency)
            .unwrap()
    }

    #[test]
    fn single_user_frequency_is_one() {
        let a = s(vec![Theme::Politics], vec![Emotion::HostileOrAggressive]);
        let rows = distribution_report(&[(a, Label::Bot, "d1".into())]);
        assert_eq!(freq(&rows, "d1", "bot", "theme", "Politics"), 1.0);
        assert_eq!(freq(&rows, "d1", "bot", "theme", "Sports"), 0.0);
    }

    #[test]
    fn two_user_hand_tally() {
        let a = s(vec![Theme::Politics], vec![Emotion::HostileOrAggressive, Emotion::MixedOrUnclear]);
        let b = s(vec![Theme::Politics, Theme::Sports], vec![Emotion::CalmOrObjective]);
        let rows = distribution_report(&[(a, Label::Human, "d".into()), (b, Label::Human, "d".into())]);
        assert_eq!(freq(&rows, "d", "human", "theme", "Politics"), 1.0);
        assert_eq!(freq(&rows, "d", "human", "theme", "Sports"), 0.5);
        assert_eq!(freq(&rows, "d", "human", "emo", "HostileOrAggressive"), 0.5);
        assert_eq!(freq(&rows, "d", "human", "emo", "CalmOrObjective"), 0.5);
        // row sums equal label assignments per user
        let emo: f64 = rows.iter().filter(|r| r.dimension == "emo").map(|r| r.frequency).sum();
        assert!((emo - 3.0 / 2.0).abs() < 1e-12);
    }
}
