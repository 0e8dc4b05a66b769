//! Annotation-quality aggregation for human matching tiers and 0–6 VLM
//! caption ratings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("no judgments to aggregate")]
    Empty,
    #[error("rating {rating} for item `{item_id}` is outside 0..=6")]
    RatingOutOfRange { item_id: String, rating: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    #[serde(alias = "Very Match")]
    VeryMatch,
    #[serde(alias = "Good Match")]
    GoodMatch,
    #[serde(alias = "Somehow Match")]
    SomehowMatch,
    #[serde(alias = "Not Match")]
    NotMatch,
}

impl Tier {
    pub const ALL: [Tier; 4] = [
        Tier::VeryMatch,
        Tier::GoodMatch,
        Tier::SomehowMatch,
        Tier::NotMatch,
    ];
}

pub fn tier_to_score(tier: Tier) -> u32 {
    match tier {
        Tier::VeryMatch => 100,
        Tier::GoodMatch => 85,
        Tier::SomehowMatch => 70,
        Tier::NotMatch => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierJudgment {
    pub item_id: String,
    pub rater_id: String,
    pub tier: Tier,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TierSummary {
    /// Judgments are averaged per item first, then across items.
    pub mean_score: f64,
    /// Plain mean over all judgments.
    pub judgment_mean: f64,
    pub items: usize,
    pub judgments: usize,
    pub per_tier_counts: BTreeMap<Tier, usize>,
    pub per_rater_means: BTreeMap<String, f64>,
}

pub fn aggregate_tiers(judgments: &[TierJudgment]) -> Result<TierSummary, ScoringError> {
    if judgments.is_empty() {
        return Err(ScoringError::Empty);
    }
    let mut per_item: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let mut per_rater: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let mut per_tier_counts: BTreeMap<Tier, usize> = Tier::ALL.iter().map(|&t| (t, 0)).collect();
    let mut total = 0.0;
    for j in judgments {
        let score = f64::from(tier_to_score(j.tier));
        total += score;
        *per_tier_counts.entry(j.tier).or_default() += 1;
        let item = per_item.entry(&j.item_id).or_default();
        item.0 += score;
        item.1 += 1;
        let rater = per_rater.entry(&j.rater_id).or_default();
        rater.0 += score;
        rater.1 += 1;
    }
    let item_means: f64 = per_item.values().map(|(s, n)| s / *n as f64).sum();
    Ok(TierSummary {
        mean_score: item_means / per_item.len() as f64,
        judgment_mean: total / judgments.len() as f64,
        items: per_item.len(),
        judgments: judgments.len(),
        per_tier_counts,
        per_rater_means: per_rater
            .into_iter()
            .map(|(k, (s, n))| (k.to_owned(), s / n as f64))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmRating {
    pub item_id: String,
    /// Kept wide so out-of-range input can be reported rather than truncated.
    pub rating: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatingSummary {
    pub mean_rating: f64,
    /// Share of ratings in the "with hallucination" tiers 0, 1 and 2.
    pub hallucination_rate: f64,
    pub distribution: [usize; 7],
    pub n: usize,
}

pub fn aggregate_ratings(ratings: &[VlmRating]) -> Result<RatingSummary, ScoringError> {
    if ratings.is_empty() {
        return Err(ScoringError::Empty);
    }
    let mut distribution = [0usize; 7];
    for r in ratings {
        if !(0..=6).contains(&r.rating) {
            return Err(ScoringError::RatingOutOfRange {
                item_id: r.item_id.clone(),
                rating: r.rating,
            });
        }
        distribution[r.rating as usize] += 1;
    }
    let n = ratings.len();
    let sum: i64 = ratings.iter().map(|r| r.rating).sum();
    let hallucinated: usize = distribution[..3].iter().sum();
    Ok(RatingSummary {
        mean_rating: sum as f64 / n as f64,
        hallucination_rate: hallucinated as f64 / n as f64,
        distribution,
        n,
    })
}
