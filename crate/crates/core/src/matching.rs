//! Temporal caption–action matching.
//!
//! A clip and an action match when either
//!
//! * rule A: `|clip.start - action.start| < max_start_diff_s`, the clip ends
//!   strictly after the action, and `iou > iou_low`; or
//! * rule B: `iou > iou_high`.
//!
//! All comparisons are strict. IoU here divides the intersection by the hull
//! span `max(e1, e2) - min(s1, s2)`, which is not the set union when the two
//! intervals are disjoint (the intersection is zero then anyway).

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{ActionRecord, ClipRecord, DatasetManifest, TimeInterval, VideoEntry};

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("clip `{clip_video}` and action `{action_video}` belong to different videos")]
    VideoMismatch {
        clip_video: String,
        action_video: String,
    },
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("match references unknown clip `{clip_id}` in video `{video_id}`")]
    UnknownClip { video_id: String, clip_id: String },
    #[error(
        "match references action #{action_index} but video `{video_id}` has {available} actions"
    )]
    UnknownAction {
        video_id: String,
        action_index: usize,
        available: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchThresholds {
    pub max_start_diff_s: f64,
    pub iou_low: f64,
    pub iou_high: f64,
}

impl Default for MatchThresholds {
    fn default() -> Self {
        Self {
            max_start_diff_s: 5.0,
            iou_low: 0.2,
            iou_high: 0.5,
        }
    }
}

impl MatchThresholds {
    pub fn new(max_start_diff_s: f64, iou_low: f64, iou_high: f64) -> Result<Self, MatchError> {
        let th = Self {
            max_start_diff_s,
            iou_low,
            iou_high,
        };
        th.check()?;
        Ok(th)
    }

    pub fn check(&self) -> Result<(), MatchError> {
        if self.max_start_diff_s.is_nan() || self.max_start_diff_s < 0.0 {
            return Err(MatchError::InvalidThresholds(format!(
                "max_start_diff_s must be >= 0, got {}",
                self.max_start_diff_s
            )));
        }
        if !(0.0 <= self.iou_low && self.iou_low <= self.iou_high && self.iou_high <= 1.0) {
            return Err(MatchError::InvalidThresholds(format!(
                "need 0 <= iou_low <= iou_high <= 1, got {} / {}",
                self.iou_low, self.iou_high
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    RuleA,
    RuleB,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchDecision {
    pub iou: f64,
    pub start_diff_s: f64,
    pub rule: Rule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub video_id: String,
    pub clip_id: String,
    pub action_index: usize,
    pub iou: f64,
    pub start_diff_s: f64,
    pub rule: Rule,
}

/// Intersection over hull span; 0 when the span is not positive.
pub fn interval_iou(a: &TimeInterval, b: &TimeInterval) -> f64 {
    let intersection = (a.end_s.min(b.end_s) - a.start_s.max(b.start_s)).max(0.0);
    let span = a.end_s.max(b.end_s) - a.start_s.min(b.start_s);
    if span > 0.0 {
        intersection / span
    } else {
        0.0
    }
}

fn decide(
    clip: &TimeInterval,
    action: &TimeInterval,
    th: &MatchThresholds,
) -> Option<MatchDecision> {
    let start_diff_s = (clip.start_s - action.start_s).abs();
    let iou = interval_iou(clip, action);
    let rule_b = iou > th.iou_high;
    let rule_a =
        start_diff_s < th.max_start_diff_s && clip.end_s > action.end_s && iou > th.iou_low;
    let rule = if rule_b {
        Rule::RuleB
    } else if rule_a {
        Rule::RuleA
    } else {
        return None;
    };
    Some(MatchDecision {
        iou,
        start_diff_s,
        rule,
    })
}

/// Evaluates both rules for one pair. Rule B is reported when both fire.
pub fn match_clip_action(
    clip: &ClipRecord,
    action: &ActionRecord,
    th: &MatchThresholds,
) -> Result<Option<MatchDecision>, MatchError> {
    if clip.video_id != action.video_id {
        return Err(MatchError::VideoMismatch {
            clip_video: clip.video_id.clone(),
            action_video: action.video_id.clone(),
        });
    }
    Ok(decide(&clip.interval, &action.interval, th))
}

fn match_video(
    video_id: &str,
    entry: &VideoEntry,
    actions: &[ActionRecord],
    th: &MatchThresholds,
) -> Vec<MatchRecord> {
    let mut out = Vec::new();
    for clip in &entry.clips {
        for (action_index, action) in actions.iter().enumerate() {
            if let Some(d) = decide(&clip.interval, &action.interval, th) {
                out.push(MatchRecord {
                    video_id: video_id.to_owned(),
                    clip_id: clip.clip_id.clone(),
                    action_index,
                    iou: d.iou,
                    start_diff_s: d.start_diff_s,
                    rule: d.rule,
                });
            }
        }
    }
    out
}

/// Matches every clip against every action of the same video.
///
/// Output is ordered by video id, then clip start, then action index.
pub fn match_dataset(m: &DatasetManifest, th: &MatchThresholds) -> Vec<MatchRecord> {
    m.videos
        .iter()
        .flat_map(|(id, entry)| match_video(id, entry, m.actions_for(id), th))
        .collect()
}

/// Same output as [`match_dataset`], with videos processed on the current
/// rayon pool.
pub fn match_dataset_par(m: &DatasetManifest, th: &MatchThresholds) -> Vec<MatchRecord> {
    let per_video: Vec<Vec<MatchRecord>> = m
        .videos
        .par_iter()
        .map(|(id, entry)| match_video(id, entry, m.actions_for(id), th))
        .collect();
    per_video.into_iter().flatten().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterPolicy {
    KeepAll,
    BestPerClip,
}

/// Actions kept for one surviving clip. Under [`FilterPolicy::BestPerClip`]
/// this holds exactly one index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipAssignment {
    pub video_id: String,
    pub clip_id: String,
    pub action_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub manifest: DatasetManifest,
    /// In manifest order (video id, then clip order).
    pub assignments: Vec<ClipAssignment>,
}

/// Drops unmatched clips and resolves each remaining clip's actions under
/// `policy`. Videos left without clips are dropped along with their actions.
pub fn filter_matched(
    m: &DatasetManifest,
    matches: &[MatchRecord],
    policy: FilterPolicy,
) -> Result<FilterOutput, MatchError> {
    let known: BTreeSet<(&str, &str)> = m
        .videos
        .iter()
        .flat_map(|(v, e)| {
            e.clips
                .iter()
                .map(move |c| (v.as_str(), c.clip_id.as_str()))
        })
        .collect();
    let mut by_clip: BTreeMap<(&str, &str), Vec<&MatchRecord>> = BTreeMap::new();
    for rec in matches {
        if !known.contains(&(rec.video_id.as_str(), rec.clip_id.as_str())) {
            return Err(MatchError::UnknownClip {
                video_id: rec.video_id.clone(),
                clip_id: rec.clip_id.clone(),
            });
        }
        let available = m.actions_for(&rec.video_id).len();
        if rec.action_index >= available {
            return Err(MatchError::UnknownAction {
                video_id: rec.video_id.clone(),
                action_index: rec.action_index,
                available,
            });
        }
        by_clip
            .entry((&rec.video_id, &rec.clip_id))
            .or_default()
            .push(rec);
    }

    let mut out = DatasetManifest {
        split: m.split,
        ..Default::default()
    };
    let mut assignments = Vec::new();
    for (video_id, entry) in &m.videos {
        let actions = m.actions_for(video_id);
        let mut kept = VideoEntry {
            duration_s: entry.duration_s,
            clips: Vec::new(),
        };
        for clip in &entry.clips {
            let Some(recs) = by_clip.get(&(video_id.as_str(), clip.clip_id.as_str())) else {
                continue;
            };
            let action_indices = match policy {
                FilterPolicy::KeepAll => {
                    let mut idx: Vec<usize> = recs.iter().map(|r| r.action_index).collect();
                    idx.sort_unstable();
                    idx.dedup();
                    idx
                }
                FilterPolicy::BestPerClip => vec![best_action(recs, actions)],
            };
            kept.clips.push(clip.clone());
            assignments.push(ClipAssignment {
                video_id: video_id.clone(),
                clip_id: clip.clip_id.clone(),
                action_indices,
            });
        }
        if !kept.clips.is_empty() {
            out.videos.insert(video_id.clone(), kept);
            if let Some(a) = m.actions.get(video_id) {
                out.actions.insert(video_id.clone(), a.clone());
            }
        }
    }
    Ok(FilterOutput {
        manifest: out,
        assignments,
    })
}

// highest IoU, then earliest action start, then lowest index
fn best_action(recs: &[&MatchRecord], actions: &[ActionRecord]) -> usize {
    recs.iter()
        .min_by(|a, b| {
            b.iou
                .total_cmp(&a.iou)
                .then_with(|| {
                    actions[a.action_index]
                        .interval
                        .start_s
                        .total_cmp(&actions[b.action_index].interval.start_s)
                })
                .then_with(|| a.action_index.cmp(&b.action_index))
        })
        .map(|r| r.action_index)
        .expect("clip has at least one match")
}
