//! Narrative sequences and the records derived from them: cumulative
//! histories, interleaved training streams, and rolling conditioning windows.
//!
//! Windows of context length `k` span `2k` consecutive steps: the older `k`
//! are reference frames and the newer `k` are targets. Consecutive windows
//! advance by `k`, so each window's targets are the next window's
//! references.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::DatasetManifest;
use crate::matching::ClipAssignment;

pub const DEFAULT_SEPARATOR: &str = "\n";
pub const MAX_CONTEXT: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ContextError {
    #[error("sequence `{0}` has no steps")]
    EmptySequence(String),
    #[error("sequence `{sequence_id}`: expected step {expected}, found {found}")]
    NonContiguous {
        sequence_id: String,
        expected: usize,
        found: usize,
    },
    #[error("context window must be at least 1")]
    ZeroContextWindow,
    #[error("step {t} is outside 1..={len}")]
    StepOutOfRange { t: usize, len: usize },
    #[error("context length k must be in 1..={MAX_CONTEXT}, got {0}")]
    BadContextLength(usize),
    #[error("sequence `{sequence_id}` has {len} steps, fewer than 2k = {needed}")]
    TooShort {
        sequence_id: String,
        len: usize,
        needed: usize,
    },
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based position in the sequence.
    pub index: usize,
    pub action: String,
    pub caption: String,
    pub embedding_id: String,
    pub keyframe: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NarrativeSequence {
    pub sequence_id: String,
    steps: Vec<StepRecord>,
    context_window: usize,
}

impl NarrativeSequence {
    pub fn new(
        sequence_id: impl Into<String>,
        steps: Vec<StepRecord>,
        context_window: usize,
    ) -> Result<Self, ContextError> {
        let sequence_id = sequence_id.into();
        if steps.is_empty() {
            return Err(ContextError::EmptySequence(sequence_id));
        }
        if context_window == 0 {
            return Err(ContextError::ZeroContextWindow);
        }
        for (i, s) in steps.iter().enumerate() {
            if s.index != i + 1 {
                return Err(ContextError::NonContiguous {
                    sequence_id,
                    expected: i + 1,
                    found: s.index,
                });
            }
        }
        Ok(Self {
            sequence_id,
            steps,
            context_window,
        })
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn context_window(&self) -> usize {
        self.context_window
    }

    fn step(&self, t: usize) -> &StepRecord {
        &self.steps[t - 1]
    }
}

/// Everything generated before step `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRecord {
    pub t: usize,
    pub actions: Vec<String>,
    pub captions: Vec<String>,
    pub embedding_ids: Vec<String>,
}

pub fn build_history(seq: &NarrativeSequence, t: usize) -> Result<HistoryRecord, ContextError> {
    if t == 0 || t > seq.len() {
        return Err(ContextError::StepOutOfRange { t, len: seq.len() });
    }
    let prefix = &seq.steps[..t - 1];
    Ok(HistoryRecord {
        t,
        actions: prefix.iter().map(|s| s.action.clone()).collect(),
        captions: prefix.iter().map(|s| s.caption.clone()).collect(),
        embedding_ids: prefix.iter().map(|s| s.embedding_id.clone()).collect(),
    })
}

/// Joins captions in temporal order.
pub fn tile_captions<S: AsRef<str>>(captions: &[S], separator: &str) -> String {
    captions
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join(separator)
}

pub fn split_tiled<'a>(tiled: &'a str, separator: &str) -> Vec<&'a str> {
    tiled.split(separator).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningWindow {
    pub window_index: usize,
    pub k: usize,
    pub reference_steps: Vec<usize>,
    pub target_steps: Vec<usize>,
    pub tiled_caption: String,
    pub reference_frames: Vec<String>,
    pub target_frames: Vec<String>,
    pub reference_embeddings: Vec<String>,
    pub target_embeddings: Vec<String>,
    /// Set on a trailing window that re-uses the previous targets as
    /// references while its own targets are the last `k` steps. Its
    /// references and targets overlap, so it spans fewer than `2k` steps.
    pub reuses_reference_block: bool,
}

fn make_window(
    seq: &NarrativeSequence,
    window_index: usize,
    k: usize,
    refs: std::ops::RangeInclusive<usize>,
    targets: std::ops::RangeInclusive<usize>,
    separator: &str,
    reuses_reference_block: bool,
) -> ConditioningWindow {
    let covered: Vec<&str> = (*refs.start()..=*targets.end())
        .map(|t| seq.step(t).caption.as_str())
        .collect();
    let pick = |r: &std::ops::RangeInclusive<usize>,
                f: fn(&StepRecord) -> &String|
     -> Vec<String> { r.clone().map(|t| f(seq.step(t)).clone()).collect() };
    ConditioningWindow {
        window_index,
        k,
        reference_steps: refs.clone().collect(),
        target_steps: targets.clone().collect(),
        tiled_caption: tile_captions(&covered, separator),
        reference_frames: pick(&refs, |s| &s.keyframe),
        target_frames: pick(&targets, |s| &s.keyframe),
        reference_embeddings: pick(&refs, |s| &s.embedding_id),
        target_embeddings: pick(&targets, |s| &s.embedding_id),
        reuses_reference_block,
    }
}

pub fn build_windows(
    seq: &NarrativeSequence,
    k: usize,
) -> Result<Vec<ConditioningWindow>, ContextError> {
    build_windows_with(seq, k, DEFAULT_SEPARATOR)
}

/// Rolling windows with stride `k`, starting from ground-truth steps `1..=k`.
///
/// When `n - 2k` is not a multiple of `k`, a final window takes the previous
/// targets as references and the last `k` steps as targets, so every step
/// from `2k` onwards is a target somewhere and the rolling identity holds.
pub fn build_windows_with(
    seq: &NarrativeSequence,
    k: usize,
    separator: &str,
) -> Result<Vec<ConditioningWindow>, ContextError> {
    if !(1..=MAX_CONTEXT).contains(&k) {
        return Err(ContextError::BadContextLength(k));
    }
    let n = seq.len();
    if n < 2 * k {
        return Err(ContextError::TooShort {
            sequence_id: seq.sequence_id.clone(),
            len: n,
            needed: 2 * k,
        });
    }
    let mut windows = Vec::new();
    let mut start = 1;
    while start + 2 * k - 1 <= n {
        windows.push(make_window(
            seq,
            windows.len(),
            k,
            start..=start + k - 1,
            start + k..=start + 2 * k - 1,
            separator,
            false,
        ));
        start += k;
    }
    // `start` now begins the last full window's target block
    let last_target = start + k - 1;
    if last_target < n {
        windows.push(make_window(
            seq,
            windows.len(),
            k,
            start..=last_target,
            n - k + 1..=n,
            separator,
            true,
        ));
    }
    Ok(windows)
}

/// One block of the interleaved action → caption → visual stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainingBlock {
    Action {
        sequence_id: String,
        t: usize,
        text: String,
    },
    Caption {
        sequence_id: String,
        t: usize,
        text: String,
    },
    Visual {
        sequence_id: String,
        t: usize,
        embedding_id: String,
        keyframe: String,
    },
}

/// Emits `(action, caption, visual)` per step, keeping only the last
/// `context_window` steps.
pub fn export_training_records(seq: &NarrativeSequence) -> Vec<TrainingBlock> {
    let skip = seq.len().saturating_sub(seq.context_window);
    seq.steps[skip..]
        .iter()
        .flat_map(|s| {
            let id = &seq.sequence_id;
            [
                TrainingBlock::Action {
                    sequence_id: id.clone(),
                    t: s.index,
                    text: s.action.clone(),
                },
                TrainingBlock::Caption {
                    sequence_id: id.clone(),
                    t: s.index,
                    text: s.caption.clone(),
                },
                TrainingBlock::Visual {
                    sequence_id: id.clone(),
                    t: s.index,
                    embedding_id: s.embedding_id.clone(),
                    keyframe: s.keyframe.clone(),
                },
            ]
        })
        .collect()
}

/// Inverse of [`export_training_records`] for a single sequence: rebuilds
/// the step list (with original indices) from a complete block stream.
pub fn steps_from_training_records(
    blocks: &[TrainingBlock],
) -> Result<Vec<StepRecord>, ContextError> {
    let bad = |i: usize, message: &str| ContextError::Record {
        line: i + 1,
        message: message.to_owned(),
    };
    if !blocks.len().is_multiple_of(3) {
        return Err(bad(
            blocks.len(),
            "block stream does not end on a complete step",
        ));
    }
    blocks
        .chunks_exact(3)
        .enumerate()
        .map(|(i, chunk)| match chunk {
            [TrainingBlock::Action {
                t: ta,
                text: action,
                ..
            }, TrainingBlock::Caption {
                t: tc,
                text: caption,
                ..
            }, TrainingBlock::Visual {
                t: tv,
                embedding_id,
                keyframe,
                ..
            }] if ta == tc && tc == tv => Ok(StepRecord {
                index: *ta,
                action: action.clone(),
                caption: caption.clone(),
                embedding_id: embedding_id.clone(),
                keyframe: keyframe.clone(),
            }),
            _ => Err(bad(
                i * 3,
                "expected action, caption, visual blocks for one step",
            )),
        })
        .collect()
}

/// Line-delimited window record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub sequence_id: String,
    pub window_index: usize,
    pub k: usize,
    pub ref_step_indices: Vec<usize>,
    pub target_step_indices: Vec<usize>,
    pub tiled_caption: String,
    /// Reference embeddings followed by target embeddings.
    pub embedding_ids: Vec<String>,
    pub reference_frames: Vec<String>,
    pub target_frames: Vec<String>,
    pub reuses_reference_block: bool,
}

impl WindowRecord {
    pub fn from_window(sequence_id: &str, w: &ConditioningWindow) -> Self {
        Self {
            sequence_id: sequence_id.to_owned(),
            window_index: w.window_index,
            k: w.k,
            ref_step_indices: w.reference_steps.clone(),
            target_step_indices: w.target_steps.clone(),
            tiled_caption: w.tiled_caption.clone(),
            embedding_ids: w
                .reference_embeddings
                .iter()
                .chain(&w.target_embeddings)
                .cloned()
                .collect(),
            reference_frames: w.reference_frames.clone(),
            target_frames: w.target_frames.clone(),
            reuses_reference_block: w.reuses_reference_block,
        }
    }
}

/// One step line of a sequence file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepLine {
    pub sequence_id: String,
    pub t: usize,
    pub action: String,
    pub caption: String,
    pub embedding_id: String,
    pub keyframe: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_window: Option<usize>,
}

/// Reads step lines grouped by `sequence_id` (any order). Sequences without
/// an explicit `context_window` use `default_window`, or their own length.
pub fn parse_sequences<R: BufRead>(
    input: R,
    default_window: Option<usize>,
) -> Result<Vec<NarrativeSequence>, ContextError> {
    let mut grouped: BTreeMap<String, (Vec<StepRecord>, Option<usize>)> = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| ContextError::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: StepLine = serde_json::from_str(&line).map_err(|e| ContextError::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        let entry = grouped.entry(row.sequence_id).or_default();
        if row.context_window.is_some() {
            entry.1 = row.context_window;
        }
        entry.0.push(StepRecord {
            index: row.t,
            action: row.action,
            caption: row.caption,
            embedding_id: row.embedding_id,
            keyframe: row.keyframe,
        });
    }
    grouped
        .into_iter()
        .map(|(id, (mut steps, window))| {
            steps.sort_by_key(|s| s.index);
            let window = window.or(default_window).unwrap_or(steps.len());
            NarrativeSequence::new(id, steps, window)
        })
        .collect()
}

/// Builds one sequence per video from a filtered manifest: each surviving
/// clip becomes a step whose action text joins its assigned actions.
/// Embedding ids and keyframes are `video_id/clip_id`.
pub fn sequences_from_assignments(
    m: &DatasetManifest,
    assignments: &[ClipAssignment],
    context_window: Option<usize>,
) -> Result<Vec<NarrativeSequence>, ContextError> {
    let lookup: BTreeMap<(&str, &str), &ClipAssignment> = assignments
        .iter()
        .map(|a| ((a.video_id.as_str(), a.clip_id.as_str()), a))
        .collect();
    let mut out = Vec::new();
    for (video_id, entry) in &m.videos {
        let actions = m.actions_for(video_id);
        let mut steps = Vec::new();
        for clip in &entry.clips {
            let Some(a) = lookup.get(&(video_id.as_str(), clip.clip_id.as_str())) else {
                continue;
            };
            let action = a
                .action_indices
                .iter()
                .filter_map(|&i| actions.get(i))
                .map(|r| r.description.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let key = format!("{video_id}/{}", clip.clip_id);
            steps.push(StepRecord {
                index: steps.len() + 1,
                action,
                caption: clip.caption.clone(),
                embedding_id: key.clone(),
                keyframe: key,
            });
        }
        if !steps.is_empty() {
            let window = context_window.unwrap_or(steps.len());
            out.push(NarrativeSequence::new(video_id.clone(), steps, window)?);
        }
    }
    Ok(out)
}
