//! Corpus data model and the line-delimited manifest format.
//!
//! A manifest file is UTF-8 with one flat JSON object per line. Each object
//! carries a `kind` field:
//!
//! ```text
//! {"kind":"video","video_id":"v1","duration_s":312.5}
//! {"kind":"clip","video_id":"v1","clip_id":"c0","start_s":10.0,"end_s":24.2,"caption":"..."}
//! {"kind":"action","video_id":"v1","start_s":11.3,"end_s":20.0,"description":"..."}
//! ```
//!
//! A manifest produced by [`partition`] additionally starts with a
//! `{"kind":"manifest","split":"train"}` header line. Record order in the
//! file does not matter: clips and actions are sorted per video on ingest.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: field `{field}`: {reason}")]
    Field {
        line: usize,
        field: &'static str,
        reason: String,
    },
    #[error("line {line}: clip `{clip_id}` in video `{video_id}` has invalid interval [{start_s}, {end_s}]")]
    InvalidClipInterval {
        line: usize,
        video_id: String,
        clip_id: String,
        start_s: f64,
        end_s: f64,
    },
    #[error("line {line}: action in video `{video_id}` has invalid interval [{start_s}, {end_s}]")]
    InvalidActionInterval {
        line: usize,
        video_id: String,
        start_s: f64,
        end_s: f64,
    },
    #[error("line {line}: duplicate clip_id `{clip_id}` in video `{video_id}`")]
    DuplicateClip {
        line: usize,
        video_id: String,
        clip_id: String,
    },
    #[error("line {line}: duplicate video record `{video_id}`")]
    DuplicateVideo { line: usize, video_id: String },
    #[error("line {line}: conflicting split header")]
    ConflictingSplit { line: usize },
    #[error("unknown video ids in validation set: {}", .0.join(", "))]
    UnknownVideoIds(Vec<String>),
    #[error("id `{0}` contains a line break and cannot be written")]
    UnwritableId(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Half-open time span in seconds, relative to the start of its video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start_s: f64,
    pub end_s: f64,
}

impl TimeInterval {
    /// Checked constructor. Use a struct literal to hold unvalidated data.
    pub fn new(start_s: f64, end_s: f64) -> Option<Self> {
        let interval = Self { start_s, end_s };
        interval.is_valid().then_some(interval)
    }

    pub fn is_valid(&self) -> bool {
        self.start_s.is_finite()
            && self.end_s.is_finite()
            && self.start_s >= 0.0
            && self.end_s > self.start_s
    }

    pub fn length(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub video_id: String,
    pub clip_id: String,
    pub interval: TimeInterval,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub video_id: String,
    pub interval: TimeInterval,
    pub description: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub duration_s: Option<f64>,
    pub clips: Vec<ClipRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// In-memory corpus: videos with their clips, and per-video action spans.
///
/// Videos and actions are keyed independently, so a video may have actions
/// without a video record and vice versa.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub videos: BTreeMap<String, VideoEntry>,
    pub actions: BTreeMap<String, Vec<ActionRecord>>,
    pub split: Option<Split>,
}

impl DatasetManifest {
    pub fn clip_count(&self) -> usize {
        self.videos.values().map(|v| v.clips.len()).sum()
    }

    pub fn action_count(&self) -> usize {
        self.actions.values().map(Vec::len).sum()
    }

    pub fn actions_for(&self, video_id: &str) -> &[ActionRecord] {
        self.actions.get(video_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn clips(&self) -> impl Iterator<Item = &ClipRecord> {
        self.videos.values().flat_map(|v| v.clips.iter())
    }

    /// Restores the canonical per-video order of clips and actions.
    pub fn sort_records(&mut self) {
        for entry in self.videos.values_mut() {
            entry.clips.sort_by(clip_order);
        }
        for actions in self.actions.values_mut() {
            actions.sort_by(action_order);
        }
    }
}

fn clip_order(a: &ClipRecord, b: &ClipRecord) -> Ordering {
    a.interval
        .start_s
        .total_cmp(&b.interval.start_s)
        .then_with(|| a.clip_id.cmp(&b.clip_id))
}

fn action_order(a: &ActionRecord, b: &ActionRecord) -> Ordering {
    a.interval
        .start_s
        .total_cmp(&b.interval.start_s)
        .then_with(|| a.interval.end_s.total_cmp(&b.interval.end_s))
        .then_with(|| a.description.cmp(&b.description))
}

/// Reads a manifest and rejects records that break the interval or
/// clip-id invariants.
pub fn parse_manifest<R: BufRead>(input: R) -> Result<DatasetManifest, ManifestError> {
    read_manifest(input, true)
}

/// Reads a manifest checking only syntax and field types. Invariant breaches
/// are left for [`validate_manifest`] to report.
pub fn parse_manifest_unchecked<R: BufRead>(input: R) -> Result<DatasetManifest, ManifestError> {
    read_manifest(input, false)
}

pub fn parse_manifest_str(input: &str) -> Result<DatasetManifest, ManifestError> {
    parse_manifest(input.as_bytes())
}

fn read_manifest<R: BufRead>(input: R, strict: bool) -> Result<DatasetManifest, ManifestError> {
    let mut manifest = DatasetManifest::default();
    let mut declared = BTreeSet::new();
    let mut seen_clips: BTreeSet<(String, String)> = BTreeSet::new();

    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let obj = match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(obj)) => obj,
            Ok(_) => {
                return Err(ManifestError::Syntax {
                    line: line_no,
                    message: "record is not a JSON object".into(),
                })
            }
            Err(e) => {
                return Err(ManifestError::Syntax {
                    line: line_no,
                    message: e.to_string(),
                })
            }
        };
        let fields = Fields {
            obj: &obj,
            line: line_no,
        };
        match fields.string("kind")? {
            "manifest" => {
                let split = match fields.opt_string("split")? {
                    None => None,
                    Some("train") => Some(Split::Train),
                    Some("val") => Some(Split::Val),
                    Some(other) => {
                        return Err(fields.bad("split", format!("unknown split `{other}`")))
                    }
                };
                if manifest.split.is_some() && manifest.split != split {
                    return Err(ManifestError::ConflictingSplit { line: line_no });
                }
                manifest.split = split;
            }
            "video" => {
                let video_id = fields.string("video_id")?.to_owned();
                let duration_s = fields.opt_f64("duration_s")?;
                if !declared.insert(video_id.clone()) {
                    return Err(ManifestError::DuplicateVideo {
                        line: line_no,
                        video_id,
                    });
                }
                manifest.videos.entry(video_id).or_default().duration_s = duration_s;
            }
            "clip" => {
                let clip = ClipRecord {
                    video_id: fields.string("video_id")?.to_owned(),
                    clip_id: fields.string("clip_id")?.to_owned(),
                    interval: TimeInterval {
                        start_s: fields.f64("start_s")?,
                        end_s: fields.f64("end_s")?,
                    },
                    caption: fields.string("caption")?.to_owned(),
                };
                if strict {
                    if !clip.interval.is_valid() {
                        return Err(ManifestError::InvalidClipInterval {
                            line: line_no,
                            video_id: clip.video_id,
                            clip_id: clip.clip_id,
                            start_s: clip.interval.start_s,
                            end_s: clip.interval.end_s,
                        });
                    }
                    if !seen_clips.insert((clip.video_id.clone(), clip.clip_id.clone())) {
                        return Err(ManifestError::DuplicateClip {
                            line: line_no,
                            video_id: clip.video_id,
                            clip_id: clip.clip_id,
                        });
                    }
                }
                manifest
                    .videos
                    .entry(clip.video_id.clone())
                    .or_default()
                    .clips
                    .push(clip);
            }
            "action" => {
                let action = ActionRecord {
                    video_id: fields.string("video_id")?.to_owned(),
                    interval: TimeInterval {
                        start_s: fields.f64("start_s")?,
                        end_s: fields.f64("end_s")?,
                    },
                    description: fields.string("description")?.to_owned(),
                };
                if strict && !action.interval.is_valid() {
                    return Err(ManifestError::InvalidActionInterval {
                        line: line_no,
                        video_id: action.video_id,
                        start_s: action.interval.start_s,
                        end_s: action.interval.end_s,
                    });
                }
                manifest
                    .actions
                    .entry(action.video_id.clone())
                    .or_default()
                    .push(action);
            }
            other => return Err(fields.bad("kind", format!("unknown record kind `{other}`"))),
        }
    }

    manifest.sort_records();
    Ok(manifest)
}

struct Fields<'a> {
    obj: &'a Map<String, Value>,
    line: usize,
}

impl<'a> Fields<'a> {
    fn bad(&self, field: &'static str, reason: impl Into<String>) -> ManifestError {
        ManifestError::Field {
            line: self.line,
            field,
            reason: reason.into(),
        }
    }

    fn string(&self, field: &'static str) -> Result<&'a str, ManifestError> {
        match self.obj.get(field) {
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(self.bad(field, "expected a string")),
            None => Err(self.bad(field, "missing")),
        }
    }

    fn opt_string(&self, field: &'static str) -> Result<Option<&'a str>, ManifestError> {
        match self.obj.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.bad(field, "expected a string")),
        }
    }

    fn f64(&self, field: &'static str) -> Result<f64, ManifestError> {
        self.opt_f64(field)?
            .ok_or_else(|| self.bad(field, "missing"))
    }

    fn opt_f64(&self, field: &'static str) -> Result<Option<f64>, ManifestError> {
        match self.obj.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => n
                .as_f64()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| self.bad(field, "number out of range")),
            Some(_) => Err(self.bad(field, "expected a number")),
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line<'a> {
    Manifest {
        split: &'static str,
    },
    Video {
        video_id: &'a str,
        #[serde(skip_serializing_if = "Option::is_none")]
        duration_s: Option<f64>,
    },
    Clip {
        video_id: &'a str,
        clip_id: &'a str,
        start_s: f64,
        end_s: f64,
        caption: &'a str,
    },
    Action {
        video_id: &'a str,
        start_s: f64,
        end_s: f64,
        description: &'a str,
    },
}

/// Writes `m` in canonical order and returns the number of bytes written.
///
/// Every video gets an explicit video record, so reading the output back
/// yields a structurally equal manifest.
pub fn write_manifest<W: Write>(m: &DatasetManifest, mut sink: W) -> Result<usize, ManifestError> {
    let mut written = 0usize;
    let mut emit = |line: &Line<'_>, sink: &mut W| -> Result<(), ManifestError> {
        let mut buf = serde_json::to_vec(line).map_err(io::Error::other)?;
        buf.push(b'\n');
        sink.write_all(&buf)?;
        written += buf.len();
        Ok(())
    };

    if let Some(split) = m.split {
        emit(
            &Line::Manifest {
                split: split.as_str(),
            },
            &mut sink,
        )?;
    }
    let ids: BTreeSet<&String> = m.videos.keys().chain(m.actions.keys()).collect();
    for id in ids {
        if id.contains(['\n', '\r']) {
            return Err(ManifestError::UnwritableId(id.clone()));
        }
        if let Some(entry) = m.videos.get(id) {
            emit(
                &Line::Video {
                    video_id: id,
                    duration_s: entry.duration_s,
                },
                &mut sink,
            )?;
            for clip in &entry.clips {
                emit(
                    &Line::Clip {
                        video_id: &clip.video_id,
                        clip_id: &clip.clip_id,
                        start_s: clip.interval.start_s,
                        end_s: clip.interval.end_s,
                        caption: &clip.caption,
                    },
                    &mut sink,
                )?;
            }
        }
        for action in m.actions_for(id) {
            emit(
                &Line::Action {
                    video_id: &action.video_id,
                    start_s: action.interval.start_s,
                    end_s: action.interval.end_s,
                    description: &action.description,
                },
                &mut sink,
            )?;
        }
    }
    sink.flush()?;
    Ok(written)
}

/// A single invariant breach found by [`validate_manifest`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    InvalidClipInterval {
        video_id: String,
        clip_id: String,
        start_s: f64,
        end_s: f64,
    },
    InvalidActionInterval {
        video_id: String,
        action_index: usize,
        start_s: f64,
        end_s: f64,
    },
    ClipOutsideDuration {
        video_id: String,
        clip_id: String,
        end_s: f64,
        duration_s: f64,
    },
    InvalidDuration {
        video_id: String,
        duration_s: f64,
    },
    DuplicateClipId {
        video_id: String,
        clip_id: String,
    },
    EmptyCaption {
        video_id: String,
        clip_id: String,
    },
    EmptyDescription {
        video_id: String,
        action_index: usize,
    },
    ClipsOutOfOrder {
        video_id: String,
        clip_id: String,
    },
    MisfiledRecord {
        video_id: String,
        record_video_id: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InvalidClipInterval {
                video_id,
                clip_id,
                start_s,
                end_s,
            } => write!(
                f,
                "{video_id}/{clip_id}: invalid interval [{start_s}, {end_s}]"
            ),
            Violation::InvalidActionInterval {
                video_id,
                action_index,
                start_s,
                end_s,
            } => write!(
                f,
                "{video_id}/action#{action_index}: invalid interval [{start_s}, {end_s}]"
            ),
            Violation::ClipOutsideDuration {
                video_id,
                clip_id,
                end_s,
                duration_s,
            } => write!(
                f,
                "{video_id}/{clip_id}: ends at {end_s} past video duration {duration_s}"
            ),
            Violation::InvalidDuration {
                video_id,
                duration_s,
            } => {
                write!(f, "{video_id}: invalid duration {duration_s}")
            }
            Violation::DuplicateClipId { video_id, clip_id } => {
                write!(f, "{video_id}/{clip_id}: duplicate clip_id")
            }
            Violation::EmptyCaption { video_id, clip_id } => {
                write!(f, "{video_id}/{clip_id}: empty caption")
            }
            Violation::EmptyDescription {
                video_id,
                action_index,
            } => {
                write!(f, "{video_id}/action#{action_index}: empty description")
            }
            Violation::ClipsOutOfOrder { video_id, clip_id } => {
                write!(
                    f,
                    "{video_id}/{clip_id}: clip starts before its predecessor"
                )
            }
            Violation::MisfiledRecord {
                video_id,
                record_video_id,
            } => write!(
                f,
                "{video_id}: holds a record for video `{record_video_id}`"
            ),
        }
    }
}

/// Reports every invariant breach in `m`. An empty result means the manifest
/// is well-formed.
pub fn validate_manifest(m: &DatasetManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    for (video_id, entry) in &m.videos {
        let duration = match entry.duration_s {
            Some(d) if !d.is_finite() || d < 0.0 => {
                out.push(Violation::InvalidDuration {
                    video_id: video_id.clone(),
                    duration_s: d,
                });
                None
            }
            other => other,
        };
        let mut seen = BTreeSet::new();
        let mut prev_start = f64::NEG_INFINITY;
        for clip in &entry.clips {
            if &clip.video_id != video_id {
                out.push(Violation::MisfiledRecord {
                    video_id: video_id.clone(),
                    record_video_id: clip.video_id.clone(),
                });
            }
            if !clip.interval.is_valid() {
                out.push(Violation::InvalidClipInterval {
                    video_id: video_id.clone(),
                    clip_id: clip.clip_id.clone(),
                    start_s: clip.interval.start_s,
                    end_s: clip.interval.end_s,
                });
            }
            if let Some(d) = duration {
                if clip.interval.end_s > d || clip.interval.start_s > d {
                    out.push(Violation::ClipOutsideDuration {
                        video_id: video_id.clone(),
                        clip_id: clip.clip_id.clone(),
                        end_s: clip.interval.end_s,
                        duration_s: d,
                    });
                }
            }
            if !seen.insert(clip.clip_id.as_str()) {
                out.push(Violation::DuplicateClipId {
                    video_id: video_id.clone(),
                    clip_id: clip.clip_id.clone(),
                });
            }
            if clip.caption.trim().is_empty() {
                out.push(Violation::EmptyCaption {
                    video_id: video_id.clone(),
                    clip_id: clip.clip_id.clone(),
                });
            }
            if clip.interval.start_s < prev_start {
                out.push(Violation::ClipsOutOfOrder {
                    video_id: video_id.clone(),
                    clip_id: clip.clip_id.clone(),
                });
            }
            prev_start = clip.interval.start_s;
        }
    }
    for (video_id, actions) in &m.actions {
        for (action_index, action) in actions.iter().enumerate() {
            if &action.video_id != video_id {
                out.push(Violation::MisfiledRecord {
                    video_id: video_id.clone(),
                    record_video_id: action.video_id.clone(),
                });
            }
            if !action.interval.is_valid() {
                out.push(Violation::InvalidActionInterval {
                    video_id: video_id.clone(),
                    action_index,
                    start_s: action.interval.start_s,
                    end_s: action.interval.end_s,
                });
            }
            if action.description.trim().is_empty() {
                out.push(Violation::EmptyDescription {
                    video_id: video_id.clone(),
                    action_index,
                });
            }
        }
    }
    out
}

/// Splits `m` into `(train, val)` by video id. Actions follow their video;
/// actions for videos without a video record stay in train.
pub fn partition(
    m: &DatasetManifest,
    val_ids: &BTreeSet<String>,
) -> Result<(DatasetManifest, DatasetManifest), ManifestError> {
    let unknown: Vec<String> = val_ids
        .iter()
        .filter(|id| !m.videos.contains_key(*id))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(ManifestError::UnknownVideoIds(unknown));
    }

    let mut train = DatasetManifest {
        split: Some(Split::Train),
        ..Default::default()
    };
    let mut val = DatasetManifest {
        split: Some(Split::Val),
        ..Default::default()
    };
    for (id, entry) in &m.videos {
        let side = if val_ids.contains(id) {
            &mut val
        } else {
            &mut train
        };
        side.videos.insert(id.clone(), entry.clone());
    }
    for (id, actions) in &m.actions {
        let side = if val_ids.contains(id) {
            &mut val
        } else {
            &mut train
        };
        side.actions.insert(id.clone(), actions.clone());
    }
    Ok((train, val))
}
