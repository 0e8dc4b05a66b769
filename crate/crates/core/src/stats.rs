//! Corpus profiling: histograms and summary aggregates over video lengths,
//! clip lengths, clips per video, and caption/action text lengths.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::manifest::DatasetManifest;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("bin edges must be strictly increasing and at least two, got {0:?}")]
    BadEdges(Vec<f64>),
    #[error("NaN observation at position {0}")]
    NanValue(usize),
    #[error("no observations for `{0}`")]
    Empty(&'static str),
    #[error("token count missing for record {0}")]
    MissingTokens(usize),
    #[error("histograms have different bin edges")]
    EdgeMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn empty(bin_edges: &[f64]) -> Result<Self, StatsError> {
        let ok = bin_edges.len() >= 2
            && bin_edges.iter().all(|e| !e.is_nan())
            && bin_edges.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(StatsError::BadEdges(bin_edges.to_vec()));
        }
        Ok(Self {
            bin_edges: bin_edges.to_vec(),
            counts: vec![0; bin_edges.len() - 1],
            underflow: 0,
            overflow: 0,
        })
    }

    /// Bins are half-open `[lo, hi)`; a value equal to the last edge overflows.
    pub fn add(&mut self, value: f64) {
        let edges = &self.bin_edges;
        if value < edges[0] {
            self.underflow += 1;
        } else if value >= edges[edges.len() - 1] {
            self.overflow += 1;
        } else {
            // first edge strictly greater than value, minus one
            let bin = edges.partition_point(|&e| e <= value) - 1;
            self.counts[bin] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<(), StatsError> {
        if self.bin_edges != other.bin_edges {
            return Err(StatsError::EdgeMismatch);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(())
    }
}

pub fn histogram(values: &[f64], bin_edges: &[f64]) -> Result<Histogram, StatsError> {
    let mut h = Histogram::empty(bin_edges)?;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            return Err(StatsError::NanValue(i));
        }
        h.add(v);
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Lower-middle element for even `n`.
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64], what: &'static str) -> Result<SummaryStats, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty(what));
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(StatsError::NanValue(i));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(SummaryStats {
        n,
        mean: sorted.iter().sum::<f64>() / n as f64,
        median: sorted[(n - 1) / 2],
        min: sorted[0],
        max: sorted[n - 1],
    })
}

/// Mergeable partial aggregate (everything but the median).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningSummary {
    pub n: usize,
    pub sum: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for RunningSummary {
    fn default() -> Self {
        Self {
            n: 0,
            sum: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl RunningSummary {
    pub fn from_values(values: &[f64]) -> Self {
        values.iter().fold(Self::default(), |mut acc, &v| {
            acc.n += 1;
            acc.sum += v;
            acc.min = acc.min.min(v);
            acc.max = acc.max.max(v);
            acc
        })
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            n: self.n + other.n,
            sum: self.sum + other.sum,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

pub fn clip_lengths(m: &DatasetManifest) -> Vec<f64> {
    m.clips().map(|c| c.interval.length()).collect()
}

pub fn clips_per_video(m: &DatasetManifest) -> Vec<f64> {
    m.videos.values().map(|v| v.clips.len() as f64).collect()
}

/// Durations of the videos that declare one.
pub fn video_lengths(m: &DatasetManifest) -> Vec<f64> {
    m.videos.values().filter_map(|v| v.duration_s).collect()
}

pub fn clip_length_summary(m: &DatasetManifest) -> Result<SummaryStats, StatsError> {
    summarize(&clip_lengths(m), "clip_length_s")
}

/// Counts every video entry, including ones with no clips. Fails when the
/// manifest has no clips at all.
pub fn clips_per_video_summary(m: &DatasetManifest) -> Result<SummaryStats, StatsError> {
    if m.clip_count() == 0 {
        return Err(StatsError::Empty("clips_per_video"));
    }
    summarize(&clips_per_video(m), "clips_per_video")
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Total caption words per video, in video id order.
pub fn caption_words_per_video(m: &DatasetManifest) -> Vec<f64> {
    m.videos
        .values()
        .map(|v| {
            v.clips
                .iter()
                .map(|c| word_count(&c.caption))
                .sum::<usize>() as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthCounter {
    Words,
    PrecomputedTokens,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextRecord<'a> {
    pub text: &'a str,
    pub tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TextLengthStats {
    pub histogram: Histogram,
    /// `None` when there were no records.
    pub summary: Option<SummaryStats>,
}

pub fn text_length_stats(
    records: &[TextRecord<'_>],
    counter: LengthCounter,
    bin_edges: &[f64],
) -> Result<TextLengthStats, StatsError> {
    let lengths = records
        .iter()
        .enumerate()
        .map(|(i, r)| match counter {
            LengthCounter::Words => Ok(word_count(r.text) as f64),
            LengthCounter::PrecomputedTokens => r
                .tokens
                .map(|t| t as f64)
                .ok_or(StatsError::MissingTokens(i)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TextLengthStats {
        histogram: histogram(&lengths, bin_edges)?,
        summary: if lengths.is_empty() {
            None
        } else {
            Some(summarize(&lengths, "text_length")?)
        },
    })
}

/// Bin edges per report section. Defaults follow the usual axis ranges for
/// cooking-video corpora: videos up to 20 min, clips up to 60 s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportEdges {
    pub video_length_s: Vec<f64>,
    pub clip_length_s: Vec<f64>,
    pub clips_per_video: Vec<f64>,
    pub words: Vec<f64>,
    pub tokens: Vec<f64>,
}

fn ramp(step: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| i as f64 * step).collect()
}

impl Default for ReportEdges {
    fn default() -> Self {
        Self {
            video_length_s: ramp(60.0, 20),
            clip_length_s: ramp(5.0, 12),
            clips_per_video: ramp(2.0, 15),
            words: ramp(10.0, 20),
            tokens: ramp(10.0, 30),
        }
    }
}

/// Optional externally computed token counts, parallel to the manifest's
/// clip and action iteration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenCounts {
    pub captions: Option<Vec<Option<u64>>>,
    pub actions: Option<Vec<Option<u64>>>,
}

/// Named histograms and summaries, flattened into one JSON object whose keys
/// look like `clip_length_s.counts` or `clip_length_s.summary.mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub sections: BTreeMap<&'static str, TextLengthStats>,
}

impl StatsReport {
    pub fn to_flat_json(&self) -> Map<String, Value> {
        let mut out = Map::new();
        for (name, sec) in &self.sections {
            let h = &sec.histogram;
            out.insert(
                format!("{name}.bin_edges"),
                Value::from(h.bin_edges.clone()),
            );
            out.insert(format!("{name}.counts"), Value::from(h.counts.clone()));
            out.insert(format!("{name}.underflow"), Value::from(h.underflow));
            out.insert(format!("{name}.overflow"), Value::from(h.overflow));
            if let Some(s) = &sec.summary {
                out.insert(format!("{name}.summary.n"), Value::from(s.n));
                out.insert(format!("{name}.summary.mean"), Value::from(s.mean));
                out.insert(format!("{name}.summary.median"), Value::from(s.median));
                out.insert(format!("{name}.summary.min"), Value::from(s.min));
                out.insert(format!("{name}.summary.max"), Value::from(s.max));
            }
        }
        out
    }
}

fn section(
    values: &[f64],
    edges: &[f64],
    name: &'static str,
) -> Result<TextLengthStats, StatsError> {
    Ok(TextLengthStats {
        histogram: histogram(values, edges)?,
        summary: if values.is_empty() {
            None
        } else {
            Some(summarize(values, name)?)
        },
    })
}

pub fn build_report(
    m: &DatasetManifest,
    edges: &ReportEdges,
    tokens: &TokenCounts,
) -> Result<StatsReport, StatsError> {
    let mut sections = BTreeMap::new();
    sections.insert(
        "video_length_s",
        section(&video_lengths(m), &edges.video_length_s, "video_length_s")?,
    );
    sections.insert(
        "clip_length_s",
        section(&clip_lengths(m), &edges.clip_length_s, "clip_length_s")?,
    );
    sections.insert(
        "clips_per_video",
        section(
            &clips_per_video(m),
            &edges.clips_per_video,
            "clips_per_video",
        )?,
    );

    let captions: Vec<TextRecord<'_>> = m
        .clips()
        .enumerate()
        .map(|(i, c)| TextRecord {
            text: &c.caption,
            tokens: tokens
                .captions
                .as_ref()
                .and_then(|t| t.get(i).copied().flatten()),
        })
        .collect();
    let actions: Vec<TextRecord<'_>> = m
        .actions
        .values()
        .flatten()
        .enumerate()
        .map(|(i, a)| TextRecord {
            text: &a.description,
            tokens: tokens
                .actions
                .as_ref()
                .and_then(|t| t.get(i).copied().flatten()),
        })
        .collect();

    sections.insert(
        "caption_words",
        text_length_stats(&captions, LengthCounter::Words, &edges.words)?,
    );
    sections.insert(
        "action_words",
        text_length_stats(&actions, LengthCounter::Words, &edges.words)?,
    );
    if tokens.captions.is_some() {
        sections.insert(
            "caption_tokens",
            text_length_stats(&captions, LengthCounter::PrecomputedTokens, &edges.tokens)?,
        );
    }
    if tokens.actions.is_some() {
        sections.insert(
            "action_tokens",
            text_length_stats(&actions, LengthCounter::PrecomputedTokens, &edges.tokens)?,
        );
    }
    Ok(StatsReport { sections })
}
