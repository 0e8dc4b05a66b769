use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use narrate_core::context::{self, WindowRecord};
use narrate_core::embed::{self, io as embio, EmbeddingSet, EmbeddingVector, FlowSample};
use narrate_core::manifest::{self, DatasetManifest};
use narrate_core::matching::{self, MatchRecord};
use narrate_core::scoring::{self, TierJudgment, VlmRating};
use narrate_core::stats::{self, TokenCounts};

use crate::config::RunConfig;
use crate::{Cli, Command, EmbFormat, Metric, UsageError, EXIT_DATA, EXIT_OK};

pub fn execute(cli: &Cli) -> Result<i32> {
    let cfg = cli.resolve_config()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .context("building thread pool")?;
    pool.install(|| dispatch(cli, &cfg))
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<i32> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Validate { manifest } => validate(manifest, out),
        Command::Match { manifest, .. } => {
            let m = read_manifest(manifest)?;
            let matches = matching::match_dataset_par(&m, &cfg.thresholds);
            log::info!("{} matches over {} clips", matches.len(), m.clip_count());
            write_jsonl(out, &matches)?;
            Ok(EXIT_OK)
        }
        Command::Filter {
            manifest,
            matches,
            policy,
            assignments,
        } => {
            let m = read_manifest(manifest)?;
            let recs: Vec<MatchRecord> = read_jsonl(matches)?;
            let filtered = matching::filter_matched(&m, &recs, (*policy).into())?;
            log::info!(
                "kept {} of {} clips",
                filtered.manifest.clip_count(),
                m.clip_count()
            );
            let mut sink = open_out(out)?;
            manifest::write_manifest(&filtered.manifest, &mut sink)?;
            if let Some(path) = assignments {
                write_jsonl(Some(path), &filtered.assignments)?;
            }
            Ok(EXIT_OK)
        }
        Command::Split {
            manifest,
            val_ids,
            train_out,
            val_out,
        } => {
            let m = read_manifest(manifest)?;
            let ids: BTreeSet<String> = read_lines(val_ids)?.into_iter().collect();
            let (train, val) = manifest::partition(&m, &ids)?;
            manifest::write_manifest(&train, open_out(Some(train_out))?)?;
            manifest::write_manifest(&val, open_out(Some(val_out))?)?;
            Ok(EXIT_OK)
        }
        Command::Stats {
            manifest,
            caption_tokens,
            action_tokens,
        } => {
            let m = read_manifest(manifest)?;
            let tokens = token_counts(&m, caption_tokens.as_deref(), action_tokens.as_deref())?;
            let report = stats::build_report(&m, &cfg.edges, &tokens)?;
            write_json(out, &Value::Object(report.to_flat_json()))?;
            Ok(EXIT_OK)
        }
        Command::Score { judgments } => score(judgments, out),
        Command::Metrics { metric } => metrics(metric, cfg, out),
        Command::Perturb {
            embeddings,
            reference,
            shuffle_sequence,
            format,
            ..
        } => {
            let set = read_set(embeddings)?;
            let basis = if cfg.perturbation.noise_scale == 0.0 {
                vec![0.0; set.dim()]
            } else {
                let population = match reference {
                    Some(path) => read_set(path)?,
                    None => set.clone(),
                };
                embed::population_std(&population).context("computing the std basis")?
            };
            let perturbed =
                embed::perturb_batch(&set, &basis, &cfg.perturbation, *shuffle_sequence)?;
            let mut sink = open_out(out)?;
            match format {
                EmbFormat::Binary => embio::write_binary(&perturbed, &mut sink)?,
                EmbFormat::Text => embio::write_text(&perturbed, &mut sink)?,
            };
            Ok(EXIT_OK)
        }
        Command::Windows {
            sequences,
            context_window,
            training_out,
            ..
        } => {
            let input = BufReader::new(open(sequences)?);
            let seqs = context::parse_sequences(input, *context_window)?;
            let mut records = Vec::new();
            for seq in &seqs {
                for w in context::build_windows(seq, cfg.k)? {
                    records.push(WindowRecord::from_window(&seq.sequence_id, &w));
                }
            }
            write_jsonl(out, &records)?;
            if let Some(path) = training_out {
                let blocks: Vec<_> = seqs
                    .iter()
                    .flat_map(context::export_training_records)
                    .collect();
                write_jsonl(Some(path), &blocks)?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_jsonl<T: Serialize>(path: Option<&Path>, items: &[T]) -> Result<()> {
    let mut sink = open_out(path)?;
    for item in items {
        serde_json::to_writer(&mut sink, item)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

fn write_json(path: Option<&Path>, value: &Value) -> Result<()> {
    let mut sink = open_out(path)?;
    serde_json::to_writer(&mut sink, value)?;
    sink.write_all(b"\n")?;
    sink.flush()?;
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in BufReader::new(open(path)?).lines() {
        let line = line?;
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            out.push(trimmed.to_owned());
        }
    }
    Ok(out)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .with_context(|| format!("{}: line {}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    manifest::parse_manifest(BufReader::new(open(path)?))
        .with_context(|| format!("reading {}", path.display()))
}

fn read_vectors(path: &Path) -> Result<Vec<EmbeddingVector>> {
    embio::read(BufReader::new(open(path)?)).with_context(|| format!("reading {}", path.display()))
}

fn read_set(path: &Path) -> Result<EmbeddingSet> {
    EmbeddingSet::new(read_vectors(path)?)
        .with_context(|| format!("embeddings in {}", path.display()))
}

fn validate(path: &Path, out: Option<&Path>) -> Result<i32> {
    let m = manifest::parse_manifest_unchecked(BufReader::new(open(path)?))
        .with_context(|| format!("reading {}", path.display()))?;
    let violations = manifest::validate_manifest(&m);
    for v in &violations {
        eprintln!("violation: {v}");
    }
    write_jsonl(out, &violations)?;
    if violations.is_empty() {
        log::info!("{}: ok", path.display());
        Ok(EXIT_OK)
    } else {
        eprintln!("{}: {} violation(s)", path.display(), violations.len());
        Ok(EXIT_DATA)
    }
}

#[derive(Deserialize)]
struct CaptionTokens {
    video_id: String,
    clip_id: String,
    tokens: u64,
}

#[derive(Deserialize)]
struct ActionTokens {
    video_id: String,
    action_index: usize,
    tokens: u64,
}

fn token_counts(
    m: &DatasetManifest,
    captions: Option<&Path>,
    actions: Option<&Path>,
) -> Result<TokenCounts> {
    let mut counts = TokenCounts::default();
    if let Some(path) = captions {
        let by_key: BTreeMap<(String, String), u64> = read_jsonl::<CaptionTokens>(path)?
            .into_iter()
            .map(|r| ((r.video_id, r.clip_id), r.tokens))
            .collect();
        counts.captions = Some(
            m.clips()
                .map(|c| {
                    by_key
                        .get(&(c.video_id.clone(), c.clip_id.clone()))
                        .copied()
                })
                .collect(),
        );
    }
    if let Some(path) = actions {
        let by_key: BTreeMap<(String, usize), u64> = read_jsonl::<ActionTokens>(path)?
            .into_iter()
            .map(|r| ((r.video_id, r.action_index), r.tokens))
            .collect();
        counts.actions = Some(
            m.actions
                .iter()
                .flat_map(|(v, list)| (0..list.len()).map(move |i| (v.clone(), i)))
                .map(|key| by_key.get(&key).copied())
                .collect(),
        );
    }
    Ok(counts)
}

fn score(path: &Path, out: Option<&Path>) -> Result<i32> {
    let mut tiers = Vec::new();
    let mut ratings = Vec::new();
    for (i, row) in read_jsonl::<Value>(path)?.into_iter().enumerate() {
        let at = || format!("{}: record {}", path.display(), i + 1);
        if row.get("tier").is_some() {
            tiers.push(serde_json::from_value::<TierJudgment>(row).with_context(at)?);
        } else if row.get("rating").is_some() {
            ratings.push(serde_json::from_value::<VlmRating>(row).with_context(at)?);
        } else {
            return Err(anyhow!("{}: record has neither `tier` nor `rating`", at()));
        }
    }
    if tiers.is_empty() && ratings.is_empty() {
        bail!("{}: no judgments", path.display());
    }
    let mut report = serde_json::Map::new();
    if !tiers.is_empty() {
        report.insert(
            "tiers".into(),
            serde_json::to_value(scoring::aggregate_tiers(&tiers)?)?,
        );
    }
    if !ratings.is_empty() {
        report.insert(
            "ratings".into(),
            serde_json::to_value(scoring::aggregate_ratings(&ratings)?)?,
        );
    }
    write_json(out, &Value::Object(report))?;
    Ok(EXIT_OK)
}

fn paired(pred: &Path, target: &Path) -> Result<(Vec<EmbeddingVector>, Vec<EmbeddingVector>)> {
    let a = read_vectors(pred)?;
    let b = read_vectors(target)?;
    if a.len() != b.len() {
        return Err(UsageError(format!(
            "{} has {} rows but {} has {}",
            pred.display(),
            a.len(),
            target.display(),
            b.len()
        ))
        .into());
    }
    if a.is_empty() {
        bail!("{} is empty", pred.display());
    }
    Ok((a, b))
}

fn metrics(metric: &Metric, cfg: &RunConfig, out: Option<&Path>) -> Result<i32> {
    let value = match metric {
        Metric::Frechet { a, b, .. } => {
            let (sa, sb) = (read_set(a)?, read_set(b)?);
            let ma = embed::fit_moments(&sa)?;
            let mb = embed::fit_moments(&sb)?;
            let d = embed::frechet_distance(&ma, &mb, cfg.jitter)?;
            json!({"metric": "frechet", "value": d, "n_a": sa.len(), "n_b": sb.len(), "dim": sa.dim()})
        }
        Metric::Clipt { text, image, .. } => {
            let (t, i) = (read_set(text)?, read_set(image)?);
            let s = embed::clip_t_score(&t, &i, cfg.scale)?;
            json!({"metric": "clipt", "value": s, "n": t.len(), "scale": cfg.scale})
        }
        Metric::Regloss { pred, target, .. } => {
            let (a, b) = paired(pred, target)?;
            let (mut total, mut cos, mut mse) = (0.0, 0.0, 0.0);
            for (p, t) in a.iter().zip(&b) {
                let l = embed::regression_loss(p, t, &cfg.loss_params)?;
                total += l.total;
                cos += l.cosine_term;
                mse += l.mse_term;
            }
            let n = a.len() as f64;
            json!({
                "metric": "regloss",
                "value": total / n,
                "cosine_term": cos / n,
                "mse_term": mse / n,
                "n": a.len(),
                "alpha": cfg.loss_params.alpha,
                "beta": cfg.loss_params.beta,
            })
        }
        Metric::Flowloss { pred, target } => {
            let (a, b) = paired(pred, target)?;
            let samples = a
                .into_iter()
                .zip(b)
                .map(|(p, t)| FlowSample::new(p, t))
                .collect::<Result<Vec<_>, _>>()?;
            let l = embed::flow_matching_loss(&samples)?;
            json!({"metric": "flowloss", "value": l, "n": samples.len()})
        }
    };
    write_json(out, &value)?;
    Ok(EXIT_OK)
}
