//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use narrate_core::context::{build_windows, ContextError, NarrativeSequence, StepRecord};
use narrate_core::embed::{
    self, io as embio, EmbeddingSet, EmbeddingVector, GaussianMoments, PerturbationSpec,
    RegressionLossParams,
};
use narrate_core::manifest::{self, ActionRecord, ClipRecord, DatasetManifest, TimeInterval};
use narrate_core::matching::{self, MatchThresholds, Rule};
use narrate_core::scoring::{self, Tier, TierJudgment};
use narrate_core::stats::{self, ReportEdges, TokenCounts};

use common::{narrate, rng, synthetic_manifest};

type Check = fn() -> String;

fn main() {
    let criteria: [(&str, Check); 10] = [
        (
            "matching agrees with a naive matcher on 1000 videos",
            matching_oracle,
        ),
        ("matching rule boundaries are strict", matching_boundaries),
        ("interval IoU laws", iou_laws),
        (
            "regression loss gradient matches finite differences",
            gradient_check,
        ),
        ("Frechet distance closed forms and sampling", frechet_checks),
        ("perturbation contract", perturbation_contract),
        ("rolling conditioning windows", rolling_windows),
        ("tier rubric scores", rubric),
        ("manifest, embedding and CLI round-trips", round_trips),
        ("stats on a hand-computed manifest", stats_correctness),
    ];

    // keep assertion messages on our own lines
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2}s): {detail}", i + 1),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL {:>2} {name} ({secs:.2}s): {msg}", i + 1);
            }
        }
    }
    let _ = panic::take_hook();
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn interval(s: f64, e: f64) -> TimeInterval {
    TimeInterval {
        start_s: s,
        end_s: e,
    }
}

fn clip(s: f64, e: f64) -> ClipRecord {
    ClipRecord {
        video_id: "v".into(),
        clip_id: "c".into(),
        interval: interval(s, e),
        caption: "c".into(),
    }
}

fn action(s: f64, e: f64) -> ActionRecord {
    ActionRecord {
        video_id: "v".into(),
        interval: interval(s, e),
        description: "a".into(),
    }
}

// ---------------------------------------------------------------- 1

/// Independent brute-force version of both matching rules.
fn naive_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let hull = a.1.max(b.1) - a.0.min(b.0);
    if hull <= 0.0 {
        return 0.0;
    }
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    inter / hull
}

fn naive_matches(m: &DatasetManifest) -> BTreeSet<(String, String, usize, &'static str)> {
    let mut out = BTreeSet::new();
    for (vid, entry) in &m.videos {
        for c in &entry.clips {
            for (j, a) in m.actions_for(vid).iter().enumerate() {
                let ci = (c.interval.start_s, c.interval.end_s);
                let ai = (a.interval.start_s, a.interval.end_s);
                let iou = naive_iou(ci, ai);
                let rule_a = (ci.0 - ai.0).abs() < 5.0 && ci.1 > ai.1 && iou > 0.2;
                let rule_b = iou > 0.5;
                let tag = if rule_b {
                    "B"
                } else if rule_a {
                    "A"
                } else {
                    continue;
                };
                out.insert((vid.clone(), c.clip_id.clone(), j, tag));
            }
        }
    }
    out
}

fn matching_oracle() -> String {
    let m = manifest::parse_manifest_str(&synthetic_manifest(11, 1000)).unwrap();
    let th = MatchThresholds::default();
    let started = Instant::now();
    let got = matching::match_dataset(&m, &th);
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 5.0, "single-threaded matching took {secs:.2}s");

    let got_set: BTreeSet<_> = got
        .iter()
        .map(|r| {
            let tag = match r.rule {
                Rule::RuleA => "A",
                Rule::RuleB => "B",
            };
            (r.video_id.clone(), r.clip_id.clone(), r.action_index, tag)
        })
        .collect();
    assert_eq!(got_set.len(), got.len(), "duplicate match records");
    let want = naive_matches(&m);
    let missing = want.difference(&got_set).count();
    let extra = got_set.difference(&want).count();
    assert!(
        missing == 0 && extra == 0,
        "{missing} missing, {extra} extra matches"
    );
    assert!(
        want.len() > 1000,
        "corpus too sparse: {} matches",
        want.len()
    );
    format!(
        "{} matches over {} clips x actions in {secs:.3}s",
        got.len(),
        m.clip_count()
    )
}

// ---------------------------------------------------------------- 2

fn matching_boundaries() -> String {
    let th = MatchThresholds::default();
    let decide = |c: ClipRecord, a: ActionRecord| matching::match_clip_action(&c, &a, &th).unwrap();

    // start diff exactly 5: IoU 25/30 would fire RuleB, so keep IoU in (0.2, 0.5]
    // clip [0, 20], action [5, 11]: start diff 5, clip ends later, IoU 6/20 = 0.3
    assert_eq!(decide(clip(0.0, 20.0), action(5.0, 11.0)), None);
    // just inside the window the same layout matches under RuleA
    let d = decide(clip(0.5, 20.0), action(5.0, 11.0)).expect("start diff 4.5 should match");
    assert_eq!(d.rule, Rule::RuleA);

    // clip end equal to action end: IoU 4/8 and 3/7 are RuleA-sized but rejected
    assert_eq!(decide(clip(6.0, 10.0), action(2.0, 10.0)), None);
    assert_eq!(decide(clip(7.0, 10.0), action(3.0, 10.0)), None);
    // clip end before action end, IoU 0.3
    assert_eq!(decide(clip(0.0, 4.0), action(1.0, 10.0)), None);

    // IoU exactly 0.5: clip [0, 10], action [0, 5]; start diff 0, clip ends later,
    // so RuleA fires but RuleB must not
    let d = decide(clip(0.0, 10.0), action(0.0, 5.0)).expect("RuleA applies");
    assert_eq!(d.iou, 0.5);
    assert_eq!(d.rule, Rule::RuleA);
    // IoU exactly 0.5 with RuleA blocked: nothing
    assert_eq!(decide(clip(0.0, 5.0), action(0.0, 10.0)), None);
    // IoU exactly 0.2 with the other RuleA conditions met: nothing
    assert_eq!(decide(clip(0.0, 10.0), action(0.0, 2.0)), None);
    // both rules fire: RuleB wins
    assert_eq!(
        decide(clip(0.0, 10.0), action(0.0, 8.0)).unwrap().rule,
        Rule::RuleB
    );
    "start diff 5, clip end <= action end, IoU 0.5 and 0.2 ties all rejected".into()
}

// ---------------------------------------------------------------- 3

fn iou_laws() -> String {
    let mut r = rng(3);
    let pair = |r: &mut rand_chacha::ChaCha8Rng| {
        let s = r.random_range(-100.0..100.0);
        interval(s, s + r.random_range(0.0..50.0))
    };
    for _ in 0..10_000 {
        let a = pair(&mut r);
        let b = pair(&mut r);
        let ab = matching::interval_iou(&a, &b);
        let ba = matching::interval_iou(&b, &a);
        assert_eq!(ab.to_bits(), ba.to_bits(), "asymmetric for {a:?} {b:?}");
        assert!((0.0..=1.0).contains(&ab), "out of range: {ab}");
        let shift = r.random_range(-10.0..10.0);
        let moved = matching::interval_iou(
            &interval(a.start_s + shift, a.end_s + shift),
            &interval(b.start_s + shift, b.end_s + shift),
        );
        assert!(
            (moved - ab).abs() <= 1e-12,
            "translation changed {ab} to {moved}"
        );
        if a.length() > 0.0 {
            assert_eq!(matching::interval_iou(&a, &a), 1.0);
        }
    }
    "10000 pairs: symmetric, in [0, 1], shift-invariant to 1e-12, self IoU 1".into()
}

// ---------------------------------------------------------------- 4

fn fd_loss(p: &[f64], t: &[f64]) -> f64 {
    let dot: f64 = p.iter().zip(t).map(|(a, b)| a * b).sum();
    let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nt = t.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mse = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
    (1.0 - dot / (np * nt)) + mse
}

fn gradient_check() -> String {
    let mut r = rng(4);
    let params = RegressionLossParams::new(1.0, 1.0).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let pairs = 120;
    for _ in 0..pairs {
        let dim = r.random_range(16..=256);
        let p: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
        let t: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
        let analytic = embed::regression_loss_grad(
            &EmbeddingVector::new(p.clone()).unwrap(),
            &EmbeddingVector::new(t.clone()).unwrap(),
            &params,
        )
        .unwrap();
        let mut numeric = vec![0.0; dim];
        let mut x = p.clone();
        for i in 0..dim {
            x[i] = p[i] + h;
            let up = fd_loss(&x, &t);
            x[i] = p[i] - h;
            let down = fd_loss(&x, &t);
            x[i] = p[i];
            numeric[i] = (up - down) / (2.0 * h);
        }
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = analytic
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
        worst = worst.max(diff / scale);
    }
    assert!(worst < 1e-5, "max relative error {worst:e}");
    format!("{pairs} pairs, max relative error {worst:.2e}")
}

// ---------------------------------------------------------------- 5

fn moments(mean: Vec<f64>, cov: DMatrix<f64>) -> GaussianMoments {
    GaussianMoments::new(DVector::from_vec(mean), cov).unwrap()
}

fn random_spd(r: &mut rand_chacha::ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

fn frechet_checks() -> String {
    let fd = |a: &GaussianMoments, b: &GaussianMoments| {
        embed::frechet_distance(a, b, embed::DEFAULT_JITTER).unwrap()
    };
    let mut r = rng(5);

    let c = random_spd(&mut r, 6);
    let m = moments(vec![0.3, -1.0, 2.0, 0.0, 1.5, -0.2], c);
    let same = fd(&m, &m.clone());
    assert!(same.abs() <= 1e-8, "identical moments gave {same}");

    let one = fd(
        &moments(vec![0.0], DMatrix::from_element(1, 1, 1.0)),
        &moments(vec![1.0], DMatrix::from_element(1, 1, 1.0)),
    );
    assert!((one - 1.0).abs() <= 1e-9, "N(0,1) vs N(1,1) gave {one}");

    let diag = fd(
        &moments(
            vec![0.0, 0.0],
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])),
        ),
        &moments(
            vec![0.0, 0.0],
            DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])),
        ),
    );
    assert!(
        (diag - 2.0).abs() <= 1e-9,
        "diag(1,4) vs diag(4,1) gave {diag}"
    );

    let mut worst_rot: f64 = 0.0;
    for _ in 0..20 {
        let d = 8;
        let q = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal))
            .qr()
            .q();
        let mu_a = DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal));
        let mu_b = DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal));
        let ca = random_spd(&mut r, d);
        let cb = random_spd(&mut r, d);
        let base = fd(
            &GaussianMoments::new(mu_a.clone(), ca.clone()).unwrap(),
            &GaussianMoments::new(mu_b.clone(), cb.clone()).unwrap(),
        );
        let rotated = fd(
            &GaussianMoments::new(&q * mu_a, &q * ca * q.transpose()).unwrap(),
            &GaussianMoments::new(&q * mu_b, &q * cb * q.transpose()).unwrap(),
        );
        worst_rot = worst_rot.max((base - rotated).abs());
    }
    assert!(
        worst_rot <= 1e-6,
        "rotation changed distance by {worst_rot:e}"
    );

    let n = 100_000;
    let a: Vec<Vec<f64>> = (0..n).map(|_| vec![r.sample(StandardNormal)]).collect();
    let b: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![1.0 + r.sample::<f64, _>(StandardNormal)])
        .collect();
    let sampled = fd(
        &embed::fit_moments(&EmbeddingSet::from_rows(a).unwrap()).unwrap(),
        &embed::fit_moments(&EmbeddingSet::from_rows(b).unwrap()).unwrap(),
    );
    assert!((sampled - 1.0).abs() <= 0.05, "sampled distance {sampled}");
    format!("identical {same:.1e}, 1-D {one}, diag {diag}, rotation drift {worst_rot:.1e}, sampled {sampled:.4}")
}

// ---------------------------------------------------------------- 6

fn bits(v: &[EmbeddingVector]) -> Vec<Vec<u64>> {
    v.iter()
        .map(|e| e.values().iter().map(|x| x.to_bits()).collect())
        .collect()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn perturbation_contract() -> String {
    let mut r = rng(6);
    let rows: Vec<Vec<f64>> = (0..64)
        .map(|_| (0..32).map(|_| r.sample(StandardNormal)).collect())
        .collect();
    let set = EmbeddingSet::from_rows(rows).unwrap();
    let basis = embed::population_std(&set).unwrap();

    let same = embed::perturb_batch(&set, &basis, &PerturbationSpec::identity(), false).unwrap();
    assert_eq!(
        bits(&same),
        bits(set.vectors()),
        "identity spec changed bits"
    );

    let spec = PerturbationSpec {
        seed: 1234,
        ..PerturbationSpec::default()
    };
    let one = in_pool(1, || {
        embed::perturb_batch(&set, &basis, &spec, true).unwrap()
    });
    let again = in_pool(1, || {
        embed::perturb_batch(&set, &basis, &spec, true).unwrap()
    });
    let many = in_pool(8, || {
        embed::perturb_batch(&set, &basis, &spec, true).unwrap()
    });
    assert_eq!(bits(&one), bits(&again), "rerun differs");
    assert_eq!(bits(&one), bits(&many), "thread count changes output");
    assert_ne!(bits(&one), bits(set.vectors()));

    let dim = 10_000;
    let z = EmbeddingVector::new((0..dim).map(|_| r.random_range(1.0..2.0)).collect()).unwrap();
    let mask = PerturbationSpec {
        noise_scale: 0.0,
        mask_rate: 0.25,
        shuffle: false,
        seed: 99,
    };
    let masked = embed::perturb(&z, &vec![1.0; dim], &mask).unwrap();
    let frac = masked.values().iter().filter(|&&x| x == 0.0).count() as f64 / dim as f64;
    assert!((0.237..=0.263).contains(&frac), "masked fraction {frac}");

    let shuffle = PerturbationSpec {
        noise_scale: 0.0,
        mask_rate: 0.0,
        shuffle: true,
        seed: 7,
    };
    let shuffled = embed::perturb(&z, &vec![1.0; dim], &shuffle).unwrap();
    let mut before: Vec<u64> = z.values().iter().map(|x| x.to_bits()).collect();
    let mut after: Vec<u64> = shuffled.values().iter().map(|x| x.to_bits()).collect();
    assert_ne!(before, after, "shuffle left the order unchanged");
    before.sort_unstable();
    after.sort_unstable();
    assert_eq!(before, after, "shuffle changed the multiset");
    format!("identity exact, 1/1/8-thread runs identical, mask fraction {frac:.4}, multiset kept")
}

// ---------------------------------------------------------------- 7

fn sequence(n: usize) -> NarrativeSequence {
    let steps = (1..=n)
        .map(|t| StepRecord {
            index: t,
            action: format!("a{t}"),
            caption: format!("c{t}"),
            embedding_id: format!("e{t}"),
            keyframe: format!("k{t}"),
        })
        .collect();
    NarrativeSequence::new(format!("s{n}"), steps, n).unwrap()
}

fn rolling_windows() -> String {
    let mut r = rng(7);
    let mut checked = 0;
    let mut exact = 0;
    for _ in 0..200 {
        let n = r.random_range(2..=40);
        let seq = sequence(n);
        for k in 1..=3 {
            if n < 2 * k {
                assert!(matches!(
                    build_windows(&seq, k),
                    Err(ContextError::TooShort { .. })
                ));
                continue;
            }
            let w = build_windows(&seq, k).unwrap();
            checked += 1;
            for pair in w.windows(2) {
                assert_eq!(pair[0].target_steps, pair[1].reference_steps, "n={n} k={k}");
            }
            let expected = (n - 2 * k).div_ceil(k) + 1;
            if (n - 2 * k) % k == 0 {
                exact += 1;
                assert_eq!(w.len(), expected, "n={n} k={k}");
                assert!(w.iter().all(|x| !x.reuses_reference_block));
            }
            assert_eq!(w.len(), expected, "n={n} k={k}");
            assert_eq!(w[0].reference_steps, (1..=k).collect::<Vec<_>>());
            let targets: BTreeSet<usize> = w
                .iter()
                .flat_map(|x| x.target_steps.iter().copied())
                .collect();
            for t in 2 * k..=n {
                assert!(
                    targets.contains(&t),
                    "step {t} never a target (n={n} k={k})"
                );
            }
            for x in &w {
                assert_eq!(x.reference_steps.len(), k);
                assert_eq!(x.target_steps.len(), k);
            }
        }
    }
    format!("{checked} (sequence, k) cases, {exact} exact-fit lengths")
}

// ---------------------------------------------------------------- 8

fn rubric() -> String {
    let scores: Vec<u32> = Tier::ALL
        .iter()
        .map(|&t| scoring::tier_to_score(t))
        .collect();
    assert_eq!(scores, vec![100, 85, 70, 0]);
    let j = |item: &str, rater: &str, tier| TierJudgment {
        item_id: item.into(),
        rater_id: rater.into(),
        tier,
    };
    let one_item =
        scoring::aggregate_tiers(&[j("x", "r1", Tier::VeryMatch), j("x", "r2", Tier::GoodMatch)])
            .unwrap();
    let two_items =
        scoring::aggregate_tiers(&[j("x", "r1", Tier::VeryMatch), j("y", "r1", Tier::GoodMatch)])
            .unwrap();
    assert_eq!(one_item.mean_score, 92.5);
    assert_eq!(two_items.mean_score, 92.5);
    assert_eq!(two_items.judgment_mean, 92.5);
    "scores 100/85/70/0, {VeryMatch, GoodMatch} = 92.5".into()
}

// ---------------------------------------------------------------- 9

fn round_trips() -> String {
    let text = synthetic_manifest(9, 1000);
    let m = manifest::parse_manifest_str(&text).unwrap();
    let mut first = Vec::new();
    manifest::write_manifest(&m, &mut first).unwrap();
    let back = manifest::parse_manifest(first.as_slice()).unwrap();
    assert_eq!(back, m, "manifest changed across write/parse");
    let mut second = Vec::new();
    manifest::write_manifest(&back, &mut second).unwrap();
    assert_eq!(first, second, "canonical output not stable");

    let mut r = rng(90);
    let vectors: Vec<EmbeddingVector> = (0..200)
        .map(|i| {
            let v = EmbeddingVector::new(
                (0..48)
                    .map(|_| f64::from(r.sample::<f32, _>(StandardNormal)))
                    .collect(),
            )
            .unwrap();
            if i % 3 == 0 {
                v
            } else {
                v.with_id(format!("item-{i}"))
            }
        })
        .collect();
    let mut bytes = Vec::new();
    embio::write_binary(&vectors, &mut bytes).unwrap();
    let read = embio::decode(&bytes).unwrap();
    assert_eq!(bits(&read), bits(&vectors), "embedding values changed");
    assert_eq!(
        read.iter().map(|v| v.id.clone()).collect::<Vec<_>>(),
        vectors.iter().map(|v| v.id.clone()).collect::<Vec<_>>()
    );
    let mut rewritten = Vec::new();
    embio::write_binary(&read, &mut rewritten).unwrap();
    assert_eq!(bytes, rewritten, "binary file changed across read/write");

    let runs = cli_determinism();
    format!("1000-video manifest and {} byte embedding file exact; {runs} CLI invocations deterministic", bytes.len())
}

fn cli_determinism() -> usize {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    std::fs::write(p("m.jsonl"), synthetic_manifest(19, 200)).unwrap();
    std::fs::write(
        p("bad.jsonl"),
        synthetic_manifest(20, 30)
            + "{\"kind\":\"clip\",\"video_id\":\"vid00002\",\"clip_id\":\"late\",\"start_s\":9.0,\"end_s\":4.0,\"caption\":\"\"}\n",
    )
    .unwrap();
    std::fs::write(p("ids.txt"), "vid00001\nvid00007\nvid00100\n").unwrap();
    std::fs::write(
        p("j.jsonl"),
        (0..40)
            .map(|i| {
                if i % 2 == 0 {
                    let tier = ["VeryMatch", "GoodMatch", "SomehowMatch", "NotMatch"][i % 4];
                    format!(
                        "{{\"item_id\":\"i{}\",\"rater_id\":\"r{}\",\"tier\":\"{tier}\"}}\n",
                        i / 3,
                        i % 5
                    )
                } else {
                    format!("{{\"item_id\":\"i{i}\",\"rating\":{}}}\n", i % 7)
                }
            })
            .collect::<String>(),
    )
    .unwrap();
    let mut r = rng(91);
    let mut emb = |name: &str, n: usize, shift: f64| {
        let v: Vec<EmbeddingVector> = (0..n)
            .map(|i| {
                EmbeddingVector::new(
                    (0..16)
                        .map(|_| shift + r.sample::<f64, _>(StandardNormal))
                        .collect(),
                )
                .unwrap()
                .with_id(format!("e{i}"))
            })
            .collect();
        let mut f = std::fs::File::create(p(name)).unwrap();
        embio::write_text(&v, &mut f).unwrap();
    };
    emb("a.jsonl", 300, 0.0);
    emb("b.jsonl", 300, 0.5);
    let mut steps = String::new();
    for s in 0..30 {
        let n = 2 + s % 17;
        let mut order: Vec<usize> = (1..=n).collect();
        order.shuffle(&mut r);
        for t in order {
            steps.push_str(&format!(
                "{{\"sequence_id\":\"seq{s}\",\"t\":{t},\"action\":\"a{t}\",\"caption\":\"c{t}\",\"embedding_id\":\"e{t}\",\"keyframe\":\"k{t}\"}}\n"
            ));
        }
    }
    std::fs::write(p("s.jsonl"), steps).unwrap();
    assert!(narrate(
        &[
            "match",
            "--manifest",
            &p("m.jsonl"),
            "--out",
            &p("mt.jsonl")
        ],
        dir.path()
    )
    .status
    .success());

    let commands: Vec<(Vec<String>, Vec<String>)> = vec![
        (
            vec!["validate".into(), "--manifest".into(), p("bad.jsonl")],
            vec![],
        ),
        (
            vec!["match".into(), "--manifest".into(), p("m.jsonl")],
            vec![],
        ),
        (
            vec![
                "filter".into(),
                "--manifest".into(),
                p("m.jsonl"),
                "--matches".into(),
                p("mt.jsonl"),
                "--assignments".into(),
                p("assign.jsonl"),
            ],
            vec![p("assign.jsonl")],
        ),
        (
            vec![
                "split".into(),
                "--manifest".into(),
                p("m.jsonl"),
                "--val-ids".into(),
                p("ids.txt"),
                "--train-out".into(),
                p("train.jsonl"),
                "--val-out".into(),
                p("val.jsonl"),
            ],
            vec![p("train.jsonl"), p("val.jsonl")],
        ),
        (
            vec!["stats".into(), "--manifest".into(), p("m.jsonl")],
            vec![],
        ),
        (
            vec!["score".into(), "--judgments".into(), p("j.jsonl")],
            vec![],
        ),
        (
            vec![
                "metrics".into(),
                "frechet".into(),
                "--a".into(),
                p("a.jsonl"),
                "--b".into(),
                p("b.jsonl"),
            ],
            vec![],
        ),
        (
            vec![
                "metrics".into(),
                "clipt".into(),
                "--text".into(),
                p("a.jsonl"),
                "--image".into(),
                p("b.jsonl"),
            ],
            vec![],
        ),
        (
            vec![
                "metrics".into(),
                "regloss".into(),
                "--pred".into(),
                p("a.jsonl"),
                "--target".into(),
                p("b.jsonl"),
            ],
            vec![],
        ),
        (
            vec![
                "metrics".into(),
                "flowloss".into(),
                "--pred".into(),
                p("a.jsonl"),
                "--target".into(),
                p("b.jsonl"),
            ],
            vec![],
        ),
        (
            vec![
                "perturb".into(),
                "--embeddings".into(),
                p("a.jsonl"),
                "--seed".into(),
                "5".into(),
                "--shuffle-sequence".into(),
            ],
            vec![],
        ),
        (
            vec![
                "windows".into(),
                "--sequences".into(),
                p("s.jsonl"),
                "--k".into(),
                "1".into(),
                "--training-out".into(),
                p("train_rec.jsonl"),
            ],
            vec![p("train_rec.jsonl")],
        ),
    ];

    let mut runs = 0;
    for (args, side_files) in &commands {
        let mut seen: Option<Vec<Vec<u8>>> = None;
        for threads in ["1", "1", "4"] {
            let mut argv: Vec<&str> = args.iter().map(String::as_str).collect();
            argv.extend(["--threads", threads]);
            let out = narrate(&argv, dir.path());
            runs += 1;
            let want_code = if args[0] == "validate" { 1 } else { 0 };
            assert!(
                out.status.code() == Some(want_code),
                "{} failed: {}",
                args.join(" "),
                String::from_utf8_lossy(&out.stderr)
            );
            assert!(
                !out.stdout.is_empty() || !side_files.is_empty(),
                "{} wrote nothing",
                args[0]
            );
            let mut captured = vec![out.stdout];
            for f in side_files {
                captured.push(std::fs::read(f).unwrap());
                std::fs::remove_file(f).unwrap();
            }
            match &seen {
                None => seen = Some(captured),
                Some(prev) => assert!(
                    prev == &captured,
                    "{} output differs with --threads {threads}",
                    args.join(" ")
                ),
            }
        }
    }
    runs
}

// ---------------------------------------------------------------- 10

const TOY: &str = r#"{"kind":"video","video_id":"a","duration_s":100.0}
{"kind":"clip","video_id":"a","clip_id":"a1","start_s":0.0,"end_s":2.0,"caption":"one two"}
{"kind":"clip","video_id":"a","clip_id":"a2","start_s":10.0,"end_s":14.0,"caption":"one two three"}
{"kind":"clip","video_id":"a","clip_id":"a3","start_s":20.0,"end_s":26.0,"caption":"one"}
{"kind":"video","video_id":"b","duration_s":300.0}
{"kind":"clip","video_id":"b","clip_id":"b1","start_s":5.0,"end_s":6.0,"caption":"one two three four"}
{"kind":"clip","video_id":"b","clip_id":"b2","start_s":50.0,"end_s":53.0,"caption":"one two"}
{"kind":"video","video_id":"c","duration_s":65.0}
{"kind":"clip","video_id":"c","clip_id":"c1","start_s":0.0,"end_s":5.0,"caption":"x"}
{"kind":"clip","video_id":"c","clip_id":"c2","start_s":5.0,"end_s":10.0,"caption":"x y"}
{"kind":"clip","video_id":"c","clip_id":"c3","start_s":20.0,"end_s":27.0,"caption":"x y z"}
{"kind":"clip","video_id":"c","clip_id":"c4","start_s":40.0,"end_s":49.0,"caption":"x y z w"}
"#;

fn stats_correctness() -> String {
    let m = manifest::parse_manifest_str(TOY).unwrap();
    assert_eq!((m.videos.len(), m.clip_count()), (3, 9));
    let report = stats::build_report(&m, &ReportEdges::default(), &TokenCounts::default())
        .unwrap()
        .to_flat_json();
    let num = |k: &str| {
        report
            .get(k)
            .unwrap_or_else(|| panic!("missing {k}"))
            .as_f64()
            .unwrap()
    };
    let counts = |k: &str| -> Vec<u64> {
        report[k]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap())
            .collect()
    };

    // clip lengths 2 4 6 1 3 5 5 7 9
    assert_eq!(num("clip_length_s.summary.mean"), 42.0 / 9.0);
    assert_eq!(num("clip_length_s.summary.median"), 5.0);
    assert_eq!(num("clip_length_s.summary.min"), 1.0);
    assert_eq!(num("clip_length_s.summary.max"), 9.0);
    let mut want = vec![0; 12];
    want[0] = 4;
    want[1] = 5;
    assert_eq!(counts("clip_length_s.counts"), want);

    // clips per video 3 2 4
    assert_eq!(num("clips_per_video.summary.mean"), 3.0);
    assert_eq!(num("clips_per_video.summary.median"), 3.0);
    assert_eq!(num("clips_per_video.summary.min"), 2.0);
    assert_eq!(num("clips_per_video.summary.max"), 4.0);
    let mut want = vec![0; 15];
    want[1] = 2;
    want[2] = 1;
    assert_eq!(counts("clips_per_video.counts"), want);

    // video lengths 100 300 65
    assert_eq!(num("video_length_s.summary.mean"), 155.0);
    assert_eq!(num("video_length_s.summary.median"), 100.0);
    let mut want = vec![0; 20];
    want[1] = 2;
    want[5] = 1;
    assert_eq!(counts("video_length_s.counts"), want);

    // caption words 2 3 1 4 2 1 2 3 4
    assert_eq!(num("caption_words.summary.mean"), 22.0 / 9.0);
    assert_eq!(num("caption_words.summary.median"), 2.0);
    assert_eq!(counts("caption_words.counts")[0], 9);

    let mut r = rng(10);
    for round in 0..20 {
        let mut edges: Vec<f64> = (0..r.random_range(2..30))
            .map(|_| r.random_range(-50.0..50.0))
            .collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        if edges.len() < 2 {
            continue;
        }
        let values: Vec<f64> = (0..10_000).map(|_| r.random_range(-80.0..80.0)).collect();
        let h = stats::histogram(&values, &edges).unwrap();
        let total = h.counts.iter().sum::<u64>() + h.underflow + h.overflow;
        assert_eq!(total, 10_000, "round {round} lost values");
        assert_eq!(h.total(), 10_000);
    }
    "toy means, medians, extremes and bin counts exact; 10000-value histograms conserve counts"
        .into()
}
