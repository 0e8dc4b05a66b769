#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random time in `[lo, hi)`, sometimes snapped to half seconds so exact
/// threshold ties show up.
fn time(rng: &mut ChaCha8Rng, lo: f64, hi: f64, snap: bool) -> f64 {
    let t = rng.random_range(lo..hi);
    if snap {
        (t * 2.0).round() / 2.0
    } else {
        t
    }
}

/// JSONL manifest with `videos` videos, each with up to 20 clips and 20
/// actions at random positions.
pub fn synthetic_manifest(seed: u64, videos: usize) -> String {
    let mut rng = rng(seed);
    let mut out = String::new();
    for v in 0..videos {
        let vid = format!("vid{v:05}");
        let duration = time(&mut rng, 30.0, 600.0, true);
        let snap = rng.random_bool(0.5);
        out.push_str(&format!(
            "{{\"kind\":\"video\",\"video_id\":\"{vid}\",\"duration_s\":{duration:?}}}\n"
        ));
        for c in 0..rng.random_range(0..=20) {
            let s = time(&mut rng, 0.0, duration - 1.0, snap);
            let e = (s + time(&mut rng, 0.5, 30.0, snap)).min(duration);
            out.push_str(&format!(
                "{{\"kind\":\"clip\",\"video_id\":\"{vid}\",\"clip_id\":\"c{c}\",\"start_s\":{s:?},\"end_s\":{e:?},\"caption\":\"clip {c} of {vid}\"}}\n"
            ));
        }
        for a in 0..rng.random_range(0..=20) {
            let s = time(&mut rng, 0.0, duration - 1.0, snap);
            let e = (s + time(&mut rng, 0.5, 30.0, snap)).min(duration);
            out.push_str(&format!(
                "{{\"kind\":\"action\",\"video_id\":\"{vid}\",\"start_s\":{s:?},\"end_s\":{e:?},\"description\":\"step {a}\"}}\n"
            ));
        }
    }
    out
}

pub fn narrate(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_narrate"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn narrate")
}
