//! A small raw fixture generated from a fixed seed: archive response files,
//! a bias map, attitude and emotion annotation tables, a blocklist and a
//! pipeline configuration that runs every command quickly.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use usvsthem_cli::pipeline::{run, Command, Context};
use usvsthem_cli::PipelineConfig;

pub const PIPELINE: [Command; 8] = [
    Command::Ingest,
    Command::Filter,
    Command::Quality,
    Command::Aggregate,
    Command::Analyze,
    Command::Train,
    Command::Compare,
    Command::Embed,
];

const GROUP_WORDS: [&str; 6] = ["immigration", "refugee", "muslim", "jewish", "liberal", "conservative"];
const DOMAINS: [(&str, &str); 5] = [
    ("leftpost.example", "Left"),
    ("centreleft.example", "Center-Left"),
    ("middle.example", "Center"),
    ("centreright.example", "Center-Right"),
    ("rightwire.example", "Right"),
];
const FILLER: [&str; 24] = [
    "people", "city", "vote", "policy", "week", "money", "school", "police", "council", "house", "street", "road",
    "family", "work", "news", "story", "market", "plan", "town", "court", "health", "bill", "office", "local",
];
const TONE: [[&str; 3]; 4] = [
    ["welcome", "help", "support"],
    ["report", "says", "notes"],
    ["worry", "costs", "problem"],
    ["invaders", "vermin", "scum"],
];
pub const PER_CELL: usize = 4;
const COMMENTS_PER_CELL: usize = 5;
const WORKERS: usize = 10;
const PER_UNIT: usize = 5;
const EPOCH: i64 = 1_514_764_800;

fn body(rng: &mut ChaCha8Rng, group: usize, attitude: usize) -> String {
    let len = rng.random_range(30..55);
    let mut words: Vec<&str> = (0..len).map(|_| *FILLER.choose(rng).unwrap()).collect();
    let at = rng.random_range(0..len);
    words[at] = GROUP_WORDS[group];
    for _ in 0..3 {
        let i = rng.random_range(0..len);
        if i != at {
            words[i] = TONE[attitude].choose(rng).unwrap();
        }
    }
    words.join(" ")
}

fn record(id: &str, body: &str, t: i64, title: &str, domain: &str) -> serde_json::Value {
    json!({
        "id": id, "body": body, "created_utc": t, "link_id": format!("t3_{id}"), "parent_id": format!("t3_{id}"),
        "subreddit": "news", "link_title": title, "domain": domain,
    })
}

fn one_hot(k: usize, ix: &[usize]) -> String {
    (0..k).map(|i| if ix.contains(&i) { "1" } else { "0" }).collect::<Vec<_>>().join(",")
}

/// Write the fixture below `dir` and return the configuration file path.
pub fn write_fixture(dir: &Path) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(20_210_801);
    let archive = dir.join("archive");
    fs::create_dir_all(&archive).unwrap();

    let mut records = Vec::new();
    let mut units = Vec::new();
    let mut t = EPOCH;
    for g in 0..6 {
        for (b, (domain, _)) in DOMAINS.iter().enumerate() {
            for k in 0..COMMENTS_PER_CELL {
                let base = [0.2, 0.3, 0.5, 0.4, 0.3, 0.45][g] + 0.08 * b as f64;
                let attitude = ((base + rng.random_range(-0.35..0.35)) * 4.0).clamp(0.0, 3.0) as usize;
                let id = format!("c{g}{b}{k}");
                let title = format!("{} debate continues", GROUP_WORDS[g]);
                t += rng.random_range(60..3600);
                records.push(record(&id, &body(&mut rng, g, attitude), t, &title, domain));
                units.push((id, attitude));
            }
        }
    }
    // comments the filter must drop: too short, two groups, unknown outlet
    t += 10;
    records.push(record("d0", "muslim people vote", t, "muslim vote", DOMAINS[0].0));
    let two: String = (0..35).map(|i| if i == 3 { "muslim" } else if i == 9 { "liberal" } else { "town" }).collect::<Vec<_>>().join(" ");
    records.push(record("d1", &two, t + 1, "muslim liberal", DOMAINS[1].0));
    records.push(record("d2", &body(&mut rng, 2, 1), t + 2, "muslim news", "unknown.example"));
    // a duplicate page entry
    records.push(records[0].clone());

    let half = records.len() / 2;
    for (i, chunk) in [&records[..half], &records[half..]].iter().enumerate() {
        fs::write(archive.join(format!("page_{i}.json")), serde_json::to_vec_pretty(&json!({ "data": chunk })).unwrap()).unwrap();
    }

    let mut bias = String::from("domain,bias\n");
    for (d, b) in DOMAINS {
        writeln!(bias, "{d},{b}").unwrap();
    }
    fs::write(dir.join("bias.csv"), bias).unwrap();

    let mut attitude = String::from("unit_id,worker_id,Supportive,Neutral,Critical,Discriminatory\n");
    let mut emotion = String::from(
        "unit_id,worker_id,Anger,Contempt,Disgust,Fear,Gratitude,Guilt,Happiness,Hope,Pride,Relief,Sadness,Sympathy,Neutral\n",
    );
    for (i, (id, latent)) in units.iter().enumerate() {
        let latent_emotions: Vec<usize> = match latent {
            0 => vec![11, 7],
            1 => vec![],
            2 => vec![3],
            _ => vec![0, 2],
        };
        for j in 0..PER_UNIT {
            let w = (i + 2 * j) % WORKERS;
            let spammer = w == WORKERS - 1;
            let label = if !spammer && rng.random_bool(0.8) { *latent } else { rng.random_range(0..4) };
            writeln!(attitude, "{id},w{w:02},{}", one_hot(4, &[label])).unwrap();
            let mut chosen: Vec<usize> = if spammer {
                vec![rng.random_range(0..12)]
            } else {
                latent_emotions.iter().copied().filter(|_| rng.random_bool(0.8)).collect()
            };
            if !spammer && rng.random_bool(0.05) {
                chosen.push(rng.random_range(0..12));
            }
            chosen.sort_unstable();
            chosen.dedup();
            if chosen.is_empty() {
                chosen.push(12);
            }
            writeln!(emotion, "{id},w{w:02},{}", one_hot(13, &chosen)).unwrap();
        }
    }
    fs::write(dir.join("attitude.csv"), attitude).unwrap();
    fs::write(dir.join("emotion.csv"), emotion).unwrap();
    fs::write(dir.join("blocklist.txt"), "# known bad accounts\nw_banned\n").unwrap();

    let config = format!(
        r#"seeds = [0, 1]
jobs = 1

[paths]
archive_dir = "archive"
bias_map = "bias.csv"
attitude_annotations = "attitude.csv"
emotion_annotations = "emotion.csv"
worker_blocklist = "blocklist.txt"

[ingest]
endpoint = "https://archive.example/search"
page_size = 40

[[ingest.queries]]
start = {start}
end = {end}

[filter]
per_cell = {PER_CELL}
seed = 3

[aggregate]
split_seed = 5

[train]
mains = ["regression", "classification"]
setups = ["STL", "MTL-EG"]
epochs = 2
learning_rate = 0.003
batch_size = 16
vocab_size = 200

[train.encoder]
layers_shared = 1
layers_task = 1
model_dim = 16
heads = 2
ff_dim = 32
max_len = 64

[compare]
permutations = 1000

[embed]
max_points = 20

[embed.tsne]
perplexity = 4.0
iterations = 250
exaggeration_iters = 50
"#,
        start = EPOCH,
        end = t + 100,
    );
    let path = dir.join("pipeline.toml");
    fs::write(&path, config).unwrap();
    path
}

/// Run every command in order into `out`.
pub fn run_pipeline(config: &Path, out: &Path) {
    let cfg = PipelineConfig::load(config).unwrap();
    let ctx = Context::new(cfg, out.to_path_buf());
    for cmd in PIPELINE {
        run(cmd, &ctx).unwrap_or_else(|e| panic!("{}: {e}", cmd.name()));
    }
}

/// Every file below `dir`, relative and sorted.
pub fn files(dir: &Path) -> Vec<PathBuf> {
    fn walk(root: &Path, d: &Path, out: &mut Vec<PathBuf>) {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

pub type Element = (String, Vec<(String, Result<f64, String>)>);

/// Element names, attribute names and attribute values of an SVG document,
/// with numeric values parsed.
pub fn svg_structure(text: &str) -> Vec<Element> {
    text.split('<')
        .skip(1)
        .map(|tag| {
            let tag = tag.split('>').next().unwrap_or("");
            let mut parts = tag.split_whitespace();
            let name = parts.next().unwrap_or("").to_string();
            let attrs = tag[name.len()..]
                .split('"')
                .collect::<Vec<_>>()
                .chunks(2)
                .filter(|c| c.len() == 2)
                .map(|c| {
                    let key = c[0].trim().trim_end_matches('=').to_string();
                    (key, c[1].parse::<f64>().map_err(|_| c[1].to_string()))
                })
                .collect();
            (name, attrs)
        })
        .collect()
}

/// SVG documents agree when their element and attribute sequences match and
/// numeric attributes differ by at most `tol`.
pub fn svg_equivalent(a: &str, b: &str, tol: f64) -> bool {
    let (sa, sb) = (svg_structure(a), svg_structure(b));
    sa.len() == sb.len()
        && sa.iter().zip(&sb).all(|((na, aa), (nb, ab))| {
            na == nb
                && aa.len() == ab.len()
                && aa.iter().zip(ab).all(|((ka, va), (kb, vb))| {
                    ka == kb
                        && match (va, vb) {
                            (Ok(x), Ok(y)) => (x - y).abs() <= tol,
                            (Err(x), Err(y)) => x == y,
                            _ => false,
                        }
                })
        })
}

/// First differing path between two output trees, comparing CSV, JSON and
/// other files byte for byte and SVG files structurally.
pub fn first_difference(a: &Path, b: &Path) -> Option<String> {
    let (fa, fb) = (files(a), files(b));
    if fa != fb {
        return Some(format!("file lists differ: {} vs {} files", fa.len(), fb.len()));
    }
    for f in fa {
        let (x, y) = (fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap());
        let same = if f.extension().is_some_and(|e| e == "svg") {
            svg_equivalent(&String::from_utf8_lossy(&x), &String::from_utf8_lossy(&y), 1e-9)
        } else {
            x == y
        };
        if !same {
            return Some(f.display().to_string());
        }
    }
    None
}
