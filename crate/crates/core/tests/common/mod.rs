#![allow(dead_code)]

use capmerge_core::{AttentionMap, BBox, FaceObservation, ImageMaps, ImageRecord};
use rand::seq::SliceRandom;
use rand::Rng;

pub const PEOPLE: &[&str] = &[
    "Yuri Onufrienko",
    "Kjell Lindgren",
    "Glenn Ivey",
    "Mark E. Kelly",
    "Chris Hadfield",
    "Sunita Williams",
    "Peggy Whitson",
    "Scott Kelly",
];

/// Map whose cells are 1.0 where the cell's pixel area intersects one of
/// `boxes`, 0.0 elsewhere.
pub fn activated_over(
    image_id: &str,
    word: &str,
    image: (u32, u32),
    grid: (usize, usize),
    boxes: &[BBox],
) -> AttentionMap {
    let (w, h) = (image.0 as f64, image.1 as f64);
    let (gh, gw) = grid;
    let mut cells = vec![0.0f32; gh * gw];
    for r in 0..gh {
        for c in 0..gw {
            let (x0, x1) = (c as f64 * w / gw as f64, (c + 1) as f64 * w / gw as f64);
            let (y0, y1) = (r as f64 * h / gh as f64, (r + 1) as f64 * h / gh as f64);
            if boxes
                .iter()
                .any(|b| x0 < b.right() && b.x < x1 && y0 < b.bottom() && b.y < y1)
            {
                cells[r * gw + c] = 1.0;
            }
        }
    }
    AttentionMap::new(image_id, word, gh, gw, cells).unwrap()
}

pub struct RandomImage {
    pub record: ImageRecord,
    pub caption: String,
    pub maps: ImageMaps,
}

const PHRASES: &[(&str, &str)] = &[
    ("a man", "man"),
    ("the woman", "woman"),
    ("an astronaut", "astronaut"),
    ("a person", "person"),
    ("two men", "men"),
    ("three astronauts", "astronauts"),
    ("two women", "women"),
];
const VERBS: &[&str] = &["waves at", "stands next to", "talks with", "shakes hands with"];
const TAILS: &[&str] = &["in a suit", "near the shuttle", "inside the station", "outside"];

pub fn random_bbox<R: Rng>(rng: &mut R, w: u32, h: u32) -> BBox {
    let bw = rng.gen_range(1.0..=(w as f64 / 2.0).max(1.0));
    let bh = rng.gen_range(1.0..=(h as f64 / 2.0).max(1.0));
    let x = rng.gen_range(0.0..=(w as f64 - bw));
    let y = rng.gen_range(0.0..=(h as f64 - bh));
    BBox::new(x, y, bw, bh)
}

/// Random grid with a soft blob around a random point; values in [0, 1).
pub fn random_map<R: Rng>(rng: &mut R, image_id: &str, word: &str, grid: (usize, usize)) -> AttentionMap {
    let (gh, gw) = grid;
    let (cr, cc) = (rng.gen_range(0..gh) as f64, rng.gen_range(0..gw) as f64);
    let spread = rng.gen_range(1.0..=(gh.max(gw) as f64).max(1.0));
    let cells = (0..gh * gw)
        .map(|i| {
            let (r, c) = ((i / gw) as f64, (i % gw) as f64);
            let d2 = (r - cr).powi(2) + (c - cc).powi(2);
            ((-d2 / (2.0 * spread * spread)).exp() * 0.8 + rng.gen_range(0.0..0.2)) as f32
        })
        .collect();
    AttentionMap::new(image_id, word, gh, gw, cells).unwrap()
}

/// Random image with 0..=4 faces (similarities straddling 0.90), a caption
/// built only from constructions the rewrite rules handle, and a random
/// attention map for every person word in it.
pub fn random_image<R: Rng>(rng: &mut R, id: &str) -> RandomImage {
    let (w, h) = (rng.gen_range(40..400u32), rng.gen_range(40..400u32));
    let mut record = ImageRecord::new(id, w, h, "A description.");
    let n_faces = rng.gen_range(0..=4);
    for _ in 0..n_faces {
        let bbox = random_bbox(rng, w, h);
        let name = *PEOPLE.choose(rng).unwrap();
        let sim = rng.gen_range(0.80..=1.0);
        record.faces.push(FaceObservation::new(bbox).identified(name, sim));
    }
    let p1 = PHRASES.choose(rng).unwrap();
    let mut p2 = PHRASES.choose(rng).unwrap();
    while p2.1 == p1.1 {
        p2 = PHRASES.choose(rng).unwrap();
    }
    let caption = format!(
        "{} {} {} {}",
        p1.0,
        VERBS.choose(rng).unwrap(),
        p2.0,
        TAILS.choose(rng).unwrap()
    );
    let grid = (rng.gen_range(4..=24), rng.gen_range(4..=24));
    let maps = ImageMaps::new()
        .with(random_map(rng, id, p1.1, grid))
        .with(random_map(rng, id, p2.1, grid));
    RandomImage { record, caption, maps }
}

/// Activated cells inside the rectangle, counted one by one.
pub fn brute_force_overlap(mask: &capmerge_core::ActivationMask, rect: &capmerge_core::GridRect) -> (u64, u64) {
    let mut inside = 0;
    let mut area = 0;
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            if r >= rect.row0 && r < rect.row1 && c >= rect.col0 && c < rect.col1 {
                area += 1;
                if mask.get(r, c) {
                    inside += 1;
                }
            }
        }
    }
    (inside, area)
}

/// Write a manifest, a captions file and an attention index under `dir` and
/// return a config pointing at them (output: `dir/enhanced.jsonl`). With
/// `binary`, maps go to `.attn` files referenced by relative path; otherwise
/// grids are inlined in the index.
pub fn write_inputs(
    dir: &std::path::Path,
    records: &[ImageRecord],
    captions: &[(&str, &str)],
    maps: &[AttentionMap],
    binary: bool,
) -> capmerge_core::RunConfig {
    use serde_json::json;
    let manifest = dir.join("manifest.json");
    std::fs::write(&manifest, serde_json::to_string_pretty(records).unwrap()).unwrap();
    let caption_path = dir.join("captions.jsonl");
    let lines: String = captions
        .iter()
        .map(|(id, c)| json!({"id": id, "caption": c}).to_string() + "\n")
        .collect();
    std::fs::write(&caption_path, lines).unwrap();
    let attn_dir = dir.join("attention");
    std::fs::create_dir_all(&attn_dir).unwrap();
    let entries: Vec<serde_json::Value> = maps
        .iter()
        .enumerate()
        .map(|(i, m)| {
            if binary {
                let file = format!("{i:05}.attn");
                m.write_binary(&attn_dir.join(&file)).unwrap();
                json!({"image_id": m.image_id, "word": m.word, "path": file})
            } else {
                let rows: Vec<Vec<f32>> = m.cells().chunks(m.width()).map(<[f32]>::to_vec).collect();
                json!({"image_id": m.image_id, "word": m.word, "grid": rows})
            }
        })
        .collect();
    let index = attn_dir.join("index.json");
    std::fs::write(&index, serde_json::to_string(&entries).unwrap()).unwrap();
    capmerge_core::RunConfig {
        manifest: Some(manifest),
        captions: Some(caption_path),
        attention_index: Some(index),
        output: Some(dir.join("enhanced.jsonl")),
        ..Default::default()
    }
}
