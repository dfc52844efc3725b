//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line; exits non-zero if any fails.

mod common;

use std::fs;
use std::time::{Duration, Instant};

use capmerge_core::merge::enhance;
use capmerge_core::metrics::{bleu_breakdown, lcs_len, meteor_pair, CiderScorer};
use capmerge_core::pipeline::run_enhance;
use capmerge_core::saliency::overlap_counts;
use capmerge_core::{
    bbox_to_grid, binarize, overlap_ratio, relative_improvement, split_first_sentence, Abbreviations, ActivationMask,
    BBox, FaceObservation, GridRect, ImageRecord, InsertionStats, MergeConfig, NameDictionary, OverlapDenominator,
    ScoredPair,
};
use common::{activated_over, brute_force_overlap, random_image, write_inputs, PEOPLE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn table3_arithmetic() -> Check {
    let rows = [
        (10608, 81.08),
        (9414, 71.95),
        (12193, 93.20),
        (12181, 93.11),
        (10907, 83.37),
        (10840, 82.86),
    ];
    let mut worst: f64 = 0.0;
    for (inserted, published) in rows {
        let stats = InsertionStats::from_counts(13083, inserted, 7820);
        let diff = (stats.percent_inserted - published).abs();
        worst = worst.max(diff);
        ensure(diff <= 0.01, || {
            format!("{inserted}/13083 = {:.4}% vs published {published}", stats.percent_inserted)
        })?;
    }
    Ok(format!("6 rows within 0.01 pp (max deviation {worst:.4})"))
}

fn relative_improvements() -> Check {
    for (before, after, published) in [(0.48, 0.90, 87.5), (0.46, 0.62, 34.8), (1.19, 1.33, 11.8)] {
        let got = relative_improvement(before, after).map_err(|e| e.to_string())?;
        let rounded = (got * 10.0).round() / 10.0;
        ensure(rounded == published, || format!("{before} -> {after}: {got:.4}%, expected {published}%"))?;
    }
    Ok("+87.5%, +34.8%, +11.8%".into())
}

fn merge_fixtures() -> Check {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let (w, h) = (200u32, 100u32);
    let left = BBox::new(10.0, 10.0, 60.0, 60.0);
    let right = BBox::new(130.0, 10.0, 60.0, 60.0);
    let people = ["Yuri Onufrienko", "Kjell Lindgren", "Glenn Ivey", "Mark E. Kelly", "A", "B"];
    let one_hot = |name: &str| {
        let k = people.iter().position(|p| *p == name).unwrap();
        (0..people.len()).map(|i| if i == k { 1.0 } else { 0.0 }).collect::<Vec<f64>>()
    };
    let mut records = Vec::new();
    let mut faces_of = |id: &str, faces: &[(&str, BBox)]| {
        let mut r = ImageRecord::new(id, w, h, "Description.");
        r.faces = faces
            .iter()
            .map(|(n, b)| FaceObservation::new(*b).with_embedding(one_hot(n)))
            .collect();
        records.push(r);
    };
    faces_of("t2-1", &[("Yuri Onufrienko", left)]);
    faces_of("t2-2", &[("Glenn Ivey", left), ("Kjell Lindgren", right)]);
    faces_of("t2-3", &[("Mark E. Kelly", left)]);
    faces_of("fig4", &[("B", right), ("A", left)]);
    let grid = (16, 32);
    let maps = [
        activated_over("t2-1", "man", (w, h), grid, &[left]),
        activated_over("t2-2", "astronaut", (w, h), grid, &[right]),
        activated_over("t2-2", "man", (w, h), grid, &[left]),
        activated_over("t2-3", "Chris Hadfield", (w, h), grid, &[left]),
        activated_over("fig4", "men", (w, h), grid, &[left, right]),
    ];
    let captions = [
        ("t2-1", "a man in an orange space suit"),
        ("t2-2", "An astronaut clapping with a man in a suit"),
        ("t2-3", "Chris Hadfield in a space suit"),
        ("fig4", "Two men are shaking hand outside"),
    ];
    let mut config = write_inputs(dir.path(), &records, &captions, &maps, true);
    let gallery = dir.path().join("gallery.json");
    let entries: Vec<_> = people
        .iter()
        .map(|p| json!({"name": p, "embeddings": [one_hot(p)]}))
        .collect();
    fs::write(&gallery, serde_json::to_string(&entries).unwrap()).map_err(|e| e.to_string())?;
    let names = dir.path().join("names.json");
    fs::write(&names, json!({"names": ["Chris Hadfield"]}).to_string()).map_err(|e| e.to_string())?;
    config.gallery = Some(gallery);
    config.names = Some(names);

    run_enhance(&config, None).map_err(|e| e.to_string())?;
    let text = fs::read_to_string(config.output.as_ref().unwrap()).map_err(|e| e.to_string())?;
    let got: Vec<(String, String)> = text
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["id"].as_str().unwrap().to_string(), v["enhanced_caption"].as_str().unwrap().to_string())
        })
        .collect();
    let expected = [
        ("fig4", "A and B are shaking hand outside"),
        ("t2-1", "Yuri Onufrienko in an orange space suit"),
        ("t2-2", "Kjell Lindgren clapping with Glenn Ivey in a suit"),
        ("t2-3", "Mark E. Kelly in a space suit"),
    ];
    ensure(got.len() == expected.len(), || format!("{} output lines", got.len()))?;
    for ((id, caption), (eid, ecaption)) in got.iter().zip(expected) {
        ensure(id == eid && caption == ecaption, || format!("{id}: {caption:?}, expected {ecaption:?}"))?;
    }
    Ok("3 table strings and the numeral case reproduced byte-exactly".into())
}

fn geometry_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let start = Instant::now();
    for i in 0..1000 {
        let density = rng.gen_range(0.05..0.95);
        let cells: Vec<bool> = (0..64 * 64).map(|_| rng.gen_bool(density)).collect();
        let mask = ActivationMask::from_cells(64, 64, cells, 0.5).map_err(|e| e.to_string())?;
        let (r0, c0) = (rng.gen_range(0..64), rng.gen_range(0..64));
        let rect = GridRect {
            row0: r0,
            col0: c0,
            row1: rng.gen_range(r0 + 1..=64),
            col1: rng.gen_range(c0 + 1..=64),
        };
        let (inside, area) = brute_force_overlap(&mask, &rect);
        let got = overlap_ratio(&mask, &rect).map_err(|e| e.to_string())?;
        ensure(got == inside as f64 / area as f64, || format!("instance {i}: {got} vs {inside}/{area}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 instances exact, {elapsed:.2?}"))
}

fn threshold_gates() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let names = NameDictionary::from_names(PEOPLE.iter().copied());
    let mut insertions = 0;
    let mut below_sim_faces = 0;
    for corpus in 0..1000 {
        let theta = if corpus % 2 == 0 { MergeConfig::DEFAULT_THETA } else { rng.gen_range(0.0..0.6) };
        let config = MergeConfig {
            theta,
            ..MergeConfig::default()
        };
        for i in 0..rng.gen_range(1..=5) {
            let img = random_image(&mut rng, &format!("c{corpus}-{i}"));
            below_sim_faces += img.record.faces.iter().filter(|f| f.similarity.unwrap() < 0.90).count();
            let plan = enhance(&img.record, &img.caption, &img.maps, &names, &config).map_err(|e| e.to_string())?;
            for sub in &plan.substitutions {
                for ins in &sub.names {
                    insertions += 1;
                    let face = &img.record.faces[ins.face_index];
                    ensure(face.similarity.unwrap() >= 0.90 && ins.similarity >= 0.90, || {
                        format!("{}: {} inserted at similarity {}", plan.image_id, ins.name, ins.similarity)
                    })?;
                    let map = img.maps.get(&sub.candidate.surface).ok_or("map missing")?;
                    let mask = binarize(map, config.alpha).map_err(|e| e.to_string())?;
                    let rect = bbox_to_grid(&face.bbox, (img.record.width, img.record.height), (mask.height(), mask.width()))
                        .map_err(|e| e.to_string())?;
                    let (inside, area) = brute_force_overlap(&mask, &rect);
                    let overlap = inside as f64 / area as f64;
                    ensure(overlap >= theta && ins.overlap == overlap, || {
                        format!("{}: overlap {overlap} (reported {}) vs theta {theta}", plan.image_id, ins.overlap)
                    })?;
                }
            }
        }
    }
    ensure(insertions > 0 && below_sim_faces > 0, || "degenerate random corpora".into())?;

    // theta monotonicity: the pairs kept at a higher theta are a subset
    for k in 0..100 {
        let img = random_image(&mut rng, &format!("theta{k}"));
        let (t1, t2) = (rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5));
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let run = |theta: f64| {
            let config = MergeConfig {
                theta,
                ..MergeConfig::default()
            };
            enhance(&img.record, &img.caption, &img.maps, &names, &config).unwrap()
        };
        let (a, b) = (run(lo), run(hi));
        let set = |p: &capmerge_core::MergePlan| {
            p.inserted()
                .map(|i| (i.name.clone(), i.face_index))
                .collect::<std::collections::BTreeSet<_>>()
        };
        ensure(set(&b).is_subset(&set(&a)), || {
            format!("theta {lo} -> {hi}: {:?} not within {:?}", set(&b), set(&a))
        })?;
    }

    // alpha monotonicity: higher alpha never grows a mask or any overlap
    for k in 0..100 {
        let img = random_image(&mut rng, &format!("alpha{k}"));
        let (a1, a2) = (rng.gen_range(0.01..=1.0), rng.gen_range(0.01..=1.0));
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        for map in img.maps.iter() {
            let (m_lo, m_hi) = (binarize(map, lo).unwrap(), binarize(map, hi).unwrap());
            ensure(m_lo.cells().iter().zip(m_hi.cells()).all(|(l, h)| *l || !h), || {
                format!("alpha {lo} -> {hi} grew the mask of {}", map.word)
            })?;
            for face in &img.record.faces {
                let rect = bbox_to_grid(&face.bbox, (img.record.width, img.record.height), (map.height(), map.width()))
                    .unwrap();
                let o_lo = overlap_counts(&m_lo, &rect, OverlapDenominator::BoxArea).unwrap().ratio();
                let o_hi = overlap_counts(&m_hi, &rect, OverlapDenominator::BoxArea).unwrap().ratio();
                ensure(o_hi <= o_lo, || format!("alpha {lo} -> {hi}: overlap {o_lo} -> {o_hi}"))?;
            }
        }
    }
    Ok(format!("{insertions} insertions gated; theta and alpha monotone on 100 instances each"))
}

fn metric_oracles() -> Check {
    let start = Instant::now();
    let hand = ScoredPair::from_text("the the the the", &["the cat"]).unwrap();
    let b = bleu_breakdown(std::slice::from_ref(&hand), 4).map_err(|e| e.to_string())?;
    ensure(b.precisions[0] == 0.25, || format!("clipped unigram precision {}", b.precisions[0]))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let vocab = ["a", "man", "the", "in", "space", "suit", "two", "men"];
    for _ in 0..200 {
        let tokens = |rng: &mut ChaCha8Rng| -> Vec<String> {
            (0..rng.gen_range(0..=10))
                .map(|_| vocab[rng.gen_range(0..vocab.len())].to_string())
                .collect()
        };
        let (x, y) = (tokens(&mut rng), tokens(&mut rng));
        let mut brute = 0;
        for mask in 0u32..1 << x.len() {
            let sub: Vec<&String> = (0..x.len()).filter(|i| mask & (1 << i) != 0).map(|i| &x[i]).collect();
            let mut it = y.iter();
            if sub.iter().all(|s| it.any(|t| t == *s)) {
                brute = brute.max(sub.len());
            }
        }
        ensure(lcs_len(&x, &y) == brute, || format!("LCS {x:?} / {y:?}"))?;
    }

    let corpus = [
        ScoredPair::from_text("a man in space", &["a man in space"]).unwrap(),
        ScoredPair::from_text("red blue green cat", &["red blue green cat"]).unwrap(),
    ];
    let cider = CiderScorer::new(&corpus).map_err(|e| e.to_string())?.score(&corpus[0]);
    ensure((cider - 10.0).abs() <= 1e-9, || format!("CIDEr {cider}"))?;

    let meteor = meteor_pair(&ScoredPair::from_text("a man in space", &["a man in space"]).unwrap());
    ensure((meteor - 0.9921875).abs() <= 1e-12, || format!("METEOR {meteor}"))?;

    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("BLEU p1 = 1/4, 200 LCS pairs, CIDEr {cider}, METEOR {meteor}, {elapsed:.2?}"))
}

fn determinism() -> Check {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let images: Vec<_> = (0..100).map(|i| random_image(&mut rng, &format!("img{i:03}"))).collect();
    let records: Vec<ImageRecord> = images.iter().map(|i| i.record.clone()).collect();
    let captions: Vec<(&str, &str)> = images.iter().map(|i| (i.record.id.as_str(), i.caption.as_str())).collect();
    let maps: Vec<_> = images.iter().flat_map(|i| i.maps.iter().cloned()).collect();
    let mut config = write_inputs(dir.path(), &records, &captions, &maps, true);

    let mut outputs = Vec::new();
    for jobs in [1, 8] {
        config.jobs = jobs;
        let out = dir.path().join(format!("enhanced-{jobs}.jsonl"));
        config.output = Some(out.clone());
        let outcome = run_enhance(&config, None).map_err(|e| e.to_string())?;
        outputs.push((fs::read(&out).map_err(|e| e.to_string())?, outcome.stats.persons_inserted));
    }
    ensure(outputs[0].1 > 0, || "no insertions in the fixture".into())?;
    ensure(outputs[0].0 == outputs[1].0, || "jobs=1 and jobs=8 outputs differ".into())?;
    Ok(format!(
        "100 images, {} bytes identical at jobs 1 and 8 ({} insertions)",
        outputs[0].0.len(),
        outputs[0].1
    ))
}

fn sentence_split() -> Check {
    const DESCRIPTION: &str = "Dr. Donald Gilles, the Discipline Scientist for Materials Science in NASA's Microgravity Materials Science and Applications Department, demonstrates to Carl Dohrman a model of dendrites, the branch-like structures found in many metals and alloys. Dohrman was recently selected by the American Society for Metals International as their 1999 ASM International Foundation National Merit Scholar. The University of Illinois at Urbana-Champaign freshman recently toured NASA's materials science facilities at the Marshall Space Flight Center.";
    const FIRST: &str = "Dr. Donald Gilles, the Discipline Scientist for Materials Science in NASA's Microgravity Materials Science and Applications Department, demonstrates to Carl Dohrman a model of dendrites, the branch-like structures found in many metals and alloys.";
    let s = split_first_sentence(DESCRIPTION, &Abbreviations::default()).map_err(|e| e.to_string())?;
    ensure(s.text == FIRST && s.terminated, || format!("split at {:?}", s.text))?;
    Ok("ends at \"...found in many metals and alloys.\"".into())
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 insertion percentages", table3_arithmetic),
        ("2 relative improvements", relative_improvements),
        ("3 merge output strings", merge_fixtures),
        ("4 overlap geometry oracle", geometry_oracle),
        ("5 threshold gates", threshold_gates),
        ("6 metric oracles", metric_oracles),
        ("7 parallel determinism", determinism),
        ("8 first-sentence split", sentence_split),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS  {name}: {detail}"),
            Ok(Err(reason)) => {
                failed += 1;
                println!("FAIL  {name}: {reason}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  {name}: panicked");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
