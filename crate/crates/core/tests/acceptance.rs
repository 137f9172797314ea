//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use semfilter::codec::{encode, JpegCodec};
use semfilter::embed::{ClipTokenizer, SimilarityTable};
use semfilter::eval::{bd_rate, RateQualityCurve};
use semfilter::pipeline::global_gaussian;
use semfilter::prefilter::{filter_blocks, sigma_for_score};
use semfilter::prompt::{prune_to_window, Pos, PromptPreprocessor};
use semfilter::score::{score_tiles, CellGrid};
use semfilter::tiler::select_stride;
use semfilter::{Embedding, Image, PipelineConfig, Prefilter, StubBackend};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

enum Outcome {
    Pass(String),
    Fail(String),
    Skipped(String),
}

use Outcome::*;

fn within(limit: Duration, elapsed: Duration, detail: String) -> Outcome {
    if elapsed < limit {
        Pass(detail)
    } else {
        Fail(format!("{detail}; took {elapsed:.1?}, limit {limit:?}"))
    }
}

fn unit(r: &mut impl Rng, dim: usize) -> Embedding {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| r.random_range(-1.0f32..1.0)).collect();
        if let Ok(e) = Embedding::normalized(v) {
            return e;
        }
    }
}

fn c1_softmax_normalization() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for set in 0..1000 {
        let k = r.random_range(1..=64usize);
        let scale = [1.0, 20.0, 100.0][set % 3];
        let text = unit(&mut r, 32);
        let tiles: Vec<Embedding> = (0..k).map(|_| unit(&mut r, 32)).collect();
        let s = score_tiles(&text, &tiles, scale).unwrap();
        let err = (s.iter().sum::<f64>() - k as f64).abs() / k as f64;
        worst = worst.max(err);
        if err > 1e-6 {
            return Fail(format!("set {set}: k={k} scale={scale} sum off by {err:e}·k"));
        }
        let same = vec![tiles[0].clone(); k];
        let u = score_tiles(&text, &same, scale).unwrap();
        if let Some(v) = u.iter().find(|v| (*v - 1.0).abs() > 1e-9) {
            return Fail(format!("uniform similarity gave {v} for k={k}"));
        }
    }
    within(Duration::from_secs(5), t0.elapsed(), format!("1000 sets, worst relative sum error {worst:.1e}"))
}

fn c2_sigma_shape() -> Outcome {
    let (s1, smax) = (0.2, 3.0);
    if sigma_for_score(0.0, s1, smax) != smax || sigma_for_score(1.0, s1, smax) != s1 {
        return Fail("endpoints not exact".into());
    }
    let mid = sigma_for_score(0.5, s1, smax);
    if (mid - (s1 * smax).sqrt()).abs() > 1e-12 {
        return Fail(format!("σ(0.5) = {mid}"));
    }
    let n = 30_000;
    let mut prev = f64::INFINITY;
    for i in 0..=n {
        let s = 3.0 * i as f64 / n as f64;
        let v = sigma_for_score(s, s1, smax);
        if v >= prev {
            return Fail(format!("not strictly decreasing at score {s}"));
        }
        prev = v;
    }
    Pass(format!("σ(0)=3, σ(1)=0.2, σ(0.5)={mid:.12}, decreasing on {n} steps"))
}

fn c3_filter_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut worst = 0u8;
    for b in 0..20u64 {
        let img = match b % 3 {
            0 => white_noise(224, 224, 100 + b),
            1 => texture(224, 224, 100 + b),
            _ => natural(224, 224, 100 + b),
        };
        for sigma in [0.2, 1.0, 3.0] {
            let grid = CellGrid::new(1, 1, 224, vec![sigma]).unwrap();
            let out = filter_blocks(&img, &grid, 11).unwrap();
            let oracle = conv2d_window(&img, 0, 0, 224, 224, sigma, 11);
            let d = out.data().iter().zip(&oracle).map(|(a, b)| a.abs_diff(*b)).max().unwrap();
            worst = worst.max(d);
        }
    }
    if worst > 1 {
        return Fail(format!("max deviation {worst} gray levels"));
    }
    within(Duration::from_secs(30), t0.elapsed(), format!("60 block/σ pairs, max deviation {worst}"))
}

fn c4_ablation_identity() -> Outcome {
    let mut cfg = PipelineConfig::default();
    cfg.flags.use_scoring = false;
    let pf = Prefilter::new(cfg.clone(), Arc::new(StubBackend::default())).unwrap();
    let sizes = [(224, 224), (300, 200), (448, 448), (500, 375), (640, 480), (231, 467), (800, 600), (224, 900), (1000, 250), (333, 333)];
    for (i, &(w, h)) in sizes.iter().enumerate() {
        let img = match i % 3 {
            0 => natural(w, h, i as u64),
            1 => texture(w, h, i as u64),
            _ => white_noise(w, h, i as u64),
        };
        let ours = pf.run(&img, "What color is the car on the left?").unwrap().filtered;
        let base = global_gaussian(&img, cfg.sigma_one, &cfg).unwrap();
        if ours.data() != base.data() {
            return Fail(format!("fixture {i} ({w}x{h}) differs"));
        }
    }
    Pass("10 fixtures byte-identical to global Gaussian σ=0.2".into())
}

fn c5_compression_gain() -> Outcome {
    let t0 = Instant::now();
    let suite: Vec<(&str, Image)> = (0..10u64)
        .map(|i| match i {
            0..=3 => ("noise", white_noise(448, 448, 500 + i)),
            4..=6 => ("texture", texture(448, 448, 500 + i)),
            _ => ("natural", natural(448, 448, 500 + i)),
        })
        .collect();
    let qualities = [10, 30, 50, 70, 90];
    let mut reductions = Vec::new();
    let mut per_q = vec![Vec::new(); qualities.len()];
    for (idx, (kind, img)) in suite.iter().enumerate() {
        // one relevant tile at the origin; everything else scores low
        let mut table = SimilarityTable::new(0.05);
        table.insert(&img.crop(0, 0, 224, 224).unwrap(), 0.35);
        let backend = StubBackend::default().with_similarity_table(table);
        let pf = Prefilter::new(PipelineConfig::default(), Arc::new(backend)).unwrap();
        let out = pf.run(img, "a cat").unwrap();
        let high = out.scores.values.iter().filter(|&&s| s >= 0.5).count();
        let frac = high as f64 / out.scores.values.len() as f64;
        if frac > 0.25 || high == 0 {
            return Fail(format!("image {idx}: {:.0}% of cells marked", frac * 100.0));
        }
        for (qi, &q) in qualities.iter().enumerate() {
            let plain = encode(&JpegCodec, &out.resized, q).unwrap().bpp;
            let filt = encode(&JpegCodec, &out.filtered, q).unwrap().bpp;
            if filt >= plain {
                return Fail(format!("image {idx} ({kind}) q{q}: {filt:.4} >= {plain:.4} bpp"));
            }
            let red = 1.0 - filt / plain;
            per_q[qi].push(red);
            if *kind != "natural" {
                reductions.push(red);
            }
        }
    }
    let mean = reductions.iter().sum::<f64>() / reductions.len() as f64;
    let by_q: Vec<String> = qualities
        .iter()
        .zip(&per_q)
        .map(|(q, v)| format!("q{q} {:.1}%", 100.0 * v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    if mean < 0.10 {
        return Fail(format!("mean noise/texture reduction {:.1}% < 10% ({})", mean * 100.0, by_q.join(", ")));
    }
    within(
        Duration::from_secs(120),
        t0.elapsed(),
        format!("bpp lower everywhere; noise/texture mean reduction {:.1}%; {}", mean * 100.0, by_q.join(", ")),
    )
}

fn c6_bd_rate() -> Outcome {
    let a = RateQualityCurve::from_pairs("a", &[(0.1, 30.0), (0.2, 33.2), (0.4, 36.1), (0.8, 38.4)]).unwrap();
    let same = bd_rate(&a, &a).unwrap();
    if same != 0.0 {
        return Fail(format!("bd_rate(a, a) = {same}"));
    }
    let half: Vec<(f64, f64)> = a.points().iter().map(|p| (p.bpp / 2.0, p.quality)).collect();
    let h = bd_rate(&a, &RateQualityCurve::from_pairs("h", &half).unwrap()).unwrap();
    if (h + 50.0).abs() > 0.01 {
        return Fail(format!("half-rate fixture gave {h}"));
    }
    let mut r = rng(6);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let curve = |r: &mut rand_chacha::ChaCha8Rng| {
            let (mut b, mut q) = (r.random_range(0.05..0.2), r.random_range(25.0..35.0));
            (0..4)
                .map(|_| {
                    b *= r.random_range(1.3..2.4);
                    q += r.random_range(0.8..5.0);
                    (b, q)
                })
                .collect::<Vec<(f64, f64)>>()
        };
        let (pa, pt) = (curve(&mut r), curve(&mut r));
        let ca = RateQualityCurve::from_pairs("a", &pa).unwrap();
        let ct = RateQualityCurve::from_pairs("t", &pt).unwrap();
        let Ok(exact) = bd_rate(&ca, &ct) else { continue };
        let dense = bd_rate_dense(&pa, &pt, 200_000);
        let rel = ((exact - dense) / dense.abs().max(1e-9)).abs();
        worst = worst.max(rel);
        if rel > 1e-4 {
            return Fail(format!("{exact} vs dense {dense}"));
        }
    }
    Pass(format!("identity 0, half-rate {h:.6}%, random curves worst relative gap {worst:.1e}"))
}

fn c7_stride_exhaustive() -> Outcome {
    let t0 = Instant::now();
    let mut checked = 0usize;
    for wt in 1..=10 {
        for ht in 1..=10 {
            for n in 1..=600 {
                let (w, h) = (wt * 224, ht * 224);
                let got = select_stride(w, h, 224, n, true);
                let want = brute_stride(w, h, 224, n);
                if got != want {
                    return Fail(format!("{w}x{h} tile_num {n}: {got} vs {want}"));
                }
                checked += 1;
            }
        }
    }
    within(Duration::from_secs(10), t0.elapsed(), format!("{checked} cases match brute force"))
}

fn c8_prompt_budget() -> Outcome {
    let pp = PromptPreprocessor::default();
    let tok = ClipTokenizer::from_file(format!("{FIXTURES}/tiny_clip/bpe_simple_vocab_16e6.txt.gz")).unwrap();
    let bpe = |s: &str| tok.count(s);
    let words = |s: &str| s.split_whitespace().count() + 2;
    let corpus = std::fs::read_to_string(format!("{FIXTURES}/prompts.txt")).unwrap();
    let prompts: Vec<&str> = corpus.lines().collect();
    if prompts.len() != 50 {
        return Fail(format!("corpus has {} prompts", prompts.len()));
    }
    let mut pruned = 0;
    for prompt in &prompts {
        let tp = pp.normalize(&pp.strip_instructions(prompt));
        for (name, count) in [("bpe", &bpe as &dyn Fn(&str) -> usize), ("words", &words)] {
            for window in [16, 32, 77] {
                let out = prune_to_window(&tp, window, count);
                if count(&out) > window {
                    return Fail(format!("{name}/{window}: {out:?} needs {}", count(&out)));
                }
                let kept: Vec<&str> = out.split_whitespace().collect();
                // walk the original tokens, matching kept words in order
                let mut k = kept.iter().peekable();
                let mut noun_dropped = false;
                let mut lower_kept = false;
                for t in &tp.tokens {
                    if k.peek().is_some_and(|w| **w == t.lemma) {
                        k.next();
                        lower_kept |= t.pos != Pos::Noun;
                    } else if t.pos == Pos::Noun {
                        noun_dropped = true;
                    }
                }
                if noun_dropped && lower_kept {
                    return Fail(format!("{name}/{window}: noun dropped while a lower class remains in {out:?}"));
                }
                if kept.len() < tp.tokens.len() {
                    pruned += 1;
                }
            }
        }
    }
    Pass(format!("50 prompts x 3 windows x 2 counters within budget; {pruned} runs pruned"))
}

#[cfg(feature = "neural")]
fn c9_neural() -> Outcome {
    use semfilter::embed::{NeuralBackend, MODEL_DIR_ENV};
    use semfilter::EmbeddingBackend;

    fn golden(b: &NeuralBackend) -> Result<f64, String> {
        let g = b.metadata().golden.clone().ok_or("metadata has no golden vectors")?;
        let mut worst = 1.0f64;
        for t in &g.texts {
            let c = b.encode_text(&t.text).unwrap().dot(&Embedding::normalized(t.vector.clone()).unwrap()).unwrap();
            worst = worst.min(c);
        }
        for t in &g.tiles {
            let img = semfilter::load_image(b.assets_dir().join(&t.image)).unwrap();
            let e = b.encode_images(&[img]).unwrap().remove(0);
            worst = worst.min(e.dot(&Embedding::normalized(t.vector.clone()).unwrap()).unwrap());
        }
        if g.texts.is_empty() && g.tiles.is_empty() {
            return Err("golden set is empty".into());
        }
        if worst < 0.999 {
            return Err(format!("golden cosine {worst:.5} < 0.999"));
        }
        Ok(worst)
    }

    let fixture = NeuralBackend::load(format!("{FIXTURES}/tiny_clip")).unwrap();
    let fix_cos = match golden(&fixture) {
        Ok(c) => c,
        Err(e) => return Fail(format!("tiny fixture: {e}")),
    };
    let Some(dir) = std::env::var_os(MODEL_DIR_ENV) else {
        return Skipped(format!(
            "{MODEL_DIR_ENV} not set; tiny ONNX fixture golden check passed (min cosine {fix_cos:.5}), quadrant check needs real weights"
        ));
    };
    let real = match NeuralBackend::load(&dir) {
        Ok(b) => b,
        Err(e) => return Fail(format!("loading {}: {e}", dir.to_string_lossy())),
    };
    let real_cos = match golden(&real) {
        Ok(c) => c,
        Err(e) => return Fail(format!("model assets: {e}")),
    };
    let pf = Prefilter::new(PipelineConfig::default(), Arc::new(real)).unwrap();
    let objects: [(&str, [u8; 3], bool); 5] = [
        ("a red ball", [220, 30, 30], true),
        ("a blue square", [30, 60, 220], false),
        ("a yellow sun", [250, 220, 40], true),
        ("a green square", [40, 180, 60], false),
        ("a red ball", [220, 30, 30], true),
    ];
    let mut wins = 0;
    let mut log = Vec::new();
    for (i, (prompt, color, round)) in objects.iter().enumerate() {
        let quad = i % 4;
        let (qx, qy) = ((quad % 2) * 224, (quad / 2) * 224);
        let bg = texture(448, 448, 900 + i as u64);
        let img = Image::from_fn(448, 448, |x, y| {
            let (dx, dy) = (x as f64 - (qx + 112) as f64, y as f64 - (qy + 112) as f64);
            let inside = if *round { dx * dx + dy * dy < 85.0 * 85.0 } else { dx.abs() < 80.0 && dy.abs() < 80.0 };
            if inside {
                *color
            } else {
                let p = bg.pixel(x, y);
                [p[0] / 2 + 60, p[1] / 2 + 60, p[2] / 2 + 60]
            }
        })
        .unwrap();
        let out = pf.run(&img, prompt).unwrap();
        let g = &out.scores;
        let (hx, hy) = (g.cells_x / 2, g.cells_y / 2);
        let mut sums = [0.0f64; 4];
        let mut counts = [0usize; 4];
        for cy in 0..g.cells_y {
            for cx in 0..g.cells_x {
                let q = usize::from(cx >= hx) + 2 * usize::from(cy >= hy);
                sums[q] += g.get(cx, cy);
                counts[q] += 1;
            }
        }
        let target = sums[quad] / counts[quad] as f64;
        let rest = (sums.iter().sum::<f64>() - sums[quad]) / (counts.iter().sum::<usize>() - counts[quad]) as f64;
        if target > rest {
            wins += 1;
        }
        log.push(format!("{target:.2}/{rest:.2}"));
    }
    let detail = format!("golden min cosine {real_cos:.5}; quadrant wins {wins}/5 ({})", log.join(" "));
    if wins >= 4 {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

#[cfg(not(feature = "neural"))]
fn c9_neural() -> Outcome {
    Skipped("built without the neural feature".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("softmax normalization", c1_softmax_normalization),
        ("sigma endpoints and shape", c2_sigma_shape),
        ("filter vs 2-D convolution oracle", c3_filter_oracle),
        ("scoring-off ablation identity", c4_ablation_identity),
        ("compression gain under prefiltering", c5_compression_gain),
        ("BD-rate oracle", c6_bd_rate),
        ("exhaustive stride selection", c7_stride_exhaustive),
        ("prompt budget", c8_prompt_budget),
        ("neural golden vectors and quadrant scores", c9_neural),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Fail(format!("panicked: {msg}"))
        });
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        let (tag, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skipped(d) => ("SKIPPED", d),
        };
        println!("acceptance {}: {tag} [{name}] {detail} ({ms:.0} ms)", i + 1);
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
}
