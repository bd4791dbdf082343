//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p storyboard --test acceptance`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use storyboard::backends::testing::RecordingImage;
use storyboard::backends::{A1111Client, Health, ImageBackend, ImageRequest, MockChat};
use storyboard::core::{
    build_frame_system_prompt, parse_frame_reply, parse_style_reply, replay, FramePrompt,
    FrameSlot, FrameStatus, StyleParameters,
};
use storyboard::pipeline::ProjectState;

const ROUND_TRIPS: usize = 1_000;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(5);
const TEMPLATE_MAX_N: usize = 64;
const CLI_BUDGET: Duration = Duration::from_secs(10);
const FUZZ_CASES: usize = 10_000;
const MAX_ATTEMPTS_PER_IMAGE: u64 = 2;
const LIVE_FACTOR: f64 = 5.0;
const LIVE_REFERENCE_SECS: f64 = 1.0;
const LIVE_SAMPLES: usize = 3;

const GOLDEN_STYLE: &str = "Age:{5-7}, Gender:{female}, Hair:{brown curl}, Clothing:{blue dress}, Scene:{under the soft glow of her desk lamp}, Location:{Indoor, in Cindy's warm and comfortable bedroom}, Color:{warm tones}, Art type:{realistic}, Lens and Shot:{Medium Shot}";
const GOLDEN_FRAME: &str = "General description: {A boy playing with a dog in a park}, Person: {A boy with a red hat and freckles}, Action: {playing fetch with a golden retriever dog}, Background: {outdoor, a sunny park with a lake}, Shot: {close-up}";

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;

fn main() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let checks: Vec<(&str, Check)> = vec![
        ("grammar round-trip", Box::new(|| gate(round_trips()))),
        ("golden examples", Box::new(|| gate(golden()))),
        ("template substitution", Box::new(|| gate(substitution()))),
        (
            "mock end-to-end determinism",
            Box::new(|| gate(cli_determinism())),
        ),
        (
            "frame isolation",
            Box::new(|| gate(rt.block_on(isolation()))),
        ),
        (
            "style propagation",
            Box::new(|| gate(rt.block_on(propagation()))),
        ),
        (
            "edit state machine",
            Box::new(|| gate(rt.block_on(state_machine()))),
        ),
        (
            "comparison harness shape",
            Box::new(|| gate(compare_shape())),
        ),
        ("parser fuzz", Box::new(|| gate(fuzz()))),
        (
            "live a1111 latency (not gating)",
            Box::new(|| rt.block_on(live_latency())),
        ),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        let verdict = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Verdict::Fail("panicked".into()));
        match verdict {
            Verdict::Pass(d) => println!("PASS  {name}: {d}"),
            Verdict::Skip(d) => println!("SKIP  {name}: {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!("{} checks, {failed} failed", checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn gate(o: Outcome) -> Verdict {
    match o {
        Ok(d) => Verdict::Pass(d),
        Err(d) => Verdict::Fail(d),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const POOL: &[char] = &[
    'a', 'b', 'z', 'Q', 'X', '0', '7', ' ', ' ', ',', ':', '{', '-', '.', '/', '\'', '"', '(', 'é',
    'ß', '中', '😀', '\t', '*', '#', '1',
];

fn random_value(rng: &mut ChaCha8Rng, allow_empty: bool) -> String {
    loop {
        let len = rng.random_range(0..=30);
        let s: String = (0..len)
            .map(|_| POOL[rng.random_range(0..POOL.len())])
            .collect();
        let s = s.trim().to_string();
        if s.contains("//") || (!allow_empty && s.is_empty()) {
            continue;
        }
        return s;
    }
}

fn random_style(rng: &mut ChaCha8Rng) -> StyleParameters {
    let mut v = (0..9).map(|_| random_value(rng, true));
    StyleParameters {
        age: v.next().unwrap(),
        gender: v.next().unwrap(),
        hair: v.next().unwrap(),
        clothing: v.next().unwrap(),
        scene: v.next().unwrap(),
        location: v.next().unwrap(),
        color: v.next().unwrap(),
        art_type: v.next().unwrap(),
        lens_and_shot: v.next().unwrap(),
    }
}

fn random_frame(rng: &mut ChaCha8Rng) -> FramePrompt {
    let mut f = FramePrompt::new(random_value(rng, false));
    for slot in &FrameSlot::ALL[1..] {
        let v = rng.random_bool(0.6).then(|| random_value(rng, false));
        f.set(*slot, v);
    }
    f
}

fn round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let started = Instant::now();
    for i in 0..ROUND_TRIPS {
        let s = random_style(&mut rng);
        let back = parse_style_reply(&s.serialize()).map_err(|e| format!("style {i}: {e:?}"))?;
        ensure(back == s, || {
            format!("style {i} changed: {s:?} -> {back:?}")
        })?;
    }
    let mut frames_done = 0;
    while frames_done < ROUND_TRIPS {
        let n = rng.random_range(1..=6).min(ROUND_TRIPS - frames_done);
        let frames: Vec<FramePrompt> = (0..n).map(|_| random_frame(&mut rng)).collect();
        let text: Vec<String> = frames.iter().map(FramePrompt::serialize).collect();
        let parsed = parse_frame_reply(&text.join("\n\n"), n)
            .map_err(|e| format!("frames at {frames_done}: {e:?}"))?;
        ensure(parsed.prompts == frames, || {
            format!("frames at {frames_done} changed: {frames:?}")
        })?;
        frames_done += n;
    }
    let took = started.elapsed();
    ensure(took < ROUND_TRIP_BUDGET, || {
        format!("took {took:?}, budget {ROUND_TRIP_BUDGET:?}")
    })?;
    Ok(format!(
        "{ROUND_TRIPS} styles + {ROUND_TRIPS} frames in {:.3} s",
        took.as_secs_f64()
    ))
}

fn golden() -> Outcome {
    let style = parse_style_reply(GOLDEN_STYLE).map_err(|e| format!("{e:?}"))?;
    let expected = StyleParameters {
        age: "5-7".into(),
        gender: "female".into(),
        hair: "brown curl".into(),
        clothing: "blue dress".into(),
        scene: "under the soft glow of her desk lamp".into(),
        location: "Indoor, in Cindy's warm and comfortable bedroom".into(),
        color: "warm tones".into(),
        art_type: "realistic".into(),
        lens_and_shot: "Medium Shot".into(),
    };
    ensure(style == expected, || format!("style: {style:?}"))?;
    let parsed = parse_frame_reply(GOLDEN_FRAME, 1).map_err(|e| format!("{e:?}"))?;
    let mut want = FramePrompt::new("A boy playing with a dog in a park");
    want.set(
        FrameSlot::Person,
        Some("A boy with a red hat and freckles".into()),
    );
    want.set(
        FrameSlot::Action,
        Some("playing fetch with a golden retriever dog".into()),
    );
    want.set(
        FrameSlot::Background,
        Some("outdoor, a sunny park with a lake".into()),
    );
    want.set(FrameSlot::Shot, Some("close-up".into()));
    ensure(parsed.prompts == vec![want], || {
        format!("frame: {:?}", parsed.prompts)
    })?;
    Ok("9 style slots and 5 frame slots verbatim".into())
}

fn substitution() -> Outcome {
    for n in 1..=TEMPLATE_MAX_N {
        let t = build_frame_system_prompt(n).map_err(|e| format!("n={n}: {e:?}"))?;
        ensure(t.contains(&format!("generate {n} prompts")), || {
            format!("n={n}: count missing")
        })?;
        ensure(!t.contains("PIC-NUM-NEEDED"), || {
            format!("n={n}: placeholder left")
        })?;
    }
    Ok(format!("n = 1..={TEMPLATE_MAX_N}"))
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_storyboard"));
    c.env_remove("STORYBOARD_CONFIG")
        .env_remove("STORYBOARD_IMAGE_BACKEND");
    c
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let story = dir.path().join("story.txt");
    std::fs::write(&story, STORY6).unwrap();
    let mut bundles = Vec::new();
    let started = Instant::now();
    for run in ["first", "second"] {
        let out = dir.path().join(run);
        let o = bin()
            .args([
                "generate", "--mock", "--frames", "6", "--seed", "7", "--story",
            ])
            .arg(&story)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        ensure(o.status.success(), || {
            format!("{run} run: {}", String::from_utf8_lossy(&o.stderr))
        })?;
        bundles.push(tree(&out));
    }
    let took = started.elapsed();
    ensure(bundles[0] == bundles[1], || "bundles differ".into())?;
    ensure(bundles[0].len() >= 9, || {
        format!("only {} files", bundles[0].len())
    })?;
    ensure(took < CLI_BUDGET, || {
        format!("took {took:?}, budget {CLI_BUDGET:?}")
    })?;
    Ok(format!(
        "{} files identical across 2 runs in {:.2} s",
        bundles[0].len(),
        took.as_secs_f64()
    ))
}

async fn isolation() -> Outcome {
    for i in 0..6 {
        let (e, store) = mock_engine();
        let mut p = new_project(&e, STORY6, 6);
        e.resubmit(&mut p).await.map_err(|e| e.to_string())?;
        let before = snapshot(&*store, &p.project);
        e.regenerate_frame(&mut p, i)
            .await
            .map_err(|e| e.to_string())?;
        let after = snapshot(&*store, &p.project);
        for j in 0..6 {
            let same = before[j] == after[j];
            ensure(same == (j != i), || {
                format!("regenerate {i}: frame {j} same={same}")
            })?;
        }
    }
    Ok("i = 0..6, other frames and image bytes identical".into())
}

async fn propagation() -> Outcome {
    let rec = Arc::new(RecordingImage::default());
    let (e, _) = engine_with(Arc::new(MockChat::new(0)), rec.clone());
    let mut p = new_project(&e, STORY6, 6);
    let mut style = parse_style_reply(GOLDEN_STYLE).unwrap();
    style.art_type = "realistic".into();
    e.edit_style(&mut p, style);
    e.resubmit(&mut p).await.map_err(|e| e.to_string())?;
    let reqs = rec.requests();
    ensure(reqs.len() == 6, || {
        format!("{} prompts rendered", reqs.len())
    })?;
    for (i, r) in reqs.iter().enumerate() {
        ensure(r.prompt.contains("realistic"), || {
            format!("prompt {i}: {}", r.prompt)
        })?;
    }
    Ok("6/6 flat prompts contain \"realistic\"".into())
}

fn folds(p: &ProjectState, step: &str) -> Result<(), String> {
    ensure(replay(&p.events).as_ref() == Some(&p.project), || {
        format!("after {step}: replay differs")
    })
}

fn statuses(p: &ProjectState) -> Vec<FrameStatus> {
    p.project.frames.iter().map(|f| f.status).collect()
}

async fn state_machine() -> Outcome {
    use FrameStatus::*;
    let (e, _) = mock_engine();
    let mut p = new_project(&e, STORY6, 6);
    let err = |x: storyboard::pipeline::PipelineError| x.to_string();
    let mut steps = 0;
    let mut check = |p: &ProjectState, step: &str, want: Option<Vec<FrameStatus>>| {
        steps += 1;
        folds(p, step)?;
        if let Some(w) = want {
            ensure(statuses(p) == w, || {
                format!("after {step}: {:?}", statuses(p))
            })?;
        }
        Ok::<(), String>(())
    };
    e.generate_style(&mut p).await.map_err(err)?;
    check(&p, "generate style", Some(vec![Empty; 6]))?;
    e.resubmit(&mut p).await.map_err(err)?;
    check(&p, "resubmit", Some(vec![Rendered; 6]))?;
    e.reset_style(&mut p);
    check(&p, "reset", Some(vec![Stale; 6]))?;
    ensure(
        p.project.style.as_ref().is_none_or(|s| s.is_blank()),
        || "reset kept values".into(),
    )?;
    e.regenerate_style(&mut p).await.map_err(err)?;
    check(&p, "regenerate style", Some(vec![Stale; 6]))?;
    e.resubmit(&mut p).await.map_err(err)?;
    check(&p, "resubmit again", Some(vec![Rendered; 6]))?;
    let mut prompt = p.project.frames[2].prompt.clone();
    prompt.set(FrameSlot::Object, Some("Phone".into()));
    e.update_frame_from_parameters(&mut p, 2, prompt, false)
        .await
        .map_err(err)?;
    check(
        &p,
        "parameter edit",
        Some(vec![
            Rendered, Rendered, Stale, Rendered, Rendered, Rendered,
        ]),
    )?;
    e.update_frame_from_natural_language(&mut p, 4, "A girl asleep next to a lamp.", true)
        .await
        .map_err(err)?;
    check(
        &p,
        "prose edit",
        Some(vec![
            Rendered, Rendered, Stale, Rendered, Rendered, Rendered,
        ]),
    )?;
    e.refresh_stale(&mut p).await;
    check(&p, "refresh", Some(vec![Rendered; 6]))?;
    e.update_story(&mut p, "Cindy studies. Cindy sleeps.")
        .map_err(err)?;
    check(&p, "story edit", Some(vec![Stale; 6]))?;
    e.set_frame_count(&mut p, 4).map_err(err)?;
    check(&p, "frame count", Some(vec![Stale; 4]))?;
    e.resubmit(&mut p).await.map_err(err)?;
    check(&p, "final resubmit", Some(vec![Rendered; 4]))?;
    let events = p.events.len();
    Ok(format!(
        "{steps} steps, {events} events, final state equals replay"
    ))
}

fn compare_shape() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let story = dir.path().join("story.txt");
    std::fs::write(&story, STORY6).unwrap();
    let out = dir.path().join("cmp");
    let o = bin()
        .args(["compare", "--mock", "--modes", "nl,param", "--story"])
        .arg(&story)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    ensure(o.status.success(), || {
        String::from_utf8_lossy(&o.stderr).to_string()
    })?;
    let report: serde_json::Value = serde_json::from_slice(
        &std::fs::read(out.join("comparison.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let n = report["frame_count"].as_u64().unwrap_or(0) as usize;
    let cells = report["cells"].as_array().cloned().unwrap_or_default();
    ensure(cells.len() == 2, || format!("{} cells", cells.len()))?;
    for c in &cells {
        let images = c["images"].as_array().cloned().unwrap_or_default();
        ensure(images.len() == n, || {
            format!("cell {}: {} images for N={n}", c["mode"], images.len())
        })?;
        for img in &images {
            let a = img["attempts"].as_u64().unwrap_or(u64::MAX);
            ensure((1..=MAX_ATTEMPTS_PER_IMAGE).contains(&a), || {
                format!("{a} attempts")
            })?;
        }
    }
    Ok(format!(
        "2 cells x {n} images, <= {MAX_ATTEMPTS_PER_IMAGE} attempts each"
    ))
}

const GRAMMAR_BITS: &[&str] = &[
    "{",
    "}",
    ":",
    ",",
    "\n",
    "\n\n",
    "```",
    "1. ",
    "Age",
    "Gender:",
    "Art type:{",
    "Person: {",
    "General description:",
    "Shot",
    "//",
    " ",
    "\u{0}",
    "\r\n",
    "Scene:{x}",
    "- ",
];

fn fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    let mut parsed_ok = 0usize;
    for case in 0..FUZZ_CASES {
        let bytes: Vec<u8> = if case % 2 == 0 {
            let len = rng.random_range(0..256);
            let mut b = vec![0u8; len];
            rng.fill(&mut b[..]);
            b
        } else {
            let mut b = Vec::new();
            for _ in 0..rng.random_range(0..40) {
                if rng.random_bool(0.7) {
                    b.extend_from_slice(
                        GRAMMAR_BITS[rng.random_range(0..GRAMMAR_BITS.len())].as_bytes(),
                    );
                } else {
                    b.push(rng.random());
                }
            }
            b
        };
        let text = String::from_utf8_lossy(&bytes).to_string();
        let n = rng.random_range(0..8);
        let outcome = catch_unwind(|| {
            let s = parse_style_reply(&text).is_ok();
            let f = parse_frame_reply(&text, n).is_ok();
            (s, f)
        });
        match outcome {
            Ok((s, f)) => parsed_ok += usize::from(s) + usize::from(f),
            Err(_) => return Err(format!("case {case} panicked on {text:?} (n={n})")),
        }
    }
    Ok(format!(
        "{FUZZ_CASES} inputs, no panics, {parsed_ok} parses succeeded"
    ))
}

async fn live_latency() -> Verdict {
    let Ok(url) = std::env::var("STORYBOARD_A1111_URL") else {
        return Verdict::Skip("set STORYBOARD_A1111_URL to measure".into());
    };
    let client = A1111Client::new(&url);
    if let h @ (Health::Down(_) | Health::Degraded(_)) = client.health_check().await {
        return Verdict::Skip(format!("server not usable: {h:?}"));
    }
    let mut total = Duration::ZERO;
    for i in 0..LIVE_SAMPLES {
        let req = ImageRequest::new("a lighthouse on a cliff at dusk, realistic", i as i64 + 1);
        let t = Instant::now();
        if let Err(e) = client.txt2img(&req).await {
            return Verdict::Skip(format!("render failed: {e}"));
        }
        total += t.elapsed();
    }
    let per = total.as_secs_f64() / LIVE_SAMPLES as f64;
    let limit = LIVE_REFERENCE_SECS * LIVE_FACTOR;
    let msg = format!("{per:.2} s/image at 512x512 (limit {limit:.1} s, reported only)");
    if per <= limit {
        Verdict::Pass(msg)
    } else {
        Verdict::Skip(format!("over limit: {msg}"))
    }
}
