//! Command-line front end: batch generation, the comparison harness,
//! project inspection and the HTTP server.

use std::io::Read;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use storyboard_core::config::SeedPolicy;
use storyboard_core::{FrameSlot, FrameStatus, StoryboardProject, StyleField};

use crate::config::{AppConfig, ImageBackendKind, Overrides};
use crate::pipeline::{
    run_comparison_harness, Engine, ManualClock, Mode, ProjectState, SystemClock,
};
use crate::service::{self, AppState};
use crate::store::export::{build_manifest, frame_file_name};
use crate::store::{
    decode_project_file, export, write_atomic, ExportBundle, ExportFormat, FsImageStore,
    MemImageStore, ProjectFile, ProjectStore, SCHEMA_VERSION,
};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Fatal = 1,
    Partial = 2,
}

#[derive(Debug, Parser)]
#[command(
    name = "storyboard",
    version,
    about = "Story to storyboard with text and image models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a storyboard from a story and export it.
    Generate(GenerateArgs),
    /// Compare prose prompts with parameterized prompts across backends.
    Compare(CompareArgs),
    /// Print a saved project file.
    Inspect(InspectArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct BackendArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Chat-completions API root.
    #[arg(long)]
    pub chat_url: Option<String>,
    /// txt2img server root.
    #[arg(long)]
    pub image_url: Option<String>,
}

impl BackendArgs {
    fn overrides(&self, mock: bool) -> Overrides {
        Overrides {
            config_file: self.config.clone(),
            chat_url: self.chat_url.clone(),
            image_url: self.image_url.clone(),
            mock,
            ..Overrides::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Story text file, or `-` for stdin.
    #[arg(long)]
    pub story: String,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Fixed image seed for every frame.
    #[arg(long)]
    pub seed: Option<i64>,
    #[arg(long, default_value = "storyboard-out")]
    pub out: PathBuf,
    /// Use the deterministic offline backends. An explicit --image-url keeps
    /// the live image backend.
    #[arg(long)]
    pub mock: bool,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub story: String,
    /// Comma-separated: nl, param.
    #[arg(long, default_value = "nl,param")]
    pub modes: String,
    /// Comma-separated image backends: mock, a1111, openai-images.
    /// Defaults to mock with --mock, otherwise a1111.
    #[arg(long)]
    pub backends: Option<String>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "comparison-out")]
    pub out: PathBuf,
    /// Use the offline chat mock (and the mock image backend by default).
    #[arg(long)]
    pub mock: bool,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub file: PathBuf,
    /// Print the project as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Serve with the deterministic offline backends.
    #[arg(long)]
    pub mock_backends: bool,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub storage_root: Option<PathBuf>,
    #[arg(long)]
    pub image_backend: Option<ImageBackendKind>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

/// Runs a parsed command, printing to stdout/stderr, and returns the exit
/// status.
pub async fn run(cli: Cli) -> Exit {
    let result = match cli.command {
        Command::Generate(a) => generate(a).await,
        Command::Compare(a) => compare(a).await,
        Command::Inspect(a) => inspect(a),
        Command::Serve(a) => serve(a).await,
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            Exit::Fatal
        }
    }
}

fn read_story(source: &str) -> Result<String, String> {
    let text = if source == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| format!("cannot read story from stdin: {e}"))?;
        s
    } else {
        let bytes =
            std::fs::read(source).map_err(|e| format!("cannot read story {source}: {e}"))?;
        String::from_utf8(bytes).map_err(|_| format!("story {source} is not valid UTF-8"))?
    };
    if text.trim().is_empty() {
        return Err("narrative must not be empty (story input is blank)".into());
    }
    Ok(text)
}

struct Timings(Vec<(&'static str, Duration, String)>);

impl Timings {
    fn print(&self) {
        println!("{:<10} {:>10}  note", "stage", "seconds");
        for (stage, d, note) in &self.0 {
            println!("{:<10} {:>10.3}  {}", stage, d.as_secs_f64(), note);
        }
    }
}

fn per_image_note(d: Duration, n: usize) -> String {
    if n == 0 {
        return String::new();
    }
    format!(
        "{:.3} s/image (reference: ~1 s/image local SD, ~15 s/image hosted)",
        d.as_secs_f64() / n as f64
    )
}

pub fn write_project_file(path: &Path, state: &ProjectState) -> Result<(), String> {
    let file = ProjectFile {
        schema_version: SCHEMA_VERSION,
        project: state.project.clone(),
        event_log: state.events.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&file).map_err(|e| e.to_string())?;
    json.push(b'\n');
    write_atomic(path, &json).map_err(|e| e.to_string())
}

async fn generate(a: GenerateArgs) -> Result<Exit, String> {
    let story = read_story(&a.story)?;
    let cfg = AppConfig::resolve(a.backend.overrides(a.mock)).map_err(|e| e.to_string())?;
    let mut gen = cfg.generation.clone();
    if let Some(n) = a.frames {
        gen.frame_count = n;
    }
    if let Some(s) = a.seed {
        gen.seed_policy = SeedPolicy::Fixed(s);
    }
    let store = Arc::new(MemImageStore::new());
    let mut engine = Engine::new(cfg.chat_backend(0), cfg.image_backend(), store.clone());
    if a.mock {
        // same flags, same bytes: fixed id, nonce stream and clock
        engine = engine
            .with_rng_seed(a.seed.unwrap_or(0) as u64)
            .with_clock(Arc::new(ManualClock::new(0)));
    } else {
        engine = engine.with_clock(Arc::new(SystemClock));
    }
    let mut state = engine
        .create_project(&story, gen)
        .map_err(|e| e.to_string())?;
    let mut timings = Timings(Vec::new());

    let t = Instant::now();
    let style = engine.generate_style(&mut state).await;
    timings.0.push(("style", t.elapsed(), String::new()));
    if let Err(e) = style {
        timings.print();
        return Err(format!("style stage failed: {e}"));
    }

    let t = Instant::now();
    let prompts = engine.generate_prompts(&mut state).await;
    timings.0.push(("prompts", t.elapsed(), String::new()));
    if let Err(e) = prompts {
        timings.print();
        return Err(format!("prompt stage failed: {e}"));
    }

    let t = Instant::now();
    let failures = engine.render_all(&mut state).await;
    let n = state.project.frames.len();
    let d = t.elapsed();
    timings.0.push(("images", d, per_image_note(d, n)));

    let t = Instant::now();
    let bundle = match export(&state.project, &*store, &ExportFormat::ALL) {
        Ok(b) => b,
        Err(crate::store::StoreError::NothingRendered) => ExportBundle {
            manifest: Some(build_manifest(&state.project)),
            ..ExportBundle::default()
        },
        Err(e) => return Err(format!("export failed: {e}")),
    };
    bundle.write_to(&a.out).map_err(|e| e.to_string())?;
    write_project_file(&a.out.join("project.json"), &state)?;
    timings.0.push(("export", t.elapsed(), String::new()));

    timings.print();
    for f in &failures {
        eprintln!("frame {}: {}", f.index + 1, f.detail);
    }
    println!(
        "{} of {} frames rendered; bundle written to {}",
        state.project.rendered_count(),
        n,
        a.out.display()
    );
    Ok(if failures.is_empty() {
        Exit::Success
    } else {
        Exit::Partial
    })
}

fn parse_list<T>(list: &str, what: &str) -> Result<Vec<T>, String>
where
    T: std::str::FromStr<Err = String> + PartialEq,
{
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let v: T = part.parse()?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(format!("no {what} given"));
    }
    Ok(out)
}

async fn compare(a: CompareArgs) -> Result<Exit, String> {
    let story = read_story(&a.story)?;
    let modes: Vec<Mode> = parse_list(&a.modes, "modes")?;
    let default_backends = if a.mock { "mock" } else { "a1111" };
    let kinds: Vec<ImageBackendKind> = parse_list(
        a.backends.as_deref().unwrap_or(default_backends),
        "backends",
    )?;
    let cfg = AppConfig::resolve(a.backend.overrides(a.mock)).map_err(|e| e.to_string())?;
    let mut gen = cfg.generation.clone();
    if let Some(n) = a.frames {
        gen.frame_count = n;
    }
    let backends: Vec<_> = kinds.iter().map(|&k| cfg.image_backend_of(k)).collect();
    let started = Instant::now();
    let report = run_comparison_harness(
        cfg.chat_backend(0),
        &backends,
        &story,
        gen,
        &modes,
        a.seed.unwrap_or(0),
    )
    .await
    .map_err(|e| e.to_string())?;

    let sheet = report.contact_sheet_png(256).map_err(|e| e.to_string())?;
    write_atomic(&a.out.join("comparison_sheet.png"), &sheet).map_err(|e| e.to_string())?;
    let mut manifest = report.manifest_json().into_bytes();
    manifest.push(b'\n');
    write_atomic(&a.out.join("comparison.json"), &manifest).map_err(|e| e.to_string())?;
    for cell in &report.cells {
        let dir = a
            .out
            .join("cells")
            .join(format!("{}_{}", cell.mode, cell.backend));
        for img in &cell.images {
            if let Some(bytes) = &img.image {
                write_atomic(&dir.join(frame_file_name(img.index)), bytes)
                    .map_err(|e| e.to_string())?;
            }
        }
    }

    println!(
        "{:<18} {:<14} {:>6} {:>8} {:>12}",
        "mode", "backend", "images", "attempts", "mean ms/img"
    );
    let mut partial = false;
    for c in &report.cells {
        let ok = c.images.iter().filter(|i| i.image.is_some()).count();
        partial |= c.error.is_some() || ok < report.frame_count;
        println!(
            "{:<18} {:<14} {:>6} {:>8} {:>12}",
            c.mode.as_str(),
            c.backend,
            format!("{ok}/{}", report.frame_count),
            c.attempts(),
            c.mean_latency_ms()
                .map_or("-".into(), |m| format!("{m:.1}")),
        );
        if let Some(e) = &c.error {
            eprintln!("cell {} {}: {e}", c.mode, c.backend);
        }
    }
    println!("reference latency: ~1 s/image local SD, ~15 s/image hosted");
    println!(
        "total {:.3} s; report written to {}",
        started.elapsed().as_secs_f64(),
        a.out.display()
    );
    Ok(if partial {
        Exit::Partial
    } else {
        Exit::Success
    })
}

fn status_label(s: FrameStatus) -> &'static str {
    match s {
        FrameStatus::Empty => "empty",
        FrameStatus::PromptReady => "prompt-ready",
        FrameStatus::Rendered => "rendered",
        FrameStatus::Stale => "stale",
    }
}

pub fn describe(project: &StoryboardProject) -> String {
    let mut out = String::new();
    out.push_str(&format!("project  {}\n", project.id));
    out.push_str(&format!("story    {}\n", project.narrative.trim()));
    match &project.style {
        None => out.push_str("style    (none)\n"),
        Some(s) => {
            out.push_str(if project.style_stale {
                "style    (stale)\n"
            } else {
                "style\n"
            });
            for f in StyleField::ALL {
                out.push_str(&format!("  {:<14} {}\n", f.label(), s.get(f)));
            }
        }
    }
    out.push_str(&format!("frames   {}\n", project.frames.len()));
    for f in &project.frames {
        out.push_str(&format!(
            "  #{:<3} {:<13} seed {:<11} {}\n",
            f.index + 1,
            status_label(f.status),
            f.seed,
            f.image_ref
                .as_ref()
                .map_or("-", |r| &r.0[..12.min(r.0.len())]),
        ));
        for slot in FrameSlot::ALL {
            if let Some(v) = f.prompt.get(slot) {
                out.push_str(&format!("        {:<20} {}\n", slot.label(), v));
            }
        }
        if let Some(e) = &f.error {
            out.push_str(&format!("        error: {e}\n"));
        }
    }
    out
}

fn inspect(a: InspectArgs) -> Result<Exit, String> {
    let bytes =
        std::fs::read(&a.file).map_err(|e| format!("cannot read {}: {e}", a.file.display()))?;
    let file = decode_project_file(&bytes).map_err(|e| e.to_string())?;
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&file.project).map_err(|e| e.to_string())?
        );
    } else {
        print!("{}", describe(&file.project));
        println!("events   {}", file.event_log.len());
    }
    Ok(Exit::Success)
}

async fn serve(a: ServeArgs) -> Result<Exit, String> {
    let mut o = a.backend.overrides(a.mock_backends);
    o.port = a.port;
    o.storage_root = a.storage_root.clone();
    o.image_backend = a.image_backend;
    let cfg = AppConfig::resolve(o).map_err(|e| e.to_string())?;
    let store = Arc::new(ProjectStore::new(&cfg.storage_root));
    let images = Arc::new(FsImageStore::new(cfg.storage_root.join("images")));
    let engine = Engine::new(cfg.chat_backend(0), cfg.image_backend(), images);
    let state = AppState::new(Arc::new(engine), Some(store));
    let addr: SocketAddr = format!("{}:{}", a.host, cfg.port)
        .parse()
        .map_err(|e| format!("bad listen address: {e}"))?;
    eprintln!(
        "listening on http://{addr} (storage {}, {} backends)",
        cfg.storage_root.display(),
        if cfg.mock { "mock" } else { "live" }
    );
    service::serve(state, addr)
        .await
        .map_err(|e| e.to_string())?;
    Ok(Exit::Success)
}
