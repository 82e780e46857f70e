use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use ssg::graph::SceneGraph;
use ssg::metrics::{layout, pass_at_1, rasterize, ssim, EvalReport, RasterImage, TaskOutcome};
use ssg::model::{backend_from_spec, ModelBackend, RemoteConfig};
use ssg::prompt::PromptSet;
use ssg::repair::{load_manifest, run_session, Backends, RepairSession, SessionConfig};

/// Marks an error caused by bad input or configuration (exit status 2).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "ssg", version, about = "Scene graphs for visual bug reports: extraction, Mermaid, metrics and repair")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML file with defaults for the options below.
    #[arg(long, global = true, env = "SSG_CONFIG")]
    config: Option<PathBuf>,
    /// Model backend: mock:<scenario.json>, http:<url> or https:<url>.
    #[arg(long, global = true, env = "SSG_BACKEND")]
    backend: Option<String>,
    /// Round cap for every repair task (default: the manifest's value).
    #[arg(long, global = true, env = "SSG_MAX_ROUNDS")]
    max_rounds: Option<u32>,
    /// Test timeout in seconds for every repair task (default: the manifest's value).
    #[arg(long, global = true, env = "SSG_TIMEOUT")]
    timeout: Option<f64>,
    #[arg(long, global = true, env = "SSG_FORMAT", value_enum)]
    format: Option<Format>,
    /// Log filter, e.g. warn, info, debug.
    #[arg(long, global = true, env = "SSG_LOG")]
    log: Option<String>,
    #[arg(long, global = true, env = "SSG_SEED")]
    seed: Option<u64>,
    /// Model name sent to a remote backend.
    #[arg(long, global = true, env = "SSG_MODEL")]
    model: Option<String>,
    /// Environment variable holding the remote backend's bearer token.
    #[arg(long, global = true, env = "SSG_TOKEN_ENV")]
    token_env: Option<String>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    backend: Option<String>,
    max_rounds: Option<u32>,
    timeout: Option<f64>,
    format: Option<Format>,
    log: Option<String>,
    seed: Option<u64>,
    model: Option<String>,
    token_env: Option<String>,
}

#[derive(Debug, Serialize)]
struct Setting<T> {
    value: T,
    source: &'static str,
}

#[derive(Debug, Serialize)]
struct GlobalConfig {
    config_file: Option<PathBuf>,
    backend: Setting<Option<String>>,
    max_rounds: Setting<Option<u32>>,
    timeout: Setting<Option<f64>>,
    format: Setting<Format>,
    log: Setting<String>,
    seed: Setting<u64>,
    model: Setting<String>,
    token_env: Setting<Option<String>>,
}

fn pick<T>(m: &ArgMatches, id: &str, arg: Option<T>, file: Option<T>, default: T) -> Setting<T> {
    let from_args = match m.value_source(id) {
        Some(ValueSource::CommandLine) => "flag",
        Some(ValueSource::EnvVariable) => "env",
        _ => "",
    };
    match (arg, file) {
        (Some(v), _) if !from_args.is_empty() => Setting { value: v, source: from_args },
        (_, Some(v)) => Setting { value: v, source: "file" },
        _ => Setting { value: default, source: "default" },
    }
}

fn pick_opt<T>(m: &ArgMatches, id: &str, arg: Option<T>, file: Option<T>) -> Setting<Option<T>> {
    pick(m, id, arg.map(Some), file.map(Some), None)
}

/// Flags beat environment variables, which beat the config file.
fn resolve(m: &ArgMatches, g: GlobalArgs) -> Result<GlobalConfig> {
    let file = match &g.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str::<FileConfig>(&text).map_err(|e| usage(format!("config {}: {e}", p.display())))?
        }
        None => FileConfig::default(),
    };
    Ok(GlobalConfig {
        config_file: g.config,
        backend: pick_opt(m, "backend", g.backend, file.backend),
        max_rounds: pick_opt(m, "max_rounds", g.max_rounds, file.max_rounds),
        timeout: pick_opt(m, "timeout", g.timeout, file.timeout),
        format: pick(m, "format", g.format, file.format, Format::Json),
        log: pick(m, "log", g.log, file.log, "info".to_string()),
        seed: pick(m, "seed", g.seed, file.seed, 0),
        model: pick(m, "model", g.model, file.model, RemoteConfig::default().model),
        token_env: pick_opt(m, "token_env", g.token_env, file.token_env),
    })
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a scene graph from an artifact.
    #[command(subcommand)]
    Extract(ExtractCmd),
    /// Convert between scene graph JSON and Mermaid.
    #[command(subcommand)]
    Mermaid(MermaidCmd),
    /// Ask the model for the region of an artifact related to an issue.
    Segment(SegmentCmd),
    /// Rasters, SSIM and outcome reports.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Run repair sessions.
    #[command(subcommand)]
    Repair(RepairCmd),
    /// Build corpora and seeded-bug task sets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
}

#[derive(Subcommand, Debug)]
enum ExtractCmd {
    /// DOM tree of a well-formed HTML file.
    Html {
        input: PathBuf,
        /// Attach layout boxes for a WxH canvas.
        #[arg(long, value_parser = parse_size)]
        layout: Option<(u32, u32)>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Control-flow graph of a mini-language program.
    Cfg {
        input: PathBuf,
        /// Add reaching-definition data-flow edges.
        #[arg(long)]
        defuse: bool,
        #[arg(long, value_parser = parse_size)]
        layout: Option<(u32, u32)>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum MermaidCmd {
    /// Scene graph JSON to Mermaid text.
    Encode {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Mermaid text to scene graph JSON.
    Decode {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Report which documents parse.
    Check {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct SegmentCmd {
    /// Scene graph JSON of the artifact.
    ssg: PathBuf,
    #[arg(long)]
    issue: String,
    /// PGM raster; drawn from the graph when absent.
    #[arg(long)]
    raster: Option<PathBuf>,
    #[arg(long, value_parser = parse_size, default_value = "640x480")]
    size: (u32, u32),
    #[arg(long, default_value = "segment/cli/1")]
    key: String,
    /// Directory overriding the built-in prompt templates.
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Write the cropped scene graph here.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum EvalCmd {
    /// Draw a scene graph to a PGM raster.
    Render {
        input: PathBuf,
        #[arg(long, value_parser = parse_size, default_value = "640x480")]
        size: (u32, u32),
        #[arg(short, long)]
        output: PathBuf,
    },
    /// SSIM between two PGM rasters or two scene graphs.
    Ssim {
        left: PathBuf,
        right: PathBuf,
        #[arg(long, value_parser = parse_size, default_value = "640x480")]
        size: (u32, u32),
    },
    /// Pass@1 over recorded outcomes.
    Report { input: PathBuf },
}

#[derive(Subcommand, Debug)]
enum RepairCmd {
    /// Repair every task in a manifest.
    Run {
        manifest: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        prompts: Option<PathBuf>,
        /// Write one JSON session log per task here.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum DatasetCmd {
    /// Write random mini-language programs.
    GenPrograms {
        #[arg(short = 'n', long, default_value_t = 1300)]
        count: usize,
        #[arg(long, default_value_t = ssg::dataset::DEFAULT_LOC_THRESHOLD)]
        min_loc: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Extract and serialize every program above the size threshold.
    BuildCfg {
        dir: PathBuf,
        #[arg(long, default_value_t = ssg::dataset::DEFAULT_LOC_THRESHOLD)]
        loc: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Generate seeded-bug repair tasks from templates.
    SeedBugs {
        templates: PathBuf,
        #[arg(short = 'n', long, default_value_t = 20)]
        count: usize,
        /// Manifest path; tasks and scenarios are written next to it.
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(w)?, num(h)?))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn read_graph(path: &Path) -> Result<SceneGraph> {
    let text = read_text(path)?;
    SceneGraph::from_json(&text).map_err(|e| usage(format!("{} is not a valid scene graph: {e}", path.display())))
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn with_layout(g: SceneGraph, size: Option<(u32, u32)>) -> Result<SceneGraph> {
    let Some((w, h)) = size else { return Ok(g) };
    let boxes = layout(&g, w, h)?;
    Ok(g.map_bboxes(|n| boxes.get(&n.id).copied()))
}

fn backend(cfg: &GlobalConfig) -> Result<Arc<dyn ModelBackend>> {
    let spec = cfg.backend.value.as_deref().ok_or_else(|| usage("no backend configured; pass --backend or set SSG_BACKEND"))?;
    let remote = RemoteConfig { model: cfg.model.value.clone(), token_env: cfg.token_env.value.clone(), ..RemoteConfig::default() };
    backend_from_spec(spec, remote).map_err(|e| usage(e.to_string()))
}

fn prompts(dir: Option<&Path>) -> Result<PromptSet> {
    match dir {
        Some(d) => PromptSet::load_dir(d).map_err(|e| usage(e.to_string())),
        None => Ok(PromptSet::default()),
    }
}

fn load_raster_or_graph(path: &Path, size: (u32, u32)) -> Result<RasterImage> {
    if path.extension().is_some_and(|e| e == "pgm") {
        let bytes = std::fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        return RasterImage::from_pgm(&bytes).map_err(|e| usage(format!("{}: {e}", path.display())));
    }
    Ok(rasterize(&read_graph(path)?, size.0, size.1)?)
}

fn report_text(r: &EvalReport) -> String {
    let mut s = String::new();
    for t in &r.per_task {
        s += &format!("{:<24} {:<10} {}\n", t.task_id, t.outcome.as_str(), t.iterations);
    }
    s += &format!("pass@1 {}/{} = {:.4}\n", r.resolved, r.total, r.pass_at_1);
    s
}

fn format_report(r: &EvalReport, fmt: Format) -> String {
    match fmt {
        Format::Json => serde_json::to_string_pretty(r).expect("plain data"),
        Format::Csv => r.to_csv(),
        Format::Text => report_text(r),
    }
}

fn write_session_log(s: &RepairSession, log_dir: Option<&Path>) -> Result<()> {
    let body = serde_json::to_string_pretty(s).expect("plain data");
    if let Some(dir) = log_dir {
        let p = dir.join(format!("{}.json", s.task_id));
        return std::fs::write(&p, body + "\n").with_context(|| format!("cannot write {}", p.display()));
    }
    // One locked write per task keeps concurrent sessions from interleaving.
    let mut block = format!(
        "task {}: {} after {} round(s)\n",
        s.task_id,
        if s.resolved() { "resolved" } else { "unresolved" },
        s.round
    );
    if log::log_enabled!(log::Level::Debug) {
        for e in &s.log {
            block += &serde_json::to_string(e).expect("plain data");
            block.push('\n');
        }
    }
    if log::log_enabled!(log::Level::Info) {
        std::io::stderr().lock().write_all(block.as_bytes())?;
    }
    Ok(())
}

fn run(cmd: Command, cfg: &GlobalConfig) -> Result<ExitCode> {
    let fmt = cfg.format.value;
    match cmd {
        Command::Extract(ExtractCmd::Html { input, layout, output }) => {
            let g = ssg::html::html_to_ssg(&read_text(&input)?).with_context(|| input.display().to_string())?;
            emit(output.as_deref(), &with_layout(g, layout)?.to_json())?;
        }
        Command::Extract(ExtractCmd::Cfg { input, defuse, layout, output }) => {
            let g = ssg::cfg::extract(&read_text(&input)?, defuse).with_context(|| input.display().to_string())?;
            emit(output.as_deref(), &with_layout(g, layout)?.to_json())?;
        }
        Command::Mermaid(MermaidCmd::Encode { input, output }) => {
            let doc = ssg::mermaid::serialize(&read_graph(&input)?)?;
            emit(output.as_deref(), doc.as_str())?;
        }
        Command::Mermaid(MermaidCmd::Decode { input, output }) => {
            let g = ssg::mermaid::parse_str(&read_text(&input)?).with_context(|| input.display().to_string())?;
            emit(output.as_deref(), &g.to_json())?;
        }
        Command::Mermaid(MermaidCmd::Check { inputs }) => {
            let mut failures = Vec::new();
            for p in &inputs {
                if let Err(e) = ssg::mermaid::parse_str(&read_text(p)?) {
                    failures.push((p.display().to_string(), e.to_string()));
                }
            }
            let parsed = inputs.len() - failures.len();
            let accuracy = parsed as f64 / inputs.len() as f64;
            let text = match fmt {
                Format::Json => serde_json::to_string_pretty(&json!({
                    "documents": inputs.len(),
                    "parsed": parsed,
                    "rendering_accuracy": accuracy,
                    "failures": failures.iter().map(|(p, e)| json!({"path": p, "error": e})).collect::<Vec<_>>(),
                }))?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["path", "error"])?;
                    for (p, e) in &failures {
                        w.write_record([p, e])?;
                    }
                    w.write_record(["TOTAL", &format!("{parsed}/{}", inputs.len())])?;
                    String::from_utf8(w.into_inner()?)?
                }
                Format::Text => {
                    let mut s: String = failures.iter().map(|(p, e)| format!("{p}: {e}\n")).collect();
                    s += &format!("rendering accuracy {parsed}/{} = {accuracy:.4}\n", inputs.len());
                    s
                }
            };
            emit(None, &text)?;
        }
        Command::Segment(a) => {
            let g = read_graph(&a.ssg)?;
            let img = match &a.raster {
                Some(p) => load_raster_or_graph(p, a.size)?,
                None => rasterize(&g, a.size.0, a.size.1)?,
            };
            let set = prompts(a.prompts.as_deref())?;
            let b = backend(cfg)?;
            let req = ssg::segment::SegmentationRequest::new(img.clone(), a.issue, Vec::new());
            let resp = ssg::segment::propose_region(&req, &*b, &set.segmentation, &a.key)?;
            let (cropped, sub) = ssg::segment::crop(&g, &img, resp.bbox)?;
            if let Some(o) = &a.output {
                std::fs::write(o, cropped.to_json()).with_context(|| format!("cannot write {}", o.display()))?;
            }
            let out = json!({
                "reason": resp.reason,
                "bbox": resp.bbox,
                "kept_nodes": cropped.len(),
                "crop_size": [sub.width(), sub.height()],
            });
            emit(None, &serde_json::to_string_pretty(&out)?)?;
        }
        Command::Eval(EvalCmd::Render { input, size, output }) => {
            let img = rasterize(&read_graph(&input)?, size.0, size.1)?;
            std::fs::write(&output, img.to_pgm()).with_context(|| format!("cannot write {}", output.display()))?;
        }
        Command::Eval(EvalCmd::Ssim { left, right, size }) => {
            let a = load_raster_or_graph(&left, size)?;
            let b = load_raster_or_graph(&right, size)?;
            let v = ssim(&a, &b)?;
            let text = match fmt {
                Format::Json => serde_json::to_string(&json!({ "ssim": v }))?,
                Format::Csv => format!("ssim\n{v}\n"),
                Format::Text => format!("{v:.6}"),
            };
            emit(None, &text)?;
        }
        Command::Eval(EvalCmd::Report { input }) => {
            let text = read_text(&input)?;
            let outcomes: Vec<TaskOutcome> = match serde_json::from_str(&text) {
                Ok(list) => list,
                Err(_) => serde_json::from_str::<EvalReport>(&text)
                    .map_err(|e| usage(format!("{}: expected a list of outcomes or a report: {e}", input.display())))?
                    .per_task,
            };
            let report = pass_at_1(&outcomes).map_err(|e| usage(format!("{}: {e}", input.display())))?;
            emit(None, &format_report(&report, fmt))?;
        }
        Command::Repair(RepairCmd::Run { manifest, jobs, prompts: pdir, log_dir, output }) => {
            let mut tasks = load_manifest(&manifest).map_err(|e| usage(e.to_string()))?;
            for t in &mut tasks {
                if let Some(r) = cfg.max_rounds.value {
                    t.max_rounds = r;
                }
                if let Some(s) = cfg.timeout.value {
                    t.timeout = s;
                }
            }
            if tasks.is_empty() {
                return Err(usage(format!("{} lists no tasks", manifest.display())));
            }
            if let Some(d) = &log_dir {
                std::fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
            }
            let b = backend(cfg)?;
            let config = SessionConfig { prompts: prompts(pdir.as_deref())?, ..SessionConfig::default() };
            let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
            let outcomes: Vec<Result<TaskOutcome>> = pool.install(|| {
                use rayon::prelude::*;
                tasks
                    .par_iter()
                    .map(|t| {
                        let s = run_session(t, Backends::single(&*b), &config);
                        write_session_log(&s, log_dir.as_deref())?;
                        Ok(s.outcome())
                    })
                    .collect()
            });
            let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
            let report = pass_at_1(&outcomes).expect("at least one task");
            emit(output.as_deref(), &format_report(&report, fmt))?;
            if report.resolved < report.total {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Dataset(DatasetCmd::GenPrograms { count, min_loc, output }) => {
            let paths = ssg::dataset::generate_programs(&output, count, min_loc, cfg.seed.value)?;
            log::info!("wrote {} programs to {}", paths.len(), output.display());
        }
        Command::Dataset(DatasetCmd::BuildCfg { dir, loc, output }) => {
            if !dir.is_dir() {
                return Err(usage(format!("{} is not a directory", dir.display())));
            }
            let entries = ssg::dataset::build_cfg_corpus(&dir, &output, loc)?;
            emit(None, &serde_json::to_string(&json!({ "entries": entries.len(), "output": output }))?)?;
        }
        Command::Dataset(DatasetCmd::SeedBugs { templates, count, output }) => {
            if !templates.is_dir() {
                return Err(usage(format!("{} is not a directory", templates.display())));
            }
            let dir = output.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let set = ssg::dataset::seed_bugs(&templates, dir, count, cfg.seed.value)?;
            let written = dir.join("manifest.json");
            if written != output {
                std::fs::rename(&written, &output).with_context(|| format!("cannot write {}", output.display()))?;
            }
            let mut ops = BTreeMap::new();
            for b in &set.bugs {
                *ops.entry(b.mutation.op).or_insert(0usize) += 1;
            }
            emit(None, &serde_json::to_string(&json!({ "tasks": set.bugs.len(), "operators": ops, "manifest": output }))?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let cli = Cli::from_arg_matches(&matches).expect("matches come from the same definition");
    let print_config = cli.global.print_config;
    let cfg = match resolve(&matches, cli.global) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::new().parse_filters(&cfg.log.value).format_timestamp(None).init();
    if print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("plain data"));
        return ExitCode::SUCCESS;
    }
    let Some(cmd) = cli.command else {
        let _ = Cli::command().write_help(&mut std::io::stderr());
        return ExitCode::from(2);
    };
    match run(cmd, &cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
