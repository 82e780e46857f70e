//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails. Runs without the libtest harness so the report is
//! always printed.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssg::cfg::{build_cfg, gen, run_traced, EdgeLabel};
use ssg::graph::{RelationType, SceneGraph};
use ssg::metrics::{corrupt_edges, layout, pass_at_1, rasterize, ssim, RasterImage, TaskOutcome};
use ssg::mermaid::MermaidDoc;
use ssg::model::{MockBackend, ModelBackend, ModelRequest};
use ssg::repair::{apply_patch, load_manifest, run_session, validate, Backends, Edit, PatchCandidate, SessionConfig};
use ssg::segment::{crop, propose_region, CropError, SegmentationRequest};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pass_at_1_recorded_manifest() -> Verdict {
    let path = root().join("fixtures/outcomes/recorded_617.json");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let outcomes: Vec<TaskOutcome> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let r = pass_at_1(&outcomes).map_err(|e| e.to_string())?;
    let pct = (r.pass_at_1 * 10_000.0).round() / 100.0;
    check(
        r.resolved == 225 && r.total == 617 && (pct - 36.47).abs() < 1e-9,
        format!("{}/{} = {:.6} ({pct}%)", r.resolved, r.total, r.pass_at_1),
    )
}

fn mermaid_round_trip() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e_ed);
    let n = 1000;
    let mut ok = 0;
    for _ in 0..n {
        let g = common::random_graph(&mut rng, 16);
        let doc = ssg::mermaid::serialize(&g).map_err(|e| e.to_string())?;
        if ssg::mermaid::parse(&doc).is_ok_and(|back| back.isomorphic(&g)) {
            ok += 1;
        }
    }
    let t = started.elapsed();
    check(ok == n && t < Duration::from_secs(10), format!("{ok}/{n} isomorphic in {:.2}s (limit 10s)", t.as_secs_f64()))
}

/// Breaks a valid document by dropping the closing quote and bracket of its
/// first node line.
fn break_doc(doc: &str) -> String {
    let mut lines: Vec<String> = doc.lines().map(str::to_string).collect();
    if let Some(l) = lines.iter_mut().find(|l| l.trim_end().ends_with("\"]")) {
        let cut = l.trim_end().len() - 2;
        l.truncate(cut);
    }
    lines.join("\n") + "\n"
}

fn rendering_accuracy() -> Verdict {
    const TARGET: f64 = 0.9429;
    const TOL: f64 = 1e-4;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let src = tmp.path().join("programs");
    let out = tmp.path().join("corpus");
    ssg::dataset::generate_programs(&src, 1300, 20, 2024).map_err(|e| e.to_string())?;
    let entries = ssg::dataset::build_cfg_corpus(&src, &out, 20).map_err(|e| e.to_string())?;
    let docs: Vec<MermaidDoc> = entries
        .iter()
        .map(|e| std::fs::read_to_string(out.join(&e.golden_mermaid_path)).map(MermaidDoc))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let golden = ssg::mermaid::rendering_accuracy(&docs).map_err(|e| e.to_string())?;

    // Script the mock: the closest whole number of documents to the target
    // rate come back intact, the rest come back broken.
    let valid = (TARGET * docs.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(94));
    let broken: BTreeSet<usize> = order[valid..].iter().copied().collect();
    let script: BTreeMap<String, String> = entries
        .iter()
        .zip(&docs)
        .enumerate()
        .map(|(i, (e, d))| {
            let reply = if broken.contains(&i) { break_doc(&d.0) } else { d.0.clone() };
            (format!("render/{}", e.id), reply)
        })
        .collect();
    let mock = MockBackend::new(script);
    let mut replies = Vec::with_capacity(entries.len());
    for e in &entries {
        let ssg_json = std::fs::read_to_string(out.join(&e.golden_ssg_path)).map_err(|e| e.to_string())?;
        let req = ModelRequest::new("Write this scene graph as a Mermaid flowchart.", ssg_json, format!("render/{}", e.id));
        replies.push(MermaidDoc(mock.complete(&req).map_err(|e| e.to_string())?.text));
    }
    let scripted = ssg::mermaid::rendering_accuracy(&replies).map_err(|e| e.to_string())?;
    let n = docs.len() as f64;
    let detail = format!(
        "corpus {} entries; serializer {golden:.4}; scripted {valid}/{} = {scripted:.6}, target {TARGET} +/- {TOL} \
         (window needs {:.2}..{:.2} valid documents)",
        entries.len(),
        docs.len(),
        (TARGET - TOL) * n,
        (TARGET + TOL) * n
    );
    check(entries.len() == 1300 && golden == 1.0 && (scripted - TARGET).abs() <= TOL, detail)
}

fn ulp_distance(a: f64, b: f64) -> u64 {
    let key = |x: f64| {
        let bits = x.to_bits() as i64;
        if bits < 0 {
            i64::MIN - bits
        } else {
            bits
        }
    };
    key(a).abs_diff(key(b))
}

fn cfg_graphs_for_sweep(count: usize, canvas: u32) -> Vec<SceneGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out = Vec::new();
    while out.len() < count {
        let program = gen::random_program(&mut rng);
        let Ok(g) = ssg::cfg::extract(&ssg::cfg::pretty(&program), true) else { continue };
        if g.edges().len() >= 30 && layout(&g, canvas, canvas).is_ok() {
            out.push(g);
        }
    }
    out
}

fn ssim_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_self = 0f64;
    let mut worst_ulps = 0u64;
    for _ in 0..50 {
        let (w, h) = (rng.gen_range(8..96), rng.gen_range(8..96));
        let a = common::random_raster(&mut rng, w, h);
        let b = common::random_raster(&mut rng, w, h);
        worst_self = worst_self.max((ssim(&a, &a).map_err(|e| e.to_string())? - 1.0).abs());
        let (ab, ba) = (ssim(&a, &b).map_err(|e| e.to_string())?, ssim(&b, &a).map_err(|e| e.to_string())?);
        worst_ulps = worst_ulps.max(ulp_distance(ab, ba));
    }
    let black = RasterImage::filled(64, 64, 0).map_err(|e| e.to_string())?;
    let white = RasterImage::filled(64, 64, 255).map_err(|e| e.to_string())?;
    let extreme = ssim(&black, &white).map_err(|e| e.to_string())?;

    const CANVAS: u32 = 768;
    let graphs = cfg_graphs_for_sweep(50, CANVAS);
    let mut means = Vec::new();
    let base: Vec<RasterImage> =
        graphs.iter().map(|g| rasterize(g, CANVAS, CANVAS)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    for k in 0..=10 {
        let mut sum = 0.0;
        for (i, (g, img)) in graphs.iter().zip(&base).enumerate() {
            let bent = rasterize(&corrupt_edges(g, k, i as u64), CANVAS, CANVAS).map_err(|e| e.to_string())?;
            sum += ssim(img, &bent).map_err(|e| e.to_string())?;
        }
        means.push(sum / graphs.len() as f64);
    }
    let monotone = means.windows(2).all(|w| w[1] <= w[0]);
    let sweep = means.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(" ");
    check(
        worst_self <= 1e-9 && (extreme - 9.999e-5).abs() <= 1e-8 && worst_ulps <= 1 && monotone,
        format!(
            "max |ssim(r,r)-1| {worst_self:.1e}; black/white {extreme:.6e}; symmetry {worst_ulps} ulp; sweep k=0..10: {sweep}"
        ),
    )
}

fn cfg_trace_is_path() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let (mut runs, mut terminated, mut bad) = (0, 0, Vec::new());
    for p in 0..200 {
        let program = gen::random_program(&mut rng);
        let cfg = build_cfg(&program).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let env = gen::random_env(&mut rng);
            let run = run_traced(&program, &cfg, env, 5_000);
            runs += 1;
            let steps = &run.steps;
            let mut ok = steps.first().map(|s| s.block) == Some(cfg.entry());
            for pair in steps.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let Some(edge) = cfg.edge(a.block, b.block) else {
                    ok = false;
                    break;
                };
                let is_branch = cfg.blocks[a.block].condition.is_some();
                let label_ok = match (is_branch, a.branch) {
                    (true, Some(t)) => edge.label == if t { EdgeLabel::True } else { EdgeLabel::False },
                    (false, None) => edge.label == EdgeLabel::None,
                    _ => false,
                };
                ok &= label_ok;
            }
            if run.result.is_ok() {
                terminated += 1;
                ok &= steps.last().map(|s| s.block) == Some(cfg.exit());
            }
            if !ok {
                bad.push(p);
            }
        }
    }
    let t = started.elapsed();
    check(
        bad.is_empty() && t < Duration::from_secs(30),
        format!(
            "{runs} runs, {terminated} terminated, {} invalid paths (programs {:?}) in {:.2}s (limit 30s)",
            bad.len(),
            &bad[..bad.len().min(5)],
            t.as_secs_f64()
        ),
    )
}

fn dom_tree_law() -> Verdict {
    let mut files: Vec<PathBuf> = std::fs::read_dir(root().join("fixtures/html"))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    for t in ["cart", "clamp", "fizz", "form", "grade"] {
        files.push(root().join(format!("fixtures/templates/{t}/page.html")));
    }
    files.sort();
    let mut failures = Vec::new();
    let mut sizes = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).map_err(|e| e.to_string())?;
        let dom = ssg::html::parse_html(&text).map_err(|e| format!("{}: {e}", f.display()))?;
        let g = ssg::html::dom_to_ssg(&dom);
        let hier = g.edges().iter().filter(|e| e.relation == RelationType::Hierarchy).count();
        let acyclic = g.validate().is_empty();
        sizes.push(g.len());
        if g.len() != dom.count() || hier + 1 != g.len() || !acyclic {
            failures.push(f.file_name().unwrap_or_default().to_string_lossy().into_owned());
        }
    }
    check(
        failures.is_empty() && sizes.contains(&37),
        format!("{} documents, node counts {sizes:?}, failures {failures:?}", files.len()),
    )
}

fn dataflow_edges(path: &str) -> Result<BTreeSet<(String, String, String)>, String> {
    let text = std::fs::read_to_string(root().join(path)).map_err(|e| e.to_string())?;
    let g = ssg::cfg::extract(&text, true).map_err(|e| e.to_string())?;
    Ok(g.edges()
        .iter()
        .filter(|e| e.relation == RelationType::DataFlow)
        .map(|e| (e.src.clone(), e.dst.clone(), e.label.clone().unwrap_or_default()))
        .collect())
}

fn defuse_oracle() -> Verdict {
    let set = |items: &[(&str, &str, &str)]| -> BTreeSet<(String, String, String)> {
        items.iter().map(|(a, b, c)| (a.to_string(), b.to_string(), c.to_string())).collect()
    };
    // Blocks: entry b0, branch b1, then b2, else b3, join b4, exit b5.
    let join_expected = set(&[("b2", "b4", "y"), ("b3", "b4", "y")]);
    // Blocks: entry b0, header b1, body b2, after b3, exit b4.
    let loop_expected = set(&[("b2", "b1", "x"), ("b2", "b3", "x")]);
    let join = dataflow_edges("fixtures/mini/branch_join.mini")?;
    let looped = dataflow_edges("fixtures/mini/loop_back.mini")?;
    check(join == join_expected && looped == loop_expected, format!("branch join {join:?}; loop {looped:?}"))
}

fn end_to_end_repair() -> Verdict {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    ssg::dataset::seed_bugs(&root().join("fixtures/templates"), tmp.path(), 20, 7).map_err(|e| e.to_string())?;
    let tasks = load_manifest(&tmp.path().join("manifest.json")).map_err(|e| e.to_string())?;
    let config = SessionConfig::default();
    let run_all = |scenario: &str, max_rounds: u32| -> Result<Vec<ssg::repair::RepairSession>, String> {
        let mock = MockBackend::from_file(&tmp.path().join(scenario)).map_err(|e| e.to_string())?;
        Ok(tasks
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.max_rounds = max_rounds;
                run_session(&t, Backends::single(&mock), &config)
            })
            .collect())
    };
    let score = |s: &[ssg::repair::RepairSession]| {
        pass_at_1(&s.iter().map(|s| s.outcome()).collect::<Vec<_>>()).map(|r| r.pass_at_1).unwrap_or(f64::NAN)
    };

    let oracle = run_all("oracle.json", 3)?;
    let oracle_ok = score(&oracle) == 1.0 && oracle.iter().all(|s| s.resolved() && s.round == 1);
    let wtr = run_all("wrong_then_right.json", 3)?;
    let wtr_ok = wtr.iter().all(|s| s.resolved() && s.round == 2 && s.segmentation_events() == 1);
    let wrong = run_all("always_wrong.json", 3)?;
    let wrong_ok = score(&wrong) == 0.0 && wrong.iter().all(|s| s.generate_calls() == 3);
    let t = started.elapsed();
    check(
        tasks.len() == 20 && oracle_ok && wtr_ok && wrong_ok && t < Duration::from_secs(120),
        format!(
            "{} tasks; oracle pass@1 {:.2}; wrong-then-right rounds {:?}, segmentations {:?}; always-wrong pass@1 {:.2}, generate calls {:?}; {:.1}s (limit 120s)",
            tasks.len(),
            score(&oracle),
            wtr.iter().map(|s| s.round).collect::<BTreeSet<_>>(),
            wtr.iter().map(|s| s.segmentation_events()).collect::<BTreeSet<_>>(),
            score(&wrong),
            wrong.iter().map(|s| s.generate_calls()).collect::<BTreeSet<_>>(),
            t.as_secs_f64()
        ),
    )
}

fn atomicity_isolation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut apply_cases = 0;
    let mut apply_bad = 0;
    for case in 0..200 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let files = rng.gen_range(1..5);
        for i in 0..files {
            let body: String = (0..rng.gen_range(2..8)).map(|j| format!("row {i}.{j}\nrepeat\n")).collect();
            std::fs::write(dir.path().join(format!("f{i}.txt")), body).map_err(|e| e.to_string())?;
        }
        let before = common::tree_hash(dir.path());
        let mut edits: Vec<Edit> = (0..rng.gen_range(0..4))
            .map(|_| {
                let i = rng.gen_range(0..files);
                Edit { path: format!("f{i}.txt"), search: format!("row {i}.0"), replace: format!("ROW {case}") }
            })
            .collect();
        edits.dedup_by(|a, b| a.path == b.path);
        let failing = match rng.gen_range(0..4) {
            0 => Edit { path: "f0.txt".into(), search: "not present".into(), replace: "x".into() },
            1 => Edit { path: "f0.txt".into(), search: "repeat".into(), replace: "x".into() },
            2 => Edit { path: "nope.txt".into(), search: "x".into(), replace: "y".into() },
            _ => Edit { path: "../outside.txt".into(), search: "x".into(), replace: "y".into() },
        };
        let at = rng.gen_range(0..=edits.len());
        edits.insert(at, failing);
        apply_cases += 1;
        let failed = apply_patch(dir.path(), &PatchCandidate { edits }).is_err();
        if !failed || common::tree_hash(dir.path()) != before {
            apply_bad += 1;
        }
    }

    let commands = [
        "rm -rf ./*",
        "echo clobbered > f0.txt",
        "mkdir -p new/dir && touch new/dir/file",
        "chmod 000 f0.txt; exit 3",
        "mv f0.txt moved.txt",
        "sleep 5",
    ];
    let mut validate_cases = 0;
    let mut validate_bad = 0;
    for (i, cmd) in commands.iter().cycle().take(30).enumerate() {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        std::fs::write(dir.path().join("f0.txt"), format!("case {i}\n")).map_err(|e| e.to_string())?;
        std::fs::create_dir(dir.path().join("sub")).map_err(|e| e.to_string())?;
        std::fs::write(dir.path().join("sub/g.txt"), "nested\n").map_err(|e| e.to_string())?;
        let before = common::tree_hash(dir.path());
        let argv = vec!["sh".to_string(), "-c".to_string(), cmd.to_string()];
        validate(dir.path(), &argv, Duration::from_millis(300));
        validate_cases += 1;
        if common::tree_hash(dir.path()) != before {
            validate_bad += 1;
        }
    }

    // Whole sessions must leave each task's codebase untouched too.
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    ssg::dataset::seed_bugs(&root().join("fixtures/templates"), tmp.path(), 5, 1).map_err(|e| e.to_string())?;
    let tasks = load_manifest(&tmp.path().join("manifest.json")).map_err(|e| e.to_string())?;
    let mock = MockBackend::from_file(&tmp.path().join("wrong_then_right.json")).map_err(|e| e.to_string())?;
    let mut session_bad = 0;
    for t in &tasks {
        let before = common::tree_hash(&t.codebase_root);
        run_session(t, Backends::single(&mock), &SessionConfig::default());
        if common::tree_hash(&t.codebase_root) != before {
            session_bad += 1;
        }
    }
    check(
        apply_bad == 0 && validate_bad == 0 && session_bad == 0,
        format!(
            "apply: {}/{apply_cases} unchanged; validate: {}/{validate_cases} unchanged; sessions: {}/{} unchanged",
            apply_cases - apply_bad,
            validate_cases - validate_bad,
            tasks.len() - session_bad,
            tasks.len()
        ),
    )
}

fn segmentation_bounds() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let template = ssg::prompt::PromptSet::default().segmentation;
    let (mut in_bounds, mut crops, mut dims_ok, mut empty_ok, mut bad) = (0, 0, 0, 0, 0);
    for i in 0..500 {
        let (w, h) = (rng.gen_range(96..400u32), rng.gen_range(96..400u32));
        let g = loop {
            let g = common::random_graph(&mut rng, 4);
            if layout(&g, w, h).is_ok() {
                break g;
            }
        };
        let boxes = layout(&g, w, h).map_err(|e| e.to_string())?;
        let g = g.map_bboxes(|n| boxes.get(&n.id).copied());
        let img = rasterize(&g, w, h).map_err(|e| e.to_string())?;
        let mut num = || match rng.gen_range(0..4) {
            0 => rng.gen_range(-10_000i64..0),
            1 => rng.gen_range(400i64..100_000),
            _ => rng.gen_range(0i64..400),
        };
        let reply = format!(
            "<reason>case {i}</reason> noise <result>[{}, {}, {}, {}]</result> trailing",
            num(),
            num(),
            num(),
            num()
        );
        let key = format!("segment/fuzz/{i}");
        let mock = MockBackend::from_pairs([(key.as_str(), reply.as_str())]);
        let req = SegmentationRequest::new(img.clone(), "fuzz", Vec::new());
        let resp = propose_region(&req, &mock, &template, &key).map_err(|e| e.to_string())?;
        if resp.bbox.fits_within(w, h) {
            in_bounds += 1;
        } else {
            bad += 1;
            continue;
        }
        match crop(&g, &img, resp.bbox) {
            Ok((_, sub)) => {
                crops += 1;
                if (sub.width(), sub.height()) == (resp.bbox.w, resp.bbox.h) {
                    dims_ok += 1;
                } else {
                    bad += 1;
                }
            }
            Err(CropError::EmptyRegion(_)) => {
                // Only acceptable when no node centre really lies inside.
                if g.nodes().iter().filter_map(|n| n.bbox).any(|b| resp.bbox.contains_center_of(&b)) {
                    bad += 1;
                } else {
                    empty_ok += 1;
                }
            }
            Err(_) => bad += 1,
        }
    }
    check(
        bad == 0,
        format!("500 replies: {in_bounds} in bounds; {crops} crops, {dims_ok} with box-sized output; {empty_ok} verified empty regions"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("pass_at_1_recorded_manifest", pass_at_1_recorded_manifest),
        ("mermaid_round_trip", mermaid_round_trip),
        ("rendering_accuracy", rendering_accuracy),
        ("ssim_identities", ssim_identities),
        ("cfg_trace_is_path", cfg_trace_is_path),
        ("dom_tree_law", dom_tree_law),
        ("defuse_oracle", defuse_oracle),
        ("end_to_end_repair", end_to_end_repair),
        ("atomicity_isolation", atomicity_isolation),
        ("segmentation_bounds", segmentation_bounds),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

