//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::HashSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use taxo_core::embedding::CachedEmbedder;
use taxo_core::eval::{average_precision_at_k, map_at_k, wu_palmer, EvalReport, GoldSet};
use taxo_core::instruct::{deserialize_dataset, read_dataset, serialize_dataset, template};
use taxo_core::llm::CountingBackend;
use taxo_core::pipeline::{SetQuery, SweepTask};
use taxo_core::{
    expand_entity_set, expand_taxonomy, shuffle_sweep, Entity, HashEmbedder, Node, OracleBackend,
    PipelineConfig, SeedSet, Taxonomy,
};

type Outcome = Result<String, String>;

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("noiseless set expansion closure", c1_set_expansion),
        ("noiseless taxonomy expansion closure", c2_taxo_expansion),
        (
            "noiseless seed-guided construction closure",
            c3_construction,
        ),
        ("metric oracle equivalence", c4_metric_oracles),
        ("noise calibration", c5_noise_calibration),
        ("supervision counts", c6_supervision_counts),
        ("determinism", c7_determinism),
        ("stop rules", c8_stop_rules),
        ("shuffle sweep tendency", c9_sweep),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({detail})", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn e(s: &str) -> Entity {
    Entity::new(s).unwrap()
}

fn taxo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taxo"))
        .args(args)
        .output()
        .unwrap()
}

fn taxo_ok(args: &[&str]) -> Result<Output, String> {
    let out = taxo(args);
    ensure!(
        out.status.success(),
        "taxo {} failed: {}",
        args[0],
        String::from_utf8_lossy(&out.stderr).trim()
    );
    Ok(out)
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CLASS_NAMES: [&str; 10] = [
    "falcon", "heron", "marlin", "cobra", "maple", "quartz", "violin", "tundra", "comet", "saffron",
];

/// `classes` parents under ROOT, `children` members each.
fn class_taxonomy(classes: usize, children: usize) -> Taxonomy {
    let mut src = String::new();
    for c in &CLASS_NAMES[..classes] {
        src.push_str(&format!("ROOT\t{c}\n"));
        for i in 0..children {
            src.push_str(&format!("{c}\t{c} variety {i}\n"));
        }
    }
    Taxonomy::parse(&src).unwrap()
}

/// Random tree whose node names extend their parent's name by one word, so
/// that a node's parent is among its most similar nodes. Children of ROOT
/// always get children of their own.
fn random_named_tree(n: usize, rng: &mut ChaCha8Rng) -> Taxonomy {
    let tops = 4.min(n / 2).max(1);
    let mut names: Vec<String> = Vec::new();
    let mut depth: Vec<usize> = Vec::new();
    let mut src = String::new();
    for i in 0..n {
        let parent = if i < tops {
            None
        } else if i < 2 * tops {
            Some(i - tops)
        } else {
            loop {
                let p = rng.gen_range(0..names.len());
                if depth[p] < 5 {
                    break Some(p);
                }
            }
        };
        let name = match parent {
            None => CLASS_NAMES[i].to_string(),
            Some(p) => format!("{} w{i}", names[p]),
        };
        let d = parent.map_or(2, |p| depth[p] + 1);
        let p_name = parent.map_or("ROOT", |p| names[p].as_str()).to_string();
        src.push_str(&format!("{p_name}\t{name}\n"));
        names.push(name);
        depth.push(d);
    }
    Taxonomy::parse(&src).unwrap()
}

/// Split off a fraction of leaves: (taxonomy without them, held-out leaves).
fn hold_out(g: &Taxonomy, pick: impl Fn(usize, &Entity) -> bool) -> (Taxonomy, Vec<Entity>) {
    let held: Vec<Entity> = g
        .entities()
        .iter()
        .filter(|x| g.is_leaf(x))
        .enumerate()
        .filter(|(i, x)| pick(*i, x))
        .map(|(_, x)| x.clone())
        .collect();
    let set: HashSet<&Entity> = held.iter().collect();
    let edges: Vec<(Entity, Node)> = g
        .edges()
        .filter(|(c, _)| !set.contains(c))
        .map(|(c, p)| (c.clone(), p))
        .collect();
    let mut src = String::new();
    for (c, p) in edges {
        let p = match p {
            Node::Root => "ROOT".to_string(),
            Node::Entity(e) => e.surface().to_string(),
        };
        src.push_str(&format!("{p}\t{}\n", c.surface()));
    }
    (Taxonomy::parse(&src).unwrap(), held)
}

fn c1_set_expansion() -> Outcome {
    let start = Instant::now();
    let g = class_taxonomy(5, 10);
    let chat = OracleBackend::new(g.clone());
    let embed = HashEmbedder::default();
    let mut results = Vec::new();
    for c in &CLASS_NAMES[..5] {
        let seeds: Vec<Entity> = [1, 4, 7]
            .iter()
            .map(|i| e(&format!("{c} variety {i}")))
            .collect();
        let gold = GoldSet::class_of(&g, &seeds).map_err(|e| e.to_string())?;
        let r = expand_entity_set(
            &SeedSet::new(seeds).unwrap(),
            &chat,
            &embed,
            &PipelineConfig::default(),
            None,
        )
        .map_err(|e| e.to_string())?;
        results.push((r.entities(), gold));
    }
    let map = map_at_k(&results, 5).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure!(map == 1.0, "MAP@5 = {map}");
    ensure!(secs < 10.0, "took {secs:.2}s");
    Ok(format!(
        "MAP@5 = {map} over {} queries, {secs:.2}s",
        results.len()
    ))
}

fn c2_taxo_expansion() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let g = random_named_tree(100, &mut rng);
    let leaves = g.entities().iter().filter(|x| g.is_leaf(x)).count();
    let n_held = (leaves as f64 * 0.2).round() as usize;
    let (t, held) = hold_out(&g, |i, _| i % 5 == 0 && i / 5 < n_held);
    let chat = OracleBackend::new(g.clone());
    let out = expand_taxonomy(
        &t,
        &held,
        &chat,
        &HashEmbedder::default(),
        &PipelineConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().unwrap();
    let pred = tmp.path().join("predictions.json");
    let gold = tmp.path().join("gold.tsv");
    let report_path = tmp.path().join("report.json");
    write(&pred, &serde_json::to_string(&out.predictions).unwrap());
    write(&gold, &g.to_edge_list());
    taxo_ok(&[
        "eval",
        "--task",
        "taxo",
        "--pred",
        s(&pred),
        "--gold",
        s(&gold),
        "--out",
        s(&report_path),
    ])?;
    let report: EvalReport =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    let (acc, wup) = (report.metrics["Acc"], report.metrics["Wu&P"]);
    let secs = start.elapsed().as_secs_f64();
    ensure!(
        held.len() == n_held && n_held > 0,
        "held out {} of {leaves} leaves",
        held.len()
    );
    ensure!(acc == 1.0 && wup == 1.0, "Acc = {acc}, Wu&P = {wup}");
    ensure!(
        out.taxonomy.same_structure(&g),
        "expanded taxonomy differs from gold"
    );
    ensure!(secs < 30.0, "took {secs:.2}s");
    Ok(format!(
        "{} held-out leaves, Acc = {acc}, Wu&P = {wup}, {secs:.2}s",
        held.len()
    ))
}

fn c3_construction() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let g = class_taxonomy(3, 8);
    let seed_src: String = g
        .to_edge_list()
        .lines()
        .filter(|l| l.starts_with("ROOT") || [" 0", " 1", " 2"].iter().any(|x| l.ends_with(x)))
        .map(|l| format!("{l}\n"))
        .collect();
    let seed = Taxonomy::parse(&seed_src).unwrap();
    ensure!(seed.len() == 12, "seed taxonomy has {} nodes", seed.len());
    write(&d.join("gold.tsv"), &g.to_edge_list());
    write(&d.join("seed.tsv"), &seed_src);
    write(
        &d.join("config.json"),
        r#"{"backend": {"kind": "oracle", "gold": "gold.tsv"}}"#,
    );
    let out = d.join("out");
    taxo_ok(&[
        "construct",
        "--taxonomy",
        s(&d.join("seed.tsv")),
        "--config",
        s(&d.join("config.json")),
        "--out",
        s(&out),
    ])?;
    let built = Taxonomy::load(out.join("taxonomy.tsv")).map_err(|e| e.to_string())?;
    ensure!(built.same_structure(&g), "reconstruction differs from gold");
    for (c, p) in seed.edges() {
        ensure!(
            built.parent(c).ok() == Some(p),
            "seed edge of `{c}` changed"
        );
    }
    let found = g.len() - seed.len();
    let ks: Vec<String> = (1..=found).map(|k| k.to_string()).collect();
    let report_path = d.join("report.json");
    taxo_ok(&[
        "eval",
        "--task",
        "construct",
        "--pred",
        s(&out.join("layers.json")),
        "--gold",
        s(&d.join("gold.tsv")),
        "--k",
        &ks.join(","),
        "--out",
        s(&report_path),
    ])?;
    let report: EvalReport =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    ensure!(
        report.metrics.len() == 2 * found,
        "{} metrics reported",
        report.metrics.len()
    );
    for (name, v) in &report.metrics {
        ensure!(*v == 1.0, "{name} = {v}");
    }
    Ok(format!(
        "{} nodes rebuilt, Sibling P@k = Parent P@k = 1.0 for k = 1..{found}",
        built.len()
    ))
}

/// Root-to-node path, ROOT included.
fn ancestor_path(parent: &[Option<usize>], mut i: Option<usize>) -> Vec<Option<usize>> {
    let mut out = vec![i];
    while let Some(n) = i {
        i = parent[n];
        out.push(i);
    }
    out.reverse();
    out
}

fn c4_metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for _ in 0..100 {
        let n = rng.gen_range(2..60);
        let parent: Vec<Option<usize>> = (0..n)
            .map(|i| {
                if i == 0 || rng.gen_bool(0.15) {
                    None
                } else {
                    Some(rng.gen_range(0..i))
                }
            })
            .collect();
        let mut src = String::new();
        for (i, p) in parent.iter().enumerate() {
            let p = p.map_or("ROOT".to_string(), |p| format!("v{p}"));
            src.push_str(&format!("{p}\tv{i}\n"));
        }
        let t = Taxonomy::parse(&src).unwrap();
        let node = |i: Option<usize>| i.map_or(Node::Root, |i| Node::Entity(e(&format!("v{i}"))));
        for _ in 0..10 {
            let pick = |rng: &mut ChaCha8Rng| {
                let x = rng.gen_range(0..=n);
                if x == n {
                    None
                } else {
                    Some(x)
                }
            };
            let (a, b) = (pick(&mut rng), pick(&mut rng));
            let (pa, pb) = (ancestor_path(&parent, a), ancestor_path(&parent, b));
            let shared = pa.iter().filter(|x| pb.contains(x)).count();
            let brute = 2.0 * shared as f64 / (pa.len() + pb.len()) as f64;
            let got = wu_palmer(&t, &node(a), &node(b)).map_err(|e| e.to_string())?;
            worst = worst.max((got - brute).abs());
            pairs += 1;
        }
    }
    ensure!(worst <= 1e-12, "Wu&P max deviation {worst:e}");
    let mut ap_worst: f64 = 0.0;
    for _ in 0..500 {
        let len = rng.gen_range(0..30);
        let k = rng.gen_range(1..35);
        let rel: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.4)).collect();
        let items: Vec<Entity> = (0..len).map(|i| e(&format!("r{i}"))).collect();
        let gold = GoldSet::new(
            items
                .iter()
                .zip(&rel)
                .filter(|(_, r)| **r)
                .map(|(x, _)| x.clone()),
        );
        let mut direct = 0.0;
        for u in 1..=k {
            if u <= len && rel[u - 1] {
                let mut count = 0;
                for r in &rel[..u] {
                    if *r {
                        count += 1;
                    }
                }
                direct += count as f64 / u as f64;
            }
        }
        direct /= k as f64;
        let got = average_precision_at_k(&items, &gold, k).map_err(|e| e.to_string())?;
        ap_worst = ap_worst.max((got - direct).abs());
    }
    ensure!(ap_worst <= 1e-12, "AP@k max deviation {ap_worst:e}");
    Ok(format!(
        "{pairs} Wu&P pairs max dev {worst:e}; 500 AP@k patterns max dev {ap_worst:e}"
    ))
}

fn c5_noise_calibration() -> Outcome {
    let mut src = String::new();
    for top in &CLASS_NAMES[..5] {
        src.push_str(&format!("ROOT\t{top}\n"));
        for m in 0..10 {
            src.push_str(&format!("{top}\t{top} g{m}\n"));
            for l in 0..20 {
                src.push_str(&format!("{top} g{m}\t{top} g{m} s{l}\n"));
            }
        }
    }
    let g = Taxonomy::parse(&src).unwrap();
    let (t, held) = hold_out(&g, |_, x| {
        let last = x.norm().rsplit(' ').next().unwrap();
        last.trim_start_matches('s').parse::<usize>().unwrap() % 2 == 0
    });
    ensure!(held.len() == 500, "{} insertions", held.len());
    let embed = CachedEmbedder::new(HashEmbedder::default());
    let mut notes = Vec::new();
    for p in [0.1, 0.25, 0.5] {
        let chat = OracleBackend::new(g.clone())
            .with_noise(p, 0.0)
            .map_err(|e| e.to_string())?
            .with_seed(55);
        let out = expand_taxonomy(&t, &held, &chat, &embed, &PipelineConfig::default())
            .map_err(|e| e.to_string())?;
        let correct = out
            .predictions
            .iter()
            .filter(|x| g.parent(&x.entity).ok() == Some(Node::Entity(x.predicted_parent.clone())))
            .count();
        let acc = correct as f64 / held.len() as f64;
        ensure!((acc - (1.0 - p)).abs() <= 0.07, "p = {p}: Acc = {acc}");
        notes.push(format!("p={p}: Acc={acc:.3}"));
    }
    Ok(notes.join(", "))
}

const FIXTURE12: &str = "ROOT\tcardiovascular disease\nROOT\trespiratory disease\nROOT\tskin disease\n\
cardiovascular disease\theart failure\ncardiovascular disease\tarrhythmia\ncardiovascular disease\tmyocarditis\n\
respiratory disease\tasthma\nrespiratory disease\tpneumonia\nrespiratory disease\tbronchitis\n\
skin disease\teczema\nskin disease\tpsoriasis\nskin disease\tacne\n";

fn c6_supervision_counts() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let tax = tmp.path().join("fixture.tsv");
    write(&tax, FIXTURE12);
    let t = Taxonomy::parse(FIXTURE12).unwrap();
    ensure!(t.len() == 12, "fixture has {} nodes", t.len());
    let k = 5;
    let out = tmp.path().join("data");
    taxo_ok(&[
        "gen-data",
        "--taxonomy",
        s(&tax),
        "--out",
        s(&out),
        "--r",
        "10",
        "--k",
        &k.to_string(),
    ])?;
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let count = manifest["parent_finding"]["count"].as_u64().unwrap_or(0);
    ensure!(
        count == 120,
        "manifest reports {count} parent-finding tuples"
    );
    let d = read_dataset(out.join("parent_finding.jsonl"), "fixture").map_err(|e| e.to_string())?;
    ensure!(d.len() == 120, "{} tuples on disk", d.len());
    for tuple in &d.tuples {
        let source = tuple
            .meta
            .source_node
            .clone()
            .ok_or("tuple without source node")?;
        let gold = match t.parent(&source).map_err(|e| e.to_string())? {
            Node::Root => t.root_entity(),
            Node::Entity(p) => p,
        };
        let cands: Vec<Entity> = template::taxo_candidates(&tuple.instruction)
            .ok_or("instruction does not match the template")?
            .into_iter()
            .map(e)
            .collect();
        ensure!(
            cands.contains(&gold),
            "`{source}` candidates miss gold `{gold}`"
        );
        ensure!(
            cands.len() == k || cands.len() == k + 1,
            "`{source}` has {} candidates",
            cands.len()
        );
        ensure!(
            tuple.output.as_deref() == Some(&format!("The parent class is {}.", gold.surface())),
            "`{source}` output {:?}",
            tuple.output
        );
    }
    Ok(format!(
        "120 tuples, all candidate lists hold the gold parent and have {k} or {} entries",
        k + 1
    ))
}

fn c7_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let g = class_taxonomy(3, 8);
    write(&d.join("gold.tsv"), &g.to_edge_list());
    write(&d.join("fixture.tsv"), FIXTURE12);
    let seed_src: String = g
        .to_edge_list()
        .lines()
        .filter(|l| l.starts_with("ROOT") || l.ends_with(" 0") || l.ends_with(" 1"))
        .map(|l| format!("{l}\n"))
        .collect();
    write(&d.join("seed_taxo.tsv"), &seed_src);
    let (held_t, held) = hold_out(&g, |i, _| i % 4 == 0);
    write(&d.join("partial.tsv"), &held_t.to_edge_list());
    let new: String = held.iter().map(|x| format!("{}\n", x.surface())).collect();
    write(&d.join("new.txt"), &new);
    write(
        &d.join("seeds.txt"),
        "falcon variety 2\nfalcon variety 5\nfalcon variety 6\n",
    );
    write(
        &d.join("noisy.json"),
        r#"{"backend": {"kind": "oracle", "gold": "gold.tsv", "parent_error_rate": 0.3, "sibling_noise_rate": 0.3}, "rng_seed": 9}"#,
    );

    // Record the oracle's set-expansion answers for a replay run.
    let seeds = SeedSet::parse("falcon variety 2\nfalcon variety 5\nfalcon variety 6\n").unwrap();
    let oracle = OracleBackend::new(g.clone()).with_noise(0.0, 0.3).unwrap();
    let mut replay = String::new();
    for p in taxo_core::instruct::seed_permutations(&seeds, 50, 9) {
        let prompt = taxo_core::instruct::build_set_expansion_prompt("falcon", &p).unwrap();
        let response = taxo_core::ChatBackend::complete(
            &oracle,
            &prompt,
            &taxo_core::DecodingParams::for_task(taxo_core::TaskKind::SetExpand),
        )
        .unwrap();
        replay.push_str(
            &serde_json::json!({"instruction": prompt.instruction, "input": prompt.query, "response": response})
                .to_string(),
        );
        replay.push('\n');
    }
    write(&d.join("replay.jsonl"), &replay);
    write(
        &d.join("replay.json"),
        r#"{"backend": {"kind": "replay", "path": "replay.jsonl"}, "rng_seed": 9}"#,
    );

    let p = |x: &str| d.join(x).to_str().unwrap().to_string();
    let runs: Vec<(&str, Vec<String>, Vec<&str>)> = vec![
        (
            "gen-data",
            vec![
                "gen-data".into(),
                "--taxonomy".into(),
                p("fixture.tsv"),
                "--seed".into(),
                "3".into(),
            ],
            vec![
                "parent_finding.jsonl",
                "sibling_recovery.jsonl",
                "manifest.json",
            ],
        ),
        (
            "expand-set",
            vec![
                "expand-set".into(),
                "--seeds".into(),
                p("seeds.txt"),
                "--config".into(),
                p("noisy.json"),
            ],
            vec![""],
        ),
        (
            "expand-set/replay",
            vec![
                "expand-set".into(),
                "--seeds".into(),
                p("seeds.txt"),
                "--config".into(),
                p("replay.json"),
                "--parent".into(),
                "falcon".into(),
            ],
            vec![""],
        ),
        (
            "expand-taxo",
            vec![
                "expand-taxo".into(),
                "--taxonomy".into(),
                p("partial.tsv"),
                "--new-entities".into(),
                p("new.txt"),
                "--config".into(),
                p("noisy.json"),
            ],
            vec!["taxonomy.tsv", "predictions.json"],
        ),
        (
            "construct",
            vec![
                "construct".into(),
                "--taxonomy".into(),
                p("seed_taxo.tsv"),
                "--config".into(),
                p("noisy.json"),
            ],
            vec!["taxonomy.tsv", "layers.json", "predictions.json"],
        ),
        (
            "sweep",
            vec![
                "sweep".into(),
                "--shuffles".into(),
                "1,3".into(),
                "--seeds".into(),
                p("seeds.txt"),
                "--config".into(),
                p("noisy.json"),
            ],
            vec![""],
        ),
    ];
    let mut checked = 0;
    for (name, args, files) in &runs {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = d.join(format!("{}-{run}", name.replace('/', "-")));
            let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
            a.push("--out");
            a.push(s(&out));
            taxo_ok(&a)?;
            let bytes: Vec<Vec<u8>> = files
                .iter()
                .map(|f| {
                    fs::read(if f.is_empty() {
                        out.clone()
                    } else {
                        out.join(f)
                    })
                    .unwrap()
                })
                .collect();
            outputs.push(bytes);
        }
        ensure!(
            outputs[0] == outputs[1],
            "{name} outputs differ between runs"
        );
        checked += 1;
    }
    // eval on the construct output
    let mut reports = Vec::new();
    for run in 0..2 {
        let out = d.join(format!("eval-{run}.json"));
        taxo_ok(&[
            "eval",
            "--task",
            "construct",
            "--pred",
            &p("construct-0/layers.json"),
            "--gold",
            &p("gold.tsv"),
            "--out",
            s(&out),
        ])?;
        reports.push(fs::read(out).unwrap());
    }
    ensure!(reports[0] == reports[1], "eval outputs differ between runs");
    checked += 1;

    let mut round_trips = 0;
    for f in [
        "gen-data-0/parent_finding.jsonl",
        "gen-data-0/sibling_recovery.jsonl",
    ] {
        let text = fs::read_to_string(d.join(f)).unwrap();
        let ds = deserialize_dataset(text.as_bytes(), f).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        serialize_dataset(&ds, &mut buf).map_err(|e| e.to_string())?;
        ensure!(buf == text.as_bytes(), "{f} does not round-trip");
        ensure!(
            deserialize_dataset(&buf[..], f).map_err(|e| e.to_string())? == ds,
            "{f} differs after round trip"
        );
        round_trips += 1;
    }
    Ok(format!(
        "{checked} commands byte-identical across reruns, {round_trips} datasets round-trip"
    ))
}

fn c8_stop_rules() -> Outcome {
    let g = class_taxonomy(1, 1000);
    let seeds = SeedSet::new((0..5).map(|i| e(&format!("falcon variety {i}"))).collect()).unwrap();
    let embed = CachedEmbedder::new(HashEmbedder::default());
    let parent = e("falcon");

    let chat = CountingBackend::new(OracleBackend::new(g.clone()).with_response_limit(Some(30)));
    let cfg = PipelineConfig {
        target_entities: 400,
        ..PipelineConfig::default()
    };
    let r =
        expand_entity_set(&seeds, &chat, &embed, &cfg, Some(&parent)).map_err(|e| e.to_string())?;
    let target_calls = chat.total_calls();
    ensure!(
        target_calls <= 14,
        "{target_calls} completions with target 400"
    );
    ensure!(
        r.ranked.len() > 400,
        "stopped with {} entities",
        r.ranked.len()
    );

    let chat = CountingBackend::new(OracleBackend::new(g).with_response_limit(Some(30)));
    let cfg = PipelineConfig {
        target_entities: usize::MAX,
        max_shuffles: 50,
        ..PipelineConfig::default()
    };
    expand_entity_set(&seeds, &chat, &embed, &cfg, Some(&parent)).map_err(|e| e.to_string())?;
    let cap_calls = chat.total_calls();
    ensure!(
        cap_calls <= 50,
        "{cap_calls} completions with max_shuffles 50"
    );
    Ok(format!("{target_calls} completions to pass 400 entities, {cap_calls} with max_shuffles 50 and 5 seeds"))
}

fn c9_sweep() -> Outcome {
    let g = class_taxonomy(5, 20);
    let embed = CachedEmbedder::new(HashEmbedder::default());
    let mut wins = 0;
    let mut rows_seen = Vec::new();
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + trial);
        let queries: Vec<SetQuery> = CLASS_NAMES[..5]
            .iter()
            .map(|c| {
                let mut picks = HashSet::new();
                while picks.len() < 4 {
                    picks.insert(rng.gen_range(0..20));
                }
                let mut picks: Vec<usize> = picks.into_iter().collect();
                picks.sort();
                let seeds: Vec<Entity> = picks
                    .iter()
                    .map(|i| e(&format!("{c} variety {i}")))
                    .collect();
                SetQuery {
                    gold: GoldSet::class_of(&g, &seeds).unwrap(),
                    seeds: SeedSet::new(seeds).unwrap(),
                    parent: None,
                }
            })
            .collect();
        let chat = OracleBackend::new(g.clone())
            .with_noise(0.0, 0.3)
            .map_err(|e| e.to_string())?
            .with_seed(trial)
            .with_response_limit(Some(6));
        let cfg = PipelineConfig {
            rng_seed: trial,
            ..PipelineConfig::default()
        };
        let rows = shuffle_sweep(
            SweepTask::Set {
                queries: &queries,
                k: 10,
            },
            &chat,
            &embed,
            &cfg,
            &[1, 10],
        )
        .map_err(|e| e.to_string())?;
        if rows[1].metric >= rows[0].metric {
            wins += 1;
        }
        rows_seen.push((rows[0].metric, rows[1].metric));
    }
    let mean =
        |f: fn(&(f64, f64)) -> f64| rows_seen.iter().map(f).sum::<f64>() / rows_seen.len() as f64;
    let (m1, m10) = (mean(|r| r.0), mean(|r| r.1));
    ensure!(wins >= 18, "{wins}/20 trials with MAP@10(10) >= MAP@10(1)");
    Ok(format!(
        "{wins}/20 trials; mean MAP@10 {m1:.3} at 1 shuffle, {m10:.3} at 10"
    ))
}
