//! `taxo`: supervision data generation, set expansion, taxonomy expansion,
//! taxonomy construction, evaluation and shuffle sweeps.

mod config;
mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use taxo_core::eval::{
    accuracy, map_at_k, mean_wu_palmer, node_in, sweep_csv, EvalReport, GoldSet,
};
use taxo_core::instruct::{
    gen_parent_finding_supervision, gen_sibling_recovery_supervision, write_dataset,
};
use taxo_core::pipeline::{
    evaluate_construction, ExpansionResult, LayerResult, Prediction, SetQuery, SweepTask,
};
use taxo_core::{
    construct_taxonomy, expand_entity_set, expand_taxonomy, shuffle_sweep, Entity, Node, SeedSet,
    Taxonomy,
};

use config::{load_taxonomy, EmbeddingSpec, RunConfig, DEFAULT_SEED};
use error::{io_err, CliError};

#[derive(Parser)]
#[command(
    name = "taxo",
    version,
    about = "Taxonomy expansion and construction with instruction-following models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write parent-finding and sibling-recovery training data for a taxonomy.
    GenData {
        /// Taxonomy file (edge list or JSON).
        #[arg(long)]
        taxonomy: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Candidate parents retrieved per node.
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Candidate shuffles per node.
        #[arg(long, default_value_t = 10)]
        r: usize,
        /// Seeds per sibling-recovery query.
        #[arg(long, default_value_t = 4)]
        subset_size: usize,
        /// Sibling-recovery queries per parent, at most.
        #[arg(long, default_value_t = 10)]
        max_subsets: usize,
        /// Seed for subset sampling and candidate shuffles.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Optional run config; only its embedding section is used.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Expand a seed set into a ranked list of new class members.
    ExpandSet {
        /// Seed file, one entity per line.
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
        /// Use this parent class instead of asking the model for one.
        #[arg(long)]
        parent: Option<String>,
        /// Overrides the config's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Attach new entities to an existing taxonomy.
    ExpandTaxo {
        #[arg(long)]
        taxonomy: PathBuf,
        /// New entities, one per line.
        #[arg(long)]
        new_entities: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Grow a seed taxonomy layer by layer.
    Construct {
        /// Seed taxonomy with at least two layers.
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score pipeline output against a gold taxonomy.
    Eval {
        #[arg(long, value_enum)]
        task: EvalTask,
        /// Prediction file written by expand-set, expand-taxo or construct.
        #[arg(long)]
        pred: PathBuf,
        /// Gold taxonomy.
        #[arg(long)]
        gold: PathBuf,
        /// Cutoffs, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "10,20")]
        k: Vec<usize>,
        /// Output JSON report.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerun a pipeline at several shuffle budgets and tabulate the metric.
    Sweep {
        /// Budgets, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20")]
        shuffles: Vec<usize>,
        #[arg(long)]
        config: PathBuf,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        /// Seed files, one query each (set task).
        #[arg(long, num_args = 1.., conflicts_with = "taxonomy")]
        seeds: Vec<PathBuf>,
        /// Seed taxonomy (construction task).
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Gold taxonomy; defaults to the oracle's.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Metric cutoff.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Overrides the config's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalTask {
    Set,
    Taxo,
    Construct,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error");
            eprintln!("{first}");
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenData {
            taxonomy,
            out,
            k,
            r,
            subset_size,
            max_subsets,
            seed,
            config,
        } => gen_data(
            &taxonomy,
            &out,
            k,
            r,
            subset_size,
            max_subsets,
            seed,
            config.as_deref(),
        ),
        Command::ExpandSet {
            seeds,
            config,
            out,
            parent,
            seed,
        } => {
            let cfg = load_config(&config, seed)?;
            let seeds = read_seeds(&seeds)?;
            let parent = parent
                .map(|p| Entity::new(p).map_err(|e| CliError::Usage(format!("--parent: {e}"))))
                .transpose()?;
            let chat = cfg.chat()?;
            let embed = cfg.embedder()?;
            let r = expand_entity_set(&seeds, &chat, &embed, &cfg.pipeline, parent.as_ref())?;
            write_json(&out, &r)
        }
        Command::ExpandTaxo {
            taxonomy,
            new_entities,
            config,
            out,
            seed,
        } => {
            let cfg = load_config(&config, seed)?;
            let t = cfg.label(load_taxonomy(&taxonomy)?)?;
            let new = read_seeds(&new_entities)?;
            let chat = cfg.chat()?;
            let embed = cfg.embedder()?;
            let r = expand_taxonomy(&t, new.entities(), &chat, &embed, &cfg.pipeline)?;
            make_dir(&out)?;
            write_text(&out.join("taxonomy.tsv"), &r.taxonomy.to_edge_list())?;
            write_json(&out.join("predictions.json"), &r.predictions)
        }
        Command::Construct {
            taxonomy,
            config,
            out,
            seed,
        } => {
            let cfg = load_config(&config, seed)?;
            let t = cfg.label(load_taxonomy(&taxonomy)?)?;
            let chat = cfg.chat()?;
            let embed = cfg.embedder()?;
            let c = construct_taxonomy(&t, &chat, &embed, &cfg.pipeline)?;
            make_dir(&out)?;
            write_text(&out.join("taxonomy.tsv"), &c.taxonomy.to_edge_list())?;
            write_json(&out.join("layers.json"), &c.layers)?;
            write_json(&out.join("predictions.json"), &c.predictions())
        }
        Command::Eval {
            task,
            pred,
            gold,
            k,
            out,
        } => {
            if k.is_empty() || k.contains(&0) {
                return Err(CliError::Usage("--k needs positive cutoffs".into()));
            }
            let gold_t = load_taxonomy(&gold)?;
            let report = evaluate(task, &pred, &gold_t, &k, &gold)?;
            write_text(&out, &format!("{}\n", report.to_json()))?;
            print!("{}", report.to_table());
            Ok(())
        }
        Command::Sweep {
            shuffles,
            config,
            out,
            seeds,
            taxonomy,
            gold,
            k,
            seed,
        } => {
            let cfg = load_config(&config, seed)?;
            let gold = match gold.or_else(|| cfg.oracle_gold()) {
                Some(g) => cfg.label(load_taxonomy(&g)?)?,
                None => return Err(CliError::Usage("sweep needs --gold".into())),
            };
            let chat = cfg.chat()?;
            let embed = cfg.embedder()?;
            let rows = match taxonomy {
                Some(path) => {
                    let seed_t = cfg.label(load_taxonomy(&path)?)?;
                    let task = SweepTask::Construct {
                        seed: &seed_t,
                        gold: &gold,
                        k,
                    };
                    shuffle_sweep(task, &chat, &embed, &cfg.pipeline, &shuffles)?
                }
                None => {
                    if seeds.is_empty() {
                        return Err(CliError::Usage("sweep needs --seeds or --taxonomy".into()));
                    }
                    let mut queries = Vec::new();
                    for path in &seeds {
                        let s = read_seeds(path)?;
                        let g = GoldSet::class_of(&gold, s.entities())
                            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                        queries.push(SetQuery {
                            seeds: s,
                            parent: None,
                            gold: g,
                        });
                    }
                    let task = SweepTask::Set {
                        queries: &queries,
                        k,
                    };
                    shuffle_sweep(task, &chat, &embed, &cfg.pipeline, &shuffles)?
                }
            };
            write_text(&out, &sweep_csv(&rows))
        }
    }
}

#[derive(Serialize)]
struct GenParams<'a> {
    k: usize,
    r: usize,
    subset_size: usize,
    max_subsets: usize,
    seed: u64,
    embedding: &'a EmbeddingSpec,
}

#[allow(clippy::too_many_arguments)]
fn gen_data(
    taxonomy: &Path,
    out: &Path,
    k: usize,
    r: usize,
    subset_size: usize,
    max_subsets: usize,
    seed: u64,
    config: Option<&Path>,
) -> Result<(), CliError> {
    for (flag, v) in [
        ("--k", k),
        ("--r", r),
        ("--subset-size", subset_size),
        ("--max-subsets", max_subsets),
    ] {
        if v == 0 {
            return Err(CliError::Usage(format!("{flag} must be positive")));
        }
    }
    let embedding = match config {
        Some(c) => RunConfig::load(c)?.embedding,
        None => EmbeddingSpec::Hash,
    };
    let t = load_taxonomy(taxonomy)?;
    let name = taxonomy
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let embed = config::embedder(&embedding)?;
    let input = |e: taxo_core::InstructError| CliError::Input(e.to_string());
    let parents = gen_parent_finding_supervision(&t, &name, k, r, &embed, seed).map_err(input)?;
    let siblings = gen_sibling_recovery_supervision(&t, &name, subset_size, max_subsets, seed)
        .map_err(input)?;
    make_dir(out)?;
    let pf = out.join("parent_finding.jsonl");
    let sr = out.join("sibling_recovery.jsonl");
    write_dataset(&parents, &pf).map_err(input)?;
    write_dataset(&siblings, &sr).map_err(input)?;
    let params = GenParams {
        k,
        r,
        subset_size,
        max_subsets,
        seed,
        embedding: &embedding,
    };
    let canonical = serde_json::to_string(&params).expect("params serialize");
    let hash: String = Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let manifest = json!({
        "taxonomy": name,
        "nodes": t.len(),
        "parent_finding": {"file": "parent_finding.jsonl", "count": parents.len()},
        "sibling_recovery": {"file": "sibling_recovery.jsonl", "count": siblings.len()},
        "config": params,
        "config_hash": hash,
    });
    write_json(&out.join("manifest.json"), &manifest)
}

/// Set predictions: one expansion result or a list of them.
#[derive(Deserialize)]
#[serde(untagged)]
enum SetPredictions {
    One(Box<ExpansionResult>),
    Many(Vec<ExpansionResult>),
}

fn evaluate(
    task: EvalTask,
    pred: &Path,
    gold: &Taxonomy,
    ks: &[usize],
    gold_path: &Path,
) -> Result<EvalReport, CliError> {
    let text = fs::read_to_string(pred).map_err(|e| io_err(pred, e))?;
    let bad = |e: String| CliError::Input(format!("{}: {e}", pred.display()));
    let fixtures = [pred, gold_path]
        .iter()
        .map(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
        .collect();
    let metric_err = |e: taxo_core::EvalError| CliError::Input(e.to_string());
    match task {
        EvalTask::Set => {
            let results = match serde_json::from_str(&text).map_err(|e| bad(e.to_string()))? {
                SetPredictions::One(r) => vec![*r],
                SetPredictions::Many(v) => v,
            };
            let mut queries = Vec::new();
            for r in &results {
                let g = GoldSet::class_of(gold, &r.seeds).map_err(metric_err)?;
                queries.push((r.entities(), g));
            }
            let mut report = EvalReport::new("set", queries.len(), fixtures);
            for &k in ks {
                report.insert(
                    format!("MAP@{k}"),
                    map_at_k(&queries, k).map_err(metric_err)?,
                );
            }
            Ok(report)
        }
        EvalTask::Taxo => {
            let preds: Vec<Prediction> =
                serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            let mut exact = Vec::new();
            let mut nodes = Vec::new();
            for p in &preds {
                let gold_parent = gold.parent(&p.entity).map_err(|e| bad(e.to_string()))?;
                let gold_entity = match &gold_parent {
                    Node::Root => gold.root_entity(),
                    Node::Entity(e) => e.clone(),
                };
                exact.push((p.predicted_parent.clone(), gold_entity));
                nodes.push((
                    node_in(gold, &p.predicted_parent).map_err(metric_err)?,
                    gold_parent,
                ));
            }
            let mut report = EvalReport::new("taxo", preds.len(), fixtures);
            report.insert("Acc", accuracy(&exact).map_err(metric_err)?);
            report.insert("Wu&P", mean_wu_palmer(gold, &nodes).map_err(metric_err)?);
            Ok(report)
        }
        EvalTask::Construct => {
            let layers: Vec<LayerResult> =
                serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            let mut report = None;
            for &k in ks {
                let s = evaluate_construction(&layers, gold, k).map_err(metric_err)?;
                let r = report.get_or_insert_with(|| {
                    EvalReport::new("construct", s.layers_scored, fixtures.clone())
                });
                r.insert(format!("Sibling P@{k}"), s.sibling_precision);
                r.insert(format!("Parent P@{k}"), s.parent_precision);
            }
            Ok(report.expect("at least one cutoff"))
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

fn read_seeds(path: &Path) -> Result<SeedSet, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    SeedSet::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn make_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    write_text(path, &format!("{text}\n"))
}
