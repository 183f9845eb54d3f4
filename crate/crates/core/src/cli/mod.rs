//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! failure. Every output file is written atomically.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::eval::{bench_scaling, evaluate_by_category, EvalOptions};
use crate::formal::{run_expressivity_trials, verify_pattern, PatternKind};
use crate::io::{write_atomic, write_atomic_str};
use crate::kg::{
    augment_reciprocal, classify_relations, generate_synthetic_kg, infer_type_signatures, load_dataset,
    load_dataset_with_vocab, triples_tsv, KnowledgeGraph, SyntheticConfig, VocabMode, Vocabulary,
};
use crate::models::{
    export_embeddings, AnyModel, Checkpoint, ModelKind, RelateHyper, RelateParams, RotateParams, TransEParams,
    TypeContext, WithContext,
};
use crate::perturb::{apply_perturbation, robustness_experiment, FlipTarget, PerturbationKind, PerturbationSpec};
use crate::training::{train_model, TrainConfig};

fn config_help() -> String {
    format!(
        "Config file: flat key=value lines, '#' starts a comment. Keys and defaults:\n{}",
        TrainConfig::default()
            .to_text()
            .lines()
            .map(|l| format!("  {l}"))
            .collect::<Vec<_>>()
            .join("\n")
    ) + "\n  loss_margin=<margin>\n  warmup_steps=<max_steps/10>"
}

#[derive(Debug, Parser)]
#[command(name = "relate", version, about = "RelatE knowledge-graph embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic family knowledge graph.
    GenSynthetic(GenSyntheticArgs),
    /// Train a model and evaluate it on the test split.
    #[command(after_help = config_help())]
    Train(TrainArgs),
    /// Evaluate a checkpoint with filtered ranking metrics.
    Eval(EvalArgs),
    /// Apply one structural perturbation to a training split.
    Perturb(PerturbArgs),
    /// Clean-vs-perturbed degradation matrix for several models.
    #[command(after_help = config_help())]
    Robustness(RobustnessArgs),
    /// Run the expressivity construction on random truth tables.
    VerifyExpressivity(VerifyExpressivityArgs),
    /// Check the inference-pattern constructions.
    VerifyPatterns(VerifyPatternsArgs),
    /// Time single-triple scoring across embedding dimensions.
    Bench(BenchArgs),
    /// Write a RelatE checkpoint's entity embeddings as CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub entities: usize,
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    #[arg(long, default_value_t = 3)]
    pub max_children: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    pub valid_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    pub test_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Config file (key=value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory with train.txt, valid.txt and test.txt.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "relate")]
    pub model: ModelKind,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config worker count.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write zero instead of wall-clock times.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["test", "valid"])]
    pub split: String,
    /// Also report metrics per relation category.
    #[arg(long)]
    pub by_category: bool,
    /// Output directory for eval.json (and categories.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// edge-addition, edge-deletion, inverse-flip, relation-swap or counterfactual.
    #[arg(long)]
    pub kind: PerturbationKind,
    #[arg(long, default_value_t = 0.1)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// For inverse-flip: RELATION,INVERSE names; flips only RELATION triples
    /// into INVERSE.
    #[arg(long)]
    pub flip_pair: Option<String>,
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated models.
    #[arg(long, value_delimiter = ',', default_value = "relate,rotate,transe")]
    pub model: Vec<ModelKind>,
    /// Comma-separated perturbations; default all five.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Vec<PerturbationKind>,
    #[arg(long, default_value_t = 0.1)]
    pub ratio: f64,
    /// Training seeds averaged per cell.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    /// Seed of the perturbation generators.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyExpressivityArgs {
    #[arg(long, default_value_t = 3)]
    pub entities: usize,
    #[arg(long, default_value_t = 2)]
    pub relations: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyPatternsArgs {
    /// One pattern, or all when omitted.
    #[arg(long)]
    pub pattern: Option<PatternKind>,
    /// Coordinates per phase/modulus vector.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "relate")]
    pub model: ModelKind,
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512,1024")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 20000)]
    pub triples: usize,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 64)]
    pub entities: usize,
    #[arg(long, default_value_t = 4)]
    pub relations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic_str(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::load(p).with_context(|| format!("config {}", p.display())),
        None => Ok(TrainConfig::default()),
    }
}

/// Flag checks that do not need any file I/O. Failures are usage errors.
fn validate(cmd: &Command) -> Result<()> {
    match cmd {
        Command::GenSynthetic(a) => {
            let s = a.train_frac + a.valid_frac + a.test_frac;
            if [a.train_frac, a.valid_frac, a.test_frac].iter().any(|f| *f < 0.0) || s > 1.0 + 1e-9 {
                bail!("split fractions must be non-negative and sum to at most 1");
            }
            if a.entities < 2 || a.depth < 2 || a.max_children < 1 {
                bail!("need entities >= 2, depth >= 2, max-children >= 1");
            }
        }
        Command::Train(a) => {
            if a.workers == Some(0) {
                bail!("--workers must be at least 1");
            }
        }
        Command::Eval(a) => {
            if a.workers == 0 {
                bail!("--workers must be at least 1");
            }
        }
        Command::Perturb(a) => {
            if !(a.ratio > 0.0 && a.ratio <= 1.0) {
                bail!("--ratio must be in (0, 1]");
            }
            if a.flip_pair.is_some() && a.kind != PerturbationKind::InverseRelationFlip {
                bail!("--flip-pair only applies to inverse-flip");
            }
        }
        Command::Robustness(a) => {
            if !(a.ratio > 0.0 && a.ratio <= 1.0) {
                bail!("--ratio must be in (0, 1]");
            }
            if a.seeds.is_empty() || a.model.is_empty() {
                bail!("need at least one seed and one model");
            }
            if a.workers == Some(0) {
                bail!("--workers must be at least 1");
            }
        }
        Command::VerifyExpressivity(a) => {
            if a.entities == 0 || a.relations == 0 || a.trials == 0 {
                bail!("entities, relations and trials must be positive");
            }
            if !(a.gamma > 0.0) {
                bail!("--gamma must be positive");
            }
        }
        Command::VerifyPatterns(a) => {
            if a.dim < 2 || a.trials == 0 || !(a.tolerance > 0.0) {
                bail!("need dim >= 2, trials >= 1 and a positive tolerance");
            }
        }
        Command::Bench(a) => {
            if a.dims.len() < 2 {
                bail!("need ≥ 2 points");
            }
            if a.dims.iter().any(|d| *d == 0 || d % 2 != 0) {
                bail!("dims must be even and positive");
            }
            if a.triples == 0 || a.reps == 0 || a.entities == 0 || a.relations == 0 {
                bail!("triples, reps, entities and relations must be positive");
            }
        }
        Command::ExportEmbeddings(_) => {}
    }
    Ok(())
}

fn cmd_gen_synthetic(a: &GenSyntheticArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        entities: a.entities,
        depth: a.depth,
        train_frac: a.train_frac,
        valid_frac: a.valid_frac,
        test_frac: a.test_frac,
        max_children: a.max_children,
    };
    let kg = generate_synthetic_kg(&cfg, a.seed)?;
    create_dir(&a.out)?;
    let header = cfg.provenance(a.seed);
    for (name, split) in [("train.txt", &kg.train), ("valid.txt", &kg.valid), ("test.txt", &kg.test)] {
        write_text(&a.out.join(name), &triples_tsv(split, &kg.vocab, Some(&header)))?;
    }
    println!(
        "{} entities, {} relations, {}/{}/{} train/valid/test triples -> {}",
        kg.num_entities(),
        kg.num_relations(),
        kg.train.len(),
        kg.valid.len(),
        kg.test.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    let kg = load_dataset(&a.data, VocabMode::Fixed)?;
    let run = train_model(a.model, &cfg, &kg)?;
    let report = run.evaluate(&run.graph.test, cfg.type_lambda, &EvalOptions { workers: cfg.workers })?;

    let ckpt = Checkpoint::new(
        run.model.clone(),
        cfg.dim,
        run.graph.vocab.entity_names().to_vec(),
        run.graph.vocab.relation_names().to_vec(),
        run.graph.base_relations,
        run.graph.reciprocal,
        serde_json::to_value(&cfg)?,
    );
    create_dir(&a.out)?;
    ckpt.save(&a.out.join("checkpoint.json"))?;
    write_text(&a.out.join("history.csv"), &run.history.to_csv(!a.no_timing))?;
    write_text(&a.out.join("eval.json"), &report.to_json())?;
    write_text(&a.out.join("config.txt"), &cfg.to_text())?;
    print!("{}", report.to_text());
    Ok(())
}

fn checkpoint_graph(ckpt: &Checkpoint, data: &Path) -> Result<KnowledgeGraph> {
    let base_names = ckpt.relation_names[..ckpt.base_relations].to_vec();
    let vocab = Vocabulary::from_names(ckpt.entity_names.clone(), base_names)?;
    let kg = load_dataset_with_vocab(data, &vocab)?;
    Ok(if ckpt.reciprocal { augment_reciprocal(&kg) } else { kg })
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let kg = checkpoint_graph(&ckpt, &a.data)?;
    let cfg: TrainConfig = serde_json::from_value(ckpt.settings.clone()).unwrap_or_default();
    let split = if a.split == "test" { &kg.test } else { &kg.valid };
    let opts = EvalOptions { workers: a.workers };
    let sig = infer_type_signatures(&kg.train, &kg.valid, kg.num_entities(), kg.num_relations());
    let ctx = match &ckpt.model {
        AnyModel::Relate(_) if cfg.type_lambda > 0.0 => Some(TypeContext {
            signatures: &sig,
            warm: 1.0,
            lambda: cfg.type_lambda,
        }),
        _ => None,
    };
    let (report, categories) = match &ckpt.model {
        AnyModel::Relate(p) => {
            let scorer = WithContext { model: p, ctx };
            let rep = crate::eval::evaluate(&scorer, &kg, split, &opts)?;
            let cats = if a.by_category {
                let c = classify_relations(&kg.base_train());
                Some(evaluate_by_category(&scorer, &kg, split, &c, &opts)?)
            } else {
                None
            };
            (rep, cats)
        }
        other => {
            let rep = crate::eval::evaluate(other, &kg, split, &opts)?;
            let cats = if a.by_category {
                let c = classify_relations(&kg.base_train());
                Some(evaluate_by_category(other, &kg, split, &c, &opts)?)
            } else {
                None
            };
            (rep, cats)
        }
    };
    print!("{}", report.to_text());
    if let Some(c) = &categories {
        print!("{}", c.to_text());
    }
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_text(&out.join("eval.json"), &report.to_json())?;
        if let Some(c) = &categories {
            write_text(&out.join("categories.csv"), &c.to_csv())?;
            write_text(&out.join("categories.json"), &c.to_json())?;
        }
    }
    Ok(())
}

fn cmd_perturb(a: &PerturbArgs) -> Result<()> {
    let kg = load_dataset(&a.data, VocabMode::Fixed)?;
    let flip = match &a.flip_pair {
        None => FlipTarget::All,
        Some(pair) => {
            let (r, inv) = pair
                .split_once(',')
                .ok_or_else(|| anyhow!("--flip-pair expects RELATION,INVERSE"))?;
            let idx = |n: &str| kg.vocab.relation(n.trim()).ok_or_else(|| anyhow!("unknown relation '{n}'"));
            FlipTarget::Pair {
                relation: idx(r)?,
                inverse: idx(inv)?,
            }
        }
    };
    let spec = PerturbationSpec {
        kind: a.kind,
        ratio: a.ratio,
        seed: a.seed,
        flip,
    };
    let sig = infer_type_signatures(&kg.train, &kg.valid, kg.num_entities(), kg.num_relations());
    let (train, log) = apply_perturbation(&kg.train, &kg, &spec, Some(&sig))?;
    let header = format!("perturbed: {} ratio={} seed={}", a.kind.name(), a.ratio, a.seed);
    let valid = std::fs::read(a.data.join("valid.txt"))?;
    let test = std::fs::read(a.data.join("test.txt"))?;
    create_dir(&a.out)?;
    write_text(&a.out.join("train.txt"), &triples_tsv(&train, &kg.vocab, Some(&header)))?;
    write_atomic(&a.out.join("valid.txt"), &valid)?;
    write_atomic(&a.out.join("test.txt"), &test)?;
    write_text(&a.out.join("edits.tsv"), &log.to_tsv(&kg.vocab))?;
    println!("{} edits, {} -> {} training triples", log.len(), kg.train.len(), train.len());
    Ok(())
}

fn cmd_robustness(a: &RobustnessArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    let kg = load_dataset(&a.data, VocabMode::Fixed)?;
    let kinds = if a.kinds.is_empty() {
        PerturbationKind::ALL.to_vec()
    } else {
        a.kinds.clone()
    };
    let specs: Vec<PerturbationSpec> = kinds
        .into_iter()
        .map(|k| PerturbationSpec {
            ratio: a.ratio,
            ..PerturbationSpec::new(k, a.seed)
        })
        .collect();
    let report = robustness_experiment(&a.model, &kg, &specs, &cfg, &a.seeds)?;
    create_dir(&a.out)?;
    write_text(&a.out.join("robustness.csv"), &report.to_csv())?;
    write_text(&a.out.join("robustness_matrix.csv"), &report.to_matrix_csv())?;
    write_text(&a.out.join("robustness.json"), &report.to_json())?;
    print!("{}", report.to_matrix_csv());
    Ok(())
}

/// Returns whether every certificate was valid.
fn cmd_verify_expressivity(a: &VerifyExpressivityArgs) -> Result<bool> {
    let rep = run_expressivity_trials(a.entities, a.relations, a.trials, a.seed, a.gamma)?;
    if let Some(out) = &a.out {
        write_text(out, &rep.to_json())?;
    }
    println!("{}", rep.summary_line());
    for o in rep.outcomes.iter().filter(|o| !o.valid).take(5) {
        println!(
            "  trial {}: {} false triples, {} offending (min true {:?}, max false {:?})",
            o.trial,
            o.false_triples,
            o.offending.len(),
            o.min_true_score,
            o.max_false_score
        );
    }
    Ok(rep.valid == rep.trials)
}

fn cmd_verify_patterns(a: &VerifyPatternsArgs) -> Result<bool> {
    let kinds: Vec<PatternKind> = match a.pattern {
        Some(k) => vec![k],
        None => PatternKind::ALL.to_vec(),
    };
    let mut witnesses = Vec::new();
    for k in kinds {
        let w = verify_pattern(k, a.dim, a.trials, a.tolerance, a.seed)?;
        println!(
            "{} {:<14} max residual {:.3e} over {} trials",
            if w.passed { "PASS" } else { "FAIL" },
            k.name(),
            w.max_residual,
            w.trials
        );
        witnesses.push(w);
    }
    if let Some(out) = &a.out {
        write_text(out, &serde_json::to_string_pretty(&witnesses)?)?;
    }
    Ok(witnesses.iter().all(|w| w.passed))
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let seed = crate::seed::derive_seed(a.seed, "bench/model");
    let (ne, nr) = (a.entities, a.relations);
    let rep = match a.model {
        ModelKind::Relate => bench_scaling(
            |d| RelateParams::init(ne, nr, d, &RelateHyper::default(), seed).expect("dims validated"),
            &a.dims,
            a.triples,
            a.reps,
            a.seed,
        )?,
        ModelKind::TransE => bench_scaling(
            |d| TransEParams::init(ne, nr, d, 12.0, seed).expect("dims validated"),
            &a.dims,
            a.triples,
            a.reps,
            a.seed,
        )?,
        ModelKind::Rotate => bench_scaling(
            |d| RotateParams::init(ne, nr, d, 12.0, seed).expect("dims validated"),
            &a.dims,
            a.triples,
            a.reps,
            a.seed,
        )?,
    };
    print!("{}", rep.to_text());
    if let Some(out) = &a.out {
        write_text(out, &rep.to_json())?;
    }
    Ok(())
}

fn cmd_export(a: &ExportArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let p = ckpt
        .model
        .as_relate()
        .ok_or_else(|| anyhow!("export-embeddings needs a RelatE checkpoint, found {}", ckpt.model.kind()))?;
    export_embeddings(p, &ckpt.entity_names, &a.out)?;
    println!("{} entities -> {}", ckpt.entity_names.len(), a.out.display());
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = validate(&cli.command) {
        eprintln!("error: {e}");
        return 1;
    }
    let outcome = match &cli.command {
        Command::GenSynthetic(a) => cmd_gen_synthetic(a).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Perturb(a) => cmd_perturb(a).map(|_| true),
        Command::Robustness(a) => cmd_robustness(a).map(|_| true),
        Command::VerifyExpressivity(a) => cmd_verify_expressivity(a),
        Command::VerifyPatterns(a) => cmd_verify_patterns(a),
        Command::Bench(a) => cmd_bench(a).map(|_| true),
        Command::ExportEmbeddings(a) => cmd_export(a).map(|_| true),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("verification failed");
            2
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}
