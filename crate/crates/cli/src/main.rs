//! `speechgrade` command-line tool.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde_json::json;

use speechgrade::corpus::{load_corpus, write_corpus, Grade, LexicalResources, Split};
use speechgrade::explain::{self, render};
use speechgrade::features::extract_corpus;
use speechgrade::harness::{self, ExperimentConfig, SynthSpec};
use speechgrade::learner::{n_grades_of, Family, FittedModel, Model, Task};
use speechgrade::matrix::{parse_groups, FeatureGroup, FeatureMatrix};
use speechgrade::metrics::MetricReport;
use speechgrade::seeding::stable_hash;

use config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "speechgrade", version, about = "Interpretable scoring of spoken responses")]
struct Cli {
    /// Master seed; every random choice derives from it. Required here or in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic graded corpus, its manifest and lexical resources.
    Synth(SynthArgs),
    /// Extract feature matrices, one CSV per prompt.
    Extract(ExtractArgs),
    /// Tune by cross-validation on the training rows and fit one model.
    Train(TrainArgs),
    /// Score a model on a split, or score a predictions file against its gold grades.
    Evaluate(EvaluateArgs),
    /// Global importance, partial dependence or SHAP tables and figures.
    Explain(ExplainArgs),
    /// Additive or leave-one-group-out feature-group ablation.
    Ablate(AblateArgs),
    /// Fit every family and formulation and write the comparison tables.
    Report(ReportArgs),
}

#[derive(clap::Args, Debug)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of responses.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Number of grade levels.
    #[arg(long, default_value_t = 3)]
    grades: usize,
    /// Number of prompts.
    #[arg(long, default_value_t = 1)]
    prompts: usize,
    /// Standard deviation of the noise added to the latent score.
    #[arg(long, default_value_t = 0.15)]
    noise: f64,
    /// Probability that a second rater disagrees by one grade; no second grades when absent.
    #[arg(long)]
    second_rater: Option<f64>,
    /// Attach synthetic voice parameters so acoustic features can be computed.
    #[arg(long, default_value_t = false, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    acoustic: bool,
}

#[derive(clap::Args, Debug)]
struct ExtractArgs {
    /// Corpus manifest or directory of alignment files.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Directory of lexical resource files; built-in filler list only when absent.
    #[arg(long)]
    resources: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated feature groups.
    #[arg(long, default_value = "CF,FF,SPF,GVF,AF")]
    groups: String,
    /// Skip the stratified train/valid/test split; content vocabularies are then fitted on all rows.
    #[arg(long, default_value_t = false, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    no_split: bool,
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    /// Feature matrix CSV written by `extract`.
    #[arg(long)]
    features: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model family: linear, decision_tree, random_forest, gbt or length_only.
    #[arg(long, default_value = "gbt")]
    family: String,
    /// Task formulation: regression or classification.
    #[arg(long, default_value = "regression")]
    task: String,
    /// Comma-separated feature groups to train on.
    #[arg(long, default_value = "all")]
    groups: String,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
}

#[derive(clap::Args, Debug)]
struct EvaluateArgs {
    /// Model JSON written by `train`.
    #[arg(long, requires = "features", conflicts_with = "predictions")]
    model: Option<PathBuf>,
    /// Feature matrix CSV holding the rows to score.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Rows to score: train, valid, test or all.
    #[arg(long, default_value = "test")]
    split: String,
    /// CSV with response_id, human and predicted columns.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Number of grade levels for a predictions file; inferred from the grades when absent.
    #[arg(long)]
    n_grades: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ExplainKind {
    Importance,
    Pdp,
    Shap,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ImportanceArg {
    Gain,
    SplitCount,
}

#[derive(clap::Args, Debug)]
struct ExplainArgs {
    /// What to compute.
    #[arg(value_enum)]
    kind: ExplainKind,
    /// Model JSON written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Feature matrix CSV; not needed for importance.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Rows used as background (pdp) or explained (shap): train, valid, test or all.
    #[arg(long, default_value = "train")]
    split: String,
    /// Feature for partial dependence; repeat for several. All model features when absent.
    #[arg(long)]
    feature: Vec<String>,
    /// Grid points per partial dependence curve.
    #[arg(long, default_value_t = explain::DEFAULT_GRID)]
    grid: usize,
    /// Importance measure.
    #[arg(long, value_enum, default_value_t = ImportanceArg::Gain)]
    method: ImportanceArg,
    /// Bars shown in importance and SHAP summary figures.
    #[arg(long, default_value_t = 20)]
    top: usize,
    /// Classifier output to explain, as a grade ordinal. When absent: expected grade for trees and forests, top-grade margin for boosting.
    #[arg(long)]
    class: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AblateMode {
    Add,
    Drop,
}

#[derive(clap::Args, Debug)]
struct AblateArgs {
    /// add: grow the group set in order; drop: remove one group at a time.
    #[arg(value_enum)]
    mode: AblateMode,
    /// Feature matrix CSV written by `extract`.
    #[arg(long)]
    features: PathBuf,
    /// Comma-separated groups, in order for `add`.
    #[arg(long, default_value = "CF,FF,SPF,GVF,AF")]
    order: String,
    /// Model family.
    #[arg(long, default_value = "gbt")]
    family: String,
    /// Task formulation.
    #[arg(long, default_value = "regression")]
    task: String,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct ReportArgs {
    /// Feature matrix CSVs written by `extract`; repeat for several prompts.
    #[arg(long, required = true)]
    features: Vec<PathBuf>,
    /// Comma-separated model families, or all.
    #[arg(long, default_value = "all")]
    families: String,
    /// Comma-separated task formulations, or all.
    #[arg(long, default_value = "all")]
    tasks: String,
    /// Comma-separated feature groups every matrix must contain.
    #[arg(long, default_value = "CF,FF,SPF,GVF,AF")]
    groups: String,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail("usage", &e.render().to_string(), 2);
        }
    };
    match run(&matches) {
        Ok(summary) => {
            println!("{}", serde_json::to_string(&summary).unwrap());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (kind, code) = if let Some(c) = e.downcast_ref::<speechgrade::Error>() {
                (c.kind(), 1)
            } else if e.downcast_ref::<UsageError>().is_some() {
                ("usage", 2)
            } else if e.downcast_ref::<ConfigError>().is_some() {
                ("config", 2)
            } else if e.downcast_ref::<std::io::Error>().is_some() {
                ("io", 1)
            } else {
                ("error", 1)
            };
            fail(kind, &format!("{e:#}"), code)
        }
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message.trim_end() }));
    ExitCode::from(code)
}

fn run(matches: &ArgMatches) -> anyhow::Result<serde_json::Value> {
    let cli = Cli::from_arg_matches(matches).map_err(|e| usage(e.to_string()))?;
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).ok_or_else(|| usage("a seed is required: pass --seed or set `seed` in the config"))?;
    let threads = if explicit(matches, "threads") { cli.threads } else { cfg.threads.unwrap_or(cli.threads) };
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("starting the worker pool")?;
    }
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    let ctx = Ctx { sub, seed };
    match cli.command {
        Command::Synth(a) => cmd_synth(&ctx, a, &mut cfg),
        Command::Extract(a) => cmd_extract(&ctx, a, &mut cfg),
        Command::Train(a) => cmd_train(&ctx, a, &mut cfg),
        Command::Evaluate(a) => cmd_evaluate(a, &cfg),
        Command::Explain(a) => cmd_explain(a, &cfg),
        Command::Ablate(a) => cmd_ablate(&ctx, a, &mut cfg),
        Command::Report(a) => cmd_report(&ctx, a, &mut cfg),
    }
}

struct Ctx<'a> {
    sub: &'a ArgMatches,
    seed: u64,
}

impl Ctx<'_> {
    /// True when the flag was typed rather than defaulted.
    fn explicit(&self, id: &str) -> bool {
        explicit(self.sub, id)
    }
}

fn explicit(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = flag
        .or_else(|| cfg.paths.out.clone())
        .ok_or_else(|| usage("an output directory is required: pass --out or set paths.out"))?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn display(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn groups_arg(s: &str) -> anyhow::Result<Vec<FeatureGroup>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(FeatureGroup::ALL.to_vec());
    }
    Ok(parse_groups(s)?)
}

fn list_arg<T: std::str::FromStr<Err = speechgrade::Error> + Copy>(s: &str, all: &[T]) -> anyhow::Result<Vec<T>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(all.to_vec());
    }
    Ok(s.split(',').filter(|x| !x.trim().is_empty()).map(str::parse).collect::<Result<Vec<T>, _>>()?)
}

fn split_arg(s: &str) -> anyhow::Result<Option<Split>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(None);
    }
    Split::parse(s).map(Some).ok_or_else(|| usage(format!("unknown split {s:?} (train, valid, test or all)")))
}

fn rows_of(m: &FeatureMatrix, split: Option<Split>) -> anyhow::Result<FeatureMatrix> {
    let Some(s) = split else { return Ok(m.clone()) };
    let v = m.split_view(s);
    if v.n_rows() == 0 {
        bail!(speechgrade::Error::Invalid(format!("no rows in the {} split", s.name())));
    }
    Ok(v)
}

/// Prompt name of a matrix written by `extract`.
fn prompt_of(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_prefix("features_").map(str::to_string).unwrap_or(stem)
}

fn model_digest(m: &FittedModel) -> String {
    format!("{:016x}", stable_hash(&m.to_json()))
}

fn cmd_synth(ctx: &Ctx, a: SynthArgs, cfg: &mut RunConfig) -> anyhow::Result<serde_json::Value> {
    let spec: &mut SynthSpec = &mut cfg.synth;
    spec.seed = ctx.seed;
    if ctx.explicit("n") {
        spec.n = a.n;
    }
    if ctx.explicit("grades") {
        spec.grade_levels = a.grades;
    }
    if ctx.explicit("prompts") {
        spec.prompts = a.prompts;
    }
    if ctx.explicit("noise") {
        spec.noise = a.noise;
    }
    if a.second_rater.is_some() {
        spec.second_rater = a.second_rater;
    }
    if a.acoustic {
        spec.acoustic = true;
    }
    let spec = spec.clone();
    let dir = out_dir(a.out, cfg)?;
    let corpus = harness::synth_corpus(&spec)?;
    let manifest = write_corpus(&corpus.responses, &dir)?;
    let resources = dir.join("resources");
    corpus.resources.write_dir(&resources)?;
    let spec_path = dir.join("synth.json");
    write(&spec_path, &serde_json::to_string_pretty(&spec)?)?;
    Ok(json!({
        "command": "synth",
        "responses": corpus.responses.len(),
        "manifest": manifest.display().to_string(),
        "resources": resources.display().to_string(),
    }))
}

fn cmd_extract(ctx: &Ctx, a: ExtractArgs, cfg: &mut RunConfig) -> anyhow::Result<serde_json::Value> {
    let corpus_path = a
        .corpus
        .or_else(|| cfg.paths.corpus.clone())
        .ok_or_else(|| usage("a corpus is required: pass --corpus or set paths.corpus"))?;
    let resources = match a.resources.or_else(|| cfg.paths.resources.clone()) {
        Some(dir) => LexicalResources::load_dir(&dir)?,
        None => LexicalResources::default(),
    };
    if ctx.explicit("groups") || cfg.features.groups.is_empty() {
        cfg.features.groups = groups_arg(&a.groups)?;
    }
    let dir = out_dir(a.out, cfg)?;
    let loaded = load_corpus(&corpus_path)?;
    if loaded.responses.is_empty() {
        let detail = match loaded.rejects.first() {
            Some(r) => format!("all {} alignment files rejected; first: {}: {}", loaded.rejects.len(), r.path.display(), r.reason),
            None => "it lists no alignment files".to_string(),
        };
        bail!(speechgrade::Error::parse("corpus manifest", &corpus_path, detail));
    }
    let mut outputs = Vec::new();
    let (extraction, split) = if a.no_split {
        (extract_corpus(&loaded.responses, None, &resources, &cfg.features, ctx.seed)?, None)
    } else {
        let p = harness::prepare(&loaded.responses, &resources, &cfg.features, ctx.seed)?;
        (p.extraction, Some(p.split))
    };
    for (prompt, m) in &extraction.matrices {
        let path = dir.join(format!("features_{prompt}.csv"));
        m.write_csv(&path)?;
        outputs.push(path);
    }
    if let Some(split) = &split {
        let path = dir.join("split.json");
        write(&path, &serde_json::to_string_pretty(split)?)?;
        outputs.push(path);
    }
    let rejects: Vec<serde_json::Value> = loaded
        .rejects
        .iter()
        .map(|r| json!({ "path": r.path.display().to_string(), "kind": "load", "message": r.reason }))
        .chain(extraction.rejects.iter().map(|r| json!({ "response_id": r.response_id, "kind": r.kind, "message": r.message })))
        .collect();
    let log_path = dir.join("extraction.json");
    write(
        &log_path,
        &serde_json::to_string_pretty(&json!({
            "groups": cfg.features.groups,
            "rejects": rejects,
            "flags": extraction.flags,
            "warnings": loaded.warnings,
            "heuristic_syntax": extraction.heuristic_syntax,
        }))?,
    )?;
    outputs.push(log_path);
    let rows: usize = extraction.matrices.values().map(FeatureMatrix::n_rows).sum();
    Ok(json!({ "command": "extract", "rows": rows, "rejects": rejects.len(), "outputs": display(&outputs) }))
}

fn experiment(ctx: &Ctx, cfg: &RunConfig, folds: usize) -> ExperimentConfig {
    let mut e = cfg.experiment.clone();
    if ctx.explicit("folds") {
        e.folds = folds;
    }
    e
}

fn family_task(ctx: &Ctx, cfg: &RunConfig, family: &str, task: &str) -> anyhow::Result<(Family, Task)> {
    let f = if ctx.explicit("family") || cfg.model.family == Family::Gbt { family.parse()? } else { cfg.model.family };
    let t = if ctx.explicit("task") || cfg.model.task == Task::Regression { task.parse()? } else { cfg.model.task };
    Ok((f, t))
}

fn cmd_train(ctx: &Ctx, a: TrainArgs, cfg: &mut RunConfig) -> anyhow::Result<serde_json::Value> {
    let (family, task) = family_task(ctx, cfg, &a.family, &a.task)?;
    let config = experiment(ctx, cfg, a.folds);
    let matrix = FeatureMatrix::read_csv(&a.features)?;
    let groups = groups_arg(&a.groups)?;
    let present = matrix.groups_present();
    if ctx.explicit("groups") {
        if let Some(g) = groups.iter().find(|g| !present.contains(g)) {
            bail!(speechgrade::Error::MissingGroup(g.to_string()));
        }
    }
    let matrix = matrix.select_groups(&groups);
    let n_grades = n_grades_of(&matrix)?;
    let train = if matrix.splits.iter().all(Option::is_none) {
        matrix.clone()
    } else {
        rows_of(&matrix, Some(Split::Train))?
    };
    let prompt = prompt_of(&a.features);
    let (cv, model) = harness::tune_and_fit(&prompt, &train, family, task, n_grades, &config, ctx.seed)?;
    let dir = out_dir(a.out, cfg)?;
    let model_path = dir.join("model.json");
    write(&model_path, &model.to_json())?;
    let cv_path = dir.join("cv.csv");
    write(&cv_path, &cv.to_csv())?;
    let best = &cv.table[cv.best];
    let summary = json!({
        "prompt": prompt,
        "model": family.name(),
        "formulation": task.name(),
        "n_grades": n_grades,
        "n_train": train.n_rows(),
        "best_params": best.setting.iter().cloned().collect::<BTreeMap<String, f64>>(),
        "cv_mean_qwk": best.mean_qwk,
        "model_digest": model_digest(&model),
    });
    let summary_path = dir.join("train.json");
    write(&summary_path, &serde_json::to_string_pretty(&summary)?)?;
    Ok(json!({ "command": "train", "cv_mean_qwk": best.mean_qwk, "outputs": display(&[model_path, cv_path, summary_path]) }))
}

fn read_model(path: &Path) -> anyhow::Result<FittedModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    Ok(FittedModel::from_json(&text)?)
}

fn grade_field(s: &str, what: &str, line: usize) -> anyhow::Result<usize> {
    let s = s.trim();
    if let Ok(g) = s.parse::<usize>() {
        return Ok(g);
    }
    s.parse::<Grade>()
        .map(Grade::ordinal)
        .map_err(|_| anyhow!(speechgrade::Error::Invalid(format!("line {line}: {what} grade {s:?} is neither an ordinal nor a grade label"))))
}

/// (response id, human, predicted) from a predictions CSV with a header row.
fn read_predictions(path: &Path) -> anyhow::Result<Vec<(String, usize, usize)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| speechgrade::Error::parse("predictions", path, "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| speechgrade::Error::parse("predictions", path, format!("missing column {name}")))
    };
    let (id, h, p) = (find("response_id")?, find("human")?, find("predicted")?);
    let mut out = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            bail!(speechgrade::Error::parse("predictions", path, format!("line {} has {} fields, expected {}", i + 1, f.len(), cols.len())));
        }
        out.push((f[id].trim().to_string(), grade_field(f[h], "human", i + 1)?, grade_field(f[p], "predicted", i + 1)?));
    }
    Ok(out)
}

fn predictions_text(rows: &[(String, usize, usize)]) -> String {
    let mut s = String::from("response_id,human,predicted\n");
    for (id, h, p) in rows {
        s.push_str(&format!("{id},{h},{p}\n"));
    }
    s
}

fn cmd_evaluate(a: EvaluateArgs, cfg: &RunConfig) -> anyhow::Result<serde_json::Value> {
    let (rows, n_grades) = match (&a.model, &a.predictions) {
        (Some(model_path), None) => {
            let model = read_model(model_path)?;
            let features = a.features.as_ref().ok_or_else(|| usage("--model needs --features"))?;
            let m = rows_of(&FeatureMatrix::read_csv(features)?, split_arg(&a.split)?)?;
            let pred = model.grades(&m)?;
            let gold = m.targets()?;
            let rows: Vec<(String, usize, usize)> =
                m.row_ids.iter().cloned().zip(gold).zip(pred).map(|((id, h), p)| (id, h, p)).collect();
            (rows, model.n_grades)
        }
        (None, Some(path)) => {
            let rows = read_predictions(path)?;
            let seen = rows.iter().map(|(_, h, p)| (*h).max(*p) + 1).max().unwrap_or(2).max(2);
            let n = a.n_grades.unwrap_or(seen);
            if n < seen {
                bail!(speechgrade::Error::Invalid(format!("--n-grades {n} is below the highest grade seen ({})", seen - 1)));
            }
            (rows, n)
        }
        _ => return Err(usage("pass either --model with --features, or --predictions")),
    };
    if rows.is_empty() {
        bail!(speechgrade::Error::Invalid("nothing to evaluate".into()));
    }
    let human: Vec<usize> = rows.iter().map(|r| r.1).collect();
    let pred: Vec<usize> = rows.iter().map(|r| r.2).collect();
    let report = MetricReport::from_grades(&human, &pred, n_grades)?;
    let dir = out_dir(a.out, cfg)?;
    let report_path = dir.join("report.json");
    write(&report_path, &serde_json::to_string_pretty(&report)?)?;
    let mut outputs = vec![report_path];
    if a.model.is_some() {
        let p = dir.join("predictions.csv");
        write(&p, &predictions_text(&rows))?;
        outputs.push(p);
    }
    Ok(json!({
        "command": "evaluate",
        "qwk": report.qwk,
        "pearson_r": report.pearson_r,
        "mse": report.mse,
        "n": report.n,
        "outputs": display(&outputs),
    }))
}

fn file_part(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn cmd_explain(a: ExplainArgs, cfg: &RunConfig) -> anyhow::Result<serde_json::Value> {
    let model = read_model(&a.model)?;
    let dir = out_dir(a.out.clone(), cfg)?;
    let mut outputs = Vec::new();
    let matrix = || -> anyhow::Result<FeatureMatrix> {
        let path = a.features.as_ref().ok_or_else(|| usage("--features is required for pdp and shap"))?;
        rows_of(&FeatureMatrix::read_csv(path)?, split_arg(&a.split)?)
    };
    match a.kind {
        ExplainKind::Importance => {
            let Model::Trees(ensemble) = &model.model else {
                bail!(speechgrade::Error::Invalid(format!("importance needs a tree model, not {}", model.family)));
            };
            let (ranking, tag, title) = match a.method {
                ImportanceArg::Gain => (explain::gain_importance(ensemble), "gain", "Gain importance"),
                ImportanceArg::SplitCount => (explain::split_count_importance(ensemble), "split_count", "Split-count importance"),
            };
            let csv = dir.join(format!("importance_{tag}.csv"));
            write(&csv, &render::importance_csv(&ranking))?;
            let svg = dir.join(format!("importance_{tag}.svg"));
            write(&svg, &render::importance_svg(&ranking, title, a.top))?;
            outputs.extend([csv, svg]);
        }
        ExplainKind::Pdp => {
            let bg = matrix()?;
            let features = if a.feature.is_empty() { model.feature_names().to_vec() } else { a.feature.clone() };
            for f in &features {
                let curve = explain::pdp_model(&model, &bg, f, a.grid)?;
                let csv = dir.join(format!("pdp_{}.csv", file_part(f)));
                write(&csv, &render::pdp_csv(&curve))?;
                let svg = dir.join(format!("pdp_{}.svg", file_part(f)));
                write(&svg, &render::pdp_svg(&curve, &format!("Partial dependence on {f}")))?;
                outputs.extend([csv, svg]);
            }
        }
        ExplainKind::Shap => {
            let m = matrix()?;
            let e = explain::explain_matrix(&model, &m, a.class)?;
            let summary = explain::shap_summary(&e);
            let values = dir.join("shap_values.csv");
            write(&values, &render::shap_csv(&e))?;
            let csv = dir.join("shap_summary.csv");
            write(&csv, &render::summary_csv(&summary))?;
            let svg = dir.join("shap_summary.svg");
            write(&svg, &render::summary_svg(&summary, "SHAP summary", a.top))?;
            outputs.extend([values, csv, svg]);
        }
    }
    Ok(json!({ "command": "explain", "outputs": display(&outputs) }))
}

fn cmd_ablate(ctx: &Ctx, a: AblateArgs, cfg: &mut RunConfig) -> anyhow::Result<serde_json::Value> {
    let (family, task) = family_task(ctx, cfg, &a.family, &a.task)?;
    let config = experiment(ctx, cfg, a.folds);
    let matrix = FeatureMatrix::read_csv(&a.features)?;
    let order = groups_arg(&a.order)?;
    let prompt = prompt_of(&a.features);
    let (rows, tag) = match a.mode {
        AblateMode::Add => (harness::ablation_additive(&prompt, &matrix, &order, family, task, &config, ctx.seed)?, "add"),
        AblateMode::Drop => (harness::ablation_leave_one_out(&prompt, &matrix, &order, family, task, &config, ctx.seed)?, "drop"),
    };
    let dir = out_dir(a.out, cfg)?;
    let csv = dir.join(format!("ablation_{tag}.csv"));
    write(&csv, &harness::ablation_csv(&rows))?;
    let js = dir.join(format!("ablation_{tag}.json"));
    write(&js, &serde_json::to_string_pretty(&rows)?)?;
    Ok(json!({ "command": "ablate", "configurations": rows.len(), "outputs": display(&[csv, js]) }))
}

fn cmd_report(ctx: &Ctx, a: ReportArgs, cfg: &mut RunConfig) -> anyhow::Result<serde_json::Value> {
    let mut config = experiment(ctx, cfg, a.folds);
    if ctx.explicit("families") {
        config.families = list_arg(&a.families, &Family::ALL)?;
    }
    if ctx.explicit("tasks") {
        config.tasks = list_arg(&a.tasks, &Task::ALL)?;
    }
    if ctx.explicit("groups") {
        config.groups = groups_arg(&a.groups)?;
    }
    let mut matrices = BTreeMap::new();
    for path in &a.features {
        let prompt = prompt_of(path);
        if matrices.insert(prompt.clone(), FeatureMatrix::read_csv(path)?).is_some() {
            return Err(usage(format!("two feature files for prompt {prompt}")));
        }
    }
    let bench = harness::run_benchmark(&matrices, &config, ctx.seed)?;
    let dir = out_dir(a.out, cfg)?;
    harness::write_reports(&dir, &bench)?;
    let runs: Vec<serde_json::Value> = bench
        .runs
        .iter()
        .map(|r| json!({ "prompt": r.prompt, "model": r.family.name(), "formulation": r.task.name(), "test_qwk": r.test.qwk }))
        .collect();
    Ok(json!({ "command": "report", "runs": runs, "comparison": dir.join("comparison.csv").display().to_string() }))
}
