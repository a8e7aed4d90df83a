//! Model comparison per prompt, with per-run report files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{stratified_split, AlignedResponse, LexicalResources, Split, SplitAssignment, SPLIT_RATIOS};
use crate::error::{Error, Result};
use crate::features::extract::{extract_corpus, ExtractConfig, Extraction};
use crate::learner::{fit_model, grid_search, n_grades_of, Family, FittedModel, GridResult, GridSpec, Params, Task};
use crate::matrix::{format_float, FeatureGroup, FeatureMatrix};
use crate::metrics::MetricReport;
use crate::seeding::{derive_seed, stable_hash};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridKnob {
    pub name: String,
    pub values: Vec<f64>,
}

/// Which models to fit and how to tune them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub families: Vec<Family>,
    pub tasks: Vec<Task>,
    /// Groups a benchmark requires; missing ones are an error.
    pub groups: Vec<FeatureGroup>,
    pub folds: usize,
    /// Per-family grid overrides keyed by family name, in enumeration order.
    pub grids: BTreeMap<String, Vec<GridKnob>>,
    pub params: Params,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            families: Family::ALL.to_vec(),
            tasks: Task::ALL.to_vec(),
            groups: FeatureGroup::ALL.to_vec(),
            folds: 5,
            grids: BTreeMap::new(),
            params: Params::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn grid_for(&self, family: Family, seed: u64) -> GridSpec {
        let mut spec = GridSpec::default_for(family, seed);
        if let Some(knobs) = self.grids.get(family.name()) {
            spec.grid = knobs.iter().map(|k| (k.name.clone(), k.values.clone())).collect();
        }
        spec.folds = self.folds;
        spec
    }
}

/// Split assignment plus extracted features for a corpus.
pub struct Prepared {
    pub split: SplitAssignment,
    pub extraction: Extraction,
}

pub fn prepare(corpus: &[AlignedResponse], resources: &LexicalResources, config: &ExtractConfig, seed: u64) -> Result<Prepared> {
    let split = stratified_split(corpus, SPLIT_RATIOS, derive_seed(seed, 1))?;
    let extraction = extract_corpus(corpus, Some(&split), resources, config, seed)?;
    Ok(Prepared { split, extraction })
}

/// One tuned model evaluated on the held-out splits of one prompt.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub prompt: String,
    pub family: Family,
    pub task: Task,
    pub n_grades: usize,
    pub n_train: usize,
    pub cv: GridResult,
    pub model: FittedModel,
    pub valid: Option<MetricReport>,
    pub test: MetricReport,
    /// (response id, human grade, predicted grade) on the test split.
    pub predictions: Vec<(String, usize, usize)>,
}

impl ModelRun {
    pub fn best_setting(&self) -> &[(String, f64)] {
        &self.cv.table[self.cv.best].setting
    }

    /// Hex digest of the serialized model.
    pub fn model_digest(&self) -> String {
        format!("{:016x}", stable_hash(&self.model.to_json()))
    }
}

fn seed_for(seed: u64, key: &str) -> u64 {
    derive_seed(seed, stable_hash(key))
}

/// Cross-validated grid search on `train`, then a refit of the best setting
/// on all of it. Seeds depend only on prompt, family and formulation.
pub fn tune_and_fit(
    prompt: &str,
    train: &FeatureMatrix,
    family: Family,
    task: Task,
    n_grades: usize,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(GridResult, FittedModel)> {
    let key = format!("{prompt}/{family}/{task}");
    let spec = config.grid_for(family, seed_for(seed, &format!("{key}/cv")));
    let cv = grid_search(&spec, family, task, &config.params, train, n_grades)?;
    let model = fit_model(family, task, &cv.best_params, seed_for(seed, &format!("{key}/fit")), train, n_grades)?;
    Ok((cv, model))
}

/// Grid search by cross-validation on the training rows, refit of the best
/// setting on all training rows, then scoring of the validation and test rows.
pub fn train_and_evaluate(
    prompt: &str,
    matrix: &FeatureMatrix,
    family: Family,
    task: Task,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<ModelRun> {
    let n_grades = n_grades_of(matrix)?;
    let train = matrix.split_view(Split::Train);
    let test = matrix.split_view(Split::Test);
    if train.n_rows() == 0 || test.n_rows() == 0 {
        return Err(Error::Invalid(format!("prompt {prompt}: training and test splits must both be non-empty")));
    }
    let (cv, model) = tune_and_fit(prompt, &train, family, task, n_grades, config, seed)?;
    let evaluate = |m: &FeatureMatrix| -> Result<(MetricReport, Vec<usize>)> {
        let pred = model.grades(m)?;
        Ok((MetricReport::from_grades(&m.targets()?, &pred, n_grades)?, pred))
    };
    let valid_m = matrix.split_view(Split::Valid);
    let valid = if valid_m.n_rows() > 0 { Some(evaluate(&valid_m)?.0) } else { None };
    let (test_report, pred) = evaluate(&test)?;
    let gold = test.targets()?;
    let predictions = test.row_ids.iter().zip(gold).zip(pred).map(|((id, h), p)| (id.clone(), h, p)).collect();
    Ok(ModelRun {
        prompt: prompt.to_string(),
        family,
        task,
        n_grades,
        n_train: train.n_rows(),
        cv,
        model,
        valid,
        test: test_report,
        predictions,
    })
}

/// Agreement between the first and second human grades on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanAgreement {
    pub prompt: String,
    pub test: MetricReport,
}

pub struct Benchmark {
    pub runs: Vec<ModelRun>,
    pub human: Vec<HumanAgreement>,
}

/// Fits every configured family and formulation from scratch on every prompt.
pub fn run_benchmark(matrices: &BTreeMap<String, FeatureMatrix>, config: &ExperimentConfig, seed: u64) -> Result<Benchmark> {
    let mut runs = Vec::new();
    let mut human = Vec::new();
    for (prompt, matrix) in matrices {
        let present = matrix.groups_present();
        if let Some(g) = config.groups.iter().find(|g| !present.contains(g)) {
            return Err(Error::MissingGroup(format!("{g} (prompt {prompt})")));
        }
        let matrix = matrix.select_groups(&config.groups);
        for &family in &config.families {
            for &task in &config.tasks {
                runs.push(train_and_evaluate(prompt, &matrix, family, task, config, seed)?);
            }
        }
        let test = matrix.split_view(Split::Test);
        let pairs: Vec<(usize, usize)> = test
            .grades
            .iter()
            .zip(&test.second_grades)
            .filter_map(|(a, b)| Some((a.as_ref()?.ordinal(), b.as_ref()?.ordinal())))
            .collect();
        if !pairs.is_empty() {
            let (a, b): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            human.push(HumanAgreement { prompt: prompt.clone(), test: MetricReport::from_grades(&a, &b, n_grades_of(&matrix)?)? });
        }
    }
    Ok(Benchmark { runs, human })
}

const COMPARISON_HEADER: [&str; 10] =
    ["prompt", "model", "formulation", "n_test", "cv_qwk", "valid_qwk", "test_qwk", "test_r", "test_mse", "best_params"];

fn setting_string(s: &[(String, f64)]) -> String {
    s.iter().map(|(k, v)| format!("{k}={}", format_float(*v))).collect::<Vec<_>>().join(";")
}

/// One row per run plus one human-human row per prompt with second grades.
pub fn comparison_csv(b: &Benchmark) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COMPARISON_HEADER).unwrap();
    for r in &b.runs {
        w.write_record([
            r.prompt.clone(),
            r.family.name().to_string(),
            r.task.name().to_string(),
            r.test.n.to_string(),
            format_float(r.cv.table[r.cv.best].mean_qwk),
            r.valid.as_ref().map(|v| format_float(v.qwk)).unwrap_or_default(),
            format_float(r.test.qwk),
            format_float(r.test.pearson_r),
            format_float(r.test.mse),
            setting_string(r.best_setting()),
        ])
        .unwrap();
    }
    for h in &b.human {
        w.write_record([
            h.prompt.clone(),
            "human".into(),
            "second_rater".into(),
            h.test.n.to_string(),
            String::new(),
            String::new(),
            format_float(h.test.qwk),
            format_float(h.test.pearson_r),
            format_float(h.test.mse),
            String::new(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

#[derive(Serialize)]
struct RunReport<'a> {
    prompt: &'a str,
    model: &'a str,
    formulation: &'a str,
    n_grades: usize,
    n_train: usize,
    best_params: BTreeMap<&'a str, f64>,
    cv_mean_qwk: f64,
    valid: &'a Option<MetricReport>,
    test: &'a MetricReport,
    model_digest: String,
}

pub fn predictions_csv(run: &ModelRun) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["response_id", "human", "predicted"]).unwrap();
    for (id, h, p) in &run.predictions {
        w.write_record([id.clone(), h.to_string(), p.to_string()]).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `<dir>/<prompt>/<model>/<formulation>/{report.json, cv.csv,
/// model.json, predictions.csv}`, `<dir>/comparison.csv` and, when second
/// grades exist, `<dir>/<prompt>/human.json`.
pub fn write_reports(dir: &Path, b: &Benchmark) -> Result<()> {
    for r in &b.runs {
        let d = dir.join(&r.prompt).join(r.family.name()).join(r.task.name());
        let report = RunReport {
            prompt: &r.prompt,
            model: r.family.name(),
            formulation: r.task.name(),
            n_grades: r.n_grades,
            n_train: r.n_train,
            best_params: r.best_setting().iter().map(|(k, v)| (k.as_str(), *v)).collect(),
            cv_mean_qwk: r.cv.table[r.cv.best].mean_qwk,
            valid: &r.valid,
            test: &r.test,
            model_digest: r.model_digest(),
        };
        write(&d.join("report.json"), &serde_json::to_string_pretty(&report).unwrap())?;
        write(&d.join("cv.csv"), &r.cv.to_csv())?;
        write(&d.join("model.json"), &r.model.to_json())?;
        write(&d.join("predictions.csv"), &predictions_csv(r))?;
    }
    for h in &b.human {
        write(&dir.join(&h.prompt).join("human.json"), &serde_json::to_string_pretty(h).unwrap())?;
    }
    write(&dir.join("comparison.csv"), &comparison_csv(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{synth_corpus, SynthSpec};

    const DEFAULT_NO_AUDIO: [FeatureGroup; 4] = [FeatureGroup::CF, FeatureGroup::FF, FeatureGroup::SPF, FeatureGroup::GVF];

    fn small_config() -> ExperimentConfig {
        let mut grids = BTreeMap::new();
        grids.insert("gbt".into(), vec![GridKnob { name: "max_depth".into(), values: vec![2.0] }, GridKnob { name: "n_stages".into(), values: vec![20.0] }]);
        grids.insert("decision_tree".into(), vec![GridKnob { name: "max_depth".into(), values: vec![3.0] }]);
        grids.insert("random_forest".into(), vec![GridKnob { name: "n_trees".into(), values: vec![10.0] }]);
        ExperimentConfig { groups: vec![FeatureGroup::FF, FeatureGroup::GVF], folds: 3, grids, ..Default::default() }
    }

    fn prepared(second: Option<f64>) -> Prepared {
        let c = synth_corpus(&SynthSpec { n: 150, seed: 5, second_rater: second, ..Default::default() }).unwrap();
        let cfg = ExtractConfig { groups: DEFAULT_NO_AUDIO.to_vec(), ..Default::default() };
        prepare(&c.responses, &c.resources, &cfg, 5).unwrap()
    }

    #[test]
    fn benchmark_covers_every_family_and_task() {
        let p = prepared(Some(0.2));
        let b = run_benchmark(&p.extraction.matrices, &small_config(), 9).unwrap();
        assert_eq!(b.runs.len(), Family::ALL.len() * 2);
        assert_eq!(b.human.len(), 1);
        assert!(b.human[0].test.qwk < 1.0);
        let gbt = b.runs.iter().find(|r| r.family == Family::Gbt && r.task == Task::Regression).unwrap();
        assert!(gbt.test.qwk > 0.3, "{}", gbt.test.qwk);
        let csv = comparison_csv(&b);
        assert_eq!(csv.lines().count(), 1 + 10 + 1);
        assert!(csv.lines().last().unwrap().contains(",human,"));

        let dir = tempfile::tempdir().unwrap();
        write_reports(dir.path(), &b).unwrap();
        let run_dir = dir.path().join("p1/gbt/regression");
        for f in ["report.json", "cv.csv", "model.json", "predictions.csv"] {
            assert!(run_dir.join(f).is_file(), "{f}");
        }
        let m = FittedModel::from_json(&fs::read_to_string(run_dir.join("model.json")).unwrap()).unwrap();
        assert_eq!(m, gbt.model);
    }

    #[test]
    fn no_human_row_without_second_grades() {
        let p = prepared(None);
        let cfg = ExperimentConfig { families: vec![Family::Linear], tasks: vec![Task::Regression], ..small_config() };
        let b = run_benchmark(&p.extraction.matrices, &cfg, 9).unwrap();
        assert!(b.human.is_empty());
        assert_eq!(comparison_csv(&b).lines().count(), 2);
    }

    #[test]
    fn missing_group_is_named() {
        let p = prepared(None);
        let cfg = ExperimentConfig { groups: vec![FeatureGroup::AF], ..small_config() };
        match run_benchmark(&p.extraction.matrices, &cfg, 9) {
            Err(Error::MissingGroup(msg)) => assert!(msg.contains("AF")),
            other => panic!("expected MissingGroup, got {:?}", other.map(|b| b.runs.len())),
        }
    }
}
