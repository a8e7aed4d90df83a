//! Benchmarks, ablations and synthetic corpora.

pub mod ablation;
pub mod benchmark;
pub mod synth;

pub use ablation::{ablation_additive, ablation_csv, ablation_leave_one_out, AblationRow, DEFAULT_ORDER};
pub use benchmark::{
    comparison_csv, predictions_csv, prepare, run_benchmark, train_and_evaluate, tune_and_fit, write_reports, Benchmark, ExperimentConfig, GridKnob,
    HumanAgreement, ModelRun, Prepared,
};
pub use synth::{synth_corpus, synth_resources, Latent, ScoreTerm, SynthCorpus, SynthSpec};
