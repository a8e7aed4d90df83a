//! Feature importance, partial dependence and Shapley explanations of trained models.

pub mod importance;
pub mod pdp;
pub mod render;
pub mod shap;

pub use importance::{gain_importance, split_count_importance, ImportanceMethod, ImportanceRanking};
pub use pdp::{pdp, pdp_model, PdpCurve, DEFAULT_GRID};
pub use shap::{brute_force_shap, explain_matrix, shap_summary, tree_shap, ShapExplanation, ShapSummary, SummaryPoint};
