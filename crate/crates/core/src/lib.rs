//! Block-model guided unsupervised feature selection for attributed networks.
//!
//! The pipeline fits a block model to the network topology
//! ([`blockmodel`]), then learns nonnegative feature scores whose induced
//! feature graph reproduces that block structure ([`objective`],
//! [`solver`]). Selected features are assessed by clustering
//! ([`evaluation`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blockmodel;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod objective;
pub mod solver;
pub mod sparse;

pub use blockmodel::{
    fit_onmtf, generate_candidates, perturb_allocation, select_best_rre, CandidateSet, OnmtfConfig,
    PerturbMode,
};
pub use data::{generate_planted, load_dataset, DatasetManifest, FeatureFormat, PlantedSpec};
pub use error::{Error, Result};
pub use evaluation::{evaluate_selection, EvaluationReport};
pub use model::{Allocation, AttributedNetwork, BlockModel, FeatureScores};
pub use objective::{ObjectiveContext, GradientMode};
pub use solver::{optimize, top_d_features, ObjectiveTrace, SolverConfig};
pub use sparse::CsrMatrix;
