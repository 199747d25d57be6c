//! Context-stratified evaluation of probabilistic classifiers.
//!
//! Subgroup AUROC by pre-test probability quartile ([`stratify`]), by prior
//! mention of the finding in earlier notes, and on optimally matched
//! positive/negative sets ([`matchset`]), all with class-stratified
//! bootstrap intervals ([`resample`]). [`synthlab`] generates datasets with a
//! known shortcut; [`textrisk`] fits the pre-test model from notes.

pub mod calibration;
pub mod dataset;
pub mod error;
pub mod folds;
pub mod matchset;
pub mod metrics;
pub mod stratify;
pub mod textrisk;
pub mod resample;
pub mod synthlab;
pub mod evaluate;
pub mod cli;
