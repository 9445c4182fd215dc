//! Observables, ensemble statistics, stationary-measure estimation and Monte
//! Carlo checks of the moment lemmas.

pub mod lemmas;
pub mod observables;
pub mod stationary;
pub mod stats;

pub use lemmas::{
    k_embedding_constant, k_weight_moment, lemma61_experiment, lemma62_check, lemma62_constant,
    GaussianPair, KWeight, KWeightReport, Lemma61Report, Lemma62Report, LemmaError,
};
pub use observables::{evaluate, probes, ObservableSeries, Probe};
pub use stationary::{stationary_scan, Estimate, LogMomentEntry, LogMomentReport};
pub use stats::{merge, EnsembleStats, Moments, StatsError};
