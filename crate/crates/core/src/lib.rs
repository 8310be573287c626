//! Model-guided batch sequence design.
//!
//! A deep-ensemble surrogate (1D convolutional or recurrent regressors over
//! one-hot sequences) supplies a predictive mean and variance; acquisition
//! functions (UCB, EI, one-shot knowledge gradient) pick query batches; a
//! proximal objective `f(s) - lambda * d(s, s0)` keeps proposals close to the
//! wild type. Campaigns run against lookup-table or NK landscapes under a
//! fixed round budget.

pub mod acquisition;
pub mod autodiff;
pub mod error;
pub mod explorer;
pub mod harness;
pub mod landscape;
pub mod selfcheck;
pub mod sequence;
pub mod surrogate;

pub use acquisition::{
    ei, kg_oneshot, select_batch, ucb, AcquisitionConfig, AcquisitionKind, KgConfig, Posterior,
    Selection,
};
pub use error::{Error, Result};
pub use explorer::{
    update_frontier, ExplorerState, FrontierPoint, LambdaPolicy, ProximalObjective, RoundRecord,
    RoundSettings,
};
pub use harness::{AggregateCurve, CampaignConfig, Method};
pub use landscape::{
    load_lookup, nk_fitness, BudgetedOracle, FitnessLandscape, LookupLandscape, LookupOptions,
    NkLandscape,
};
pub use sequence::{
    encode_onehot, hamming_distance, point_mutate, sample_mutants, Alphabet, OneHot, Sequence,
};
pub use surrogate::{
    gradient_check, Architecture, ConvRegressorConfig, Dataset, Ensemble, Pooling,
    RecurrentRegressorConfig, TrainConfig, TrainReport,
};
