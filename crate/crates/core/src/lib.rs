//! Loss-based feature importance: perturbation (PFI, CFI, RFI),
//! marginalization (reduced models, SAGE value functions, SAGE values) and
//! refitting (LOCO, WVIM, LOCI), with inference tools and a verification
//! harness over synthetic processes with known ground truth.

pub mod data;
pub mod dgp;
pub mod error;
pub mod exec;
pub mod inference;
pub mod learners;
pub mod loss;
pub mod marginal;
pub mod methods;
pub mod model;
pub mod perturb;
pub mod refit;
pub mod result;
pub mod samplers;
pub mod seed;
pub mod split;
pub mod verify;

pub use data::{Dataset, Task};
pub use error::{FiError, Result};
pub use learners::{Learner, LearnerKind, LearnerSpec};
pub use loss::{estimate_risk, Loss, RiskEstimate};
pub use model::{FnModel, Model, Predictor};
pub use result::{FIResult, FeatureRecord, ValueEstimate};
pub use samplers::SamplerKind;
pub use seed::SeedPolicy;
