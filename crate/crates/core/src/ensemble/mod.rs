//! The two tree ensembles, their shared evaluation, and the persisted model document.

mod model;
mod pca;
mod tcsmsb;
mod wmsdte;

pub use model::{evaluate, Ensemble, Metrics, ModelDocument, ModelKind, MODEL_FORMAT_VERSION};
pub use pca::{retained_components, GroupProjection, Grouping, PcaGroup};
pub use tcsmsb::{failure_prob_from_score, psi, TcsmsbConfig, TcsmsbModel, WeakLearner, EPS_P};
pub use wmsdte::{WmsdteConfig, WmsdteModel};
