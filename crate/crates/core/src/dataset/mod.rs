//! Weather ingestion, standardization, sampling weights, the synthetic
//! labeled corpus and stratified splits.

pub mod fixtures;
mod ingest;
mod schema;
mod split;
mod synth;
mod tensor;
mod weights;

pub use ingest::{
    format_timestamp, ingest_weather, ingest_weather_dir, parse_timestamp, write_site_csv, WeatherTable, STEP_HOURS,
};
pub use schema::{Category, Coordinates, Feature, FeatureSchema, Site, TensorDims, SCHEMA_VERSION};
pub use split::{split_labels, split_stratified, Split};
pub use synth::{aggregate_matrix, synthesize_corpus, SynthConfig, SyntheticCorpus};
pub use tensor::{
    standardize, uniform_weights, ColumnStats, ComponentKind, FeatureTensor, PowerFlowColumn, Standardizer, FAILURE,
    NORMAL,
};
pub use weights::{category_means, category_weights, site_weights, weights_from_coefficients, WEIGHT_FLOOR};
