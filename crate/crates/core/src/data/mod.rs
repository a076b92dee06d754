//! Catalog ingestion, preprocessing, cold-seed splits and synthetic data.

mod catalog;
pub mod io;
mod preprocess;
mod split;
mod stats;
mod synth;

pub use catalog::{Catalog, CategoryId, ItemIdx, ItemRecord, LabeledPair};
pub use preprocess::{
    build_labeled_pairs, derive_complementary_categories, discretize_prices,
    filter_rare_categories, ComplementaryCategoryMap, PairBuildStats,
};
pub use split::{split_cold, DatasetSplit};
pub use stats::DatasetStats;
pub use synth::{generate_synthetic, SyntheticConfig, SyntheticDataset};
