//! Glue from raw catalogs to a train-ready dataset.

use crate::data::{
    derive_complementary_categories, discretize_prices, generate_synthetic, split_cold, Catalog,
    ComplementaryCategoryMap, DatasetSplit, LabeledPair, SyntheticConfig, SyntheticDataset,
};
use crate::error::Result;

/// A binned catalog with its labeled pairs, cold split and complementary map.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub catalog: Catalog,
    pub pairs: Vec<LabeledPair>,
    pub split: DatasetSplit,
    pub cc_map: ComplementaryCategoryMap,
}

impl Prepared {
    /// Bins prices, derives the complementary map from all pairs and splits by seed.
    pub fn new(catalog: Catalog, pairs: Vec<LabeledPair>, price_bins: usize, train_fraction: f64, split_seed: u64) -> Result<Self> {
        let catalog = discretize_prices(catalog, price_bins);
        let cc_map = derive_complementary_categories(&catalog, &pairs);
        let split = split_cold(&pairs, train_fraction, split_seed)?;
        Ok(Prepared {
            catalog,
            pairs,
            split,
            cc_map,
        })
    }
}

/// Generates a synthetic catalog and prepares it with the same seed for the split.
pub fn prepare_synthetic(cfg: &SyntheticConfig, price_bins: usize, train_fraction: f64) -> Result<(SyntheticDataset, Prepared)> {
    let data = generate_synthetic(cfg)?;
    let prepared = Prepared::new(data.catalog.clone(), data.labeled.clone(), price_bins, train_fraction, cfg.seed)?;
    Ok((data, prepared))
}
