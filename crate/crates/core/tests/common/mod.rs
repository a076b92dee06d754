#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;
pub mod routing;

use alcir::data::SyntheticConfig;
use alcir::model::{Alcir, ModelConfig, ModelSizes};
use alcir::pipeline::{prepare_synthetic, Prepared};
use alcir::training::{assemble_batches, TrainBatch, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn small_synthetic(seed: u64) -> Prepared {
    let cfg = SyntheticConfig {
        n_categories: 4,
        items_per_category: 12,
        style_dim: 3,
        feature_dim: 6,
        seed,
        ..Default::default()
    };
    prepare_synthetic(&cfg, 4, 0.8).unwrap().1
}

/// Narrow enough to be fast, wide enough that no item's encoding collapses to zero.
pub fn small_sizes() -> ModelSizes {
    ModelSizes {
        latent_dim: 5,
        category_embedding_dim: 3,
        price_embedding_dim: 2,
        image_hidden: vec![16],
        image_out: 4,
        fusion_hidden: vec![16],
        translator_hidden: vec![16],
        classifier_hidden: vec![8],
        reconstructor_hidden: vec![16],
    }
}

pub fn small_model(data: &Prepared, seed: u64) -> Alcir<f64> {
    let cfg = ModelConfig::from_sizes(
        &small_sizes(),
        data.catalog.feature_width(),
        data.catalog.n_categories(),
        data.catalog.n_price_bins(),
    )
    .unwrap();
    Alcir::new(cfg, seed).unwrap()
}

/// The first batch of an epoch, with unlabeled samples when `ratio > 0`.
pub fn first_batch(data: &Prepared, ratio: f64) -> TrainBatch {
    let cfg = TrainConfig {
        batch_size: 8,
        unlabeled_ratio: ratio,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assemble_batches(&data.catalog, &data.split.train, &data.cc_map, &cfg, &mut rng).remove(0)
}
