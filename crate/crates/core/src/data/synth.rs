use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::catalog::{Catalog, CategoryId, ItemIdx, ItemRecord, LabeledPair};
use crate::error::{Error, Result};

/// Knobs for the planted-complement generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_categories: usize,
    pub items_per_category: usize,
    pub style_dim: usize,
    /// Width of the emitted image-feature vectors.
    pub feature_dim: usize,
    pub noise_scale: f64,
    /// Complementary categories designated per category; each item gets one
    /// ground-truth complement in each of them.
    pub pairs_per_item: usize,
    pub label_fraction: f64,
    /// Zipf exponent over category pairs used when subsampling labels; 0 keeps
    /// the subsample uniform.
    pub label_skew: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_categories: 6,
            items_per_category: 60,
            style_dim: 8,
            feature_dim: 32,
            noise_scale: 0.1,
            pairs_per_item: 2,
            label_fraction: 0.5,
            label_skew: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    /// Raw prices; not yet binned.
    pub catalog: Catalog,
    pub labeled: Vec<LabeledPair>,
    pub ground_truth: Vec<LabeledPair>,
    pub styles: Vec<Vec<f64>>,
    /// Designated complementary categories of each category.
    pub complementary: Vec<Vec<CategoryId>>,
}

/// Generates a catalog whose complements are planted in a latent style space.
///
/// Each item draws a style vector; its image features are a fixed random linear
/// map of `style ⊕ one_hot(category)` plus Gaussian noise. The ground-truth
/// complement of an item in each designated complementary category is the item
/// there with the nearest style. Labeled pairs are a `label_fraction` subsample
/// of the ground truth, weighted toward a few category pairs by `label_skew`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    if cfg.n_categories < 2 {
        return Err(Error::Config("synthetic data needs at least two categories".into()));
    }
    if cfg.items_per_category == 0 || cfg.style_dim == 0 || cfg.feature_dim == 0 {
        return Err(Error::Config("synthetic sizes must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.label_fraction) || cfg.noise_scale < 0.0 || cfg.label_skew < 0.0 {
        return Err(Error::Config(
            "label_fraction must be in [0, 1]; noise_scale and label_skew nonnegative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_cat = cfg.n_categories;
    let per_item = cfg.pairs_per_item.min(n_cat - 1);

    let complementary: Vec<Vec<CategoryId>> = (0..n_cat)
        .map(|k| {
            let mut others: Vec<CategoryId> = (0..n_cat).filter(|&c| c != k).collect();
            others.shuffle(&mut rng);
            others.truncate(per_item);
            others.sort_unstable();
            others
        })
        .collect();

    let latent = cfg.style_dim + n_cat;
    let mix_scale = 1.0 / (latent as f64).sqrt();
    let mixing: Vec<f64> = (0..cfg.feature_dim * latent)
        .map(|_| mix_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut items = Vec::with_capacity(n_cat * cfg.items_per_category);
    let mut styles = Vec::with_capacity(items.capacity());
    for k in 0..n_cat {
        for j in 0..cfg.items_per_category {
            let style: Vec<f64> = (0..cfg.style_dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut z = style.clone();
            z.extend((0..n_cat).map(|c| if c == k { 1.0 } else { 0.0 }));
            let image_features = (0..cfg.feature_dim)
                .map(|f| {
                    let clean: f64 = mixing[f * latent..(f + 1) * latent]
                        .iter()
                        .zip(&z)
                        .map(|(a, b)| a * b)
                        .sum();
                    let noise: f64 = rng.sample(StandardNormal);
                    (clean + cfg.noise_scale * noise) as f32
                })
                .collect();
            let jitter: f64 = rng.sample(StandardNormal);
            let price = 20.0 * (0.5 * style[0] + 0.1 * jitter).exp();
            items.push(ItemRecord {
                item_id: format!("c{k:02}_i{j:03}"),
                category: k,
                price,
                price_bin: None,
                image_features,
            });
            styles.push(style);
        }
    }
    let names = (0..n_cat).map(|k| format!("cat{k:02}")).collect();
    let catalog = Catalog::new(items, names)?;

    let mut ground_truth = Vec::new();
    for seed in 0..catalog.len() {
        for &c in &complementary[catalog.category_of(seed)] {
            let target = nearest_style(&styles, &styles[seed], catalog.items_in(c));
            ground_truth.push(LabeledPair::new(&catalog, seed, target)?);
        }
    }

    // Zipf weights over category pairs, in a random rank order.
    let mut cat_pairs: Vec<(CategoryId, CategoryId)> = complementary
        .iter()
        .enumerate()
        .flat_map(|(k, cs)| cs.iter().map(move |&c| (k, c)))
        .collect();
    cat_pairs.shuffle(&mut rng);
    let weight = |s: CategoryId, t: CategoryId| -> f64 {
        let rank = cat_pairs.iter().position(|&p| p == (s, t)).expect("designated pair");
        1.0 / ((rank + 1) as f64).powf(cfg.label_skew)
    };

    // Weighted sampling without replacement: keep the m largest u^(1/w).
    let m = (cfg.label_fraction * ground_truth.len() as f64).ceil() as usize;
    let mut keyed: Vec<(f64, usize)> = ground_truth
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            let w = weight(catalog.category_of(p.seed), p.target_category);
            (u.ln() / w, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = keyed.iter().take(m).map(|&(_, i)| i).collect();
    chosen.sort_unstable();
    let labeled = chosen.into_iter().map(|i| ground_truth[i]).collect();

    Ok(SyntheticDataset {
        catalog,
        labeled,
        ground_truth,
        styles,
        complementary,
    })
}

fn nearest_style(styles: &[Vec<f64>], query: &[f64], candidates: &[ItemIdx]) -> ItemIdx {
    let dist = |i: ItemIdx| -> f64 {
        styles[i]
            .iter()
            .zip(query)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    *candidates
        .iter()
        .min_by(|&&a, &&b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)))
        .expect("nonempty category")
}
