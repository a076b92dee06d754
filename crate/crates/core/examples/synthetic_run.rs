//! Trains ablation presets on several synthetic catalogs and prints mean metrics.
//!
//! cargo run --release -p alcir --example synthetic_run -- [seeds] [epochs]
//!
//! Knobs are read from the environment: LR, BATCH, PATIENCE, RATIO, MARGIN,
//! CLIP, MOM, TF (train fraction), PPI (pairs per item), SKEW, NOISE, PRESETS,
//! W (base loss weights `t,c,k`), HID and LAYERS (hidden width and depth of
//! every network), D (latent width), IMGOUT, CLSHID (`64x32`), VERBOSE (per-seed
//! lines) and TRACE (per-epoch losses).

use std::collections::BTreeMap;

use alcir::baselines::{build_popularity, PopularityRanker};
use alcir::data::SyntheticConfig;
use alcir::evaluation::{evaluate, evaluate_by_label_bins, Protocol, DEFAULT_KS};
use alcir::losses::AblationPreset;
use alcir::math::UpdateRule;
use alcir::model::{Alcir, ModelConfig, ModelSizes};
use alcir::pipeline::prepare_synthetic;
use alcir::retrieval::{AlcirRanker, CategoryIndex};
use alcir::training::{fit, TrainConfig};

fn env(k: &str, d: f64) -> f64 {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}

fn main() -> alcir::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);
    let only = std::env::var("PRESETS").unwrap_or_default();
    let verbose = std::env::var("VERBOSE").is_ok();
    let mut sums: BTreeMap<&str, [f64; 4]> = BTreeMap::new();
    let t0 = std::time::Instant::now();
    for seed in 0..seeds {
        let syn = SyntheticConfig {
            seed,
            pairs_per_item: env("PPI", 2.0) as usize,
            label_skew: env("SKEW", 1.0),
            noise_scale: env("NOISE", 0.1),
            ..Default::default()
        };
        let (_, data) = prepare_synthetic(&syn, 20, env("TF", 0.8))?;
        let pop = build_popularity(&data.split.train);
        let pop_ranker = PopularityRanker::new(&data.catalog, &pop);
        let m = evaluate(&pop_ranker, &data.catalog, &data.cc_map, &data.split.test, Protocol::CategoryAware, &DEFAULT_KS)?;
        let e = sums.entry("popularity").or_default();
        e[0] += m.ndcg;
        e[1] += m.hr(10);
        // untrained references: cosine on raw and on category-centered features
        for (name, centered) in [("raw_features", false), ("centered_features", true)] {
            let cat = &data.catalog;
            let width = cat.feature_width();
            let mut means = vec![vec![0.0f64; width]; cat.n_categories()];
            for c in 0..cat.n_categories() {
                for &i in cat.items_in(c) {
                    for (m, &f) in means[c].iter_mut().zip(&cat.item(i).image_features) {
                        *m += f as f64 / cat.items_in(c).len() as f64;
                    }
                }
            }
            let vectors: Vec<Vec<f64>> = cat
                .items()
                .iter()
                .map(|it| {
                    it.image_features
                        .iter()
                        .zip(&means[it.category])
                        .map(|(&f, &m)| f as f64 - if centered { m } else { 0.0 })
                        .collect()
                })
                .collect();
            let index = CategoryIndex::from_vectors(cat, width, vectors.clone())?;
            let ranker = |seed: usize, c: usize, k: usize| {
                let recs = index.top_k(cat, &vectors[seed], c, k)?;
                Ok(alcir::retrieval::RecommendationList { seed, target_category: Some(c), entries: recs })
            };
            let m = evaluate(&ranker, cat, &data.cc_map, &data.split.test, Protocol::CategoryAware, &DEFAULT_KS)?;
            let e = sums.entry(name).or_default();
            e[0] += m.ndcg;
            e[1] += m.hr(10);
        }
        for preset in AblationPreset::ALL {
            if !only.is_empty() && !only.split(',').any(|p| p == preset.name()) {
                continue;
            }
            let mut sizes = ModelSizes::default();
            let hid = env("HID", 64.0) as usize;
            let layers = env("LAYERS", 1.0) as usize;
            sizes.latent_dim = env("D", 32.0) as usize;
            sizes.image_out = env("IMGOUT", 32.0) as usize;
            sizes.image_hidden = vec![hid; layers];
            sizes.fusion_hidden = vec![hid; layers];
            sizes.translator_hidden = vec![hid; layers];
            sizes.classifier_hidden = vec![hid; layers];
            if let Ok(h) = std::env::var("CLSHID") {
                sizes.classifier_hidden = h.split('x').filter(|s| !s.is_empty()).map(|s| s.parse().unwrap()).collect();
            }
            sizes.reconstructor_hidden = vec![hid; layers];
            let config = ModelConfig::from_sizes(&sizes, data.catalog.feature_width(), data.catalog.n_categories(), 20)?;
            let model = Alcir::<f64>::new(config, seed)?;
            let mut cfg = TrainConfig { epochs, rng_seed: seed, ..Default::default() };
            cfg.learning_rate = env("LR", cfg.learning_rate);
            cfg.batch_size = env("BATCH", cfg.batch_size as f64) as usize;
            cfg.early_stop_patience = env("PATIENCE", cfg.early_stop_patience as f64) as usize;
            cfg.unlabeled_ratio = env("RATIO", cfg.unlabeled_ratio);
            cfg.triplet.margin = env("MARGIN", cfg.triplet.margin);
            let clip = env("CLIP", cfg.max_grad_norm.unwrap_or(0.0));
            cfg.max_grad_norm = (clip > 0.0).then_some(clip);
            let mom = env("MOM", 0.0);
            if mom > 0.0 {
                cfg.optimizer = UpdateRule::Momentum { beta: mom };
            }
            if let Ok(w) = std::env::var("W") {
                let w: Vec<f64> = w.split(',').map(|x| x.parse().unwrap()).collect();
                cfg.loss_weights = alcir::losses::LossWeights::new(w[0], w[1], w[2])?;
            }
            let cfg = cfg.with_preset(preset)?;
            let (model, log) = fit(model, &data.catalog, &data.split, &data.cc_map, &cfg)?;
            let index = CategoryIndex::<f64>::build(&data.catalog, &model)?;
            let ranker = AlcirRanker::new(&data.catalog, &model, &index);
            let m = evaluate(&ranker, &data.catalog, &data.cc_map, &data.split.test, Protocol::CategoryAware, &DEFAULT_KS)?;
            let bins = evaluate_by_label_bins(&ranker, &data.catalog, &data.cc_map, &data.split, 10)?;
            let low: Vec<f64> = bins.bins.iter().take(3).map(|b| b.metrics.ndcg).collect();
            let low = low.iter().sum::<f64>() / low.len() as f64;
            let e = sums.entry(preset.name()).or_default();
            e[0] += m.ndcg;
            e[1] += m.hr(10);
            e[2] += low;
            e[3] += log.epochs.len() as f64;
            if std::env::var("TRACE").is_ok() {
                for e in &log.epochs {
                    println!("  {:>3} t{:.3} c{:.3} g{:.3} a{:.3} hr{:.3} ndcg{:.3}", e.epoch, e.triplet, e.cycle, e.cls_genuine, e.cls_translated, e.val_hr10.unwrap_or(0.0), e.val_ndcg.unwrap_or(0.0));
                }
            }
            if verbose {
                let last = log.epochs.last().unwrap();
                println!(
                    "seed {seed} {:<20} ndcg {:.3} hr10 {:.3} low {low:.3} best {:?}/{} loss t{:.3} c{:.3} g{:.3} a{:.3}",
                    preset.name(), m.ndcg, m.hr(10), log.best_epoch, log.epochs.len(),
                    last.triplet, last.cycle, last.cls_genuine, last.cls_translated
                );
            }
        }
    }
    let n = seeds as f64;
    for (name, s) in &sums {
        println!("{name:<20} ndcg {:.3} hr10 {:.3} low3 {:.3} epochs {:.0}", s[0] / n, s[1] / n, s[2] / n, s[3] / n);
    }
    println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
