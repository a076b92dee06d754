//! Metrics, binning, popularity, round-robin and top-k retrieval against
//! brute-force reimplementations on random small instances.

use std::collections::BTreeSet;

use alcir::baselines::{build_popularity, popularity_recommend};
use alcir::data::{Catalog, ComplementaryCategoryMap, ItemRecord, LabeledPair};
use alcir::evaluation::{
    assign_label_bins, catalog_coverage, evaluate, hit_rate_at_k, ndcg_single, Protocol, COVERAGE_K,
};
use alcir::retrieval::{round_robin, CategoryIndex, Recommendation, RecommendationList};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: u64 = 150;

fn rng(i: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed_0000 + i)
}

/// Random catalog whose item ids are shuffled relative to index order.
fn random_catalog(rng: &mut ChaCha8Rng) -> Catalog {
    let n_cat = rng.random_range(2..=5);
    let mut items = Vec::new();
    for c in 0..n_cat {
        for _ in 0..rng.random_range(1..=12) {
            items.push(c);
        }
    }
    let mut ids: Vec<usize> = (0..items.len()).collect();
    ids.shuffle(rng);
    let records = items
        .iter()
        .zip(ids)
        .map(|(&c, id)| ItemRecord {
            item_id: format!("it{id:03}"),
            category: c,
            price: 1.0,
            price_bin: Some(0),
            image_features: vec![0.0],
        })
        .collect();
    Catalog::new(records, (0..n_cat).map(|c| format!("c{c}")).collect()).unwrap()
}

fn random_list(rng: &mut ChaCha8Rng, catalog: &Catalog) -> RecommendationList {
    let mut items: Vec<usize> = (0..catalog.len()).collect();
    items.shuffle(rng);
    items.truncate(rng.random_range(0..=catalog.len()));
    RecommendationList {
        seed: 0,
        target_category: None,
        entries: items
            .into_iter()
            .map(|item| Recommendation {
                item,
                category: catalog.category_of(item),
                score: 0.0,
            })
            .collect(),
    }
}

fn brute_hr(list: &[usize], relevant: usize, k: usize) -> f64 {
    let mut hit = 0.0;
    for (i, &item) in list.iter().enumerate() {
        if i < k && item == relevant {
            hit = 1.0;
        }
    }
    hit
}

fn brute_ndcg(list: &[usize], relevant: usize) -> f64 {
    // binary relevance with one relevant item, so the ideal DCG is 1
    list.iter()
        .enumerate()
        .map(|(i, &item)| if item == relevant { 1.0 / (i as f64 + 2.0).log2() } else { 0.0 })
        .sum()
}

pub fn hit_rate_and_ndcg_match_brute_force() {
    for i in 0..INSTANCES {
        let mut r = rng(i);
        let catalog = random_catalog(&mut r);
        let list = random_list(&mut r, &catalog);
        let plain: Vec<usize> = list.items().collect();
        let relevant = r.random_range(0..catalog.len());
        for k in [1, 2, 5, 10, 50] {
            assert_eq!(hit_rate_at_k(&list, relevant, k), brute_hr(&plain, relevant, k));
        }
        assert!((ndcg_single(&list, relevant) - brute_ndcg(&plain, relevant)).abs() <= 1e-12);
    }
}

pub fn coverage_matches_brute_force() {
    for i in 0..INSTANCES {
        let mut r = rng(i);
        let catalog = random_catalog(&mut r);
        let lists: Vec<RecommendationList> = (0..r.random_range(1..5)).map(|_| random_list(&mut r, &catalog)).collect();
        for k in [1, 3, COVERAGE_K] {
            let mut distinct = 0;
            for item in 0..catalog.len() {
                if lists.iter().any(|l| l.entries.iter().take(k).any(|e| e.item == item)) {
                    distinct += 1;
                }
            }
            let expected = distinct as f64 / catalog.len() as f64;
            assert!((catalog_coverage(&lists, &catalog, k).unwrap() - expected).abs() <= 1e-12);
        }
    }
}

fn random_pairs(rng: &mut ChaCha8Rng, catalog: &Catalog, n: usize) -> Vec<LabeledPair> {
    let mut pairs = Vec::new();
    while pairs.len() < n {
        let (s, t) = (rng.random_range(0..catalog.len()), rng.random_range(0..catalog.len()));
        if let Ok(p) = LabeledPair::new(catalog, s, t) {
            pairs.push(p);
        }
    }
    pairs
}

pub fn popularity_tally_and_ranking_match_brute_force() {
    for i in 0..INSTANCES {
        let mut r = rng(i);
        let catalog = random_catalog(&mut r);
        let n = r.random_range(1..40);
        let pairs = random_pairs(&mut r, &catalog, n);
        let table = build_popularity(&pairs);
        for item in 0..catalog.len() {
            let count = pairs.iter().filter(|p| p.target == item).count();
            assert_eq!(table.count(item), count);
        }
        let seed = r.random_range(0..catalog.len());
        let target = (catalog.category_of(seed) + 1) % catalog.n_categories();
        let k = r.random_range(1..15);
        // selection sort by (count desc, id asc)
        let mut pool: Vec<usize> = catalog.items_in(target).to_vec();
        let mut expected = Vec::new();
        while !pool.is_empty() && expected.len() < k {
            let mut best = 0;
            for j in 1..pool.len() {
                let (a, b) = (pool[j], pool[best]);
                let (ca, cb) = (table.count(a), table.count(b));
                if ca > cb || (ca == cb && catalog.item(a).item_id < catalog.item(b).item_id) {
                    best = j;
                }
            }
            expected.push(pool.remove(best));
        }
        let got: Vec<usize> = popularity_recommend(&catalog, &table, seed, target, k).unwrap().items().collect();
        assert_eq!(got, expected);
    }
}

pub fn equal_depth_bins_match_brute_force() {
    for i in 0..INSTANCES {
        let mut r = rng(i);
        let n = r.random_range(1..30);
        let mut counts: Vec<((usize, usize), usize)> = (0..n).map(|j| ((j / 7, j % 7 + 10), r.random_range(0..6))).collect();
        counts.shuffle(&mut r);
        let bins = r.random_range(1..12);
        let got = assign_label_bins(&counts, bins);

        let mut sorted = counts.clone();
        sorted.sort_by_key(|&(pair, c)| (c, pair));
        assert_eq!(got.len(), bins.min(n));
        let flat: Vec<_> = got.iter().flatten().copied().collect();
        assert_eq!(flat, sorted, "bins are contiguous chunks of the sorted pairs");
        let (lo, hi) = (n / got.len(), n.div_ceil(got.len()));
        for b in &got {
            assert!(b.len() == lo || b.len() == hi, "sizes {lo}..={hi}, got {}", b.len());
        }
    }
}

pub fn round_robin_matches_brute_force() {
    for i in 0..INSTANCES {
        let mut r = rng(i);
        let rankings: Vec<Vec<Recommendation>> = (0..r.random_range(0..5))
            .map(|c| {
                (0..r.random_range(0..6))
                    .map(|d| Recommendation {
                        item: c * 100 + d,
                        category: c,
                        score: -(d as f64),
                    })
                    .collect()
            })
            .collect();
        let k = r.random_range(1..20);
        // every entry keyed by (depth, category order), then the first k
        let mut keyed: Vec<(usize, usize, usize)> = rankings
            .iter()
            .enumerate()
            .flat_map(|(c, list)| list.iter().enumerate().map(move |(d, e)| (d, c, e.item)))
            .collect();
        keyed.sort();
        let expected: Vec<usize> = keyed.into_iter().take(k).map(|e| e.2).collect();
        let got: Vec<usize> = round_robin(7, &rankings, k).items().collect();
        assert_eq!(got, expected);
    }
}

pub fn top_k_matches_full_sort() {
    for i in 0..INSTANCES {
        let mut r = rng(i);
        let catalog = random_catalog(&mut r);
        let dim = r.random_range(1..6);
        let mut vectors: Vec<Vec<f64>> = (0..catalog.len())
            .map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        // exact duplicates exercise the id tie-break
        if catalog.len() > 2 {
            vectors[1] = vectors[0].clone();
        }
        let index = CategoryIndex::from_vectors(&catalog, dim, vectors.clone()).unwrap();
        let query: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let c = r.random_range(0..catalog.n_categories());
        let k = r.random_range(1..15);

        let cos = |v: &[f64]| {
            let dot: f64 = v.iter().zip(&query).map(|(a, b)| a * b).sum();
            let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nq = query.iter().map(|a| a * a).sum::<f64>().sqrt();
            dot / (nv * nq)
        };
        let mut all: Vec<(f64, &str, usize)> = catalog
            .items_in(c)
            .iter()
            .map(|&it| (cos(&vectors[it]), catalog.item(it).item_id.as_str(), it))
            .collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        let got = index.top_k(&catalog, &query, c, k).unwrap();
        assert_eq!(got.len(), k.min(all.len()));
        for (g, e) in got.iter().zip(&all) {
            assert_eq!(g.item, e.2);
            assert!((g.score - e.0).abs() <= 1e-12);
        }
    }
}

pub fn evaluate_matches_brute_force_means() {
    for i in 0..INSTANCES {
        let mut r = rng(i);
        let catalog = random_catalog(&mut r);
        let n = r.random_range(1..20);
        let test = random_pairs(&mut r, &catalog, n);
        // a fixed random ranking per (seed, category)
        let salt: u64 = r.random();
        let ranker = |seed: usize, c: usize, k: usize| {
            let mut items = catalog.items_in(c).to_vec();
            let mut local = ChaCha8Rng::seed_from_u64(salt ^ (seed as u64) << 8 ^ c as u64);
            items.shuffle(&mut local);
            items.truncate(k);
            Ok(RecommendationList {
                seed,
                target_category: Some(c),
                entries: items
                    .into_iter()
                    .map(|item| Recommendation { item, category: c, score: 0.0 })
                    .collect(),
            })
        };
        let cc_map = ComplementaryCategoryMap::from_counts(catalog.n_categories(), []);
        let report = evaluate(&ranker, &catalog, &cc_map, &test, Protocol::CategoryAware, &[1, 5, 10]).unwrap();

        let lists: Vec<Vec<usize>> = test
            .iter()
            .map(|p| ranker(p.seed, p.target_category, usize::MAX).unwrap().items().collect())
            .collect();
        let ndcg: f64 = test.iter().zip(&lists).map(|(p, l)| brute_ndcg(l, p.target)).sum::<f64>() / n as f64;
        assert!((report.ndcg - ndcg).abs() <= 1e-12);
        for k in [1, 5, 10] {
            let hr: f64 = test.iter().zip(&lists).map(|(p, l)| brute_hr(l, p.target, k)).sum::<f64>() / n as f64;
            assert!((report.hr(k) - hr).abs() <= 1e-12);
        }
        let distinct: BTreeSet<usize> = lists.iter().flat_map(|l| l.iter().take(COVERAGE_K).copied()).collect();
        assert!((report.coverage - distinct.len() as f64 / catalog.len() as f64).abs() <= 1e-12);
        assert_eq!(report.n_test_cases, n);
    }
}
