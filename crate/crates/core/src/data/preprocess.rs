use std::collections::HashSet;

use super::catalog::{Catalog, CategoryId, ItemIdx, LabeledPair};

/// Drops categories with fewer than `min_items` items, and their items.
///
/// Surviving categories keep their relative order and are renumbered densely.
pub fn filter_rare_categories(catalog: Catalog, min_items: usize) -> Catalog {
    let keep: Vec<bool> = (0..catalog.n_categories())
        .map(|c| catalog.items_in(c).len() >= min_items)
        .collect();
    if keep.iter().all(|&k| k) {
        return catalog;
    }
    let mut remap = vec![None; keep.len()];
    let mut names = Vec::new();
    let (items, categories) = catalog.into_parts();
    for (c, name) in categories.into_iter().enumerate() {
        if keep[c] {
            remap[c] = Some(names.len());
            names.push(name);
        }
    }
    let items = items
        .into_iter()
        .filter_map(|mut item| {
            remap[item.category].map(|c| {
                item.category = c;
                item
            })
        })
        .collect();
    Catalog::new(items, names).expect("filtering preserves catalog validity")
}

/// Equal-depth price binning.
///
/// Items are ordered by (price, item_id) and the item at sorted position `r`
/// of `n` lands in bin `floor(r * bins / n)`. Items sharing a price share the
/// bin of the first of them.
pub fn discretize_prices(catalog: Catalog, bins: usize) -> Catalog {
    let bins = bins.max(1);
    let n = catalog.len();
    let mut order: Vec<ItemIdx> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (ia, ib) = (catalog.item(a), catalog.item(b));
        ia.price
            .total_cmp(&ib.price)
            .then_with(|| ia.item_id.cmp(&ib.item_id))
    });
    let mut assigned = vec![0usize; n];
    let mut prev: Option<(f64, usize)> = None;
    for (rank, &idx) in order.iter().enumerate() {
        let price = catalog.item(idx).price;
        let bin = match prev {
            Some((p, b)) if p == price => b,
            _ => rank * bins / n,
        };
        assigned[idx] = bin;
        prev = Some((price, bin));
    }
    let (mut items, categories) = catalog.into_parts();
    for (item, bin) in items.iter_mut().zip(assigned) {
        item.price_bin = Some(bin);
    }
    Catalog::new(items, categories).expect("binning preserves catalog validity")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PairBuildStats {
    pub input: usize,
    pub unresolved: usize,
    pub same_category: usize,
    pub duplicates: usize,
    pub kept: usize,
}

/// Resolves raw `(item_id, recommended_id)` rows into directed cross-category pairs.
///
/// Rows naming unknown items, intra-category rows and exact repeats are dropped
/// and counted. Direction is never symmetrized.
pub fn build_labeled_pairs(
    catalog: &Catalog,
    raw: &[(String, String)],
) -> (Vec<LabeledPair>, PairBuildStats) {
    let mut stats = PairBuildStats {
        input: raw.len(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for (seed_id, rec_id) in raw {
        let (Some(seed), Some(target)) = (catalog.index_of(seed_id), catalog.index_of(rec_id)) else {
            stats.unresolved += 1;
            continue;
        };
        let Ok(pair) = LabeledPair::new(catalog, seed, target) else {
            stats.same_category += 1;
            continue;
        };
        if !seen.insert((seed, target)) {
            stats.duplicates += 1;
            continue;
        }
        pairs.push(pair);
    }
    stats.kept = pairs.len();
    if stats.unresolved > 0 {
        log::info!("dropped {} pairs referencing unknown items", stats.unresolved);
    }
    (pairs, stats)
}

/// Complementary categories per seed category, by descending labeled-pair count
/// (ties by ascending category index).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplementaryCategoryMap {
    entries: Vec<Vec<(CategoryId, usize)>>,
}

impl ComplementaryCategoryMap {
    /// Builds from raw `(seed_category, target_category, count)` triples.
    pub fn from_counts(n_categories: usize, counts: impl IntoIterator<Item = (CategoryId, CategoryId, usize)>) -> Self {
        let mut entries = vec![Vec::new(); n_categories];
        for (s, t, n) in counts {
            if s != t && n > 0 {
                entries[s].push((t, n));
            }
        }
        for list in &mut entries {
            list.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        }
        ComplementaryCategoryMap { entries }
    }

    pub fn n_categories(&self) -> usize {
        self.entries.len()
    }

    /// `(category, count)` entries for seed category `c`, in rank order.
    pub fn complements(&self, c: CategoryId) -> &[(CategoryId, usize)] {
        self.entries.get(c).map_or(&[], Vec::as_slice)
    }

    pub fn categories(&self, c: CategoryId) -> Vec<CategoryId> {
        self.complements(c).iter().map(|&(t, _)| t).collect()
    }

    pub fn count(&self, seed_category: CategoryId, target_category: CategoryId) -> usize {
        self.complements(seed_category)
            .iter()
            .find(|&&(t, _)| t == target_category)
            .map_or(0, |&(_, n)| n)
    }

    /// Every `(seed_category, target_category, count)`, seed-major in rank order.
    pub fn iter(&self) -> impl Iterator<Item = (CategoryId, CategoryId, usize)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .flat_map(|(s, list)| list.iter().map(move |&(t, n)| (s, t, n)))
    }

    pub fn n_category_pairs(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }
}

pub fn derive_complementary_categories(catalog: &Catalog, pairs: &[LabeledPair]) -> ComplementaryCategoryMap {
    let n = catalog.n_categories();
    let mut counts = vec![0usize; n * n];
    for p in pairs {
        counts[catalog.category_of(p.seed) * n + p.target_category] += 1;
    }
    ComplementaryCategoryMap::from_counts(
        n,
        counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| (i / n, i % n, c)),
    )
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::data::catalog::tests::item;

    fn catalog_with_sizes(sizes: &[usize]) -> Catalog {
        let mut items = Vec::new();
        for (c, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                items.push(item(&format!("c{c}_{i}"), c, (i + 1) as f64));
            }
        }
        let names = (0..sizes.len()).map(|c| format!("cat{c}")).collect();
        Catalog::new(items, names).unwrap()
    }

    #[test]
    fn rare_category_removed() {
        let cat = filter_rare_categories(catalog_with_sizes(&[5, 4, 6]), 5);
        assert_eq!(cat.categories(), &["cat0".to_string(), "cat2".to_string()]);
        assert_eq!(cat.len(), 11);
        assert!(cat.index_of("c1_0").is_none());
        assert_eq!(cat.category_of(cat.index_of("c2_0").unwrap()), 1);
    }

    #[test]
    fn filter_noop_and_empty() {
        let cat = catalog_with_sizes(&[5, 7]);
        assert_eq!(filter_rare_categories(cat.clone(), 5), cat);
        assert!(filter_rare_categories(Catalog::empty(), 5).is_empty());
    }

    fn priced(prices: &[f64]) -> Catalog {
        let items = prices
            .iter()
            .enumerate()
            .map(|(i, &p)| item(&format!("i{i:03}"), 0, p))
            .collect();
        Catalog::new(items, vec!["c".into()]).unwrap()
    }

    fn bins_of(cat: &Catalog) -> Vec<usize> {
        cat.items().iter().map(|i| i.price_bin.unwrap()).collect()
    }

    #[test]
    fn one_item_per_bin_ordered_by_price() {
        let prices: Vec<f64> = (0..20).map(|i| ((i * 7) % 20) as f64 + 0.5).collect();
        let cat = discretize_prices(priced(&prices), 20);
        for (item, bin) in cat.items().iter().zip(bins_of(&cat)) {
            assert_eq!(bin, (item.price - 0.5) as usize);
        }
    }

    #[test]
    fn shared_price_lands_in_bin_zero() {
        let cat = discretize_prices(priced(&[3.0; 13]), 20);
        assert!(bins_of(&cat).iter().all(|&b| b == 0));
    }

    /// Sort-and-chunk: positions [k*n/bins, (k+1)*n/bins) form bin k.
    fn chunk_oracle(prices: &[f64], bins: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..prices.len()).collect();
        order.sort_by(|&a, &b| prices[a].partial_cmp(&prices[b]).unwrap());
        let n = prices.len();
        let mut out = vec![usize::MAX; n];
        for k in 0..bins {
            for &idx in &order[k * n / bins..(k + 1) * n / bins] {
                out[idx] = k;
            }
        }
        out
    }

    #[test]
    fn forty_items_two_per_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut prices: Vec<f64> = (0..40).map(|i| i as f64 * 1.5 + 0.25).collect();
        for i in (1..prices.len()).rev() {
            prices.swap(i, rng.random_range(0..=i));
        }
        let cat = discretize_prices(priced(&prices), 20);
        let bins = bins_of(&cat);
        assert_eq!(bins, chunk_oracle(&prices, 20));
        let mut counts = [0; 20];
        for b in bins {
            counts[b] += 1;
        }
        assert!(counts.iter().all(|&c| c == 2));
    }

    proptest! {
        #[test]
        fn equal_depth_occupancy(k in 1usize..6, bins in 1usize..25, seed in any::<u64>()) {
            let n = k * bins;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut prices: Vec<f64> = (0..n).map(|i| i as f64).collect();
            for i in (1..n).rev() {
                prices.swap(i, rng.random_range(0..=i));
            }
            let cat = discretize_prices(priced(&prices), bins);
            let b = bins_of(&cat);
            prop_assert_eq!(&b, &chunk_oracle(&prices, bins));
            let mut counts = vec![0usize; bins];
            for x in b { counts[x] += 1; }
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        }
    }

    fn shirts_pants() -> Catalog {
        let items = vec![
            item("shirt_1", 0, 1.0),
            item("shirt_2", 0, 1.0),
            item("pants_1", 1, 1.0),
            item("laptop_1", 2, 1.0),
            item("charger_1", 3, 1.0),
            item("belt_1", 4, 1.0),
        ];
        let names = ["shirts", "pants", "laptops", "chargers", "belts"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        Catalog::new(items, names).unwrap()
    }

    fn raw(rows: &[(&str, &str)]) -> Vec<(String, String)> {
        rows.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn labeled_pair_rules() {
        let cat = shirts_pants();
        let (pairs, stats) = build_labeled_pairs(
            &cat,
            &raw(&[
                ("shirt_1", "pants_1"),
                ("shirt_1", "shirt_2"),
                ("laptop_1", "charger_1"),
                ("ghost", "pants_1"),
                ("shirt_1", "pants_1"),
            ]),
        );
        assert_eq!(pairs.len(), 2);
        assert_eq!((pairs[0].seed, pairs[0].target), (0, 2));
        assert_eq!((pairs[1].seed, pairs[1].target), (3, 4));
        assert!(!pairs.iter().any(|p| p.seed == 4 && p.target == 3));
        assert_eq!(
            stats,
            PairBuildStats {
                input: 5,
                unresolved: 1,
                same_category: 1,
                duplicates: 1,
                kept: 2
            }
        );
    }

    #[test]
    fn complementary_categories_ordered_by_count() {
        let cat = shirts_pants();
        let mut pairs = vec![LabeledPair::new(&cat, 0, 5).unwrap()];
        for _ in 0..3 {
            pairs.push(LabeledPair::new(&cat, 0, 2).unwrap());
        }
        let map = derive_complementary_categories(&cat, &pairs);
        assert_eq!(map.categories(0), vec![1, 4]);
        assert_eq!(map.count(0, 1), 3);
        assert!(map.categories(1).is_empty());
        assert!(map.categories(3).is_empty());
    }

    #[test]
    fn complementary_counts_match_brute_force_tally() {
        let cat = catalog_with_sizes(&[6, 6, 6, 6, 6]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pairs = Vec::new();
        while pairs.len() < 100 {
            let (s, t) = (rng.random_range(0..cat.len()), rng.random_range(0..cat.len()));
            if let Ok(p) = LabeledPair::new(&cat, s, t) {
                pairs.push(p);
            }
        }
        let map = derive_complementary_categories(&cat, &pairs);

        let mut tally: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for p in &pairs {
            *tally.entry((cat.item(p.seed).category, cat.item(p.target).category)).or_default() += 1;
        }
        let got: BTreeMap<(usize, usize), usize> = map.iter().map(|(s, t, n)| ((s, t), n)).collect();
        assert_eq!(got, tally);
        for s in 0..cat.n_categories() {
            let counts: Vec<usize> = map.complements(s).iter().map(|e| e.1).collect();
            assert!(counts.windows(2).all(|w| w[0] >= w[1]));
            assert!(!map.categories(s).contains(&s));
        }
    }
}
