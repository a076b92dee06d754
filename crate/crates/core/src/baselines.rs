//! Popularity baseline: rank a category's items by how often they are the
//! labeled complement in the training pairs.

use std::collections::HashMap;

use crate::data::{Catalog, CategoryId, ItemIdx, LabeledPair};
use crate::error::Result;
use crate::retrieval::{check_target, sort_ranked, CategoryRanker, Recommendation, RecommendationList};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PopularityTable {
    counts: HashMap<ItemIdx, usize>,
}

impl PopularityTable {
    pub fn count(&self, item: ItemIdx) -> usize {
        self.counts.get(&item).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemIdx, usize)> + '_ {
        self.counts.iter().map(|(&i, &n)| (i, n))
    }
}

/// Tallies targets over `train_pairs` only.
pub fn build_popularity(train_pairs: &[LabeledPair]) -> PopularityTable {
    let mut counts = HashMap::new();
    for p in train_pairs {
        *counts.entry(p.target).or_insert(0) += 1;
    }
    PopularityTable { counts }
}

/// Items of `target` by descending count, then item id. Independent of the seed.
pub fn popularity_recommend(
    catalog: &Catalog,
    table: &PopularityTable,
    seed: ItemIdx,
    target: CategoryId,
    k: usize,
) -> Result<RecommendationList> {
    check_target(catalog, seed, target)?;
    let mut entries: Vec<Recommendation> = catalog
        .items_in(target)
        .iter()
        .map(|&item| Recommendation {
            item,
            category: target,
            score: table.count(item) as f64,
        })
        .collect();
    sort_ranked(catalog, &mut entries);
    entries.truncate(k);
    Ok(RecommendationList {
        seed,
        target_category: Some(target),
        entries,
    })
}

pub struct PopularityRanker<'a> {
    pub catalog: &'a Catalog,
    pub table: &'a PopularityTable,
}

impl<'a> PopularityRanker<'a> {
    pub fn new(catalog: &'a Catalog, table: &'a PopularityTable) -> Self {
        PopularityRanker { catalog, table }
    }
}

impl CategoryRanker for PopularityRanker<'_> {
    fn rank(&self, seed: ItemIdx, category: CategoryId, k: usize) -> Result<RecommendationList> {
        popularity_recommend(self.catalog, self.table, seed, category, k)
    }
}
