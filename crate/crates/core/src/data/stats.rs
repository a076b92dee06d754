use std::collections::HashSet;

use super::catalog::{Catalog, LabeledPair};

/// Dataset summary in the usual reporting order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetStats {
    pub items: usize,
    pub item_pairs: usize,
    pub categories: usize,
    /// Distinct directed `(seed category, target category)` pairs.
    pub category_pairs: usize,
    pub avg_items_per_category: f64,
    pub max_items_per_category: usize,
    pub min_items_per_category: usize,
}

impl DatasetStats {
    pub fn compute(catalog: &Catalog, pairs: &[LabeledPair]) -> Self {
        let sizes: Vec<usize> = (0..catalog.n_categories()).map(|c| catalog.items_in(c).len()).collect();
        let category_pairs: HashSet<_> = pairs
            .iter()
            .map(|p| (catalog.category_of(p.seed), p.target_category))
            .collect();
        DatasetStats {
            items: catalog.len(),
            item_pairs: pairs.len(),
            categories: sizes.len(),
            category_pairs: category_pairs.len(),
            avg_items_per_category: if sizes.is_empty() {
                0.0
            } else {
                catalog.len() as f64 / sizes.len() as f64
            },
            max_items_per_category: sizes.iter().copied().max().unwrap_or(0),
            min_items_per_category: sizes.iter().copied().min().unwrap_or(0),
        }
    }

    /// `(label, value)` rows.
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        vec![
            ("#items", self.items.to_string()),
            ("#item pairs", self.item_pairs.to_string()),
            ("#categories", self.categories.to_string()),
            ("#category pairs", self.category_pairs.to_string()),
            ("Avg. items per category", format!("{:.1}", self.avg_items_per_category)),
            ("Max items per category", self.max_items_per_category.to_string()),
            ("Min items per category", self.min_items_per_category.to_string()),
        ]
    }
}
