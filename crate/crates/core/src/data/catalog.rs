use std::collections::HashMap;

use crate::error::{Error, Result};

pub type CategoryId = usize;
pub type ItemIdx = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct ItemRecord {
    pub item_id: String,
    pub category: CategoryId,
    pub price: f64,
    /// Set by [`discretize_prices`](super::discretize_prices).
    pub price_bin: Option<usize>,
    pub image_features: Vec<f32>,
}

/// Items, category names, and the per-category item lists.
#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    items: Vec<ItemRecord>,
    categories: Vec<String>,
    items_by_category: Vec<Vec<ItemIdx>>,
    by_id: HashMap<String, ItemIdx>,
    feature_width: usize,
}

impl Catalog {
    pub fn new(items: Vec<ItemRecord>, categories: Vec<String>) -> Result<Self> {
        let feature_width = items.first().map_or(0, |i| i.image_features.len());
        let mut by_id = HashMap::with_capacity(items.len());
        let mut items_by_category = vec![Vec::new(); categories.len()];
        for (idx, item) in items.iter().enumerate() {
            if item.category >= categories.len() {
                return Err(Error::Ingestion(format!(
                    "item `{}` has category index {} but only {} categories exist",
                    item.item_id,
                    item.category,
                    categories.len()
                )));
            }
            if item.image_features.len() != feature_width {
                return Err(Error::Ingestion(format!(
                    "item `{}` has feature width {}, expected {feature_width}",
                    item.item_id,
                    item.image_features.len()
                )));
            }
            if !(item.price >= 0.0 && item.price.is_finite()) {
                return Err(Error::Ingestion(format!(
                    "item `{}` has invalid price {}",
                    item.item_id, item.price
                )));
            }
            if by_id.insert(item.item_id.clone(), idx).is_some() {
                return Err(Error::Ingestion(format!("duplicate item_id `{}`", item.item_id)));
            }
            items_by_category[item.category].push(idx);
        }
        Ok(Catalog {
            items,
            categories,
            items_by_category,
            by_id,
            feature_width,
        })
    }

    pub fn empty() -> Self {
        Catalog::new(Vec::new(), Vec::new()).expect("empty catalog is valid")
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn item(&self, idx: ItemIdx) -> &ItemRecord {
        &self.items[idx]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn category_name(&self, c: CategoryId) -> &str {
        &self.categories[c]
    }

    pub fn category_index(&self, name: &str) -> Result<CategoryId> {
        self.categories
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownCategory(name.to_string()))
    }

    /// Item indices of category `c`, in catalog order.
    pub fn items_in(&self, c: CategoryId) -> &[ItemIdx] {
        &self.items_by_category[c]
    }

    pub fn index_of(&self, item_id: &str) -> Option<ItemIdx> {
        self.by_id.get(item_id).copied()
    }

    pub fn require(&self, item_id: &str) -> Result<ItemIdx> {
        self.index_of(item_id)
            .ok_or_else(|| Error::UnknownItem(item_id.to_string()))
    }

    pub fn category_of(&self, idx: ItemIdx) -> CategoryId {
        self.items[idx].category
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    /// Number of price bins in use (max bin + 1), or 0 before discretization.
    pub fn n_price_bins(&self) -> usize {
        self.items
            .iter()
            .filter_map(|i| i.price_bin)
            .max()
            .map_or(0, |m| m + 1)
    }

    pub(crate) fn into_parts(self) -> (Vec<ItemRecord>, Vec<String>) {
        (self.items, self.categories)
    }
}

/// A directed (seed, complement) supervision instance over catalog indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledPair {
    pub seed: ItemIdx,
    pub target: ItemIdx,
    pub target_category: CategoryId,
}

impl LabeledPair {
    /// Builds a pair, rejecting intra-category pairs.
    pub fn new(catalog: &Catalog, seed: ItemIdx, target: ItemIdx) -> Result<Self> {
        let (cs, ct) = (catalog.category_of(seed), catalog.category_of(target));
        if cs == ct {
            return Err(Error::Constraint(format!(
                "`{}` and `{}` share category `{}`",
                catalog.item(seed).item_id,
                catalog.item(target).item_id,
                catalog.category_name(cs)
            )));
        }
        Ok(LabeledPair {
            seed,
            target,
            target_category: ct,
        })
    }
}
