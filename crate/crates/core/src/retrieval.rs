//! Per-category latent indices and category-constrained top-k retrieval.

use std::cmp::Ordering;
use std::io::Write;

use crate::data::{Catalog, CategoryId, ComplementaryCategoryMap, ItemIdx};
use crate::error::{Error, Result};
use crate::math::ops;
use crate::model::Alcir;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Recommendation {
    pub item: ItemIdx,
    pub category: CategoryId,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecommendationList {
    pub seed: ItemIdx,
    /// `None` for round-robin lists spanning several categories.
    pub target_category: Option<CategoryId>,
    pub entries: Vec<Recommendation>,
}

impl RecommendationList {
    /// Zero-based rank of `item`.
    pub fn position(&self, item: ItemIdx) -> Option<usize> {
        self.entries.iter().position(|r| r.item == item)
    }

    pub fn items(&self) -> impl Iterator<Item = ItemIdx> + '_ {
        self.entries.iter().map(|r| r.item)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Anything that can rank the items of one category for a seed.
pub trait CategoryRanker {
    /// Top `k` items of `category` for `seed`, best first. `k` larger than the
    /// category returns the whole category.
    fn rank(&self, seed: ItemIdx, category: CategoryId, k: usize) -> Result<RecommendationList>;
}

impl<F> CategoryRanker for F
where
    F: Fn(ItemIdx, CategoryId, usize) -> Result<RecommendationList>,
{
    fn rank(&self, seed: ItemIdx, category: CategoryId, k: usize) -> Result<RecommendationList> {
        self(seed, category, k)
    }
}

/// Descending score, then ascending item id.
pub(crate) fn sort_ranked(catalog: &Catalog, entries: &mut [Recommendation]) {
    entries.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| catalog.item(a.item).item_id.cmp(&catalog.item(b.item).item_id))
    });
}

#[derive(Clone, Debug, PartialEq)]
struct CategoryRows<T> {
    items: Vec<ItemIdx>,
    rows: Vec<T>,
    norms: Vec<T>,
}

/// Encoder outputs of every catalog item, grouped by category.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryIndex<T> {
    latent_dim: usize,
    categories: Vec<CategoryRows<T>>,
}

impl<T: Scalar> CategoryIndex<T> {
    /// Encodes every catalog item once.
    pub fn build<M: Scalar>(catalog: &Catalog, model: &Alcir<M>) -> Result<Self> {
        let vectors = catalog
            .items()
            .iter()
            .map(|item| {
                model
                    .encode_value(item)
                    .map(|v| v.into_iter().map(|x| T::lit(x.as_f64())).collect())
            })
            .collect::<Result<Vec<Vec<T>>>>()?;
        Self::from_vectors(catalog, model.config().latent_dim(), vectors)
    }

    /// Index over precomputed per-item vectors, one per catalog item in order.
    pub fn from_vectors(catalog: &Catalog, latent_dim: usize, vectors: Vec<Vec<T>>) -> Result<Self> {
        if vectors.len() != catalog.len() {
            return Err(Error::Dimension(format!(
                "{} vectors for {} items",
                vectors.len(),
                catalog.len()
            )));
        }
        let mut categories = Vec::with_capacity(catalog.n_categories());
        for c in 0..catalog.n_categories() {
            let items = catalog.items_in(c).to_vec();
            let mut rows = Vec::with_capacity(items.len() * latent_dim);
            let mut norms = Vec::with_capacity(items.len());
            for &i in &items {
                let v = &vectors[i];
                if v.len() != latent_dim {
                    return Err(Error::Dimension(format!(
                        "vector of width {} for item `{}`, expected {latent_dim}",
                        v.len(),
                        catalog.item(i).item_id
                    )));
                }
                norms.push(ops::norm(v));
                rows.extend_from_slice(v);
            }
            categories.push(CategoryRows { items, rows, norms });
        }
        Ok(CategoryIndex { latent_dim, categories })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn row_count(&self, c: CategoryId) -> usize {
        self.categories[c].items.len()
    }

    pub fn items(&self, c: CategoryId) -> &[ItemIdx] {
        &self.categories[c].items
    }

    pub fn row(&self, c: CategoryId, r: usize) -> &[T] {
        &self.categories[c].rows[r * self.latent_dim..(r + 1) * self.latent_dim]
    }

    /// Cosine of `query` against every row of `c`, in row order. Zero-norm rows
    /// score 0.
    pub fn scores(&self, query: &[T], c: CategoryId) -> Result<Vec<f64>> {
        let cat = self
            .categories
            .get(c)
            .ok_or_else(|| Error::UnknownCategory(format!("category index {c}")))?;
        if query.len() != self.latent_dim {
            return Err(Error::Dimension(format!(
                "query width {}, index width {}",
                query.len(),
                self.latent_dim
            )));
        }
        let qn = ops::norm(query);
        if qn == T::zero() {
            return Err(Error::DegenerateVector("zero-norm query".into()));
        }
        Ok((0..cat.items.len())
            .map(|r| {
                let n = cat.norms[r];
                if n == T::zero() {
                    0.0
                } else {
                    (ops::dot(query, self.row(c, r)) / (qn * n)).as_f64()
                }
            })
            .collect())
    }

    /// Top `k` rows of `c` by cosine to `query`; ties by item id.
    pub fn top_k(&self, catalog: &Catalog, query: &[T], c: CategoryId, k: usize) -> Result<Vec<Recommendation>> {
        let scores = self.scores(query, c)?;
        let mut entries: Vec<Recommendation> = self.categories[c]
            .items
            .iter()
            .zip(scores)
            .map(|(&item, score)| Recommendation {
                item,
                category: c,
                score,
            })
            .collect();
        sort_ranked(catalog, &mut entries);
        entries.truncate(k);
        Ok(entries)
    }
}

/// Category-constrained retrieval with a trained model.
pub struct AlcirRanker<'a, T: Scalar, S: Scalar = T> {
    pub catalog: &'a Catalog,
    pub model: &'a Alcir<T>,
    pub index: &'a CategoryIndex<S>,
}

impl<'a, T: Scalar, S: Scalar> AlcirRanker<'a, T, S> {
    pub fn new(catalog: &'a Catalog, model: &'a Alcir<T>, index: &'a CategoryIndex<S>) -> Self {
        AlcirRanker { catalog, model, index }
    }
}

impl<T: Scalar, S: Scalar> CategoryRanker for AlcirRanker<'_, T, S> {
    fn rank(&self, seed: ItemIdx, category: CategoryId, k: usize) -> Result<RecommendationList> {
        recommend(self.catalog, self.model, self.index, seed, category, k)
    }
}

pub(crate) fn check_target(catalog: &Catalog, seed: ItemIdx, target: CategoryId) -> Result<()> {
    if target >= catalog.n_categories() {
        return Err(Error::UnknownCategory(format!("category index {target}")));
    }
    let own = catalog.category_of(seed);
    if own == target {
        return Err(Error::Constraint(format!(
            "seed `{}` is itself in category `{}`; complements must come from another category",
            catalog.item(seed).item_id,
            catalog.category_name(own)
        )));
    }
    Ok(())
}

/// The `k` items of `target` closest in cosine to the translated seed.
pub fn recommend<T: Scalar, S: Scalar>(
    catalog: &Catalog,
    model: &Alcir<T>,
    index: &CategoryIndex<S>,
    seed: ItemIdx,
    target: CategoryId,
    k: usize,
) -> Result<RecommendationList> {
    check_target(catalog, seed, target)?;
    let query: Vec<S> = model
        .translate_value(catalog.item(seed), target)?
        .into_iter()
        .map(|x| S::lit(x.as_f64()))
        .collect();
    Ok(RecommendationList {
        seed,
        target_category: Some(target),
        entries: index.top_k(catalog, &query, target, k)?,
    })
}

/// Interleaves per-category rankings: one item from each ranking per pass, in
/// the given order, until `k` items are taken or every ranking is exhausted.
pub fn round_robin(seed: ItemIdx, rankings: &[Vec<Recommendation>], k: usize) -> RecommendationList {
    let mut entries = Vec::new();
    let mut depth = 0;
    while entries.len() < k {
        let mut any = false;
        for r in rankings {
            if let Some(&e) = r.get(depth) {
                any = true;
                entries.push(e);
                if entries.len() == k {
                    break;
                }
            }
        }
        if !any {
            break;
        }
        depth += 1;
    }
    RecommendationList {
        seed,
        target_category: None,
        entries,
    }
}

/// Round-robin recommendations over the seed category's complementary
/// categories, in the map's rank order.
pub fn recommend_multi<R: CategoryRanker + ?Sized>(
    ranker: &R,
    catalog: &Catalog,
    cc_map: &ComplementaryCategoryMap,
    seed: ItemIdx,
    k: usize,
) -> Result<RecommendationList> {
    let own = catalog.category_of(seed);
    let cats: Vec<CategoryId> = cc_map.categories(own).into_iter().filter(|&c| c != own).collect();
    if cats.is_empty() {
        log::warn!(
            "category `{}` has no complementary categories; returning an empty list",
            catalog.category_name(own)
        );
    }
    let rankings = cats
        .iter()
        .map(|&c| ranker.rank(seed, c, k).map(|l| l.entries))
        .collect::<Result<Vec<_>>>()?;
    Ok(round_robin(seed, &rankings, k))
}

/// Writes `seed_id,rank,item_id,category,score` rows; ranks start at 1.
pub fn write_recommendations<W: Write>(out: W, catalog: &Catalog, lists: &[RecommendationList]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed_id", "rank", "item_id", "category", "score"])?;
    for list in lists {
        let seed_id = &catalog.item(list.seed).item_id;
        for (rank, r) in list.entries.iter().enumerate() {
            w.write_record([
                seed_id.as_str(),
                &(rank + 1).to_string(),
                &catalog.item(r.item).item_id,
                catalog.category_name(r.category),
                &format!("{:.6}", r.score),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Io {
        path: "<recommendations>".into(),
        source: e,
    })
}
