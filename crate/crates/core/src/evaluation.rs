//! HR@k, NDCG and catalog coverage; the category-aware and category-unaware
//! protocols; the per-label-count bin analysis.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Catalog, CategoryId, ComplementaryCategoryMap, DatasetSplit, ItemIdx, LabeledPair};
use crate::error::{Error, Result};
use crate::retrieval::{recommend_multi, CategoryRanker, RecommendationList};

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];
/// List depth used for catalog coverage.
pub const COVERAGE_K: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Candidates come from the labeled target's category only.
    #[default]
    CategoryAware,
    /// Candidates interleave all complementary categories of the seed.
    CategoryUnaware,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::CategoryAware => "category_aware",
            Protocol::CategoryUnaware => "category_unaware",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "category_aware" => Ok(Protocol::CategoryAware),
            "category_unaware" => Ok(Protocol::CategoryUnaware),
            other => Err(Error::Config(format!("unknown protocol `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ndcg: f64,
    pub hr: BTreeMap<usize, f64>,
    pub coverage: f64,
    pub n_test_cases: usize,
}

impl MetricsReport {
    pub fn hr(&self, k: usize) -> f64 {
        self.hr.get(&k).copied().unwrap_or(f64::NAN)
    }
}

/// 1 when `relevant` is among the first `k` entries.
pub fn hit_rate_at_k(list: &RecommendationList, relevant: ItemIdx, k: usize) -> f64 {
    match list.position(relevant) {
        Some(pos) if pos < k => 1.0,
        _ => 0.0,
    }
}

/// `1 / log2(1 + rank)` for the single relevant item at 1-based `rank`, 0 when
/// absent. With one relevant item the ideal DCG is 1.
pub fn ndcg_single(list: &RecommendationList, relevant: ItemIdx) -> f64 {
    list.position(relevant)
        .map_or(0.0, |pos| 1.0 / ((pos + 2) as f64).log2())
}

/// Distinct items in the first `k` entries of any list, over the catalog size.
pub fn catalog_coverage(lists: &[RecommendationList], catalog: &Catalog, k: usize) -> Result<f64> {
    if catalog.is_empty() {
        return Err(Error::Empty("coverage over an empty catalog".into()));
    }
    let seen: HashSet<ItemIdx> = lists.iter().flat_map(|l| l.items().take(k)).collect();
    Ok(seen.len() as f64 / catalog.len() as f64)
}

/// Pairwise (cascade) summation in index order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Mean metrics over `test` pairs; each pair is one test case ranked against
/// the full candidate pool of the protocol.
pub fn evaluate<R: CategoryRanker + ?Sized>(
    ranker: &R,
    catalog: &Catalog,
    cc_map: &ComplementaryCategoryMap,
    test: &[LabeledPair],
    protocol: Protocol,
    ks: &[usize],
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::Empty("no test cases to evaluate".into()));
    }
    // one ranking per (seed, category) or per seed
    let mut lists: BTreeMap<(ItemIdx, Option<CategoryId>), RecommendationList> = BTreeMap::new();
    for p in test {
        let key = match protocol {
            Protocol::CategoryAware => (p.seed, Some(p.target_category)),
            Protocol::CategoryUnaware => (p.seed, None),
        };
        if lists.contains_key(&key) {
            continue;
        }
        let list = match protocol {
            Protocol::CategoryAware => ranker.rank(p.seed, p.target_category, usize::MAX)?,
            Protocol::CategoryUnaware => recommend_multi(ranker, catalog, cc_map, p.seed, usize::MAX)?,
        };
        lists.insert(key, list);
    }
    let case_list = |p: &LabeledPair| -> &RecommendationList {
        let key = match protocol {
            Protocol::CategoryAware => (p.seed, Some(p.target_category)),
            Protocol::CategoryUnaware => (p.seed, None),
        };
        &lists[&key]
    };

    let ndcgs: Vec<f64> = test.iter().map(|p| ndcg_single(case_list(p), p.target)).collect();
    let hr = ks
        .iter()
        .map(|&k| {
            let hits: Vec<f64> = test.iter().map(|p| hit_rate_at_k(case_list(p), p.target, k)).collect();
            (k, mean(&hits))
        })
        .collect();
    let all: Vec<RecommendationList> = lists.into_values().collect();
    Ok(MetricsReport {
        ndcg: mean(&ndcgs),
        hr,
        coverage: catalog_coverage(&all, catalog, COVERAGE_K)?,
        n_test_cases: test.len(),
    })
}

/// Category pair `(seed category, target category)`.
pub type CategoryPair = (CategoryId, CategoryId);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelBin {
    pub category_pairs: Vec<CategoryPair>,
    pub min_count: usize,
    pub max_count: usize,
    pub metrics: MetricsReport,
}

/// Bins in ascending order of labeled-pair count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub bins: Vec<LabelBin>,
}

/// Sorts category pairs by ascending count (ties by pair) and cuts them into
/// `bins` contiguous chunks of as-equal-as-possible size. Fewer pairs than bins
/// reduces the bin count.
pub fn assign_label_bins(counts: &[(CategoryPair, usize)], bins: usize) -> Vec<Vec<(CategoryPair, usize)>> {
    let mut sorted = counts.to_vec();
    sorted.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    let n = sorted.len();
    let bins = bins.min(n);
    (0..bins)
        .map(|b| sorted[b * n / bins..(b + 1) * n / bins].to_vec())
        .collect()
}

/// Category-aware metrics per bin of category pairs, binned by the number of
/// training pairs per category pair. Only category pairs with test cases are binned.
pub fn evaluate_by_label_bins<R: CategoryRanker + ?Sized>(
    ranker: &R,
    catalog: &Catalog,
    cc_map: &ComplementaryCategoryMap,
    split: &DatasetSplit,
    bins: usize,
) -> Result<BinReport> {
    let pair_of = |p: &LabeledPair| (catalog.category_of(p.seed), p.target_category);
    let mut train_counts: HashMap<CategoryPair, usize> = HashMap::new();
    for p in &split.train {
        *train_counts.entry(pair_of(p)).or_default() += 1;
    }
    let tested: Vec<CategoryPair> = split
        .test
        .iter()
        .map(pair_of)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if tested.is_empty() {
        return Err(Error::Empty("no test cases to bin".into()));
    }
    if tested.len() < bins {
        log::warn!(
            "only {} category pairs with test cases; using {} bins instead of {bins}",
            tested.len(),
            tested.len()
        );
    }
    let counts: Vec<(CategoryPair, usize)> = tested
        .iter()
        .map(|cp| (*cp, train_counts.get(cp).copied().unwrap_or(0)))
        .collect();
    let mut out = Vec::new();
    for chunk in assign_label_bins(&counts, bins) {
        let members: HashSet<CategoryPair> = chunk.iter().map(|e| e.0).collect();
        let cases: Vec<LabeledPair> = split
            .test
            .iter()
            .filter(|p| members.contains(&pair_of(p)))
            .copied()
            .collect();
        out.push(LabelBin {
            category_pairs: chunk.iter().map(|e| e.0).collect(),
            min_count: chunk.iter().map(|e| e.1).min().unwrap_or(0),
            max_count: chunk.iter().map(|e| e.1).max().unwrap_or(0),
            metrics: evaluate(ranker, catalog, cc_map, &cases, Protocol::CategoryAware, &DEFAULT_KS)?,
        });
    }
    Ok(BinReport { bins: out })
}

/// `label,ndcg,hr@1,hr@5,hr@10,coverage,n_test_cases` rows.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[(String, &MetricsReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "ndcg", "hr@1", "hr@5", "hr@10", "coverage", "n_test_cases"])?;
    for (label, m) in rows {
        w.write_record([
            label.clone(),
            format!("{:.6}", m.ndcg),
            format!("{:.6}", m.hr(1)),
            format!("{:.6}", m.hr(5)),
            format!("{:.6}", m.hr(10)),
            format!("{:.6}", m.coverage),
            m.n_test_cases.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<metrics>".into(),
        source: e,
    })
}

/// `bin,min_count,max_count,n_category_pairs,ndcg,hr@1,hr@5,hr@10,coverage,n_test_cases`.
pub fn write_bins_csv<W: Write>(out: W, report: &BinReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "bin",
        "min_count",
        "max_count",
        "n_category_pairs",
        "ndcg",
        "hr@1",
        "hr@5",
        "hr@10",
        "coverage",
        "n_test_cases",
    ])?;
    for (i, b) in report.bins.iter().enumerate() {
        let m = &b.metrics;
        w.write_record([
            i.to_string(),
            b.min_count.to_string(),
            b.max_count.to_string(),
            b.category_pairs.len().to_string(),
            format!("{:.6}", m.ndcg),
            format!("{:.6}", m.hr(1)),
            format!("{:.6}", m.hr(5)),
            format!("{:.6}", m.hr(10)),
            format!("{:.6}", m.coverage),
            m.n_test_cases.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<bins>".into(),
        source: e,
    })
}

/// Aligned text table: NDCG, HR@1, HR@5, HR@10, Cov%.
pub fn format_table(rows: &[(String, &MetricsReport)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(5);
    let mut s = format!(
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n",
        "model", "NDCG", "HR@1", "HR@5", "HR@10", "Cov%"
    );
    for (label, m) in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.2}",
            label,
            m.ndcg,
            m.hr(1),
            m.hr(5),
            m.hr(10),
            100.0 * m.coverage
        );
    }
    s
}
