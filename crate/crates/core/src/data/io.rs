//! File formats: item metadata CSV, binary feature matrix, pair and split CSVs.
//!
//! Feature file layout (little-endian): magic `ALCF`, `u32` version, `u32` row
//! count, `u32` width, then `rows * width` `f32` values, rows in the same order
//! as the item metadata CSV.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::catalog::{Catalog, ItemRecord, LabeledPair};
use super::preprocess::ComplementaryCategoryMap;
use super::split::DatasetSplit;
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"ALCF";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ItemRow {
    item_id: String,
    category: String,
    price: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    price_bin: Option<usize>,
}

pub fn write_features(path: &Path, rows: &[&[f32]], width: usize) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(FEATURE_MAGIC)?;
    write(&FEATURE_VERSION.to_le_bytes())?;
    write(&(rows.len() as u32).to_le_bytes())?;
    write(&(width as u32).to_le_bytes())?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Ingestion(format!(
                "feature row {i} has width {}, expected {width}",
                row.len()
            )));
        }
        for v in row.iter() {
            write(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a feature file into `(width, rows)`.
pub fn read_features(path: &Path) -> Result<(usize, Vec<Vec<f32>>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::Ingestion(format!(
            "{}: not a feature file (bad magic or truncated header)",
            path.display()
        )));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (version, rows, width) = (word(4), word(8), word(12));
    if version != FEATURE_VERSION as usize {
        return Err(Error::Ingestion(format!(
            "{}: unsupported feature file version {version}",
            path.display()
        )));
    }
    if width == 0 {
        return Err(Error::Ingestion(format!("{}: zero feature width", path.display())));
    }
    let payload = &bytes[16..];
    if payload.len() != rows * width * 4 {
        return Err(Error::Ingestion(format!(
            "{}: width mismatch: header declares {rows} rows of width {width} ({} bytes) but payload has {} bytes",
            path.display(),
            rows * width * 4,
            payload.len()
        )));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((width, values.chunks_exact(width).map(<[f32]>::to_vec).collect()))
}

/// Reads item metadata and features into a catalog.
///
/// Category indices follow the lexicographic order of category names. A
/// `price_bin` column, when present, is carried over.
pub fn load_catalog(items_path: &Path, features_path: &Path) -> Result<Catalog> {
    let mut reader = csv::Reader::from_path(items_path).map_err(|e| with_path(items_path, e))?;
    let rows: Vec<ItemRow> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| with_path(items_path, e))?;
    let (width, features) = read_features(features_path)?;
    if features.len() < rows.len() {
        return Err(Error::Ingestion(format!(
            "item `{}` has no feature row ({} feature rows for {} items)",
            rows[features.len()].item_id,
            features.len(),
            rows.len()
        )));
    }
    if features.len() > rows.len() {
        return Err(Error::Ingestion(format!(
            "{} feature rows but only {} items",
            features.len(),
            rows.len()
        )));
    }
    let names: Vec<String> = rows
        .iter()
        .map(|r| r.category.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let items = rows
        .into_iter()
        .zip(features)
        .map(|(row, image_features)| {
            debug_assert_eq!(image_features.len(), width);
            ItemRecord {
                category: names.binary_search(&row.category).expect("name collected above"),
                item_id: row.item_id,
                price: row.price,
                price_bin: row.price_bin,
                image_features,
            }
        })
        .collect();
    Catalog::new(items, names)
}

/// Writes the metadata CSV (with `price_bin` when assigned) and the feature file.
pub fn write_catalog(catalog: &Catalog, items_path: &Path, features_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(items_path).map_err(|e| with_path(items_path, e))?;
    let binned = catalog.items().iter().all(|i| i.price_bin.is_some()) && !catalog.is_empty();
    for item in catalog.items() {
        w.serialize(ItemRow {
            item_id: item.item_id.clone(),
            category: catalog.category_name(item.category).to_string(),
            price: item.price,
            price_bin: if binned { item.price_bin } else { None },
        })
        .map_err(|e| with_path(items_path, e))?;
    }
    w.flush().map_err(|e| Error::io(items_path, e))?;
    let rows: Vec<&[f32]> = catalog.items().iter().map(|i| i.image_features.as_slice()).collect();
    write_features(features_path, &rows, catalog.feature_width())
}

#[derive(Debug, Serialize, Deserialize)]
struct RecommendationRow {
    item_id: String,
    recommended_id: String,
}

/// Raw `item_id,recommended_id` rows.
pub fn read_raw_recommendations(path: &Path) -> Result<Vec<(String, String)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| with_path(path, e))?;
    reader
        .deserialize::<RecommendationRow>()
        .map(|r| r.map(|r| (r.item_id, r.recommended_id)).map_err(|e| with_path(path, e)))
        .collect()
}

pub fn write_raw_recommendations(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| with_path(path, e))?;
    for (a, b) in rows {
        w.serialize(RecommendationRow {
            item_id: a.clone(),
            recommended_id: b.clone(),
        })
        .map_err(|e| with_path(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitRow {
    split: String,
    seed_id: String,
    target_id: String,
    target_category: String,
}

/// Split manifest: `split,seed_id,target_id,target_category`, one row per pair.
pub fn write_split(path: &Path, catalog: &Catalog, split: &DatasetSplit) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| with_path(path, e))?;
    for (name, pairs) in [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        for p in pairs {
            w.serialize(SplitRow {
                split: name.to_string(),
                seed_id: catalog.item(p.seed).item_id.clone(),
                target_id: catalog.item(p.target).item_id.clone(),
                target_category: catalog.category_name(p.target_category).to_string(),
            })
            .map_err(|e| with_path(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_split(path: &Path, catalog: &Catalog) -> Result<DatasetSplit> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| with_path(path, e))?;
    let mut split = DatasetSplit::default();
    for row in reader.deserialize::<SplitRow>() {
        let row = row.map_err(|e| with_path(path, e))?;
        let seed = catalog.require(&row.seed_id)?;
        let target = catalog.require(&row.target_id)?;
        let pair = LabeledPair::new(catalog, seed, target)?;
        if catalog.category_name(pair.target_category) != row.target_category {
            return Err(Error::Ingestion(format!(
                "pair ({}, {}) lists category `{}` but the target is in `{}`",
                row.seed_id,
                row.target_id,
                row.target_category,
                catalog.category_name(pair.target_category)
            )));
        }
        match row.split.as_str() {
            "train" => split.train.push(pair),
            "validation" => split.validation.push(pair),
            "test" => split.test.push(pair),
            other => return Err(Error::Ingestion(format!("unknown split name `{other}`"))),
        }
    }
    Ok(split)
}

#[derive(Debug, Serialize, Deserialize)]
struct CategoryRow {
    seed_category: String,
    complementary_category: String,
    count: usize,
}

/// `seed_category,complementary_category,count`, in rank order.
pub fn write_category_map(path: &Path, catalog: &Catalog, map: &ComplementaryCategoryMap) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| with_path(path, e))?;
    for (s, t, n) in map.iter() {
        w.serialize(CategoryRow {
            seed_category: catalog.category_name(s).to_string(),
            complementary_category: catalog.category_name(t).to_string(),
            count: n,
        })
        .map_err(|e| with_path(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_category_map(path: &Path, catalog: &Catalog) -> Result<ComplementaryCategoryMap> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| with_path(path, e))?;
    let mut counts = Vec::new();
    for row in reader.deserialize::<CategoryRow>() {
        let row = row.map_err(|e| with_path(path, e))?;
        counts.push((
            catalog.category_index(&row.seed_category)?,
            catalog.category_index(&row.complementary_category)?,
            row.count,
        ));
    }
    Ok(ComplementaryCategoryMap::from_counts(catalog.n_categories(), counts))
}

fn with_path(path: &Path, e: csv::Error) -> Error {
    Error::Ingestion(format!("{}: {e}", path.display()))
}
