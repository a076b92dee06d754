use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::DenseArray;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a parameter registered in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable arrays, in registration order.
///
/// Initialization draws from a ChaCha stream seeded by `rng_seed`, so the same
/// sequence of registrations always produces the same values.
#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    paths: Vec<String>,
    arrays: Vec<DenseArray<T>>,
    lookup: HashMap<String, ParamId>,
    rng: ChaCha8Rng,
    rng_seed: u64,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(rng_seed: u64) -> Self {
        ParamStore {
            paths: Vec::new(),
            arrays: Vec::new(),
            lookup: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            rng_seed,
        }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Registers an array under a fresh path.
    pub fn insert(&mut self, path: &str, array: DenseArray<T>) -> Result<ParamId> {
        if self.lookup.contains_key(path) {
            return Err(Error::Config(format!("duplicate parameter path `{path}`")));
        }
        let id = ParamId(self.arrays.len());
        self.paths.push(path.to_string());
        self.arrays.push(array);
        self.lookup.insert(path.to_string(), id);
        Ok(id)
    }

    /// `rows x cols` matrix, uniform in ±sqrt(6 / (rows + cols)).
    pub fn insert_glorot(&mut self, path: &str, rows: usize, cols: usize) -> Result<ParamId> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let values = (0..rows * cols)
            .map(|_| T::lit(self.rng.random_range(-bound..bound)))
            .collect();
        let array = DenseArray::new(vec![rows, cols], values)?;
        self.insert(path, array)
    }

    pub fn insert_zeros(&mut self, path: &str, shape: Vec<usize>) -> Result<ParamId> {
        let array = DenseArray::zeros(shape)?;
        self.insert(path, array)
    }

    pub fn id(&self, path: &str) -> Result<ParamId> {
        self.lookup
            .get(path)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(path.to_string()))
    }

    pub fn path(&self, id: ParamId) -> &str {
        &self.paths[id.0]
    }

    pub fn get(&self, id: ParamId) -> &DenseArray<T> {
        &self.arrays[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut DenseArray<T> {
        &mut self.arrays[id.0]
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.arrays.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &DenseArray<T>)> {
        self.arrays
            .iter()
            .enumerate()
            .map(|(i, a)| (ParamId(i), self.paths[i].as_str(), a))
    }

    /// Paths starting with `prefix`.
    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.paths
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.starts_with(prefix))
            .map(|(i, _)| ParamId(i))
    }

    /// Flattened copy of every value, in registration order.
    pub fn flatten(&self) -> Vec<T> {
        self.arrays.iter().flat_map(|a| a.as_slice().iter().copied()).collect()
    }
}
