//! Named parameter storage, the `LCNW` binary file format, and a seeded
//! initializer for running the network without trained weights.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic        b"LCNW"
//! version      u32 = 1
//! array_count  u32
//! per array:
//!   name_len   u16
//!   name       name_len bytes, UTF-8
//!   dtype      u8  (0 = f32)
//!   rank       u8
//!   dims       rank x u32
//!   payload    product(dims) x f32
//! ```

mod format;
mod init;
mod rng;

use indexmap::IndexMap;

use crate::error::{Error, Result};

pub use format::{from_bytes, load_weights, save_weights, to_bytes, FORMAT_VERSION, MAGIC};
pub use init::{parameter_layout, random_init, zero_init};
pub use rng::SplitMix64;

/// Only 32-bit floats are defined.
pub const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightArray {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl WeightArray {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected =
            element_count(&dims).ok_or_else(|| Error::Usage(format!("dims {dims:?} overflow")))?;
        if expected != data.len() {
            return Err(Error::Usage(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(WeightArray { dims, data })
    }

    pub fn dtype(&self) -> u8 {
        DTYPE_F32
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

pub(crate) fn element_count(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Insertion-ordered map from parameter name to array.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    arrays: IndexMap<String, WeightArray>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        dims: Vec<usize>,
        data: Vec<f32>,
    ) -> Result<()> {
        let name = name.into();
        if self.arrays.contains_key(&name) {
            return Err(Error::Usage(format!("duplicate weight array '{name}'")));
        }
        let array = WeightArray::new(dims, data)?;
        self.arrays.insert(name, array);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&WeightArray> {
        self.arrays.get(name)
    }

    /// Looks up `name` and checks its shape, for use while wiring a network.
    pub fn expect(&self, name: &str, dims: &[usize]) -> Result<&WeightArray> {
        let array = self
            .get(name)
            .ok_or_else(|| Error::Load(format!("missing weight array '{name}'")))?;
        if array.dims != dims {
            return Err(Error::Load(format!(
                "weight array '{name}' has shape {:?}, expected {dims:?}",
                array.dims
            )));
        }
        Ok(array)
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &WeightArray)> {
        self.arrays.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(String::as_str)
    }

    pub fn total_values(&self) -> usize {
        self.arrays.values().map(|a| a.data.len()).sum()
    }

    /// Applies `f` to every value of every array.
    pub fn map_values(&mut self, mut f: impl FnMut(&str, f32) -> f32) {
        for (name, array) in self.arrays.iter_mut() {
            for v in array.data.iter_mut() {
                *v = f(name, *v);
            }
        }
    }

    /// Replaces the data of an existing array, keeping its shape.
    pub fn replace(&mut self, name: &str, data: Vec<f32>) -> Result<()> {
        let array = self
            .arrays
            .get_mut(name)
            .ok_or_else(|| Error::Usage(format!("no weight array '{name}'")))?;
        if array.data.len() != data.len() {
            return Err(Error::Usage(format!(
                "weight array '{name}' holds {} values, got {}",
                array.data.len(),
                data.len()
            )));
        }
        array.data = data;
        Ok(())
    }
}
