//! Serde adapters for dynamic nalgebra types (nalgebra's own impls need std).

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Row-major dense matrix.
#[derive(Serialize, Deserialize)]
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Dense {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows())
            .flat_map(|i| m.row(i).iter().copied().collect::<Vec<_>>())
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    fn into_matrix<E: serde::de::Error>(self) -> Result<DMatrix<f64>, E> {
        if self.rows * self.cols != self.data.len() {
            return Err(E::custom(format!(
                "{}x{} matrix with {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        Dense::from_matrix(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        Dense::deserialize(d)?.into_matrix()
    }
}

pub mod matrix_list {
    use super::*;

    pub fn serialize<S: Serializer>(m: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(Dense::from_matrix)
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        Vec::<Dense>::deserialize(d)?
            .into_iter()
            .map(Dense::into_matrix)
            .collect()
    }
}

pub mod vector_list {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.as_slice())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        if rows.is_empty() {
            return Err(D::Error::custom("empty vector list"));
        }
        Ok(rows.into_iter().map(DVector::from_vec).collect())
    }
}
