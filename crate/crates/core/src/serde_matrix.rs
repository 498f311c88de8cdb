//! Row-major JSON encoding for `DMatrix<f64>`: `{"rows": r, "cols": c, "data": [...]}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixData {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        MatrixData {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    MatrixData::from(m).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
    let md = MatrixData::deserialize(d)?;
    if md.data.len() != md.rows * md.cols {
        return Err(serde::de::Error::custom(format!(
            "matrix data has {} entries, expected {}x{}",
            md.data.len(),
            md.rows,
            md.cols
        )));
    }
    Ok(DMatrix::from_row_slice(md.rows, md.cols, &md.data))
}
