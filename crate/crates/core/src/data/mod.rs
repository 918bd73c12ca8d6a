//! Input matrices, their Gram/norm caches, and regression targets.

mod idx;

pub use idx::{
    load_idx, parse_idx_images, parse_idx_labels, read_idx_images, read_idx_labels,
    write_idx_images, write_idx_labels, IdxImages, IdxOptions, LabelEncoding, IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
};

use std::path::PathBuf;
use std::sync::OnceLock;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::linalg::{dot, SymMatrix};
use crate::rng::{standard_normals, stream};
use crate::{Error, Result};

/// An `n × d` sample matrix (row `i` is sample `xᵢ`) with cached
/// `XXᵀ`, row norms `r` and `D = diag(XXᵀ)`.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    x: Array2<f64>,
    r: Vec<f64>,
    dd: Vec<f64>,
    gram: OnceLock<SymMatrix>,
}

impl DataMatrix {
    pub fn new(x: Array2<f64>) -> Result<Self> {
        let (n, d) = x.dim();
        if n == 0 || d == 0 {
            return Err(Error::arg("data matrix must have n >= 1 and d >= 1"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data matrix"));
        }
        let x = x.as_standard_layout().into_owned();
        let dd: Vec<f64> = (0..n).map(|i| row_dot(&x, i, i)).collect();
        let r = dd.iter().map(|v| v.sqrt()).collect();
        Ok(Self {
            x,
            r,
            dd,
            gram: OnceLock::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::arg("ragged rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let x = Array2::from_shape_vec((n, d), flat).map_err(|e| Error::arg(e.to_string()))?;
        Self::new(x)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    /// Row `i` as a contiguous slice.
    pub fn row_slice(&self, i: usize) -> &[f64] {
        let d = self.d();
        &self.x.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    /// Row norms `rᵢ = ‖xᵢ‖`.
    pub fn norms(&self) -> &[f64] {
        &self.r
    }

    /// Squared row norms, the diagonal of `D`.
    pub fn sq_norms(&self) -> &[f64] {
        &self.dd
    }

    /// `XXᵀ`, computed once. Every entry is an independent dot product in
    /// ascending feature order, so parallel evaluation does not change it.
    pub fn gram(&self) -> &SymMatrix {
        self.gram.get_or_init(|| {
            let n = self.n();
            let upper: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| (i..n).map(|j| row_dot(&self.x, i, j)).collect())
                .collect();
            SymMatrix::from_fn(n, |i, j| upper[i][j - i])
        })
    }

    /// `(XXᵀ, r, diag(D))`.
    pub fn gram_and_norms(&self) -> (&SymMatrix, &[f64], &[f64]) {
        (self.gram(), &self.r, &self.dd)
    }

    /// Cosine similarity `ρᵢⱼ = xᵢᵀxⱼ / (‖xᵢ‖‖xⱼ‖)`; zero when either row is
    /// the zero vector.
    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        let denom = self.r[i] * self.r[j];
        if denom == 0.0 {
            0.0
        } else {
            self.gram().get(i, j) / denom
        }
    }

    /// Copy with every row rescaled to norm `√d`. Zero rows are left as is.
    pub fn project_to_sphere(&self) -> Result<Self> {
        let scale = (self.d() as f64).sqrt();
        let mut x = self.x.clone();
        for (mut row, &r) in x.rows_mut().into_iter().zip(&self.r) {
            if r > 0.0 {
                row.mapv_inplace(|v| v * scale / r);
            }
        }
        Self::new(x)
    }
}

fn row_dot(x: &Array2<f64>, i: usize, j: usize) -> f64 {
    let d = x.ncols();
    let s = x.as_slice().expect("standard layout");
    dot(&s[i * d..(i + 1) * d], &s[j * d..(j + 1) * d])
}

/// i.i.d. `N(0, 1)` entries from the `"data"` stream of `seed`, filled
/// row-major (sample 0 first).
pub fn sample_gaussian_data(n: usize, d: usize, seed: u64) -> Result<DataMatrix> {
    if n < 2 || d < 1 {
        return Err(Error::arg(format!(
            "gaussian data needs n >= 2 and d >= 1 (got n = {n}, d = {d})"
        )));
    }
    let mut rng = stream(seed, "data")?;
    let x = Array2::from_shape_vec((n, d), standard_normals(&mut rng, n * d))
        .expect("shape matches length");
    DataMatrix::new(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    /// Uniform `±1`.
    RandomSign,
    /// `N(0, 1)`.
    Gaussian,
    Zero,
}

/// Targets independent of the inputs, from the `"targets"` stream of `seed`.
pub fn make_targets(kind: TargetKind, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(Error::arg("need at least one target"));
    }
    let mut rng = stream(seed, "targets")?;
    Ok(match kind {
        TargetKind::Zero => vec![0.0; n],
        TargetKind::RandomSign => (0..n)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect(),
        TargetKind::Gaussian => (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
    })
}

/// `yᵢ = sign(uᵀxᵢ)` for a unit teacher direction `u` drawn from the
/// `"teacher"` stream of `seed`. Used where held-out loss has to be
/// meaningful.
pub fn teacher_targets(x: &DataMatrix, seed: u64) -> Result<Vec<f64>> {
    let mut rng = stream(seed, "teacher")?;
    let u = standard_normals(&mut rng, x.d());
    Ok((0..x.n())
        .map(|i| {
            if dot(x.row_slice(i), &u) >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    GaussianSynthetic { seed: u64 },
    IdxFile { images: PathBuf, labels: PathBuf },
    Custom,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub data: DataMatrix,
    pub targets: Vec<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(data: DataMatrix, targets: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if targets.len() != data.n() {
            return Err(Error::dim("target count", data.n(), targets.len()));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("targets"));
        }
        Ok(Self {
            data,
            targets,
            provenance,
        })
    }

    /// Gaussian inputs with targets of `kind`, both derived from `seed`.
    pub fn gaussian(n: usize, d: usize, kind: TargetKind, seed: u64) -> Result<Self> {
        let data = sample_gaussian_data(n, d, seed)?;
        let targets = make_targets(kind, n, seed)?;
        Self::new(data, targets, Provenance::GaussianSynthetic { seed })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }
}
