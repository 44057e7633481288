//! Mass matrix `M = diag(m_K)` and TPFA stiffness matrix `A`.

use crate::mesh::Mesh;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalOperator {
    diag: Vec<f64>,
}

impl DiagonalOperator {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.iter().all(|&d| d.is_finite() && d > 0.0) {
            Ok(Self { diag })
        } else {
            Err(Error::InvalidMesh("diagonal operator entries must be positive".into()))
        }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.diag.iter().zip(x).map(|(d, v)| d * v).collect()
    }

    /// `1ᵀ M x`.
    pub fn weighted_sum(&self, x: &[f64]) -> f64 {
        self.diag.iter().zip(x).map(|(d, v)| d * v).sum()
    }
}

/// Square sparse matrix in CSR form, both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    /// Builds from per-row `(col, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if c >= dim {
                    return Err(Error::DimensionMismatch { expected: dim, actual: c + 1 });
                }
                if cols.len() > row_ptr[i] && *cols.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self { dim, row_ptr, cols, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored `(col, value)` entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.dim) {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.apply_into(x, &mut y);
        y
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.apply(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Dense row-major copy, for small systems.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim * self.dim];
        for i in 0..self.dim {
            for (c, v) in self.row(i) {
                dense[i * self.dim + c] = v;
            }
        }
        dense
    }
}

pub fn assemble_mass(mesh: &Mesh) -> DiagonalOperator {
    DiagonalOperator { diag: mesh.measures().collect() }
}

/// `a_KK = Σ m_σ/d_σ` over the interior edges of `K`, `a_KL = −m_σ/d_σ` for
/// `σ = K|L`. Exterior edges contribute nothing.
pub fn assemble_stiffness(mesh: &Mesh) -> SparseOperator {
    let n = mesh.num_cells();
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 0.0)]).collect();
    for edge in mesh.interior_edges() {
        let (k, l) = edge.cells;
        let t = edge.transmissibility();
        rows[k][0].1 += t;
        rows[l][0].1 += t;
        rows[k].push((l, -t));
        rows[l].push((k, -t));
    }
    SparseOperator::from_rows(rows).expect("edge endpoints are validated by the mesh")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_uniform_mesh;

    #[test]
    fn mass_examples() {
        assert_eq!(assemble_mass(&build_uniform_mesh(2).unwrap()).diag(), &[1.0; 4]);
        assert_eq!(assemble_mass(&build_uniform_mesh(1).unwrap()).diag(), &[4.0]);
        let m5 = assemble_mass(&build_uniform_mesh(5).unwrap());
        assert!(m5.diag().iter().all(|&m| (m - 0.16).abs() < 1e-15));
    }

    #[test]
    fn stiffness_two_by_two() {
        let a = assemble_stiffness(&build_uniform_mesh(2).unwrap());
        assert_eq!(a.diagonal(), vec![2.0; 4]);
        for (i, j) in [(0, 1), (0, 2), (1, 3), (2, 3)] {
            assert_eq!(a.get(i, j), -1.0);
            assert_eq!(a.get(j, i), -1.0);
        }
        assert_eq!(a.get(0, 3), 0.0);
        assert_eq!(a.get(1, 2), 0.0);
    }

    #[test]
    fn stiffness_eigenpairs_two_by_two() {
        let a = assemble_stiffness(&build_uniform_mesh(2).unwrap());
        let pairs = [
            ([1.0, 1.0, 1.0, 1.0], 0.0),
            ([1.0, -1.0, 1.0, -1.0], 2.0),
            ([1.0, 1.0, -1.0, -1.0], 2.0),
            ([1.0, -1.0, -1.0, 1.0], 4.0),
        ];
        for (v, lambda) in pairs {
            let av = a.apply(&v);
            for (x, y) in av.iter().zip(v) {
                assert_eq!(*x, lambda * y);
            }
        }
    }

    #[test]
    fn stiffness_single_cell_is_zero() {
        let a = assemble_stiffness(&build_uniform_mesh(1).unwrap());
        assert_eq!(a.dim(), 1);
        assert_eq!(a.get(0, 0), 0.0);
    }

    #[test]
    fn stiffness_structure_small_meshes() {
        for l in 1..=8 {
            let mesh = build_uniform_mesh(l).unwrap();
            let a = assemble_stiffness(&mesh);
            let ones = vec![1.0; a.dim()];
            assert!(a.apply(&ones).iter().all(|v| v.abs() < 1e-12));
            for i in 0..a.dim() {
                for (j, v) in a.row(i) {
                    assert_eq!(v, a.get(j, i));
                    if i == j {
                        assert!(v >= 0.0);
                    } else {
                        assert!(v <= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn from_rows_merges_duplicates() {
        let a = SparseOperator::from_rows(vec![vec![(0, 1.0), (0, 2.0)], vec![(1, 1.0)]]).unwrap();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 2);
        assert!(SparseOperator::from_rows(vec![vec![(3, 1.0)]]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn stiffness_is_psd(l in 1usize..9, x in proptest::collection::vec(-1.0f64..1.0, 64)) {
                let a = assemble_stiffness(&build_uniform_mesh(l).unwrap());
                let x = &x[..a.dim()];
                let norm2: f64 = x.iter().map(|v| v * v).sum();
                prop_assert!(a.quadratic_form(x) >= -1e-12 * norm2);
            }
        }
    }
}
