//! Orthonormal 168-point transforms: the closed-form DCT matrix and the
//! data-driven KLT basis trained by eigendecomposition of the weekly-block
//! covariance.
//!
//! The KLT pipeline follows the covariance construction `R = X_tr X_trᵀ`
//! with no mean removal, so the DC component lands in the top eigenvector.
//! Eigenpairs come from a cyclic Jacobi rotation sweep, sorted by
//! descending eigenvalue with a fixed sign convention for reproducibility.

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kpi_model::{to_weekly_blocks, Dataset};
use crate::WEEK_HOURS;

/// Dense square matrix, row-major storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n + col] = value;
    }

    /// `M * v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|r| {
                let row = &self.data[r * self.n..(r + 1) * self.n];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `Mᵀ * v`.
    pub fn transpose_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (r, &vr) in v.iter().enumerate() {
            let row = &self.data[r * self.n..(r + 1) * self.n];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vr;
            }
        }
        out
    }

    /// `M * Mᵀ`.
    pub fn gram(&self) -> SquareMatrix {
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let ri = &self.data[i * n..(i + 1) * n];
                let rj = &self.data[j * n..(j + 1) * n];
                let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                out.set(i, j, dot);
                out.set(j, i, dot);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius distance between `M * Mᵀ` and the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut defect = 0.0;
        let g = self.gram();
        for i in 0..self.n {
            for j in 0..self.n {
                let target = if i == j { 1.0 } else { 0.0 };
                let d = g.get(i, j) - target;
                defect += d * d;
            }
        }
        defect.sqrt()
    }
}

/// Common face of the DCT and KLT bases as seen by the codec layer.
pub trait Transform {
    /// Analysis: block -> coefficients.
    fn forward(&self, block: &[f64]) -> Result<Vec<f64>>;
    /// Synthesis: coefficients -> block; exact inverse of `forward` up to
    /// floating-point rounding.
    fn inverse(&self, coeffs: &[f64]) -> Result<Vec<f64>>;
}

fn check_block_len(len: usize) -> Result<()> {
    if len != WEEK_HOURS {
        return Err(Error::Dimension {
            expected: WEEK_HOURS,
            got: len,
        });
    }
    Ok(())
}

/// Orthonormal DCT-II matrix for 168-sample weekly blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DctBasis {
    matrix: SquareMatrix,
}

/// Build the 168-point orthonormal DCT-II matrix:
/// `D[k][n] = sqrt(2/168) * c_k * cos(pi (2n+1) k / 336)` with `c_0 = 1/sqrt(2)`.
pub fn build_dct() -> DctBasis {
    let n = WEEK_HOURS;
    let mut matrix = SquareMatrix::zeros(n);
    let scale = (2.0 / n as f64).sqrt();
    for k in 0..n {
        let ck = if k == 0 { 1.0 / 2.0f64.sqrt() } else { 1.0 };
        for j in 0..n {
            let angle = std::f64::consts::PI * (2 * j + 1) as f64 * k as f64 / (2 * n) as f64;
            matrix.set(k, j, scale * ck * angle.cos());
        }
    }
    DctBasis { matrix }
}

impl DctBasis {
    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }
}

impl Transform for DctBasis {
    fn forward(&self, block: &[f64]) -> Result<Vec<f64>> {
        check_block_len(block.len())?;
        Ok(self.matrix.mul_vec(block))
    }

    fn inverse(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        check_block_len(coeffs.len())?;
        Ok(self.matrix.transpose_mul_vec(coeffs))
    }
}

/// Trained KLT basis: eigenvectors of the weekly-block covariance as
/// columns, descending eigenvalue order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KltBasis {
    /// Eigenvector matrix V, columns sorted by descending eigenvalue.
    matrix: SquareMatrix,
    /// Nonincreasing, nonnegative (up to rounding) eigenvalues of R.
    eigenvalues: Vec<f64>,
    /// Cells whose weekly blocks formed the training matrix.
    training_cell_ids: BTreeSet<String>,
    seed: u64,
    training_fraction: f64,
}

impl KltBasis {
    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn training_cell_ids(&self) -> &BTreeSet<String> {
        &self.training_cell_ids
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn training_fraction(&self) -> f64 {
        self.training_fraction
    }

    pub fn save_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let basis: KltBasis = serde_json::from_reader(std::io::BufReader::new(file))?;
        if basis.matrix.n() != WEEK_HOURS || basis.eigenvalues.len() != WEEK_HOURS {
            return Err(Error::Dimension {
                expected: WEEK_HOURS,
                got: basis.matrix.n(),
            });
        }
        Ok(basis)
    }
}

impl Transform for KltBasis {
    fn forward(&self, block: &[f64]) -> Result<Vec<f64>> {
        check_block_len(block.len())?;
        Ok(self.matrix.transpose_mul_vec(block))
    }

    fn inverse(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        check_block_len(coeffs.len())?;
        Ok(self.matrix.mul_vec(coeffs))
    }
}

/// Maximum cyclic sweeps before the eigensolver reports non-convergence.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius mass threshold, relative to the input norm.
pub const JACOBI_TOLERANCE: f64 = 1e-12;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns unsorted `(eigenvalues, V)` with eigenvectors as columns of `V`.
/// Sweeps run until the off-diagonal Frobenius mass drops below
/// `JACOBI_TOLERANCE * ||A||_F`.
pub fn jacobi_eigen_sym(a: &SquareMatrix) -> Result<(Vec<f64>, SquareMatrix)> {
    let n = a.n();
    let mut m = a.clone();
    let mut v = SquareMatrix::identity(n);
    let threshold = JACOBI_TOLERANCE * a.frobenius_norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    off += m.get(p, q) * m.get(p, q);
                }
            }
        }
        if off.sqrt() <= threshold {
            let eigenvalues = (0..n).map(|i| m.get(i, i)).collect();
            return Ok((eigenvalues, v));
        }

        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = {
                    let abs_t = 1.0 / (theta.abs() + (theta * theta + 1.0).sqrt());
                    if theta < 0.0 {
                        -abs_t
                    } else {
                        abs_t
                    }
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                m.set(p, p, app - t * apq);
                m.set(q, q, aqq + t * apq);
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    let new_kp = akp - s * (akq + tau * akp);
                    let new_kq = akq + s * (akp - tau * akq);
                    m.set(k, p, new_kp);
                    m.set(p, k, new_kp);
                    m.set(k, q, new_kq);
                    m.set(q, k, new_kq);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, vkp - s * (vkq + tau * vkp));
                    v.set(k, q, vkq + s * (vkp - tau * vkq));
                }
            }
        }
    }

    Err(Error::NoConvergence(JACOBI_MAX_SWEEPS))
}

/// Train a KLT basis on a seeded random fraction of the dataset's cells.
///
/// The training matrix stacks one column per weekly block of each selected
/// cell; `R = X_tr X_trᵀ` is eigendecomposed without mean removal. Selected
/// cells are recorded so evaluation can exclude them.
pub fn train_klt(dataset: &Dataset, training_fraction: f64, seed: u64) -> Result<KltBasis> {
    if !(training_fraction > 0.0 && training_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "training fraction must lie in (0, 1], got {training_fraction}"
        )));
    }
    if dataset.len() < WEEK_HOURS {
        return Err(Error::TooShort {
            len: dataset.len(),
            need: WEEK_HOURS,
        });
    }
    let n_cells = dataset.n_cells();
    let n_train = (training_fraction * n_cells as f64).ceil() as usize;
    if n_train < 2 {
        return Err(Error::NotEnoughTrainingCells(n_train));
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, n_cells, n_train);
    let mut indices: Vec<usize> = chosen.into_iter().collect();
    indices.sort_unstable();

    let mut training_cell_ids = BTreeSet::new();
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    for &i in &indices {
        let cell = &dataset.cells()[i];
        training_cell_ids.insert(cell.cell_id.clone());
        blocks.extend(to_weekly_blocks(cell)?.blocks);
    }
    // Fewer training columns than dimensions makes R rank-deficient, which
    // is legal (eigenvalues hit zero) but worth knowing about.
    if blocks.len() < WEEK_HOURS {
        eprintln!(
            "warning: KLT training matrix has {} columns for {} dimensions",
            blocks.len(),
            WEEK_HOURS
        );
    }

    let mut covariance = SquareMatrix::zeros(WEEK_HOURS);
    for block in &blocks {
        for i in 0..WEEK_HOURS {
            let bi = block[i];
            for j in i..WEEK_HOURS {
                let add = bi * block[j];
                covariance.set(i, j, covariance.get(i, j) + add);
            }
        }
    }
    for i in 0..WEEK_HOURS {
        for j in 0..i {
            covariance.set(i, j, covariance.get(j, i));
        }
    }

    let (eigenvalues, vectors) = jacobi_eigen_sym(&covariance)?;
    let (eigenvalues, matrix) = sort_and_fix_signs(eigenvalues, vectors);

    Ok(KltBasis {
        matrix,
        eigenvalues,
        training_cell_ids,
        seed,
        training_fraction,
    })
}

/// Sort eigenpairs by descending eigenvalue and flip each eigenvector so
/// its largest-magnitude component (first such, on ties) is positive.
fn sort_and_fix_signs(
    eigenvalues: Vec<f64>,
    vectors: SquareMatrix,
) -> (Vec<f64>, SquareMatrix) {
    let n = vectors.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eigenvalues[b]
            .partial_cmp(&eigenvalues[a])
            .expect("eigenvalues are finite")
    });

    let mut sorted_values = Vec::with_capacity(n);
    let mut sorted = SquareMatrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        sorted_values.push(eigenvalues[src]);
        let mut pivot = 0;
        let mut best = 0.0;
        for r in 0..n {
            let mag = vectors.get(r, src).abs();
            if mag > best {
                best = mag;
                pivot = r;
            }
        }
        let flip = if vectors.get(pivot, src) < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            sorted.set(r, dst, flip * vectors.get(r, src));
        }
    }
    (sorted_values, sorted)
}
