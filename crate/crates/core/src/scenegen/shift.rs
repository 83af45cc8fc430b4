use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ShiftParams;
use crate::error::{Error, Result};
use crate::store::SnippetMatrix;

/// Invertible affine map `x -> M x + b` separating the source domain from the
/// target, plus the per-snippet noise scale applied after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    pub dim: usize,
    pub rho: f64,
    /// Dense `dim x dim` matrix, one inner array per row.
    pub matrix: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
    pub noise_sigma: f64,
}

impl ShiftSpec {
    pub fn identity(dim: usize) -> Self {
        let matrix = (0..dim)
            .map(|i| (0..dim).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        ShiftSpec {
            dim,
            rho: 1.0,
            matrix,
            translation: vec![0.0; dim],
            noise_sigma: 0.0,
        }
    }

    /// `rho * R + b` with `R` a product of Givens rotations, one per
    /// coordinate pair, at angles uniform in `[-max_angle, max_angle]`, and
    /// `b` uniform in `[-translation, translation]`.
    pub fn random<R: Rng>(dim: usize, params: &ShiftParams, noise_sigma: f64, rng: &mut R) -> Self {
        let ShiftParams {
            rho,
            translation,
            max_angle,
        } = *params;
        let mut rot = Array2::<f64>::eye(dim);
        for i in 0..dim {
            for j in (i + 1)..dim {
                let theta = rng.random_range(-max_angle..=max_angle);
                let (s, c) = theta.sin_cos();
                // left-multiply by the rotation in the (i, j) plane
                for k in 0..dim {
                    let (a, b) = (rot[[i, k]], rot[[j, k]]);
                    rot[[i, k]] = c * a - s * b;
                    rot[[j, k]] = s * a + c * b;
                }
            }
        }
        let translation = (0..dim).map(|_| rng.random_range(-translation..=translation)).collect();
        ShiftSpec {
            dim,
            rho,
            matrix: rot.outer_iter().map(|r| r.iter().map(|v| rho * v).collect()).collect(),
            translation,
            noise_sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.matrix.len() != self.dim
            || self.matrix.iter().any(|r| r.len() != self.dim)
            || self.translation.len() != self.dim
        {
            return Err(Error::validation(format!("shift is not {0}x{0}", self.dim)));
        }
        if self.matrix.iter().flatten().chain(&self.translation).any(|v| !v.is_finite()) {
            return Err(Error::validation("shift contains non-finite values"));
        }
        Ok(())
    }

    pub fn matrix_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.dim, self.dim), |(i, j)| self.matrix[i][j])
    }

    pub fn translation_array(&self) -> Array1<f64> {
        Array1::from(self.translation.clone())
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.matrix_array().dot(&x) + self.translation_array()
    }

    /// Applies the forward map to every row.
    pub fn apply_rows(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.matrix_array().t()) + &self.translation_array().insert_axis(Axis(0))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: ShiftSpec =
            serde_json::from_str(&text).map_err(|e| Error::format(path, format!("shift: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("shift serialization: {e}")))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Precomputed inverse map `x -> M^-1 (x - b)`.
#[derive(Debug, Clone)]
pub struct OracleAligner {
    inverse: Array2<f64>,
    translation: Array1<f64>,
}

impl OracleAligner {
    pub fn new(shift: &ShiftSpec) -> Result<Self> {
        shift.validate()?;
        let m = DMatrix::from_fn(shift.dim, shift.dim, |i, j| shift.matrix[i][j]);
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::Internal("shift matrix is singular".into()))?;
        Ok(OracleAligner {
            inverse: Array2::from_shape_fn((shift.dim, shift.dim), |(i, j)| inv[(i, j)]),
            translation: shift.translation_array(),
        })
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn align_rows(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.translation.view().insert_axis(Axis(0))).dot(&self.inverse.t())
    }

    pub fn align(&self, matrix: &SnippetMatrix) -> Result<SnippetMatrix> {
        if matrix.dim() != self.dim() {
            return Err(Error::validation(format!(
                "feature dimension {} does not match shift dimension {}",
                matrix.dim(),
                self.dim()
            )));
        }
        SnippetMatrix::from_f64(&self.align_rows(&matrix.to_f64()), matrix.snippet_len())
    }
}

/// Maps shifted features back through the known inverse shift, row by row.
pub fn oracle_align(matrix: &SnippetMatrix, shift: &ShiftSpec) -> Result<SnippetMatrix> {
    OracleAligner::new(shift)?.align(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    const WIDE: ShiftParams = ShiftParams {
        rho: 1.5,
        translation: 1.0,
        max_angle: std::f64::consts::PI,
    };

    #[test]
    fn identity_shift_leaves_features() {
        let m = SnippetMatrix::from_rows(2, 3, vec![1.0, -2.0, 3.5, 0.0, 0.25, 9.0], 16).unwrap();
        assert_eq!(oracle_align(&m, &ShiftSpec::identity(3)).unwrap(), m);
    }

    #[test]
    fn rotation_part_is_orthogonal_times_rho() {
        let mut r = rng::stream(1, &[]);
        let s = ShiftSpec::random(12, &ShiftParams::default(), 0.1, &mut r);
        let m = s.matrix_array();
        let gram = m.t().dot(&m);
        for i in 0..12 {
            for j in 0..12 {
                let want = if i == j { 2.25 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-12);
            }
        }
        assert!(s.translation.iter().all(|b| b.abs() <= 1.0));
    }

    #[test]
    fn inverse_undoes_forward_map() {
        let mut r = rng::stream(5, &[]);
        let s = ShiftSpec::random(32, &WIDE, 0.1, &mut r);
        let aligner = OracleAligner::new(&s).unwrap();
        let x = Array2::from_shape_fn((20, 32), |_| r.random_range(-10.0..10.0));
        let back = aligner.align_rows(&s.apply_rows(&x));
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }

    #[test]
    fn singular_matrix_is_internal_error() {
        let mut s = ShiftSpec::identity(2);
        s.matrix = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(matches!(OracleAligner::new(&s), Err(Error::Internal(_))));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut r = rng::stream(2, &[]);
        let s = ShiftSpec::random(6, &WIDE, 0.1, &mut r);
        let back: ShiftSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
