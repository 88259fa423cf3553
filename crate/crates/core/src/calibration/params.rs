//! Flat parameter vector `[intrinsics (5) | per-view pose (6 each) | distortion]`.

use crate::geometry::{Extrinsics, Intrinsics};

pub const INTRINSIC_COUNT: usize = 5;
pub const POSE_COUNT: usize = 6;
/// Position of the skew within the vector.
pub const SKEW_INDEX: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    pub n_views: usize,
    pub n_coeffs: usize,
}

impl ParameterVector {
    pub fn pack(intr: &Intrinsics, extr: &[Extrinsics], coeffs: &[f64]) -> Self {
        let mut values = Vec::with_capacity(INTRINSIC_COUNT + POSE_COUNT * extr.len() + coeffs.len());
        values.extend_from_slice(&intr.to_array());
        for e in extr {
            values.extend_from_slice(&e.to_array());
        }
        values.extend_from_slice(coeffs);
        Self {
            values,
            n_views: extr.len(),
            n_coeffs: coeffs.len(),
        }
    }

    pub fn from_values(values: Vec<f64>, n_views: usize, n_coeffs: usize) -> Self {
        assert_eq!(values.len(), Self::len_for(n_views, n_coeffs));
        Self { values, n_views, n_coeffs }
    }

    pub fn len_for(n_views: usize, n_coeffs: usize) -> usize {
        INTRINSIC_COUNT + POSE_COUNT * n_views + n_coeffs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Intrinsics without validation; trial points of the optimizer may be
    /// outside the physically meaningful range.
    pub fn intrinsics(&self) -> Intrinsics {
        let mut a = [0.0; INTRINSIC_COUNT];
        a.copy_from_slice(&self.values[..INTRINSIC_COUNT]);
        Intrinsics::from_array(a)
    }

    pub fn extrinsics(&self, view: usize) -> Extrinsics {
        let start = INTRINSIC_COUNT + POSE_COUNT * view;
        Extrinsics::from_slice(&self.values[start..start + POSE_COUNT])
    }

    pub fn all_extrinsics(&self) -> Vec<Extrinsics> {
        (0..self.n_views).map(|i| self.extrinsics(i)).collect()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.values[INTRINSIC_COUNT + POSE_COUNT * self.n_views..]
    }

    pub fn unpack(&self) -> (Intrinsics, Vec<Extrinsics>, Vec<f64>) {
        (self.intrinsics(), self.all_extrinsics(), self.coeffs().to_vec())
    }
}
