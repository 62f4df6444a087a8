#![allow(dead_code)]

use nalgebra::DVector;
use wrapped_spd::classify::LabeledSpdDataset;
use wrapped_spd::wgauss::sample;
use wrapped_spd::{CovSpec, SpdMat, WgParams};

/// Two classes at distance `sqrt(2.5² + 2²) ≈ 3.2` with `Σ = 0.1·I`, so
/// `tr Σ = 0.3` at `d = 2`.
pub fn separated_params() -> [WgParams; 2] {
    let sigma = CovSpec::Full(SpdMat::scalar(3, 0.1).unwrap());
    let p1 = SpdMat::identity(2);
    let p2 = SpdMat::from_diagonal(&[2.5f64.exp(), (-2.0f64).exp()]).unwrap();
    [
        WgParams::new(p1, DVector::zeros(3), sigma.clone()).unwrap(),
        WgParams::new(p2, DVector::zeros(3), sigma).unwrap(),
    ]
}

pub fn two_class_dataset(params: &[WgParams; 2], per_class: usize, seed: u64) -> LabeledSpdDataset {
    let mut items = Vec::with_capacity(2 * per_class);
    for (k, theta) in params.iter().enumerate() {
        items.extend(sample(theta, per_class, seed * 2 + k as u64).unwrap().into_iter().map(|x| (x, k)));
    }
    LabeledSpdDataset::new(items, Some(2)).unwrap()
}
