//! Seeded random SPD matrices and wrapped Gaussian parameters.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wrapped_spd::airm::coord_len;
use wrapped_spd::symmat::expm;
use wrapped_spd::wgauss::minimal_representative;
use wrapped_spd::{CovKind, CovSpec, SpdMat, SymMat, WgParams};

use crate::error::Result;

/// `exp((cI + sA)ᵀ(cI + sA))` with `A` i.i.d. standard normal.
pub fn random_spd(d: usize, c: f64, s: f64, seed: u64) -> Result<SpdMat> {
    random_spd_with(d, c, s, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn random_spd_with(d: usize, c: f64, s: f64, rng: &mut impl Rng) -> Result<SpdMat> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = DMatrix::identity(d, d) * c + a * s;
    Ok(expm(&SymMat::symmetrize(&(x.transpose() * &x))?)?)
}

/// Parameters drawn as in the estimation experiments, returned as the
/// minimal representative:
/// - `p = random_spd(d, 0.1, 1)`
/// - `μ` with entries uniform in `[0, 0.1)`
/// - full `Σ = random_spd(n, 0.01, 0.02)`, or a diagonal uniform in `(0, 1]`
pub fn random_wg_params(d: usize, kind: CovKind, seed: u64) -> Result<WgParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = coord_len(d);
    let p = random_spd_with(d, 0.1, 1.0, &mut rng)?;
    let mu = DVector::from_fn(n, |_, _| rng.random_range(0.0..0.1));
    let sigma = match kind {
        CovKind::Full => CovSpec::Full(random_spd_with(n, 0.01, 0.02, &mut rng)?),
        CovKind::Diagonal => CovSpec::diagonal(DVector::from_fn(n, |_, _| 1.0 - rng.random::<f64>()))?,
    };
    Ok(minimal_representative(&WgParams::new(p, mu, sigma)?))
}

/// Mixes a base seed with integer coordinates (splitmix64 finalizer), so each
/// experiment cell gets an independent stream.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut z = seed;
    for &p in parts {
        z = z.wrapping_add(p.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use wrapped_spd::airm::nu_coords;

    #[test]
    fn random_spd_examples() {
        let x = random_spd(3, 0.1, 0.0, 5).unwrap();
        let expect = DMatrix::identity(3, 3) * 0.01f64.exp();
        assert!((x.as_matrix() - expect).amax() < 1e-15);
        for seed in 0..20 {
            let a = random_spd(4, 0.1, 1.0, seed).unwrap();
            assert!(a.eigenvalues().iter().all(|&v| v > 0.0));
            assert_eq!(a, random_spd(4, 0.1, 1.0, seed).unwrap());
        }
        assert!(random_spd(2, 0.0, 1.0, 1).unwrap().eigenvalues().iter().all(|&v| v >= 1.0 - 1e-12));
    }

    #[test]
    fn random_params_are_minimal_and_seeded() {
        for kind in [CovKind::Full, CovKind::Diagonal] {
            for seed in 0..5 {
                let th = random_wg_params(3, kind, seed).unwrap();
                assert!(th.mu().dot(&nu_coords(3)).abs() < 1e-12);
                assert_eq!(th.sigma().kind(), kind);
                assert_eq!(th, random_wg_params(3, kind, seed).unwrap());
            }
        }
        if let CovSpec::Diagonal(v) = random_wg_params(4, CovKind::Diagonal, 9).unwrap().sigma() {
            assert!(v.iter().all(|&x| x > 0.0 && x <= 1.0));
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[2, 100]);
        assert_ne!(a, derive_seed(1, &[2, 1000]));
        assert_ne!(a, derive_seed(2, &[2, 100]));
        assert_eq!(a, derive_seed(1, &[2, 100]));
    }
}
