//! Seeded random elements and channels for property tests and sweeps.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::algebra::{CMatrix, Element, TracialAlgebra, C64};
use crate::channels::{build_channel, ChannelSpec, MarkovMap};
use crate::error::{Error, Result};

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

pub fn random_element<R: Rng + ?Sized>(algebra: &Arc<TracialAlgebra>, rng: &mut R) -> Element {
    let blocks = algebra.blocks().iter().map(|b| gaussian_matrix(b.dim, b.dim, rng)).collect();
    Element::from_blocks(algebra, blocks).expect("block shapes")
}

pub fn random_self_adjoint<R: Rng + ?Sized>(algebra: &Arc<TracialAlgebra>, rng: &mut R) -> Element {
    let x = random_element(algebra, rng);
    (&x + &x.adjoint()).scale_re(0.5)
}

/// `g g*` for Gaussian `g`, rank-deficient one time in four.
pub fn random_positive<R: Rng + ?Sized>(algebra: &Arc<TracialAlgebra>, rng: &mut R) -> Element {
    let low_rank = rng.random_range(0..4) == 0;
    let blocks = algebra
        .blocks()
        .iter()
        .map(|b| {
            let r = if low_rank { rng.random_range(1..=b.dim) } else { b.dim };
            let g = gaussian_matrix(b.dim, r, rng);
            &g * g.adjoint()
        })
        .collect();
    Element::from_blocks(algebra, blocks).expect("block shapes")
}

/// Haar-distributed unitary via QR with the phases of `R` divided out.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let qr = gaussian_matrix(n, n, rng).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

/// Uniform point on the probability simplex.
pub fn random_probabilities<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `Σ p_ℓ u_ℓ x u_ℓ*` with Haar unitaries on `M_n`.
pub fn random_unitary_channel<R: Rng + ?Sized>(n: usize, terms: usize, rng: &mut R) -> Result<MarkovMap> {
    let algebra = Arc::new(TracialAlgebra::matrix(n)?);
    let unitaries = (0..terms).map(|_| Element::from_matrix(&algebra, haar_unitary(n, rng))).collect::<Result<Vec<_>>>()?;
    build_channel(ChannelSpec::RandomUnitary { weights: random_probabilities(terms, rng), unitaries })
}

fn inverse_sqrt_psd(m: &CMatrix) -> Option<CMatrix> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let e = nalgebra::SymmetricEigen::new(h);
    if e.eigenvalues.iter().any(|&v| !(v > 1e-300)) {
        return None;
    }
    let d = CMatrix::from_diagonal(&e.eigenvalues.map(|v| C64::new(v.powf(-0.5), 0.0)));
    Some(&e.eigenvectors * d * e.eigenvectors.adjoint())
}

/// A generic unital trace-preserving channel on `M_n` with `terms` Kraus
/// operators: Gaussian operators balanced by operator Sinkhorn scaling until
/// `Σ a*a = Σ aa* = 1`.
pub fn random_kraus_channel<R: Rng + ?Sized>(n: usize, terms: usize, rng: &mut R) -> Result<MarkovMap> {
    let algebra = Arc::new(TracialAlgebra::matrix(n)?);
    let mut ops: Vec<CMatrix> = (0..terms).map(|_| gaussian_matrix(n, n, rng)).collect();
    let id = CMatrix::identity(n, n);
    let mut settled = false;
    for _ in 0..10_000 {
        let s: CMatrix = ops.iter().map(|a| a.adjoint() * a).fold(CMatrix::zeros(n, n), |acc, m| acc + m);
        let si = inverse_sqrt_psd(&s).ok_or_else(|| Error::Numerical("degenerate Kraus family".into()))?;
        ops.iter_mut().for_each(|a| *a = &*a * &si);
        let r: CMatrix = ops.iter().map(|a| a * a.adjoint()).fold(CMatrix::zeros(n, n), |acc, m| acc + m);
        let ri = inverse_sqrt_psd(&r).ok_or_else(|| Error::Numerical("degenerate Kraus family".into()))?;
        ops.iter_mut().for_each(|a| *a = &ri * &*a);
        let s: CMatrix = ops.iter().map(|a| a.adjoint() * a).fold(CMatrix::zeros(n, n), |acc, m| acc + m);
        if (s - &id).camax() < 1e-14 {
            settled = true;
            break;
        }
    }
    if !settled {
        return Err(Error::Numerical("operator Sinkhorn scaling did not settle".into()));
    }
    let operators = ops.into_iter().map(|a| Element::from_matrix(&algebra, a)).collect::<Result<Vec<_>>>()?;
    build_channel(ChannelSpec::Kraus { algebra, operators })
}

/// Gram matrix of random unit vectors in `C^r`: positive with unit
/// diagonal, hence a valid Schur multiplier.
pub fn random_schur_mask<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let r = rng.random_range(1..=n.max(2));
    let mut v = gaussian_matrix(r, n, rng);
    for j in 0..n {
        let c = v.column(j).norm();
        let mut col = v.column_mut(j);
        col /= C64::new(c, 0.0);
    }
    v.adjoint() * v
}

/// Convex combination of uniformly random permutation matrices: doubly
/// stochastic on `n` equally weighted points.
pub fn random_permutation_mixture<R: Rng + ?Sized>(n: usize, terms: usize, rng: &mut R) -> DMatrix<f64> {
    let w = random_probabilities(terms, rng);
    let mut k = DMatrix::zeros(n, n);
    let mut perm: Vec<usize> = (0..n).collect();
    for wl in w {
        perm.shuffle(rng);
        for (i, &j) in perm.iter().enumerate() {
            k[(i, j)] += wl;
        }
    }
    k
}

/// One draw from a mixed ensemble of Markov maps on `M_n`: depolarizing,
/// random-unitary, generic Kraus and Schur channels.
pub fn random_channel<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<MarkovMap> {
    match rng.random_range(0..4) {
        0 => build_channel(ChannelSpec::Depolarizing { n, lambda: rng.random_range(0.02..0.98) }),
        1 => {
            let terms = rng.random_range(2..=4);
            random_unitary_channel(n, terms, rng)
        }
        2 => {
            let terms = rng.random_range(2..=n * n);
            random_kraus_channel(n, terms, rng)
        }
        _ => build_channel(ChannelSpec::Schur { mask: random_schur_mask(n, rng) }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::validate_markov;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn haar_unitaries_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..5 {
            let u = haar_unitary(n, &mut rng);
            assert!((&u * u.adjoint() - CMatrix::identity(n, n)).camax() < 1e-13);
        }
    }

    #[test]
    fn random_channels_are_markov() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..40 {
            let n = rng.random_range(2..=3);
            let t = random_channel(n, &mut rng).unwrap();
            assert!(validate_markov(&t).passes(), "{:?}", t.validation_report());
        }
    }

    #[test]
    fn permutation_mixtures_are_doubly_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_permutation_mixture(5, 3, &mut rng);
        for i in 0..5 {
            assert!((k.row(i).sum() - 1.0).abs() < 1e-14);
            assert!((k.column(i).sum() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn positive_draws_are_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Arc::new(TracialAlgebra::matrix(3).unwrap());
        for _ in 0..50 {
            assert!(random_positive(&a, &mut rng).is_positive());
        }
    }
}
