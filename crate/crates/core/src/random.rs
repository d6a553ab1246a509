//! Random states, unitaries, POVMs and channels for sampling-based checks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::measurements::Povm;
use crate::noise::KrausChannel;
use crate::operator::{eigh_unchecked, normalize, ComplexOperator, C64};

fn gaussian(rng: &mut impl Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Operator with i.i.d. complex Gaussian entries.
pub fn random_operator(dim: usize, rng: &mut impl Rng) -> ComplexOperator {
    let entries = (0..dim * dim).map(|_| gaussian(rng)).collect();
    ComplexOperator::new(dim, entries).expect("dim > 0")
}

pub fn random_hermitian(dim: usize, rng: &mut impl Rng) -> ComplexOperator {
    random_operator(dim, rng).hermitian_part()
}

/// Haar-random unit vector.
pub fn haar_state(dim: usize, rng: &mut impl Rng) -> Vec<C64> {
    let mut v: Vec<C64> = (0..dim).map(|_| gaussian(rng)).collect();
    normalize(&mut v);
    v
}

/// Haar-random unitary (Gram-Schmidt on a Ginibre matrix).
pub fn haar_unitary(dim: usize, rng: &mut impl Rng) -> ComplexOperator {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<C64> = (0..dim).map(|_| gaussian(rng)).collect();
        for c in &cols {
            let proj: C64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= proj * ci;
            }
        }
        let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n < 1e-8 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= n;
        }
        cols.push(v);
    }
    ComplexOperator::from_columns(&cols).expect("square")
}

/// Random mixed state of full rank (Hilbert-Schmidt measure).
pub fn random_density(dim: usize, rng: &mut impl Rng) -> ComplexOperator {
    let g = random_operator(dim, rng);
    let rho = g.matmul(&g.adjoint());
    let tr = rho.trace().re;
    rho.scale(1.0 / tr)
}

/// Random `n`-outcome POVM: `M_i = S^{-1/2} A_i S^{-1/2}` with `A_i = G_i G_i^dag`.
pub fn random_povm(dim: usize, outcomes: usize, rng: &mut impl Rng) -> Povm {
    let parts: Vec<ComplexOperator> = (0..outcomes)
        .map(|_| {
            let g = random_operator(dim, rng);
            g.matmul(&g.adjoint())
        })
        .collect();
    let mut total = ComplexOperator::zeros(dim);
    for p in &parts {
        total.add_scaled(1.0, p);
    }
    let inv_sqrt = eigh_unchecked(&total).reconstruct_with(|x| 1.0 / x.sqrt());
    let elements = parts
        .iter()
        .map(|a| inv_sqrt.matmul(a).matmul(&inv_sqrt).hermitian_part())
        .collect();
    Povm::new(elements).expect("normalized random POVM is valid")
}

/// Convex mixture `(1-t) * first + t * second`, element-wise.
pub fn mix_povms(first: &Povm, second: &Povm, t: f64) -> Povm {
    let elements = first
        .elements()
        .iter()
        .zip(second.elements())
        .map(|(a, b)| {
            let mut m = a.scale(1.0 - t);
            m.add_scaled(t, b);
            m
        })
        .collect();
    Povm::new(elements).expect("mixture of POVMs is a POVM")
}

/// Random channel with `rank` Kraus operators (columns of a Haar isometry).
pub fn random_channel(dim: usize, rank: usize, rng: &mut impl Rng) -> KrausChannel {
    let u = haar_unitary(dim * rank, rng);
    let kraus = (0..rank)
        .map(|j| {
            let mut k = ComplexOperator::zeros(dim);
            for a in 0..dim {
                for b in 0..dim {
                    k[(a, b)] = u[(j * dim + a, b)];
                }
            }
            k
        })
        .collect();
    KrausChannel::new(kraus).expect("isometry blocks form a channel")
}

/// `(1-s) * identity + s * random channel`.
pub fn near_identity_channel(dim: usize, strength: f64, rng: &mut impl Rng) -> KrausChannel {
    let noise = random_channel(dim, 2, rng);
    let mut kraus = vec![ComplexOperator::identity(dim).scale((1.0 - strength).sqrt())];
    kraus.extend(noise.kraus().iter().map(|k| k.scale(strength.sqrt())));
    KrausChannel::new(kraus).expect("mixture of channels is a channel")
}
