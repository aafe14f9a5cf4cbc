//! Random instance generators and independent numerical oracles shared by
//! unit tests, the acceptance suite and the `gradcheck` command.

use rand::Rng;

use crate::encoder::{DocumentEmbeddings, EncoderParams};
use crate::math::{dot, Matrix, Params};

/// Document with `sentences` sentences of 1..=`max_tokens` tokens each,
/// entries uniform in [-1, 1].
pub fn random_document<R: Rng + ?Sized>(
    rng: &mut R,
    sentences: usize,
    max_tokens: usize,
    dim: usize,
) -> DocumentEmbeddings {
    let mats = (0..sentences)
        .map(|_| {
            let l = rng.random_range(1..=max_tokens);
            Matrix {
                rows: l,
                cols: dim,
                data: (0..l * dim).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            }
        })
        .collect();
    DocumentEmbeddings::new("random", dim, mats).expect("generated document is valid")
}

/// Fills every coordinate of `params` uniformly from [-1, 1].
pub fn randomize<P: Params, R: Rng + ?Sized>(params: &mut P, rng: &mut R) {
    for t in params.tensors_mut() {
        t.iter_mut().for_each(|v| *v = rng.random_range(-1.0..=1.0));
    }
}

pub fn random_encoder<R: Rng + ?Sized>(rng: &mut R, dim: usize, hidden: usize) -> EncoderParams {
    let mut p = EncoderParams::zeros(dim, hidden);
    randomize(&mut p, rng);
    p
}

/// Relative residual `||v - P v|| / ||v||` of projecting `v` onto the span of
/// `basis`, via modified Gram-Schmidt with one re-orthogonalization pass.
pub fn span_residual(basis: &[&[f64]], v: &[f64]) -> f64 {
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    let scale = basis
        .iter()
        .map(|b| dot(b, b).sqrt())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    for b in basis {
        let mut u = b.to_vec();
        for _ in 0..2 {
            for q in &ortho {
                let c = dot(&u, q);
                u.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = dot(&u, &u).sqrt();
        if n > 1e-10 * scale {
            ortho.push(u.into_iter().map(|x| x / n).collect());
        }
    }
    let mut r = v.to_vec();
    for _ in 0..2 {
        for q in &ortho {
            let c = dot(&r, q);
            r.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
    let vn = dot(v, v).sqrt();
    if vn == 0.0 {
        0.0
    } else {
        dot(&r, &r).sqrt() / vn
    }
}
