//! Ground-truth factor matrices for the synthetic benchmarks.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Block boundaries scale with the matrix size; at the default 200x100 they
/// are samples 35/80/140 and taxa 25/35/60.
fn scaled(boundary: usize, size: usize, reference: usize) -> usize {
    (boundary * size + reference / 2) / reference
}

/// Generates the rank-3 ground truth: block-structured score and loading
/// matrices with Gaussian jitter (sd 0.06 for scores, 0.05 for loadings),
/// plus the 4-group labels implied by the block boundaries.
///
/// At the reference shape (n=200, m=100) the nonzero blocks are, in 1-based
/// index ranges: scores (36:80,1)=2.0, (81:140,1)=1.7, (1:35,2)=1.8,
/// (36:80,2)=0.9, (36:200,3)=1.7; loadings (61:100,1)=1.7, (36:60,2)=1.7,
/// (61:100,2)=1.0, (1:25,3)=1.7, (26:100,3)=0.9.
pub fn generate_truth<R: Rng>(
    n: usize,
    m: usize,
    rng: &mut R,
) -> (Array2<f64>, Array2<f64>, Vec<usize>, Vec<usize>) {
    let b1 = scaled(35, n, 200);
    let b2 = scaled(80, n, 200);
    let b3 = scaled(140, n, 200);
    let c1 = scaled(25, m, 100);
    let c2 = scaled(35, m, 100);
    let c3 = scaled(60, m, 100);

    let mut u = Array2::zeros((n, 3));
    for i in b1..b2 {
        u[[i, 0]] = 2.0;
        u[[i, 1]] = 0.9;
    }
    for i in b2..b3 {
        u[[i, 0]] = 1.7;
    }
    for i in 0..b1 {
        u[[i, 1]] = 1.8;
    }
    for i in b1..n {
        u[[i, 2]] = 1.7;
    }

    let mut v = Array2::zeros((m, 3));
    for j in c3..m {
        v[[j, 0]] = 1.7;
        v[[j, 1]] = 1.0;
    }
    for j in c2..c3 {
        v[[j, 1]] = 1.7;
    }
    for j in 0..c1 {
        v[[j, 2]] = 1.7;
    }
    for j in c1..m {
        v[[j, 2]] = 0.9;
    }

    let jitter_u = Normal::new(0.0, 0.06).expect("valid sd");
    for value in u.iter_mut() {
        *value += jitter_u.sample(rng);
    }
    let jitter_v = Normal::new(0.0, 0.05).expect("valid sd");
    for value in v.iter_mut() {
        *value += jitter_v.sample(rng);
    }

    let sample_groups = (0..n)
        .map(|i| {
            if i < b1 {
                0
            } else if i < b2 {
                1
            } else if i < b3 {
                2
            } else {
                3
            }
        })
        .collect();
    let taxon_groups = (0..m)
        .map(|j| {
            if j < c1 {
                0
            } else if j < c2 {
                1
            } else if j < c3 {
                2
            } else {
                3
            }
        })
        .collect();
    (u, v, sample_groups, taxon_groups)
}
