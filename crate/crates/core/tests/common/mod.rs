#![allow(dead_code)]

use std::path::PathBuf;

use lpv_wprime::model::{LpvStateSpace, PMatrixFunction, SchedulingDomain};
use lpv_wprime::simulate::Trajectory;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

/// Parameter-independent model over the unit box, frozen at `p = [0]`.
pub fn random_frozen_model(
    rng: &mut ChaCha8Rng,
    n_x: usize,
    n_u: usize,
    n_y: usize,
) -> LpvStateSpace {
    LpvStateSpace::constant(
        random_matrix(rng, n_x, n_x, 2.0),
        random_matrix(rng, n_x, n_u, 2.0),
        random_matrix(rng, n_y, n_x, 2.0),
        random_matrix(rng, n_y, n_u, 2.0),
        SchedulingDomain::new(vec![0.0], vec![1.0]).unwrap(),
    )
    .unwrap()
}

/// Affine LPV model on `[-1, 1]^np`, shifted so that frozen dynamics are
/// mostly stable and trajectories stay bounded over a few hundred steps.
pub fn random_lpv_model(rng: &mut ChaCha8Rng, max_nx: usize) -> LpvStateSpace {
    let n_x = rng.random_range(1..=max_nx);
    let n_u = rng.random_range(1..=3);
    let n_y = rng.random_range(1..=3);
    let n_p = rng.random_range(1..=2);
    let affine = |rng: &mut ChaCha8Rng, r: usize, c: usize, base: DMatrix<f64>| {
        let slopes = (0..n_p).map(|_| random_matrix(rng, r, c, 0.5)).collect();
        PMatrixFunction::affine(base, slopes).unwrap()
    };
    let a0 = random_matrix(rng, n_x, n_x, 1.0) - DMatrix::identity(n_x, n_x) * 2.5;
    let b0 = random_matrix(rng, n_x, n_u, 2.0);
    let c0 = random_matrix(rng, n_y, n_x, 2.0);
    let d0 = random_matrix(rng, n_y, n_u, 2.0);
    LpvStateSpace::new(
        affine(rng, n_x, n_x, a0),
        affine(rng, n_x, n_u, b0),
        affine(rng, n_y, n_x, c0),
        affine(rng, n_y, n_u, d0),
        SchedulingDomain::new(vec![-1.0; n_p], vec![1.0; n_p]).unwrap(),
    )
    .unwrap()
}

/// Smooth random scheduling inside `[-1, 1]` and a random multisine input.
pub fn random_trajectory(rng: &mut ChaCha8Rng, model: &LpvStateSpace, ts: f64, n: usize) -> Trajectory {
    let mut p = DMatrix::zeros(n, model.n_p());
    for j in 0..model.n_p() {
        let amp = rng.random_range(0.1..0.9);
        let w = rng.random_range(0.1..3.0);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let offset = rng.random_range(-0.1..0.1);
        for k in 0..n {
            p[(k, j)] = offset + amp * (w * k as f64 * ts + phase).sin();
        }
    }
    let mut u = DMatrix::zeros(n, model.n_u());
    for j in 0..model.n_u() {
        let (a1, w1) = (rng.random_range(-2.0..2.0), rng.random_range(0.1..5.0));
        let (a2, w2) = (rng.random_range(-1.0..1.0), rng.random_range(0.1..20.0));
        for k in 0..n {
            let t = k as f64 * ts;
            u[(k, j)] = a1 * (w1 * t).sin() + a2 * (w2 * t).cos() + rng.random_range(-0.1..0.1);
        }
    }
    Trajectory::new(ts, p, u).unwrap()
}
