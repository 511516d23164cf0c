//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use mnar_bounds::simlab::Dgp;
use mnar_bounds::StratumTable;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A strictly positive point on the simplex (Dirichlet(1)).
pub fn simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln() + 1e-3).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn stochastic(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for (c, v) in simplex(rng, cols).into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    m
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, k: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..k).map(|_| rng.gen_range(lo..=hi)).collect()
}

pub fn random_dgp(rng: &mut ChaCha8Rng, m: usize, m_f: usize, pi: (f64, f64)) -> Dgp {
    let p = simplex(rng, m);
    let f = stochastic(rng, m, m_f);
    let pi = uniform_vec(rng, m, pi.0, pi.1);
    Dgp::new(p, f, pi).unwrap()
}

pub fn random_table(rng: &mut ChaCha8Rng, m: usize, m_f: usize, pi: (f64, f64)) -> StratumTable {
    random_dgp(rng, m, m_f, pi).exact_table()
}

pub fn mean(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(y, q)| (y + 1) as f64 * q).sum()
}
