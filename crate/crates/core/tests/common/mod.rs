#![allow(dead_code)]

use eventalloc::{Graph, QuadraticPotential};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random spanning tree plus a few extra edges.
pub fn connected_graph(rng: &mut ChaCha8Rng, n: usize) -> Graph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        edges.push(ordered(order[k], parent));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.25) && !edges.contains(&(i, j)) {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

/// Any graph, possibly disconnected.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Point of the simplex `sum = total`, strictly positive.
pub fn simplex_point(rng: &mut ChaCha8Rng, n: usize, total: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v * total / s).collect()
}

/// Point of the closed simplex, sometimes with zero entries.
pub fn simplex_point_with_zeros(rng: &mut ChaCha8Rng, n: usize, total: f64) -> Vec<f64> {
    let mut raw: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..1.0) })
        .collect();
    if raw.iter().all(|v| *v == 0.0) {
        raw[0] = 1.0;
    }
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v * total / s).collect()
}

pub fn diagonal_potential(rng: &mut ChaCha8Rng, n: usize, total: f64) -> QuadraticPotential {
    let pi: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    QuadraticPotential::from_diagonal(&pi, b, 0.0, total).unwrap()
}

/// `A'A + I` with a random `A`, so well conditioned and dense.
pub fn dense_potential(rng: &mut ChaCha8Rng, n: usize, total: f64) -> QuadraticPotential {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
    let pi = a.transpose() * &a + DMatrix::identity(n, n);
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    QuadraticPotential::new(pi, b, rng.random_range(-1.0..1.0), total).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
