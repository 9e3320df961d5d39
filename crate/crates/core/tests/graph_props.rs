mod common;

use common::*;
use eventalloc::Graph;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn check_laplacian(graph: &Graph, p: &[f64], total: f64) {
    let l = graph.laplacian(p).unwrap();
    let n = graph.n();
    let scale = total * total;
    for s in l.row_sums() {
        assert!(s.abs() <= 1e-12 * scale, "row sum {s}");
    }
    for i in 0..n {
        for j in 0..n {
            assert_eq!(l.get(i, j), l.get(j, i));
        }
    }
    let eig = l.eigenvalues();
    assert!(eig[0] >= -1e-10 * scale, "smallest eigenvalue {}", eig[0]);
    let bound = graph.spectral_norm_bound(total).unwrap();
    assert!(l.spectral_norm() <= bound.eta * (1.0 + 1e-12));
}

#[test]
fn laplacian_invariants_on_1000_simplex_points() {
    let mut r = rng(1);
    for k in 0..1000 {
        let n = 2 + k % 9;
        let total = [1.0, 10.0, 140.0][k % 3];
        let graph = random_graph(&mut r, n, 0.5);
        let p = simplex_point_with_zeros(&mut r, n, total);
        check_laplacian(&graph, &p, total);
    }
}

#[test]
fn laplacian_matches_dense_definition() {
    let mut r = rng(2);
    for _ in 0..50 {
        let graph = connected_graph(&mut r, 6);
        let p = simplex_point(&mut r, 6, 3.0);
        let mut expect = DMatrix::zeros(6, 6);
        for &(i, j) in graph.edges() {
            expect[(i, j)] = -p[i] * p[j];
            expect[(j, i)] = -p[i] * p[j];
        }
        for i in 0..6 {
            expect[(i, i)] = -expect.row(i).sum();
        }
        let l = graph.laplacian(&p).unwrap();
        assert!((l.matrix() - &expect).amax() < 1e-14);
        let x: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let mv = &expect * nalgebra::DVector::from_row_slice(&x);
        assert!(max_abs_diff(&graph.apply_laplacian(&p, &x), mv.as_slice()) < 1e-13);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fiedler_positive_iff_connected(seed in any::<u64>(), n in 2usize..9, density in 0.05f64..0.7) {
        let mut r = rng(seed);
        let graph = random_graph(&mut r, n, density);
        let p = simplex_point(&mut r, n, n as f64);
        let l2 = graph.laplacian(&p).unwrap().fiedler_value().unwrap();
        if graph.is_connected() {
            prop_assert!(l2 > 1e-9);
        } else {
            prop_assert!(l2.abs() < 1e-9);
        }
    }

    #[test]
    fn components_ignore_edge_order(seed in any::<u64>(), n in 1usize..12) {
        let mut r = rng(seed);
        let graph = random_graph(&mut r, n, 0.2);
        let mut edges = graph.edges().to_vec();
        edges.shuffle(&mut r);
        let flipped: Vec<_> = edges.iter().map(|&(i, j)| (j, i)).collect();
        let again = Graph::new(n, flipped).unwrap();
        prop_assert_eq!(graph.connected_components(), again.connected_components());
        let covered: usize = graph.connected_components().iter().map(Vec::len).sum();
        prop_assert_eq!(covered, n);
    }

    #[test]
    fn component_fiedler_values_are_positive(seed in any::<u64>(), n in 2usize..10) {
        let mut r = rng(seed);
        let graph = random_graph(&mut r, n, 0.3);
        let p = simplex_point(&mut r, n, 1.0);
        let l2 = graph.component_fiedler_values(&p).unwrap();
        for c in graph.connected_components() {
            for &i in &c {
                match l2[i] {
                    Some(v) => prop_assert!(c.len() > 1 && v > 0.0),
                    None => prop_assert_eq!(c.len(), 1),
                }
            }
        }
    }
}
