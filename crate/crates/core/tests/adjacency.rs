mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use conicsparse::adjacency::*;
use conicsparse::shapes::{bell20, build_constraint_matrix};
use conicsparse::{vertex_to_facet, Cone, Generators, Mat, Pair};

fn random_pairs(seed: u64, count: usize) -> Vec<Pair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let n = 3 + out.len() % 3;
        let gens = rng.random_range(n + 1..=n + 6);
        if let Some((a, _)) = common::random_cone(&mut rng, n, gens, 14) {
            let cone = Cone::inequalities(Mat::from_rows(&a).unwrap()).unwrap();
            out.push(Pair::from_facets(&cone, &Default::default()).unwrap());
        }
    }
    out
}

#[test]
fn algebraic_and_combinatorial_tests_agree() {
    for pair in random_pairs(21, 25) {
        for i in 0..pair.ray_count() {
            for j in i + 1..pair.ray_count() {
                assert_eq!(
                    algebraic_adjacency_test(&pair, i, j).unwrap(),
                    combinatorial_adjacency_test(&pair, i, j).unwrap()
                );
            }
        }
    }
}

#[test]
fn cliques_match_subset_enumeration() {
    for pair in random_pairs(22, 25) {
        let g = build_adjacency_graph(&pair).unwrap();
        if g.node_count() > 16 {
            continue;
        }
        let fast = enumerate_maximal_cliques(&g).unwrap();
        let slow = common::brute_force_cliques(g.node_count(), |a, b| g.has_edge(a, b));
        assert_eq!(fast.cliques(), slow.as_slice());
    }
}

#[test]
fn random_graph_cliques_match_subset_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..30 {
        let d = rng.random_range(1..=12);
        let p = rng.random_range(0.2..0.9);
        let mut g = AdjacencyGraph::empty(d);
        for i in 0..d {
            for j in i + 1..d {
                if rng.random_bool(p) {
                    g.add_edge(i, j).unwrap();
                }
            }
        }
        let fast = enumerate_maximal_cliques(&g).unwrap();
        let slow = common::brute_force_cliques(d, |a, b| g.has_edge(a, b));
        assert_eq!(fast.cliques(), slow.as_slice());
    }
}

#[test]
fn clique_cap_is_enforced() {
    // complement of a perfect matching on 2k nodes has 2^k maximal cliques
    let k = 6;
    let mut g = AdjacencyGraph::empty(2 * k);
    for i in 0..2 * k {
        for j in i + 1..2 * k {
            if !(i % 2 == 0 && j == i + 1) {
                g.add_edge(i, j).unwrap();
            }
        }
    }
    assert_eq!(enumerate_maximal_cliques(&g).unwrap().len(), 1 << k);
    assert!(matches!(enumerate_maximal_cliques_capped(&g, 10), Err(AdjacencyError::CliqueExplosion { cap: 10 })));
}

#[test]
fn bell20_graph_is_symmetric_and_cliques_are_maximal() {
    let cone: Cone = build_constraint_matrix(&bell20()).unwrap();
    let pair = Pair::from_facets(&cone, &Default::default()).unwrap();
    let g = build_adjacency_graph(&pair).unwrap();
    for (i, j) in g.edges() {
        assert!(g.has_edge(j, i));
    }
    let cliques = enumerate_maximal_cliques(&g).unwrap();
    for c in cliques.cliques() {
        assert!(g.is_clique(c));
        let extendable = (0..g.node_count()).any(|v| !c.contains(&v) && c.iter().all(|&u| g.has_edge(u, v)));
        assert!(!extendable);
    }
    let covered: std::collections::BTreeSet<usize> = cliques.cliques().iter().flatten().copied().collect();
    assert_eq!(covered.len(), pair.ray_count());
}

#[test]
fn weak_sparsity_uses_closed_neighbourhood() {
    let g = AdjacencyGraph::from_edges(4, [(0, 1), (0, 2), (2, 3)]).unwrap();
    assert!(is_weakly_eps_sparse(&g, &[1.0, 1.0, 1.0, 0.0], &1e-9).unwrap());
    assert!(!is_weakly_eps_sparse(&g, &[0.0, 1.0, 0.0, 1.0], &1e-9).unwrap());
    assert!(is_weakly_eps_sparse(&g, &[0.0, 1.0, 0.0, 1e-12], &1e-9).unwrap());
}

#[test]
fn sparse_coefficients_have_unique_representation() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for pair in random_pairs(25, 10) {
        let g = build_adjacency_graph(&pair).unwrap();
        for (i, j) in g.edges() {
            let mut b = vec![0.0; pair.ray_count()];
            b[i] = rng.random_range(0.5..2.0);
            b[j] = rng.random_range(0.5..2.0);
            let mu = pair.vertex().combine(&b);
            assert!(is_conically_sparse(&g, &b, 2, &1e-9).unwrap());
            assert!(representation_uniqueness(&pair, &mu, &b, 1e-8).unwrap());
        }
    }
}

#[test]
fn triangle_off_the_boundary_is_a_clique_without_uniqueness() {
    // bipyramid over a triangle: the three equator rays are pairwise adjacent
    // but span no face, and their sum is also a sum of the two apexes
    let rays = vec![
        vec![1.0, 0.0, 0.0, 1.0],
        vec![0.0, 1.0, 0.0, 1.0],
        vec![-1.0, -1.0, 0.0, 1.0],
        vec![0.0, 0.0, 1.0, 1.0],
        vec![0.0, 0.0, -1.0, 1.0],
    ];
    let facets = vertex_to_facet(&Generators::from_rays(&rays).unwrap(), &1e-10).unwrap();
    let pair = Pair::from_facets(&facets, &Default::default()).unwrap();
    let g = build_adjacency_graph(&pair).unwrap();
    let equator: Vec<usize> = (0..pair.ray_count()).filter(|&k| pair.vertex().matrix().get(2, k).abs() < 1e-12).collect();
    assert_eq!(equator.len(), 3);
    assert!(g.is_clique(&equator));
    let mut b = vec![0.0; pair.ray_count()];
    for &k in &equator {
        b[k] = 1.0;
    }
    let mu = pair.vertex().combine(&b);
    assert!(is_conically_sparse(&g, &b, 3, &1e-9).unwrap());
    assert!(!representation_uniqueness(&pair, &mu, &b, 1e-8).unwrap());
}
