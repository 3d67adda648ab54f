mod common;

use common::*;
use higsfa::gsfa::weighted_moments;
use higsfa::{
    clustered_graph, combine_graphs, delta_of, linear_graph, serial_graph, train_gsfa, train_pca, validate_graph, Edge,
    TrainingGraph,
};
use ndarray::{s, Array2};
use proptest::prelude::*;

fn edge_map(g: &TrainingGraph) -> std::collections::BTreeMap<(usize, usize), f64> {
    g.edges().into_iter().map(|e| ((e.i, e.j), e.weight)).collect()
}

#[test]
fn serial_example_weights_and_normalizers() {
    let labels: Vec<f64> = (1..=6).map(f64::from).collect();
    let (g, gs) = serial_graph(&labels, 3).unwrap();
    assert_eq!(g.vertex_weights(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0]);
    assert_eq!(g.n_edges(), 8);
    assert!(g.edges().iter().all(|e| e.weight == 1.0));
    assert_eq!(g.vertex_normalizer(), 8.0);
    assert_eq!(g.edge_normalizer(), 16.0);
    assert_eq!(gs.group_sizes, vec![2, 2, 2]);
    assert_eq!(gs.representative_labels, vec![1.5, 3.5, 5.5]);

    // N=7, L=3: sizes (3,2,2) and every pair across consecutive groups
    let labels: Vec<f64> = (0..7).map(f64::from).collect();
    let (g, gs) = serial_graph(&labels, 3).unwrap();
    assert_eq!(gs.group_sizes, vec![3, 2, 2]);
    let edges = edge_map(&g);
    let mut expected = 0;
    for i in 0..7 {
        for j in i + 1..7 {
            if gs.group_of_sample[i].abs_diff(gs.group_of_sample[j]) == 1 {
                assert_eq!(edges.get(&(i, j)), Some(&1.0), "missing edge ({i}, {j})");
                expected += 1;
            }
        }
    }
    assert_eq!(expected, 10);
    assert_eq!(edges.len(), 10);

    // one sample per group is a chain
    let labels: Vec<f64> = (0..5).map(f64::from).collect();
    let (g, _) = serial_graph(&labels, 5).unwrap();
    assert_eq!(g.vertex_weights(), &[1.0, 2.0, 2.0, 2.0, 1.0]);
    assert_eq!(g.n_edges(), 4);
}

#[test]
fn serial_group_members_share_neighbourhoods() {
    let labels: Vec<f64> = (0..23).map(|i| ((i * 7) % 23) as f64).collect();
    let (g, gs) = serial_graph(&labels, 4).unwrap();
    let edges = edge_map(&g);
    let neighbours = |n: usize| -> Vec<(usize, u64)> {
        let mut v: Vec<(usize, u64)> = edges
            .iter()
            .filter_map(|(&(i, j), &w)| {
                if i == n {
                    Some((j, w.to_bits()))
                } else if j == n {
                    Some((i, w.to_bits()))
                } else {
                    None
                }
            })
            .collect();
        v.sort_unstable();
        v
    };
    for a in 0..23 {
        for b in 0..23 {
            if a != b && gs.group_of_sample[a] == gs.group_of_sample[b] {
                assert_eq!(neighbours(a), neighbours(b), "samples {a} and {b}");
            }
        }
    }
}

#[test]
fn clustered_example_weights_and_isolated_vertex() {
    let g = clustered_graph(&[0, 0, 1, 1, 1]).unwrap();
    let edges = edge_map(&g);
    assert_eq!(edges.len(), 4);
    assert_eq!(edges[&(0, 1)], 1.0);
    for pair in [(2, 3), (2, 4), (3, 4)] {
        assert_eq!(edges[&pair], 0.5);
    }

    let g = clustered_graph(&[0, 0, 0, 7]).unwrap();
    let findings = validate_graph(&g);
    assert_eq!(findings.len(), 1);
    assert_eq!(findings[0].to_string(), "isolated vertex 3");
    let x = randn(4, 2, 1);
    let m = weighted_moments(&x.view(), &g).unwrap();
    assert_eq!(m.mean.len(), 2);
}

#[test]
fn clustered_gsfa_separates_blobs() {
    let n_per = 200;
    let centers = [(0.0, 0.0), (6.0, 0.0), (0.0, 6.0)];
    let noise = randn(3 * n_per, 2, 3);
    let mut x = Array2::<f64>::zeros((3 * n_per, 2));
    let mut classes = Vec::new();
    for (c, &(cx, cy)) in centers.iter().enumerate() {
        for k in 0..n_per {
            let i = c * n_per + k;
            x[[i, 0]] = cx + 0.3 * noise[[i, 0]];
            x[[i, 1]] = cy + 0.3 * noise[[i, 1]];
            classes.push(c);
        }
    }
    let g = clustered_graph(&classes).unwrap();
    let model = train_gsfa(&x.view(), &g, 2).unwrap();
    assert!(model.deltas.iter().all(|&d| d < 2.0), "{:?}", model.deltas);
    let y = model.extract(&x.view()).unwrap();
    for c in 0..3 {
        let block = y.slice(s![c * n_per..(c + 1) * n_per, ..]);
        for col in block.columns() {
            let m = col.mean().unwrap();
            let var = col.mapv(|v| (v - m) * (v - m)).mean().unwrap();
            assert!(var < 0.05, "class {c} variance {var}");
        }
    }
}

#[test]
fn combination_examples() {
    let a = clustered_graph(&[0, 0, 1, 1]).unwrap();
    let b = clustered_graph(&[0, 1, 1, 0]).unwrap();
    let c = clustered_graph(&[0, 0, 0, 1]).unwrap();
    let ab = combine_graphs(&[a.clone(), b.clone()]).unwrap();
    assert_eq!(ab.vertex_weights(), &[2.0; 4]);
    let both = combine_graphs(&[a.clone(), a.clone()]).unwrap();
    assert_eq!(edge_map(&both)[&(0, 1)], 2.0);

    let single = combine_graphs(std::slice::from_ref(&a)).unwrap();
    assert_eq!(edge_map(&single), edge_map(&a));
    assert_eq!(single.edge_normalizer(), a.edge_normalizer());
    assert_eq!(single.vertex_normalizer(), a.vertex_normalizer());

    let ba = combine_graphs(&[b.clone(), a.clone()]).unwrap();
    assert_eq!(edge_map(&ab), edge_map(&ba));
    let left = combine_graphs(&[combine_graphs(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
    let right = combine_graphs(&[a.clone(), combine_graphs(&[b.clone(), c.clone()]).unwrap()]).unwrap();
    assert_eq!(edge_map(&left), edge_map(&right));
    assert_eq!(left.vertex_weights(), right.vertex_weights());

    assert!(combine_graphs(&[a, linear_graph(5).unwrap()]).is_err());
    assert!(combine_graphs(&[]).is_err());
}

#[test]
fn gsfa_recovers_a_slow_sinusoid() {
    let n = 2000;
    let noise = randn(n, 10, 4);
    let signal: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).sin()).collect();
    let mix = randn(10, 10, 5);
    let mut src = noise.clone();
    for i in 0..n {
        src[[i, 0]] = signal[i];
    }
    let x = src.dot(&mix) + &(noise * 0.05);
    let g = linear_graph(n).unwrap();
    let y = train_gsfa(&x.view(), &g, 1).unwrap().extract(&x.view()).unwrap();
    let rho = pearson(&y.column(0).to_vec(), &signal).abs();
    assert!(rho > 0.99, "{rho}");
}

#[test]
fn duplicate_columns_are_truncated() {
    let base = randn(300, 4, 6);
    let mut x = Array2::<f64>::zeros((300, 6));
    x.slice_mut(s![.., ..4]).assign(&base);
    x.column_mut(4).assign(&base.column(1));
    x.column_mut(5).assign(&base.column(3));
    let g = linear_graph(300).unwrap();
    let model = train_gsfa(&x.view(), &g, 4).unwrap();
    assert_eq!(model.rank_used, 4);
    assert!(train_gsfa(&x.view(), &g, 5).is_err());
}

#[test]
fn extraction_centers_and_is_permutation_stable() {
    let n = 120;
    let x = smooth_mixture(n, 5, 7);
    let labels: Vec<f64> = (0..n).map(|i| ((i * 37) % n) as f64).collect();
    let (g, _) = serial_graph(&labels, 6).unwrap();
    let model = train_gsfa(&x.view(), &g, 3).unwrap();
    let at_mean = model.extract(&model.input_offset.view().insert_axis(ndarray::Axis(0))).unwrap();
    assert!(at_mean.iter().all(|v| v.abs() < 1e-12));

    let order: Vec<usize> = (0..n).rev().collect();
    let xp = x.select(ndarray::Axis(0), &order);
    let gp = g.permuted(&order).unwrap();
    let yp = train_gsfa(&xp.view(), &gp, 3).unwrap().extract(&x.view()).unwrap();
    let y = model.extract(&x.view()).unwrap();
    assert!(sign_aligned_max_diff(&y.view(), &yp.view()) < 1e-10);
}

#[test]
fn delta_examples() {
    let g = linear_graph(4).unwrap();
    let y = Array2::from_shape_vec((4, 2), vec![1.0, 3.0, -1.0, 3.0, 1.0, 3.0, -1.0, 3.0]).unwrap();
    let r = delta_of(&y.view(), &g).unwrap();
    assert!((r.deltas[0] - 4.0).abs() < 1e-12);
    assert_eq!(r.deltas[1], 0.0);
    assert_eq!(r.zero_variance, vec![false, true]);

    let n = 10_000;
    let z = randn(n, 1, 8);
    let d = delta_of(&z.view(), &linear_graph(n).unwrap()).unwrap().deltas[0];
    assert!((1.9..=2.1).contains(&d), "{d}");
}

#[test]
fn pca_examples() {
    let n = 10_000;
    let z = randn(n, 2, 9);
    let angle: f64 = 0.7;
    let (c, s) = (angle.cos(), angle.sin());
    let mut x = Array2::<f64>::zeros((n, 2));
    for i in 0..n {
        let (a, b) = (3.0 * z[[i, 0]], 0.5 * z[[i, 1]]);
        x[[i, 0]] = c * a - s * b;
        x[[i, 1]] = s * a + c * b;
    }
    let p = train_pca(&x.view(), 2).unwrap();
    let first = p.components.row(0);
    assert!((first[0] * c + first[1] * s).abs() > 0.999);
    let back = p.invert(&p.apply(&x.view()).unwrap().view()).unwrap();
    assert!(max_abs_diff(&back.view(), &x.view()) < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fast_path_matches_pair_enumeration(
        n in 6usize..=50,
        d in 1usize..=8,
        n_classes in 1usize..=4,
        n_groups in 2usize..=6,
        seed in 0u64..1000,
    ) {
        let x = randn(n, d, seed);
        let labels: Vec<f64> = randn(n, 1, seed + 1).column(0).to_vec();
        let classes: Vec<usize> = (0..n).map(|i| (i * 31 + seed as usize) % n_classes).collect();

        let mut sizes = vec![0usize; n_classes];
        classes.iter().for_each(|&c| sizes[c] += 1);
        let (m, c, dc) = naive_moments(&x.view(), &vec![1.0; n], |i, k| {
            if classes[i] == classes[k] { 1.0 / (sizes[classes[i]] - 1) as f64 } else { 0.0 }
        });
        let fast = weighted_moments(&x.view(), &clustered_graph(&classes).unwrap()).unwrap();
        prop_assert!(fast.mean.iter().zip(&m).all(|(a, b)| (a - b).abs() < 1e-10));
        prop_assert!(max_abs_diff(&fast.cov.view(), &c.view()) < 1e-10);
        prop_assert!(max_abs_diff(&fast.diff_cov.view(), &dc.view()) < 1e-10);

        let n_groups = n_groups.min(n / 2);
        let (sg, _) = serial_graph(&labels, n_groups).unwrap();
        let grp = serial_groups(&labels, n_groups);
        let v: Vec<f64> = grp.iter().map(|&g| if g == 0 || g == n_groups - 1 { 1.0 } else { 2.0 }).collect();
        let (m, c, dc) = naive_moments(&x.view(), &v, |i, k| if grp[i].abs_diff(grp[k]) == 1 { 1.0 } else { 0.0 });
        let fast = weighted_moments(&x.view(), &sg).unwrap();
        prop_assert!(fast.mean.iter().zip(&m).all(|(a, b)| (a - b).abs() < 1e-10));
        prop_assert!(max_abs_diff(&fast.cov.view(), &c.view()) < 1e-10);
        prop_assert!(max_abs_diff(&fast.diff_cov.view(), &dc.view()) < 1e-10);
    }

    #[test]
    fn linear_graph_gsfa_matches_plain_sfa(n in 50usize..400, d in 2usize..8, seed in 0u64..1000) {
        let x = smooth_mixture(n, d, seed);
        let g = linear_graph(n).unwrap();
        let j = d / 2 + 1;
        let y = train_gsfa(&x.view(), &g, j).unwrap().extract(&x.view()).unwrap();
        let oracle = sfa_oracle(&x.view(), j);
        prop_assert!(sign_aligned_max_diff(&oracle.view(), &y.view()) < 1e-6);
    }

    #[test]
    fn gsfa_scale_invariance_and_ordering(
        c in 0.01f64..100.0,
        v in 0.01f64..100.0,
        seed in 0u64..1000,
    ) {
        let n = 200;
        let x = smooth_mixture(n, 4, seed);
        let g = linear_graph(n).unwrap();
        let a = train_gsfa(&x.view(), &g, 4).unwrap();
        prop_assert!(a.deltas.to_vec().windows(2).all(|w| w[0] <= w[1]));
        let b = train_gsfa(&x.view(), &g.scaled(c, v), 4).unwrap();
        let ya = a.extract(&x.view()).unwrap();
        let yb = b.extract(&x.view()).unwrap();
        prop_assert!(sign_aligned_max_diff(&ya.view(), &yb.view()) < 1e-8);
    }

    #[test]
    fn explicit_graph_normalizers(n in 3usize..30, seed in 0u64..1000) {
        let w = randn(n, n, seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if w[[i, j]] > 0.5 {
                    edges.push(Edge::new(j, i, w[[i, j]]));
                }
            }
        }
        let total: f64 = edges.iter().map(|e| e.weight).sum();
        let g = TrainingGraph::from_edges(n, vec![1.5; n], edges).unwrap();
        prop_assert!((g.edge_normalizer() - 2.0 * total).abs() <= 1e-12 * total.max(1.0));
        prop_assert!((g.vertex_normalizer() - 1.5 * n as f64).abs() < 1e-12);
        prop_assert!(g.edges().iter().all(|e| e.i < e.j));
    }
}
