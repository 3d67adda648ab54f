mod common;

use common::*;
use higsfa::node::{train_gsfa_node_with_output, SlowScaling};
use higsfa::{
    fit_global_reconstruction, gen_latent_regression_with, gen_toy_infoloss, linear_graph, node_delta_report, presets,
    reconstruction_error, serial_graph, train_gsfa, train_network, train_network_with_output, train_node, Error,
    ExpansionSpec, GlobalReconstructionModel, LatentRegressionParams, NodeConfig, ScalingMode, SlowPartRule, Term,
    TermKind,
};
use ndarray::{concatenate, s, Array1, Array2, Axis};

#[test]
fn toy_bottom_node_keeps_the_fast_product() {
    let d = gen_toy_infoloss(10_000, [0.05, 0.1, 0.2, 0.5], 3).unwrap();
    let x = d.x.slice(s![.., ..2]).to_owned();
    let g = linear_graph(x.nrows()).unwrap();
    let cfg = NodeConfig::new(2).with_expansion(ExpansionSpec::quadratic());
    let node = train_node(&x.view(), &g, &cfg).unwrap();
    assert_eq!(node.n_slow, 1);
    let y = node.extract(&x.view()).unwrap();
    let product: Vec<f64> = x.column(1).to_vec();
    let rho_slow = pearson(&y.column(0).to_vec(), &x.column(0).to_vec()).abs();
    let rho_rec = pearson(&y.column(1).to_vec(), &product).abs();
    assert!(rho_slow > 0.95, "{rho_slow}");
    assert!(rho_rec > 0.95, "{rho_rec}");
    assert!(pearson(&product, d.latent("s1").unwrap()).abs() < 0.1);
}

#[test]
fn high_threshold_spans_the_expanded_gsfa_space() {
    let x = smooth_mixture(600, 3, 20);
    let g = linear_graph(600).unwrap();
    let q = ExpansionSpec::quadratic();
    let cfg = NodeConfig::new(5)
        .with_expansion(q.clone())
        .with_slow_part(SlowPartRule::DeltaThreshold(4.0));
    let node = train_node(&x.view(), &g, &cfg).unwrap();
    assert_eq!(node.n_slow, 5);
    let y = node.extract(&x.view()).unwrap();
    let xc = &x - &x.mean_axis(Axis(0)).unwrap();
    let z = q.expand_batch(&xc.view()).unwrap();
    let ys = train_gsfa(&z.view(), &g, 5).unwrap().extract(&z.view()).unwrap();
    assert!(span_residual(&ys.view(), &y.view()) < 1e-8);
    assert!(span_residual(&y.view(), &ys.view()) < 1e-8);
}

#[test]
fn extraction_properties() {
    let base = smooth_mixture(200, 4, 21);
    // symmetric data set: every sample and its negation
    let x = concatenate(Axis(0), &[base.view(), (-&base).view()]).unwrap();
    let g = linear_graph(400).unwrap();
    let node = train_node(&x.view(), &g, &NodeConfig::new(3)).unwrap();
    let zero = node.extract(&Array2::<f64>::zeros((1, 4)).view()).unwrap();
    assert!(zero.iter().all(|v| v.abs() < 1e-8), "{zero}");

    let batch = node.extract(&x.view()).unwrap();
    for i in (0..400).step_by(37) {
        let one = node.extract(&x.slice(s![i..i + 1, ..])).unwrap();
        let d = (&one.row(0) - &batch.row(i)).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(d < 1e-12);
    }

    let report = node_delta_report(&node, &x.view(), &g).unwrap();
    assert_eq!(report.deltas.len(), 3);
    for j in 0..node.n_slow {
        assert!((report.deltas[j] - node.gsfa.deltas[j]).abs() < 1e-8);
    }

    let rec = node.reconstruct(&Array2::<f64>::zeros((1, 3)).view()).unwrap();
    let expected = &node.b + &node.x_mean;
    assert!(rec.row(0).iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn reconstruction_error_falls_with_more_components() {
    let x = smooth_mixture(400, 6, 22);
    let g = linear_graph(400).unwrap();
    let mut last = f64::INFINITY;
    for d in 2..=6 {
        let cfg = NodeConfig::new(d).with_slow_part(SlowPartRule::Fixed(2));
        let node = train_node(&x.view(), &g, &cfg).unwrap();
        assert_eq!(node.n_slow, 2);
        let xr = node.reconstruct(&node.extract(&x.view()).unwrap().view()).unwrap();
        let e = reconstruction_error(&x.view(), &xr.view()).unwrap();
        assert!(e <= last + 1e-12, "D={d}: {e} > {last}");
        last = e;
    }
    assert!(last < 1e-20);
}

#[test]
fn forced_slow_part_ignores_the_threshold() {
    let x = smooth_mixture(400, 6, 23);
    let g = linear_graph(400).unwrap();
    let by_threshold = train_node(&x.view(), &g, &NodeConfig::new(5)).unwrap();
    let forced = train_node(&x.view(), &g, &NodeConfig::new(5).with_slow_part(SlowPartRule::Fixed(4))).unwrap();
    assert_ne!(by_threshold.n_slow, 4);
    assert_eq!(forced.n_slow, 4);
    let capped = train_node(&x.view(), &g, &NodeConfig::new(3).with_slow_part(SlowPartRule::Fixed(9))).unwrap();
    assert_eq!(capped.n_slow, 3);
}

#[test]
fn qr_perturbation_moves_reconstruction_by_epsilon() {
    let x = smooth_mixture(400, 6, 24);
    let g = linear_graph(400).unwrap();
    let cfg = NodeConfig::new(4)
        .with_slow_part(SlowPartRule::Fixed(3))
        .with_scaling(ScalingMode::Qr);
    let node = train_node(&x.view(), &g, &cfg).unwrap();
    let sig = node.signals(&x.view()).unwrap();
    let base = node.slow_reconstruction(&sig.slow_scaled.view());
    for (j, eps) in [(0usize, 0.3), (1, -1.7), (2, 1e-3)] {
        let mut ys = sig.slow_scaled.clone();
        ys.column_mut(j).mapv_inplace(|v| v + eps);
        let moved = node.slow_reconstruction(&ys.view());
        for (a, b) in moved.rows().into_iter().zip(base.rows()) {
            let d = (&a - &b).mapv(|v| v * v).sum().sqrt();
            assert!((d - f64::abs(eps)).abs() < 1e-10, "{d} vs {eps}");
        }
    }
    let SlowScaling::Qr { q, r } = &node.scaling else { panic!("QR mode expected") };
    assert!(max_abs_diff(&q.dot(r).view(), &node.m.view()) < 1e-10);
    for i in 0..r.nrows() {
        for k in 0..i {
            assert_eq!(r[[i, k]], 0.0);
        }
    }
}

#[test]
fn sensitivity_scaling_is_not_jointly_additive() {
    let x = smooth_mixture(400, 6, 25);
    let g = linear_graph(400).unwrap();
    let cfg = NodeConfig::new(4).with_slow_part(SlowPartRule::Fixed(3));
    let node = train_node(&x.view(), &g, &cfg).unwrap();
    let sig = node.signals(&x.view()).unwrap();
    let base = node.slow_reconstruction(&sig.slow_scaled.slice(s![..1, ..]));
    let eps = 0.5;
    let shift = |cols: &[usize]| {
        let mut ys = sig.slow_scaled.slice(s![..1, ..]).to_owned();
        for &c in cols {
            ys[[0, c]] += eps;
        }
        let moved = node.slow_reconstruction(&ys.view());
        (&moved - &base).mapv(|v| v * v).sum()
    };
    // a single feature moves the reconstruction by exactly eps
    for j in 0..3 {
        assert!((shift(&[j]).sqrt() - eps).abs() < 1e-10);
    }
    // two features together do not add up in squared norm
    let joint = shift(&[0, 1]);
    assert!((joint - 2.0 * eps * eps).abs() > 1e-6, "joint {joint}");
}

#[test]
fn node_argument_errors() {
    let x = smooth_mixture(50, 3, 26);
    let g = linear_graph(50).unwrap();
    assert!(matches!(train_node(&x.view(), &g, &NodeConfig::new(4)), Err(Error::InvalidArgument(_))));
    let small = x.slice(s![..4, ..]).to_owned();
    let g4 = linear_graph(4).unwrap();
    assert!(train_node(&small.view(), &g4, &NodeConfig::new(4).with_expansion(ExpansionSpec::quadratic())).is_err());
}

#[test]
fn e08_gsfa_ignores_diagonal_input_scaling() {
    let x = smooth_mixture(500, 4, 27);
    let g = linear_graph(500).unwrap();
    let spec = ExpansionSpec::new(vec![Term::full(TermKind::Identity), Term::full(TermKind::E08)]);
    let scales = Array1::from(vec![0.1, 2.0, 7.5, 0.9]);
    let xs = &x * &scales;
    let (_, a) = train_gsfa_node_with_output(&x.view(), &g, 5, &spec).unwrap();
    let (_, b) = train_gsfa_node_with_output(&xs.view(), &g, 5, &spec).unwrap();
    assert!(sign_aligned_max_diff(&a.view(), &b.view()) < 1e-6);
}

#[test]
fn quadratic_gsfa_ignores_linear_premixing() {
    let x = smooth_mixture(500, 4, 28);
    let g = linear_graph(500).unwrap();
    let mix = randn(4, 4, 29) + &(Array2::<f64>::eye(4) * 3.0);
    let xm = x.dot(&mix);
    let q = ExpansionSpec::quadratic();
    let (_, a) = train_gsfa_node_with_output(&x.view(), &g, 6, &q).unwrap();
    let (_, b) = train_gsfa_node_with_output(&xm.view(), &g, 6, &q).unwrap();
    assert!(sign_aligned_max_diff(&a.view(), &b.view()) < 1e-6);
}

fn latent_data(n: usize, seed: u64) -> higsfa::DatasetBundle {
    gen_latent_regression_with(
        &LatentRegressionParams {
            n,
            ..Default::default()
        },
        seed,
    )
    .unwrap()
}

#[test]
fn network_features_survive_graph_rescaling() {
    let data = latent_data(2000, 30);
    let (g, _) = serial_graph(data.numeric_label("theta").unwrap(), 20).unwrap();
    let spec = presets::network("latent64_higsfa").unwrap();
    let a = train_network(&spec, &data.x.view(), &g).unwrap();
    let b = train_network(&spec, &data.x.view(), &g.scaled(10.0, 3.0)).unwrap();
    let ya = a.extract(&data.x.view()).unwrap();
    let yb = b.extract(&data.x.view()).unwrap();
    let scale = ya.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(sign_aligned_max_diff(&ya.view(), &yb.view()) < 1e-6 * scale);
}

#[test]
fn global_reconstruction_orders_and_bounds() {
    let data = latent_data(3000, 31);
    let (g, _) = serial_graph(data.numeric_label("theta").unwrap(), 30).unwrap();
    let x = data.x.view();
    let chance = GlobalReconstructionModel::constant(x.mean_axis(Axis(0)).unwrap(), 10);
    let yc = Array2::<f64>::zeros((x.nrows(), 10));
    let e_chance = reconstruction_error(&x, &chance.reconstruct(&yc.view()).unwrap().view()).unwrap();
    assert!((e_chance - 1.0).abs() < 1e-12);

    let mut errors = Vec::new();
    for name in ["latent64_higsfa", "latent64_hgsfa"] {
        let spec = presets::network(name).unwrap();
        let (_, y) = train_network_with_output(&spec, &x, &g).unwrap();
        let model = fit_global_reconstruction(&x, &y.view()).unwrap();
        let e = reconstruction_error(&x, &model.reconstruct(&y.view()).unwrap().view()).unwrap();
        errors.push(e);
    }
    let p = higsfa::train_pca(&x, 10).unwrap();
    let e_pca = reconstruction_error(&x, &p.invert(&p.apply(&x).unwrap().view()).unwrap().view()).unwrap();
    assert!(e_pca <= errors[0] + 1e-9, "PCA {e_pca} vs HiGSFA {}", errors[0]);
    assert!(errors[0] < errors[1], "{errors:?}");
    assert!(errors[1] < 1.0);
}
