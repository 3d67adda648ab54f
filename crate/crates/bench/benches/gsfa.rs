use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use higsfa::{clustered_graph, linear_graph, serial_graph, train_gsfa, TrainingGraph};
use higsfa_bench::{drifting_data, ramp_labels};

fn explicit(g: &TrainingGraph) -> TrainingGraph {
    TrainingGraph::from_edges(g.n_samples(), g.vertex_weights().to_vec(), g.edges()).unwrap()
}

fn bench_graph_paths(c: &mut Criterion) {
    let n = 2000;
    let x = drifting_data(n, 20, 1);
    let classes: Vec<usize> = (0..n).map(|i| i * 20 / n).collect();
    let (serial, _) = serial_graph(&ramp_labels(n), 20).unwrap();
    let graphs = [
        ("clustered", clustered_graph(&classes).unwrap()),
        ("serial", serial),
    ];
    let mut group = c.benchmark_group("gsfa_graph");
    group.sample_size(10);
    for (name, g) in &graphs {
        let slow = explicit(g);
        group.bench_function(BenchmarkId::new("fast", name), |b| {
            b.iter(|| train_gsfa(&x.view(), g, 5).unwrap())
        });
        group.bench_function(BenchmarkId::new("explicit", name), |b| {
            b.iter(|| train_gsfa(&x.view(), &slow, 5).unwrap())
        });
    }
    group.finish();
}

fn bench_scaling(c: &mut Criterion) {
    let mut group = c.benchmark_group("gsfa_linear_scaling");
    group.sample_size(10);
    for n in [5_000, 10_000, 20_000] {
        let x = drifting_data(n, 30, 2);
        let g = linear_graph(n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| train_gsfa(&x.view(), &g, 10).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_graph_paths, bench_scaling);
criterion_main!(benches);
