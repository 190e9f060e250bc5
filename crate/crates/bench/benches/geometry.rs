use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use vmono::comparison::{a_b, radial_comparison};
use vmono::ModelSpace;
use vmono_bench::points;

fn distances(c: &mut Criterion) {
    let mut group = c.benchmark_group("distance");
    for (label, b) in [("r3", 0.0), ("s3", 1.0), ("h3", -1.0)] {
        let space = ModelSpace::new(3, b).unwrap();
        let pts = points(&space, 64);
        group.bench_function(label, |bench| {
            bench.iter(|| {
                let mut sum = 0.0;
                for p in &pts {
                    for q in &pts {
                        sum += space.distance(p, q).unwrap();
                    }
                }
                black_box(sum)
            })
        });
    }
    group.finish();
}

fn exp_log(c: &mut Criterion) {
    let space = ModelSpace::new(3, 1.0).unwrap();
    let pts = points(&space, 64);
    c.bench_function("log_then_exp_s3", |bench| {
        bench.iter(|| {
            for w in pts.windows(2) {
                let v = space.log(&w[0], &w[1]).unwrap();
                black_box(space.exp(&v).unwrap());
            }
        })
    });
}

fn comparison(c: &mut Criterion) {
    let radii: Vec<f64> = (1..=1000).map(|k| k as f64 * 3e-3).collect();
    c.bench_function("a_b_sweep", |bench| {
        bench.iter(|| radii.iter().map(|&r| a_b(1.0, r).unwrap().value).sum::<f64>())
    });
    c.bench_function("hyperbolic_comparison_sweep", |bench| {
        bench.iter(|| radii.iter().map(|&r| radial_comparison(-1.0, r).unwrap()).sum::<f64>())
    });
}

criterion_group!(benches, distances, exp_log, comparison);
criterion_main!(benches);
