//! Rough single-core timings of the training-loop kernels.
use std::sync::Arc;
use std::time::Instant;

use inrtomo::geometry::ProjectionGeometry;
use inrtomo::grid::ImageGrid;
use inrtomo::phantom::disk_phantom;
use inrtomo::projector::{forward_project, GridSpec, Projector};
use inrtomo::siren::SirenParams;
use inrtomo::train::{InrTrainer, NetSpec};

fn bench_net(width: usize, freqs: usize, side: usize, iters: usize) {
    let net = NetSpec { depth: 4, width, num_frequencies: freqs, frequency_scale: 4.0, omega0: 30.0 };
    let img = disk_phantom(side, 0.6, 1.0);
    let geom = ProjectionGeometry::parallel(20, 180.0, side).unwrap();
    let sino = forward_project(&img, &geom).unwrap();
    let grid = GridSpec::unit(side);
    let emb = net.embedding(1).unwrap();
    let coords = ImageGrid::pixel_centers(side);
    let features = Arc::new(emb.embed(&coords).unwrap());
    let projector = Arc::new(Projector::new(geom, grid));
    let spec = net.siren_spec();
    let init = SirenParams::init(spec, 2).unwrap().flatten();
    let mut tr = InrTrainer::new(init, spec, features, projector, &sino, 1e-4).unwrap();
    // warmup
    for _ in 0..5 { tr.step().unwrap(); }
    let t0 = Instant::now();
    for _ in 0..iters { tr.step().unwrap(); }
    let dt = t0.elapsed().as_secs_f64();
    println!("side {side:4} width {width:3} freqs {freqs:3}: {:.3} ms/iter  ({:.1} s per 2000 iters)",
        dt / iters as f64 * 1e3, dt / iters as f64 * 2000.0);
}

fn main() {
    // raw sin_cos throughput
    let z: Vec<f64> = (0..1_000_000).map(|i| (i as f64) * 0.001 - 500.0).collect();
    let mut s = vec![0.0; z.len()];
    let mut c = vec![0.0; z.len()];
    let t0 = Instant::now();
    for _ in 0..20 { inrtomo::fastmath::sin_cos_slice(&z, &mut s, &mut c); }
    let dt = t0.elapsed().as_secs_f64();
    println!("sin_cos: {:.2} ns/elem (checksum {})", dt / 20.0 / z.len() as f64 * 1e9, s[123] + c[456]);
    let t0 = Instant::now();
    let mut acc = 0.0;
    for _ in 0..2 { for &x in &z { acc += x.sin(); } }
    println!("libm sin: {:.2} ns/elem (checksum {acc})", t0.elapsed().as_secs_f64() / 2.0 / z.len() as f64 * 1e9);

    bench_net(32, 16, 64, 60);
    bench_net(48, 24, 64, 40);
    bench_net(64, 32, 64, 30);
    bench_net(32, 16, 32, 60);
}
