use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dcaa_bench::Fixture;
use dcaa_core::response::dcaa_response;
use dcaa_core::sensing::{music_spectrum, polish_peaks, sample_covariance, subspace_split, ScanGrid};
use dcaa_core::Direction;

fn response(c: &mut Criterion) {
    let f = Fixture::new();
    let d = Direction::from_degrees(37.0, 42.0);
    c.bench_function("dcaa_response_397_ports", |b| b.iter(|| dcaa_response(&f.array, black_box(d))));
}

fn subspace(c: &mut Criterion) {
    let f = Fixture::new();
    let cov = sample_covariance(&f.snapshots.y).unwrap();
    c.bench_function("sample_covariance_8x128", |b| b.iter(|| sample_covariance(black_box(&f.snapshots.y))));
    c.bench_function("subspace_split_8x8", |b| b.iter(|| subspace_split(black_box(&cov), 3)));
}

fn spectrum(c: &mut Criterion) {
    let f = Fixture::new();
    let decomp = subspace_split(&sample_covariance(&f.snapshots.y).unwrap(), 3).unwrap();
    let window = ScanGrid::window(30f64.to_radians(), 50f64.to_radians(), 30f64.to_radians(), 50f64.to_radians(), 0.25f64.to_radians())
        .unwrap();
    let full = f.cfg.scan.grid().unwrap();
    let mut g = c.benchmark_group("music");
    g.sample_size(10);
    g.bench_function("spectrum_20deg_window", |b| b.iter(|| music_spectrum(&decomp, &f.array, &f.selection, black_box(&window))));
    g.bench_function("spectrum_full_hemisphere", |b| b.iter(|| music_spectrum(&decomp, &f.array, &f.selection, black_box(&full))));
    let spec = music_spectrum(&decomp, &f.array, &f.selection, &window);
    let opts = f.cfg.scan.peak_options(f.paths.len());
    g.bench_function("polish_peaks", |b| b.iter(|| polish_peaks(&decomp, &f.array, &f.selection, black_box(&spec), &opts)));
    g.finish();
}

criterion_group!(benches, response, subspace, spectrum);
criterion_main!(benches);
