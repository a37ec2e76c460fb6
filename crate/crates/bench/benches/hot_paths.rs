use acord_core::discriminator::{DiscriminatorSet, EpsilonConfig};
use acord_core::envs::{render_stroke, ActionBounds, BrushPose, Shape};
use acord_core::funcapprox::{Activation, MlpSpec};
use acord_core::kspace::FeatureMap;
use acord_core::metrics::{consistency, coverage, AlignmentGrid, DEFAULT_RES, DEFAULT_TOLERANCE};
use acord_core::sac::{ReplayBuffer, Sac, SacConfig};
use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STATE: usize = 10;
const ACT: usize = 4;

fn mlp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spec = MlpSpec::with_hidden(STATE, &[256, 256], 1, Activation::Identity).unwrap();
    let params = spec.init(&mut rng);
    let batch = 256;
    let inputs: Vec<f64> = (0..batch * STATE).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ones = vec![1.0; batch];
    c.bench_function("mlp forward 256x256 batch 256", |b| {
        b.iter(|| spec.forward_batch(params.as_slice(), black_box(&inputs), batch).unwrap())
    });
    c.bench_function("mlp forward+backward 256x256 batch 256", |b| {
        b.iter(|| {
            let tape = spec.forward_batch(params.as_slice(), black_box(&inputs), batch).unwrap();
            spec.backward(params.as_slice(), &tape, &ones)
        })
    });
}

fn filled_buffer(rng: &mut ChaCha8Rng) -> ReplayBuffer {
    let mut buf = ReplayBuffer::new(STATE, ACT, 10_000);
    for _ in 0..5_000 {
        let s: Vec<f64> = (0..STATE).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a: Vec<f64> = (0..ACT).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s2: Vec<f64> = (0..STATE).map(|_| rng.random_range(-1.0..1.0)).collect();
        buf.push(&s, &a, rng.random_range(-1.0..1.0), &s2, rng.random_bool(0.01));
    }
    buf
}

fn sac_update(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let buf = filled_buffer(&mut rng);
    let mut group = c.benchmark_group("sac update");
    group.sample_size(20);
    for (label, hidden, batch) in [("64x64 batch 64", vec![64, 64], 64), ("256x256 batch 256", vec![256, 256], 256)] {
        let cfg = SacConfig {
            hidden,
            batch_size: batch,
            ..SacConfig::default()
        };
        let mut sac = Sac::new(STATE, ActionBounds::symmetric(&[1.0; ACT]), cfg, 2).unwrap();
        let b = buf.sample(batch, &mut rng);
        group.bench_function(label, |bench| bench.iter(|| sac.update(black_box(&b)).unwrap()));
    }
    group.finish();
}

fn disc_update(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let buf = filled_buffer(&mut rng);
    let map = FeatureMap::from_pairs(&[(0, "a"), (1, "b")]).unwrap();
    let mut discs = DiscriminatorSet::new(map, &[64, 64], EpsilonConfig::new(0.1).unwrap(), 3e-3, 256, &mut rng).unwrap();
    c.bench_function("discriminator update, 2 heads, batch 256", |b| {
        b.iter(|| discs.update(black_box(&buf), &mut rng))
    });
}

fn scoring(c: &mut Criterion) {
    let shape = Shape::builtin("heart").unwrap();
    let poses: Vec<BrushPose> = shape
        .sample_polyline(0.005)
        .into_iter()
        .map(|[x, y]| BrushPose { x: x + 0.01, y, height: 0.0, pitch: 0.0 })
        .collect();
    let raster = render_stroke(&poses, DEFAULT_RES);
    let grid = AlignmentGrid::default();
    c.bench_function("render stroke", |b| b.iter(|| render_stroke(black_box(&poses), DEFAULT_RES)));
    c.bench_function("coverage", |b| b.iter(|| coverage(black_box(&raster), &shape, DEFAULT_TOLERANCE).unwrap()));
    let mut group = c.benchmark_group("consistency");
    group.sample_size(10);
    group.bench_function("default grid", |b| {
        b.iter(|| consistency(black_box(&raster), &shape, &grid, DEFAULT_TOLERANCE).unwrap())
    });
    group.finish();
}

criterion_group!(benches, mlp, sac_update, disc_update, scoring);
criterion_main!(benches);
