//! Parallel-vs-sequential throughput of the hot kernels. Every benchmark
//! runs the identical call once with the rayon pool active and once with the
//! sequential override, so the two bars are directly comparable; the results
//! are bit-identical by construction (index-ordered reductions), which the
//! deposit benchmark asserts once up front.

use criterion::{criterion_group, criterion_main, Criterion};
use rvm_core::limitfields::{apply_L, BallLattice, OperatorTerms};
use rvm_core::maxwell::FieldGrid;
use rvm_core::{exec, grid::Grid3, kinematics, pic};

fn uniform(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
}

/// Benchmark `f` under both execution modes.
fn bench_modes<R>(c: &mut Criterion, name: &str, mut f: impl FnMut() -> R) {
    let mut group = c.benchmark_group(name);
    for sequential in [false, true] {
        let label = if sequential { "sequential" } else { "parallel" };
        group.bench_function(label, |b| {
            exec::set_sequential_override(sequential);
            b.iter(&mut f);
            exec::set_sequential_override(false);
        });
    }
    group.finish();
}

/// 2×10⁵ particles streaming through a 64³ grid for half a step.
fn particle_cloud(n: usize, extent: f64, dt: f64) -> (Vec<[f64; 3]>, Vec<[f64; 3]>, Vec<f64>) {
    let mut state = 0xbe9cu64;
    let spec = kinematics::SpeciesSpec {
        mass: 1.0,
        charge: 1.0,
        model: kinematics::Model::Relativistic,
        support_x: 1.0,
        support_p: 0.5,
    };
    let mut x_old = Vec::with_capacity(n);
    let mut x_new = Vec::with_capacity(n);
    let mut cw = Vec::with_capacity(n);
    for _ in 0..n {
        let x = [
            0.4 * extent * (2.0 * uniform(&mut state) - 1.0),
            0.4 * extent * (2.0 * uniform(&mut state) - 1.0),
            0.4 * extent * (2.0 * uniform(&mut state) - 1.0),
        ];
        let p = [
            0.5 * (2.0 * uniform(&mut state) - 1.0),
            0.5 * (2.0 * uniform(&mut state) - 1.0),
            0.5 * (2.0 * uniform(&mut state) - 1.0),
        ];
        let v = kinematics::velocity(p, &spec);
        x_old.push(x);
        x_new.push([x[0] + dt * v[0], x[1] + dt * v[1], x[2] + dt * v[2]]);
        cw.push(1e-6);
    }
    (x_old, x_new, cw)
}

fn bench_deposit(c: &mut Criterion) {
    let (extent, cells, dt) = (20.0, 64usize, 0.2);
    let (x_old, x_new, cw) = particle_cloud(200_000, extent, dt);

    // The two modes must agree bit for bit.
    exec::set_sequential_override(false);
    let par = pic::deposit(&x_old, &x_new, &cw, extent, cells, dt).unwrap();
    exec::set_sequential_override(true);
    let seq = pic::deposit(&x_old, &x_new, &cw, extent, cells, dt).unwrap();
    exec::set_sequential_override(false);
    assert_eq!(par.0.data, seq.0.data, "deposit is not mode-invariant");

    bench_modes(c, "deposit_200k_64c", || {
        pic::deposit(&x_old, &x_new, &cw, extent, cells, dt).unwrap()
    });
}

fn bench_step_fields(c: &mut Criterion) {
    let (extent, cells, dt) = (20.0, 96usize, 0.1);
    let mut fields = FieldGrid::new(extent, cells, dt).unwrap();
    let mut j = fields.current_like();
    let mut state = 0xfee1u64;
    for g in j.iter_mut() {
        for v in g.data.iter_mut() {
            *v = 1e-4 * (2.0 * uniform(&mut state) - 1.0);
        }
    }
    bench_modes(c, "step_fields_96c", move || fields.step_fields(&j).unwrap());
}

fn bench_apply_l(c: &mut Criterion) {
    let lat = BallLattice::new(0.8, 65).unwrap();
    let mut u = lat.grid();
    let n = lat.nodes;
    for k in 0..n {
        for jn in 0..n {
            for i in 0..n {
                let q = u.position(i, jn, k);
                let s = 0.64 - rvm_core::linal::norm_sq(q);
                u.set(i, jn, k, if s > 0.0 { s * s } else { 0.0 });
            }
        }
    }
    bench_modes(c, "apply_l_65n", move || apply_L(&lat, &u, OperatorTerms::FULL));
}

fn bench_smooth_density(c: &mut Criterion) {
    let mut g = Grid3::zeros([64; 3], [-20.0; 3], 40.0 / 63.0);
    let mut state = 0x50b0u64;
    for v in g.data.iter_mut() {
        *v = uniform(&mut state);
    }
    bench_modes(c, "smooth_density_64c_r3", move || pic::smooth_density(&g, 3.0));
}

fn all(c: &mut Criterion) {
    bench_deposit(c);
    bench_step_fields(c);
    bench_apply_l(c);
    bench_smooth_density(c);
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(20);
    targets = all
}
criterion_main!(kernels);
