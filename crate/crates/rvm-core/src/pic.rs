//! Macro-particle sampling, charge-conserving deposition, and the coupled
//! field–particle loop.
//!
//! Particles are sampled from compactly supported C² bump initial data with a
//! scrambled Sobol' sequence, pushed with the volume-preserving Boris scheme,
//! and deposited with the Esirkepov density decomposition so that the
//! discrete continuity equation (and hence the Gauss law) holds to round-off.
//! All reductions and buffer merges run in a fixed order, so a run is
//! bit-identical for any worker count.

use std::f64::consts::PI;
use std::path::Path;

use crate::characteristics::{push, AnalyticFields, FieldSampler, TrajectoryState};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::Grid3;
use crate::io::{self, CsvTable};
use crate::kinematics::{self, support_params, Model, SpeciesSpec};
use crate::linal;
use crate::maxwell::{self, init_fields, FieldGrid};
use crate::sobol::Sobol;

/// C² radial profile (1 − u²)³ on [0, 1), zero outside.
pub fn bump_profile(u: f64) -> f64 {
    let s = 1.0 - u * u;
    if s <= 0.0 {
        0.0
    } else {
        s * s * s
    }
}

/// CDF of the radial density ∝ r²(1 − r²)³ on [0, 1].
pub fn bump_radial_cdf(r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if r >= 1.0 {
        return 1.0;
    }
    let r2 = r * r;
    let r3 = r2 * r;
    (315.0 / 16.0)
        * (r3 / 3.0 - 0.6 * r3 * r2 + (3.0 / 7.0) * r3 * r2 * r2 - r3 * r3 * r3 / 9.0)
}

/// Inverse of `bump_radial_cdf` (Newton with bisection safeguard).
pub fn bump_radial_quantile(u: f64) -> f64 {
    assert!((0.0..=1.0).contains(&u));
    if u == 0.0 {
        return 0.0;
    }
    if u == 1.0 {
        return 1.0;
    }
    // Small-r behaviour CDF ≈ (105/16) r³ gives a good starting point.
    let mut r = (u * 16.0 / 105.0).cbrt().min(0.999);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let f = bump_radial_cdf(r) - u;
        if f > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let pdf = (315.0 / 16.0) * r * r * bump_profile(r);
        let mut step = if pdf > 0.0 { f / pdf } else { 0.0 };
        let mut next = r - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
            step = r - next;
        }
        r = next;
        if step.abs() < 1e-16 {
            break;
        }
    }
    r
}

/// ∫ bump(|x|/L) dx over ℝ³ = (64π/315) L³.
pub fn bump_mass(radius: f64) -> f64 {
    64.0 * PI / 315.0 * radius.powi(3)
}

/// One species of initial data f₀ = amplitude · bump(|x|/Lx) · bump(|p|/Lp).
#[derive(Debug, Clone)]
pub struct SpeciesInit {
    pub spec: SpeciesSpec,
    pub amplitude: f64,
    pub particles: usize,
    /// Reuse the phase-space sample points of an earlier species.
    pub mirror_of: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct InitialDataSpec {
    pub species: Vec<SpeciesInit>,
    pub seed: u64,
}

impl InitialDataSpec {
    pub fn from_config(cfg: &RunConfig) -> InitialDataSpec {
        InitialDataSpec {
            species: cfg
                .species
                .iter()
                .map(|s| SpeciesInit {
                    spec: s.to_spec(cfg.model.kind),
                    amplitude: s.amplitude,
                    particles: s.particles,
                    mirror_of: s.mirror_of,
                })
                .collect(),
            seed: cfg.model.seed,
        }
    }

    /// Total phase-space mass 𝓜 = ∫∫ f₀ dx dp of one species.
    pub fn total_mass(&self, alpha: usize) -> f64 {
        let s = &self.species[alpha];
        s.amplitude * bump_mass(s.spec.support_x) * bump_mass(s.spec.support_p)
    }

    /// Pointwise initial density (diagnostics / quadrature reference).
    pub fn f0(&self, alpha: usize, x: [f64; 3], p: [f64; 3]) -> f64 {
        let s = &self.species[alpha];
        s.amplitude
            * bump_profile(linal::norm(x) / s.spec.support_x)
            * bump_profile(linal::norm(p) / s.spec.support_p)
    }
}

/// Structure-of-arrays particle store. Weights are immutable after sampling;
/// `initial_weight` records the per-species census for conservation checks.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub x: Vec<[f64; 3]>,
    pub p: Vec<[f64; 3]>,
    pub weight: Vec<f64>,
    pub species: Vec<u8>,
    pub tracer: Vec<bool>,
    pub specs: Vec<SpeciesSpec>,
    pub initial_weight: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn total_weight(&self, alpha: usize) -> f64 {
        self.weight
            .iter()
            .zip(self.species.iter())
            .filter(|(_, s)| **s as usize == alpha)
            .map(|(w, _)| w)
            .sum()
    }

    pub fn max_momentum(&self) -> f64 {
        self.p.iter().map(|p| linal::norm(*p)).fold(0.0, f64::max)
    }

    pub fn max_radius(&self) -> f64 {
        self.x.iter().map(|x| linal::norm(*x)).fold(0.0, f64::max)
    }
}

fn unit_from_uniforms(a: f64, b: f64) -> [f64; 3] {
    let z = 2.0 * a - 1.0;
    let s = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * PI * b;
    [s * phi.cos(), s * phi.sin(), z]
}

/// Draw equal-weight macro-particles from the initial data with a scrambled
/// 6-D Sobol' sequence (radial inverse-CDF times a uniform direction in both
/// x and p). Mirror species copy the sample points of their source species
/// bit-for-bit, so opposite charges cancel exactly at deposit.
pub fn sample_particles(init: &InitialDataSpec, tracers_per_species: usize) -> Result<ParticleEnsemble> {
    let mut ens = ParticleEnsemble {
        x: vec![],
        p: vec![],
        weight: vec![],
        species: vec![],
        tracer: vec![],
        specs: init.species.iter().map(|s| s.spec.clone()).collect(),
        initial_weight: vec![],
    };
    if init.species.len() > u8::MAX as usize {
        return Err(Error::Config("too many species".into()));
    }
    let mut block_start = vec![0usize; init.species.len()];
    for (alpha, sp) in init.species.iter().enumerate() {
        sp.spec.validate()?;
        if !(sp.amplitude >= 0.0) {
            return Err(Error::Config(format!(
                "species {alpha}: negative profile amplitude {}",
                sp.amplitude
            )));
        }
        if sp.particles == 0 {
            return Err(Error::Config(format!("species {alpha}: no particles")));
        }
        block_start[alpha] = ens.x.len();
        let n = sp.particles;
        let w = init.total_mass(alpha) / n as f64;
        if let Some(src) = sp.mirror_of {
            if src >= alpha || init.species[src].particles != n {
                return Err(Error::Config(format!(
                    "species {alpha}: invalid mirror_of = {src}"
                )));
            }
            let s0 = block_start[src];
            for i in 0..n {
                ens.x.push(ens.x[s0 + i]);
                ens.p.push(ens.p[s0 + i]);
            }
        } else {
            let seed = init.seed ^ (alpha as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut seq = Sobol::scrambled(6, seed);
            let mut u = [0.0; 6];
            for _ in 0..n {
                seq.next_point(&mut u);
                let rx = sp.spec.support_x * bump_radial_quantile(u[0]);
                let rp = sp.spec.support_p * bump_radial_quantile(u[3]);
                ens.x.push(linal::scale(rx, unit_from_uniforms(u[1], u[2])));
                ens.p.push(linal::scale(rp, unit_from_uniforms(u[4], u[5])));
            }
        }
        for i in 0..n {
            ens.weight.push(w);
            ens.species.push(alpha as u8);
            ens.tracer.push(i < tracers_per_species);
        }
        ens.initial_weight.push(w * n as f64);
    }
    Ok(ens)
}

// 1-D linear (hat) node weights over the 3-node window starting at `base`,
// where `base` = min(floor(u_old), floor(u_new)) covers both positions.
#[inline]
fn hat3(f: f64) -> [f64; 3] {
    if f <= 1.0 {
        [1.0 - f, f, 0.0]
    } else {
        [0.0, 2.0 - f, f - 1.0]
    }
}

#[inline]
fn window(u_old: f64, u_new: f64) -> (isize, [f64; 3], [f64; 3]) {
    let base = (u_old.floor() as isize).min(u_new.floor() as isize);
    (base, hat3(u_old - base as f64), hat3(u_new - base as f64))
}

struct SlabBuf {
    k0: usize,
    rho: Vec<f64>,
    jx: Vec<f64>,
    jy: Vec<f64>,
    jz: Vec<f64>,
}

/// Node-centered charge density at the new positions plus the edge-centered
/// Esirkepov current for the step `x_old → x_new` over `dt`. Satisfies the
/// discrete continuity equation (ρ_new − ρ_old)/dt + ∇·j = 0 to round-off.
///
/// `charge_weight[i]` is e_α·w_i; zero entries are skipped. Particles must
/// stay at least one cell away from the box faces.
pub fn deposit(
    x_old: &[[f64; 3]],
    x_new: &[[f64; 3]],
    charge_weight: &[f64],
    extent: f64,
    cells: usize,
    dt: f64,
) -> Result<(Grid3, [Grid3; 3])> {
    assert_eq!(x_old.len(), x_new.len());
    assert_eq!(x_old.len(), charge_weight.len());
    assert!(dt > 0.0);
    let n = cells;
    let dx = 2.0 * extent / n as f64;
    let inv_dx = 1.0 / dx;

    // Bucket particles by the z window base so slabs can deposit into
    // private buffers; the merge below runs in fixed slab order.
    let nslabs = usize::min(16, usize::max(1, n / 8));
    let span = (n - 1).div_ceil(nslabs);
    let mut buckets: Vec<Vec<u32>> = vec![vec![]; (n - 1).div_ceil(span)];
    for i in 0..x_old.len() {
        if charge_weight[i] == 0.0 {
            continue;
        }
        let mut base = [0usize; 3];
        for a in 0..3 {
            let b = ((x_old[i][a] + extent) * inv_dx)
                .floor()
                .min(((x_new[i][a] + extent) * inv_dx).floor());
            if !(b >= 0.0 && b <= (n - 2) as f64) {
                return Err(Error::Run(format!(
                    "particle {i} outside the deposit-safe region (axis {a}, x = {:?})",
                    x_new[i]
                )));
            }
            base[a] = b as usize;
        }
        buckets[base[2] / span].push(i as u32);
    }

    let rho_plane = (n + 1) * (n + 1);
    let jx_plane = n * (n + 1);
    let jy_plane = (n + 1) * n;
    let jz_plane = (n + 1) * (n + 1);

    let jobs: Vec<(usize, &Vec<u32>)> = buckets.iter().enumerate().collect();
    let bufs: Vec<SlabBuf> = exec::map(&jobs, |&(slab, indices)| {
        let k0 = slab * span;
        let nk_node = usize::min(span + 2, n + 1 - k0);
        let nk_half = usize::min(span + 2, n - k0);
        let mut buf = SlabBuf {
            k0,
            rho: vec![0.0; rho_plane * nk_node],
            jx: vec![0.0; jx_plane * nk_node],
            jy: vec![0.0; jy_plane * nk_node],
            jz: vec![0.0; jz_plane * nk_half],
        };
        for &i in indices {
            let i = i as usize;
            let cw = charge_weight[i];
            let (bx, s0x, s1x) = window(
                (x_old[i][0] + extent) * inv_dx,
                (x_new[i][0] + extent) * inv_dx,
            );
            let (by, s0y, s1y) = window(
                (x_old[i][1] + extent) * inv_dx,
                (x_new[i][1] + extent) * inv_dx,
            );
            let (bz, s0z, s1z) = window(
                (x_old[i][2] + extent) * inv_dx,
                (x_new[i][2] + extent) * inv_dx,
            );
            let (bx, by, bz) = (bx as usize, by as usize, bz as usize);
            let kk = bz - k0;
            let dsx = [s1x[0] - s0x[0], s1x[1] - s0x[1], s1x[2] - s0x[2]];
            let dsy = [s1y[0] - s0y[0], s1y[1] - s0y[1], s1y[2] - s0y[2]];
            let dsz = [s1z[0] - s0z[0], s1z[1] - s0z[1], s1z[2] - s0z[2]];

            let c_rho = cw / (dx * dx * dx);
            for k in 0..3 {
                for j in 0..3 {
                    let row = (bx) + (n + 1) * ((by + j) + (n + 1) * (kk + k));
                    let syz = c_rho * s1y[j] * s1z[k];
                    for i3 in 0..3 {
                        buf.rho[row + i3] += syz * s1x[i3];
                    }
                }
            }

            // Density decomposition: W₁+W₂+W₃ = ΠS¹ − ΠS⁰ exactly; prefix
            // sums along the moving axis give the face fluxes.
            let cf = cw / (dt * dx * dx);
            for k in 0..3 {
                for j in 0..3 {
                    let t = s0y[j] * s0z[k]
                        + 0.5 * (dsy[j] * s0z[k] + s0y[j] * dsz[k])
                        + dsy[j] * dsz[k] / 3.0;
                    let mut acc = 0.0;
                    for i3 in 0..2 {
                        acc += dsx[i3] * t;
                        buf.jx[(bx + i3) + n * ((by + j) + (n + 1) * (kk + k))] -= cf * acc;
                    }
                }
            }
            for k in 0..3 {
                for i3 in 0..3 {
                    let t = s0x[i3] * s0z[k]
                        + 0.5 * (dsx[i3] * s0z[k] + s0x[i3] * dsz[k])
                        + dsx[i3] * dsz[k] / 3.0;
                    let mut acc = 0.0;
                    for j in 0..2 {
                        acc += dsy[j] * t;
                        buf.jy[(bx + i3) + (n + 1) * ((by + j) + n * (kk + k))] -= cf * acc;
                    }
                }
            }
            for j in 0..3 {
                for i3 in 0..3 {
                    let t = s0x[i3] * s0y[j]
                        + 0.5 * (dsx[i3] * s0y[j] + s0x[i3] * dsy[j])
                        + dsx[i3] * dsy[j] / 3.0;
                    let mut acc = 0.0;
                    for k in 0..2 {
                        acc += dsz[k] * t;
                        buf.jz[(bx + i3) + (n + 1) * ((by + j) + (n + 1) * (kk + k))] -= cf * acc;
                    }
                }
            }
        }
        buf
    });

    let mut rho = maxwell::node_layout(n, extent, dx);
    let mut j = maxwell::e_layout(n, extent, dx);
    for buf in &bufs {
        merge_planes(&mut rho.data, &buf.rho, rho_plane, buf.k0);
        merge_planes(&mut j[0].data, &buf.jx, jx_plane, buf.k0);
        merge_planes(&mut j[1].data, &buf.jy, jy_plane, buf.k0);
        merge_planes(&mut j[2].data, &buf.jz, jz_plane, buf.k0);
    }
    Ok((rho, j))
}

fn merge_planes(global: &mut [f64], local: &[f64], plane: usize, k0: usize) {
    let off = k0 * plane;
    for (g, l) in global[off..off + local.len()].iter_mut().zip(local.iter()) {
        *g += l;
    }
}

/// Trilinear node deposit of `weights` at `x` (number density, no current).
pub fn deposit_nodes(
    x: &[[f64; 3]],
    weights: &[f64],
    extent: f64,
    cells: usize,
) -> Result<Grid3> {
    let n = cells;
    let dx = 2.0 * extent / n as f64;
    let inv_dx = 1.0 / dx;
    let mut rho = maxwell::node_layout(n, extent, dx);
    let c = 1.0 / (dx * dx * dx);
    for (xi, wi) in x.iter().zip(weights.iter()) {
        let mut b = [0usize; 3];
        let mut f = [0.0; 3];
        for a in 0..3 {
            let u = (xi[a] + extent) * inv_dx;
            let fl = u.floor();
            if !(fl >= 0.0 && fl <= (n - 1) as f64) {
                return Err(Error::Run(format!("position outside grid: {xi:?}")));
            }
            b[a] = fl as usize;
            f[a] = u - fl;
        }
        let wx = [1.0 - f[0], f[0]];
        let wy = [1.0 - f[1], f[1]];
        let wz = [1.0 - f[2], f[2]];
        for k in 0..2 {
            for j in 0..2 {
                for i in 0..2 {
                    let idx = (b[0] + i) + (n + 1) * ((b[1] + j) + (n + 1) * (b[2] + k));
                    rho.data[idx] += c * wi * wx[i] * wy[j] * wz[k];
                }
            }
        }
    }
    Ok(rho)
}

/// Max-norm of (ρ_new − ρ_old)/dt + ∇·j over all nodes (current components
/// outside the staggered arrays are zero, valid for cone-contained data).
pub fn continuity_residual(rho_old: &Grid3, rho_new: &Grid3, j: &[Grid3; 3], dt: f64) -> f64 {
    let n = rho_new.n[0] - 1;
    let dx = rho_new.h;
    let inv_dx = 1.0 / dx;
    let rows = exec::map_indexed((n + 1) * (n + 1), |row| {
        let jn = row % (n + 1);
        let kn = row / (n + 1);
        let mut worst = 0.0f64;
        for i in 0..=n {
            let jx_hi = if i < n { j[0].get(i, jn, kn) } else { 0.0 };
            let jx_lo = if i > 0 { j[0].get(i - 1, jn, kn) } else { 0.0 };
            let jy_hi = if jn < n { j[1].get(i, jn, kn) } else { 0.0 };
            let jy_lo = if jn > 0 { j[1].get(i, jn - 1, kn) } else { 0.0 };
            let jz_hi = if kn < n { j[2].get(i, jn, kn) } else { 0.0 };
            let jz_lo = if kn > 0 { j[2].get(i, jn, kn - 1) } else { 0.0 };
            let div = (jx_hi - jx_lo + jy_hi - jy_lo + jz_hi - jz_lo) * inv_dx;
            let drho = (rho_new.get(i, jn, kn) - rho_old.get(i, jn, kn)) / dt;
            worst = worst.max((drho + div).abs());
        }
        worst
    });
    rows.into_iter().fold(0.0, f64::max)
}

/// Convolve a node grid with the normalized C² bump kernel of radius
/// `radius_cells` cells (zero extension past the faces).
pub fn smooth_density(grid: &Grid3, radius_cells: f64) -> Grid3 {
    assert!(radius_cells > 0.0);
    let reach = radius_cells.ceil() as isize;
    let mut offsets: Vec<(isize, isize, isize, f64)> = vec![];
    let mut total = 0.0;
    for dz in -reach..=reach {
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let r = ((dx * dx + dy * dy + dz * dz) as f64).sqrt() / radius_cells;
                let w = bump_profile(r);
                if w > 0.0 {
                    offsets.push((dx, dy, dz, w));
                    total += w;
                }
            }
        }
    }
    for o in offsets.iter_mut() {
        o.3 /= total;
    }

    let n = grid.n;
    let mut out = Grid3::zeros(n, grid.origin, grid.h);
    let plane = n[0] * n[1];
    exec::for_each_chunk_mut(&mut out.data, plane, |k, slab| {
        for jn in 0..n[1] {
            for i in 0..n[0] {
                let mut acc = 0.0;
                for &(dx, dy, dz, w) in &offsets {
                    let ii = i as isize + dx;
                    let jj = jn as isize + dy;
                    let kk = k as isize + dz;
                    if ii >= 0
                        && jj >= 0
                        && kk >= 0
                        && (ii as usize) < n[0]
                        && (jj as usize) < n[1]
                        && (kk as usize) < n[2]
                    {
                        acc += w * grid.get(ii as usize, jj as usize, kk as usize);
                    }
                }
                slab[i + n[0] * jn] = acc;
            }
        }
    });
    out
}

/// Cell-centered weighted momentum histogram over [-pmax, pmax]³, normalized
/// by the cell volume so values estimate F(t, p) = ∫ f dx.
pub fn momentum_histogram(
    ens: &ParticleEnsemble,
    alpha: usize,
    pmax: f64,
    bins: usize,
) -> Grid3 {
    assert!(pmax > 0.0 && bins >= 2);
    let dp = 2.0 * pmax / bins as f64;
    let mut hist = Grid3::zeros([bins; 3], [-pmax + 0.5 * dp; 3], dp);
    let c = 1.0 / (dp * dp * dp);
    for i in 0..ens.len() {
        if ens.species[i] as usize != alpha {
            continue;
        }
        let mut idx = [0usize; 3];
        let mut inside = true;
        for a in 0..3 {
            let u = ((ens.p[i][a] + pmax) / dp).floor();
            if u < 0.0 || u >= bins as f64 {
                inside = false;
                break;
            }
            idx[a] = u as usize;
        }
        if inside {
            let flat = idx[0] + bins * (idx[1] + bins * idx[2]);
            hist.data[flat] += c * ens.weight[i];
        }
    }
    hist
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SnapshotEntry {
    pub step: usize,
    pub time: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub dt: f64,
    pub final_time: f64,
    pub species: usize,
    pub particles: Vec<usize>,
    pub initial_weight: Vec<f64>,
    pub snapshots: Vec<SnapshotEntry>,
    /// Global particle ids of the tracers, grouped by species.
    pub tracer_ids: Vec<Vec<usize>>,
    pub charged: bool,
    /// Momentum-histogram half-width per species.
    pub hist_pmax: Vec<f64>,
}

pub fn fields_path(dir: &Path, step: usize) -> std::path::PathBuf {
    dir.join(format!("fields_{step:06}.rvmf"))
}

pub fn density_path(dir: &Path, alpha: usize, step: usize) -> std::path::PathBuf {
    dir.join(format!("density_s{alpha}_{step:06}.rvmh"))
}

pub fn histogram_path(dir: &Path, alpha: usize, step: usize) -> std::path::PathBuf {
    dir.join(format!("hist_s{alpha}_{step:06}.rvmh"))
}

struct TracerLog {
    id: usize,
    species: usize,
    rows: Vec<(f64, [f64; 3], [f64; 3])>,
}

/// Advance the fully coupled system from the sampled initial data to t_max,
/// writing diagnostics CSVs, snapshot blocks, and a run summary into
/// `out_dir`. The cycle per step is: B half-lagged Faraday update, particle
/// push against (Eⁿ, B^{n+1/2}), charge-conserving deposit, Ampère update.
pub fn run_coupled(cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    exec::install_workers(if cfg.model.workers == 0 {
        None
    } else {
        Some(cfg.model.workers)
    });
    std::fs::create_dir_all(out_dir)?;

    let extent = cfg.domain.extent;
    let n = cfg.domain.cells;
    let dx = 2.0 * extent / n as f64;
    let dt = cfg.time.dt;
    let nsteps = usize::max(1, (cfg.time.t_max / dt).round() as usize);

    let init = InitialDataSpec::from_config(cfg);
    let mut ens = sample_particles(&init, cfg.diagnostics.tracers)?;
    let nsp = init.species.len();
    let specs = ens.specs.clone();
    let charge_of: Vec<f64> = specs.iter().map(|s| s.charge).collect();
    let charged = (0..nsp).any(|a| charge_of[a] != 0.0 && init.species[a].amplitude > 0.0);

    let cw: Vec<f64> = (0..ens.len())
        .map(|i| charge_of[ens.species[i] as usize] * ens.weight[i])
        .collect();

    // Initial fields: electrostatic solve for the deposited charge.
    let (rho0, _) = deposit(&ens.x, &ens.x, &cw, extent, n, dt)?;
    let abs_charge: f64 = cw.iter().map(|c| c.abs()).sum();
    let mut fields = init_fields(extent, n, dt, &rho0, abs_charge, None)?;
    let mut rho_prev = rho0;

    let l_max = specs.iter().map(|s| s.support_x).fold(0.0, f64::max);
    let beta0 = specs
        .iter()
        .map(|s| s.support_p / s.mass)
        .fold(0.0, f64::max);
    let cone = support_params(beta0);
    let mut beta_run = beta0;

    let diag_every = usize::max(1, (cfg.diagnostics.interval / dt).round() as usize);
    let mut snap_steps: Vec<usize> = cfg
        .diagnostics
        .snapshot_times
        .iter()
        .map(|&t| ((t / dt).round() as isize).clamp(0, nsteps as isize) as usize)
        .collect();
    snap_steps.sort_unstable();
    snap_steps.dedup();

    let hist_pmax: Vec<f64> = specs.iter().map(|s| 1.25 * s.support_p).collect();
    let hist_bins = cfg.diagnostics.histogram_bins;

    let tracer_ids: Vec<Vec<usize>> = (0..nsp)
        .map(|a| {
            (0..ens.len())
                .filter(|&i| ens.species[i] as usize == a && ens.tracer[i])
                .collect()
        })
        .collect();
    let mut tracer_logs: Vec<TracerLog> = tracer_ids
        .iter()
        .enumerate()
        .flat_map(|(a, ids)| {
            ids.iter().map(move |&id| TracerLog { id, species: a, rows: vec![] })
        })
        .collect();
    let record_tracers = |logs: &mut Vec<TracerLog>, ens: &ParticleEnsemble, t: f64| {
        for log in logs.iter_mut() {
            log.rows.push((t, ens.x[log.id], ens.p[log.id]));
        }
    };
    record_tracers(&mut tracer_logs, &ens, 0.0);

    let mut fields_csv = CsvTable::new(&[
        "time",
        "sup_e_cone",
        "sup_b_cone",
        "sup_e",
        "sup_b",
        "div_e_residual",
        "div_b_residual",
        "energy",
        "sup_de_cone",
        "sup_db_cone",
    ]);
    let mut kin_header: Vec<String> = vec!["time".into()];
    for a in 0..nsp {
        kin_header.push(format!("weight_{a}"));
    }
    for name in [
        "sup_rho",
        "sup_j",
        "continuity_rel",
        "div_e_rel",
        "max_radius",
        "support_excess",
        "max_p",
    ] {
        kin_header.push(name.into());
    }
    let mut kinetics_csv = CsvTable {
        header: kin_header,
        rows: vec![],
    };

    let write_snapshot = |ens: &ParticleEnsemble, fields: &FieldGrid, step: usize| -> Result<()> {
        io::write_fields(&fields_path(out_dir, step), fields)?;
        for a in 0..nsp {
            let xs: Vec<[f64; 3]> = (0..ens.len())
                .filter(|&i| ens.species[i] as usize == a)
                .map(|i| ens.x[i])
                .collect();
            let ws: Vec<f64> = (0..ens.len())
                .filter(|&i| ens.species[i] as usize == a)
                .map(|i| ens.weight[i])
                .collect();
            let dens = deposit_nodes(&xs, &ws, extent, n)?;
            io::write_scalar_grid(&density_path(out_dir, a, step), &dens, fields.time)?;
            let hist = momentum_histogram(ens, a, hist_pmax[a], hist_bins);
            io::write_scalar_grid(&histogram_path(out_dir, a, step), &hist, fields.time)?;
        }
        Ok(())
    };

    let mut snapshots: Vec<SnapshotEntry> = vec![];
    if snap_steps.first() == Some(&0) {
        write_snapshot(&ens, &fields, 0)?;
        snapshots.push(SnapshotEntry { step: 0, time: 0.0 });
    }

    let zero_fields = AnalyticFields(|_t: f64, _x: [f64; 3]| ([0.0; 3], [0.0; 3]));
    let zero_j = maxwell::e_layout(n, extent, dx);

    for step in 0..nsteps {
        let t = step as f64 * dt;
        if charged {
            fields.advance_b();
        }

        // Push every particle from tⁿ to tⁿ⁺¹ against the frozen grid state.
        let sampler: &dyn FieldSampler = if charged { &fields } else { &zero_fields };
        let moved: Vec<Result<([f64; 3], [f64; 3])>> = {
            let ens_ref = &ens;
            exec::map_indexed(ens_ref.len(), |i| {
                let st = TrajectoryState {
                    x: ens_ref.x[i],
                    p: ens_ref.p[i],
                    t,
                };
                let s = &specs[ens_ref.species[i] as usize];
                push(&st, s, sampler, dt).map(|out| (out.x, out.p))
            })
        };
        let mut x_new = Vec::with_capacity(ens.len());
        let mut p_new = Vec::with_capacity(ens.len());
        for (i, r) in moved.into_iter().enumerate() {
            let (x, p) = r.map_err(|e| {
                Error::Run(format!("step {step}: particle {i} push failed: {e}"))
            })?;
            x_new.push(x);
            p_new.push(p);
        }

        let deposited = if charged {
            Some(deposit(&ens.x, &x_new, &cw, extent, n, dt)?)
        } else {
            None
        };
        ens.x = x_new;
        ens.p = p_new;
        let (rho_ref, j_ref): (&Grid3, &[Grid3; 3]) = match &deposited {
            Some((r, j)) => (r, j),
            None => (&rho_prev, &zero_j), // both identically zero for neutral runs
        };
        if charged {
            fields.advance_e(j_ref)?;
        } else {
            fields.time += dt;
        }

        let t1 = fields.time;
        let last = step + 1 == nsteps;

        if (step + 1) % cfg.diagnostics.tracer_cadence == 0 || last {
            record_tracers(&mut tracer_logs, &ens, t1);
        }

        if (step + 1) % diag_every == 0 || last {
            let fd = fields.field_diagnostics(rho_ref, &cone);
            fields_csv.push(vec![
                fd.time,
                fd.sup_e_cone,
                fd.sup_b_cone,
                fd.sup_e,
                fd.sup_b,
                fd.div_e_residual,
                fd.div_b_residual,
                fd.energy,
                fd.sup_de_cone,
                fd.sup_db_cone,
            ]);

            let sup_rho = rho_ref.sup_abs();
            let sup_j = j_ref.iter().map(|g| g.sup_abs()).fold(0.0, f64::max);
            let cont = continuity_residual(&rho_prev, rho_ref, j_ref, dt);
            let cont_rel = if sup_rho > 0.0 { cont / sup_rho } else { cont };
            let div_e = fields.div_e_residual(rho_ref);
            let div_e_rel = if sup_rho > 0.0 { div_e / sup_rho } else { div_e };

            let max_p = ens.max_momentum();
            for (a, s) in specs.iter().enumerate() {
                let bmax = ens
                    .p
                    .iter()
                    .zip(ens.species.iter())
                    .filter(|(_, sp)| **sp as usize == a)
                    .map(|(p, _)| linal::norm(*p) / s.mass)
                    .fold(0.0, f64::max);
                beta_run = beta_run.max(bmax);
            }
            let vb = match cfg.model.kind {
                Model::Relativistic => beta_run / (1.0 + beta_run * beta_run).sqrt(),
                Model::Classical => beta_run,
            };
            let max_r = ens.max_radius();
            let excess = max_r - (vb * t1 + l_max);

            let mut row = vec![t1];
            for a in 0..nsp {
                row.push(ens.total_weight(a));
            }
            row.extend_from_slice(&[sup_rho, sup_j, cont_rel, div_e_rel, max_r, excess, max_p]);
            kinetics_csv.push(row);

            if excess > dx {
                fields_csv.write(&out_dir.join("fields.csv"))?;
                kinetics_csv.write(&out_dir.join("kinetics.csv"))?;
                return Err(Error::Run(format!(
                    "support-cone violation at t = {t1}: max |x| = {max_r} exceeds ζt + L + dx = {}",
                    vb * t1 + l_max + dx
                )));
            }
        }

        if snap_steps.binary_search(&(step + 1)).is_ok() {
            write_snapshot(&ens, &fields, step + 1)?;
            snapshots.push(SnapshotEntry { step: step + 1, time: t1 });
        }

        if let Some((rho_new, _)) = deposited {
            rho_prev = rho_new;
        }
    }

    // Tracer table; the label columns are placeholders (zeros) until the
    // analysis stage attaches P∞-based labels.
    let mut tracer_csv = CsvTable::new(&[
        "id", "species", "t", "x0", "x1", "x2", "p0", "p1", "p2", "y0", "y1", "y2", "l0", "l1",
        "l2",
    ]);
    for log in &tracer_logs {
        let s = &specs[log.species];
        for &(t, x, p) in &log.rows {
            let v = kinematics::velocity(p, s);
            let y = linal::sub(x, linal::scale(t, v));
            tracer_csv.push(vec![
                log.id as f64,
                log.species as f64,
                t,
                x[0],
                x[1],
                x[2],
                p[0],
                p[1],
                p[2],
                y[0],
                y[1],
                y[2],
                0.0,
                0.0,
                0.0,
            ]);
        }
    }

    fields_csv.write(&out_dir.join("fields.csv"))?;
    kinetics_csv.write(&out_dir.join("kinetics.csv"))?;
    tracer_csv.write(&out_dir.join("tracers.csv"))?;
    std::fs::write(out_dir.join("config.cfg"), cfg.serialize())?;

    let summary = RunSummary {
        steps: nsteps,
        dt,
        final_time: nsteps as f64 * dt,
        species: nsp,
        particles: init.species.iter().map(|s| s.particles).collect(),
        initial_weight: ens.initial_weight.clone(),
        snapshots,
        tracer_ids,
        charged,
        hist_pmax,
    };
    io::write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}
