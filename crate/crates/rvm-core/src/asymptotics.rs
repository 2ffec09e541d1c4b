//! Limiting objects extracted from run data: the spatial average F(t,p) and
//! its limit F∞, the limiting charge/current densities ρ∞ and j∞ on velocity
//! space with their derivative combinations, rescaled self-similar
//! comparisons, and decay-exponent fits.

use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::kinematics::{self, SpeciesSpec};
use crate::linal::{self, Mat3};
use crate::pic::{momentum_histogram, smooth_density, ParticleEnsemble};
use crate::exec;

/// Scalar function on a uniform momentum- or velocity-space lattice.
pub type MomentumGridFunction = Grid3;

/// Spatial average F(t,p) = ∫ f dx of one species: the weighted momentum
/// histogram normalized per cell volume, so Σ F·hp³ equals the species mass
/// exactly.
pub fn spatial_average(
    ens: &ParticleEnsemble,
    alpha: usize,
    pmax: f64,
    bins: usize,
) -> MomentumGridFunction {
    momentum_histogram(ens, alpha, pmax, bins)
}

/// Dyadic Cauchy record for a sequence of snapshots of the same grid.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CauchyReport {
    pub times: Vec<f64>,
    /// sup |F(t_{k+1}) − F(t_k)| for consecutive snapshots.
    pub sup_diffs: Vec<f64>,
    /// All differences exactly zero (free streaming).
    pub exact: bool,
}

/// F∞ as the latest snapshot smoothed by the fixed-width C² kernel, plus the
/// dyadic sup-difference report quantifying the residual limit error.
pub fn limit_f(
    snapshots: &[(f64, Grid3)],
    kernel_width_cells: f64,
) -> Result<(MomentumGridFunction, CauchyReport)> {
    if snapshots.len() < 3 {
        return Err(Error::Domain(format!(
            "limit_f needs ≥ 3 snapshots, got {}",
            snapshots.len()
        )));
    }
    let shape = snapshots[0].1.n;
    let mut times = vec![snapshots[0].0];
    let mut sup_diffs = vec![];
    for w in snapshots.windows(2) {
        let (ref a, ref b) = (&w[0].1, &w[1].1);
        if b.n != shape {
            return Err(Error::Format("snapshot grids differ in shape".into()));
        }
        let diff = a
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        times.push(w[1].0);
        sup_diffs.push(diff);
    }
    let exact = sup_diffs.iter().all(|&d| d == 0.0);
    let f_inf = smooth_density(&snapshots.last().unwrap().1, kernel_width_cells);
    Ok((f_inf, CauchyReport { times, sup_diffs, exact }))
}

/// Trilinear sample extended by zero outside the interpolation hull.
pub fn sample_or_zero(g: &Grid3, q: [f64; 3]) -> f64 {
    g.trilinear(q).unwrap_or(0.0)
}

/// Node-centered velocity lattice of half-width `q_half` with `q_nodes`
/// nodes per axis (odd, so q = 0 is a node).
pub fn velocity_grid(q_half: f64, q_nodes: usize) -> Grid3 {
    assert!(q_nodes >= 5 && q_nodes % 2 == 1 && q_half > 0.0);
    let h = 2.0 * q_half / (q_nodes - 1) as f64;
    Grid3::zeros([q_nodes; 3], [-q_half; 3], h)
}

/// Limiting charge density ρ∞(q) = Σ_α e_α 𝒟_α(v⁻¹(q)) F∞^α(v⁻¹(q)) on a
/// node-centered velocity lattice, extended by zero outside the support of
/// each F∞ (and outside |q| < 1 for relativistic species).
pub fn limit_rho(
    f_infs: &[&MomentumGridFunction],
    specs: &[SpeciesSpec],
    q_half: f64,
    q_nodes: usize,
) -> Result<MomentumGridFunction> {
    if f_infs.len() != specs.len() {
        return Err(Error::Domain("one F∞ grid per species required".into()));
    }
    let mut rho = velocity_grid(q_half, q_nodes);
    let n = rho.n;
    let origin = rho.origin;
    let h = rho.h;
    exec::fill_indexed(&mut rho.data, |flat| {
        let i = flat % n[0];
        let j = (flat / n[0]) % n[1];
        let k = flat / (n[0] * n[1]);
        let q = [
            origin[0] + i as f64 * h,
            origin[1] + j as f64 * h,
            origin[2] + k as f64 * h,
        ];
        let mut val = 0.0;
        for (f, s) in f_infs.iter().zip(specs.iter()) {
            if s.charge == 0.0 {
                continue;
            }
            let p = match kinematics::inverse_velocity(q, s) {
                Ok(p) => p,
                Err(_) => continue, // |q| ≥ 1: outside the relativistic range
            };
            val += s.charge * kinematics::inv_det_D(p, s) * sample_or_zero(f, p);
        }
        val
    });
    Ok(rho)
}

/// Limiting current j∞(q) = q·ρ∞(q), formed pointwise on the same lattice.
pub fn limit_j(rho_inf: &MomentumGridFunction) -> [MomentumGridFunction; 3] {
    let mut j = [rho_inf.clone(), rho_inf.clone(), rho_inf.clone()];
    let n = rho_inf.n;
    for (axis, g) in j.iter_mut().enumerate() {
        for k in 0..n[2] {
            for jn in 0..n[1] {
                for i in 0..n[0] {
                    let q = g.position(i, jn, k)[axis];
                    let v = g.get(i, jn, k) * q;
                    g.set(i, jn, k, v);
                }
            }
        }
    }
    j
}

/// Central-difference gradient of a node grid (interior nodes; faces zero —
/// limit profiles are supported strictly inside the lattice).
pub fn gradient(g: &Grid3) -> [Grid3; 3] {
    let n = g.n;
    let inv2h = 0.5 / g.h;
    let mut out = [
        Grid3::zeros(n, g.origin, g.h),
        Grid3::zeros(n, g.origin, g.h),
        Grid3::zeros(n, g.origin, g.h),
    ];
    for k in 1..n[2] - 1 {
        for jn in 1..n[1] - 1 {
            for i in 1..n[0] - 1 {
                out[0].set(i, jn, k, (g.get(i + 1, jn, k) - g.get(i - 1, jn, k)) * inv2h);
                out[1].set(i, jn, k, (g.get(i, jn + 1, k) - g.get(i, jn - 1, k)) * inv2h);
                out[2].set(i, jn, k, (g.get(i, jn, k + 1) - g.get(i, jn, k - 1)) * inv2h);
            }
        }
    }
    out
}

/// Derivative combinations entering the limit-field elliptic problems:
/// the E-source −∂_{q_i}ρ∞ + 3j∞^i + q·∇j∞^i and the B-source (∇×j∞)^i.
pub struct LimitDerivatives {
    pub grad_rho: [MomentumGridFunction; 3],
    pub e_source: [MomentumGridFunction; 3],
    pub b_source: [MomentumGridFunction; 3],
}

pub fn limit_derivatives(
    rho_inf: &MomentumGridFunction,
    j_inf: &[MomentumGridFunction; 3],
) -> LimitDerivatives {
    let grad_rho = gradient(rho_inf);
    let grad_j: Vec<[Grid3; 3]> = j_inf.iter().map(gradient).collect();
    let n = rho_inf.n;
    let mut e_source = [
        Grid3::zeros(n, rho_inf.origin, rho_inf.h),
        Grid3::zeros(n, rho_inf.origin, rho_inf.h),
        Grid3::zeros(n, rho_inf.origin, rho_inf.h),
    ];
    let mut b_source = e_source.clone();
    for k in 0..n[2] {
        for jn in 0..n[1] {
            for i in 0..n[0] {
                let q = rho_inf.position(i, jn, k);
                for c in 0..3 {
                    let qdotgrad = q[0] * grad_j[c][0].get(i, jn, k)
                        + q[1] * grad_j[c][1].get(i, jn, k)
                        + q[2] * grad_j[c][2].get(i, jn, k);
                    let e = -grad_rho[c].get(i, jn, k) + 3.0 * j_inf[c].get(i, jn, k) + qdotgrad;
                    e_source[c].set(i, jn, k, e);
                    let (a, b) = ((c + 1) % 3, (c + 2) % 3);
                    let curl = grad_j[b][a].get(i, jn, k) - grad_j[a][b].get(i, jn, k);
                    b_source[c].set(i, jn, k, curl);
                }
            }
        }
    }
    LimitDerivatives { grad_rho, e_source, b_source }
}

/// sup_x |t³ρ(t,x) − ρ∞(x/t)| over the spatial grid, with the pointwise
/// error field. `rho_inf` is interpolated at q = x/t and extended by zero.
pub fn rescaled_compare(
    rho_space: &Grid3,
    rho_inf: &MomentumGridFunction,
    t: f64,
) -> Result<(f64, Grid3)> {
    if !(t > 0.0) {
        return Err(Error::Domain("rescaled_compare needs t > 0".into()));
    }
    let hull = rho_inf.origin[0].abs();
    if t * hull < 4.0 * rho_space.h {
        return Err(Error::Domain(format!(
            "t = {t} too small: rescaled cone spans under 4 spatial cells"
        )));
    }
    let n = rho_space.n;
    let t3 = t * t * t;
    let mut err = Grid3::zeros(n, rho_space.origin, rho_space.h);
    exec::fill_indexed(&mut err.data, |flat| {
        let i = flat % n[0];
        let j = (flat / n[0]) % n[1];
        let k = flat / (n[0] * n[1]);
        let x = rho_space.position(i, j, k);
        let q = linal::scale(1.0 / t, x);
        (t3 * rho_space.get(i, j, k) - sample_or_zero(rho_inf, q)).abs()
    });
    Ok((err.sup_abs(), err))
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DecayFit {
    pub quantity: String,
    pub window: (f64, f64),
    pub exponent: f64,
    /// Fitted power of ln t when the log-aware mode is used.
    pub log_power: Option<f64>,
    /// RMS residual of the fit in log space.
    pub residual: f64,
}

/// Outcome of a decay fit that tolerates series at the numerical noise floor.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub enum FitOutcome {
    Fit(DecayFit),
    /// All values in the window below `floor`: decay cannot be resolved.
    BelowFloor { floor: f64, max_value: f64 },
}

fn solve3(m: &Mat3, b: [f64; 3]) -> Result<[f64; 3]> {
    let det = m.det();
    if det.abs() < 1e-300 {
        return Err(Error::Solver("singular normal equations".into()));
    }
    let mut out = [0.0; 3];
    for c in 0..3 {
        let mut mc = *m;
        for r in 0..3 {
            mc.0[r][c] = b[r];
        }
        out[c] = mc.det() / det;
    }
    Ok(out)
}

/// Least-squares decay exponent of `values` vs `times` over `window` in
/// log-log space; `with_log` adds a simultaneous (ln t)^c factor.
pub fn decay_fit(
    quantity: &str,
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
    with_log: bool,
) -> Result<DecayFit> {
    assert_eq!(times.len(), values.len());
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values.iter())
        .filter(|(&t, _)| t >= window.0 && t <= window.1)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Domain(format!(
            "decay_fit({quantity}): only {} samples in window",
            pts.len()
        )));
    }
    let (t1, t2) = (pts.first().unwrap().0, pts.last().unwrap().0);
    if t2 / t1 < 7.9 {
        return Err(Error::Domain(format!(
            "decay_fit({quantity}): window [{t1}, {t2}] spans under a decade"
        )));
    }
    if let Some((t, _)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::Domain(format!(
            "decay_fit({quantity}): nonpositive value at t = {t}"
        )));
    }
    if with_log && t1 <= 1.0 {
        return Err(Error::Domain(format!(
            "decay_fit({quantity}): log-aware fit needs t > 1"
        )));
    }

    let n = pts.len() as f64;
    let (exponent, log_power, intercept) = if with_log {
        // Regressors [1, ln t, ln ln t].
        let mut m = Mat3::zero();
        let mut rhs = [0.0; 3];
        for &(t, v) in &pts {
            let reg = [1.0, t.ln(), t.ln().ln()];
            let y = v.ln();
            for r in 0..3 {
                for c in 0..3 {
                    m.0[r][c] += reg[r] * reg[c];
                }
                rhs[r] += reg[r] * y;
            }
        }
        let sol = solve3(&m, rhs)?;
        (sol[1], Some(sol[2]), sol[0])
    } else {
        let xbar = pts.iter().map(|(t, _)| t.ln()).sum::<f64>() / n;
        let ybar = pts.iter().map(|(_, v)| v.ln()).sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for &(t, v) in &pts {
            let dx = t.ln() - xbar;
            sxx += dx * dx;
            sxy += dx * (v.ln() - ybar);
        }
        let slope = sxy / sxx;
        (slope, None, ybar - slope * xbar)
    };

    let mut ss = 0.0;
    for &(t, v) in &pts {
        let model = intercept + exponent * t.ln() + log_power.unwrap_or(0.0) * t.ln().ln();
        ss += (v.ln() - model).powi(2);
    }
    Ok(DecayFit {
        quantity: quantity.to_string(),
        window: (t1, t2),
        exponent,
        log_power,
        residual: (ss / n).sqrt(),
    })
}

/// `decay_fit` that classifies a series sitting at the numerical noise floor
/// instead of failing on it.
pub fn fit_or_floor(
    quantity: &str,
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
    with_log: bool,
    floor: f64,
) -> Result<FitOutcome> {
    let in_window: Vec<f64> = times
        .iter()
        .zip(values.iter())
        .filter(|(&t, _)| t >= window.0 && t <= window.1)
        .map(|(_, &v)| v)
        .collect();
    if in_window.is_empty() {
        return Err(Error::Domain(format!("fit_or_floor({quantity}): empty window")));
    }
    let max_value = in_window.iter().cloned().fold(0.0, f64::max);
    if max_value <= floor {
        return Ok(FitOutcome::BelowFloor { floor, max_value });
    }
    decay_fit(quantity, times, values, window, with_log).map(FitOutcome::Fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Model;
    use approx::assert_abs_diff_eq;

    fn spec(charge: f64, support_p: f64) -> SpeciesSpec {
        SpeciesSpec {
            mass: 1.0,
            charge,
            model: Model::Relativistic,
            support_x: 1.0,
            support_p,
        }
    }

    /// Analytic bump F(p) = (1 − |p|²/L²)³ sampled on a node lattice.
    fn bump_grid(l: f64, half: f64, nodes: usize) -> Grid3 {
        let mut g = velocity_grid(half, nodes);
        let n = g.n;
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let p = g.position(i, j, k);
                    let u = linal::norm(p) / l;
                    let v = crate::pic::bump_profile(u);
                    g.set(i, j, k, v);
                }
            }
        }
        g
    }

    #[test]
    fn limit_f_free_streaming_is_exact() {
        let g = bump_grid(0.5, 0.6, 17);
        let snaps = vec![(4.0, g.clone()), (8.0, g.clone()), (16.0, g.clone())];
        let (f_inf, report) = limit_f(&snaps, 2.0).unwrap();
        assert!(report.exact);
        assert_eq!(report.sup_diffs, vec![0.0, 0.0]);
        // Kernel is normalized: total mass preserved.
        assert_abs_diff_eq!(f_inf.sum(), g.sum(), epsilon = 1e-12 * g.sum());
    }

    #[test]
    fn limit_f_needs_three_snapshots() {
        let g = bump_grid(0.5, 0.6, 9);
        assert!(limit_f(&[(1.0, g.clone()), (2.0, g)], 2.0).is_err());
    }

    #[test]
    fn limit_rho_center_value_single_species() {
        // 𝒟(0) = m³ = 1 and v⁻¹(0) = 0, so ρ∞(0) = e·F∞(0).
        let f = bump_grid(0.5, 0.6, 33);
        let s = spec(2.0, 0.5);
        let rho = limit_rho(&[&f], &[s], 0.5, 21).unwrap();
        let c = 10; // center node of 21
        assert_abs_diff_eq!(rho.get(c, c, c), 2.0 * 1.0, epsilon = 1e-12);
        // Support: zero for |q| beyond ζ(β = 0.5/1) = 0.4472.
        assert_eq!(rho.get(0, c, c), 0.0);
    }

    #[test]
    fn limit_rho_mirror_cancels_exactly() {
        let f = bump_grid(0.4, 0.5, 25);
        let plus = spec(1.0, 0.4);
        let minus = spec(-1.0, 0.4);
        let rho = limit_rho(&[&f, &f], &[plus, minus], 0.45, 31).unwrap();
        assert!(rho.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn limit_rho_integral_vanishes_for_balanced_species() {
        // Different momentum supports, equal total masses 𝓜 = ∫F dp:
        // amplitude ratio (0.4/0.25)³ makes the bump integrals match.
        let l1 = 0.4;
        let l2 = 0.25;
        // Grid spacing proportional to the support so the two trilinear
        // interpolation biases cancel in the signed sum.
        let f1 = bump_grid(l1, 0.512, 45);
        let mut f2 = bump_grid(l2, 0.32, 45);
        let ratio = (l1 / l2).powi(3);
        for v in f2.data.iter_mut() {
            *v *= ratio;
        }
        let m1: f64 = f1.sum() * f1.h.powi(3);
        let rho = limit_rho(&[&f1, &f2], &[spec(1.0, l1), spec(-1.0, l2)], 0.5, 81).unwrap();
        let total = rho.sum() * rho.h.powi(3);
        assert!(
            total.abs() <= 1e-3 * 2.0 * m1.abs(),
            "∫ρ∞ = {total}, 𝓜 scale {m1}"
        );
    }

    #[test]
    fn limit_j_identities() {
        let f = bump_grid(0.4, 0.5, 25);
        let rho = limit_rho(&[&f], &[spec(1.0, 0.4)], 0.45, 31).unwrap();
        let j = limit_j(&rho);
        let c = 15;
        assert_eq!(j[0].get(c, c, c), 0.0); // q = 0 factor
        // Pointwise q·ρ identity at a random node.
        let (i, jn, k) = (18, 12, 16);
        let q = rho.position(i, jn, k);
        for a in 0..3 {
            assert_eq!(j[a].get(i, jn, k), q[a] * rho.get(i, jn, k));
        }
        // Radially symmetric ρ∞: ∫ j∞ dq = 0 up to odd-quadrature round-off.
        for a in 0..3 {
            let total = j[a].sum() * rho.h.powi(3);
            assert!(total.abs() < 1e-12, "∫j[{a}] = {total}");
        }
    }

    #[test]
    fn limit_derivatives_manufactured_gradient() {
        // ρ∞ = (1 − |q|²/γ²)³ has ∂iρ = −(6qi/γ²)(1 − |q|²/γ²)².
        let gamma: f64 = 0.8;
        let nodes = 41;
        let mut rho = velocity_grid(gamma, nodes);
        let n = rho.n;
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let q = rho.position(i, j, k);
                    let v = crate::pic::bump_profile(linal::norm(q) / gamma);
                    rho.set(i, j, k, v);
                }
            }
        }
        let j = limit_j(&rho);
        let der = limit_derivatives(&rho, &j);
        let mut sup_err = 0.0f64;
        let mut sup_grad = 0.0f64;
        for k in 2..n[2] - 2 {
            for jn in 2..n[1] - 2 {
                for i in 2..n[0] - 2 {
                    let q = rho.position(i, jn, k);
                    let s = 1.0 - linal::norm_sq(q) / (gamma * gamma);
                    for a in 0..3 {
                        let exact = if s > 0.0 { -6.0 * q[a] / (gamma * gamma) * s * s } else { 0.0 };
                        sup_grad = sup_grad.max(exact.abs());
                        sup_err = sup_err.max((der.grad_rho[a].get(i, jn, k) - exact).abs());
                    }
                }
            }
        }
        assert!(sup_err <= 0.01 * sup_grad, "gradient error {sup_err} vs scale {sup_grad}");
        // j∞ = q ρ(|q|) is curl-free, so the B-source is O(h²) small.
        let curl_sup = der.b_source.iter().map(|g| g.sup_abs()).fold(0.0, f64::max);
        assert!(curl_sup <= 0.01 * sup_grad, "curl {curl_sup}");
    }

    #[test]
    fn rescaled_compare_exact_profile_and_negative_control() {
        let f = bump_grid(0.4, 0.5, 33);
        let rho_inf = limit_rho(&[&f], &[spec(1.0, 0.4)], 0.45, 61).unwrap();
        let t = 20.0;
        // Space grid whose values are exactly t⁻³ρ∞(x/t).
        let mut space = Grid3::zeros([41; 3], [-10.0; 3], 0.5);
        let n = space.n;
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let x = space.position(i, j, k);
                    let v = sample_or_zero(&rho_inf, linal::scale(1.0 / t, x)) / (t * t * t);
                    space.set(i, j, k, v);
                }
            }
        }
        let (err, _) = rescaled_compare(&space, &rho_inf, t).unwrap();
        assert!(err <= 1e-12, "matched profile error {err}");

        // Mismatched profile (wrong support) → order-one error.
        let f_bad = bump_grid(0.25, 0.5, 33);
        let rho_bad = limit_rho(&[&f_bad], &[spec(1.0, 0.25)], 0.45, 61).unwrap();
        let (err_bad, _) = rescaled_compare(&space, &rho_bad, t).unwrap();
        assert!(err_bad > 0.3 * rho_inf.sup_abs(), "negative control too small: {err_bad}");

        // Cone too small for the grid.
        assert!(rescaled_compare(&space, &rho_inf, 1e-3).is_err());
    }

    #[test]
    fn decay_fit_exact_power_law() {
        let times: Vec<f64> = (1..40).map(|i| 1.5f64 * 1.2f64.powi(i)).collect();
        let values: Vec<f64> = times.iter().map(|t| 2.7 * t.powi(-3)).collect();
        let fit = decay_fit("rho", &times, &values, (2.0, 1000.0), false).unwrap();
        assert_abs_diff_eq!(fit.exponent, -3.0, epsilon = 1e-6);
        assert!(fit.residual < 1e-10);
    }

    #[test]
    fn decay_fit_log_aware_recovers_polluted_rate() {
        // Late window: the 6/ln t slope pollution sits inside (−4.0, −3.6).
        let times: Vec<f64> = (0..49).map(|i| 1e7f64 * 1.1f64.powi(i)).collect();
        let values: Vec<f64> = times.iter().map(|t| t.powi(-4) * t.ln().powi(6)).collect();
        let plain = decay_fit("e", &times, &values, (1e7, 1e9), false).unwrap();
        assert!(
            plain.exponent > -4.0 && plain.exponent < -3.6,
            "plain fit {}",
            plain.exponent
        );
        let aware = decay_fit("e", &times, &values, (1e7, 1e9), true).unwrap();
        assert_abs_diff_eq!(aware.exponent, -4.0, epsilon = 0.1);
        assert_abs_diff_eq!(aware.log_power.unwrap(), 6.0, epsilon = 0.5);
    }

    #[test]
    fn decay_fit_rejects_bad_input() {
        let times = vec![1.0, 2.0, 4.0, 8.0, 16.0];
        let mut values = vec![1.0, 0.5, 0.25, 0.125, 0.0625];
        // Window too short.
        assert!(decay_fit("x", &times, &values, (1.0, 4.0), false).is_err());
        // Nonpositive value inside the window.
        values[2] = 0.0;
        assert!(decay_fit("x", &times, &values, (1.0, 16.0), false).is_err());
    }

    #[test]
    fn fit_or_floor_classifies_noise() {
        let times = vec![2.0, 4.0, 8.0, 16.0, 32.0];
        let noise = vec![1e-17, 3e-17, 2e-17, 1e-17, 2e-17];
        match fit_or_floor("e", &times, &noise, (2.0, 32.0), false, 1e-13).unwrap() {
            FitOutcome::BelowFloor { max_value, .. } => assert!(max_value < 1e-13),
            FitOutcome::Fit(_) => panic!("noise series should classify below floor"),
        }
        let real = vec![1.0, 0.25, 0.0625, 0.015625, 0.00390625];
        match fit_or_floor("e", &times, &real, (2.0, 32.0), false, 1e-13).unwrap() {
            FitOutcome::Fit(f) => assert_abs_diff_eq!(f.exponent, -2.0, epsilon = 1e-9),
            FitOutcome::BelowFloor { .. } => panic!("real series misclassified"),
        }
    }
}
