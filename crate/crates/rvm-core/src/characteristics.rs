//! Characteristic trajectories, limiting momenta, and scattering labels.
//!
//! The pusher is the volume-preserving rotation-split (Boris) momentum update
//! wrapped in a drift–kick–drift position split: exact straight-line
//! transport when the force vanishes, second order against analytic
//! gyromotion. Tracer records carry the translated positions
//! Y(t) = X(t) − v(P(t))·t and, once a limiting momentum has been fitted, the
//! modified-scattering labels
//! label(t) = X(t) − v(P∞)·t + ln(t)·𝔸(P∞)·K∞(P∞),
//! whose Cauchy behaviour in dyadic time certifies modified scattering.

use crate::error::{Error, Result};
use crate::kinematics::{self, Matrix3, Model, SpeciesSpec};
use crate::linal::{self, Mat3};

/// Instantaneous phase-space point of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryState {
    pub x: [f64; 3],
    pub p: [f64; 3],
    pub t: f64,
}

/// Sampled trajectory history of one tracer particle.
#[derive(Debug, Clone)]
pub struct TracerRecord {
    pub id: usize,
    pub species: SpeciesSpec,
    pub times: Vec<f64>,
    pub x: Vec<[f64; 3]>,
    pub p: Vec<[f64; 3]>,
    /// Translated positions Y = X − v(P)·t.
    pub y: Vec<[f64; 3]>,
    /// Modified-scattering labels (empty until `scattering_label` runs).
    pub label: Vec<[f64; 3]>,
    /// (P∞ estimate, dyadic error bound) once fitted.
    pub p_inf: Option<([f64; 3], f64)>,
}

/// Source of (E, B) values for trajectory integration.
pub trait FieldSampler: Sync {
    fn fields_at(&self, t: f64, x: [f64; 3]) -> Result<([f64; 3], [f64; 3])>;
}

/// Analytic field function (E, B) = f(t, x).
pub struct AnalyticFields<F>(pub F);

impl<F: Fn(f64, [f64; 3]) -> ([f64; 3], [f64; 3]) + Sync> FieldSampler for AnalyticFields<F> {
    fn fields_at(&self, t: f64, x: [f64; 3]) -> Result<([f64; 3], [f64; 3])> {
        Ok((self.0)(t, x))
    }
}

/// A frozen field grid samples at its stored state; the time argument is
/// ignored (the PIC cycle calls the pusher exactly at the half-step where the
/// grid holds E^n and B^{n+1/2}).
impl FieldSampler for crate::maxwell::FieldGrid {
    fn fields_at(&self, _t: f64, x: [f64; 3]) -> Result<([f64; 3], [f64; 3])> {
        self.sample_fields(x)
    }
}

/// Boris rotation-split momentum kick over a full step dt with fields (e, b).
#[inline]
pub fn boris_kick(p: [f64; 3], e: [f64; 3], b: [f64; 3], s: &SpeciesSpec, dt: f64) -> [f64; 3] {
    let half_e = linal::scale(0.5 * dt * s.charge, e);
    let p_minus = linal::add(p, half_e);
    let gamma_m = match s.model {
        Model::Relativistic => kinematics::energy(p_minus, s.mass),
        Model::Classical => s.mass,
    };
    let t_vec = linal::scale(0.5 * dt * s.charge / gamma_m, b);
    let s_vec = linal::scale(2.0 / (1.0 + linal::norm_sq(t_vec)), t_vec);
    let p_prime = linal::add(p_minus, linal::cross(p_minus, t_vec));
    let p_plus = linal::add(p_minus, linal::cross(p_prime, s_vec));
    linal::add(p_plus, half_e)
}

/// One drift–kick–drift step: x drifts half a step, p gets the full Boris
/// kick with fields sampled at the midpoint, x drifts the second half with
/// the updated velocity.
pub fn push(
    state: &TrajectoryState,
    s: &SpeciesSpec,
    fields: &dyn FieldSampler,
    dt: f64,
) -> Result<TrajectoryState> {
    assert!(dt > 0.0);
    let v0 = kinematics::velocity(state.p, s);
    let x_half = linal::add(state.x, linal::scale(0.5 * dt, v0));
    let t_half = state.t + 0.5 * dt;
    let (e, b) = fields.fields_at(t_half, x_half)?;
    let p_new = boris_kick(state.p, e, b, s, dt);
    let v1 = kinematics::velocity(p_new, s);
    Ok(TrajectoryState {
        x: linal::add(x_half, linal::scale(0.5 * dt, v1)),
        p: p_new,
        t: state.t + dt,
    })
}

/// Integrate from `state.t` to `t_end` with fixed step dt, recording every
/// `cadence`-th step (plus the initial and final states).
pub fn integrate(
    state: TrajectoryState,
    s: &SpeciesSpec,
    fields: &dyn FieldSampler,
    t_end: f64,
    dt: f64,
    cadence: usize,
) -> Result<TracerRecord> {
    assert!(t_end >= state.t && dt > 0.0 && cadence > 0);
    let n_steps = ((t_end - state.t) / dt).round() as usize;
    let mut rec = TracerRecord {
        id: 0,
        species: *s,
        times: vec![],
        x: vec![],
        p: vec![],
        y: vec![],
        label: vec![],
        p_inf: None,
    };
    let mut cur = state;
    let record = |rec: &mut TracerRecord, st: &TrajectoryState| {
        rec.times.push(st.t);
        rec.x.push(st.x);
        rec.p.push(st.p);
        let v = kinematics::velocity(st.p, s);
        rec.y.push(linal::sub(st.x, linal::scale(st.t, v)));
    };
    record(&mut rec, &cur);
    for i in 1..=n_steps {
        cur = push(&cur, s, fields, dt)?;
        cur.t = state.t + i as f64 * dt; // avoid additive drift
        if i % cadence == 0 || i == n_steps {
            record(&mut rec, &cur);
        }
    }
    Ok(rec)
}

impl TracerRecord {
    /// Index of the record closest to time `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, ti) in self.times.iter().enumerate() {
            if (ti - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }
}

/// Estimate P∞ by the final recorded momentum and fit the dyadic error bound
/// |P(T)−P(T/2)| against the t⁻¹ envelope (t⁻² when `vanishing_envelope`,
/// matching a vanishing-field run). Stores the estimate in the record.
pub fn limiting_momentum(rec: &mut TracerRecord, vanishing_envelope: bool) -> Result<([f64; 3], f64)> {
    let n = rec.times.len();
    if n < 2 {
        return Err(Error::Domain("tracer record has fewer than 2 points".into()));
    }
    let t_final = rec.times[n - 1];
    let i_half = rec.index_at(0.5 * t_final);
    let t_half = rec.times[i_half];
    if !(t_half > rec.times[0] - 1e-12 && t_half < 0.75 * t_final) {
        return Err(Error::Domain(format!(
            "record too short for a dyadic check: T = {t_final}, earliest = {}",
            rec.times[0]
        )));
    }
    let gap = linal::norm(linal::sub(rec.p[n - 1], rec.p[i_half]));
    // Envelope c/t: |P(T)−P(T/2)| = c/T  ⇒ bound = gap.
    // Envelope c/t²: |P(T)−P(T/2)| = 3c/T² ⇒ bound = gap/3.
    let err_bound = if vanishing_envelope { gap / 3.0 } else { gap };
    let p_inf = rec.p[n - 1];
    rec.p_inf = Some((p_inf, err_bound));
    Ok((p_inf, err_bound))
}

/// Envelope-consistent refinement of the limiting momentum: solving
/// P(t) = P∞ − c/t through the dyadic checkpoints (T/2, T) gives
/// P∞ = 2P(T) − P(T/2). The final-time value P(T) alone carries an O(1/T)
/// bias that would enter scattering labels as a spurious term linear in t;
/// the refinement reduces the bias to the envelope's own remainder.
pub fn refined_p_inf(rec: &TracerRecord) -> Result<[f64; 3]> {
    let n = rec.times.len();
    if n < 2 {
        return Err(Error::Domain("tracer record has fewer than 2 points".into()));
    }
    let t_final = rec.times[n - 1];
    let i_half = rec.index_at(0.5 * t_final);
    if !(rec.times[i_half] < 0.75 * t_final) {
        return Err(Error::Domain("record too short for a dyadic refinement".into()));
    }
    Ok(linal::sub(linal::scale(2.0, rec.p[n - 1]), rec.p[i_half]))
}

/// Central finite-difference Jacobian ∂𝓟(T)/∂p of the final momentum with
/// respect to the initial momentum, and the spectral norm of its deviation
/// from the identity.
#[allow(non_snake_case)]
#[allow(clippy::too_many_arguments)]
pub fn jacobian_dP_dp(
    x: [f64; 3],
    p: [f64; 3],
    tau: f64,
    s: &SpeciesSpec,
    fields: &dyn FieldSampler,
    t_end: f64,
    dt: f64,
    h: f64,
) -> Result<(Matrix3, f64)> {
    assert!(h > 0.0);
    let mut cols = [[0.0; 3]; 3];
    for a in 0..3 {
        let mut p_hi = p;
        p_hi[a] += h;
        let mut p_lo = p;
        p_lo[a] -= h;
        let run = |p0: [f64; 3]| -> Result<[f64; 3]> {
            let st = TrajectoryState { x, p: p0, t: tau };
            let rec = integrate(st, s, fields, t_end, dt, usize::MAX)?;
            Ok(*rec.p.last().unwrap())
        };
        let hi = run(p_hi)?;
        let lo = run(p_lo)?;
        cols[a] = linal::scale(0.5 / h, linal::sub(hi, lo));
    }
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for a in 0..3 {
            m[i][a] = cols[a][i];
        }
    }
    let jac = Mat3(m);
    let dev = jac.sub(&Mat3::IDENTITY).spectral_norm();
    Ok((jac, dev))
}

/// Fill the modified-scattering labels
/// label(t) = X(t) − v(P∞)·t + ln(t)·𝔸(P∞)·K∞(P∞).
/// Requires a fitted P∞ and record times ≥ 1 (so ln t ≥ 0).
pub fn scattering_label<K>(rec: &mut TracerRecord, k_inf: K) -> Result<()>
where
    K: Fn([f64; 3]) -> Result<[f64; 3]>,
{
    let (p_inf, _) = rec
        .p_inf
        .ok_or_else(|| Error::Domain("scattering_label requires a fitted P∞".into()))?;
    if rec.times.first().is_some_and(|&t| t < 1.0 - 1e-12) {
        return Err(Error::Domain("scattering labels need record times ≥ 1".into()));
    }
    let v_inf = kinematics::velocity(p_inf, &rec.species);
    let correction = kinematics::jacobian_A(p_inf, &rec.species).apply(k_inf(p_inf)?);
    rec.label = rec
        .times
        .iter()
        .zip(rec.x.iter())
        .map(|(&t, &x)| {
            linal::add(
                linal::sub(x, linal::scale(t, v_inf)),
                linal::scale(t.ln(), correction),
            )
        })
        .collect();
    Ok(())
}
