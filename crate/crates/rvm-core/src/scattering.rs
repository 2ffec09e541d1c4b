//! End-to-end analysis of a completed run: limiting objects, decay fits,
//! modified-scattering statistics, and regime classification.
//!
//! `analyze_run` reads the artifacts written by `pic::run_coupled`, builds
//! F∞ → ρ∞ → j∞ → (E∞, B∞) → K∞, attaches scattering labels to the tracer
//! records, forms the dyadic tables of Theorem-style quantities, and writes
//! a JSON report plus plot-ready CSVs into `<run>/analysis/`. The whole
//! stage is deterministic: re-running it on an unchanged run directory
//! produces bit-identical artifacts.

use std::path::{Path, PathBuf};

use crate::asymptotics::{
    self, CauchyReport, FitOutcome, MomentumGridFunction,
};
use crate::characteristics::{self, TracerRecord};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::io::{self, CsvTable};
use crate::kinematics::{self, Model, SpeciesSpec};
use crate::limitfields::{self, SolveReport};
use crate::linal;
use crate::pic::{self, RunSummary};

/// Classification of the asymptotic regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Nonvanishing,
    Vanishing,
    Undetermined,
}

/// Decision thresholds, surfaced verbatim in every report. The exponent
/// cutoffs come from the sharp asymptotic statements; the constants are
/// measurement tolerances.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Thresholds {
    /// sup|ρ∞| must fall below `vanish_tol` × (total |charge mass| over the
    /// velocity-ball volume) for the vanishing classification.
    pub vanish_tol: f64,
    /// Cone-field decay exponent at or below which the fields count as
    /// vanishing-fast.
    pub field_vanish_exp: f64,
    /// |P(2T)−P(T)| slope at or below which momenta converge at the
    /// vanishing-regime rate.
    pub p_vanish_exp: f64,
    /// Series whose windowed maximum sits below this absolute floor are
    /// classified as at the noise floor rather than fitted.
    pub field_floor: f64,
}

impl Default for Thresholds {
    fn default() -> Thresholds {
        Thresholds {
            vanish_tol: 1e-3,
            field_vanish_exp: -2.5,
            p_vanish_exp: -1.5,
            field_floor: 1e-9,
        }
    }
}

/// Analysis knobs with defaults chosen for the desk-scale runs; all values
/// are echoed in the report.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AnalysisParams {
    /// Nodes per axis of the velocity-ball lattice for ρ∞ and the field
    /// solves (odd).
    pub q_nodes: usize,
    /// Smoothing-kernel width in histogram cells for F∞.
    pub kernel_width: f64,
    /// Fit window as a fraction of the final time: [frac·t_max, t_max].
    pub window_fraction: f64,
    /// Relative residual tolerance for the elliptic solves.
    pub solve_rtol: f64,
    pub thresholds: Thresholds,
}

impl Default for AnalysisParams {
    fn default() -> AnalysisParams {
        AnalysisParams {
            q_nodes: 33,
            kernel_width: 1.0,
            window_fraction: 0.1,
            solve_rtol: 1e-10,
            thresholds: Thresholds::default(),
        }
    }
}

/// Regime decision from the two independent indicators: smallness of ρ∞ and
/// fast decay of the cone fields. Conflicting indicators are reported as
/// undetermined rather than resolved by precedence.
pub fn classify_regime(
    rho_inf_sup: f64,
    mass_scale: f64,
    field_fit: &FitOutcome,
    thr: &Thresholds,
) -> Regime {
    let rho_small = rho_inf_sup <= thr.vanish_tol * mass_scale;
    let field_fast = match field_fit {
        FitOutcome::BelowFloor { .. } => true,
        FitOutcome::Fit(fit) => fit.exponent <= thr.field_vanish_exp,
    };
    match (rho_small, field_fast) {
        (true, true) => Regime::Vanishing,
        (false, false) => Regime::Nonvanishing,
        _ => Regime::Undetermined,
    }
}

/// One dyadic statistic: values over a ladder of doubling times.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DyadicTable {
    /// Base times T; each row compares the state at T with the state at 2T.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Strictly decreasing across the ladder (vacuously true when every
    /// value is exactly zero).
    pub decreasing: bool,
}

impl DyadicTable {
    fn from_values(times: Vec<f64>, values: Vec<f64>) -> DyadicTable {
        let decreasing = if values.iter().all(|&v| v == 0.0) {
            true
        } else {
            values.windows(2).all(|w| w[1] < w[0])
        };
        DyadicTable { times, values, decreasing }
    }
}

/// Doubling ladder T, 2T, … with 2·T_last ≤ t_final and T_first ≥ t_min.
pub fn dyadic_ladder(t_min: f64, t_final: f64) -> Vec<f64> {
    let mut ts = vec![];
    let mut t = t_final / 2.0;
    while t >= t_min - 1e-12 {
        ts.push(t);
        t /= 2.0;
    }
    ts.reverse();
    ts
}

/// Corrected-label convergence statistic S(T) = max over tracers of
/// |label(2T) − label(T)| on the given doubling ladder. The labels are the
/// testable content of h-convergence for a particle discretization: the
/// distribution is exactly constant along characteristics, so convergence
/// of the corrected trajectory labels is what certifies the limit.
pub fn h_convergence(records: &[TracerRecord], ladder: &[f64]) -> Result<DyadicTable> {
    if ladder.len() < 3 {
        return Err(Error::Domain(format!(
            "h_convergence needs ≥ 3 doublings, got {}",
            ladder.len()
        )));
    }
    for rec in records {
        if rec.label.len() != rec.times.len() {
            return Err(Error::Domain(format!(
                "tracer {} has no scattering labels",
                rec.id
            )));
        }
    }
    let values = ladder
        .iter()
        .map(|&t| {
            records
                .iter()
                .map(|rec| {
                    let a = rec.label[rec.index_at(t)];
                    let b = rec.label[rec.index_at(2.0 * t)];
                    linal::norm(linal::sub(b, a))
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(DyadicTable::from_values(ladder.to_vec(), values))
}

/// Dyadic momentum increments and their fitted decay rate.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub enum PRate {
    /// Every |P(2T)−P(T)| is exactly zero (free streaming).
    ExactConvergence,
    Fit {
        table: DyadicTable,
        /// Least-squares slope of ln max|P(2T)−P(T)| against ln T.
        slope: f64,
    },
}

/// Fit of log|P(2T)−P(T)| vs log T over the doubling ladder. The ladder
/// spans under a decade by construction, so the slope is fitted directly
/// here instead of through the windowed series fitter.
pub fn p_infinity_rate(records: &[TracerRecord], ladder: &[f64]) -> Result<PRate> {
    if ladder.len() < 3 {
        return Err(Error::Domain(format!(
            "p_infinity_rate needs ≥ 3 doublings, got {}",
            ladder.len()
        )));
    }
    let values: Vec<f64> = ladder
        .iter()
        .map(|&t| {
            records
                .iter()
                .map(|rec| {
                    let a = rec.p[rec.index_at(t)];
                    let b = rec.p[rec.index_at(2.0 * t)];
                    linal::norm(linal::sub(b, a))
                })
                .fold(0.0, f64::max)
        })
        .collect();
    if values.iter().all(|&v| v == 0.0) {
        return Ok(PRate::ExactConvergence);
    }
    if let Some(i) = values.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Domain(format!(
            "p_infinity_rate: zero increment at T = {} in an otherwise active run",
            ladder[i]
        )));
    }
    let n = ladder.len() as f64;
    let xbar = ladder.iter().map(|t| t.ln()).sum::<f64>() / n;
    let ybar = values.iter().map(|v| v.ln()).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, v) in ladder.iter().zip(&values) {
        let dx = t.ln() - xbar;
        sxx += dx * dx;
        sxy += dx * (v.ln() - ybar);
    }
    let slope = sxy / sxx;
    Ok(PRate::Fit {
        table: DyadicTable::from_values(ladder.to_vec(), values),
        slope,
    })
}

/// Lower-bound inequality certifying that the ln t correction is necessary:
/// for every T on the ladder the uncorrected statistic must satisfy
/// S_unc(T) ≥ (ln 2)·min over tracers |𝔸(P∞)K∞(P∞)| − 2·S(T).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CorrectionBound {
    /// min over tracers of |𝔸(P∞)K∞(P∞)|.
    pub min_correction: f64,
    /// S_unc(T_last) − S(T_last): the drift gap at the final doubling.
    pub final_gap: f64,
    pub holds: bool,
}

pub fn correction_necessity(
    corrected: &DyadicTable,
    uncorrected: &DyadicTable,
    correction_norms: &[f64],
) -> CorrectionBound {
    let min_correction = correction_norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_correction = if min_correction.is_finite() { min_correction } else { 0.0 };
    let ln2 = std::f64::consts::LN_2;
    let holds = corrected
        .values
        .iter()
        .zip(&uncorrected.values)
        .all(|(s, u)| *u >= ln2 * min_correction - 2.0 * s - 1e-12);
    let final_gap = match (uncorrected.values.last(), corrected.values.last()) {
        (Some(u), Some(s)) => u - s,
        _ => 0.0,
    };
    CorrectionBound { min_correction, final_gap, holds }
}

/// Everything the analysis stage measured, in one serializable report.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AnalysisReport {
    pub regime: Regime,
    pub params: AnalysisParams,
    /// Support parameters inferred from the run: momentum bound β, velocity
    /// bound ζ, solve-ball radius γ.
    pub beta: f64,
    pub zeta: f64,
    pub gamma: f64,
    pub classical: bool,
    /// Signed charge mass Σ e_α 𝓜^α and total |charge| mass Σ|e_α|𝓜^α.
    pub charge_mass: f64,
    pub mass_abs: f64,
    /// Reference density scale 𝓜_abs / ((4/3)πγ³) entering the vanishing
    /// test.
    pub mass_scale: f64,
    /// Dyadic Cauchy record of the spatial averages, per species.
    pub f_cauchy: Vec<CauchyReport>,
    pub rho_inf_sup: f64,
    /// ∫ρ∞ dq (should vanish for neutral data).
    pub rho_inf_integral: f64,
    pub e_inf_sup: f64,
    pub b_inf_sup: f64,
    pub solve_residual: f64,
    pub solve_iterations: usize,
    /// sup_x|t³ρ(t,x) − ρ∞(x/t)| per usable snapshot time.
    pub rescaled_density: DyadicTable,
    /// Windowed decay fits of the diagnostic series.
    pub fits: Vec<(String, FitOutcome)>,
    pub p_rate: PRate,
    pub s_corrected: DyadicTable,
    pub s_uncorrected: DyadicTable,
    pub correction: CorrectionBound,
    /// Tracers dropped because K∞ is undefined at their limiting velocity.
    pub tracers_skipped: usize,
    pub tracers_used: usize,
}

fn ctx<T>(what: &str, path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Run(format!("analysis needs {what} at {}: {e}", path.display())))
}

/// Read the tracer table back into per-tracer records (with their species
/// index), restricted to times ≥ 1 so that scattering labels are defined.
fn load_tracers(dir: &Path, cfg: &RunConfig) -> Result<Vec<(usize, TracerRecord)>> {
    let path = dir.join("tracers.csv");
    let table = ctx("tracer table", &path, CsvTable::read(&path))?;
    let cols: Result<Vec<Vec<f64>>> = [
        "id", "species", "t", "x0", "x1", "x2", "p0", "p1", "p2",
    ]
    .iter()
    .map(|name| table.column(name))
    .collect();
    let cols = cols?;
    let mut records: Vec<(usize, TracerRecord)> = vec![];
    for row in 0..cols[0].len() {
        let t = cols[2][row];
        if t < 1.0 - 1e-12 {
            continue;
        }
        let id = cols[0][row] as usize;
        let alpha = cols[1][row] as usize;
        if alpha >= cfg.species.len() {
            return Err(Error::Format(format!(
                "tracers.csv row {row}: species index {alpha} out of range"
            )));
        }
        let rec = match records.iter_mut().find(|(_, r)| r.id == id) {
            Some((_, r)) => r,
            None => {
                records.push((
                    alpha,
                    TracerRecord {
                        id,
                        species: cfg.species[alpha].to_spec(cfg.model.kind),
                        times: vec![],
                        x: vec![],
                        p: vec![],
                        y: vec![],
                        label: vec![],
                        p_inf: None,
                    },
                ));
                &mut records.last_mut().unwrap().1
            }
        };
        let x = [cols[3][row], cols[4][row], cols[5][row]];
        let p = [cols[6][row], cols[7][row], cols[8][row]];
        let v = kinematics::velocity(p, &rec.species);
        rec.times.push(t);
        rec.x.push(x);
        rec.p.push(p);
        rec.y.push(linal::sub(x, linal::scale(t, v)));
    }
    Ok(records)
}

fn read_series(table: &CsvTable, name: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((table.column("time")?, table.column(name)?))
}

/// Run the full analysis pipeline on a completed run directory and write
/// `analysis/report.json` plus plot CSVs next to the run artifacts.
pub fn analyze_run(dir: &Path, params: &AnalysisParams) -> Result<AnalysisReport> {
    let summary_path = dir.join("summary.json");
    let summary: RunSummary = ctx("run summary", &summary_path, io::read_json(&summary_path))?;
    let cfg_path = dir.join("config.cfg");
    let cfg_text = std::fs::read_to_string(&cfg_path)
        .map_err(|e| Error::Run(format!("analysis needs config at {}: {e}", cfg_path.display())))?;
    let cfg = RunConfig::parse(&cfg_text)?;
    let specs: Vec<SpeciesSpec> = cfg
        .species
        .iter()
        .map(|s| s.to_spec(cfg.model.kind))
        .collect();
    let classical = cfg.model.kind == Model::Classical;

    let fields_path = dir.join("fields.csv");
    let fields_csv = ctx("field diagnostics", &fields_path, CsvTable::read(&fields_path))?;
    let kin_path = dir.join("kinetics.csv");
    let kinetics_csv = ctx("kinetic diagnostics", &kin_path, CsvTable::read(&kin_path))?;

    // Support parameters from the measured momentum bound: β is conservative
    // (global max|p| over the smallest mass).
    let min_mass = specs.iter().map(|s| s.mass).fold(f64::INFINITY, f64::min);
    let beta = kinetics_csv
        .column("max_p")?
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        / min_mass;
    let sp = kinematics::support_params(beta);
    let zeta = if classical { beta } else { sp.zeta };
    let gamma = sp.gamma;

    // Per-species F∞ from the dyadic histogram snapshots.
    let snaps = &summary.snapshots;
    if snaps.len() < 3 {
        return Err(Error::Run(format!(
            "analysis needs ≥ 3 snapshots, run has {}",
            snaps.len()
        )));
    }
    let nsp = summary.species;
    let mut f_infs = vec![];
    let mut f_cauchy = vec![];
    for alpha in 0..nsp {
        let mut series = vec![];
        for entry in snaps {
            let path = pic::histogram_path(dir, alpha, entry.step);
            let (grid, t) = ctx("histogram snapshot", &path, io::read_scalar_grid(&path))?;
            series.push((t, grid));
        }
        let (f_inf, cauchy) = asymptotics::limit_f(&series, params.kernel_width)?;
        f_infs.push(f_inf);
        f_cauchy.push(cauchy);
    }

    // Signed and absolute charge masses from the run's conserved weights.
    let mut charge_mass = 0.0;
    let mut mass_abs = 0.0;
    for (alpha, s) in specs.iter().enumerate() {
        charge_mass += s.charge * summary.initial_weight[alpha];
        mass_abs += s.charge.abs() * summary.initial_weight[alpha];
    }
    let mass_scale = mass_abs / (4.0 / 3.0 * std::f64::consts::PI * gamma.powi(3));

    // Limiting densities and fields on the velocity ball.
    let f_refs: Vec<&MomentumGridFunction> = f_infs.iter().collect();
    let rho_inf = asymptotics::limit_rho(&f_refs, &specs, gamma, params.q_nodes)?;
    let j_inf = asymptotics::limit_j(&rho_inf);
    let derivs = asymptotics::limit_derivatives(&rho_inf, &j_inf);
    let rho_inf_sup = rho_inf.sup_abs();
    let rho_inf_integral = rho_inf.sum() * rho_inf.h.powi(3);

    let (e_inf, e_reports) = solve_with_rtol(gamma, params.q_nodes, &derivs.e_source, params.solve_rtol)?;
    let (b_inf, b_reports) = solve_with_rtol(gamma, params.q_nodes, &derivs.b_source, params.solve_rtol)?;
    let e_inf_sup = e_inf.iter().map(Grid3::sup_abs).fold(0.0, f64::max);
    let b_inf_sup = b_inf.iter().map(Grid3::sup_abs).fold(0.0, f64::max);
    let solve_residual = e_reports
        .iter()
        .chain(&b_reports)
        .map(|r| r.residual)
        .fold(0.0, f64::max);
    let solve_iterations = e_reports
        .iter()
        .chain(&b_reports)
        .map(|r| r.iterations)
        .max()
        .unwrap_or(0);

    // Rescaled charge-density comparison at every snapshot late enough for
    // the cone to span a few cells.
    let mut resc_times = vec![];
    let mut resc_errs = vec![];
    for entry in snaps {
        if entry.time <= 0.0 {
            continue;
        }
        let mut rho_t: Option<Grid3> = None;
        for (alpha, s) in specs.iter().enumerate() {
            let path = pic::density_path(dir, alpha, entry.step);
            let (num, _) = ctx("density snapshot", &path, io::read_scalar_grid(&path))?;
            let g = rho_t.get_or_insert_with(|| Grid3::zeros(num.n, num.origin, num.h));
            g.add_scaled(s.charge, &num);
        }
        let rho_t = rho_t.ok_or_else(|| Error::Run("run has no species".into()))?;
        match asymptotics::rescaled_compare(&rho_t, &rho_inf, entry.time) {
            Ok((sup, _)) => {
                resc_times.push(entry.time);
                resc_errs.push(sup);
            }
            Err(_) => continue, // too early: rescaled cone under-resolved
        }
    }
    let rescaled_density = DyadicTable::from_values(resc_times, resc_errs);

    // Windowed decay fits of the diagnostic series.
    let t_max = summary.final_time;
    let window = (params.window_fraction * t_max, t_max);
    let thr = &params.thresholds;
    let mut fits: Vec<(String, FitOutcome)> = vec![];
    for (name, table) in [
        ("sup_e_cone", &fields_csv),
        ("sup_b_cone", &fields_csv),
        ("sup_rho", &kinetics_csv),
        ("sup_j", &kinetics_csv),
    ] {
        let (times, values) = read_series(table, name)?;
        let outcome =
            asymptotics::fit_or_floor(name, &times, &values, window, false, thr.field_floor)?;
        fits.push((name.to_string(), outcome));
    }

    // Tracer records, limiting momenta, and scattering labels.
    let mut records = load_tracers(dir, &cfg)?;
    if records.is_empty() {
        return Err(Error::Run("run has no tracer records at t ≥ 1".into()));
    }
    let vanishing_envelope = false; // refined below once the regime is known
    for (_, rec) in records.iter_mut() {
        characteristics::limiting_momentum(rec, vanishing_envelope)?;
        let refined = characteristics::refined_p_inf(rec)?;
        let bound = rec.p_inf.map(|(_, b)| b).unwrap_or(0.0);
        rec.p_inf = Some((refined, bound));
    }

    // K∞ per tracer; tracers whose limiting velocity leaves the solve ball
    // cannot be labeled and are dropped (counted in the report).
    let k_of = |p: [f64; 3], spec: &SpeciesSpec| -> Result<[f64; 3]> {
        limitfields::K_infinity(p, spec, gamma, &e_inf, &b_inf)
    };
    let mut corrected = vec![];
    let mut corrected_alpha = vec![];
    let mut correction_norms = vec![];
    let mut skipped = 0usize;
    for (alpha, rec) in &records {
        let (p_inf, _) = rec.p_inf.unwrap();
        let spec = rec.species;
        match k_of(p_inf, &spec) {
            Ok(k) => {
                let mut c = rec.clone();
                characteristics::scattering_label(&mut c, |p| k_of(p, &spec))?;
                correction_norms
                    .push(linal::norm(kinematics::jacobian_A(p_inf, &spec).apply(k)));
                corrected.push(c);
                corrected_alpha.push(*alpha);
            }
            Err(_) => skipped += 1,
        }
    }
    if corrected.is_empty() {
        return Err(Error::Run(
            "no tracer has a limiting velocity inside the solve ball".into(),
        ));
    }
    let mut uncorrected = corrected.clone();
    for rec in uncorrected.iter_mut() {
        characteristics::scattering_label(rec, |_| Ok([0.0; 3]))?;
    }

    let t_first = corrected
        .iter()
        .map(|r| r.times[0])
        .fold(0.0, f64::max)
        .max(1.0);
    let ladder = dyadic_ladder(t_first, t_max);
    let s_corrected = h_convergence(&corrected, &ladder)?;
    let s_uncorrected = h_convergence(&uncorrected, &ladder)?;
    let p_rate = p_infinity_rate(&corrected, &ladder)?;
    let correction = correction_necessity(&s_corrected, &s_uncorrected, &correction_norms);

    // Regime from ρ∞ and the electric cone-field fit.
    let regime = classify_regime(rho_inf_sup, mass_scale, &fits[0].1, thr);

    let report = AnalysisReport {
        regime,
        params: params.clone(),
        beta,
        zeta,
        gamma,
        classical,
        charge_mass,
        mass_abs,
        mass_scale,
        f_cauchy,
        rho_inf_sup,
        rho_inf_integral,
        e_inf_sup,
        b_inf_sup,
        solve_residual,
        solve_iterations,
        rescaled_density,
        fits,
        p_rate,
        s_corrected,
        s_uncorrected,
        correction,
        tracers_skipped: skipped,
        tracers_used: corrected.len(),
    };

    write_artifacts(
        dir,
        &report,
        &rho_inf,
        &e_inf,
        &b_inf,
        &corrected,
        &corrected_alpha,
        &fields_csv,
        &kinetics_csv,
    )?;
    Ok(report)
}

fn solve_with_rtol(
    gamma: f64,
    nodes: usize,
    sources: &[Grid3; 3],
    rtol: f64,
) -> Result<([Grid3; 3], Vec<SolveReport>)> {
    let mut out = vec![];
    let mut reports = vec![];
    for src in sources.iter() {
        let lat = limitfields::BallLattice::new(gamma, nodes)?;
        let mut problem = limitfields::EllipticProblem::new(lat, src.clone())?;
        problem.rtol = rtol;
        let (u, rep) = limitfields::solve_dirichlet(&problem)?;
        out.push(u);
        reports.push(rep);
    }
    let [a, b, c]: [Grid3; 3] = out
        .try_into()
        .map_err(|_| Error::Run("three components".into()))?;
    Ok(([a, b, c], reports))
}

fn analysis_dir(dir: &Path) -> PathBuf {
    dir.join("analysis")
}

#[allow(clippy::too_many_arguments)]
fn write_artifacts(
    dir: &Path,
    report: &AnalysisReport,
    rho_inf: &Grid3,
    e_inf: &[Grid3; 3],
    b_inf: &[Grid3; 3],
    tracers: &[TracerRecord],
    tracer_alpha: &[usize],
    fields_csv: &CsvTable,
    kinetics_csv: &CsvTable,
) -> Result<()> {
    let out = analysis_dir(dir);
    std::fs::create_dir_all(&out)?;
    io::write_json(&out.join("report.json"), report)?;

    io::write_scalar_grid(&out.join("rho_inf.rvmh"), rho_inf, 0.0)?;
    for (axis, name) in ["e_inf_0", "e_inf_1", "e_inf_2"].iter().enumerate() {
        io::write_scalar_grid(&out.join(format!("{name}.rvmh")), &e_inf[axis], 0.0)?;
    }
    for (axis, name) in ["b_inf_0", "b_inf_1", "b_inf_2"].iter().enumerate() {
        io::write_scalar_grid(&out.join(format!("{name}.rvmh")), &b_inf[axis], 0.0)?;
    }

    // Cauchy record of the spatial averages.
    let mut cauchy = CsvTable::new(&["species", "time", "sup_diff"]);
    for (alpha, rep) in report.f_cauchy.iter().enumerate() {
        for (t, d) in rep.times.iter().skip(1).zip(&rep.sup_diffs) {
            cauchy.push(vec![alpha as f64, *t, *d]);
        }
    }
    cauchy.write(&out.join("f_cauchy.csv"))?;

    // Rescaled density errors (the t³ρ comparison series).
    let mut resc = CsvTable::new(&["time", "sup_err"]);
    for (t, e) in report
        .rescaled_density
        .times
        .iter()
        .zip(&report.rescaled_density.values)
    {
        resc.push(vec![*t, *e]);
    }
    resc.write(&out.join("rescaled_density.csv"))?;

    // Windowed series with fitted models, one file per quantity.
    for (name, outcome) in &report.fits {
        let table = if name.starts_with("sup_e") || name.starts_with("sup_b") {
            fields_csv
        } else {
            kinetics_csv
        };
        let times = table.column("time")?;
        let values = table.column(name)?;
        let mut csv = CsvTable::new(&["time", "value", "model"]);
        for (t, v) in times.iter().zip(&values) {
            let model = match outcome {
                FitOutcome::Fit(fit) => {
                    if *t >= fit.window.0 && *t <= fit.window.1 {
                        // Reconstruct the fitted line through the window
                        // midpoint in log space.
                        let mid = (fit.window.0.ln() + fit.window.1.ln()) / 2.0;
                        let vmid = interp_log(&times, &values, mid);
                        (vmid.ln() + fit.exponent * (t.ln() - mid)).exp()
                    } else {
                        f64::NAN
                    }
                }
                FitOutcome::BelowFloor { floor, .. } => *floor,
            };
            csv.push(vec![*t, *v, model]);
        }
        csv.write(&out.join(format!("fit_{name}.csv")))?;
    }

    // Dyadic tables in one plot-ready file.
    let mut dyadic = CsvTable::new(&["T", "p_diff", "s_corrected", "s_uncorrected"]);
    let p_diffs: Vec<f64> = match &report.p_rate {
        PRate::ExactConvergence => vec![0.0; report.s_corrected.times.len()],
        PRate::Fit { table, .. } => table.values.clone(),
    };
    for (i, t) in report.s_corrected.times.iter().enumerate() {
        dyadic.push(vec![
            *t,
            p_diffs.get(i).copied().unwrap_or(f64::NAN),
            report.s_corrected.values[i],
            report.s_uncorrected.values[i],
        ]);
    }
    dyadic.write(&out.join("dyadic.csv"))?;

    // Labeled tracer table (the run's own tracers.csv stays untouched).
    let mut labeled = CsvTable::new(&[
        "id", "species", "t", "x0", "x1", "x2", "p0", "p1", "p2", "y0", "y1", "y2", "l0", "l1",
        "l2",
    ]);
    for (rec, &alpha) in tracers.iter().zip(tracer_alpha) {
        for (k, &t) in rec.times.iter().enumerate() {
            labeled.push(vec![
                rec.id as f64,
                alpha as f64,
                t,
                rec.x[k][0],
                rec.x[k][1],
                rec.x[k][2],
                rec.p[k][0],
                rec.p[k][1],
                rec.p[k][2],
                rec.y[k][0],
                rec.y[k][1],
                rec.y[k][2],
                rec.label[k][0],
                rec.label[k][1],
                rec.label[k][2],
            ]);
        }
    }
    labeled.write(&out.join("tracers_labeled.csv"))?;
    Ok(())
}

/// Geometric interpolation of a positive series at ln t = `target`.
fn interp_log(times: &[f64], values: &[f64], target: f64) -> f64 {
    let mut best = 0usize;
    for (i, t) in times.iter().enumerate() {
        if (t.ln() - target).abs() < (times[best].ln() - target).abs() {
            best = i;
        }
    }
    values[best].max(1e-300)
}
