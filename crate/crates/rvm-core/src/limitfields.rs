//! Limiting electromagnetic fields.
//!
//! The scaled limits of E and B along rays x = qt solve a degenerate elliptic
//! equation on the velocity ball |q| < γ < 1:
//!
//!   𝓛u = Σ_ij (q_i q_j − δ_ij) ∂_{q_i q_j} u + 6 q·∇u + 6u,
//!
//! with sources built from ρ∞ and j∞. This module discretizes 𝓛 with
//! second-order centered stencils on a node lattice, solves the Dirichlet
//! problem matrix-free with Jacobi-preconditioned BiCGSTAB, and evaluates the
//! asymptotic force K∞(p) = e(E∞(v(p)) + v(p) × B∞(v(p))).

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::Grid3;
use crate::kinematics::{self, SpeciesSpec};
use crate::linal;

/// Term toggles for the operator; the corrupted variants feed negative
/// controls and the maximum-principle check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorTerms {
    pub second_order: bool,
    pub drift: bool,
    pub zero_order: bool,
}

impl OperatorTerms {
    pub const FULL: OperatorTerms =
        OperatorTerms { second_order: true, drift: true, zero_order: true };
    /// Drops the 6u term (negative-control variant).
    pub const NO_ZERO_ORDER: OperatorTerms =
        OperatorTerms { second_order: true, drift: true, zero_order: false };
    /// Pure second-order part, used by the maximum-principle smoke test.
    pub const SECOND_ONLY: OperatorTerms =
        OperatorTerms { second_order: true, drift: false, zero_order: false };
}

const EXTERIOR: u8 = 0;
/// Inside the ball but adjacent to its complement: pinned to zero.
const PINNED: u8 = 1;
const INTERIOR: u8 = 2;

/// Node lattice over [−γ, γ]³ with the ball-interior mask.
pub struct BallLattice {
    pub gamma: f64,
    pub nodes: usize,
    pub h: f64,
    mask: Vec<u8>,
}

/// Offsets reached by the 𝓛 stencil: 6 faces plus 12 edge diagonals.
const STENCIL: [[i64; 3]; 18] = [
    [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
    [1, 1, 0], [1, -1, 0], [-1, 1, 0], [-1, -1, 0],
    [1, 0, 1], [1, 0, -1], [-1, 0, 1], [-1, 0, -1],
    [0, 1, 1], [0, 1, -1], [0, -1, 1], [0, -1, -1],
];

impl BallLattice {
    pub fn new(gamma: f64, nodes: usize) -> Result<BallLattice> {
        if !(gamma > 0.0) || 1.0 - gamma * gamma <= 0.01 {
            return Err(Error::Domain(format!(
                "ellipticity margin 1 − γ² = {} too small (γ = {gamma})",
                1.0 - gamma * gamma
            )));
        }
        if nodes < 9 || nodes % 2 == 0 {
            return Err(Error::Domain(format!("lattice needs odd nodes ≥ 9, got {nodes}")));
        }
        let h = 2.0 * gamma / (nodes - 1) as f64;
        let inside = |i: i64, j: i64, k: i64| -> bool {
            if i < 0 || j < 0 || k < 0 || i >= nodes as i64 || j >= nodes as i64 || k >= nodes as i64
            {
                return false;
            }
            let q = [
                -gamma + i as f64 * h,
                -gamma + j as f64 * h,
                -gamma + k as f64 * h,
            ];
            linal::norm_sq(q) < gamma * gamma
        };
        let mut mask = vec![EXTERIOR; nodes * nodes * nodes];
        for k in 0..nodes as i64 {
            for j in 0..nodes as i64 {
                for i in 0..nodes as i64 {
                    if !inside(i, j, k) {
                        continue;
                    }
                    let full = STENCIL.iter().all(|d| inside(i + d[0], j + d[1], k + d[2]));
                    let flat = (i + nodes as i64 * (j + nodes as i64 * k)) as usize;
                    mask[flat] = if full { INTERIOR } else { PINNED };
                }
            }
        }
        Ok(BallLattice { gamma, nodes, h, mask })
    }

    /// Zero grid aligned with this lattice.
    pub fn grid(&self) -> Grid3 {
        Grid3::zeros([self.nodes; 3], [-self.gamma; 3], self.h)
    }

    pub fn is_interior(&self, flat: usize) -> bool {
        self.mask[flat] == INTERIOR
    }

    pub fn interior_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m == INTERIOR).count()
    }

    /// A grid conforms if it shares shape, origin and spacing with ours.
    pub fn conforms(&self, g: &Grid3) -> bool {
        g.n == [self.nodes; 3]
            && (g.h - self.h).abs() <= 1e-12 * self.h
            && g.origin.iter().all(|&o| (o + self.gamma).abs() <= 1e-12 * self.gamma)
    }
}

/// Apply the discretized operator at interior nodes (zero elsewhere).
/// Neighbor values are taken from `u` as stored, so Dirichlet data lives in
/// the grid itself.
#[allow(non_snake_case)]
pub fn apply_L(lat: &BallLattice, u: &Grid3, terms: OperatorTerms) -> Grid3 {
    let n = lat.nodes;
    let h = lat.h;
    let gamma = lat.gamma;
    let inv_h2 = 1.0 / (h * h);
    let inv_4h2 = 0.25 * inv_h2;
    let inv_2h = 0.5 / h;
    let mut out = lat.grid();
    exec::fill_indexed(&mut out.data, |flat| {
        if lat.mask[flat] != INTERIOR {
            return 0.0;
        }
        let i = flat % n;
        let j = (flat / n) % n;
        let k = flat / (n * n);
        let q = [
            -gamma + i as f64 * h,
            -gamma + j as f64 * h,
            -gamma + k as f64 * h,
        ];
        let g = |di: i64, dj: i64, dk: i64| -> f64 {
            u.get(
                (i as i64 + di) as usize,
                (j as i64 + dj) as usize,
                (k as i64 + dk) as usize,
            )
        };
        let u0 = g(0, 0, 0);
        let mut val = 0.0;
        if terms.second_order {
            let uxx = (g(1, 0, 0) - 2.0 * u0 + g(-1, 0, 0)) * inv_h2;
            let uyy = (g(0, 1, 0) - 2.0 * u0 + g(0, -1, 0)) * inv_h2;
            let uzz = (g(0, 0, 1) - 2.0 * u0 + g(0, 0, -1)) * inv_h2;
            val += (q[0] * q[0] - 1.0) * uxx
                + (q[1] * q[1] - 1.0) * uyy
                + (q[2] * q[2] - 1.0) * uzz;
            let uxy = (g(1, 1, 0) + g(-1, -1, 0) - g(1, -1, 0) - g(-1, 1, 0)) * inv_4h2;
            let uxz = (g(1, 0, 1) + g(-1, 0, -1) - g(1, 0, -1) - g(-1, 0, 1)) * inv_4h2;
            let uyz = (g(0, 1, 1) + g(0, -1, -1) - g(0, 1, -1) - g(0, -1, 1)) * inv_4h2;
            val += 2.0 * (q[0] * q[1] * uxy + q[0] * q[2] * uxz + q[1] * q[2] * uyz);
        }
        if terms.drift {
            val += 6.0
                * (q[0] * (g(1, 0, 0) - g(-1, 0, 0))
                    + q[1] * (g(0, 1, 0) - g(0, -1, 0))
                    + q[2] * (g(0, 0, 1) - g(0, 0, -1)))
                * inv_2h;
        }
        if terms.zero_order {
            val += 6.0 * u0;
        }
        val
    });
    out
}

/// Diagonal of the discrete operator (Jacobi preconditioner).
fn diagonal(lat: &BallLattice, terms: OperatorTerms) -> Vec<f64> {
    let n = lat.nodes;
    let inv_h2 = 1.0 / (lat.h * lat.h);
    let mut diag = vec![1.0; n * n * n];
    for (flat, d) in diag.iter_mut().enumerate() {
        if lat.mask[flat] != INTERIOR {
            continue;
        }
        let i = flat % n;
        let j = (flat / n) % n;
        let k = flat / (n * n);
        let q = [
            -lat.gamma + i as f64 * lat.h,
            -lat.gamma + j as f64 * lat.h,
            -lat.gamma + k as f64 * lat.h,
        ];
        let mut v = 0.0;
        if terms.second_order {
            v += -2.0 * inv_h2 * (linal::norm_sq(q) - 3.0);
        }
        if terms.zero_order {
            v += 6.0;
        }
        *d = if v.abs() > 1e-300 { v } else { 1.0 };
    }
    diag
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final relative residual |𝓛u − f| / |f| over interior nodes (L²).
    pub residual: f64,
    pub unknowns: usize,
}

/// Dirichlet problem for 𝓛 on the velocity ball: source on the lattice,
/// solution pinned to zero on the first inside layer and extended by zero.
pub struct EllipticProblem {
    pub lattice: BallLattice,
    pub source: Grid3,
    pub terms: OperatorTerms,
    pub rtol: f64,
    pub max_iter: usize,
}

impl EllipticProblem {
    pub fn new(lattice: BallLattice, source: Grid3) -> Result<EllipticProblem> {
        if !lattice.conforms(&source) {
            return Err(Error::Domain("source grid does not conform to ball lattice".into()));
        }
        Ok(EllipticProblem {
            lattice,
            source,
            terms: OperatorTerms::FULL,
            rtol: 1e-10,
            max_iter: 50_000,
        })
    }
}

fn dot_masked(lat: &BallLattice, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (flat, (&x, &y)) in a.iter().zip(b.iter()).enumerate() {
        if lat.mask[flat] == INTERIOR {
            s += x * y;
        }
    }
    s
}

/// Solve the Dirichlet problem with Jacobi-preconditioned BiCGSTAB.
pub fn solve_dirichlet(problem: &EllipticProblem) -> Result<(Grid3, SolveReport)> {
    let lat = &problem.lattice;
    let unknowns = lat.interior_count();
    let diag = diagonal(lat, problem.terms);

    // Right-hand side restricted to interior nodes.
    let mut b = lat.grid();
    for (flat, v) in b.data.iter_mut().enumerate() {
        if lat.mask[flat] == INTERIOR {
            *v = problem.source.data[flat];
        }
    }
    let bnorm = dot_masked(lat, &b.data, &b.data).sqrt();
    if bnorm == 0.0 {
        return Ok((lat.grid(), SolveReport { iterations: 0, residual: 0.0, unknowns }));
    }

    let apply = |u: &Grid3| apply_L(lat, u, problem.terms);
    let precond = |r: &Grid3| -> Grid3 {
        let mut out = r.clone();
        for (flat, v) in out.data.iter_mut().enumerate() {
            if lat.mask[flat] == INTERIOR {
                *v /= diag[flat];
            } else {
                *v = 0.0;
            }
        }
        out
    };

    let mut x = lat.grid();
    let mut r = b.clone();
    let mut r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut p = lat.grid();
    let mut v = lat.grid();
    let mut history: Vec<f64> = vec![];

    for iter in 1..=problem.max_iter {
        let rho_new = dot_masked(lat, &r_hat.data, &r.data);
        if rho_new.abs() < 1e-290 {
            // Breakdown: restart on the current residual.
            r_hat = r.clone();
            rho = dot_masked(lat, &r_hat.data, &r.data);
            p = r.clone();
        } else {
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            // p = r + beta (p − omega v)
            p.add_scaled(-omega, &v);
            for (pd, rd) in p.data.iter_mut().zip(r.data.iter()) {
                *pd = rd + beta * *pd;
            }
        }
        let p_hat = precond(&p);
        v = apply(&p_hat);
        let denom = dot_masked(lat, &r_hat.data, &v.data);
        if denom.abs() < 1e-290 {
            r_hat = r.clone();
            continue;
        }
        alpha = rho / denom;
        let mut s = r.clone();
        s.add_scaled(-alpha, &v);
        let snorm = dot_masked(lat, &s.data, &s.data).sqrt();
        if snorm / bnorm <= problem.rtol {
            x.add_scaled(alpha, &p_hat);
            return Ok((x, SolveReport { iterations: iter, residual: snorm / bnorm, unknowns }));
        }
        let s_hat = precond(&s);
        let t = apply(&s_hat);
        let tt = dot_masked(lat, &t.data, &t.data);
        if tt.abs() < 1e-290 {
            return Err(solver_failure("breakdown (t = 0)", &history, unknowns));
        }
        omega = dot_masked(lat, &t.data, &s.data) / tt;
        x.add_scaled(alpha, &p_hat);
        x.add_scaled(omega, &s_hat);
        r = s;
        r.add_scaled(-omega, &t);
        let rnorm = dot_masked(lat, &r.data, &r.data).sqrt();
        history.push(rnorm / bnorm);
        if rnorm / bnorm <= problem.rtol {
            return Ok((x, SolveReport { iterations: iter, residual: rnorm / bnorm, unknowns }));
        }
        if omega.abs() < 1e-290 {
            return Err(solver_failure("breakdown (omega = 0)", &history, unknowns));
        }
    }
    Err(solver_failure("iteration cap reached", &history, unknowns))
}

fn solver_failure(why: &str, history: &[f64], unknowns: usize) -> Error {
    let tail: Vec<String> = history
        .iter()
        .rev()
        .take(8)
        .rev()
        .map(|r| format!("{r:.3e}"))
        .collect();
    Error::Solver(format!(
        "BiCGSTAB {why} after {} iterations on {unknowns} unknowns; residual tail [{}]",
        history.len(),
        tail.join(", ")
    ))
}

/// Solve the three component problems 𝓛E∞^i = (e_source)^i.
#[allow(non_snake_case)]
pub fn limit_E(
    gamma: f64,
    nodes: usize,
    e_source: &[Grid3; 3],
) -> Result<([Grid3; 3], Vec<SolveReport>)> {
    solve_components(gamma, nodes, e_source)
}

/// Solve the three component problems 𝓛B∞^i = (b_source)^i = (∇×j∞)^i.
#[allow(non_snake_case)]
pub fn limit_B(
    gamma: f64,
    nodes: usize,
    b_source: &[Grid3; 3],
) -> Result<([Grid3; 3], Vec<SolveReport>)> {
    solve_components(gamma, nodes, b_source)
}

fn solve_components(
    gamma: f64,
    nodes: usize,
    sources: &[Grid3; 3],
) -> Result<([Grid3; 3], Vec<SolveReport>)> {
    let mut out = vec![];
    let mut reports = vec![];
    for src in sources.iter() {
        let lat = BallLattice::new(gamma, nodes)?;
        let problem = EllipticProblem::new(lat, src.clone())?;
        let (u, rep) = solve_dirichlet(&problem)?;
        out.push(u);
        reports.push(rep);
    }
    let [a, b, c]: [Grid3; 3] = out.try_into().map_err(|_| Error::Run("three components".into()))?;
    Ok(([a, b, c], reports))
}

/// Asymptotic force K∞(p) = e (E∞(v(p)) + v(p) × B∞(v(p))), with the field
/// grids living on the |q| < γ lattice.
#[allow(non_snake_case)]
pub fn K_infinity(
    p: [f64; 3],
    spec: &SpeciesSpec,
    gamma: f64,
    e_inf: &[Grid3; 3],
    b_inf: &[Grid3; 3],
) -> Result<[f64; 3]> {
    let q = kinematics::velocity(p, spec);
    if linal::norm(q) >= gamma {
        return Err(Error::Domain(format!(
            "velocity |v(p)| = {} outside the |q| < γ = {gamma} ball",
            linal::norm(q)
        )));
    }
    let e = [
        e_inf[0].trilinear(q)?,
        e_inf[1].trilinear(q)?,
        e_inf[2].trilinear(q)?,
    ];
    let b = [
        b_inf[0].trilinear(q)?,
        b_inf[1].trilinear(q)?,
        b_inf[2].trilinear(q)?,
    ];
    Ok(linal::scale(spec.charge, linal::add(e, linal::cross(q, b))))
}
