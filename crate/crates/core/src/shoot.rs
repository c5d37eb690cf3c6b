//! Geodesic boundary-value problem: distance, minimizers, midpoints and cut
//! times.
//!
//! The unknown is the full covector `P ∈ T*_x`. Flowing `P` for unit time
//! reaches `exp_x(P/|P|, |P|)`, so a root of `F(P) = E(x, P, 1) − y` is a
//! geodesic of length `T = √(2H(x, P))`. Levenberg–Marquardt on `F` uses the
//! variational Jacobian `∂q(1)/∂P`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{
    self, exp_map, first_conjugate_time, hamiltonian_flow, linearized_flow, CotangentState,
    CovectorChart, FlowOptions, InitialCovector, Stepping,
};
use crate::models::{ModelId, SrModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootOptions {
    /// Start points per angular direction of `Λ_x`.
    pub n_start: usize,
    pub newton_max_iter: usize,
    /// Endpoint residual accepted as converged.
    pub newton_tol: f64,
    /// Deduplication radius in `(p0, T)`.
    pub cluster_radius: f64,
    /// Integrator tolerance of the coarse multi-start phase.
    pub coarse_tol: f64,
    /// Integrator tolerance of the polishing phase.
    pub flow_tol: f64,
    /// Compute conjugate-point flags for each solution.
    pub check_conjugate: bool,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            n_start: 64,
            newton_max_iter: 100,
            newton_tol: 1e-10,
            cluster_radius: 1e-4,
            coarse_tol: 1e-6,
            flow_tol: 1e-12,
            check_conjugate: true,
        }
    }
}

impl ShootOptions {
    fn validate(&self) -> Result<()> {
        let ok = self.n_start >= 4
            && self.newton_max_iter > 0
            && self.newton_tol > 0.0
            && self.cluster_radius > 0.0
            && self.coarse_tol > 0.0
            && self.flow_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad shooting options {self:?}")))
        }
    }
}

/// One geodesic from `x` to `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSolution {
    pub p0: InitialCovector,
    /// Arrival time, equal to the length.
    pub t: f64,
    pub residual: f64,
    pub is_minimizing: bool,
    pub conjugate_at_or_before_t: bool,
    /// Unit-energy covector at the endpoint.
    pub arrival: Vec<f64>,
}

impl GeodesicSolution {
    /// The covector `T·p0` that reaches the endpoint in unit time.
    pub fn full_covector(&self) -> Vec<f64> {
        self.p0.p0.iter().map(|v| v * self.t).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub d: f64,
    pub solutions: Vec<GeodesicSolution>,
}

impl DistanceResult {
    pub fn minimizers(&self) -> impl Iterator<Item = &GeodesicSolution> {
        self.solutions.iter().filter(|s| s.is_minimizing)
    }
}

struct LmOutcome {
    p: Vec<f64>,
    p_end: Vec<f64>,
    residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn residual_of(q: &[f64], y: &[f64]) -> f64 {
    norm(&q.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>())
}

/// Levenberg–Marquardt on `P ↦ E(x, P, 1) − y`. Returns the best iterate;
/// the caller decides whether its residual is acceptable.
fn lm_solve(
    model: &SrModel,
    x: &[f64],
    y: &[f64],
    p_init: &[f64],
    stepping: Stepping,
    tol: f64,
    max_iter: usize,
) -> Option<LmOutcome> {
    let n = x.len();
    let mut p = p_init.to_vec();
    let p_bound = 20.0 * (norm(p_init) + 1.0);
    let mut lin = linearized_flow(model, x, &p, 1.0, stepping).ok()?;
    let mut r = residual_of(&lin.q, y);
    if !r.is_finite() {
        return None;
    }
    let mut lambda = 1e-3;
    let mut history = Vec::with_capacity(max_iter);
    let mut slow = 0;
    for it in 0..max_iter {
        if r < tol {
            break;
        }
        history.push(r);
        // Give up on starts that stall far from a root.
        if it >= 10 && r > 1e-3 && r > 0.5 * history[it - 10] {
            break;
        }
        let f = DVector::from_iterator(n, lin.q.iter().zip(y).map(|(a, b)| a - b));
        let j = lin.dq_dp.clone();
        let a = j.transpose() * &j;
        let g = j.transpose() * &f;
        let dmax = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max).max(1e-300);
        let mut accepted = false;
        let r_before = r;
        for _ in 0..10 {
            let mut m = a.clone();
            for i in 0..n {
                m[(i, i)] += lambda * (a[(i, i)] + 1e-9 * dmax);
            }
            let Some(delta) = m.lu().solve(&(-&g)) else {
                lambda *= 4.0;
                continue;
            };
            // Trust region: long steps send the flow into regimes where the
            // integrator needs a huge number of steps.
            let dn = delta.norm();
            let cap = 0.5 * (norm(&p) + 1.0);
            let shrink = if dn > cap { cap / dn } else { 1.0 };
            let cand: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + shrink * b).collect();
            if norm(&cand) > p_bound {
                lambda *= 4.0;
                continue;
            }
            if let Ok(l2) = linearized_flow(model, x, &cand, 1.0, stepping) {
                let r2 = residual_of(&l2.q, y);
                if r2.is_finite() && r2 < r {
                    p = cand;
                    lin = l2;
                    r = r2;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    break;
                }
            }
            lambda *= 4.0;
        }
        slow = if accepted && r > 0.5 * r_before { slow + 1 } else { 0 };
        let near = r < 1e-4 * (1.0 + norm(y));
        if !near && !accepted {
            break;
        }
        if near && (!accepted || slow >= 3) {
            slow = 0;
            // At a degenerate root the residual lies mostly in the range of
            // the dominant singular direction and Newton steps stall; search
            // along the weakest direction instead.
            match kernel_line_search(model, x, y, &p, &j, r, stepping) {
                Some((p2, l2, r2)) => {
                    p = p2;
                    lin = l2;
                    r = r2;
                }
                None if accepted => {}
                None => break,
            }
        }
    }
    Some(LmOutcome {
        p,
        p_end: lin.p,
        residual: r,
    })
}

/// Search along the weakest singular direction of the Jacobian, keeping the
/// energy fixed and following each trial with one Gauss–Newton correction.
/// The root set near a degenerate root is curved, so a straight search
/// leaves the valley quadratically.
fn kernel_line_search(
    model: &SrModel,
    x: &[f64],
    y: &[f64],
    p: &[f64],
    j: &DMatrix<f64>,
    r: f64,
    stepping: Stepping,
) -> Option<(Vec<f64>, flow::Linearized, f64)> {
    let n = x.len();
    let svd = j.clone().svd(false, true);
    let vt = svd.v_t?;
    let imin = (0..svd.singular_values.len())
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))?;
    let v: Vec<f64> = vt.row(imin).iter().cloned().collect();
    let h0 = model.hamiltonian(x, p);
    let scale = norm(p).max(1e-12);
    let mut best: Option<(Vec<f64>, flow::Linearized, f64)> = None;
    let mut best_r = r;
    let consider = |cand: Vec<f64>, best: &mut Option<_>, best_r: &mut f64| -> Option<flow::Linearized> {
        let l2 = linearized_flow(model, x, &cand, 1.0, stepping).ok()?;
        let r2 = residual_of(&l2.q, y);
        if r2 < *best_r {
            *best_r = r2;
            *best = Some((cand, l2.clone(), r2));
        }
        Some(l2)
    };
    for e in 1..=12 {
        let step = scale * 10f64.powf(-0.5 * e as f64 - 1.0);
        for sign in [1.0, -1.0] {
            let mut cand: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a + sign * step * b).collect();
            let h = model.hamiltonian(x, &cand);
            if h > 0.0 {
                let f = (h0 / h).sqrt();
                cand.iter_mut().for_each(|c| *c *= f);
            }
            let Some(l2) = consider(cand.clone(), &mut best, &mut best_r) else {
                continue;
            };
            let f = DVector::from_iterator(n, l2.q.iter().zip(y).map(|(a, b)| a - b));
            if let Some(delta) = l2.dq_dp.clone().svd(true, true).solve(&(-f), 1e-12).ok() {
                let corr: Vec<f64> = cand.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
                consider(corr, &mut best, &mut best_r);
            }
        }
    }
    best
}

/// Radial and chart-parameter start grid, as full covectors at `x`.
fn start_grid(model: &SrModel, x: &[f64], y: &[f64], n_start: usize) -> Vec<Vec<f64>> {
    use std::f64::consts::PI;
    let scale = length_scale(model, x, y);
    let radii = [0.7 * scale, 1.5 * scale];
    let mut out = Vec::new();
    let mut push = |c: Result<InitialCovector>, t: f64| {
        if let Ok(c) = c {
            out.push(c.p0.iter().map(|v| v * t).collect::<Vec<f64>>());
        }
    };
    match model.id() {
        ModelId::Grushin if x[0] != 0.0 => {
            for i in 0..n_start {
                let th = 2.0 * PI * (i as f64 + 0.25) / n_start as f64;
                for &t in &radii {
                    // Starts turning many times before the end are never
                    // minimizing and only slow the integrator down.
                    let c = InitialCovector::grushin(x, th);
                    if c.as_ref().is_ok_and(|c| t * c.p0[1].abs() <= 4.0 * PI) {
                        push(c, t);
                    }
                }
            }
            // Near x = 0 almost every angle gives |p_y| ~ 1/|x|, so the useful
            // covectors with moderate turning are missed. Add them as on the
            // singular line, p = (±√(1 − x²w²), w).
            if x[0].abs() < 0.5 * scale {
                for &sign in &[1.0, -1.0] {
                    for i in 0..n_start {
                        let turn = 2.0 * PI * (2.0 * (i as f64 + 0.5) / n_start as f64 - 1.0);
                        for &t in &radii {
                            let w = turn / t;
                            let s = 1.0 - (x[0] * w).powi(2);
                            if s > 0.0 {
                                push(InitialCovector::from_covector(model, x, &[sign * s.sqrt(), w]), t);
                            }
                        }
                    }
                }
            }
        }
        ModelId::Grushin => {
            for &sign in &[1.0, -1.0] {
                for i in 0..n_start {
                    let turn = 2.0 * PI * (2.0 * (i as f64 + 0.5) / n_start as f64 - 1.0);
                    for &t in &radii {
                        push(
                            InitialCovector::from_params(
                                model,
                                x,
                                CovectorChart::GrushinSingular { sign },
                                &[turn / t],
                            ),
                            t,
                        );
                    }
                }
            }
        }
        _ if model.rank() == 2 && model.vertical_dim() == 1 => {
            let n_turn = 8;
            for i in 0..n_start {
                let th = 2.0 * PI * (i as f64 + 0.25) / n_start as f64;
                for j in 0..n_turn {
                    let turn = 2.0 * PI * (2.0 * (j as f64 + 0.5) / n_turn as f64 - 1.0);
                    for &t in &radii {
                        push(InitialCovector::angle(model, x, th, &[turn / t]), t);
                    }
                }
            }
        }
        _ => {
            // Quasi-random directions u ∈ S^{k−1} and turning vectors in a
            // ball of radius 2π.
            let k = model.rank();
            let m = model.vertical_dim();
            let count = 4 * n_start;
            for idx in 0..count {
                let h: Vec<f64> = (0..k + m).map(|d| halton(idx + 1, PRIMES[d])).collect();
                let mut u: Vec<f64> = h[..k].iter().map(|v| 2.0 * v - 1.0).collect();
                let un = norm(&u).max(1e-3);
                u.iter_mut().for_each(|v| *v /= un);
                let turn: Vec<f64> = h[k..].iter().map(|v| 2.0 * PI * 0.9 * (2.0 * v - 1.0)).collect();
                for &t in &radii {
                    let w: Vec<f64> = turn.iter().map(|v| v / t).collect();
                    let north = u[k - 1] < 0.0;
                    let den = if north { 1.0 - u[k - 1] } else { 1.0 + u[k - 1] };
                    let mut params: Vec<f64> = u[..k - 1].iter().map(|v| v / den).collect();
                    params.extend(w);
                    let c = if k == 2 {
                        InitialCovector::angle(model, x, (-u[0]).atan2(u[1]), &params[1..])
                    } else {
                        InitialCovector::from_params(
                            model,
                            x,
                            CovectorChart::Stereographic { north },
                            &params,
                        )
                    };
                    push(c, t);
                }
            }
        }
    }
    out
}

pub(crate) const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

pub(crate) fn halton(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Rough length of the segment from `x` to `y`: horizontal chart distance
/// plus the square root of the vertical displacement, which scales like the
/// sub-Riemannian distance under dilations.
fn length_scale(model: &SrModel, x: &[f64], y: &[f64]) -> f64 {
    let s = match model.id() {
        ModelId::Grushin => {
            let dx = (y[0] - x[0]).abs();
            let dy = (y[1] - x[1]).abs();
            let xm = x[0].abs().max(y[0].abs());
            dx + (dy / xm.max(dy.sqrt())).min(dy.sqrt() * 2.0)
        }
        _ => {
            let v = model
                .group_product(&model.group_inverse(x).unwrap(), y)
                .unwrap();
            let k = model.rank();
            norm(&v[..k]) + (4.0 * std::f64::consts::PI * norm(&v[k..])).sqrt()
        }
    };
    s.max(1e-8)
}

struct Candidate {
    p: Vec<f64>,
    p_end: Vec<f64>,
    t: f64,
    residual: f64,
}

fn make_candidate(model: &SrModel, x: &[f64], o: LmOutcome) -> Option<Candidate> {
    let t = (2.0 * model.hamiltonian(x, &o.p)).sqrt();
    (t > 0.0 && t.is_finite()).then_some(Candidate {
        p: o.p,
        p_end: o.p_end,
        t,
        residual: o.residual,
    })
}

fn cluster_key(c: &Candidate) -> Vec<f64> {
    let mut k: Vec<f64> = c.p.iter().map(|v| v / c.t).collect();
    k.push(c.t);
    k
}

/// Greedy clustering; keeps the lowest-residual member of each cluster.
fn dedupe(mut cands: Vec<Candidate>, radius: f64) -> Vec<Candidate> {
    cands.sort_by(|a, b| a.residual.total_cmp(&b.residual));
    let mut kept: Vec<(Vec<f64>, Candidate)> = Vec::new();
    for c in cands {
        let key = cluster_key(&c);
        let dup = kept.iter().any(|(k, _)| {
            k.iter().zip(&key).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < radius
        });
        if !dup {
            kept.push((key, c));
        }
    }
    let mut out: Vec<Candidate> = kept.into_iter().map(|(_, c)| c).collect();
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    out
}

/// Merge roots that are separate clusters only because the endpoint map is
/// degenerate along their difference: at a conjugate endpoint the residual
/// grows like a power of the offset along the kernel, so converged iterates
/// spread further than the cluster radius. Two candidates are merged when
/// the covector halfway between them is itself a root.
fn merge_degenerate(
    model: &SrModel,
    x: &[f64],
    y: &[f64],
    cands: Vec<Candidate>,
    stepping: Stepping,
) -> Vec<Candidate> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| cands[a].residual.total_cmp(&cands[b].residual));
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let ci = &cands[i];
        let ki = cluster_key(ci);
        let same = kept.iter().any(|&j| {
            let cj = &cands[j];
            if (ci.t - cj.t).abs() > 1e-6 * ci.t.max(1.0) {
                return false;
            }
            let gap = ki
                .iter()
                .zip(cluster_key(cj))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if gap > 1e-2 {
                return false;
            }
            let mid: Vec<f64> = ci.p.iter().zip(&cj.p).map(|(a, b)| 0.5 * (a + b)).collect();
            let state = CotangentState { q: x.to_vec(), p: mid };
            let opts = FlowOptions { stepping, samples: 0 };
            hamiltonian_flow(model, &state, 1.0, &opts)
                .map(|r| residual_of(&r.endpoint, y) < 1e-7 * (1.0 + norm(y)))
                .unwrap_or(false)
        });
        if !same {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    let mut out: Vec<Candidate> = cands
        .into_iter()
        .enumerate()
        .filter(|(i, _)| kept.contains(i))
        .map(|(_, c)| c)
        .collect();
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    out
}

/// Coarse iterates closer than this in `(p0, T)` are polished only once.
const COARSE_CLUSTER: f64 = 1e-2;

/// Distance from `x` to `y` and all geodesics found by multi-start shooting.
pub fn distance(model: &SrModel, x: &[f64], y: &[f64], opts: &ShootOptions) -> Result<DistanceResult> {
    distance_with_seeds(model, x, y, opts, &[])
}

/// As [`distance`], with extra start covectors (full covectors at `x`).
pub fn distance_with_seeds(
    model: &SrModel,
    x: &[f64],
    y: &[f64],
    opts: &ShootOptions,
    seeds: &[Vec<f64>],
) -> Result<DistanceResult> {
    opts.validate()?;
    let n = model.dim();
    if x.len() != n || y.len() != n || x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("endpoints must be finite points of the model".into()));
    }
    if x == y {
        return Ok(DistanceResult {
            d: 0.0,
            solutions: Vec::new(),
        });
    }
    let mut starts = start_grid(model, x, y, opts.n_start);
    starts.extend(seeds.iter().cloned());

    let coarse = Stepping::Adaptive { tol: opts.coarse_tol };
    let coarse_accept = (1e3 * opts.coarse_tol).max(opts.newton_tol);
    let found: Vec<(Option<Candidate>, f64)> = starts
        .par_iter()
        .map(|p| {
            match lm_solve(model, x, y, p, coarse, coarse_accept, opts.newton_max_iter.min(40)) {
                Some(o) => {
                    let r = o.residual;
                    let c = (r < coarse_accept).then(|| make_candidate(model, x, o)).flatten();
                    (c, r)
                }
                None => (None, f64::INFINITY),
            }
        })
        .collect();
    let best_coarse = found.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
    let coarse: Vec<Candidate> = found.into_iter().filter_map(|f| f.0).collect();
    let reps = dedupe(coarse, COARSE_CLUSTER);

    let fine = Stepping::Adaptive { tol: opts.flow_tol };
    let polished: Vec<Candidate> = reps
        .par_iter()
        .filter_map(|c| {
            let o = lm_solve(model, x, y, &c.p, fine, opts.newton_tol, opts.newton_max_iter)?;
            (o.residual < opts.newton_tol).then(|| make_candidate(model, x, o)).flatten()
        })
        .collect();
    let sols = merge_degenerate(model, x, y, dedupe(polished, opts.cluster_radius), fine);
    if sols.is_empty() {
        return Err(Error::NoSolution {
            best_residual: best_coarse,
        });
    }
    let d = sols.iter().map(|c| c.t).fold(f64::INFINITY, f64::min);

    let solutions: Vec<GeodesicSolution> = sols
        .into_par_iter()
        .map(|c| -> Result<GeodesicSolution> {
            let p0 = InitialCovector::from_covector(model, x, &c.p)?;
            let is_minimizing = c.t <= d + 1e-6;
            let conjugate = if opts.check_conjugate {
                conjugate_by(model, &p0, c.t)?
            } else {
                false
            };
            Ok(GeodesicSolution {
                p0,
                t: c.t,
                residual: c.residual,
                is_minimizing,
                conjugate_at_or_before_t: conjugate,
                arrival: c.p_end.iter().map(|v| v / c.t).collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(DistanceResult { d, solutions })
}

/// Relative singular-value threshold for a rank drop of the exponential
/// map's Jacobian at a shooting solution.
pub const JACOBIAN_RANK_TOL: f64 = 1e-5;

/// Conjugate at or before `t`: a root of the Jacobian determinant in
/// `(0, t]` or a rank drop of the Jacobian at `t` itself.
fn conjugate_by(model: &SrModel, p0: &InitialCovector, t: f64) -> Result<bool> {
    let jac = flow::exp_jacobian(model, p0, t, 1e-12)?;
    if flow::rank_deficiency(&jac, JACOBIAN_RANK_TOL) > 0 {
        return Ok(true);
    }
    Ok(first_conjugate_time(model, p0, t * (1.0 + 1e-6))?.is_some())
}

/// Local shooting: refine a nearby full covector to a geodesic from `x` to
/// `y`. Returns `(length, full covector, unit arrival covector)`.
///
/// With fixed stepping the map `y ↦ length` is smooth, as finite-difference
/// stencils on the distance require.
pub fn shoot_local(
    model: &SrModel,
    x: &[f64],
    y: &[f64],
    guess: &[f64],
    stepping: Stepping,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let o = lm_solve(model, x, y, guess, stepping, 1e-14, 200).ok_or(Error::NoSolution {
        best_residual: f64::INFINITY,
    })?;
    let scale = 1.0 + norm(y);
    if !(o.residual < 1e-11 * scale) {
        return Err(Error::NoSolution {
            best_residual: o.residual,
        });
    }
    let t = (2.0 * model.hamiltonian(x, &o.p)).sqrt();
    let arrival = o.p_end.iter().map(|v| v / t).collect();
    Ok((t, o.p, arrival))
}

/// Midpoints of the minimizing geodesics from `x` to `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidpointSet {
    pub points: Vec<Vec<f64>>,
    /// 0 for an isolated set, otherwise the estimated dimension of the
    /// continuum.
    pub dim_estimate: usize,
    pub distance: f64,
    pub minimizers: Vec<GeodesicSolution>,
}

pub fn midpoints(model: &SrModel, x: &[f64], y: &[f64], opts: &ShootOptions) -> Result<MidpointSet> {
    let coarse = distance(model, x, y, opts)?;
    if coarse.solutions.is_empty() {
        return Err(Error::InvalidArgument("midpoints need x != y".into()));
    }
    let dense_opts = ShootOptions {
        n_start: 2 * opts.n_start,
        ..*opts
    };
    let dense = distance(model, x, y, &dense_opts)?;
    let mids_of = |r: &DistanceResult| -> Result<Vec<Vec<f64>>> {
        r.minimizers()
            .map(|s| exp_map(model, &s.p0, 0.5 * s.t, opts.flow_tol).map(|r| r.endpoint))
            .collect()
    };
    let coarse_pts = mids_of(&coarse)?;
    let dense_pts = mids_of(&dense)?;
    // A finite midpoint set is found again by the denser grid; a continuum
    // keeps producing new points.
    let tol = 1e-4 * (1.0 + norm(y) + norm(x));
    let novel = dense_pts
        .iter()
        .filter(|p| !coarse_pts.iter().any(|q| max_gap(p, q) < tol))
        .count();
    let continuum = coarse_pts.len() >= 2 && novel >= 3 && 4 * novel >= dense_pts.len();

    let (pick, points) = if continuum { (&dense, dense_pts) } else { (&coarse, coarse_pts) };
    let minimizers: Vec<GeodesicSolution> = pick.minimizers().cloned().collect();
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if !unique.iter().any(|u| max_gap(u, &p) < opts.cluster_radius) {
            unique.push(p);
        }
    }
    let dim_estimate = if continuum { local_dimension(&unique).max(1) } else { 0 };
    Ok(MidpointSet {
        points: unique,
        dim_estimate,
        distance: pick.d.min(coarse.d),
        minimizers,
    })
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Median local PCA dimension of a point cloud: for each point, the number
/// of singular values of its centered neighbourhood above a fifth of the
/// largest.
fn local_dimension(points: &[Vec<f64>]) -> usize {
    if points.len() < 3 {
        return 0;
    }
    let n = points[0].len();
    let nb = (2 * n + 2).min(points.len());
    let mut dims: Vec<usize> = points
        .iter()
        .map(|p| {
            let mut idx: Vec<usize> = (0..points.len()).collect();
            idx.sort_by(|&a, &b| {
                let da = norm(&points[a].iter().zip(p).map(|(u, v)| u - v).collect::<Vec<_>>());
                let db = norm(&points[b].iter().zip(p).map(|(u, v)| u - v).collect::<Vec<_>>());
                da.total_cmp(&db)
            });
            let sel = &idx[..nb];
            let mut mean = vec![0.0; n];
            for &i in sel {
                for d in 0..n {
                    mean[d] += points[i][d] / nb as f64;
                }
            }
            let m = DMatrix::from_fn(nb, n, |r, c| points[sel[r]][c] - mean[c]);
            let sv = m.singular_values();
            let smax = sv.iter().cloned().fold(0.0, f64::max);
            sv.iter().filter(|&&s| s > 0.2 * smax).count()
        })
        .collect();
    dims.sort_unstable();
    dims[dims.len() / 2]
}

/// Cut time of the geodesic `t ↦ E_x(p0, t)` on `(0, t_max]`, or `None` if
/// it is optimal through `t_max`.
///
/// A probe time `t` counts as optimal when no conjugate point precedes it and
/// the shooting distance to `γ(t)` is not shorter than `t`. The geodesic
/// itself is always added as a start, so the solver never misses the
/// candidate being tested.
pub fn cut_time(
    model: &SrModel,
    p0: &InitialCovector,
    t_max: f64,
    opts: &ShootOptions,
) -> Result<Option<f64>> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidArgument(format!("t_max must be positive, got {t_max}")));
    }
    let conj = first_conjugate_time(model, p0, t_max)?.map(|c| c.t);
    let probe_opts = ShootOptions {
        check_conjugate: false,
        ..*opts
    };
    let optimal = |t: f64| -> Result<bool> {
        if conj.is_some_and(|c| t >= c) {
            return Ok(false);
        }
        let wrap = |e: Error| Error::ProbeFailure {
            probe: t,
            source: Box::new(e),
        };
        let y = exp_map(model, p0, t, opts.flow_tol).map_err(wrap)?.endpoint;
        let seed: Vec<f64> = p0.p0.iter().map(|v| v * t).collect();
        let r = distance_with_seeds(model, &p0.base, &y, &probe_opts, &[seed]).map_err(wrap)?;
        Ok(r.d >= t - 1e-7 * t.max(1.0))
    };
    if optimal(t_max)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, t_max);
    while hi - lo > 1e-4 * t_max {
        let mid = 0.5 * (lo + hi);
        if optimal(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Endpoint of the flow of a full covector for unit time.
pub fn endpoint_of(model: &SrModel, x: &[f64], p: &[f64], tol: f64) -> Result<Vec<f64>> {
    let state = CotangentState::new(x.to_vec(), p.to_vec())?;
    Ok(hamiltonian_flow(model, &state, 1.0, &FlowOptions::adaptive(tol))?.endpoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    #[test]
    fn halton_is_in_unit_interval() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(3, 2), 0.75);
        assert!((halton(2, 3) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn same_point_has_zero_distance() {
        let m = SrModel::heisenberg();
        let r = distance(&m, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &ShootOptions::default()).unwrap();
        assert_eq!(r.d, 0.0);
        assert!(r.solutions.is_empty());
    }

    #[test]
    fn grushin_pair() {
        let m = SrModel::grushin();
        let r = distance(&m, &[-1.0, -FRAC_PI_4], &[1.0, FRAC_PI_4], &ShootOptions::default()).unwrap();
        // The θ = π/2 geodesic reaches q1 at arclength π.
        assert!((r.d - PI).abs() < 1e-6, "{}", r.d);
        let mins: Vec<_> = r.minimizers().collect();
        assert_eq!(mins.len(), 1);
        assert!(mins[0].conjugate_at_or_before_t);
    }

    #[test]
    fn heisenberg_horizontal_point() {
        let m = SrModel::heisenberg();
        let r = distance(&m, &[0.0; 3], &[1.0, 0.0, 0.0], &ShootOptions::default()).unwrap();
        assert!((r.d - 1.0).abs() < 1e-9);
        let mins: Vec<_> = r.minimizers().collect();
        assert_eq!(mins.len(), 1);
        assert!(!mins[0].conjugate_at_or_before_t);
    }

    #[test]
    fn local_shooting_recovers_line() {
        let m = SrModel::heisenberg();
        let (t, p, _) =
            shoot_local(&m, &[0.0; 3], &[0.5, 0.1, 0.02], &[0.4, 0.1, 0.0], Stepping::Fixed { steps: 64 })
                .unwrap();
        assert!(t > 0.5 && t < 0.6);
        let e = endpoint_of(&m, &[0.0; 3], &p, 1e-12).unwrap();
        assert!(max_gap(&e, &[0.5, 0.1, 0.02]) < 1e-8);
    }

    #[test]
    fn local_dimension_of_circle_and_point() {
        let circle: Vec<Vec<f64>> = (0..64)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / 64.0;
                vec![a.cos(), a.sin(), 0.5]
            })
            .collect();
        assert_eq!(local_dimension(&circle), 1);
    }
}
