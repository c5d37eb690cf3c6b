//! The hinged energy `h_{x,y}(z) = ½(d²(x,z) + d²(z,y))` near a midpoint of a
//! minimizing geodesic, its derivatives, and its Laplace normal form.
//!
//! Near a midpoint `z0` both distances are smooth and are computed by local
//! shooting warm-started from the two halves of the minimizer, with a fixed
//! step count so that `h` is a smooth function of `z` and finite differences
//! see no integrator switching noise.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Stepping;
use crate::models::SrModel;
use crate::shoot::{self, GeodesicSolution, ShootOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HingedOptions {
    /// Hessian step in chart units; Richardson over `{h, h/2}`.
    pub hess_step: f64,
    /// Step for the degree-3 and degree-4 stencils.
    pub quartic_step: f64,
    /// Step for the degree-1 and degree-2 stencils of the Taylor table.
    pub low_step: f64,
    /// Fixed integrator steps per unit flow time for local shooting.
    pub flow_steps: usize,
    pub shoot: ShootOptions,
}

impl Default for HingedOptions {
    fn default() -> Self {
        HingedOptions {
            hess_step: 1e-3,
            quartic_step: 5e-2,
            low_step: 1e-3,
            flow_steps: 600,
            shoot: ShootOptions::default(),
        }
    }
}

/// The hinged energy of a pair `(x, y)` localized at one midpoint.
#[derive(Debug, Clone)]
pub struct HingedField {
    model: SrModel,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub d2: f64,
    pub z0: Vec<f64>,
    /// Covector at `x` reaching `z0` in unit time.
    from_x: Vec<f64>,
    /// Covector at `y` reaching `z0` in unit time.
    from_y: Vec<f64>,
    /// Dimension of the midpoint set reported by shooting.
    pub gamma_dim: usize,
    opts: HingedOptions,
}

impl HingedField {
    /// Solve the boundary-value problem and localize at `z0`, which must lie
    /// on the midpoint set, or at the first midpoint found.
    pub fn new(
        model: &SrModel,
        x: &[f64],
        y: &[f64],
        z_hint: Option<&[f64]>,
        opts: &HingedOptions,
    ) -> Result<Self> {
        let mids = shoot::midpoints(model, x, y, &opts.shoot)?;
        let idx = match z_hint {
            Some(h) => (0..mids.minimizers.len())
                .min_by(|&a, &b| {
                    let da = dist(&midpoint_of(model, &mids.minimizers[a], opts), h);
                    let db = dist(&midpoint_of(model, &mids.minimizers[b], opts), h);
                    da.total_cmp(&db)
                })
                .ok_or(Error::NoSolution { best_residual: f64::INFINITY })?,
            None => 0,
        };
        let field = Self::from_minimizer(model, x, y, &mids.minimizers[idx], mids.dim_estimate, z_hint, opts)?;
        if z_hint.is_some() {
            let h = field.eval(&field.z0)?;
            if (h - 0.25 * field.d2).abs() > 1e-6 * (1.0 + field.d2) {
                return Err(Error::InvalidArgument(format!(
                    "z0 = {:?} is not a midpoint: h - d²/4 = {:e}",
                    field.z0,
                    h - 0.25 * field.d2
                )));
            }
        }
        Ok(field)
    }

    /// Localize at the midpoint of a known minimizer, or at a nearby point
    /// `z0` given by the caller. At a degenerate midpoint the geodesic
    /// midpoint is only known to the accuracy of the root along the Hessian
    /// kernel, so a caller who knows Γ exactly should pass it.
    pub fn from_minimizer(
        model: &SrModel,
        x: &[f64],
        y: &[f64],
        sol: &GeodesicSolution,
        gamma_dim: usize,
        z0: Option<&[f64]>,
        opts: &HingedOptions,
    ) -> Result<Self> {
        if !(opts.hess_step > 0.0 && opts.quartic_step > 0.0 && opts.low_step > 0.0) || opts.flow_steps < 8 {
            return Err(Error::InvalidArgument(format!("bad hinged options {opts:?}")));
        }
        let full = sol.full_covector();
        let from_x: Vec<f64> = full.iter().map(|v| 0.5 * v).collect();
        let from_y: Vec<f64> = sol.arrival.iter().map(|v| -0.5 * v * sol.t).collect();
        let stepping = Stepping::Fixed { steps: opts.flow_steps };
        let z0 = match z0 {
            Some(z) if z.len() == x.len() => z.to_vec(),
            Some(_) => return Err(Error::InvalidArgument("z0 has the wrong dimension".into())),
            None => shoot::endpoint_of(model, x, &from_x, 1e-13)?,
        };
        // Refine both halves on the fixed-step flow so that stencils start
        // from consistent covectors.
        let (_, from_x, _) = shoot::shoot_local(model, x, &z0, &from_x, stepping)?;
        let (_, from_y, _) = shoot::shoot_local(model, y, &z0, &from_y, stepping)?;
        Ok(HingedField {
            model: model.clone(),
            x: x.to_vec(),
            y: y.to_vec(),
            d2: sol.t * sol.t,
            z0,
            from_x,
            from_y,
            gamma_dim,
            opts: *opts,
        })
    }

    pub fn model(&self) -> &SrModel {
        &self.model
    }

    /// `h(z)` for `z` near `z0`.
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        let stepping = Stepping::Fixed { steps: self.opts.flow_steps };
        let fail = |e: Error| Error::StencilFailure {
            point: z.to_vec(),
            reason: e.to_string(),
        };
        let (a, _, _) = shoot::shoot_local(&self.model, &self.x, z, &self.from_x, stepping).map_err(fail)?;
        let (b, _, _) = shoot::shoot_local(&self.model, &self.y, z, &self.from_y, stepping).map_err(fail)?;
        Ok(0.5 * (a * a + b * b))
    }

    /// `(d(x, z), d(z, y))` for `z` near `z0`.
    pub fn distances(&self, z: &[f64]) -> Result<(f64, f64)> {
        let stepping = Stepping::Fixed { steps: self.opts.flow_steps };
        let (a, _, _) = shoot::shoot_local(&self.model, &self.x, z, &self.from_x, stepping)?;
        let (b, _, _) = shoot::shoot_local(&self.model, &self.y, z, &self.from_y, stepping)?;
        Ok((a, b))
    }

    fn eval_chart(&self, chart: &DMatrix<f64>, u: &[f64]) -> Result<f64> {
        let z: Vec<f64> = (0..self.z0.len())
            .map(|i| self.z0[i] + (0..u.len()).map(|j| chart[(i, j)] * u[j]).sum::<f64>())
            .collect();
        self.eval(&z)
    }

    fn eval_many(&self, chart: &DMatrix<f64>, pts: &[Vec<f64>]) -> Result<Vec<f64>> {
        pts.par_iter().map(|u| self.eval_chart(chart, u)).collect()
    }

    /// Gradient at `z0` in the standard chart (central differences).
    pub fn gradient(&self) -> Result<Vec<f64>> {
        let n = self.z0.len();
        let id = DMatrix::identity(n, n);
        let h = self.opts.hess_step;
        let mut pts = Vec::new();
        for i in 0..n {
            for s in [h, -h] {
                let mut u = vec![0.0; n];
                u[i] = s;
                pts.push(u);
            }
        }
        let f = self.eval_many(&id, &pts)?;
        Ok((0..n).map(|i| (f[2 * i] - f[2 * i + 1]) / (2.0 * h)).collect())
    }

    /// Hessian at `z0` in the chart `z = z0 + M u`.
    pub fn hessian_in(&self, chart: &DMatrix<f64>) -> Result<HessianResult> {
        match self.hessian_with_step(chart, self.opts.hess_step) {
            Err(Error::StencilFailure { .. }) => self.hessian_with_step(chart, 0.5 * self.opts.hess_step),
            other => other,
        }
    }

    pub fn hessian(&self) -> Result<HessianResult> {
        let n = self.z0.len();
        self.hessian_in(&DMatrix::identity(n, n))
    }

    fn hessian_with_step(&self, chart: &DMatrix<f64>, h: f64) -> Result<HessianResult> {
        if chart.nrows() != self.z0.len() {
            return Err(Error::InvalidArgument("chart has wrong number of rows".into()));
        }
        let r = chart.ncols();
        let f0 = self.eval_chart(chart, &vec![0.0; r])?;
        let raw = |s: f64| -> Result<DMatrix<f64>> {
            let mut pts = Vec::new();
            for i in 0..r {
                for sg in [s, -s] {
                    let mut u = vec![0.0; r];
                    u[i] = sg;
                    pts.push(u);
                }
            }
            for i in 0..r {
                for j in i + 1..r {
                    for (a, b) in [(s, s), (s, -s), (-s, s), (-s, -s)] {
                        let mut u = vec![0.0; r];
                        u[i] = a;
                        u[j] = b;
                        pts.push(u);
                    }
                }
            }
            let f = self.eval_many(chart, &pts)?;
            let mut m = DMatrix::zeros(r, r);
            for i in 0..r {
                m[(i, i)] = (f[2 * i] - 2.0 * f0 + f[2 * i + 1]) / (s * s);
            }
            let mut k = 2 * r;
            for i in 0..r {
                for j in i + 1..r {
                    let v = (f[k] - f[k + 1] - f[k + 2] + f[k + 3]) / (4.0 * s * s);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                    k += 4;
                }
            }
            Ok(m)
        };
        let coarse = raw(h)?;
        let fine = raw(0.5 * h)?;
        let rich = (4.0 * &fine - &coarse) / 3.0;
        let matrix = 0.5 * (&rich + rich.transpose());
        let eig = SymmetricEigen::new(matrix.clone());
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let kernel_dim = eig.eigenvalues.iter().filter(|&&l| l < KERNEL_REL * lmax).count();
        Ok(HessianResult {
            matrix,
            eigenvalues: eig.eigenvalues.iter().cloned().collect(),
            eigenvectors: eig.eigenvectors,
            kernel_dim,
            value: f0,
            error_estimate: (&rich - &fine).amax(),
        })
    }

    /// Monomial coefficients of `h(z0 + M u)` up to total degree 4.
    pub fn taylor4(&self, chart: &DMatrix<f64>) -> Result<TaylorTable> {
        let r = chart.ncols();
        let dirs = directions(r);
        let f0 = self.eval_chart(chart, &vec![0.0; r])?;

        // Directional Taylor polynomials P_d(v) for d = 1..4, each from a
        // two-level Richardson table; uncertainty from the level difference.
        let lo = self.opts.low_step;
        let hi = self.opts.quartic_step;
        let per_dir: Vec<[(f64, f64); 4]> = dirs
            .par_iter()
            .map(|v| -> Result<[(f64, f64); 4]> {
                let f = |s: f64| self.eval_chart(chart, &v.iter().map(|c| c * s).collect::<Vec<_>>());
                let low = |s: f64| -> Result<(f64, f64)> {
                    let (p, m) = (f(s)?, f(-s)?);
                    Ok(((p - m) / (2.0 * s), (p - 2.0 * f0 + m) / (s * s) / 2.0))
                };
                let high = |s: f64| -> Result<(f64, f64)> {
                    let (p1, m1, p2, m2) = (f(s)?, f(-s)?, f(2.0 * s)?, f(-2.0 * s)?);
                    let d3 = (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * s * s * s) / 6.0;
                    let d4 = (p2 - 4.0 * p1 + 6.0 * f0 - 4.0 * m1 + m2) / (s * s * s * s) / 24.0;
                    Ok((d3, d4))
                };
                let l = [low(lo)?, low(0.5 * lo)?, low(0.25 * lo)?];
                let h = [high(hi)?, high(0.5 * hi)?, high(0.25 * hi)?];
                let rich = |a: f64, b: f64, c: f64| {
                    let r1 = (4.0 * b - a) / 3.0;
                    let r2 = (4.0 * c - b) / 3.0;
                    (r2, (r2 - r1).abs())
                };
                Ok([
                    rich(l[0].0, l[1].0, l[2].0),
                    rich(l[0].1, l[1].1, l[2].1),
                    rich(h[0].0, h[1].0, h[2].0),
                    rich(h[0].1, h[1].1, h[2].1),
                ])
            })
            .collect::<Result<_>>()?;

        let mut terms = vec![TaylorTerm {
            exponents: vec![0; r],
            coefficient: f0,
            uncertainty: 0.0,
            reliable: true,
        }];
        for deg in 1..=4usize {
            let monos = monomials(r, deg);
            let a = DMatrix::from_fn(dirs.len(), monos.len(), |i, j| mono_eval(&monos[j], &dirs[i]));
            let b = DVector::from_iterator(dirs.len(), per_dir.iter().map(|p| p[deg - 1].0));
            let e = DVector::from_iterator(dirs.len(), per_dir.iter().map(|p| p[deg - 1].1));
            let pinv = a
                .clone()
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::IllConditioned(e.to_string()))?;
            let c = &pinv * &b;
            let resid = &a * &c - &b;
            let rms = (resid.norm_squared() / dirs.len() as f64).sqrt();
            let unc = pinv.abs() * (e.add_scalar(rms));
            for (j, mono) in monos.into_iter().enumerate() {
                let reliable = unc[j] <= 0.1 * c[j].abs() || unc[j] <= TAYLOR_ABS_FLOOR;
                terms.push(TaylorTerm {
                    exponents: mono,
                    coefficient: c[j],
                    uncertainty: unc[j],
                    reliable,
                });
            }
        }
        Ok(TaylorTable {
            z0: self.z0.clone(),
            chart: chart.clone(),
            terms,
        })
    }

    /// Reduce to the Laplace normal form at `z0` using the chart
    /// `z = z0 + M u` (square M).
    pub fn to_laplace_form(&self, chart: &DMatrix<f64>) -> Result<LaplaceForm> {
        let n = self.z0.len();
        if chart.nrows() != n || chart.ncols() != n {
            return Err(Error::InvalidArgument("normal form needs a square chart".into()));
        }
        let hess = self.hessian_in(chart)?;
        let det = chart.determinant().abs();
        if hess.kernel_dim == 0 {
            return Ok(LaplaceForm::morse(&hess, det));
        }
        if self.gamma_dim > 0 && hess.kernel_dim == self.gamma_dim {
            let mut form = LaplaceForm::morse(&hess, det);
            form.flat_dims = hess.kernel_dim;
            return Ok(form);
        }
        if hess.kernel_dim > 1 {
            return Err(Error::UnsupportedDegeneracy(format!(
                "Hessian corank {} at an isolated midpoint",
                hess.kernel_dim
            )));
        }
        // Corank 1: Taylor data in Hessian eigen-coordinates, kernel last.
        let order = eigen_order(&hess);
        let q = DMatrix::from_fn(n, n, |i, j| hess.eigenvectors[(i, order[j])]);
        let eig_chart = chart * &q;
        let table = self.taylor4(&eig_chart)?;
        let kern = n - 1;
        let mut e = vec![0u32; n];
        e[kern] = 3;
        let cubic = table.coefficient(&e);
        e[kern] = 4;
        let quartic = table.coefficient(&e);
        let scale = quartic.abs().max(1e-6);
        if cubic.abs() > 1e-3 * scale.max(1.0) {
            return Err(Error::UnsupportedDegeneracy(format!(
                "odd cubic term {cubic:e} along the Hessian kernel"
            )));
        }
        let mut effective = quartic;
        let mut coeffs = Vec::with_capacity(n);
        for i in 0..kern {
            let a_i = 0.5 * hess.eigenvalues[order[i]];
            let mut ex = vec![0u32; n];
            ex[i] = 1;
            ex[kern] = 2;
            let b_i = table.coefficient(&ex);
            effective -= b_i * b_i / (4.0 * a_i);
            coeffs.push(a_i);
        }
        if !(effective > QUARTIC_FLOOR) {
            return Err(Error::UnsupportedDegeneracy(format!(
                "quartic along the Hessian kernel is {effective:e}"
            )));
        }
        coeffs.push(effective);
        let mut exponents = vec![1u32; kern];
        exponents.push(2);
        Ok(LaplaceForm {
            exponents,
            flat_dims: 0,
            diag_coeffs: coeffs,
            jacobian_at_z0: det * self.model.volume_density(&self.z0),
        })
    }
}

const KERNEL_REL: f64 = 1e-6;
const TAYLOR_ABS_FLOOR: f64 = 1e-5;
const QUARTIC_FLOOR: f64 = 1e-8;

fn eigen_order(h: &HessianResult) -> Vec<usize> {
    let mut order: Vec<usize> = (0..h.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| h.eigenvalues[b].total_cmp(&h.eigenvalues[a]));
    order
}

fn midpoint_of(model: &SrModel, s: &GeodesicSolution, opts: &HingedOptions) -> Vec<f64> {
    let half: Vec<f64> = s.full_covector().iter().map(|v| 0.5 * v).collect();
    shoot::endpoint_of(model, &s.p0.base, &half, opts.shoot.flow_tol).unwrap_or_default()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessianResult {
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    /// Eigenvalues below `1e-6 · λ_max`.
    pub kernel_dim: usize,
    /// `h(z0)`.
    pub value: f64,
    /// Largest change between the Richardson value and the finer raw table.
    pub error_estimate: f64,
}

impl HessianResult {
    /// Unit kernel directions (eigenvectors of the smallest eigenvalues).
    pub fn kernel(&self) -> Vec<Vec<f64>> {
        let order = eigen_order(self);
        let n = self.eigenvalues.len();
        order[n - self.kernel_dim..]
            .iter()
            .map(|&j| self.eigenvectors.column(j).iter().cloned().collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorTerm {
    pub exponents: Vec<u32>,
    pub coefficient: f64,
    pub uncertainty: f64,
    /// False when the uncertainty exceeds 10% of the coefficient (and an
    /// absolute floor of 1e-5).
    pub reliable: bool,
}

impl TaylorTerm {
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    /// Monomial label such as `u1^2*u2`, or `1` for the constant term.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self
            .exponents
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| if e == 1 { format!("u{}", i + 1) } else { format!("u{}^{}", i + 1, e) })
            .collect();
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join("*")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorTable {
    pub z0: Vec<f64>,
    pub chart: DMatrix<f64>,
    pub terms: Vec<TaylorTerm>,
}

impl TaylorTable {
    pub fn coefficient(&self, exponents: &[u32]) -> f64 {
        self.term(exponents).map_or(0.0, |t| t.coefficient)
    }

    pub fn term(&self, exponents: &[u32]) -> Option<&TaylorTerm> {
        self.terms.iter().find(|t| t.exponents == exponents)
    }
}

/// Diagonal normal form `h = d²/4 + Σ c_i u_i^{2 m_i}` plus flat directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceForm {
    pub exponents: Vec<u32>,
    pub flat_dims: usize,
    pub diag_coeffs: Vec<f64>,
    pub jacobian_at_z0: f64,
}

impl LaplaceForm {
    fn morse(hess: &HessianResult, det: f64) -> Self {
        let order = eigen_order(hess);
        let r = hess.eigenvalues.len() - hess.kernel_dim;
        LaplaceForm {
            exponents: vec![1; r],
            flat_dims: 0,
            diag_coeffs: order[..r].iter().map(|&j| 0.5 * hess.eigenvalues[j]).collect(),
            jacobian_at_z0: det,
        }
    }

    /// Total dimension `r + flat_dims`.
    pub fn dim(&self) -> usize {
        self.exponents.len() + self.flat_dims
    }
}

/// Exponent vectors of total degree `deg` in `r` variables, in graded
/// lexicographic order.
pub fn monomials(r: usize, deg: usize) -> Vec<Vec<u32>> {
    fn rec(r: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() + 1 == r {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            rec(r, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if r == 0 {
        return out;
    }
    rec(r, deg as u32, &mut Vec::new(), &mut out);
    out
}

fn mono_eval(e: &[u32], v: &[f64]) -> f64 {
    e.iter().zip(v).map(|(&k, &x)| x.powi(k as i32)).product()
}

/// Stencil directions: integer vectors with entries in {−2..2}, first
/// nonzero entry positive, normalized and deduplicated.
fn directions(r: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let total = 5usize.pow(r as u32);
    for code in 0..total {
        let mut c = code;
        let v: Vec<f64> = (0..r)
            .map(|_| {
                let d = (c % 5) as f64 - 2.0;
                c /= 5;
                d
            })
            .collect();
        let first = v.iter().find(|x| **x != 0.0);
        if first.is_none_or(|f| *f < 0.0) {
            continue;
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let u: Vec<f64> = v.iter().map(|x| x / nv).collect();
        if !out.iter().any(|w| w.iter().zip(&u).all(|(a, b)| (a - b).abs() < 1e-12)) {
            out.push(u);
        }
    }
    out
}

/// `½(d²(x,z) + d²(z,y))` with both distances from global multi-start
/// shooting.
pub fn hinged_eval(model: &SrModel, x: &[f64], y: &[f64], z: &[f64], opts: &ShootOptions) -> Result<f64> {
    let a = shoot::distance(model, x, z, opts)?.d;
    let b = shoot::distance(model, z, y, opts)?.d;
    Ok(0.5 * (a * a + b * b))
}

/// Hessian of the hinged energy at the midpoint nearest to `z0`.
pub fn hinged_hessian(
    model: &SrModel,
    x: &[f64],
    y: &[f64],
    z0: &[f64],
    opts: &HingedOptions,
) -> Result<HessianResult> {
    HingedField::new(model, x, y, Some(z0), opts)?.hessian()
}

/// Degree ≤ 4 Taylor table at the midpoint nearest to `z0` in the chart
/// `z = z0 + M u`.
pub fn hinged_taylor4(
    model: &SrModel,
    x: &[f64],
    y: &[f64],
    z0: &[f64],
    chart: &DMatrix<f64>,
    opts: &HingedOptions,
) -> Result<TaylorTable> {
    HingedField::new(model, x, y, Some(z0), opts)?.taylor4(chart)
}
