//! Coordinates on the unit-energy level `Λ_x = {p ∈ T*_x : H(x, p) = 1/2}`.
//!
//! Each chart has `n − 1` parameters, so together with the time variable the
//! exponential map becomes a square map whose Jacobian determinant detects
//! conjugate points.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelId, SrModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovectorChart {
    /// Rank-2 two-step groups: `(θ, w_1..w_m)` with frame components
    /// `u = (−sin θ, cos θ)` and vertical components `w`.
    Angle,
    /// Rank ≥ 3 two-step groups: stereographic coordinates of `u ∈ S^{k−1}`
    /// projected from the south pole (`north = false`, regular for
    /// `u_k > −1`) or the north pole, followed by `w`.
    Stereographic { north: bool },
    /// Grushin plane at a point with `x ≠ 0`: `p = (cos θ, sin θ / |x|)`.
    GrushinRegular,
    /// Grushin plane on the singular line: `p = (sign, w)`.
    GrushinSingular { sign: f64 },
}

/// A unit-energy covector at a base point with its chart coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCovector {
    pub base: Vec<f64>,
    pub chart: CovectorChart,
    pub params: Vec<f64>,
    pub p0: Vec<f64>,
}

impl InitialCovector {
    pub fn from_params(
        model: &SrModel,
        base: &[f64],
        chart: CovectorChart,
        params: &[f64],
    ) -> Result<Self> {
        check_base(model, base)?;
        if params.len() + 1 != model.dim() {
            return Err(Error::InvalidArgument(format!(
                "expected {} covector parameters, got {}",
                model.dim() - 1,
                params.len()
            )));
        }
        let p0 = match chart {
            CovectorChart::Angle => {
                require_two_step(model, 2)?;
                let u = [-params[0].sin(), params[0].cos()];
                two_step_covector(model, base, &u, &params[1..])
            }
            CovectorChart::Stereographic { north } => {
                require_two_step_rank3(model)?;
                let k = model.rank();
                let u = stereo_to_sphere(&params[..k - 1], north);
                two_step_covector(model, base, &u, &params[k - 1..])
            }
            CovectorChart::GrushinRegular => {
                if model.id() != ModelId::Grushin || base[0] == 0.0 {
                    return Err(Error::InvalidArgument(
                        "GrushinRegular chart needs a Grushin base point with x != 0".into(),
                    ));
                }
                vec![params[0].cos(), params[0].sin() / base[0].abs()]
            }
            CovectorChart::GrushinSingular { sign } => {
                if model.id() != ModelId::Grushin || base[0] != 0.0 {
                    return Err(Error::InvalidArgument(
                        "GrushinSingular chart needs a Grushin base point with x = 0".into(),
                    ));
                }
                vec![sign.signum(), params[0]]
            }
        };
        Ok(InitialCovector {
            base: base.to_vec(),
            chart,
            params: params.to_vec(),
            p0,
        })
    }

    /// Normalize an arbitrary covector to unit energy and pick a chart.
    pub fn from_covector(model: &SrModel, base: &[f64], p: &[f64]) -> Result<Self> {
        check_base(model, base)?;
        if p.len() != model.dim() {
            return Err(Error::InvalidArgument("covector has wrong dimension".into()));
        }
        let h = model.hamiltonian(base, p);
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "covector has non-positive energy {h}"
            )));
        }
        let scale = (2.0 * h).sqrt();
        let p0: Vec<f64> = p.iter().map(|v| v / scale).collect();
        let (chart, params) = match model.id() {
            ModelId::Grushin => {
                if base[0] != 0.0 {
                    let th = (p0[1] * base[0].abs()).atan2(p0[0]);
                    (CovectorChart::GrushinRegular, vec![th])
                } else {
                    (CovectorChart::GrushinSingular { sign: p0[0].signum() }, vec![p0[1]])
                }
            }
            _ => {
                let k = model.rank();
                let f = model.frame(base);
                let u: Vec<f64> = (0..k)
                    .map(|i| (0..model.dim()).map(|l| f[(i, l)] * p0[l]).sum())
                    .collect();
                let w: Vec<f64> = p0[k..].to_vec();
                if k == 2 {
                    let th = (-u[0]).atan2(u[1]);
                    let mut params = vec![th];
                    params.extend(w);
                    (CovectorChart::Angle, params)
                } else {
                    let north = u[k - 1] < 0.0;
                    let mut params = sphere_to_stereo(&u, north);
                    params.extend(w);
                    (CovectorChart::Stereographic { north }, params)
                }
            }
        };
        Ok(InitialCovector {
            base: base.to_vec(),
            chart,
            params,
            p0,
        })
    }

    /// Angle-chart covector on a rank-2 two-step group.
    pub fn angle(model: &SrModel, base: &[f64], theta: f64, w: &[f64]) -> Result<Self> {
        let mut params = vec![theta];
        params.extend_from_slice(w);
        Self::from_params(model, base, CovectorChart::Angle, &params)
    }

    /// Heisenberg covector `(θ, w)`.
    pub fn heisenberg(base: &[f64], theta: f64, w: f64) -> Result<Self> {
        Self::angle(&SrModel::heisenberg(), base, theta, &[w])
    }

    /// Grushin covector `(cos θ, sin θ / |x|)` at a Riemannian point.
    pub fn grushin(base: &[f64], theta: f64) -> Result<Self> {
        Self::from_params(&SrModel::grushin(), base, CovectorChart::GrushinRegular, &[theta])
    }

    /// `∂p0/∂params`, an n×(n−1) matrix.
    pub fn chart_jacobian(&self, model: &SrModel) -> DMatrix<f64> {
        let n = model.dim();
        let mut jac = DMatrix::zeros(n, n - 1);
        match self.chart {
            CovectorChart::Angle | CovectorChart::Stereographic { .. } => {
                let k = model.rank();
                let nu = k - 1;
                // du/dparams for the sphere part
                let du: DMatrix<f64> = match self.chart {
                    CovectorChart::Angle => {
                        let th = self.params[0];
                        DMatrix::from_row_slice(2, 1, &[-th.cos(), -th.sin()])
                    }
                    CovectorChart::Stereographic { north } => {
                        stereo_jacobian(&self.params[..nu], north)
                    }
                    _ => unreachable!(),
                };
                for i in 0..k {
                    for j in 0..nu {
                        jac[(i, j)] = du[(i, j)];
                    }
                }
                let bs = model.bracket_matrices().expect("two-step");
                for (h, b) in bs.iter().enumerate() {
                    let col = nu + h;
                    for i in 0..k {
                        let bx: f64 = (0..k).map(|j| b[(i, j)] * self.base[j]).sum();
                        jac[(i, col)] = 0.5 * bx;
                    }
                    jac[(k + h, col)] = 1.0;
                }
            }
            CovectorChart::GrushinRegular => {
                let th = self.params[0];
                jac[(0, 0)] = -th.sin();
                jac[(1, 0)] = th.cos() / self.base[0].abs();
            }
            CovectorChart::GrushinSingular { .. } => {
                jac[(1, 0)] = 1.0;
            }
        }
        jac
    }
}

fn check_base(model: &SrModel, base: &[f64]) -> Result<()> {
    if base.len() != model.dim() || base.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "base point must have {} finite coordinates",
            model.dim()
        )));
    }
    Ok(())
}

fn require_two_step(model: &SrModel, k: usize) -> Result<()> {
    if !model.is_two_step() || model.rank() != k {
        return Err(Error::InvalidArgument(format!(
            "chart needs a two-step model of rank {k}"
        )));
    }
    Ok(())
}

fn require_two_step_rank3(model: &SrModel) -> Result<()> {
    if !model.is_two_step() || model.rank() < 3 {
        return Err(Error::InvalidArgument(
            "stereographic chart needs a two-step model of rank >= 3".into(),
        ));
    }
    Ok(())
}

/// Covector with frame components `u` and vertical components `w` at `x`:
/// `p_{x_i} = u_i + ½ Σ_h w_h (B_h x)_i`, `p_{z_h} = w_h`.
pub(crate) fn two_step_covector(model: &SrModel, base: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
    let k = model.rank();
    let bs = model.bracket_matrices().expect("two-step");
    let mut p = vec![0.0; model.dim()];
    for i in 0..k {
        let mut s = u[i];
        for (h, b) in bs.iter().enumerate() {
            let bx: f64 = (0..k).map(|j| b[(i, j)] * base[j]).sum();
            s += 0.5 * w[h] * bx;
        }
        p[i] = s;
    }
    p[k..].copy_from_slice(w);
    p
}

pub(crate) fn stereo_to_sphere(a: &[f64], north: bool) -> Vec<f64> {
    let r2: f64 = a.iter().map(|v| v * v).sum();
    let s = 1.0 + r2;
    let mut u: Vec<f64> = a.iter().map(|v| 2.0 * v / s).collect();
    u.push(if north { (r2 - 1.0) / s } else { (1.0 - r2) / s });
    u
}

fn sphere_to_stereo(u: &[f64], north: bool) -> Vec<f64> {
    let last = u[u.len() - 1];
    let den = if north { 1.0 - last } else { 1.0 + last };
    u[..u.len() - 1].iter().map(|v| v / den).collect()
}

fn stereo_jacobian(a: &[f64], north: bool) -> DMatrix<f64> {
    let d = a.len();
    let r2: f64 = a.iter().map(|v| v * v).sum();
    let s = 1.0 + r2;
    let mut j = DMatrix::zeros(d + 1, d);
    for i in 0..d {
        for c in 0..d {
            let delta = if i == c { 1.0 } else { 0.0 };
            j[(i, c)] = 2.0 * delta / s - 4.0 * a[i] * a[c] / (s * s);
        }
    }
    let sign = if north { 1.0 } else { -1.0 };
    for c in 0..d {
        j[(d, c)] = sign * 4.0 * a[c] / (s * s);
    }
    j
}
