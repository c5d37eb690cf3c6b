//! Catalogue of sub-Riemannian structures on global charts of ℝⁿ.
//!
//! Every frame in the catalogue is affine in the chart coordinates, so the
//! first derivatives of the frame fields are constant and their second
//! derivatives vanish. The flow module relies on that when it assembles the
//! second derivatives of the Hamiltonian.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    Heisenberg,
    Grushin,
    Free36,
    TwoStep,
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heisenberg" => Ok(ModelId::Heisenberg),
            "grushin" => Ok(ModelId::Grushin),
            "free36" => Ok(ModelId::Free36),
            "two_step" => Ok(ModelId::TwoStep),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelId::Heisenberg => "heisenberg",
            ModelId::Grushin => "grushin",
            ModelId::Free36 => "free36",
            ModelId::TwoStep => "two_step",
        };
        f.write_str(s)
    }
}

/// A sub-Riemannian structure given by an orthonormal frame on ℝⁿ.
///
/// Two-step Carnot groups are stored through their bracket matrices
/// `B_h`; the frame is `X_i = ∂_{x_i} − ½ Σ_h (B_h x)_i ∂_{z_h}`, which gives
/// `[X_i, X_j] = Σ_h b^h_{ij} Z_h`. The volume is Lebesgue in the chart for
/// every model.
#[derive(Debug, Clone)]
pub struct SrModel {
    id: ModelId,
    n: usize,
    k: usize,
    brackets: Vec<DMatrix<f64>>,
    /// ∂_a X_i^l stored at `(i * n + l) * n + a`.
    dframe: Vec<f64>,
}

impl SrModel {
    pub fn heisenberg() -> Self {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        Self::build_two_step(ModelId::Heisenberg, vec![b])
    }

    /// Free nilpotent structure with growth vector (3, 6).
    pub fn free36() -> Self {
        let b1 = DMatrix::from_row_slice(3, 3, &[0., 0., 0., 0., 0., 1., 0., -1., 0.]);
        let b2 = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 0., 0., 0., -1., 0., 0.]);
        let b3 = DMatrix::from_row_slice(3, 3, &[0., 1., 0., -1., 0., 0., 0., 0., 0.]);
        Self::build_two_step(ModelId::Free36, vec![b1, b2, b3])
    }

    /// Grushin plane, frame `X = ∂_x`, `Y = x ∂_y`.
    pub fn grushin() -> Self {
        let n = 2;
        let mut dframe = vec![0.0; 2 * n * n];
        // ∂_x of the y-component of Y.
        dframe[(n + 1) * n] = 1.0;
        SrModel {
            id: ModelId::Grushin,
            n,
            k: 2,
            brackets: Vec::new(),
            dframe,
        }
    }

    /// Generic two-step group from a non-empty list of skew-symmetric k×k
    /// matrices.
    pub fn two_step(brackets: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = brackets
            .first()
            .ok_or_else(|| Error::InvalidModel("two_step needs at least one bracket matrix".into()))?;
        let k = first.nrows();
        if k < 2 {
            return Err(Error::InvalidModel("two_step needs rank k >= 2".into()));
        }
        for (h, b) in brackets.iter().enumerate() {
            if b.nrows() != k || b.ncols() != k {
                return Err(Error::InvalidModel(format!(
                    "bracket matrix {h} is {}x{}, expected {k}x{k}",
                    b.nrows(),
                    b.ncols()
                )));
            }
            for i in 0..k {
                for j in 0..k {
                    if b[(i, j)] != -b[(j, i)] || !b[(i, j)].is_finite() {
                        return Err(Error::InvalidModel(format!(
                            "bracket matrix {h} is not skew-symmetric at ({i},{j})"
                        )));
                    }
                }
            }
        }
        Ok(Self::build_two_step(ModelId::TwoStep, brackets))
    }

    fn build_two_step(id: ModelId, brackets: Vec<DMatrix<f64>>) -> Self {
        let k = brackets[0].nrows();
        let m = brackets.len();
        let n = k + m;
        let mut dframe = vec![0.0; k * n * n];
        for i in 0..k {
            for (h, b) in brackets.iter().enumerate() {
                let l = k + h;
                for a in 0..k {
                    dframe[(i * n + l) * n + a] = -0.5 * b[(i, a)];
                }
            }
        }
        SrModel {
            id,
            n,
            k,
            brackets,
            dframe,
        }
    }

    pub fn id(&self) -> ModelId {
        self.id
    }

    /// Topological dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of frame fields.
    pub fn rank(&self) -> usize {
        self.k
    }

    /// Number of vertical directions of a two-step group (0 for Grushin).
    pub fn vertical_dim(&self) -> usize {
        self.brackets.len()
    }

    pub fn bracket_matrices(&self) -> Option<&[DMatrix<f64>]> {
        if self.brackets.is_empty() {
            None
        } else {
            Some(&self.brackets)
        }
    }

    pub fn is_two_step(&self) -> bool {
        !self.brackets.is_empty()
    }

    /// Hausdorff dimension `k + 2m` of a two-step group.
    pub fn hausdorff_dim(&self) -> Option<usize> {
        self.is_two_step().then(|| self.k + 2 * self.brackets.len())
    }

    /// Hausdorff dimension of the metric at a point; Grushin jumps from 2 to
    /// 3 on the singular line.
    pub fn hausdorff_dim_at(&self, q: &[f64]) -> usize {
        match self.hausdorff_dim() {
            Some(d) => d,
            None if self.is_riemannian_at(q) => 2,
            None => 3,
        }
    }

    pub fn volume_density(&self, _q: &[f64]) -> f64 {
        1.0
    }

    /// Frame at `q` as a row-major k×n table: `out[i * n + l] = X_i^l(q)`.
    pub fn frame_into(&self, q: &[f64], out: &mut [f64]) {
        let n = self.n;
        out[..self.k * n].iter_mut().for_each(|v| *v = 0.0);
        match self.id {
            ModelId::Grushin => {
                out[0] = 1.0;
                out[n + 1] = q[0];
            }
            _ => {
                let k = self.k;
                for i in 0..k {
                    out[i * n + i] = 1.0;
                    for (h, b) in self.brackets.iter().enumerate() {
                        let mut s = 0.0;
                        for j in 0..k {
                            s += b[(i, j)] * q[j];
                        }
                        out[i * n + k + h] = -0.5 * s;
                    }
                }
            }
        }
    }

    pub fn frame(&self, q: &[f64]) -> DMatrix<f64> {
        let mut buf = vec![0.0; self.k * self.n];
        self.frame_into(q, &mut buf);
        DMatrix::from_row_slice(self.k, self.n, &buf)
    }

    /// Constant table of frame derivatives, `∂_a X_i^l` at `(i*n + l)*n + a`.
    pub fn frame_derivative(&self) -> &[f64] {
        &self.dframe
    }

    /// Controls `u_i = ⟨p, X_i(q)⟩`.
    pub fn controls_into(&self, q: &[f64], p: &[f64], frame_buf: &mut [f64], u: &mut [f64]) {
        self.frame_into(q, frame_buf);
        let n = self.n;
        for i in 0..self.k {
            u[i] = (0..n).map(|l| frame_buf[i * n + l] * p[l]).sum();
        }
    }

    pub fn hamiltonian(&self, q: &[f64], p: &[f64]) -> f64 {
        let mut fb = vec![0.0; self.k * self.n];
        let mut u = vec![0.0; self.k];
        self.controls_into(q, p, &mut fb, &mut u);
        0.5 * u.iter().map(|v| v * v).sum::<f64>()
    }

    /// True where the frame spans the tangent space.
    pub fn is_riemannian_at(&self, q: &[f64]) -> bool {
        match self.id {
            ModelId::Grushin => q[0] != 0.0,
            _ => self.k == self.n,
        }
    }

    /// Numerical rank of the frame at `q`.
    pub fn frame_rank(&self, q: &[f64]) -> usize {
        let f = self.frame(q);
        let sv = f.singular_values();
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        sv.iter().filter(|&&s| s > 1e-12 * smax.max(1.0)).count()
    }

    /// Group law `(x, z)·(x', z') = (x + x', z + z' + ½ xᵀ B_h x')`.
    pub fn group_product(&self, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
        if !self.is_two_step() {
            return None;
        }
        let k = self.k;
        let mut out: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
        for (h, bm) in self.brackets.iter().enumerate() {
            let mut s = 0.0;
            for i in 0..k {
                for j in 0..k {
                    s += a[i] * bm[(i, j)] * b[j];
                }
            }
            out[k + h] += 0.5 * s;
        }
        Some(out)
    }

    pub fn group_inverse(&self, a: &[f64]) -> Option<Vec<f64>> {
        self.is_two_step().then(|| a.iter().map(|v| -v).collect())
    }

    /// Lie bracket `[X_i, X_j](q)` by central differences of the frame
    /// fields. Used to check the stored bracket matrices independently of
    /// the derivative table.
    pub fn bracket_fd(&self, i: usize, j: usize, q: &[f64]) -> Vec<f64> {
        let n = self.n;
        let h = 1e-4;
        let field = |idx: usize, q: &[f64]| -> Vec<f64> {
            let f = self.frame(q);
            (0..n).map(|l| f[(idx, l)]).collect()
        };
        let xi = field(i, q);
        let xj = field(j, q);
        // Directional derivative of field `idx` along `dir`.
        let ddir = |idx: usize, dir: &[f64]| -> Vec<f64> {
            let qp: Vec<f64> = q.iter().zip(dir).map(|(a, d)| a + h * d).collect();
            let qm: Vec<f64> = q.iter().zip(dir).map(|(a, d)| a - h * d).collect();
            let fp = field(idx, &qp);
            let fm = field(idx, &qm);
            fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        };
        let a = ddir(j, &xi);
        let b = ddir(i, &xj);
        a.iter().zip(&b).map(|(x, y)| x - y).collect()
    }
}

/// Build a catalogue model by id. `two_step` requires `params`.
pub fn make_model(id: ModelId, params: Option<Vec<DMatrix<f64>>>) -> Result<SrModel> {
    match id {
        ModelId::Heisenberg => Ok(SrModel::heisenberg()),
        ModelId::Grushin => Ok(SrModel::grushin()),
        ModelId::Free36 => Ok(SrModel::free36()),
        ModelId::TwoStep => SrModel::two_step(
            params.ok_or_else(|| Error::InvalidModel("two_step needs bracket matrices".into()))?,
        ),
    }
}

/// Parse bracket matrices from JSON: an array of k×k matrices, each given
/// either as nested rows or as a flat row-major list.
pub fn brackets_from_json(text: &str) -> Result<Vec<DMatrix<f64>>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::InvalidModel(format!("bad JSON: {e}")))?;
    let list = value
        .as_array()
        .ok_or_else(|| Error::InvalidModel("expected a JSON array of matrices".into()))?;
    let num = |v: &serde_json::Value| -> Result<f64> {
        v.as_f64()
            .ok_or_else(|| Error::InvalidModel(format!("non-numeric entry {v}")))
    };
    let mut out = Vec::with_capacity(list.len());
    for m in list {
        let entries = m
            .as_array()
            .ok_or_else(|| Error::InvalidModel("matrix must be an array".into()))?;
        let flat: Vec<f64> = if entries.iter().all(|e| e.is_array()) {
            let mut flat = Vec::new();
            for row in entries {
                for v in row.as_array().unwrap() {
                    flat.push(num(v)?);
                }
            }
            flat
        } else {
            entries.iter().map(num).collect::<Result<_>>()?
        };
        let k = (flat.len() as f64).sqrt().round() as usize;
        if k * k != flat.len() {
            return Err(Error::InvalidModel(format!(
                "matrix with {} entries is not square",
                flat.len()
            )));
        }
        out.push(DMatrix::from_row_slice(k, k, &flat));
    }
    Ok(out)
}
