//! Grushin summary table: the small-time exponent `α` of `p_t(q, q')` at a
//! Riemannian and at a singular base point, for diagonal pairs, pairs off
//! the cut locus, non-conjugate cut pairs and conjugate cut pairs.
//!
//! Each cell fits Mehler-integral samples and compares the fitted exponent
//! with a prediction: `n/2` or `Q/2` on the diagonal, and
//! `n − Σ 1/(2m_i)` from the normal form of the hinged energy elsewhere.

use std::f64::consts::FRAC_PI_4;

use num_rational::Rational64;
use rayon::prelude::*;
use subheat::asymfit::{fit_exponential, AsymptoticFit};
use subheat::heat::grushin_kernel;
use subheat::hinged::{HingedField, HingedOptions};
use subheat::io::fmt17;
use subheat::laplace::{heat_exponent, to_f64};
use subheat::SrModel;

use crate::commands::emit;
use crate::{CliError, CliResult, TableArgs, TableFormat};

/// Largest `|α̂ − α|` reported as agreement.
const AGREE_EPS: f64 = 0.05;

struct Cell {
    row: &'static str,
    column: &'static str,
    q: [f64; 2],
    qp: [f64; 2],
    /// Midpoint to localize the hinged energy at, when shooting only finds
    /// it approximately.
    z0: Option<[f64; 2]>,
    window: (f64, f64),
}

fn cells() -> Vec<Cell> {
    let r = [1.0, 0.0];
    let o = [0.0, 0.0];
    vec![
        Cell { row: "riemannian", column: "diagonal", q: r, qp: r, z0: None, window: (0.005, 0.05) },
        Cell { row: "riemannian", column: "off_cut", q: r, qp: [1.2, 0.1], z0: None, window: (0.005, 0.05) },
        Cell {
            row: "riemannian",
            column: "cut_non_conjugate",
            q: [-1.0, -1.2],
            qp: [1.0, 1.2],
            z0: None,
            window: (0.01, 0.1),
        },
        Cell {
            row: "riemannian",
            column: "cut_conjugate",
            q: [-1.0, -FRAC_PI_4],
            qp: [1.0, FRAC_PI_4],
            z0: Some([0.0, 0.0]),
            window: (0.01, 0.1),
        },
        Cell { row: "singular", column: "diagonal", q: o, qp: o, z0: None, window: (0.005, 0.05) },
        Cell { row: "singular", column: "off_cut", q: o, qp: [1.0, 0.2], z0: None, window: (0.005, 0.05) },
        Cell { row: "singular", column: "cut_non_conjugate", q: o, qp: [0.0, 1.0], z0: None, window: (0.01, 0.1) },
    ]
}

struct Row {
    cell: Cell,
    predicted: Rational64,
    fit: AsymptoticFit,
}

fn predict(model: &SrModel, c: &Cell) -> CliResult<Rational64> {
    if c.q == c.qp {
        return Ok(Rational64::new(model.hausdorff_dim_at(&c.q) as i64, 2));
    }
    let field = HingedField::new(model, &c.q, &c.qp, c.z0.as_ref().map(|z| &z[..]), &HingedOptions::default())?;
    let form = field.to_laplace_form(&nalgebra::DMatrix::identity(2, 2))?;
    Ok(heat_exponent(2, &form)?)
}

fn fit_cell(c: &Cell, tol: f64, points: usize) -> CliResult<AsymptoticFit> {
    let (a, b) = c.window;
    let ts: Vec<f64> = (0..points)
        .map(|i| a * (b / a).powf(i as f64 / (points - 1) as f64))
        .collect();
    let s: Vec<(f64, f64)> = ts
        .par_iter()
        .map(|&t| grushin_kernel(&c.q, &c.qp, t, tol).map(|k| (t, k.log_value)))
        .collect::<Result<_, _>>()?;
    Ok(fit_exponential(&s)?)
}

fn point(p: &[f64; 2]) -> String {
    format!("({};{})", p[0], p[1])
}

fn rational(r: Rational64) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn csv(rows: &[Row]) -> String {
    let mut out = String::from(
        "row,column,q,q_prime,predicted_alpha,predicted_alpha_value,alpha_hat,d2_hat,residual_rms,t_min,t_max,agrees\n",
    );
    for r in rows {
        let p = to_f64(r.predicted);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.cell.row,
            r.cell.column,
            point(&r.cell.q),
            point(&r.cell.qp),
            rational(r.predicted),
            fmt17(p),
            fmt17(r.fit.alpha_hat),
            fmt17(r.fit.d2_hat),
            fmt17(r.fit.residual_rms),
            fmt17(r.fit.t_window.0),
            fmt17(r.fit.t_window.1),
            (r.fit.alpha_hat - p).abs() <= AGREE_EPS
        ));
    }
    out
}

fn markdown(rows: &[Row]) -> String {
    let columns = ["diagonal", "off_cut", "cut_non_conjugate", "cut_conjugate"];
    let mut out = String::from(
        "| base point | diagonal | off diagonal, off cut locus | cut locus, not conjugate | cut locus, conjugate |\n|---|---|---|---|---|\n",
    );
    for (row, label) in [("riemannian", "Riemannian"), ("singular", "singular (x = 0)")] {
        out.push_str(&format!("| {label} |"));
        for col in columns {
            match rows.iter().find(|r| r.cell.row == row && r.cell.column == col) {
                Some(r) => {
                    let shape = if col == "diagonal" {
                        format!("C/t^{}", rational(r.predicted))
                    } else {
                        format!("C/t^{} e^(-d²/4t)", rational(r.predicted))
                    };
                    out.push_str(&format!(" {shape}, fitted α = {:.4} |", r.fit.alpha_hat));
                }
                None => out.push_str(" --- |"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn reproduce(a: &TableArgs) -> CliResult<()> {
    let tol = a.tol.unwrap_or(1e-8);
    if !(tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be positive, got {tol}")));
    }
    let points = a.points.unwrap_or(16);
    if points < 6 {
        return Err(CliError::Usage("--points must be at least 6".into()));
    }
    let model = SrModel::grushin();
    let mut rows = Vec::new();
    for cell in cells() {
        let predicted = predict(&model, &cell)?;
        let fit = fit_cell(&cell, tol, points)?;
        rows.push(Row { cell, predicted, fit });
    }
    let text = match a.format {
        TableFormat::Csv => csv(&rows),
        TableFormat::Markdown => markdown(&rows),
    };
    emit(&a.out, &text)
}
