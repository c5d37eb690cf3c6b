use std::path::Path;

use nalgebra::DMatrix;
use num_rational::Rational64;
use rayon::prelude::*;
use serde::Serialize;
use subheat::asymfit::{corollary_verdict, fit_exponential, AsymptoticFit, VERDICT_EPS};
use subheat::flow::{exp_map_with, FlowOptions, InitialCovector, Stepping};
use subheat::heat::{self, KernelMethod, KernelSample, MehlerRoute};
use subheat::hinged::{HingedField, HingedOptions};
use subheat::io;
use subheat::laplace::heat_exponent;
use subheat::models::brackets_from_json;
use subheat::shoot::{self, ShootOptions};
use subheat::{make_model, ModelId, SrModel};

use crate::grid::{parse_box, parse_list, parse_matrix, parse_t_grid};
use crate::{
    table, CliError, CliResult, Cmd, FitArgs, GeodesicArgs, GlueArgs, HeatArgs, HingedArgs, Method,
    ModelArgs, OutArgs, PairArgs, ShootArgs, VerdictArgs,
};

pub fn dispatch(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Geodesic(a) => geodesic(&a),
        Cmd::Distance(a) => distance(&a),
        Cmd::Midpoints(a) => midpoints(&a),
        Cmd::Hessian(a) => hessian(&a),
        Cmd::Taylor(a) => taylor(&a),
        Cmd::HeatEval(a) => heat_eval(&a),
        Cmd::Glue(a) => glue(&a),
        Cmd::Fit(a) => fit(&a),
        Cmd::Verdict(a) => verdict(&a),
        Cmd::ReproduceTable(a) => table::reproduce(&a),
    }
}

fn usage(m: impl Into<String>) -> CliError {
    CliError::Usage(m.into())
}

pub fn emit(out: &OutArgs, text: &str) -> CliResult<()> {
    write_to(out.out.as_deref(), text)
}

fn write_to(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_doc<T: Serialize>(v: &T) -> String {
    let mut s = io::to_json(v);
    s.push('\n');
    s
}

fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("--{name} must be positive, got {v}")))
    }
}

fn model_of(a: &ModelArgs, default: Option<ModelId>) -> CliResult<SrModel> {
    let id: ModelId = match (&a.model, default) {
        (Some(m), _) => m.parse()?,
        (None, Some(d)) => d,
        (None, None) => return Err(usage("--model is required")),
    };
    let params = match &a.brackets {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            Some(brackets_from_json(&text)?)
        }
        None => None,
    };
    Ok(make_model(id, params)?)
}

fn point(model: &SrModel, name: &str, s: Option<&str>, origin_default: bool) -> CliResult<Vec<f64>> {
    let v = match s {
        Some(s) => parse_list(s).map_err(|e| usage(format!("--{name}: {e}")))?,
        None if origin_default => vec![0.0; model.dim()],
        None => return Err(usage(format!("--{name} is required"))),
    };
    if v.len() != model.dim() {
        return Err(usage(format!("--{name} needs {} coordinates, got {}", model.dim(), v.len())));
    }
    Ok(v)
}

fn shoot_options(a: &ShootArgs) -> CliResult<ShootOptions> {
    let d = ShootOptions::default();
    let o = ShootOptions {
        n_start: a.n_start.unwrap_or(d.n_start),
        newton_max_iter: a.newton_max_iter.unwrap_or(d.newton_max_iter),
        newton_tol: positive("newton-tol", a.newton_tol.unwrap_or(d.newton_tol))?,
        cluster_radius: positive("cluster-radius", a.cluster_radius.unwrap_or(d.cluster_radius))?,
        coarse_tol: positive("coarse-tol", a.coarse_tol.unwrap_or(d.coarse_tol))?,
        flow_tol: positive("flow-tol", a.flow_tol.unwrap_or(d.flow_tol))?,
        check_conjugate: true,
    };
    if o.n_start < 4 {
        return Err(usage("--n-start must be at least 4"));
    }
    Ok(o)
}

fn geodesic(a: &GeodesicArgs) -> CliResult<()> {
    let model = model_of(&a.model, None)?;
    let x = point(&model, "from", a.from.as_deref(), true)?;
    let p0 = match (&a.covector, a.theta) {
        (Some(c), _) => {
            let p = parse_list(c).map_err(|e| usage(format!("--covector: {e}")))?;
            InitialCovector::from_covector(&model, &x, &p)?
        }
        (None, Some(theta)) => {
            let w = match &a.w {
                Some(w) => parse_list(w).map_err(|e| usage(format!("--w: {e}")))?,
                None => vec![0.0; model.vertical_dim()],
            };
            match model.id() {
                ModelId::Grushin => InitialCovector::grushin(&x, theta)?,
                _ => InitialCovector::angle(&model, &x, theta, &w)?,
            }
        }
        (None, None) => return Err(usage("give --covector or --theta")),
    };
    if !(a.t >= 0.0 && a.t.is_finite()) {
        return Err(usage(format!("--t must be non-negative, got {}", a.t)));
    }
    if a.samples < 2 {
        return Err(usage("--samples must be at least 2"));
    }
    let tol = positive("flow-tol", a.flow_tol.unwrap_or(1e-12))?;
    let opts = FlowOptions {
        stepping: Stepping::Adaptive { tol },
        samples: a.samples,
    };
    let r = exp_map_with(&model, &p0, a.t, &opts)?;
    let traj = r.trajectory.unwrap_or_default();
    emit(&a.out, &io::trajectory_csv(&traj))
}

#[derive(Serialize)]
struct DistanceOut<'a> {
    model: String,
    from: &'a [f64],
    to: &'a [f64],
    d: f64,
    d2: f64,
    n_minimizers: usize,
    solutions: &'a [shoot::GeodesicSolution],
}

fn pair(a: &PairArgs, default: Option<ModelId>) -> CliResult<(SrModel, Vec<f64>, Vec<f64>)> {
    let model = model_of(&a.model, default)?;
    let x = point(&model, "from", a.from.as_deref(), true)?;
    let y = point(&model, "to", a.to.as_deref(), false)?;
    Ok((model, x, y))
}

fn distance(a: &PairArgs) -> CliResult<()> {
    let (model, x, y) = pair(a, None)?;
    let r = shoot::distance(&model, &x, &y, &shoot_options(&a.shoot)?)?;
    let out = DistanceOut {
        model: model.id().to_string(),
        from: &x,
        to: &y,
        d: r.d,
        d2: r.d * r.d,
        n_minimizers: r.minimizers().count(),
        solutions: &r.solutions,
    };
    emit(&a.out, &json_doc(&out))
}

fn midpoints(a: &PairArgs) -> CliResult<()> {
    let (model, x, y) = pair(a, None)?;
    let m = shoot::midpoints(&model, &x, &y, &shoot_options(&a.shoot)?)?;
    emit(&a.out, &json_doc(&m))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

/// The hinged field of a pair. Without `--model` this is the Grushin pair
/// `(−1, −π/4) → (1, π/4)` at the midpoint `(0, 0)`.
fn hinged_field(a: &HingedArgs, bar_chart: bool) -> CliResult<(HingedField, Option<DMatrix<f64>>)> {
    let grushin_default = a.pair.model.model.is_none();
    let (model, x, y) = if grushin_default {
        let model = SrModel::grushin();
        let q = std::f64::consts::FRAC_PI_4;
        let x = match &a.pair.from {
            Some(_) => point(&model, "from", a.pair.from.as_deref(), false)?,
            None => vec![-1.0, -q],
        };
        let y = match &a.pair.to {
            Some(_) => point(&model, "to", a.pair.to.as_deref(), false)?,
            None => vec![1.0, q],
        };
        (model, x, y)
    } else {
        pair(&a.pair, None)?
    };
    let z0 = match (&a.z0, grushin_default && a.pair.from.is_none() && a.pair.to.is_none()) {
        (Some(z), _) => Some(point(&model, "z0", Some(z), false)?),
        (None, true) => Some(vec![0.0, 0.0]),
        (None, false) => None,
    };
    let chart = match (&a.chart, grushin_default) {
        (Some(c), _) => Some(parse_matrix(c).map_err(|e| usage(format!("--chart: {e}")))?),
        (None, true) if bar_chart => Some(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0])),
        (None, _) => None,
    };
    if let Some(c) = &chart {
        if c.nrows() != model.dim() {
            return Err(usage(format!("--chart needs {} rows", model.dim())));
        }
    }
    let d = HingedOptions::default();
    let opts = HingedOptions {
        hess_step: positive("hess-step", a.hess_step.unwrap_or(d.hess_step))?,
        quartic_step: positive("quartic-step", a.quartic_step.unwrap_or(d.quartic_step))?,
        low_step: positive("low-step", a.low_step.unwrap_or(d.low_step))?,
        flow_steps: a.flow_steps.unwrap_or(d.flow_steps),
        shoot: shoot_options(&a.pair.shoot)?,
    };
    let field = HingedField::new(&model, &x, &y, z0.as_deref(), &opts)?;
    Ok((field, chart))
}

#[derive(Serialize)]
struct HessianOut {
    model: String,
    from: Vec<f64>,
    to: Vec<f64>,
    d2: f64,
    z0: Vec<f64>,
    gamma_dim: usize,
    chart: Vec<Vec<f64>>,
    value: f64,
    matrix: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    kernel_dim: usize,
    kernel: Vec<Vec<f64>>,
    error_estimate: f64,
}

#[derive(Serialize)]
struct FormOut {
    form: subheat::hinged::LaplaceForm,
    heat_exponent: Rational64,
    heat_exponent_value: f64,
}

fn write_form(field: &HingedField, chart: &DMatrix<f64>, path: &Path) -> CliResult<()> {
    let form = field.to_laplace_form(chart)?;
    let a = heat_exponent(field.model().dim(), &form)?;
    let out = FormOut {
        form,
        heat_exponent: a,
        heat_exponent_value: subheat::laplace::to_f64(a),
    };
    write_to(Some(path), &json_doc(&out))
}

fn hessian(a: &HingedArgs) -> CliResult<()> {
    let (field, chart) = hinged_field(a, false)?;
    let n = field.model().dim();
    let chart = chart.unwrap_or_else(|| DMatrix::identity(n, n));
    let h = field.hessian_in(&chart)?;
    if let Some(p) = &a.form_out {
        write_form(&field, &chart, p)?;
    }
    let out = HessianOut {
        model: field.model().id().to_string(),
        from: field.x.clone(),
        to: field.y.clone(),
        d2: field.d2,
        z0: field.z0.clone(),
        gamma_dim: field.gamma_dim,
        chart: rows(&chart),
        value: h.value,
        matrix: rows(&h.matrix),
        eigenvalues: h.eigenvalues.clone(),
        kernel_dim: h.kernel_dim,
        kernel: h.kernel(),
        error_estimate: h.error_estimate,
    };
    emit(&a.pair.out, &json_doc(&out))
}

fn taylor(a: &HingedArgs) -> CliResult<()> {
    let (field, chart) = hinged_field(a, true)?;
    let n = field.model().dim();
    let chart = chart.unwrap_or_else(|| DMatrix::identity(n, n));
    let table = field.taylor4(&chart)?;
    if let Some(p) = &a.form_out {
        write_form(&field, &chart, p)?;
    }
    emit(&a.pair.out, &io::taylor_csv(&table))
}

/// `x⁻¹y` on a group, or `None` for Grushin.
fn relative(model: &SrModel, x: &[f64], y: &[f64]) -> Option<Vec<f64>> {
    model.group_product(&model.group_inverse(x)?, y)
}

/// Closed-form log-kernel for vertical pairs on Heisenberg and (3,6).
fn closed_log(model: &SrModel, x: &[f64], y: &[f64], t: f64) -> Option<f64> {
    let rel = relative(model, x, y)?;
    let k = model.rank();
    if rel[..k].iter().any(|v| *v != 0.0) {
        return None;
    }
    let r = rel[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
    match model.id() {
        ModelId::Heisenberg => Some(heat::heisenberg_vertical_log(r, t)),
        ModelId::Free36 => Some(heat::free36_vertical_log_at(r, t)),
        _ => None,
    }
}

fn sample(model: &SrModel, x: &[f64], y: &[f64], t: f64, tol: f64, method: Method) -> CliResult<KernelSample> {
    let closed = |lv: f64| KernelSample {
        t,
        x: x.to_vec(),
        y: y.to_vec(),
        value: lv.exp(),
        log_value: lv,
        method: KernelMethod::ClosedForm,
        est_error: 0.0,
    };
    let s = match method {
        Method::Auto => match closed_log(model, x, y, t) {
            Some(lv) => closed(lv),
            None => heat::kernel(model, x, y, t, tol)?,
        },
        Method::Closed => closed(
            closed_log(model, x, y, t)
                .ok_or_else(|| usage("no closed form for this pair; closed forms cover vertical pairs on heisenberg and free36"))?,
        ),
        Method::Integral => heat::kernel(model, x, y, t, tol)?,
        Method::RealLine => match model.id() {
            ModelId::Heisenberg => {
                let rel = relative(model, x, y).expect("heisenberg is a group");
                let mut s = heat::heisenberg_kernel_real_line(&rel, t, tol)?;
                s.x = x.to_vec();
                s.y = y.to_vec();
                s
            }
            ModelId::Grushin => heat::grushin_kernel_with(x, y, t, tol, MehlerRoute::RealLine)?,
            _ => return Err(usage("--method real-line supports heisenberg and grushin")),
        },
        Method::Radial => {
            let rel = relative(model, x, y).filter(|_| model.id() == ModelId::Free36);
            let rel = rel.ok_or_else(|| usage("--method radial supports free36 only"))?;
            if rel[..3].iter().any(|v| *v != 0.0) {
                return Err(usage("--method radial needs a vertical pair"));
            }
            let r = rel[3..].iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut s = heat::free36_radial(r, t, tol)?;
            s.x = x.to_vec();
            s.y = y.to_vec();
            s
        }
    };
    Ok(s)
}

fn samples_of(a: &HeatArgs, default_grid: Option<&str>) -> CliResult<Vec<KernelSample>> {
    let model = model_of(&a.model, None)?;
    let x = point(&model, "from", a.from.as_deref(), true)?;
    let y = point(&model, "target", a.target.as_deref(), false)?;
    let grid = a
        .t_grid
        .as_deref()
        .or(default_grid)
        .ok_or_else(|| usage("--t-grid is required"))?;
    let ts = parse_t_grid(grid).map_err(|e| usage(format!("--t-grid: {e}")))?;
    let tol = positive("tol", a.tol.unwrap_or(1e-8))?;
    ts.par_iter()
        .map(|&t| sample(&model, &x, &y, t, tol, a.method))
        .collect()
}

fn heat_eval(a: &HeatArgs) -> CliResult<()> {
    let s = samples_of(a, None)?;
    emit(&a.out, &io::kernel_csv(&s))
}

#[derive(Serialize)]
struct GlueOut {
    model: String,
    from: Vec<f64>,
    target: Vec<f64>,
    t: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
    glued: f64,
    glued_est_error: f64,
    direct: f64,
    rel_error: f64,
    boundary_ratio: f64,
}

fn glue(a: &GlueArgs) -> CliResult<()> {
    let model = model_of(&a.model, None)?;
    let x = point(&model, "from", a.from.as_deref(), true)?;
    let y = point(&model, "target", a.target.as_deref(), false)?;
    let t = positive("t", a.t.ok_or_else(|| usage("--t is required"))?)?;
    let tol = positive("tol", a.tol.unwrap_or(1e-3))?;
    let ktol = positive("kernel-tol", a.kernel_tol.unwrap_or(1e-9))?;
    let (lo, hi) = match &a.bounds {
        Some(b) => parse_box(b).map_err(|e| usage(format!("--box: {e}")))?,
        None => {
            let m = 4.25 * t.sqrt();
            (
                x.iter().zip(&y).map(|(a, b)| a.min(*b) - m).collect(),
                x.iter().zip(&y).map(|(a, b)| a.max(*b) + m).collect(),
            )
        }
    };
    if lo.len() != model.dim() {
        return Err(usage(format!("--box needs {} coordinates per side", model.dim())));
    }
    let k = |p: &[f64], q: &[f64], s: f64| heat::kernel(&model, p, q, s, ktol).map(|r| r.value);
    let g = heat::semigroup_glue(&k, &x, &y, t, &lo, &hi, tol)?;
    let direct = heat::kernel(&model, &x, &y, t, ktol)?.value;
    let out = GlueOut {
        model: model.id().to_string(),
        from: x,
        target: y,
        t,
        lo,
        hi,
        glued: g.value,
        glued_est_error: g.est_error,
        direct,
        rel_error: g.value / direct - 1.0,
        boundary_ratio: g.boundary_ratio,
    };
    emit(&a.out, &json_doc(&out))
}

fn fit(a: &FitArgs) -> CliResult<()> {
    let pts: Vec<(f64, f64)> = match &a.samples {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            io::read_log_samples(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => samples_of(&a.heat, None)?.iter().map(|s| (s.t, s.log_value)).collect(),
    };
    let f = fit_exponential(&pts)?;
    emit(&a.heat.out, &json_doc(&f))
}

fn verdict(a: &VerdictArgs) -> CliResult<()> {
    let path = a.fit.as_ref().ok_or_else(|| usage("--fit is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let fit: AsymptoticFit =
        serde_json::from_str(&text).map_err(|e| usage(format!("{} is not a fit record: {e}", path.display())))?;
    let predicted = match &a.predicted {
        Some(p) => Some(
            p.trim()
                .parse::<Rational64>()
                .map_err(|e| usage(format!("--predicted `{p}`: {e}")))?,
        ),
        None => None,
    };
    let eps = positive("eps", a.eps.unwrap_or(VERDICT_EPS))?;
    let model = match &a.pair.model.model {
        Some(_) => Some(model_of(&a.pair.model, None)?),
        None => None,
    };
    let n = match (a.n, &model) {
        (Some(n), _) => n,
        (None, Some(m)) => m.dim(),
        (None, None) => return Err(usage("give --n or --model")),
    };
    let conjugacy = match (a.conjugacy, &model) {
        (Some(c), _) => c,
        (None, Some(_)) if a.pair.to.is_some() => {
            let args = HingedArgs {
                pair: a.pair.clone(),
                z0: None,
                chart: None,
                hess_step: None,
                quartic_step: None,
                low_step: None,
                flow_steps: None,
                form_out: None,
            };
            let (field, _) = hinged_field(&args, false)?;
            field.hessian()?.kernel_dim
        }
        _ => return Err(usage("give --conjugacy, or --model with --from/--to")),
    };
    let v = corollary_verdict(&fit, n, conjugacy, predicted, eps);
    emit(&a.pair.out, &json_doc(&v))
}
