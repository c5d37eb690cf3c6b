//! Quadrature: adaptive Gauss–Kronrod on intervals, nested tensor-product
//! cubature on boxes, zero-interval summation for oscillatory tails and
//! integration along shifted horizontal contours.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

// Gauss–Kronrod 7/15 abscissae and weights on [−1, 1]; the odd-indexed
// Kronrod nodes are the Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// The fifteen Kronrod abscissae on `[a, b]`, in order.
fn nodes(a: f64, b: f64) -> [f64; 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut x = [0.0; 15];
    for j in 0..7 {
        x[j] = c - h * XGK[j];
        x[14 - j] = c + h * XGK[j];
    }
    x[7] = c;
    x
}

fn combine(a: f64, b: f64, f: &[f64; 15]) -> Estimate {
    let h = 0.5 * (b - a);
    let mut k = WGK[7] * f[7];
    let mut g = WG[3] * f[7];
    for j in 0..7 {
        let s = f[j] + f[14 - j];
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Estimate {
        value: k * h,
        error: ((k - g) * h).abs(),
    }
}

/// Value and absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate { value: 0.0, error: 0.0 };

    fn add(self, o: Estimate) -> Estimate {
        Estimate {
            value: self.value + o.value,
            error: self.error + o.error,
        }
    }
}

/// One Gauss–Kronrod 7/15 panel.
pub fn gk15(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Estimate {
    let x = nodes(a, b);
    let mut v = [0.0; 15];
    for (vi, xi) in v.iter_mut().zip(x) {
        *vi = f(xi);
    }
    combine(a, b, &v)
}

fn gk15_par(f: &(impl Fn(f64) -> f64 + Sync), a: f64, b: f64) -> Estimate {
    let x = nodes(a, b);
    let vals: Vec<f64> = x.par_iter().map(|&xi| f(xi)).collect();
    let mut v = [0.0; 15];
    v.copy_from_slice(&vals);
    combine(a, b, &v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum bisection depth of any panel.
    pub max_depth: u32,
    pub max_panels: usize,
}

impl QuadOptions {
    pub fn rel(rel_tol: f64) -> Self {
        QuadOptions {
            rel_tol,
            abs_tol: 0.0,
            max_depth: 30,
            max_panels: 4000,
        }
    }

    pub fn with_abs(self, abs_tol: f64) -> Self {
        QuadOptions { abs_tol, ..self }
    }
}

struct Panel {
    a: f64,
    b: f64,
    est: Estimate,
    depth: u32,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.est.error == o.est.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.est.error.total_cmp(&o.est.error)
    }
}

fn adaptive_impl(
    rule: &dyn Fn(f64, f64) -> Estimate,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("interval [{a}, {b}] must be finite")));
    }
    if a == b {
        return Ok(Estimate::ZERO);
    }
    let first = rule(a, b);
    let mut total = first;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, est: first, depth: 0 });
    let mut frozen = Estimate::ZERO;
    loop {
        let goal = opts.abs_tol.max(opts.rel_tol * total.value.abs());
        if total.error <= goal {
            return Ok(total);
        }
        if !total.value.is_finite() {
            return Err(Error::QuadratureFailure {
                estimate: total.value,
                error: total.error,
            });
        }
        let Some(p) = heap.pop() else {
            break;
        };
        if p.depth >= opts.max_depth || heap.len() + 2 > opts.max_panels {
            frozen = frozen.add(p.est);
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let m = 0.5 * (p.a + p.b);
        let l = rule(p.a, m);
        let r = rule(m, p.b);
        total = Estimate {
            value: total.value - p.est.value + l.value + r.value,
            error: total.error - p.est.error + l.error + r.error,
        };
        heap.push(Panel { a: p.a, b: m, est: l, depth: p.depth + 1 });
        heap.push(Panel { a: m, b: p.b, est: r, depth: p.depth + 1 });
    }
    // Recompute from the panels to shed accumulated rounding.
    let sum = heap.into_iter().fold(frozen, |s, p| s.add(p.est));
    let goal = opts.abs_tol.max(opts.rel_tol * sum.value.abs());
    if sum.error <= goal {
        Ok(sum)
    } else {
        Err(Error::QuadratureFailure {
            estimate: sum.value,
            error: sum.error,
        })
    }
}

/// Globally adaptive Gauss–Kronrod integration on a finite interval.
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, opts: &QuadOptions) -> Result<Estimate> {
    adaptive_impl(&|l, r| gk15(&f, l, r), a, b, opts)
}

/// As [`adaptive`], evaluating the nodes of each panel in parallel.
pub fn adaptive_par(f: impl Fn(f64) -> f64 + Sync, a: f64, b: f64, opts: &QuadOptions) -> Result<Estimate> {
    adaptive_impl(&|l, r| gk15_par(&f, l, r), a, b, opts)
}

/// Nested tensor-product cubature over the box `lo ≤ x ≤ hi`. Inner
/// integrals run at a tenth of the outer relative tolerance and an absolute
/// tolerance scaled by the outer width; the outermost axis evaluates its
/// nodes in parallel. A nonzero `abs_tol` keeps inner integrals in the
/// negligible part of the box cheap.
pub fn cubature(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    lo: &[f64],
    hi: &[f64],
    opts: &QuadOptions,
) -> Result<Estimate> {
    if lo.len() != hi.len() || lo.is_empty() {
        return Err(Error::InvalidArgument("box bounds must have equal positive length".into()));
    }
    let n = lo.len();
    let width = hi[0] - lo[0];
    let inner = QuadOptions {
        rel_tol: 0.1 * opts.rel_tol,
        abs_tol: 0.1 * opts.abs_tol / width.abs().max(1e-300),
        ..*opts
    };
    // Failures inside the nested integrals surface as NaN so that the outer
    // rule stops and reports them.
    fn nest(
        f: &(dyn Fn(&[f64]) -> f64 + Sync),
        lo: &[f64],
        hi: &[f64],
        fixed: &mut Vec<f64>,
        opts: &QuadOptions,
    ) -> f64 {
        let d = fixed.len();
        if d + 1 == lo.len() {
            let base = fixed.clone();
            let g = |x: f64| {
                let mut p = base.clone();
                p.push(x);
                f(&p)
            };
            return adaptive(g, lo[d], hi[d], opts).map_or(f64::NAN, |e| e.value);
        }
        let base = fixed.clone();
        let g = |x: f64| {
            let mut p = base.clone();
            p.push(x);
            nest(f, lo, hi, &mut p, opts)
        };
        adaptive(g, lo[d], hi[d], opts).map_or(f64::NAN, |e| e.value)
    }
    let outer = |x: f64| -> f64 {
        if n == 1 {
            f(&[x])
        } else {
            nest(f, lo, hi, &mut vec![x], &inner)
        }
    };
    adaptive_par(outer, lo[0], hi[0], opts)
}

/// Limit of a sequence of partial sums by Wynn's ε-algorithm. Returns the
/// estimate and the difference between the last two diagonal estimates.
pub fn wynn_epsilon(partial: &[f64]) -> (f64, f64) {
    let n = partial.len();
    if n < 3 {
        let last = partial.last().copied().unwrap_or(0.0);
        let prev = if n >= 2 { partial[n - 2] } else { 0.0 };
        return (last, (last - prev).abs());
    }
    // e[k] holds column k of the ε table for the current anti-diagonal.
    let mut prev_col: Vec<f64> = vec![0.0; n + 1];
    let mut cur_col: Vec<f64> = partial.to_vec();
    let mut best = (partial[n - 1], (partial[n - 1] - partial[n - 2]).abs());
    let mut k = 0;
    while cur_col.len() > 1 {
        let mut next = Vec::with_capacity(cur_col.len() - 1);
        for i in 0..cur_col.len() - 1 {
            let diff = cur_col[i + 1] - cur_col[i];
            let base = if k == 0 { 0.0 } else { prev_col[i + 1] };
            next.push(if diff == 0.0 { f64::INFINITY } else { base + 1.0 / diff });
        }
        prev_col = cur_col;
        cur_col = next;
        k += 1;
        // Even columns estimate the limit.
        if k % 2 == 0 && cur_col.len() >= 2 {
            let m = cur_col.len();
            let (a, b) = (cur_col[m - 1], cur_col[m - 2]);
            if a.is_finite() && b.is_finite() {
                let err = (a - b).abs();
                if err < best.1 {
                    best = (a, err);
                }
            }
        }
    }
    best
}

/// `∫_a^∞ f` for an integrand whose oscillation has a known half-period
/// `half_period`: the integral over consecutive half-periods is summed and
/// the partial sums accelerated by the ε-algorithm.
pub fn oscillatory_tail(
    f: impl Fn(f64) -> f64,
    a: f64,
    half_period: f64,
    opts: &QuadOptions,
    max_intervals: usize,
) -> Result<Estimate> {
    if !(half_period > 0.0) {
        return Err(Error::InvalidArgument("half period must be positive".into()));
    }
    let inner = QuadOptions {
        rel_tol: 0.1 * opts.rel_tol,
        ..*opts
    };
    let mut partial = Vec::new();
    let mut sum = 0.0;
    let mut qerr = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..max_intervals {
        let l = a + k as f64 * half_period;
        let e = adaptive(&f, l, l + half_period, &inner.with_abs(1e-300))?;
        sum += e.value;
        qerr += e.error;
        scale = scale.max(e.value.abs());
        partial.push(sum);
        if partial.len() >= 8 {
            let (lim, err) = wynn_epsilon(&partial);
            let goal = opts.abs_tol.max(opts.rel_tol * lim.abs());
            if err + qerr <= goal || e.value.abs() < 1e-3 * goal {
                return Ok(Estimate {
                    value: lim,
                    error: err + qerr,
                });
            }
        }
    }
    let (lim, err) = wynn_epsilon(&partial);
    Err(Error::QuadratureFailure {
        estimate: lim,
        error: err.max(scale),
    })
}

/// `Re ∫ F(s + iσ) ds` over the real line for an integrand bounded by
/// `C s² e^{−|s|}` for `|s| ≥ 4`. Panels of width `w` are added outward in
/// both directions until the remaining tail, at most three times the
/// envelope at the cut-off, falls below the tolerance.
pub fn line_integral(
    f: &(dyn Fn(Complex64) -> Complex64 + Sync),
    sigma: f64,
    width: f64,
    opts: &QuadOptions,
) -> Result<Estimate> {
    let re = |s: f64| f(Complex64::new(s, sigma)).re;
    let inner = QuadOptions {
        rel_tol: 0.25 * opts.rel_tol,
        ..*opts
    };
    let mut total = adaptive(re, -width, width, &inner.with_abs(1e-300))?;
    let mut k = 1usize;
    loop {
        let (l, r) = (k as f64 * width, (k + 1) as f64 * width);
        let right = adaptive(re, l, r, &inner.with_abs(1e-300))?;
        let left = adaptive(re, -r, -l, &inner.with_abs(1e-300))?;
        total = total.add(right).add(left);
        let env = f(Complex64::new(r, sigma)).norm().max(f(Complex64::new(-r, sigma)).norm());
        let tail = 3.0 * env;
        let goal = opts.abs_tol.max(0.25 * opts.rel_tol * total.value.abs());
        if r >= 4.0 && tail <= goal && right.value.abs().max(left.value.abs()) <= 4.0 * goal {
            total.error += tail;
            return Ok(total);
        }
        k += 1;
        if k > 400 {
            return Err(Error::QuadratureFailure {
                estimate: total.value,
                error: total.error + tail,
            });
        }
    }
}

/// Height `σ ∈ [lo, hi]` minimizing `log|F(iσ)|`, given as `logabs(σ)`:
/// the horizontal line through that point passes near the saddle of `F`,
/// where cancellation is smallest. Grid search followed by golden-section
/// refinement. Non-finite values count as `+∞`.
pub fn saddle_height(logabs: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let logabs = |s: f64| {
        let v = logabs(s);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let n = 200;
    let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&s| logabs(s)).collect();
    let mut best = 0;
    for i in 1..=n {
        if vals[i] < vals[best] {
            best = i;
        }
    }
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (logabs(c), logabs(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = logabs(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = logabs(d);
        }
    }
    0.5 * (a + b)
}
