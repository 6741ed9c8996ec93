//! Alternating-minimization solver for the inner bottleneck optimization
//! `inf over P(V|Y) of I(Y;V) - lambda I(X;V)` on a discretized joint, and
//! the dual functional built from it.
//!
//! The iteration is the standard self-consistent update: given the current
//! kernel, recompute the `V` marginal and the decoder `P(X|V)`, then set each
//! row to `q(v|y) ~ r(v) 2^(-lambda KL(p(x|y) || p(x|v)))`. Each of the three
//! block updates minimizes the same variational objective, so the objective
//! recorded once per round (with marginal and decoder consistent with the
//! current kernel) is non-increasing.
//!
//! A constant-`V` baseline (objective exactly zero) always participates in
//! the restart pool: the infimum never exceeds zero, and for `lambda` at or
//! below the trivial-branch threshold the pool then returns the exact answer
//! instead of a slowly collapsing iterate.

use crate::channel::{joint_xy_at, ChannelSpec};
use crate::error::{Error, Result};
use crate::functionals::{differential_entropy, JointGrid};
use crate::grid::GridDensity;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Guard against exponent overflow in the row update.
pub const LAMBDA_CAP: f64 = 1e6;

const LOG_FLOOR: f64 = 1e-300;

/// Row-stochastic map from `Y` grid cells to the auxiliary alphabet.
#[derive(Debug, Clone)]
pub struct ChannelKernel {
    pub rows: Array2<f64>,
}

impl ChannelKernel {
    /// Maximum deviation of any row sum from 1.
    pub fn row_sum_error(&self) -> f64 {
        self.rows
            .rows()
            .into_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// One bottleneck instance: joint, trade-off parameter, alphabet size and
/// convergence controls.
#[derive(Debug, Clone)]
pub struct IBProblem {
    pub joint: JointGrid,
    pub lambda: f64,
    pub v_size: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Number of random restarts besides the deterministic one.
    pub restarts: usize,
}

impl IBProblem {
    pub fn new(joint: JointGrid, lambda: f64) -> Self {
        IBProblem {
            joint,
            lambda,
            v_size: 64,
            tol: 1e-9,
            max_iter: 20_000,
            seed: 0,
            restarts: 8,
        }
    }
}

/// Solver output. `objective = i_yv - lambda * i_xv` in bits; `trace` is the
/// per-iteration objective sequence of the winning restart.
#[derive(Debug, Clone)]
pub struct IBSolution {
    pub kernel: ChannelKernel,
    pub objective: f64,
    pub i_xv: f64,
    pub i_yv: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
    pub trace: Vec<f64>,
}

struct Restart {
    kernel: Array2<f64>,
    objective: f64,
    i_xv: f64,
    i_yv: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

pub(crate) fn stream_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

fn normalize_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        }
    }
    m
}

fn uniform_perturbed_init(ny: usize, v: usize) -> Array2<f64> {
    let m = Array2::from_shape_fn((ny, v), |(y, j)| {
        let h = splitmix64((y as u64) << 32 | j as u64) % 4096;
        1.0 + 0.01 * (h as f64 / 4096.0 - 0.5)
    });
    normalize_rows(m)
}

fn random_init(ny: usize, v: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = Array2::from_shape_fn((ny, v), |_| {
        let u: f64 = rng.gen();
        -(1.0 - u).ln().max(1e-12)
    });
    normalize_rows(m)
}

/// Fixed per-problem quantities shared by all restarts.
struct Workspace {
    /// Cell masses, X rows by Y columns.
    pxy: Array2<f64>,
    /// Conditionals p(x|y): Y rows by X columns.
    cond_yx: Array2<f64>,
    px: Array1<f64>,
    py: Array1<f64>,
}

impl Workspace {
    fn build(joint: &JointGrid) -> Result<Self> {
        let pxy = joint.probs.clone();
        let px = Array1::from_iter(pxy.rows().into_iter().map(|r| r.sum()));
        let py = Array1::from_iter((0..pxy.ncols()).map(|c| pxy.column(c).sum()));
        if let Some(y) = py.iter().position(|&p| p <= 0.0) {
            return Err(Error::DegenerateJoint(y));
        }
        let mut cond_yx = pxy.t().to_owned();
        for (yi, mut row) in cond_yx.rows_mut().into_iter().enumerate() {
            let inv = 1.0 / py[yi];
            row.mapv_inplace(|v| v * inv);
        }
        Ok(Workspace {
            pxy,
            cond_yx,
            px,
            py,
        })
    }
}

struct StepStats {
    i_xv: f64,
    i_yv: f64,
    objective: f64,
}

/// Streaming compensated accumulator (Neumaier).
#[derive(Default)]
struct Acc {
    sum: f64,
    comp: f64,
}

impl Acc {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Per-restart reusable buffers.
struct Scratch {
    r: Vec<f64>,
    log_r: Vec<f64>,
    pxv: Array2<f64>,
    cross: Array2<f64>,
}

impl Scratch {
    fn new(nx: usize, ny: usize, v: usize) -> Self {
        Scratch {
            r: vec![0.0; v],
            log_r: vec![0.0; v],
            pxv: Array2::zeros((nx, v)),
            cross: Array2::zeros((ny, v)),
        }
    }
}

/// One self-consistent round: evaluate the objective of `q` (with marginal
/// and decoder consistent with it) and write the updated kernel into `next`.
fn plain_step(
    ws: &Workspace,
    lambda: f64,
    q: &Array2<f64>,
    s: &mut Scratch,
    next: &mut Array2<f64>,
) -> StepStats {
    let (ny, v_size) = q.dim();
    // V marginal under the current kernel.
    s.r.fill(0.0);
    for yi in 0..ny {
        let p = ws.py[yi];
        let row = q.row(yi);
        for (rv, &qv) in s.r.iter_mut().zip(row.iter()) {
            *rv += p * qv;
        }
    }
    // Joint masses over (X, V); also the decoder numerator.
    ndarray::linalg::general_mat_mul(1.0, &ws.pxy, q, 0.0, &mut s.pxv);

    let mut acc_yv = Acc::default();
    for yi in 0..ny {
        let p = ws.py[yi];
        for (vi, &qv) in q.row(yi).iter().enumerate() {
            if qv > 0.0 && s.r[vi] > 0.0 {
                acc_yv.add(p * qv * (qv / s.r[vi]).log2());
            }
        }
    }
    let i_yv = acc_yv.total().max(0.0);

    let mut acc_xv = Acc::default();
    for (xi, row) in s.pxv.rows().into_iter().enumerate() {
        let px = ws.px[xi];
        if px <= 0.0 {
            continue;
        }
        for (vi, &m) in row.iter().enumerate() {
            if m > 0.0 && s.r[vi] > 0.0 {
                acc_xv.add(m * (m / (px * s.r[vi])).log2());
            }
        }
    }
    let i_xv = acc_xv.total().max(0.0);
    let stats = StepStats {
        i_xv,
        i_yv,
        objective: i_yv - lambda * i_xv,
    };

    // Decoder in log form, in place: pxv[x, v] <- log2 p(x|v), floored.
    for (vi, rv) in s.r.iter().enumerate() {
        let rv = *rv;
        for xi in 0..s.pxv.nrows() {
            let m = s.pxv[[xi, vi]];
            s.pxv[[xi, vi]] = if rv > 0.0 {
                (m / rv).max(LOG_FLOOR).log2()
            } else {
                0.0
            };
        }
    }
    // Cross term C[y, v] = sum_x p(x|y) log2 p(x|v).
    ndarray::linalg::general_mat_mul(1.0, &ws.cond_yx, &s.pxv, 0.0, &mut s.cross);
    // Row update: q(v|y) ~ r(v) 2^(lambda * C[y,v]), normalized per row.
    for (lr, rv) in s.log_r.iter_mut().zip(&s.r) {
        *lr = if *rv > 0.0 {
            rv.log2()
        } else {
            f64::NEG_INFINITY
        };
    }
    for yi in 0..ny {
        let cross_row = s.cross.row(yi);
        let mut best = f64::NEG_INFINITY;
        let mut out = next.row_mut(yi);
        for vi in 0..v_size {
            let e = s.log_r[vi] + lambda * cross_row[vi];
            out[vi] = e;
            if e > best {
                best = e;
            }
        }
        let mut sum = 0.0;
        for vi in 0..v_size {
            let e = out[vi];
            let w = if e.is_finite() { (e - best).exp2() } else { 0.0 };
            out[vi] = w;
            sum += w;
        }
        let inv = 1.0 / sum;
        for vi in 0..v_size {
            out[vi] *= inv;
        }
    }
    stats
}

/// Alternating minimization with safeguarded extrapolation in logit space.
///
/// Each outer iteration runs two plain rounds, extrapolates the kernel
/// logits along the secant (row softmax restores the simplex exactly), and
/// keeps the extrapolated point only when its objective does not exceed the
/// plain two-round value. The recorded objective sequence is therefore
/// non-increasing by construction, while the slow boundary-relaxation modes
/// of the plain iteration are traversed in large steps.
fn run_restart(
    ws: &Workspace,
    lambda: f64,
    init: Array2<f64>,
    tol: f64,
    max_iter: usize,
) -> Restart {
    let dim = init.dim();
    let (ny, v_size) = dim;
    let nx = ws.px.len();
    let mut s = Scratch::new(nx, ny, v_size);

    let mut q0 = init;
    let mut q1 = Array2::zeros(dim);
    let mut q2 = Array2::zeros(dim);
    let mut cand = Array2::zeros(dim);
    let mut cand_next = Array2::zeros(dim);

    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    let mut converged = false;
    let mut last = StepStats {
        i_xv: 0.0,
        i_yv: 0.0,
        objective: 0.0,
    };
    let mut iterations = 0;

    let logit = |p: f64| p.max(LOG_FLOOR).log2();

    for iter in 0..max_iter {
        iterations = iter + 1;
        let stats = plain_step(ws, lambda, &q0, &mut s, &mut q1);
        trace.push(stats.objective);
        if (stats.objective - prev).abs() < tol {
            last = stats;
            converged = true;
            break;
        }
        prev = stats.objective;
        last = stats;

        let stats1 = plain_step(ws, lambda, &q1, &mut s, &mut q2);

        // Secant extrapolation on logits.
        let mut r2 = 0.0;
        let mut v2 = 0.0;
        for ((&a, &b), &c) in q0.iter().zip(q1.iter()).zip(q2.iter()) {
            let (la, lb, lc) = (logit(a), logit(b), logit(c));
            let r = lb - la;
            let v = lc - 2.0 * lb + la;
            r2 += r * r;
            v2 += v * v;
        }
        let mut accepted = false;
        if v2 > 1e-300 && r2 > 0.0 {
            let alpha = (-(r2 / v2).sqrt()).clamp(-1e6, -1.0);
            for (o, ((&a, &b), &c)) in cand
                .iter_mut()
                .zip(q0.iter().zip(q1.iter()).zip(q2.iter()))
            {
                let (la, lb, lc) = (logit(a), logit(b), logit(c));
                let r = lb - la;
                let v = lc - 2.0 * lb + la;
                *o = la - 2.0 * alpha * r + alpha * alpha * v;
            }
            // Row softmax back to kernels.
            for mut row in cand.rows_mut() {
                let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    let w = if (*v - best).is_finite() {
                        (*v - best).exp2()
                    } else {
                        0.0
                    };
                    *v = w;
                    sum += w;
                }
                let inv = 1.0 / sum;
                for v in row.iter_mut() {
                    *v *= inv;
                }
            }
            let stats_c = plain_step(ws, lambda, &cand, &mut s, &mut cand_next);
            if stats_c.objective <= stats1.objective {
                std::mem::swap(&mut q0, &mut cand_next);
                accepted = true;
            }
        }
        if !accepted {
            std::mem::swap(&mut q0, &mut q2);
        }
    }

    Restart {
        objective: *trace.last().unwrap_or(&0.0),
        kernel: q0,
        i_xv: last.i_xv,
        i_yv: last.i_yv,
        iterations,
        converged,
        trace,
    }
}

/// Solve the inner bottleneck optimization by multi-restart alternating
/// minimization. Returns the best restart; `converged = false` reports the
/// best-so-far when no restart met the tolerance.
pub fn solve_ib(p: &IBProblem) -> Result<IBSolution> {
    if p.lambda < 1.0 {
        return Err(Error::LambdaRange(p.lambda));
    }
    if p.v_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "auxiliary alphabet needs at least 2 symbols, got {}",
            p.v_size
        )));
    }
    if !(p.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {}",
            p.tol
        )));
    }
    let lambda = p.lambda.min(LAMBDA_CAP);
    let ws = Workspace::build(&p.joint)?;
    let ny = ws.py.len();

    let inits: Vec<Array2<f64>> = std::iter::once(uniform_perturbed_init(ny, p.v_size))
        .chain((0..p.restarts).map(|k| {
            random_init(ny, p.v_size, stream_seed(p.seed, k as u64 + 1))
        }))
        .collect();
    let restarts_used = inits.len();

    let mut results: Vec<Restart> = inits
        .into_par_iter()
        .map(|init| run_restart(&ws, lambda, init, p.tol, p.max_iter))
        .collect();

    // Constant-V baseline: exact objective 0 with the uniform kernel.
    let uniform = Array2::from_elem((ny, p.v_size), 1.0 / p.v_size as f64);
    results.push(Restart {
        kernel: uniform,
        objective: 0.0,
        i_xv: 0.0,
        i_yv: 0.0,
        iterations: 0,
        converged: true,
        trace: vec![0.0],
    });

    let best = results
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.objective
                .partial_cmp(&b.objective)
                .unwrap()
                .then(ia.cmp(ib))
        })
        .map(|(_, r)| r)
        .unwrap();

    Ok(IBSolution {
        kernel: ChannelKernel { rows: best.kernel },
        objective: best.objective,
        i_xv: best.i_xv,
        i_yv: best.i_yv,
        iterations: best.iterations,
        converged: best.converged,
        restarts_used,
        trace: best.trace,
    })
}

/// Solver configuration for the dual-functional wrappers.
#[derive(Debug, Clone, Copy)]
pub struct SolveOpts {
    pub v_size: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub restarts: usize,
    /// Joint resolution for solver calls; density-level functionals keep the
    /// full grid.
    pub joint_n: usize,
}

impl Default for SolveOpts {
    fn default() -> Self {
        SolveOpts {
            v_size: 64,
            tol: 1e-9,
            max_iter: 20_000,
            seed: 0,
            restarts: 8,
            joint_n: 512,
        }
    }
}

impl SolveOpts {
    fn problem(&self, joint: JointGrid, lambda: f64) -> IBProblem {
        IBProblem {
            joint,
            lambda,
            v_size: self.v_size,
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            restarts: self.restarts,
        }
    }
}

/// The dual functional and its ingredients for one input density.
#[derive(Debug, Clone)]
pub struct SLambdaParts {
    pub value: f64,
    pub h_x: f64,
    pub h_y: f64,
    pub solution: IBSolution,
}

/// `s_lambda(X, snr) = -h(X) + lambda h(Y) + inf I(Y;V) - lambda I(X;V)`,
/// with entropies at full density resolution and the infimum solved on the
/// reduced joint.
pub fn s_lambda_parts(
    d: &GridDensity,
    c: ChannelSpec,
    lambda: f64,
    opts: &SolveOpts,
) -> Result<SLambdaParts> {
    let h_x = differential_entropy(d);
    let y = crate::channel::push_through(d, c)?;
    let h_y = differential_entropy(&y);
    let joint = joint_xy_at(d, c, opts.joint_n)?;
    let solution = solve_ib(&opts.problem(joint, lambda))?;
    Ok(SLambdaParts {
        value: -h_x + lambda * h_y + solution.objective,
        h_x,
        h_y,
        solution,
    })
}

pub fn s_lambda(d: &GridDensity, c: ChannelSpec, lambda: f64, opts: &SolveOpts) -> Result<f64> {
    Ok(s_lambda_parts(d, c, lambda, opts)?.value)
}

/// Conditional dual functional with the component index as the condition:
/// the weighted sum of per-component values. At most two components are
/// meaningful for the optimization, mirroring the two-point support that
/// suffices for the conditioning variable.
pub fn s_lambda_conditional(
    components: &[(f64, GridDensity)],
    c: ChannelSpec,
    lambda: f64,
    opts: &SolveOpts,
) -> Result<f64> {
    if components.is_empty() || components.len() > 2 {
        return Err(Error::TooManyComponents(components.len()));
    }
    let wsum: f64 = components.iter().map(|(w, _)| w).sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(Error::WeightSum(wsum));
    }
    let mut total = 0.0;
    for (w, d) in components {
        total += w * s_lambda(d, c, lambda, opts)?;
    }
    Ok(total)
}

/// Upper concave envelope over achievable `(I(Y;V), I(X;V))` pairs collected
/// from a lambda sweep plus quantizer anchors, evaluated at the given
/// output-information budgets. `t_values` must be sorted ascending.
pub fn g_i_curve(
    j: &JointGrid,
    t_values: &[f64],
    opts: &SolveOpts,
    lambdas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if t_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter(
            "budgets must be sorted ascending".into(),
        ));
    }
    if t_values.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidParameter("budgets must be nonnegative".into()));
    }
    let mut points = vec![(0.0f64, 0.0f64)];
    for &lambda in lambdas {
        let sol = solve_ib(&opts.problem(j.clone(), lambda))?;
        points.push((sol.i_yv, sol.i_xv));
    }
    // Quantizer anchors populate the saturation region near I(X;Y).
    for k in [16, 64, j.y_grid.n] {
        if k <= j.y_grid.n {
            let lift = crate::channel::quantize_y(j, k)?;
            points.push((
                crate::channel::mutual_information_of_masses(&lift.yv),
                crate::channel::mutual_information_of_masses(&lift.xv),
            ));
        }
    }
    let hull = upper_concave_hull(points);
    Ok(t_values
        .iter()
        .map(|&t| (t, eval_hull(&hull, t)))
        .collect())
}

fn upper_concave_hull(mut points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for p in points {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    // Dominated trailing points (lower value at higher budget) never help:
    // clip to the running maximum so the envelope is nondecreasing.
    let mut best = f64::NEG_INFINITY;
    for p in &mut hull {
        best = best.max(p.1);
        p.1 = best;
    }
    hull
}

fn eval_hull(hull: &[(f64, f64)], t: f64) -> f64 {
    if hull.is_empty() {
        return 0.0;
    }
    if t <= hull[0].0 {
        return hull[0].1;
    }
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        if t <= b.0 {
            let frac = (t - a.0) / (b.0 - a.0);
            return a.1 + frac * (b.1 - a.1);
        }
    }
    hull.last().unwrap().1
}
