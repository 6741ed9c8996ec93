//! The additive Gaussian channel `Y = sqrt(snr) X + Z` and Markov-valid
//! auxiliary variables built on its output.
//!
//! Auxiliaries come in three certified-Markov families, all acting on `Y`
//! alone: Gaussian degradation `V = Y + U`, quantile quantization, and
//! erasure. Each family yields the pair of joints `(X,V)` and `(Y,V)` needed
//! by the inequality checks; data processing `I(X;V) <= I(Y;V)` holds for
//! them by construction.

use crate::error::{Error, Result};
use crate::functionals::{mutual_information_raw, JointGrid};
use crate::grid::{
    convolve, downsample, gaussian_density, scale_density, Grid, GridDensity, MixtureSpec,
};
use ndarray::Array2;

/// Gaussian channel parameters: `Y = sqrt(snr) X + Z`, `Z ~ N(0, noise_sigma2)`.
#[derive(Debug, Clone, Copy)]
pub struct ChannelSpec {
    pub snr: f64,
    pub noise_sigma2: f64,
}

impl ChannelSpec {
    pub fn new(snr: f64, noise_sigma2: f64) -> Result<Self> {
        if !(snr >= 0.0) || !snr.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "snr must be nonnegative, got {snr}"
            )));
        }
        if !(noise_sigma2 > 0.0) || !noise_sigma2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be positive, got {noise_sigma2}"
            )));
        }
        Ok(ChannelSpec { snr, noise_sigma2 })
    }

    /// Unit-noise channel at the given snr.
    pub fn with_unit_noise(snr: f64) -> Result<Self> {
        ChannelSpec::new(snr, 1.0)
    }
}

fn gauss_pdf(x: f64, sigma2: f64) -> f64 {
    (-x * x / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt()
}

/// Marginal density of `Y = sqrt(snr) X + Z`: scale then convolve with the
/// noise. At `snr = 0` the output is the noise marginal itself.
pub fn push_through(d: &GridDensity, c: ChannelSpec) -> Result<GridDensity> {
    if c.snr == 0.0 {
        let s = 8.0 * c.noise_sigma2.sqrt();
        let grid = Grid::with_step(-s, s, d.grid.step())?;
        return gaussian_density(grid, 0.0, c.noise_sigma2);
    }
    let scaled = scale_density(d, c.snr.sqrt())?;
    let s = 8.0 * c.noise_sigma2.sqrt();
    let noise_grid = Grid::with_step(-s, s, scaled.grid.step())?;
    let noise = gaussian_density(noise_grid, 0.0, c.noise_sigma2)?;
    convolve(&scaled, &noise)
}

fn joint_from_kernel(
    d: &GridDensity,
    y_grid: Grid,
    kernel: impl Fn(f64, f64) -> f64,
) -> Result<JointGrid> {
    let dx = d.grid.step();
    let dy = y_grid.step();
    let mut probs = Array2::zeros((d.grid.n, y_grid.n));
    for (i, (x, &fx)) in d.grid.points().zip(d.values()).enumerate() {
        if fx == 0.0 {
            continue;
        }
        for (j, y) in y_grid.points().enumerate() {
            probs[[i, j]] = fx * kernel(x, y) * dx * dy;
        }
    }
    let mass: f64 = probs.iter().sum();
    let deficit = (1.0 - mass).abs();
    if deficit > 1e-6 {
        return Err(Error::Truncation(deficit, 1e-6));
    }
    JointGrid::new(d.grid, y_grid, probs)
}

/// Discretized joint of `(X, Y)` with cell masses
/// `f(x_i) phi(y_j - sqrt(snr) x_i) dx dy`, renormalized. The `Y` grid is
/// exactly the `push_through` output grid, so the column marginal matches it.
pub fn joint_xy(d: &GridDensity, c: ChannelSpec) -> Result<JointGrid> {
    let y = push_through(d, c)?;
    let root = c.snr.sqrt();
    joint_from_kernel(d, y.grid, |x, yv| gauss_pdf(yv - root * x, c.noise_sigma2))
}

/// Same joint constructed directly at reduced resolution (`n x n`), for the
/// solver. The input is downsampled; the `Y` grid spans the channel output
/// support at `n` points.
pub fn joint_xy_at(d: &GridDensity, c: ChannelSpec, n: usize) -> Result<JointGrid> {
    let dx = downsample(d, n)?;
    let root = c.snr.sqrt();
    let pad = 8.0 * c.noise_sigma2.sqrt();
    let (a, b) = if root > 0.0 {
        (root * dx.grid.lo, root * dx.grid.hi)
    } else {
        (0.0, 0.0)
    };
    let y_grid = Grid::new(a.min(b) - pad, a.max(b) + pad, n)?;
    joint_from_kernel(&dx, y_grid, |x, yv| gauss_pdf(yv - root * x, c.noise_sigma2))
}

/// Joint of `(X, Y)` for the additive channel `Y = X + W` with `W` an
/// arbitrary Gaussian mixture, at explicit resolution. Supports the
/// exploratory non-Gaussian-noise mode.
pub fn joint_additive_mixture(d: &GridDensity, w: &MixtureSpec, n: usize) -> Result<JointGrid> {
    w.validate()?;
    let dx = downsample(d, n)?;
    let (w_lo, w_hi) = w.support();
    let y_grid = Grid::new(dx.grid.lo + w_lo, dx.grid.hi + w_hi, n)?;
    joint_from_kernel(&dx, y_grid, |x, yv| {
        w.weights
            .iter()
            .zip(w.means.iter().zip(&w.variances))
            .map(|(wt, (mu, var))| {
                let z = yv - x - mu;
                wt * (-z * z / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
            })
            .sum()
    })
}

/// Marginal density of `V = Y + U`, `U ~ N(0, u_sigma2)`.
pub fn degrade_with_noise(y: &GridDensity, u_sigma2: f64) -> Result<GridDensity> {
    crate::grid::add_gaussian_noise(y, u_sigma2)
}

/// Joint mass matrices of an auxiliary `V` against both ends of the chain
/// `X -> Y -> V`. Rows index the retained variable's grid, columns the `V`
/// alphabet (a grid for continuous families, bins or cells otherwise).
#[derive(Debug, Clone)]
pub struct AuxiliaryLift {
    pub xv: Array2<f64>,
    pub yv: Array2<f64>,
}

/// Mutual information in bits of a nonnegative mass matrix (normalized
/// internally).
pub fn mutual_information_of_masses(m: &Array2<f64>) -> f64 {
    mutual_information_raw(m)
}

/// The three Markov-valid auxiliary families on `Y`, plus the constant map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VFamily {
    /// `V = Y + U`, `U ~ N(0, u_sigma2)`.
    Gaussian { u_sigma2: f64 },
    /// `V` = index of the equal-probability bin of `Y` among `k` bins.
    Quantize { k: usize },
    /// `V = Y`'s cell with probability `keep`, erased otherwise.
    Erasure { keep: f64 },
    /// `V` carries no information.
    Constant,
}

impl VFamily {
    pub fn lift(&self, j: &JointGrid) -> Result<AuxiliaryLift> {
        match *self {
            VFamily::Gaussian { u_sigma2 } => lift_gaussian(j, u_sigma2),
            VFamily::Quantize { k } => lift_quantize(j, k),
            VFamily::Erasure { keep } => lift_erasure(j, keep),
            VFamily::Constant => Ok(lift_constant(j)),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            VFamily::Gaussian { u_sigma2 } => format!("gaussian(u={u_sigma2})"),
            VFamily::Quantize { k } => format!("quantize(k={k})"),
            VFamily::Erasure { keep } => format!("erasure(keep={keep})"),
            VFamily::Constant => "constant".to_string(),
        }
    }
}

/// Gaussian degradation `V = Y + U` lifted to joints over `(X,V)` and
/// `(Y,V)`. The `V` grid reuses the `Y` span extended by `8 sqrt(u)` at the
/// same point count; the kernel rows are renormalized exactly so the Markov
/// factorization is preserved cell-by-cell.
pub fn joint_yv_gaussian(j: &JointGrid, u_sigma2: f64) -> Result<AuxiliaryLift> {
    lift_gaussian(j, u_sigma2)
}

fn lift_gaussian(j: &JointGrid, u_sigma2: f64) -> Result<AuxiliaryLift> {
    if !(u_sigma2 > 0.0) || !u_sigma2.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "degradation variance must be positive, got {u_sigma2}"
        )));
    }
    let pad = 8.0 * u_sigma2.sqrt();
    let v_grid = Grid::new(j.y_grid.lo - pad, j.y_grid.hi + pad, j.y_grid.n)?;
    let dv = v_grid.step();
    let ny = j.y_grid.n;
    let nv = v_grid.n;
    // Row-stochastic kernel K[y, v] = phi_u(v - y) dv, rows renormalized.
    let mut kernel = Array2::zeros((ny, nv));
    for (yi, y) in j.y_grid.points().enumerate() {
        let mut row_sum = 0.0;
        for (vi, v) in v_grid.points().enumerate() {
            let p = gauss_pdf(v - y, u_sigma2) * dv;
            kernel[[yi, vi]] = p;
            row_sum += p;
        }
        let inv = 1.0 / row_sum;
        for vi in 0..nv {
            kernel[[yi, vi]] *= inv;
        }
    }
    let xv = j.probs.dot(&kernel);
    let py: Vec<f64> = (0..ny).map(|c| j.probs.column(c).sum()).collect();
    let mut yv = kernel;
    for (yi, mut row) in yv.rows_mut().into_iter().enumerate() {
        let p = py[yi];
        for v in row.iter_mut() {
            *v *= p;
        }
    }
    Ok(AuxiliaryLift { xv, yv })
}

/// Quantile bin index of every `Y` cell, nondecreasing across the grid.
fn quantile_bins(py: &[f64], k: usize) -> Vec<usize> {
    let total: f64 = py.iter().sum();
    let mut bins = Vec::with_capacity(py.len());
    let mut cum = 0.0;
    for &p in py {
        let b = ((cum + 0.5 * p) / total * k as f64).floor() as usize;
        bins.push(b.min(k - 1));
        cum += p;
    }
    bins
}

/// Deterministic quantile quantizer of `Y` into `k` symbols, lifted to
/// `(X,V)` and `(Y,V)` mass matrices.
pub fn quantize_y(j: &JointGrid, k: usize) -> Result<AuxiliaryLift> {
    lift_quantize(j, k)
}

fn lift_quantize(j: &JointGrid, k: usize) -> Result<AuxiliaryLift> {
    let ny = j.y_grid.n;
    if k == 0 {
        return Err(Error::InvalidParameter("bin count must be >= 1".into()));
    }
    if k > ny {
        return Err(Error::QuantizerResolution(k, ny));
    }
    let py: Vec<f64> = (0..ny).map(|c| j.probs.column(c).sum()).collect();
    let bins = if k == ny {
        // One bin per cell: the identity quantizer.
        (0..ny).collect()
    } else {
        quantile_bins(&py, k)
    };
    let nx = j.x_grid.n;
    let mut xv = Array2::zeros((nx, k));
    let mut yv = Array2::zeros((ny, k));
    for yi in 0..ny {
        let b = bins[yi];
        yv[[yi, b]] = py[yi];
        for xi in 0..nx {
            xv[[xi, b]] += j.probs[[xi, yi]];
        }
    }
    Ok(AuxiliaryLift { xv, yv })
}

fn lift_erasure(j: &JointGrid, keep: f64) -> Result<AuxiliaryLift> {
    if !(0.0..=1.0).contains(&keep) {
        return Err(Error::InvalidParameter(format!(
            "erasure keep probability must lie in [0,1], got {keep}"
        )));
    }
    let nx = j.x_grid.n;
    let ny = j.y_grid.n;
    // V alphabet: one symbol per Y cell plus the erasure symbol (last column).
    let mut xv = Array2::zeros((nx, ny + 1));
    let mut yv = Array2::zeros((ny, ny + 1));
    let py: Vec<f64> = (0..ny).map(|c| j.probs.column(c).sum()).collect();
    for yi in 0..ny {
        yv[[yi, yi]] = keep * py[yi];
        yv[[yi, ny]] = (1.0 - keep) * py[yi];
        for xi in 0..nx {
            xv[[xi, yi]] += keep * j.probs[[xi, yi]];
            xv[[xi, ny]] += (1.0 - keep) * j.probs[[xi, yi]];
        }
    }
    Ok(AuxiliaryLift { xv, yv })
}

fn lift_constant(j: &JointGrid) -> AuxiliaryLift {
    let nx = j.x_grid.n;
    let ny = j.y_grid.n;
    let mut xv = Array2::zeros((nx, 1));
    let mut yv = Array2::zeros((ny, 1));
    for xi in 0..nx {
        xv[[xi, 0]] = j.probs.row(xi).sum();
    }
    for yi in 0..ny {
        yv[[yi, 0]] = j.probs.column(yi).sum();
    }
    AuxiliaryLift { xv, yv }
}
