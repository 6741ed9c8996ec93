//! One-dimensional densities sampled on uniform grids.
//!
//! Everything downstream (entropies, Fisher information, channels, the
//! bottleneck solver) consumes the [`GridDensity`] representation built here.
//! Integrals are uniform-step Riemann sums, which for smooth densities with
//! well-covered tails converge far faster than the acceptance tolerances
//! require. Every transform renormalizes and records the pre-normalization
//! mass deficit.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Hard cap on grid sizes produced by convolutions and resampling.
pub const MAX_GRID_POINTS: usize = 1 << 22;

/// Relative tolerance when two grids must share a step.
const STEP_TOL: f64 = 1e-9;

/// A uniform grid of `n` points on `[lo, hi]`, spacing `(hi - lo)/(n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) || n < 2 || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::BadGrid { lo, hi, n });
        }
        Ok(Grid { lo, hi, n })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.lo + self.step() * i as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.point(i))
    }

    /// Index of the grid point nearest to `x` (clamped to the grid).
    pub fn nearest(&self, x: f64) -> usize {
        let i = ((x - self.lo) / self.step()).round();
        (i.max(0.0) as usize).min(self.n - 1)
    }

    /// Grid of `n` points covering `[lo, hi]` padded by `pad` (fraction of
    /// the span) on each side.
    pub fn covering(lo: f64, hi: f64, pad: f64, n: usize) -> Result<Self> {
        let span = hi - lo;
        Grid::new(lo - pad * span, hi + pad * span, n)
    }

    /// Grid with a prescribed step whose points sit on integer multiples of
    /// `step`, covering at least `[lo, hi]`. Alignment makes densities built
    /// with the same step convolvable without interpolation.
    pub fn with_step(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidParameter(format!("step must be > 0, got {step}")));
        }
        let i_lo = (lo / step).floor();
        let i_hi = (hi / step).ceil();
        let n = (i_hi - i_lo) as usize + 1;
        if n > MAX_GRID_POINTS {
            return Err(Error::GridOverflow(n, MAX_GRID_POINTS));
        }
        if n < 2 {
            return Err(Error::BadGrid { lo, hi, n });
        }
        Ok(Grid {
            lo: i_lo * step,
            hi: i_hi * step,
            n,
        })
    }

    pub fn same_step(&self, other: &Grid) -> bool {
        let (a, b) = (self.step(), other.step());
        (a - b).abs() <= STEP_TOL * a.max(b)
    }
}

/// A probability density sampled on a uniform grid.
///
/// Invariants: all values nonnegative and `step * sum(values) == 1` within
/// 1e-9 after construction. `mass_deficit` records `|1 - raw mass|` before
/// the most recent renormalization, as a truncation-error bound.
#[derive(Debug, Clone)]
pub struct GridDensity {
    pub grid: Grid,
    values: Vec<f64>,
    mass_deficit: f64,
}

/// Parameters of a finite Gaussian mixture. Also used as the conditioning
/// variable in conditional checks, with the component index as the condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let spec = MixtureSpec {
            weights,
            means,
            variances,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::MixtureShape);
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        if self.variances.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter("variances must be positive".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::WeightSum(sum));
        }
        Ok(())
    }

    pub fn single(mean: f64, variance: f64) -> Self {
        MixtureSpec {
            weights: vec![1.0],
            means: vec![mean],
            variances: vec![variance],
        }
    }

    /// Support interval `union of mean_i +/- 8 sigma_i`.
    pub fn support(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (mu, var) in self.means.iter().zip(&self.variances) {
            let s = 8.0 * var.sqrt();
            lo = lo.min(mu - s);
            hi = hi.max(mu + s);
        }
        (lo, hi)
    }

    /// Default grid: union support padded 10%, `n` points.
    pub fn default_grid(&self, n: usize) -> Result<Grid> {
        let (lo, hi) = self.support();
        Grid::covering(lo, hi, 0.1, n)
    }

    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .map(|(w, m)| w * m)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(w, (mu, var))| w * (var + mu * mu))
            .sum::<f64>()
            - m * m
    }
}

/// Compensated (Neumaier) summation. Entropy differences at small finite
/// difference steps amplify summation error, so plain `sum()` is not enough.
pub(crate) fn neumaier_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn gauss_pdf(x: f64, mu: f64, sigma2: f64) -> f64 {
    let z = x - mu;
    (-z * z / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt()
}

impl GridDensity {
    /// Build from raw nonnegative samples; renormalizes and records the
    /// pre-normalization deficit.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                grid.n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "density samples must be finite and nonnegative".into(),
            ));
        }
        let mut d = GridDensity {
            grid,
            values,
            mass_deficit: 0.0,
        };
        d.renormalize()?;
        Ok(d)
    }

    fn renormalize(&mut self) -> Result<()> {
        let mass = self.grid.step() * neumaier_sum(self.values.iter().copied());
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "density mass {mass} is not positive"
            )));
        }
        self.mass_deficit = (1.0 - mass).abs();
        let inv = 1.0 / mass;
        for v in &mut self.values {
            *v *= inv;
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `|1 - raw mass|` recorded at the last renormalization.
    pub fn mass_deficit(&self) -> f64 {
        self.mass_deficit
    }

    pub fn step(&self) -> f64 {
        self.grid.step()
    }

    pub fn mean(&self) -> f64 {
        moment(self, 1)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        moment(self, 2) - m * m
    }
}

/// Samples of `N(mu, sigma2)` on `grid`, renormalized.
///
/// The grid must cover `mu +/- 8 sqrt(sigma2)`; otherwise the truncated tail
/// mass is reported as a coverage error.
pub fn gaussian_density(grid: Grid, mu: f64, sigma2: f64) -> Result<GridDensity> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "variance must be positive, got {sigma2}"
        )));
    }
    let s = 8.0 * sigma2.sqrt();
    if grid.lo > mu - s || grid.hi < mu + s {
        return Err(Error::Coverage {
            lo: grid.lo,
            hi: grid.hi,
            need_lo: mu - s,
            need_hi: mu + s,
        });
    }
    let values = grid.points().map(|x| gauss_pdf(x, mu, sigma2)).collect();
    GridDensity::from_values(grid, values)
}

/// Convex combination of component Gaussians, renormalized.
pub fn mixture_density(grid: Grid, spec: &MixtureSpec) -> Result<GridDensity> {
    spec.validate()?;
    let (need_lo, need_hi) = spec.support();
    if grid.lo > need_lo || grid.hi < need_hi {
        return Err(Error::Coverage {
            lo: grid.lo,
            hi: grid.hi,
            need_lo,
            need_hi,
        });
    }
    let values = grid
        .points()
        .map(|x| {
            spec.weights
                .iter()
                .zip(spec.means.iter().zip(&spec.variances))
                .map(|(w, (mu, var))| w * gauss_pdf(x, *mu, *var))
                .sum()
        })
        .collect();
    GridDensity::from_values(grid, values)
}

/// Uniform density on `[a, b]` sampled on `grid`. Samples at the endpoints
/// take the cell-averaged half height, which makes the trapezoid-rule mass
/// exact when the endpoints coincide with grid points.
pub fn uniform_density(grid: Grid, a: f64, b: f64) -> Result<GridDensity> {
    if !(b > a) {
        return Err(Error::InvalidParameter(format!(
            "uniform support must satisfy b > a, got [{a}, {b}]"
        )));
    }
    if grid.lo > a || grid.hi < b {
        return Err(Error::Coverage {
            lo: grid.lo,
            hi: grid.hi,
            need_lo: a,
            need_hi: b,
        });
    }
    let h = 1.0 / (b - a);
    let eps = 0.5 * grid.step();
    let values = grid
        .points()
        .map(|x| {
            if (x - a).abs() < eps * 0.5 || (x - b).abs() < eps * 0.5 {
                0.5 * h
            } else if x > a && x < b {
                h
            } else {
                0.0
            }
        })
        .collect();
    GridDensity::from_values(grid, values)
}

/// Step-weighted Riemann sum of `x^k f(x)`.
pub fn moment(d: &GridDensity, k: u32) -> f64 {
    let step = d.grid.step();
    step * neumaier_sum(
        d.grid
            .points()
            .zip(d.values())
            .map(|(x, f)| x.powi(k as i32) * f),
    )
}

/// Density of `c * X`. The grid scales with `c` (and flips for negative `c`),
/// so no interpolation is involved and the entropy shift `log2 |c|` is exact.
pub fn scale_density(d: &GridDensity, c: f64) -> Result<GridDensity> {
    if c == 0.0 || !c.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale factor must be nonzero and finite, got {c}"
        )));
    }
    let inv = 1.0 / c.abs();
    let (grid, values) = if c > 0.0 {
        let grid = Grid::new(c * d.grid.lo, c * d.grid.hi, d.grid.n)?;
        let values = d.values().iter().map(|f| f * inv).collect();
        (grid, values)
    } else {
        let grid = Grid::new(c * d.grid.hi, c * d.grid.lo, d.grid.n)?;
        let values = d.values().iter().rev().map(|f| f * inv).collect();
        (grid, values)
    };
    GridDensity::from_values(grid, values)
}

/// Density of `X + Z` for independent `X ~ a`, `Z ~ b` via direct discrete
/// convolution. Both inputs must share the same step; the output spans the
/// full combined support, so no mass is lost.
pub fn convolve(a: &GridDensity, b: &GridDensity) -> Result<GridDensity> {
    if !a.grid.same_step(&b.grid) {
        return Err(Error::StepMismatch(a.grid.step(), b.grid.step()));
    }
    let step = a.grid.step();
    let n_out = a.grid.n + b.grid.n - 1;
    if n_out > MAX_GRID_POINTS {
        return Err(Error::GridOverflow(n_out, MAX_GRID_POINTS));
    }
    let (short, long) = if a.grid.n <= b.grid.n { (a, b) } else { (b, a) };
    let sv = short.values();
    let lv = long.values();
    let mut out = vec![0.0; n_out];
    // out[k] = step * sum_i short[i] * long[k - i]
    for (i, &s) in sv.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let row = &mut out[i..i + lv.len()];
        for (o, &l) in row.iter_mut().zip(lv) {
            *o += s * l;
        }
    }
    for o in &mut out {
        *o *= step;
    }
    let lo = a.grid.lo + b.grid.lo;
    let hi = a.grid.hi + b.grid.hi;
    let grid = Grid { lo, hi, n: n_out };
    GridDensity::from_values(grid, out)
}

/// FFT-backed convolution: the performance path for large grids. Produces
/// the same grid as [`convolve`] with values matching it to 1e-12; the
/// direct sum remains the correctness oracle.
pub fn convolve_fft(a: &GridDensity, b: &GridDensity) -> Result<GridDensity> {
    use rustfft::num_complex::Complex;
    if !a.grid.same_step(&b.grid) {
        return Err(Error::StepMismatch(a.grid.step(), b.grid.step()));
    }
    let step = a.grid.step();
    let n_out = a.grid.n + b.grid.n - 1;
    if n_out > MAX_GRID_POINTS {
        return Err(Error::GridOverflow(n_out, MAX_GRID_POINTS));
    }
    let size = n_out.next_power_of_two();
    let mut planner = rustfft::FftPlanner::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let mut fa: Vec<Complex<f64>> = a
        .values()
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut fb: Vec<Complex<f64>> = b
        .values()
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    forward.process(&mut fa);
    forward.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inverse.process(&mut fa);
    let scale = step / size as f64;
    let out: Vec<f64> = fa[..n_out]
        .iter()
        .map(|c| (c.re * scale).max(0.0))
        .collect();
    let grid = Grid {
        lo: a.grid.lo + b.grid.lo,
        hi: a.grid.hi + b.grid.hi,
        n: n_out,
    };
    GridDensity::from_values(grid, out)
}

/// Density of `X + N(0, sigma2)`: convolution with a Gaussian kernel built on
/// a grid with the same step as `d`.
pub fn add_gaussian_noise(d: &GridDensity, sigma2: f64) -> Result<GridDensity> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    let s = 8.0 * sigma2.sqrt();
    let kernel_grid = Grid::with_step(-s, s, d.grid.step())?;
    let kernel = gaussian_density(kernel_grid, 0.0, sigma2)?;
    convolve(d, &kernel)
}

/// Density of `(X + X') / sqrt(2)` for an independent copy `X'`.
pub fn self_convolve_normalized(d: &GridDensity) -> Result<GridDensity> {
    let sum = convolve(d, d)?;
    scale_density(&sum, 1.0 / std::f64::consts::SQRT_2)
}

/// Linear-interpolation resample onto `grid`, then renormalize.
pub fn resample(d: &GridDensity, grid: Grid) -> Result<GridDensity> {
    let step = d.grid.step();
    let values = grid
        .points()
        .map(|x| {
            if x < d.grid.lo || x > d.grid.hi {
                return 0.0;
            }
            let t = (x - d.grid.lo) / step;
            let i = (t.floor() as usize).min(d.grid.n - 2);
            let frac = t - i as f64;
            d.values()[i] * (1.0 - frac) + d.values()[i + 1] * frac
        })
        .collect();
    GridDensity::from_values(grid, values)
}

/// Downsample to `n` points over the same support.
pub fn downsample(d: &GridDensity, n: usize) -> Result<GridDensity> {
    if n >= d.grid.n {
        return Ok(d.clone());
    }
    resample(d, Grid::new(d.grid.lo, d.grid.hi, n)?)
}

/// On-disk density description: either explicit samples on a grid or a
/// Gaussian mixture to be sampled on a generated grid.
///
/// ```json
/// {"grid": {"lo": -10.0, "hi": 10.0, "n": 2001}, "values": [...]}
/// {"mixture": {"weights": [1.0], "means": [0.0], "variances": [1.0]}}
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DensityFile {
    Sampled { grid: Grid, values: Vec<f64> },
    Mixture { mixture: MixtureSpec },
}

/// A density loaded from a file plus the mixture description when the file
/// was a mixture (used for closed-form comparisons downstream).
#[derive(Debug, Clone)]
pub struct LoadedDensity {
    pub density: GridDensity,
    pub mixture: Option<MixtureSpec>,
}

/// Parse the JSON density format. Mixture files are sampled on their
/// default grid with `grid_n` points padded by `pad`.
pub fn parse_density(text: &str, grid_n: usize, pad: f64) -> Result<LoadedDensity> {
    let file: DensityFile =
        serde_json::from_str(text).map_err(|e| Error::DensityFile(e.to_string()))?;
    match file {
        DensityFile::Sampled { grid, values } => {
            Grid::new(grid.lo, grid.hi, grid.n)?;
            Ok(LoadedDensity {
                density: GridDensity::from_values(grid, values)?,
                mixture: None,
            })
        }
        DensityFile::Mixture { mixture } => {
            mixture.validate()?;
            let (lo, hi) = mixture.support();
            let grid = Grid::covering(lo, hi, pad, grid_n)?;
            Ok(LoadedDensity {
                density: mixture_density(grid, &mixture)?,
                mixture: Some(mixture),
            })
        }
    }
}
