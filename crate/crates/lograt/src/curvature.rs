//! Curvature analysis of log-ratios of two fitted concentration curves.
//!
//! For fits `f₁`, `f₂` the log-ratio `g = log(f₁/f₂)` is shifted and scaled
//! to span [0, 1] with scaling constant `c = 1/(max g − min g)` (1 if `g` is
//! constant), and its curvature
//!
//! ```text
//!   κ(x) = |c·g''(x)| / (1 + (c·g'(x))²)^{3/2}
//! ```
//!
//! is evaluated on a dense grid, where `g'` and `g''` come from central
//! finite differences of the response-scale fits:
//!
//! ```text
//!   g'  = f₁'/f₁ − f₂'/f₂
//!   g'' = f₁''/f₁ − (f₁'/f₁)² − f₂''/f₂ + (f₂'/f₂)²
//! ```
//!
//! Wherever κ exceeds the threshold `𝒯 = mean(κ) + sd(κ)`, the crossing
//! positions bound exceedance intervals; the mean over intervals of the
//! squared peak excess `(κ − 𝒯)₊²` is the c-value, the scale-free score by
//! which element pairs are ranked. High narrow κ peaks signal rapid spatial
//! change of the ratio, the anomaly signature of interest.

use thiserror::Error;

use crate::gam::{PredictScale, SmoothFit};

/// Default number of evaluation points.
pub const DEFAULT_GRID_POINTS: usize = 3000;
/// Default finite-difference step.
pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Log-ratios whose total variation stays below this are treated as constant:
/// their scaling constant is 1 and they rank lowest by construction.
const FLAT_RANGE_TOLERANCE: f64 = 1e-12;
/// Curvature vectors constant to within this (relative) range have a
/// degenerate threshold (σ = 0, κ ≡ 𝒯); they carry no localized anomaly and
/// produce an empty crossing set.
const FLAT_KAPPA_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CurvatureError {
    #[error("grid needs at least 100 points, got {0}")]
    GridTooCoarse(usize),
    #[error("finite-difference step must lie in (0, 0.1), got {0}")]
    BadEpsilon(f64),
    #[error("curvature of pair {0}/{1} is not finite")]
    NonFiniteCurvature(String, String),
}

/// Equispaced evaluation grid spanning [0, 1] inclusive, with the step used
/// for finite-difference derivatives.
#[derive(Debug, Clone)]
pub struct EvaluationGrid {
    points: Vec<f64>,
    epsilon: f64,
}

impl EvaluationGrid {
    pub fn new(n: usize, epsilon: f64) -> Result<Self, CurvatureError> {
        if n < 100 {
            return Err(CurvatureError::GridTooCoarse(n));
        }
        if !(epsilon > 0.0 && epsilon < 0.1) {
            return Err(CurvatureError::BadEpsilon(epsilon));
        }
        let points = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        Ok(Self { points, epsilon })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Default for EvaluationGrid {
    fn default() -> Self {
        Self::new(DEFAULT_GRID_POINTS, DEFAULT_EPSILON).unwrap()
    }
}

/// Response-scale samples of one fitted curve at every grid point and at the
/// two finite-difference offsets.
#[derive(Debug, Clone)]
pub struct CurveSamples {
    pub center: Vec<f64>,
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
}

impl CurveSamples {
    pub fn from_fit(fit: &SmoothFit, grid: &EvaluationGrid) -> Self {
        Self::from_function(grid, |x| fit.predict(x, PredictScale::Response))
    }

    /// Samples an arbitrary positive function; offsets beyond [0, 1] rely on
    /// the function being defined there (fits extrapolate linearly in η).
    pub fn from_function(grid: &EvaluationGrid, f: impl Fn(f64) -> f64) -> Self {
        let eps = grid.epsilon();
        let center = grid.points().iter().map(|&x| f(x)).collect();
        let forward = grid.points().iter().map(|&x| f(x + eps)).collect();
        let backward = grid.points().iter().map(|&x| f(x - eps)).collect();
        Self {
            center,
            forward,
            backward,
        }
    }

    /// The same curve multiplied by a positive constant.
    pub fn scaled(&self, k: f64) -> Self {
        let scale = |v: &Vec<f64>| v.iter().map(|x| k * x).collect();
        Self {
            center: scale(&self.center),
            forward: scale(&self.forward),
            backward: scale(&self.backward),
        }
    }

    /// Central-difference first and second derivatives at the grid points.
    pub fn derivatives(&self, epsilon: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.center.len();
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        for i in 0..n {
            d1.push((self.forward[i] - self.backward[i]) / (2.0 * epsilon));
            d2.push((self.forward[i] - 2.0 * self.center[i] + self.backward[i]) / (epsilon * epsilon));
        }
        (d1, d2)
    }

    /// Relative derivatives f'/f and f''/f − (f'/f)², the two quantities the
    /// log-ratio derivatives are built from. Both are invariant under
    /// rescaling of the curve.
    fn log_derivatives(&self, epsilon: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.center.len();
        let mut r1 = Vec::with_capacity(n);
        let mut r2 = Vec::with_capacity(n);
        for i in 0..n {
            let f = self.center[i];
            let d1 = (self.forward[i] - self.backward[i]) / (2.0 * epsilon) / f;
            let d2 = (self.forward[i] - 2.0 * f + self.backward[i]) / (epsilon * epsilon) / f;
            r1.push(d1);
            r2.push(d2 - d1 * d1);
        }
        (r1, r2)
    }
}

/// Finite-difference derivatives of a fit on the response scale, per the
/// pipeline's default derivative route.
pub fn numeric_derivatives(fit: &SmoothFit, grid: &EvaluationGrid) -> (Vec<f64>, Vec<f64>) {
    CurveSamples::from_fit(fit, grid).derivatives(grid.epsilon())
}

/// Exact spline derivatives on the response scale via the chain rule
/// `f' = η'f`, `f'' = (η'' + η'²)f`. Validation route for the
/// finite-difference default.
pub fn analytic_derivatives(fit: &SmoothFit, grid: &EvaluationGrid) -> (Vec<f64>, Vec<f64>) {
    let mut d1 = Vec::with_capacity(grid.len());
    let mut d2 = Vec::with_capacity(grid.len());
    for &x in grid.points() {
        let f = fit.predict(x, PredictScale::Response);
        let e1 = fit.linear_derivative(x, 1);
        let e2 = fit.linear_derivative(x, 2);
        d1.push(e1 * f);
        d2.push((e2 + e1 * e1) * f);
    }
    (d1, d2)
}

/// Shifted/scaled log-ratio of two curves on a grid, with its first two
/// derivatives.
#[derive(Debug, Clone)]
pub struct LogRatioCurve {
    /// Element symbols of numerator and denominator.
    pub pair: (String, String),
    /// `g = log(f₁/f₂)` at the grid points.
    pub g: Vec<f64>,
    /// `min g`; the shift bringing the scaled curve onto [0, 1].
    pub shift: f64,
    /// Scaling constant `c`.
    pub scale: f64,
    /// `g'` at the grid points.
    pub g1: Vec<f64>,
    /// `g''` at the grid points.
    pub g2: Vec<f64>,
}

impl LogRatioCurve {
    /// Builds the curve from response-scale samples, computing the scaling
    /// constant from the observed range of `g`.
    pub fn from_samples(
        pair: (String, String),
        s1: &CurveSamples,
        s2: &CurveSamples,
        grid: &EvaluationGrid,
    ) -> Self {
        Self::build(pair, s1, s2, grid, None)
    }

    /// Same, with the scaling constant pinned by the caller (used to check
    /// the curvature machinery against closed-form curves).
    pub fn from_samples_with_scale(
        pair: (String, String),
        s1: &CurveSamples,
        s2: &CurveSamples,
        grid: &EvaluationGrid,
        scale: f64,
    ) -> Self {
        Self::build(pair, s1, s2, grid, Some(scale))
    }

    fn build(
        pair: (String, String),
        s1: &CurveSamples,
        s2: &CurveSamples,
        grid: &EvaluationGrid,
        forced_scale: Option<f64>,
    ) -> Self {
        let n = grid.len();
        // Pointwise ratio; the log-ratio range is derived from its extremes so
        // that rescaling either curve cancels in the quotient exactly.
        let mut ratio = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            let r = s1.center[i] / s2.center[i];
            ratio.push(r);
            g.push(r.ln());
        }
        let rmax = ratio.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let rmin = ratio.iter().cloned().fold(f64::INFINITY, f64::min);
        let span = (rmax / rmin).ln();
        let scale = forced_scale.unwrap_or(if span.abs() <= FLAT_RANGE_TOLERANCE {
            1.0
        } else {
            1.0 / span.abs()
        });
        let shift = g.iter().cloned().fold(f64::INFINITY, f64::min);

        let eps = grid.epsilon();
        let (r1a, r2a) = s1.log_derivatives(eps);
        let (r1b, r2b) = s2.log_derivatives(eps);
        let g1: Vec<f64> = r1a.iter().zip(&r1b).map(|(a, b)| a - b).collect();
        let g2: Vec<f64> = r2a.iter().zip(&r2b).map(|(a, b)| a - b).collect();

        Self {
            pair,
            g,
            shift,
            scale,
            g1,
            g2,
        }
    }

    /// The shifted and scaled values `c·(g − min g)`, spanning [0, 1] for
    /// non-constant curves.
    pub fn scaled_values(&self) -> Vec<f64> {
        self.g.iter().map(|v| self.scale * (v - self.shift)).collect()
    }
}

/// Evaluates the log-ratio curve of two fits on the grid.
pub fn log_ratio_curve(fit1: &SmoothFit, fit2: &SmoothFit, grid: &EvaluationGrid) -> LogRatioCurve {
    let s1 = CurveSamples::from_fit(fit1, grid);
    let s2 = CurveSamples::from_fit(fit2, grid);
    LogRatioCurve::from_samples((fit1.element.clone(), fit2.element.clone()), &s1, &s2, grid)
}

/// Curvature of the shifted and scaled log-ratio at every grid point.
pub fn curvature(curve: &LogRatioCurve) -> Vec<f64> {
    let c = curve.scale;
    curve
        .g1
        .iter()
        .zip(&curve.g2)
        .map(|(&d1, &d2)| {
            let s = c * d1;
            (c * d2).abs() / (1.0 + s * s).powf(1.5)
        })
        .collect()
}

/// Threshold `𝒯 = mean(κ) + sd(κ)` (population standard deviation over the
/// grid).
pub fn threshold(kappa: &[f64]) -> f64 {
    let n = kappa.len() as f64;
    let mean = kappa.iter().sum::<f64>() / n;
    let var = kappa.iter().map(|k| (k - mean) * (k - mean)).sum::<f64>() / n;
    mean + var.sqrt()
}

/// Maximal runs of grid indices with `κ ≥ 𝒯`, paired with the interpolated
/// crossing positions that bound them.
fn exceedance_runs(kappa: &[f64], thresh: f64, grid: &EvaluationGrid) -> Vec<(usize, usize, f64, f64)> {
    let points = grid.points();
    let n = kappa.len();
    let kmax = kappa.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kmin = kappa.iter().cloned().fold(f64::INFINITY, f64::min);
    if kmax - kmin <= FLAT_KAPPA_TOLERANCE * kmax.abs().max(1.0) {
        // Degenerate: σ = 0 and κ ≡ 𝒯 everywhere.
        return Vec::new();
    }
    let mut runs = Vec::new();
    let mut i = 0;
    while i < n {
        if kappa[i] < thresh {
            i += 1;
            continue;
        }
        let start_idx = i;
        while i + 1 < n && kappa[i + 1] >= thresh {
            i += 1;
        }
        let end_idx = i;
        // Entry crossing: the boundary point itself, or the linear
        // interpolation between the last below-threshold point and the first
        // above-threshold one (exact when κ hits 𝒯 on a grid point).
        let start = if start_idx == 0 {
            points[0]
        } else {
            let (k0, k1) = (kappa[start_idx - 1], kappa[start_idx]);
            let t = (thresh - k0) / (k1 - k0);
            points[start_idx - 1] + t * (points[start_idx] - points[start_idx - 1])
        };
        let end = if end_idx == n - 1 {
            points[n - 1]
        } else {
            let (k0, k1) = (kappa[end_idx], kappa[end_idx + 1]);
            let t = (k0 - thresh) / (k0 - k1);
            points[end_idx] + t * (points[end_idx + 1] - points[end_idx])
        };
        runs.push((start_idx, end_idx, start, end));
        i += 1;
    }
    runs
}

/// Ordered crossing set: alternating entry/exit positions of the exceedance
/// intervals (grid boundaries included when κ starts or ends above 𝒯).
/// Always has even cardinality.
pub fn crossing_set(kappa: &[f64], thresh: f64, grid: &EvaluationGrid) -> Vec<f64> {
    exceedance_runs(kappa, thresh, grid)
        .into_iter()
        .flat_map(|(_, _, start, end)| [start, end])
        .collect()
}

/// The c-value: mean over exceedance intervals of the squared peak excess
/// `max (κ − 𝒯)₊²`. Zero when the crossing set is empty.
///
/// Peaks are taken over the grid points inside each interval; the
/// interpolated interval endpoints sit exactly at `κ = 𝒯` and contribute
/// zero excess.
pub fn c_value(kappa: &[f64], thresh: f64, crossings: &[f64], grid: &EvaluationGrid) -> f64 {
    debug_assert!(crossings.len() % 2 == 0, "crossing set must have even size");
    if crossings.is_empty() {
        return 0.0;
    }
    let points = grid.points();
    let l = crossings.len() as f64;
    let mut total = 0.0;
    for pair in crossings.chunks_exact(2) {
        let (start, end) = (pair[0], pair[1]);
        let lo = points.partition_point(|&x| x < start);
        let mut peak = 0.0f64;
        for i in lo..points.len() {
            if points[i] > end {
                break;
            }
            peak = peak.max(kappa[i] - thresh);
        }
        total += peak.max(0.0).powi(2);
    }
    2.0 * total / l
}

/// Full curvature profile of one element pair.
#[derive(Debug, Clone)]
pub struct CurvatureProfile {
    pub pair: (String, String),
    pub kappa: Vec<f64>,
    pub threshold: f64,
    /// Ordered crossing positions; even cardinality.
    pub crossings: Vec<f64>,
    /// Exceedance windows in normalized position units.
    pub intervals: Vec<(f64, f64)>,
    pub c_value: f64,
}

/// Computes curvature, threshold, crossing set and c-value for a log-ratio
/// curve.
pub fn curvature_profile(
    curve: &LogRatioCurve,
    grid: &EvaluationGrid,
) -> Result<CurvatureProfile, CurvatureError> {
    let kappa = curvature(curve);
    if kappa.iter().any(|k| !k.is_finite()) {
        return Err(CurvatureError::NonFiniteCurvature(
            curve.pair.0.clone(),
            curve.pair.1.clone(),
        ));
    }
    let thresh = threshold(&kappa);
    let runs = exceedance_runs(&kappa, thresh, grid);
    let crossings: Vec<f64> = runs.iter().flat_map(|&(_, _, s, e)| [s, e]).collect();
    let intervals: Vec<(f64, f64)> = runs.iter().map(|&(_, _, s, e)| (s, e)).collect();
    let value = c_value(&kappa, thresh, &crossings, grid);
    Ok(CurvatureProfile {
        pair: curve.pair.clone(),
        kappa,
        threshold: thresh,
        crossings,
        intervals,
        c_value: value,
    })
}

/// Exceedance windows mapped back to original distance units; these are the
/// predicted mineralization zones.
pub fn detect_intervals(profile: &CurvatureProfile, distance_range: (f64, f64)) -> Vec<(f64, f64)> {
    let (lo, hi) = distance_range;
    let span = hi - lo;
    profile
        .intervals
        .iter()
        .map(|&(s, e)| (lo + s * span, lo + e * span))
        .collect()
}
