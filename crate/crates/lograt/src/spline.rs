//! Cubic B-spline basis with linear tail extrapolation and the exact
//! second-derivative roughness penalty.
//!
//! A knot is placed at every distinct sample position, giving a basis of
//! dimension `K = q + 2` for `q` knot sites: the full space of C² piecewise
//! cubics over those sites. Outside the knot range every basis function is
//! continued linearly, so values and first derivatives extend smoothly while
//! second derivatives vanish. Combined with the roughness penalty (which
//! drives the boundary second derivatives to zero) the fitted curves behave
//! like natural cubic splines without a constrained basis.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Spline degree is fixed to cubic throughout.
const DEGREE: usize = 3;

/// Nodes and weights of the 3-point Gauss–Legendre rule on [-1, 1].
/// Exact for polynomials up to degree 5; the penalty integrand (a product of
/// two piecewise-linear second derivatives) is piecewise quadratic.
const GAUSS_NODES: [f64; 3] = [-0.7745966692414834, 0.0, 0.7745966692414834];
const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("at least 2 knots are required, got {0}")]
    TooFewKnots(usize),
    #[error("knots must be strictly increasing; violation between indices {0} and {1}")]
    UnorderedKnots(usize, usize),
    #[error("knot at index {0} is not finite")]
    NonFiniteKnot(usize),
}

/// Cubic B-spline basis over a fixed set of distinct knot sites.
#[derive(Debug, Clone)]
pub struct BasisSpec {
    /// Distinct knot sites in strictly increasing order.
    knots: Vec<f64>,
    /// Clamped knot vector: boundary sites repeated `DEGREE + 1` times.
    extended: Vec<f64>,
}

impl BasisSpec {
    /// Builds the basis for the given knot sites (typically the normalized
    /// sample positions). Requires at least two strictly increasing knots.
    pub fn new(knots: &[f64]) -> Result<Self, SplineError> {
        if knots.len() < 2 {
            return Err(SplineError::TooFewKnots(knots.len()));
        }
        for (i, k) in knots.iter().enumerate() {
            if !k.is_finite() {
                return Err(SplineError::NonFiniteKnot(i));
            }
        }
        for i in 1..knots.len() {
            if knots[i] <= knots[i - 1] {
                return Err(SplineError::UnorderedKnots(i - 1, i));
            }
        }
        let mut extended = Vec::with_capacity(knots.len() + 2 * DEGREE);
        for _ in 0..DEGREE {
            extended.push(knots[0]);
        }
        extended.extend_from_slice(knots);
        for _ in 0..DEGREE {
            extended.push(knots[knots.len() - 1]);
        }
        Ok(Self {
            knots: knots.to_vec(),
            extended,
        })
    }

    /// Number of basis functions, `K = q + 2` for `q` knot sites.
    pub fn dimension(&self) -> usize {
        self.knots.len() + 2
    }

    /// The distinct knot sites.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// First and last knot site.
    pub fn range(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Index of the knot span containing `x`, clamped to the valid range.
    fn find_span(&self, x: f64) -> usize {
        let q = self.knots.len();
        let first = DEGREE;
        let last = q + DEGREE - 2;
        if x >= self.knots[q - 1] {
            return last;
        }
        if x <= self.knots[0] {
            return first;
        }
        // Binary search over the distinct sites, then shift by the clamp offset.
        let mut lo = 0usize;
        let mut hi = q - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo + DEGREE
    }

    /// Values and first two derivatives of the four basis functions that are
    /// nonzero on the span containing `x` (interior evaluation only).
    /// Returns the span index and a 3×4 table `ders[k][j]` for the k-th
    /// derivative of the j-th local function.
    fn local_derivatives(&self, x: f64) -> (usize, [[f64; DEGREE + 1]; 3]) {
        let span = self.find_span(x);
        let t = &self.extended;
        let p = DEGREE;

        // Triangular table of basis values and knot differences.
        let mut ndu = [[0.0f64; DEGREE + 1]; DEGREE + 1];
        let mut left = [0.0f64; DEGREE + 1];
        let mut right = [0.0f64; DEGREE + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = [[0.0f64; DEGREE + 1]; 3];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }

        // Derivative sweep over the two lower orders.
        let mut a = [[0.0f64; DEGREE + 1]; 2];
        for r in 0..=p {
            let mut s1 = 0usize;
            let mut s2 = 1usize;
            a[0] = [0.0; DEGREE + 1];
            a[1] = [0.0; DEGREE + 1];
            a[0][0] = 1.0;
            for k in 1..=2usize {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = (p - k) as isize;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[(pk + 1) as usize][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk as usize];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk {
                    k - 1
                } else {
                    p - r
                };
                for j in j1..=j2 {
                    a[s2][j] =
                        (a[s1][j] - a[s1][j - 1]) / ndu[(pk + 1) as usize][(rk + j as isize) as usize];
                    d += a[s2][j] * ndu[(rk + j as isize) as usize][pk as usize];
                }
                if r as isize <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[(pk + 1) as usize][r];
                    d += a[s2][k] * ndu[r][pk as usize];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }

        // Scale by p! / (p - k)!.
        let mut factor = p as f64;
        for k in 1..=2usize {
            for j in 0..=p {
                ders[k][j] *= factor;
            }
            factor *= (p - k) as f64;
        }

        (span, ders)
    }

    /// Evaluates all `K` basis functions (or their first or second
    /// derivatives) at `x`. Outside the knot range the functions continue
    /// linearly, so second derivatives are identically zero there.
    pub fn evaluate(&self, x: f64, deriv: usize) -> Vec<f64> {
        assert!(deriv <= 2, "derivative order must be 0, 1, or 2");
        let (lo, hi) = self.range();
        if x < lo {
            return self.extrapolate(x, lo, deriv);
        }
        if x > hi {
            return self.extrapolate(x, hi, deriv);
        }
        let mut out = vec![0.0; self.dimension()];
        let (span, ders) = self.local_derivatives(x);
        for j in 0..=DEGREE {
            out[span - DEGREE + j] = ders[deriv][j];
        }
        out
    }

    /// Linear continuation beyond the boundary knot at `anchor`.
    fn extrapolate(&self, x: f64, anchor: f64, deriv: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        if deriv == 2 {
            return out;
        }
        let (span, ders) = self.local_derivatives(anchor);
        for j in 0..=DEGREE {
            let idx = span - DEGREE + j;
            out[idx] = match deriv {
                0 => ders[0][j] + ders[1][j] * (x - anchor),
                _ => ders[1][j],
            };
        }
        out
    }

    /// Design matrix: row `i` holds the basis values at `xs[i]`.
    pub fn design_matrix(&self, xs: &[f64]) -> DMatrix<f64> {
        let k = self.dimension();
        let mut m = DMatrix::zeros(xs.len(), k);
        for (i, &x) in xs.iter().enumerate() {
            let row = self.evaluate(x, 0);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    /// Gram matrix of second derivatives, `Ω[j][k] = ∫ h_j''(x) h_k''(x) dx`
    /// over the knot range, integrated per interval with 3-point
    /// Gauss–Legendre (exact for the piecewise-quadratic integrand).
    pub fn penalty_matrix(&self) -> PenaltyMatrix {
        let k = self.dimension();
        let mut omega = DMatrix::zeros(k, k);
        for w in self.knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            for (node, weight) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS.iter()) {
                let x = mid + half * node;
                let d2 = self.evaluate(x, 2);
                let scale = weight * half;
                // Only four entries are nonzero; a dense sweep at K ~ n is cheap.
                for (j, vj) in d2.iter().enumerate() {
                    if *vj == 0.0 {
                        continue;
                    }
                    for (l, vl) in d2.iter().enumerate() {
                        if *vl == 0.0 {
                            continue;
                        }
                        omega[(j, l)] += scale * vj * vl;
                    }
                }
            }
        }
        // Make symmetry exact rather than up to rounding.
        for j in 0..k {
            for l in (j + 1)..k {
                let avg = 0.5 * (omega[(j, l)] + omega[(l, j)]);
                omega[(j, l)] = avg;
                omega[(l, j)] = avg;
            }
        }
        PenaltyMatrix { matrix: omega }
    }
}

/// Symmetric positive semi-definite roughness penalty with a null space
/// spanned by the constant and linear functions.
#[derive(Debug, Clone)]
pub struct PenaltyMatrix {
    matrix: DMatrix<f64>,
}

impl PenaltyMatrix {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    /// The roughness `βᵀ Ω β` of a coefficient vector.
    pub fn quadratic_form(&self, beta: &DVector<f64>) -> f64 {
        (beta.transpose() * &self.matrix * beta)[(0, 0)]
    }
}
