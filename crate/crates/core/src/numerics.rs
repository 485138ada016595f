//! Small numerical kernels shared by the solvers and diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linmdp::Policy;

/// Default eigenvalue floor below which negative powers are refused.
pub const EIG_FLOOR: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-10;

/// Symmetric matrix power `M^p = U D^p Uᵀ` of a PSD matrix.
///
/// Negative eigenvalues (rounding noise) are clamped to zero. A negative
/// exponent with an eigenvalue below `floor` is an error rather than a silent
/// regularization. `p = 0` returns the identity exactly and `p = 1` returns
/// `M` unchanged.
pub fn psd_power(m: &DMatrix<f64>, p: f64, floor: f64) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "matrix power needs a square matrix, got {:?}",
            m.shape()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) || !p.is_finite() {
        return Err(Error::NonFinite);
    }
    let asymmetry = (m - m.transpose()).amax();
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let n = m.nrows();
    if p == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    if p == 1.0 {
        return Ok(m.clone());
    }
    let eig = (m + m.transpose()).scale(0.5).symmetric_eigen();
    let values = eig.eigenvalues.map(|v| v.max(0.0));
    if p < 0.0 {
        let smallest = values.min();
        if smallest < floor {
            return Err(Error::NearSingular {
                eigenvalue: smallest,
                floor,
            });
        }
    }
    let u = &eig.eigenvectors;
    let scaled = u * DMatrix::from_diagonal(&values.map(|v| v.powf(p)));
    let out = scaled * u.transpose();
    Ok((&out + out.transpose()).scale(0.5))
}

/// Euclidean ball `{v : ‖v‖₂ ≤ radius}` centred at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallDomain {
    radius: f64,
}

impl BallDomain {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::ConfigInvalid(format!(
                "ball radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Euclidean projection onto the ball.
pub fn project_ball(v: &DVector<f64>, domain: &BallDomain) -> DVector<f64> {
    let mut out = v.clone();
    project_ball_in_place(out.as_mut_slice(), domain.radius);
    out
}

/// In-place projection used by the solver loops. Vectors already inside the
/// ball are left bit-for-bit unchanged, which makes projection idempotent.
pub fn project_ball_in_place(v: &mut [f64], radius: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > radius {
        let scale = radius / norm;
        for x in v.iter_mut() {
            *x *= scale;
        }
        // Rounding can leave the result a hair outside; pull it back in.
        loop {
            let again = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if again <= radius {
                break;
            }
            let fix = radius / again * (1.0 - 2.0 * f64::EPSILON);
            for x in v.iter_mut() {
                *x *= fix;
            }
        }
    }
}

pub fn clamp_interval(x: f64, lo: f64, hi: f64) -> f64 {
    hi.min(lo.max(x))
}

/// Numerically stable softmax of one row, written into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Row-wise softmax of an `|X| × |A|` logit table.
pub fn softmax_rows(logits: &DMatrix<f64>) -> Result<Policy> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (rows, cols) = logits.shape();
    let mut probs = DMatrix::zeros(rows, cols);
    let mut row_in = vec![0.0; cols];
    let mut row_out = vec![0.0; cols];
    for x in 0..rows {
        for a in 0..cols {
            row_in[a] = logits[(x, a)];
        }
        softmax_into(&row_in, &mut row_out);
        for a in 0..cols {
            probs[(x, a)] = row_out[a];
        }
    }
    Ok(Policy::from_probs_unchecked(probs))
}
