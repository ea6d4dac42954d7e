//! Exact-interpolation thin plate spline `f(x, y) = a0 + a1 x + a2 y +
//! Σ w_i U(|p - p_i|)` with `U(r) = r² log r²`.
//!
//! Inputs are shifted and scaled to unit size before solving; the
//! interpolant is unchanged by this (the `log` of the scale only contributes
//! terms that the side conditions `Σ w = Σ w x = Σ w y = 0` cancel).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ThinPlateSpline {
    centres: Vec<[f64; 2]>,
    weights: Vec<f64>,
    affine: [f64; 3],
    shift: [f64; 2],
    scale: f64,
}

/// The radial kernel `r² log r²`, written in terms of `r²`.
#[inline]
pub fn kernel(r2: f64) -> f64 {
    if r2 > 0.0 {
        r2 * r2.ln()
    } else {
        0.0
    }
}

/// Fits a spline through `(x, y, z)` control points.
pub fn fit_tps(points: &[[f64; 3]]) -> Result<ThinPlateSpline> {
    let n = points.len();
    if n < 3 {
        return Err(Error::SingularSpline(format!(
            "{n} control points, need at least 3"
        )));
    }
    if let Some(p) = points.iter().find(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "non-finite control point {p:?}"
        )));
    }
    let mean = [0, 1].map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n as f64);
    let spread = points
        .iter()
        .map(|p| (p[0] - mean[0]).abs().max((p[1] - mean[1]).abs()))
        .fold(0.0, f64::max);
    if spread == 0.0 {
        return Err(Error::SingularSpline("all control points coincide".into()));
    }
    let local: Vec<[f64; 2]> = points
        .iter()
        .map(|p| [(p[0] - mean[0]) / spread, (p[1] - mean[1]) / spread])
        .collect();

    // collinear points leave the affine part undetermined
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for q in &local {
        sxx += q[0] * q[0];
        syy += q[1] * q[1];
        sxy += q[0] * q[1];
    }
    let det = sxx * syy - sxy * sxy;
    if det <= 1e-12 * (sxx + syy).powi(2) {
        return Err(Error::SingularSpline("control points are collinear".into()));
    }
    for i in 0..n {
        for j in 0..i {
            if local[i] == local[j] {
                return Err(Error::SingularSpline(format!(
                    "control points {j} and {i} share the same (x, y)"
                )));
            }
        }
    }

    let m = n + 3;
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for i in 0..n {
        for j in 0..n {
            let dx = local[i][0] - local[j][0];
            let dy = local[i][1] - local[j][1];
            a[(i, j)] = kernel(dx * dx + dy * dy);
        }
        let row = [1.0, local[i][0], local[i][1]];
        for (k, v) in row.into_iter().enumerate() {
            a[(i, n + k)] = v;
            a[(n + k, i)] = v;
        }
        b[i] = points[i][2];
    }
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SingularSpline("linear system has no unique solution".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSpline("solution is not finite".into()));
    }
    Ok(ThinPlateSpline {
        centres: local,
        weights: sol.rows(0, n).iter().copied().collect(),
        affine: [sol[n], sol[n + 1], sol[n + 2]],
        shift: mean,
        scale: spread,
    })
}

impl ThinPlateSpline {
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        let u = (x - self.shift[0]) / self.scale;
        let v = (y - self.shift[1]) / self.scale;
        let mut z = self.affine[0] + self.affine[1] * u + self.affine[2] * v;
        for (c, w) in self.centres.iter().zip(&self.weights) {
            let (dx, dy) = (u - c[0], v - c[1]);
            z += w * kernel(dx * dx + dy * dy);
        }
        z
    }

    pub fn control_point_count(&self) -> usize {
        self.centres.len()
    }

    /// Bending energy `wᵀ K w` in normalised coordinates (zero for planes).
    pub fn bending_energy(&self) -> f64 {
        let mut e = 0.0;
        for (ci, wi) in self.centres.iter().zip(&self.weights) {
            for (cj, wj) in self.centres.iter().zip(&self.weights) {
                let (dx, dy) = (ci[0] - cj[0], ci[1] - cj[1]);
                e += wi * wj * kernel(dx * dx + dy * dy);
            }
        }
        e
    }
}
