//! Per-voxel cost volumes for the graph search.
//!
//! Edge costs are rectified z-gradients inverted so the strongest transition
//! of the requested polarity costs zero. The CSI cost adds a term built from
//! the depth derivative of a Sato line-filter response computed on inverted
//! intensities (choroidal vessels are dark).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Axis, OctVolume, VolumeGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    /// Intensity increases with depth.
    DarkToBright,
    /// Intensity decreases with depth.
    BrightToDark,
}

/// Non-negative finite costs on the lattice of their source volume.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    geometry: VolumeGeometry,
    data: Vec<f64>,
    pub polarity: Polarity,
}

impl CostVolume {
    pub fn new(geometry: VolumeGeometry, data: Vec<f64>, polarity: Polarity) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::LatticeMismatch(format!(
                "{} costs for {} voxels",
                data.len(),
                geometry.len()
            )));
        }
        if data.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidArgument(
                "costs must be finite and non-negative".into(),
            ));
        }
        Ok(CostVolume {
            geometry,
            data,
            polarity,
        })
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[(y * self.geometry.nx + x) * self.geometry.nz + z]
    }

    pub fn column(&self, x: usize, y: usize) -> &[f64] {
        let nz = self.geometry.nz;
        let start = (y * self.geometry.nx + x) * nz;
        &self.data[start..start + nz]
    }

    /// Costs rescaled to `[0, 1]` by the volume maximum, for raw-format dumps.
    pub fn to_debug_volume(&self) -> OctVolume {
        let max = self.data.iter().cloned().fold(0.0, f64::max);
        let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
        OctVolume::from_data(self.geometry, self.data.iter().map(|c| c * scale).collect())
            .expect("same lattice")
    }
}

/// Normalised Gaussian taps truncated at `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// 1D convolution along `axis` with edge replication.
pub(crate) fn convolve_axis(
    data: &[f64],
    g: &VolumeGeometry,
    axis: Axis,
    kernel: &[f64],
) -> Vec<f64> {
    let (nx, ny, nz) = (g.nx, g.ny, g.nz);
    let r = (kernel.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let slice = nx * nz;
    let mut out = vec![0.0; data.len()];
    crate::par::for_each_chunk_mut(&mut out, slice, |y, dst| match axis {
        Axis::Z => {
            let src = &data[y * slice..(y + 1) * slice];
            for (o, col) in dst.chunks_mut(nz).zip(src.chunks(nz)) {
                for (z, v) in o.iter_mut().enumerate() {
                    let z = z as isize;
                    let interior = z - r >= 0 && z + r < nz as isize;
                    *v = if interior {
                        let base = (z - r) as usize;
                        kernel
                            .iter()
                            .zip(&col[base..base + kernel.len()])
                            .map(|(w, s)| w * s)
                            .sum()
                    } else {
                        kernel
                            .iter()
                            .enumerate()
                            .map(|(k, w)| w * col[clamp(z + k as isize - r, nz)])
                            .sum()
                    };
                }
            }
        }
        Axis::X => {
            let src = &data[y * slice..(y + 1) * slice];
            for (x, o) in dst.chunks_mut(nz).enumerate() {
                for (k, w) in kernel.iter().enumerate() {
                    let sx = clamp(x as isize + k as isize - r, nx);
                    for (v, s) in o.iter_mut().zip(&src[sx * nz..(sx + 1) * nz]) {
                        *v += w * s;
                    }
                }
            }
        }
        Axis::Y => {
            for (k, w) in kernel.iter().enumerate() {
                let sy = clamp(y as isize + k as isize - r, ny);
                for (v, s) in dst.iter_mut().zip(&data[sy * slice..(sy + 1) * slice]) {
                    *v += w * s;
                }
            }
        }
    });
    out
}

/// Separable Gaussian within each B-scan (x and z only).
pub fn gaussian_smooth_xz(volume: &OctVolume, sigma: f64) -> Result<OctVolume> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma {sigma} must be > 0")));
    }
    let g = *volume.geometry();
    let k = gaussian_kernel(sigma);
    let sx = convolve_axis(volume.data(), &g, Axis::X, &k);
    OctVolume::from_data(g, convolve_axis(&sx, &g, Axis::Z, &k))
}

/// Separable 3D Gaussian with per-axis sigma in voxels.
pub fn gaussian_smooth_3d(volume: &OctVolume, sigma_voxels: [f64; 3]) -> Result<OctVolume> {
    let g = *volume.geometry();
    let mut data = volume.data().to_vec();
    for axis in Axis::ALL {
        let s = sigma_voxels[axis.index()];
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma {s} must be > 0")));
        }
        data = convolve_axis(&data, &g, axis, &gaussian_kernel(s));
    }
    OctVolume::from_data(g, data)
}

/// Central-difference ∂I/∂z per voxel, one-sided at the first and last sample.
pub fn z_gradient(data: &[f64], g: &VolumeGeometry) -> Vec<f64> {
    let nz = g.nz;
    let mut out = vec![0.0; data.len()];
    crate::par::for_each_chunk_mut(&mut out, g.nx * nz, |y, dst| {
        let src = &data[y * g.nx * nz..(y + 1) * g.nx * nz];
        for (o, c) in dst.chunks_mut(nz).zip(src.chunks(nz)) {
            o[0] = c[1] - c[0];
            o[nz - 1] = c[nz - 1] - c[nz - 2];
            for z in 1..nz - 1 {
                o[z] = 0.5 * (c[z + 1] - c[z - 1]);
            }
        }
    });
    out
}

fn rectify(g: f64, polarity: Polarity) -> f64 {
    match polarity {
        Polarity::DarkToBright => g.max(0.0),
        Polarity::BrightToDark => (-g).max(0.0),
    }
}

/// Inverted rectified z-gradient: `M - max(0, ±∂I/∂z)`.
pub fn edge_cost(volume: &OctVolume, polarity: Polarity) -> Result<CostVolume> {
    let g = *volume.geometry();
    if g.nz < 3 {
        return Err(Error::InvalidArgument(format!(
            "edge cost needs nz >= 3, got {}",
            g.nz
        )));
    }
    let grad = z_gradient(volume.data(), &g);
    Ok(edge_cost_from_gradient(&grad, &g, polarity))
}

pub(crate) fn edge_cost_from_gradient(
    grad: &[f64],
    g: &VolumeGeometry,
    polarity: Polarity,
) -> CostVolume {
    let chunk = g.nx * g.nz;
    let m = crate::par::max_over_chunks(grad, chunk, |c| {
        c.iter().map(|&v| rectify(v, polarity)).fold(0.0, f64::max)
    })
    .max(0.0);
    let mut data = vec![0.0; grad.len()];
    crate::par::for_each_chunk_mut(&mut data, chunk, |y, dst| {
        for (o, &v) in dst.iter_mut().zip(&grad[y * chunk..(y + 1) * chunk]) {
            *o = m - rectify(v, polarity);
        }
    });
    CostVolume {
        geometry: *g,
        data,
        polarity,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselnessParams {
    /// Gaussian scales in µm.
    pub scales_um: Vec<f64>,
    /// Sato α for λ1 ≤ 0.
    pub alpha1: f64,
    /// Sato α for λ1 > 0.
    pub alpha2: f64,
}

impl Default for VesselnessParams {
    fn default() -> Self {
        VesselnessParams {
            scales_um: vec![30.0, 60.0],
            alpha1: 0.5,
            alpha2: 2.0,
        }
    }
}

/// Eigenvalues of a symmetric 3x3 matrix, sorted descending.
///
/// `m = [xx, yy, zz, xy, xz, yz]`.
pub fn symmetric_eigenvalues(m: [f64; 6]) -> [f64; 3] {
    let [a11, a22, a33, a12, a13, a23] = m;
    let p1 = a12 * a12 + a13 * a13 + a23 * a23;
    let mut e = if p1 == 0.0 {
        [a11, a22, a33]
    } else {
        let q = (a11 + a22 + a33) / 3.0;
        let p2 = (a11 - q).powi(2) + (a22 - q).powi(2) + (a33 - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let (b11, b22, b33) = ((a11 - q) / p, (a22 - q) / p, (a33 - q) / p);
        let (b12, b13, b23) = (a12 / p, a13 / p, a23 / p);
        let det = b11 * (b22 * b33 - b23 * b23) - b12 * (b12 * b33 - b23 * b13)
            + b13 * (b12 * b23 - b22 * b13);
        let r = (det / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    };
    e.sort_by(|a, b| b.total_cmp(a));
    e
}

/// Sato line measure for bright tubes from eigenvalues sorted λ1 ≥ λ2 ≥ λ3.
pub fn sato_line_measure(l: [f64; 3], alpha1: f64, alpha2: f64) -> f64 {
    let [l1, l2, l3] = l;
    let lc = (-l2).min(-l3);
    if lc <= 0.0 {
        return 0.0;
    }
    let a = if l1 <= 0.0 { alpha1 } else { alpha2 };
    lc * (-(l1 * l1) / (2.0 * (a * lc).powi(2))).exp()
}

/// Unnormalised multi-scale bright-tube response (max over scales).
pub fn vesselness_raw(volume: &OctVolume, params: &VesselnessParams) -> Result<Vec<f64>> {
    let g = *volume.geometry();
    g.validate()?;
    if params.scales_um.is_empty() {
        return Err(Error::InvalidArgument("no vesselness scales".into()));
    }
    let h = g.spacing();
    if h.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::Geometry(format!("degenerate spacing {h:?}")));
    }
    let (nx, ny, nz) = (g.nx, g.ny, g.nz);
    let mut best = vec![0.0f64; g.len()];
    for &sigma in &params.scales_um {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("scale {sigma} must be > 0")));
        }
        let smooth = gaussian_smooth_3d(volume, h.map(|s| sigma / s))?;
        let s = smooth.data();
        let norm = sigma * sigma;
        let (hx, hy, hz) = (h[0], h[1], h[2]);
        let at = |x: usize, y: usize, z: usize| s[(y * nx + x) * nz + z];
        crate::par::for_each_chunk_mut(&mut best, nx * nz, |y, dst| {
            let (ym, yp) = (y.saturating_sub(1), (y + 1).min(ny - 1));
            for x in 0..nx {
                let (xm, xp) = (x.saturating_sub(1), (x + 1).min(nx - 1));
                for z in 0..nz {
                    let (zm, zp) = (z.saturating_sub(1), (z + 1).min(nz - 1));
                    let c = at(x, y, z);
                    let hxx = (at(xp, y, z) - 2.0 * c + at(xm, y, z)) / (hx * hx);
                    let hyy = (at(x, yp, z) - 2.0 * c + at(x, ym, z)) / (hy * hy);
                    let hzz = (at(x, y, zp) - 2.0 * c + at(x, y, zm)) / (hz * hz);
                    let hxy = (at(xp, yp, z) - at(xp, ym, z) - at(xm, yp, z) + at(xm, ym, z))
                        / (4.0 * hx * hy);
                    let hxz = (at(xp, y, zp) - at(xp, y, zm) - at(xm, y, zp) + at(xm, y, zm))
                        / (4.0 * hx * hz);
                    let hyz = (at(x, yp, zp) - at(x, yp, zm) - at(x, ym, zp) + at(x, ym, zm))
                        / (4.0 * hy * hz);
                    let eig = symmetric_eigenvalues(
                        [hxx, hyy, hzz, hxy, hxz, hyz].map(|v| v * norm),
                    );
                    let v = sato_line_measure(eig, params.alpha1, params.alpha2);
                    let o = &mut dst[x * nz + z];
                    if v > *o {
                        *o = v;
                    }
                }
            }
        });
    }
    Ok(best)
}

/// Multi-scale bright-tube response min-max normalised to `[0, 1]`.
///
/// Pass inverted intensities to highlight dark vessels.
pub fn vesselness(volume: &OctVolume, params: &VesselnessParams) -> Result<OctVolume> {
    let g = *volume.geometry();
    let mut raw = vesselness_raw(volume, params)?;
    normalize_in_place(&mut raw, g.nx * g.nz);
    OctVolume::from_data(g, raw)
}

/// Min-max normalisation; constant input maps to zeros.
pub(crate) fn normalize_in_place(data: &mut [f64], chunk: usize) {
    let (lo, hi) = crate::par::min_max(data, chunk);
    let span = hi - lo;
    if !(span > 0.0) {
        data.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let inv = 1.0 / span;
    crate::par::for_each_chunk_mut(data, chunk.max(1), |_, c| {
        c.iter_mut().for_each(|v| *v = (*v - lo) * inv)
    });
}

/// Dark-to-bright edge cost plus `w·(1 - D)`, where `D` is the normalised
/// `max(0, -∂V/∂z)` of the vesselness field.
pub fn csi_cost(volume: &OctVolume, vesselness: &OctVolume, weight: f64) -> Result<CostVolume> {
    let edge = edge_cost(volume, Polarity::DarkToBright)?;
    csi_cost_from_edge(edge, vesselness, weight)
}

/// As [`csi_cost`], reusing an already computed dark-to-bright edge cost.
pub fn csi_cost_from_edge(
    edge: CostVolume,
    vesselness: &OctVolume,
    weight: f64,
) -> Result<CostVolume> {
    let g = edge.geometry;
    if vesselness.geometry() != &g {
        return Err(Error::LatticeMismatch(format!(
            "vesselness {:?} vs cost {:?}",
            vesselness.geometry(),
            g
        )));
    }
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "vessel weight {weight} must be finite and >= 0"
        )));
    }
    let chunk = g.nx * g.nz;
    let mut cost = edge.data;
    normalize_in_place(&mut cost, chunk);
    if weight > 0.0 {
        let mut fall: Vec<f64> = z_gradient(vesselness.data(), &g)
            .into_iter()
            .map(|d| (-d).max(0.0))
            .collect();
        normalize_in_place(&mut fall, chunk);
        crate::par::for_each_chunk_mut(&mut cost, chunk, |y, c| {
            for (v, d) in c.iter_mut().zip(&fall[y * chunk..(y + 1) * chunk]) {
                *v += weight * (1.0 - d);
            }
        });
    }
    CostVolume::new(g, cost, Polarity::DarkToBright)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry(nx: usize, ny: usize, nz: usize) -> VolumeGeometry {
        VolumeGeometry::new(nx, ny, nz, nx as f64 * 0.03, ny as f64 * 0.03, nz as f64 * 0.03)
            .unwrap()
    }

    #[test]
    fn kernel_sigma_one() {
        let k = gaussian_kernel(1.0);
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let raw: Vec<f64> = (-3..=3).map(|i: i32| (-(i * i) as f64 / 2.0).exp()).collect();
        let s: f64 = raw.iter().sum();
        for (a, b) in k.iter().zip(raw) {
            assert!((a - b / s).abs() < 1e-15);
        }
    }

    #[test]
    fn smoothing_constant_is_identity() {
        let v = OctVolume::filled(geometry(6, 3, 9), 0.4).unwrap();
        let s = gaussian_smooth_xz(&v, 1.0).unwrap();
        assert!(s.data().iter().all(|&x| (x - 0.4).abs() < 1e-15));
        assert!(gaussian_smooth_xz(&v, 0.0).is_err());
    }

    #[test]
    fn impulse_gives_outer_product() {
        let g = geometry(15, 3, 15);
        let v = OctVolume::from_fn(g, |x, y, z| if (x, y, z) == (7, 1, 7) { 1.0 } else { 0.0 })
            .unwrap();
        let s = gaussian_smooth_xz(&v, 1.0).unwrap();
        let k = gaussian_kernel(1.0);
        for x in 0..15 {
            for z in 0..15 {
                let (dx, dz) = (x as i64 - 7, z as i64 - 7);
                let expected = if dx.abs() <= 3 && dz.abs() <= 3 {
                    k[(dx + 3) as usize] * k[(dz + 3) as usize]
                } else {
                    0.0
                };
                assert!((s.get(x, 1, z) - expected).abs() < 1e-15);
                assert_eq!(s.get(x, 0, z), 0.0, "no smoothing across B-scans");
            }
        }
    }

    #[test]
    fn interior_mean_preserved() {
        let g = geometry(30, 2, 30);
        // bump kept 4 voxels clear of every border
        let v = OctVolume::from_fn(g, |x, _, z| {
            if (8..22).contains(&x) && (8..22).contains(&z) {
                ((x * 31 + z * 17) % 13) as f64 / 13.0
            } else {
                0.25
            }
        })
        .unwrap();
        let s = gaussian_smooth_xz(&v, 1.0).unwrap();
        assert!((s.mean() - v.mean()).abs() < 1e-9);
    }

    #[test]
    fn step_minimum_at_edge() {
        let g = geometry(4, 3, 20);
        let v = OctVolume::from_fn(g, |_, _, z| if z >= 9 { 0.8 } else { 0.2 }).unwrap();
        let c = edge_cost(&v, Polarity::DarkToBright).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                let col = c.column(x, y);
                let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
                assert_eq!(min, 0.0);
                // central difference ties the two voxels straddling the step
                assert_eq!(col[8], 0.0);
                assert_eq!(col[9], 0.0);
                assert!(col.iter().enumerate().all(|(z, &v)| v > 0.0 || z == 8 || z == 9));
            }
        }
        let wrong = edge_cost(&v, Polarity::BrightToDark).unwrap();
        // a pure dark-to-bright step has no bright-to-dark response at all
        assert!(wrong.data().iter().all(|&v| v == 0.0));
        assert!(edge_cost(&OctVolume::filled(geometry(2, 2, 2), 0.0).unwrap(), Polarity::DarkToBright).is_err());
    }

    #[test]
    fn step_rejected_by_opposite_polarity() {
        // a dark-to-bright step next to a weaker bright-to-dark step
        let g = geometry(3, 2, 30);
        let v = OctVolume::from_fn(g, |_, _, z| match z {
            0..=9 => 0.2,
            10..=19 => 0.9,
            _ => 0.6,
        })
        .unwrap();
        let c = edge_cost(&v, Polarity::BrightToDark).unwrap();
        let col = c.column(1, 1);
        let m = 0.15;
        for z in 8..12 {
            assert!((col[z] - m).abs() < 1e-12, "constant M across the rejected step");
        }
        let argmin = (0..30).min_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
        assert!(argmin == 19 || argmin == 20);
    }

    #[test]
    fn ramp_cost_is_constant() {
        let a = 0.01;
        let g = geometry(3, 2, 40);
        let v = OctVolume::from_fn(g, |_, _, z| a * z as f64).unwrap();
        let c = edge_cost(&v, Polarity::DarkToBright).unwrap();
        let m = c.data().iter().cloned().fold(0.0, f64::max) + a;
        for z in 1..39 {
            assert!((c.get(1, 1, z) - (m - a)).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvalues_match_nalgebra() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let m: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-5.0..5.0));
            let mat = nalgebra::Matrix3::new(m[0], m[3], m[4], m[3], m[1], m[5], m[4], m[5], m[2]);
            let mut reference: Vec<f64> = mat.symmetric_eigenvalues().iter().cloned().collect();
            reference.sort_by(|a, b| b.total_cmp(a));
            let ours = symmetric_eigenvalues(m);
            for (a, b) in ours.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-9, "{ours:?} vs {reference:?}");
            }
        }
        assert_eq!(symmetric_eigenvalues([1.0, 3.0, 2.0, 0.0, 0.0, 0.0]), [3.0, 2.0, 1.0]);
    }

    #[test]
    fn sato_measure_cases() {
        assert_eq!(sato_line_measure([0.0, 0.0, 0.0], 0.5, 2.0), 0.0);
        // ideal line
        assert_eq!(sato_line_measure([0.0, -2.0, -2.0], 0.5, 2.0), 2.0);
        // sheet: λ2 ≈ 0
        assert_eq!(sato_line_measure([0.0, 0.0, -4.0], 0.5, 2.0), 0.0);
        // λ1 > 0 is penalised less sharply than λ1 < 0
        let pos = sato_line_measure([1.0, -2.0, -2.0], 0.5, 2.0);
        let neg = sato_line_measure([-1.0, -2.0, -2.0], 0.5, 2.0);
        assert!(pos > neg);
    }

    fn tube_geometry() -> VolumeGeometry {
        // 10 µm isotropic voxels
        VolumeGeometry::new(24, 24, 24, 0.24, 0.24, 0.24).unwrap()
    }

    fn tube(bright: f64, background: f64) -> OctVolume {
        OctVolume::from_fn(tube_geometry(), |_, y, z| {
            let (dy, dz) = (y as f64 - 11.5, z as f64 - 11.5);
            if (dy * dy + dz * dz).sqrt() <= 3.0 {
                bright
            } else {
                background
            }
        })
        .unwrap()
    }

    fn slab(bright: f64, background: f64) -> OctVolume {
        OctVolume::from_fn(tube_geometry(), |_, _, z| {
            if (z as f64 - 11.5).abs() <= 3.0 {
                bright
            } else {
                background
            }
        })
        .unwrap()
    }

    #[test]
    fn tube_beats_slab() {
        let p = VesselnessParams {
            scales_um: vec![30.0],
            ..Default::default()
        };
        let t = vesselness_raw(&tube(0.9, 0.1), &p).unwrap();
        let s = vesselness_raw(&slab(0.9, 0.1), &p).unwrap();
        let g = tube_geometry();
        let idx = |x: usize, y: usize, z: usize| (y * g.nx + x) * g.nz + z;
        let axis = (t[idx(12, 11, 11)] + t[idx(12, 12, 12)]) / 2.0;
        let slab_max = s.iter().cloned().fold(0.0, f64::max);
        assert!(axis >= 5.0 * slab_max, "axis {axis} slab {slab_max}");
        let tube_max = t.iter().cloned().fold(0.0, f64::max);
        assert!(axis > 0.9 * tube_max);
    }

    #[test]
    fn inverted_dark_tube_responds_on_axis() {
        let p = VesselnessParams::default();
        let dark = tube(0.1, 0.9);
        let v = vesselness(&dark.inverted(), &p).unwrap();
        let at_axis = v.get(12, 12, 12);
        let far = v.get(12, 2, 2);
        assert!(at_axis > 0.8, "{at_axis}");
        assert!(far < 0.05);
        assert!(vesselness(&dark, &VesselnessParams { scales_um: vec![], ..p }).is_err());
    }

    #[test]
    fn vesselness_offset_and_contrast() {
        let p = VesselnessParams {
            scales_um: vec![30.0],
            ..Default::default()
        };
        let base = vesselness_raw(&tube(0.5, 0.1), &p).unwrap();
        let shifted = vesselness_raw(&tube(0.6, 0.2), &p).unwrap();
        let doubled = vesselness_raw(&tube(0.9, 0.1), &p).unwrap();
        for ((a, b), c) in base.iter().zip(&shifted).zip(&doubled) {
            assert!((a - b).abs() < 1e-9);
            assert!((2.0 * a - c).abs() < 1e-9);
        }
        let constant = vesselness(&OctVolume::filled(tube_geometry(), 0.4).unwrap(), &p).unwrap();
        assert!(constant.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn csi_cost_degenerate_cases() {
        let g = geometry(4, 3, 20);
        let v = OctVolume::from_fn(g, |x, _, z| if z >= 9 + x % 2 { 0.8 } else { 0.2 }).unwrap();
        let edge = edge_cost(&v, Polarity::DarkToBright).unwrap();
        let mut expected = edge.data().to_vec();
        normalize_in_place(&mut expected, 1);
        let some_field = OctVolume::from_fn(g, |_, _, z| (z as f64 / 20.0).sin().abs()).unwrap();
        let c0 = csi_cost(&v, &some_field, 0.0).unwrap();
        assert_eq!(c0.data(), expected.as_slice());

        let zero = OctVolume::filled(g, 0.0).unwrap();
        let c1 = csi_cost(&v, &zero, 1.5).unwrap();
        for (a, b) in c1.data().iter().zip(&expected) {
            assert!((a - (b + 1.5)).abs() < 1e-12);
        }
        let other = OctVolume::filled(geometry(4, 3, 21), 0.0).unwrap();
        assert!(matches!(
            csi_cost(&v, &other, 1.0),
            Err(Error::LatticeMismatch(_))
        ));
    }
}
