//! Synthetic retinal phantoms with analytic ground-truth surfaces.
//!
//! Voxel `z` covers depths `[z - 0.5, z + 0.5)` (in voxel units) and its
//! intensity is the partial-volume mix of the layers it overlaps, so the
//! sampled ground truth is the analytic boundary position itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Axis, OctVolume, Surface, VolumeGeometry};
use crate::error::{Error, Result};

/// Minimum gap between consecutive phantom surfaces, in full-resolution voxels.
pub const MIN_SURFACE_GAP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wave {
    pub amplitude_um: f64,
    /// Full periods across the x extent.
    pub cycles_x: f64,
    /// Full periods across the y extent.
    pub cycles_y: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Smooth depth function: base depth plus low-frequency sinusoids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceShape {
    pub depth_um: f64,
    #[serde(default)]
    pub waves: Vec<Wave>,
}

impl SurfaceShape {
    pub fn flat(depth_um: f64) -> Self {
        SurfaceShape {
            depth_um,
            waves: Vec::new(),
        }
    }

    /// Depth in µm at fractional lateral position (fx, fy) ∈ [0, 1]².
    pub fn depth_at(&self, fx: f64, fy: f64) -> f64 {
        use std::f64::consts::TAU;
        self.depth_um
            + self
                .waves
                .iter()
                .map(|w| w.amplitude_um * (TAU * (w.cycles_x * fx + w.cycles_y * fy) + w.phase).sin())
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerLevels {
    pub vitreous: f64,
    pub retina: f64,
    pub rpe: f64,
    pub choroid: f64,
    pub sclera: f64,
}

impl Default for LayerLevels {
    fn default() -> Self {
        LayerLevels {
            vitreous: 0.05,
            retina: 0.40,
            rpe: 0.85,
            choroid: 0.45,
            sclera: 0.70,
        }
    }
}

/// Dark horizontal tubes in the choroid, running straight across the scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselModel {
    pub count: usize,
    pub radius_min_um: f64,
    pub radius_max_um: f64,
    pub lumen: f64,
    /// Range of the gap between a lumen's lowest point and the CSI.
    pub gap_min_um: f64,
    pub gap_max_um: f64,
}

impl VesselModel {
    pub fn none() -> Self {
        VesselModel {
            count: 0,
            ..Self::default()
        }
    }
}

impl Default for VesselModel {
    fn default() -> Self {
        VesselModel {
            count: 40,
            radius_min_um: 25.0,
            radius_max_um: 50.0,
            lumen: 0.22,
            gap_min_um: 10.0,
            gap_max_um: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub geometry: VolumeGeometry,
    pub ilm: SurfaceShape,
    pub bmeis: SurfaceShape,
    pub bm: SurfaceShape,
    pub csi: SurfaceShape,
    #[serde(default)]
    pub levels: LayerLevels,
    #[serde(default = "VesselModel::none")]
    pub vessels: VesselModel,
    /// Half-width `a` of the multiplicative noise factor `1 + a·u`, `u ~ U[-1, 1]`.
    #[serde(default)]
    pub speckle: f64,
    /// Seeds vessel placement.
    pub seed: u64,
    /// Seeds speckle; defaults to `seed`. Re-scans of one subject share
    /// `seed` and differ here.
    #[serde(default)]
    pub noise_seed: Option<u64>,
}

impl PhantomSpec {
    /// Gently curved layers with a ~250 µm choroid, noise and vessels off.
    pub fn smooth(geometry: VolumeGeometry, seed: u64) -> Self {
        let w = |a, cx, cy, p| Wave {
            amplitude_um: a,
            cycles_x: cx,
            cycles_y: cy,
            phase: p,
        };
        PhantomSpec {
            geometry,
            ilm: SurfaceShape {
                depth_um: 420.0,
                waves: vec![w(40.0, 1.0, 0.0, 0.3), w(25.0, 0.0, 1.0, 1.1)],
            },
            bmeis: SurfaceShape {
                depth_um: 680.0,
                waves: vec![w(30.0, 1.0, 0.0, 0.3), w(20.0, 0.0, 1.0, 1.1)],
            },
            bm: SurfaceShape {
                depth_um: 740.0,
                waves: vec![w(30.0, 1.0, 0.0, 0.3), w(20.0, 0.0, 1.0, 1.1)],
            },
            csi: SurfaceShape {
                depth_um: 990.0,
                waves: vec![
                    w(30.0, 1.0, 0.0, 0.3),
                    w(20.0, 0.0, 1.0, 1.1),
                    w(30.0, 1.0, 1.0, 2.0),
                ],
            },
            levels: LayerLevels::default(),
            vessels: VesselModel::none(),
            speckle: 0.0,
            seed,
            noise_seed: None,
        }
    }

    /// `smooth` plus speckle and choroidal vessels. The default vessel count
    /// is for a 6 x 6 mm field and scales with the field diagonal.
    pub fn realistic(geometry: VolumeGeometry, seed: u64) -> Self {
        let diag = geometry.extent_x_mm.hypot(geometry.extent_y_mm);
        let base = VesselModel::default();
        let count = (base.count as f64 * diag / 6.0f64.hypot(6.0)).round() as usize;
        PhantomSpec {
            vessels: VesselModel { count, ..base },
            speckle: 0.5,
            ..Self::smooth(geometry, seed)
        }
    }

    /// Anatomy drawn from `seed`: layer depths, choroidal thickness and wave
    /// phases vary between subjects while staying in a normal adult range.
    pub fn varied(geometry: VolumeGeometry, seed: u64, realistic: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA11C_E5ED_0000_0000);
        let mut wave = |amp: (f64, f64)| Wave {
            amplitude_um: rng.gen_range(amp.0..amp.1),
            cycles_x: rng.gen_range(0.5..1.2),
            cycles_y: rng.gen_range(0.5..1.2),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        };
        let shared = [wave((10.0, 25.0)), wave((5.0, 15.0))];
        let ilm_wave = wave((15.0, 35.0));
        let csi_wave = wave((5.0, 20.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0DE7_7450_0000_0000);
        let ilm = rng.gen_range(350.0..480.0);
        let bmeis = ilm + rng.gen_range(230.0..290.0);
        let bm = bmeis + rng.gen_range(50.0..70.0);
        let csi = bm + rng.gen_range(170.0..260.0);
        let base = if realistic {
            Self::realistic(geometry, seed)
        } else {
            Self::smooth(geometry, seed)
        };
        PhantomSpec {
            ilm: SurfaceShape {
                depth_um: ilm,
                waves: vec![ilm_wave],
            },
            bmeis: SurfaceShape {
                depth_um: bmeis,
                waves: shared.to_vec(),
            },
            bm: SurfaceShape {
                depth_um: bm,
                waves: shared.to_vec(),
            },
            csi: SurfaceShape {
                depth_um: csi,
                waves: vec![shared[0], shared[1], csi_wave],
            },
            ..base
        }
    }

    fn validate_scalars(&self) -> Result<()> {
        self.geometry.validate()?;
        let l = &self.levels;
        for (name, v) in [
            ("vitreous", l.vitreous),
            ("retina", l.retina),
            ("rpe", l.rpe),
            ("choroid", l.choroid),
            ("sclera", l.sclera),
            ("lumen", self.vessels.lumen),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Phantom(format!("{name} level {v} outside [0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.speckle) {
            return Err(Error::Phantom(format!(
                "speckle {} outside [0, 1)",
                self.speckle
            )));
        }
        let v = &self.vessels;
        if v.count > 0
            && !(v.radius_min_um > 0.0
                && v.radius_min_um <= v.radius_max_um
                && v.gap_min_um >= 0.0
                && v.gap_min_um <= v.gap_max_um)
        {
            return Err(Error::Phantom(format!("invalid vessel model {v:?}")));
        }
        Ok(())
    }

    fn boundaries_at(&self, x: usize, y: usize) -> [f64; 4] {
        let g = &self.geometry;
        let (fx, fy) = (x as f64 / g.nx as f64, y as f64 / g.ny as f64);
        let dz = g.spacing_um(Axis::Z);
        [&self.ilm, &self.bmeis, &self.bm, &self.csi].map(|s| s.depth_at(fx, fy) / dz)
    }

    /// Checks ordering and minimum gaps at every column.
    pub fn validate(&self) -> Result<()> {
        self.validate_scalars()?;
        let g = &self.geometry;
        const NAMES: [&str; 4] = ["ILM", "BMEIS", "BM", "CSI"];
        for y in 0..g.ny {
            for x in 0..g.nx {
                let b = self.boundaries_at(x, y);
                if b[0] < 0.0 || b[3] > (g.nz - 1) as f64 {
                    return Err(Error::PhantomOrdering {
                        x,
                        y,
                        detail: format!("surfaces span z {:.2}..{:.2} outside the grid", b[0], b[3]),
                    });
                }
                for i in 0..3 {
                    if b[i + 1] - b[i] < MIN_SURFACE_GAP {
                        return Err(Error::PhantomOrdering {
                            x,
                            y,
                            detail: format!(
                                "{} at z={:.2} is not {MIN_SURFACE_GAP} voxels above {} at z={:.2}",
                                NAMES[i],
                                b[i],
                                NAMES[i + 1],
                                b[i + 1]
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Generated volume and its level-0 ground truth.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub volume: OctVolume,
    pub ilm: Surface,
    pub bmeis: Surface,
    pub bm: Surface,
    pub csi: Surface,
}

impl Phantom {
    pub fn surfaces(&self) -> [&Surface; 4] {
        [&self.ilm, &self.bmeis, &self.bm, &self.csi]
    }
}

#[derive(Debug, Clone, Copy)]
struct Vessel {
    // unit normal of the axis in the xy plane and signed offset of the axis (µm)
    normal: (f64, f64),
    offset: f64,
    radius: f64,
    gap: f64,
}

fn place_vessels(spec: &PhantomSpec) -> Vec<Vessel> {
    let v = &spec.vessels;
    let g = &spec.geometry;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let half_diag = 0.5 * 1000.0 * g.extent_x_mm.hypot(g.extent_y_mm);
    (0..v.count)
        .map(|_| {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            Vessel {
                normal: (-theta.sin(), theta.cos()),
                offset: rng.gen_range(-half_diag..half_diag),
                radius: rng.gen_range(v.radius_min_um..=v.radius_max_um),
                gap: rng.gen_range(v.gap_min_um..=v.gap_max_um),
            }
        })
        .collect()
}

#[inline]
fn below(z: f64, boundary: f64) -> f64 {
    (z + 0.5 - boundary).clamp(0.0, 1.0)
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let g = spec.geometry;
    let (nx, ny, nz) = (g.nx, g.ny, g.nz);
    let dz = g.spacing_um(Axis::Z);
    let l = spec.levels;
    let steps = [
        l.retina - l.vitreous,
        l.rpe - l.retina,
        l.choroid - l.rpe,
        l.sclera - l.choroid,
    ];
    let vessels = place_vessels(spec);
    let (cx, cy) = (500.0 * g.extent_x_mm, 500.0 * g.extent_y_mm);
    let noise_seed = spec.noise_seed.unwrap_or(spec.seed) ^ 0x5EED_0F5E_C71E_0000;

    let mut data = vec![0.0f64; g.len()];
    crate::par::for_each_chunk_mut(&mut data, nx * nz, |y, bscan| {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        rng.set_stream(y as u64);
        let mut lumens: Vec<(f64, f64)> = Vec::new();
        for x in 0..nx {
            let b = spec.boundaries_at(x, y);
            lumens.clear();
            let (px, py) = g.column_center_um(x, y);
            for v in &vessels {
                let u = (px - cx) * v.normal.0 + (py - cy) * v.normal.1 - v.offset;
                if u.abs() >= v.radius {
                    continue;
                }
                let half = (v.radius * v.radius - u * u).sqrt();
                let centre = b[3] * dz - v.gap - v.radius;
                let top = ((centre - half) / dz).max(b[2]);
                let bottom = ((centre + half) / dz).min(b[3]);
                if bottom > top {
                    lumens.push((top, bottom));
                }
            }
            merge_intervals(&mut lumens);
            let column = &mut bscan[x * nz..(x + 1) * nz];
            for (z, out) in column.iter_mut().enumerate() {
                let zf = z as f64;
                let mut v = l.vitreous;
                for (step, &bound) in steps.iter().zip(b.iter()) {
                    v += step * below(zf, bound);
                }
                for &(top, bottom) in &lumens {
                    v += (spec.vessels.lumen - l.choroid) * (below(zf, top) - below(zf, bottom));
                }
                if spec.speckle > 0.0 {
                    v *= 1.0 + spec.speckle * rng.gen_range(-1.0..1.0);
                }
                // stored at 8-bit precision, like exported scanner data
                *out = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
            }
        }
    });

    let truth = |i: usize| Surface::from_fn(0, nx, ny, |x, y| spec.boundaries_at(x, y)[i]);
    Ok(Phantom {
        volume: OctVolume::from_data(g, data)?,
        ilm: truth(0),
        bmeis: truth(1),
        bm: truth(2),
        csi: truth(3),
    })
}

fn merge_intervals(iv: &mut Vec<(f64, f64)>) {
    if iv.len() < 2 {
        return;
    }
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
    for &(a, b) in iv.iter() {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    *iv = merged;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_geometry() -> VolumeGeometry {
        VolumeGeometry::new(24, 16, 1024, 0.72, 0.48, 2.0).unwrap()
    }

    fn flat_spec(planes_um: [f64; 4]) -> PhantomSpec {
        PhantomSpec {
            ilm: SurfaceShape::flat(planes_um[0]),
            bmeis: SurfaceShape::flat(planes_um[1]),
            bm: SurfaceShape::flat(planes_um[2]),
            csi: SurfaceShape::flat(planes_um[3]),
            ..PhantomSpec::smooth(small_geometry(), 1)
        }
    }

    #[test]
    fn flat_noise_free_is_piecewise_constant() {
        let dz = small_geometry().spacing_um(Axis::Z);
        let planes = [200.0, 400.0, 500.0, 700.0];
        let p = generate_phantom(&flat_spec(planes.map(|z| z * dz))).unwrap();
        let first = p.volume.column(0, 0).to_vec();
        for y in 0..16 {
            for x in 0..24 {
                assert_eq!(p.volume.column(x, y), first.as_slice());
            }
        }
        let changes: Vec<usize> = (1..first.len())
            .filter(|&z| first[z] != first[z - 1])
            .collect();
        // each plane falls on a voxel centre, which takes the half/half mix
        let expected: Vec<usize> = planes
            .iter()
            .flat_map(|&z| [z as usize, z as usize + 1])
            .collect();
        assert_eq!(changes, expected);
    }

    #[test]
    fn half_integer_planes_give_pure_steps() {
        let dz = small_geometry().spacing_um(Axis::Z);
        let planes = [200.5, 400.5, 500.5, 700.5];
        let p = generate_phantom(&flat_spec(planes.map(|z| z * dz))).unwrap();
        let c = p.volume.column(3, 3);
        let changes: Vec<usize> = (1..c.len()).filter(|&z| c[z] != c[z - 1]).collect();
        assert_eq!(changes, vec![201, 401, 501, 701]);
    }

    #[test]
    fn same_seed_same_volume() {
        let spec = PhantomSpec::realistic(small_geometry(), 7);
        let a = generate_phantom(&spec).unwrap();
        let b = generate_phantom(&spec).unwrap();
        assert_eq!(a.volume, b.volume);
        let other = generate_phantom(&PhantomSpec {
            noise_seed: Some(8),
            ..spec
        })
        .unwrap();
        assert_ne!(a.volume, other.volume);
        assert_eq!(a.csi, other.csi);
    }

    #[test]
    fn flat_thickness_matches_spacing() {
        let dz = 2000.0 / 1024.0;
        let spec = flat_spec([300.0 * dz, 450.0 * dz, 600.0 * dz, 700.0 * dz]);
        let p = generate_phantom(&spec).unwrap();
        let t = (p.csi.get(5, 5) - p.bm.get(5, 5)) * dz;
        assert!((t - 195.3125).abs() < 1e-9);
    }

    #[test]
    fn ordering_violation_names_column() {
        let mut spec = PhantomSpec::smooth(small_geometry(), 1);
        spec.bm = SurfaceShape {
            depth_um: 690.0,
            waves: vec![Wave {
                amplitude_um: 20.0,
                cycles_x: 1.0,
                cycles_y: 0.0,
                phase: 0.0,
            }],
        };
        spec.bmeis = SurfaceShape::flat(690.0);
        match generate_phantom(&spec) {
            Err(Error::PhantomOrdering { x, y, .. }) => assert_eq!((x, y), (0, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ground_truth_ordered_with_gaps() {
        for seed in 0..5 {
            let spec = PhantomSpec::varied(small_geometry(), seed, true);
            let p = generate_phantom(&spec).unwrap();
            let s = p.surfaces();
            for i in 0..3 {
                for (a, b) in s[i].heights().iter().zip(s[i + 1].heights()) {
                    assert!(b - a >= MIN_SURFACE_GAP);
                }
            }
        }
    }

    #[test]
    fn vitreous_darker_than_retina() {
        let p = generate_phantom(&PhantomSpec::realistic(small_geometry(), 3)).unwrap();
        let g = p.volume.geometry();
        let mut top = 0.0;
        let mut retina = 0.0;
        let (mut nt, mut nr) = (0, 0);
        for y in 0..g.ny {
            for x in 0..g.nx {
                let c = p.volume.column(x, y);
                for (z, v) in c.iter().enumerate() {
                    if z < g.nz / 4 {
                        top += v;
                        nt += 1;
                    }
                    let zf = z as f64;
                    if zf > p.ilm.get(x, y) + 2.0 && zf < p.bmeis.get(x, y) - 2.0 {
                        retina += v;
                        nr += 1;
                    }
                }
            }
        }
        assert!(top / (nt as f64) < retina / (nr as f64));
    }

    #[test]
    fn vessels_darken_the_choroid() {
        let mut spec = PhantomSpec::smooth(small_geometry(), 11);
        spec.vessels = VesselModel {
            count: 30,
            ..VesselModel::default()
        };
        let with = generate_phantom(&spec).unwrap();
        let without = generate_phantom(&PhantomSpec::smooth(small_geometry(), 11)).unwrap();
        assert!(with.volume.mean() < without.volume.mean());
        // nothing changes outside the choroid
        let x = 4;
        let y = 4;
        let bm = with.bm.get(x, y).floor() as usize;
        assert_eq!(
            &with.volume.column(x, y)[..bm],
            &without.volume.column(x, y)[..bm]
        );
    }

    #[test]
    fn spec_toml_round_trip() {
        let spec = PhantomSpec::varied(VolumeGeometry::cirrus(), 5, true);
        let text = toml::to_string(&spec).unwrap();
        let back: PhantomSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
