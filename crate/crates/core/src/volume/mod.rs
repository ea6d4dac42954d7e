//! OCT volume data model: geometry, intensity grid, raw-file I/O and
//! synthetic phantoms.
//!
//! Canonical memory order matches the canonical raw layout: `z` varies
//! fastest, then `x`, then `y`, so one A-scan is a contiguous slice and one
//! B-scan (fixed `y`) is a contiguous block of `nx * nz` samples. Depth `z`
//! increases posteriorly.

mod phantom;
mod raw;

pub use phantom::{
    generate_phantom, LayerLevels, Phantom, PhantomSpec, SurfaceShape, VesselModel, Wave,
};
pub use raw::{read_raw_volume, write_raw_volume, write_raw_volume_with_layout, Layout};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }
}

/// Voxel counts and physical extent (mm) of a volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeGeometry {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub extent_x_mm: f64,
    pub extent_y_mm: f64,
    pub extent_z_mm: f64,
}

impl VolumeGeometry {
    pub fn new(
        nx: usize,
        ny: usize,
        nz: usize,
        extent_x_mm: f64,
        extent_y_mm: f64,
        extent_z_mm: f64,
    ) -> Result<Self> {
        let g = VolumeGeometry {
            nx,
            ny,
            nz,
            extent_x_mm,
            extent_y_mm,
            extent_z_mm,
        };
        g.validate()?;
        Ok(g)
    }

    /// Zeiss Cirrus macular cube: 200 x 200 x 1024 voxels over 6 x 6 x 2 mm.
    pub fn cirrus() -> Self {
        VolumeGeometry {
            nx: 200,
            ny: 200,
            nz: 1024,
            extent_x_mm: 6.0,
            extent_y_mm: 6.0,
            extent_z_mm: 2.0,
        }
    }

    /// Heidelberg Spectralis EDI volume: 768 x 61 x 496 voxels over 9.2 x 7.8 x 1.9 mm.
    pub fn spectralis() -> Self {
        VolumeGeometry {
            nx: 768,
            ny: 61,
            nz: 496,
            extent_x_mm: 9.2,
            extent_y_mm: 7.8,
            extent_z_mm: 1.9,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "cirrus" => Some(Self::cirrus()),
            "spectralis" => Some(Self::spectralis()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 || self.nz < 2 {
            return Err(Error::Geometry(format!(
                "voxel counts must be at least 2, got {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        let extents = [self.extent_x_mm, self.extent_y_mm, self.extent_z_mm];
        if extents.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::Geometry(format!(
                "extents must be positive, got {extents:?}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn columns(&self) -> usize {
        self.nx * self.ny
    }

    pub fn count(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.nx,
            Axis::Y => self.ny,
            Axis::Z => self.nz,
        }
    }

    pub fn extent_mm(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.extent_x_mm,
            Axis::Y => self.extent_y_mm,
            Axis::Z => self.extent_z_mm,
        }
    }

    /// Voxel spacing along `axis` in µm.
    pub fn spacing_um(&self, axis: Axis) -> f64 {
        1000.0 * self.extent_mm(axis) / self.count(axis) as f64
    }

    pub fn spacing(&self) -> [f64; 3] {
        Axis::ALL.map(|a| self.spacing_um(a))
    }

    /// Geometry of the z-pyramid level `level` (nz divided by 2^level).
    pub fn at_level(&self, level: u8) -> Result<Self> {
        let factor = 1usize << level;
        if self.nz % factor != 0 {
            return Err(Error::NotDivisible {
                nz: self.nz,
                factor,
            });
        }
        Ok(VolumeGeometry {
            nz: self.nz / factor,
            ..*self
        })
    }

    /// Same voxel spacing with nz grown to `nz`.
    pub fn padded_to(&self, nz: usize) -> Self {
        let dz = self.extent_z_mm / self.nz as f64;
        VolumeGeometry {
            nz,
            extent_z_mm: dz * nz as f64,
            ..*self
        }
    }

    /// Physical (x, y) position in µm of the centre of column (x, y).
    pub fn column_center_um(&self, x: usize, y: usize) -> (f64, f64) {
        (
            (x as f64 + 0.5) * self.spacing_um(Axis::X),
            (y as f64 + 0.5) * self.spacing_um(Axis::Y),
        )
    }
}

pub fn voxel_to_um(geometry: &VolumeGeometry, axis: Axis, voxels: f64) -> f64 {
    voxels * geometry.spacing_um(axis)
}

/// Nearest whole number of voxels covering `um` along `axis`.
pub fn um_to_voxel(geometry: &VolumeGeometry, axis: Axis, um: f64) -> i64 {
    (um / geometry.spacing_um(axis)).round() as i64
}

/// Dense intensity grid normalised to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OctVolume {
    geometry: VolumeGeometry,
    data: Vec<f64>,
}

impl OctVolume {
    pub fn from_data(geometry: VolumeGeometry, data: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.len() {
            return Err(Error::LatticeMismatch(format!(
                "{} samples for a {}x{}x{} grid",
                data.len(),
                geometry.nx,
                geometry.ny,
                geometry.nz
            )));
        }
        Ok(OctVolume { geometry, data })
    }

    pub fn filled(geometry: VolumeGeometry, value: f64) -> Result<Self> {
        Self::from_data(geometry, vec![value; geometry.len()])
    }

    pub fn from_fn(
        geometry: VolumeGeometry,
        f: impl Fn(usize, usize, usize) -> f64 + Sync + Send,
    ) -> Result<Self> {
        geometry.validate()?;
        let (nx, nz) = (geometry.nx, geometry.nz);
        let mut data = vec![0.0; geometry.len()];
        crate::par::for_each_chunk_mut(&mut data, nx * nz, |y, bscan| {
            for (i, v) in bscan.iter_mut().enumerate() {
                *v = f(i / nz, y, i % nz);
            }
        });
        Ok(OctVolume { geometry, data })
    }

    /// 8-bit samples in canonical order mapped to `v / 255`.
    pub fn from_u8(geometry: VolumeGeometry, bytes: &[u8]) -> Result<Self> {
        Self::from_data(geometry, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (y * self.geometry.nx + x) * self.geometry.nz + z
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    /// The A-scan at (x, y).
    pub fn column(&self, x: usize, y: usize) -> &[f64] {
        let start = self.index(x, y, 0);
        &self.data[start..start + self.geometry.nz]
    }

    pub fn bscan(&self, y: usize) -> &[f64] {
        let n = self.geometry.nx * self.geometry.nz;
        &self.data[y * n..(y + 1) * n]
    }

    pub fn mean(&self) -> f64 {
        crate::par::map_range(self.geometry.ny, |y| self.bscan(y).iter().sum::<f64>())
            .into_iter()
            .sum::<f64>()
            / self.data.len() as f64
    }

    /// `1 - v` at every voxel.
    pub fn inverted(&self) -> OctVolume {
        OctVolume {
            geometry: self.geometry,
            data: self.data.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// Copy with nz grown to `nz`; new samples are zero.
    pub fn zero_padded(&self, nz: usize) -> OctVolume {
        let g = self.geometry.padded_to(nz.max(self.geometry.nz));
        let old = self.geometry.nz;
        let mut data = vec![0.0; g.len()];
        for (dst, src) in data.chunks_mut(g.nz).zip(self.data.chunks(old)) {
            dst[..old].copy_from_slice(src);
        }
        OctVolume { geometry: g, data }
    }
}

/// Terrain-style height map z(x, y) in voxel coordinates at a pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub level: u8,
    pub nx: usize,
    pub ny: usize,
    heights: Vec<f64>,
}

impl Surface {
    pub fn new(level: u8, nx: usize, ny: usize, heights: Vec<f64>) -> Result<Self> {
        if heights.len() != nx * ny {
            return Err(Error::LatticeMismatch(format!(
                "{} heights for a {nx}x{ny} surface",
                heights.len()
            )));
        }
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidArgument("non-finite surface height".into()));
        }
        Ok(Surface {
            level,
            nx,
            ny,
            heights,
        })
    }

    pub fn flat(level: u8, nx: usize, ny: usize, z: f64) -> Self {
        Surface {
            level,
            nx,
            ny,
            heights: vec![z; nx * ny],
        }
    }

    pub fn from_fn(level: u8, nx: usize, ny: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let heights = (0..ny)
            .flat_map(|y| (0..nx).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Surface {
            level,
            nx,
            ny,
            heights,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.heights[y * self.nx + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: f64) {
        self.heights[y * self.nx + x] = z;
    }

    /// Heights in row-major order (x fastest).
    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn heights_mut(&mut self) -> &mut [f64] {
        &mut self.heights
    }

    pub fn same_lattice(&self, other: &Surface) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.level == other.level
    }

    pub fn check_lattice(&self, other: &Surface) -> Result<()> {
        if self.same_lattice(other) {
            Ok(())
        } else {
            Err(Error::LatticeMismatch(format!(
                "{}x{} level {} vs {}x{} level {}",
                self.nx, self.ny, self.level, other.nx, other.ny, other.level
            )))
        }
    }

    pub fn mean(&self) -> f64 {
        self.heights.iter().sum::<f64>() / self.heights.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Surface {
        Surface {
            heights: self.heights.iter().map(|&h| f(h)).collect(),
            ..self.clone()
        }
    }

    /// Heights from level 0 truth expressed at `level` (block-centre convention).
    pub fn at_level_from_fine(&self, level: u8) -> Surface {
        assert!(level >= self.level);
        let factor = (1u32 << (level - self.level)) as f64;
        Surface {
            level,
            heights: self
                .heights
                .iter()
                .map(|h| (h - (factor - 1.0) / 2.0) / factor)
                .collect(),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cirrus_spacing_is_exact() {
        let g = VolumeGeometry::cirrus();
        assert_eq!(g.spacing(), [30.0, 30.0, 2000.0 / 1024.0]);
        assert_eq!(g.len(), 40_960_000);
    }

    #[test]
    fn spectralis_spacing() {
        let g = VolumeGeometry::spectralis();
        assert!((g.spacing_um(Axis::X) - 9200.0 / 768.0).abs() < 1e-12);
        assert!((g.spacing_um(Axis::Z) - 1900.0 / 496.0).abs() < 1e-12);
    }

    #[test]
    fn geometry_rejects_degenerate() {
        assert!(VolumeGeometry::new(1, 4, 4, 1.0, 1.0, 1.0).is_err());
        assert!(VolumeGeometry::new(4, 4, 4, 0.0, 1.0, 1.0).is_err());
        assert!(VolumeGeometry::new(4, 4, 4, 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn level_conversions_match_band_sizes() {
        let l3 = VolumeGeometry::cirrus().at_level(3).unwrap();
        assert_eq!(l3.nz, 128);
        assert_eq!(voxel_to_um(&l3, Axis::Z, 2.0), 31.25);
        assert_eq!(um_to_voxel(&l3, Axis::Z, 30.0), 2);
        assert_eq!(um_to_voxel(&l3, Axis::Z, 400.0), 26);

        let l2 = VolumeGeometry::cirrus().at_level(2).unwrap();
        assert!((voxel_to_um(&l2, Axis::Z, 11.0) - 85.9375).abs() < 1e-12);
        assert_eq!(um_to_voxel(&l2, Axis::Z, 86.0), 11);
        assert_eq!(voxel_to_um(&l2, Axis::Z, 0.0), 0.0);
    }

    #[test]
    fn um_voxel_round_trip() {
        for g in [VolumeGeometry::cirrus(), VolumeGeometry::spectralis()] {
            for axis in Axis::ALL {
                for k in 0..2000 {
                    let um = voxel_to_um(&g, axis, k as f64);
                    assert_eq!(um_to_voxel(&g, axis, um), k);
                }
            }
        }
    }

    #[test]
    fn at_level_requires_divisibility() {
        assert_eq!(VolumeGeometry::spectralis().at_level(4).unwrap().nz, 31);
        let g = VolumeGeometry::new(64, 8, 500, 6.0, 1.0, 1.9).unwrap();
        assert!(g.at_level(4).is_err());
        let padded = g.padded_to(512);
        assert_eq!(padded.at_level(4).unwrap().nz, 32);
        assert!((padded.spacing_um(Axis::Z) - g.spacing_um(Axis::Z)).abs() < 1e-12);
    }

    #[test]
    fn canonical_index_order() {
        let g = VolumeGeometry::new(2, 2, 2, 1.0, 1.0, 1.0).unwrap();
        let v = OctVolume::from_fn(g, |x, y, z| (x * 10 + y * 100 + z) as f64).unwrap();
        assert_eq!(v.data(), &[0.0, 1.0, 10.0, 11.0, 100.0, 101.0, 110.0, 111.0]);
        assert_eq!(v.column(1, 1), &[110.0, 111.0]);
    }

    #[test]
    fn zero_padding_keeps_columns() {
        let g = VolumeGeometry::new(2, 2, 3, 1.0, 1.0, 1.0).unwrap();
        let v = OctVolume::from_fn(g, |x, y, z| (x + y + z) as f64).unwrap();
        let p = v.zero_padded(4);
        assert_eq!(p.geometry().nz, 4);
        assert_eq!(p.column(1, 1), &[2.0, 3.0, 4.0, 0.0]);
    }

    #[test]
    fn fine_to_coarse_truth() {
        let s = Surface::flat(0, 2, 2, 167.5);
        assert_eq!(s.at_level_from_fine(4).get(0, 0), 10.0);
        assert_eq!(s.at_level_from_fine(1).get(1, 1), 83.5);
    }
}
