//! z-direction multi-resolution pyramid.
//!
//! Level `L` divides `nz` by `2^L`; x and y are never down-sampled. Coarse
//! voxel `k` is the mean of fine voxels `[2k, 2k + 1]`, so its centre sits at
//! fine coordinate `2k + 0.5`. Surface up-scaling uses the same convention.

use crate::error::{Error, Result};
use crate::volume::{OctVolume, Surface, VolumeGeometry};

/// Mean-pools `factor`-long z blocks. `factor` must be a power of two dividing nz.
pub fn downsample_z(volume: &OctVolume, factor: usize) -> Result<OctVolume> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "down-sampling factor {factor} is not a power of two"
        )));
    }
    let g = volume.geometry();
    if g.nz % factor != 0 {
        return Err(Error::NotDivisible { nz: g.nz, factor });
    }
    if factor == 1 {
        return Ok(volume.clone());
    }
    let level = factor.trailing_zeros() as u8;
    let coarse = g.at_level(level)?;
    let (nx, nz, cz) = (g.nx, g.nz, coarse.nz);
    let src = volume.data();
    let mut data = vec![0.0; coarse.len()];
    let inv = 1.0 / factor as f64;
    crate::par::for_each_chunk_mut(&mut data, nx * cz, |y, out| {
        let bscan = &src[y * nx * nz..(y + 1) * nx * nz];
        for (column, fine) in out.chunks_mut(cz).zip(bscan.chunks(nz)) {
            for (o, block) in column.iter_mut().zip(fine.chunks(factor)) {
                *o = block.iter().sum::<f64>() * inv;
            }
        }
    });
    OctVolume::from_data(coarse, data)
}

/// Linear z interpolation onto a grid `factor` times finer, using the same
/// block-centre convention as [`downsample_z`]. Values beyond the outermost
/// coarse centres are held constant.
pub fn upsample_z(volume: &OctVolume, factor: usize) -> Result<OctVolume> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "up-sampling factor {factor} is not a power of two"
        )));
    }
    if factor == 1 {
        return Ok(volume.clone());
    }
    let g = volume.geometry();
    let (nx, cz) = (g.nx, g.nz);
    let fz = cz * factor;
    let fine = VolumeGeometry { nz: fz, ..*g };
    let taps: Vec<(usize, usize, f64)> = (0..fz)
        .map(|z| {
            let c = ((z as f64 - (factor as f64 - 1.0) / 2.0) / factor as f64)
                .clamp(0.0, (cz - 1) as f64);
            let i0 = c.floor() as usize;
            let i1 = (i0 + 1).min(cz - 1);
            (i0, i1, c - i0 as f64)
        })
        .collect();
    let src = volume.data();
    let mut data = vec![0.0; fine.len()];
    crate::par::for_each_chunk_mut(&mut data, nx * fz, |y, out| {
        let bscan = &src[y * nx * cz..(y + 1) * nx * cz];
        for (column, coarse) in out.chunks_mut(fz).zip(bscan.chunks(cz)) {
            for (o, &(i0, i1, t)) in column.iter_mut().zip(&taps) {
                *o = coarse[i0] * (1.0 - t) + coarse[i1] * t;
            }
        }
    });
    OctVolume::from_data(fine, data)
}

/// Volumes at levels `0..=top`, level `L` holding `nz / 2^L` samples per column.
#[derive(Debug, Clone)]
pub struct Pyramid {
    levels: Vec<OctVolume>,
}

impl Pyramid {
    pub fn build(volume: OctVolume, top: u8) -> Result<Self> {
        let nz = volume.geometry().nz;
        let factor = 1usize << top;
        if nz % factor != 0 {
            return Err(Error::NotDivisible { nz, factor });
        }
        let mut levels = vec![volume];
        for _ in 0..top {
            let next = downsample_z(levels.last().unwrap(), 2)?;
            levels.push(next);
        }
        Ok(Pyramid { levels })
    }

    pub fn top(&self) -> u8 {
        (self.levels.len() - 1) as u8
    }

    pub fn level(&self, level: u8) -> &OctVolume {
        &self.levels[level as usize]
    }

    pub fn memory_bytes(&self) -> usize {
        self.levels.iter().map(|v| v.data().len() * 8).sum()
    }
}

/// Maps a surface one level finer: `z ↦ 2z + 0.5`.
pub fn upscale_surface(surface: &Surface) -> Result<Surface> {
    if surface.level == 0 {
        return Err(Error::FinestLevel(0));
    }
    let mut s = surface.map(|z| 2.0 * z + 0.5);
    s.level = surface.level - 1;
    Ok(s)
}

/// Up-scales repeatedly until `target` level.
pub fn upscale_to(surface: &Surface, target: u8) -> Result<Surface> {
    if target > surface.level {
        return Err(Error::InvalidArgument(format!(
            "cannot up-scale level {} to coarser level {target}",
            surface.level
        )));
    }
    let mut s = surface.clone();
    while s.level > target {
        s = upscale_surface(&s)?;
    }
    Ok(s)
}
