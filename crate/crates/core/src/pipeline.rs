//! Five-level coarse-to-fine choroid segmentation.
//!
//! Level 4 (nz/16) finds ILM and BMEIS over full columns; level 3 finds
//! BMEIS, BM and CSI in a band hung from the up-scaled BMEIS; levels 2, 1
//! and 0 refine BM and CSI in narrow bands around the up-scaled parent. The
//! final CSI is smoothed with a thin plate spline through the thickest point
//! of each lateral patch.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::costs::{
    csi_cost_from_edge, edge_cost, gaussian_smooth_xz, vesselness, CostVolume, Polarity,
    VesselnessParams,
};
use crate::error::{Error, Result};
use crate::graphseg::{solve, GraphSegProblem, GraphStats, Separation, Smoothness};
use crate::pyramid::{upsample_z, Pyramid};
use crate::tps::fit_tps;
use crate::volume::{Axis, OctVolume, Surface, VolumeGeometry};

/// Coarsest pyramid level.
pub const TOP_LEVEL: u8 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Level4Params {
    /// Max depth change between neighbouring columns, level-4 voxels.
    pub smoothness: usize,
    /// ILM to BMEIS gap range, level-4 voxels.
    pub ilm_bmeis_gap: [usize; 2],
}

impl Default for Level4Params {
    fn default() -> Self {
        Level4Params {
            smoothness: 2,
            ilm_bmeis_gap: [2, 12],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Level3Params {
    /// Band extent above the up-scaled BMEIS, µm.
    pub above_um: f64,
    /// Band extent below the up-scaled BMEIS, µm.
    pub below_um: f64,
    pub smoothness: usize,
    /// BMEIS to BM gap range, level-3 voxels.
    pub bmeis_bm_gap: [usize; 2],
    /// BM to CSI gap range, level-3 voxels.
    pub bm_csi_gap: [usize; 2],
}

impl Default for Level3Params {
    fn default() -> Self {
        Level3Params {
            above_um: 30.0,
            below_um: 400.0,
            smoothness: 2,
            bmeis_bm_gap: [1, 8],
            bm_csi_gap: [4, 28],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineParams {
    /// Band height in µm, measured at `band_level`; the same voxel count is
    /// used at every finer level.
    pub band_um: f64,
    pub band_level: u8,
    pub smoothness: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            band_um: 86.0,
            band_level: 2,
            smoothness: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VesselStageParams {
    /// Gaussian scales in µm.
    pub scales_um: Vec<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Weight `w` of the vesselness term in the CSI cost.
    pub weight: f64,
}

impl Default for VesselStageParams {
    fn default() -> Self {
        let f = VesselnessParams::default();
        VesselStageParams {
            scales_um: f.scales_um,
            alpha1: f.alpha1,
            alpha2: f.alpha2,
            weight: 1.0,
        }
    }
}

impl VesselStageParams {
    pub fn filter(&self) -> VesselnessParams {
        VesselnessParams {
            scales_um: self.scales_um.clone(),
            alpha1: self.alpha1,
            alpha2: self.alpha2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TpsParams {
    pub enabled: bool,
    /// Lateral patch edge, µm; one control point per patch.
    pub patch_um: f64,
}

impl Default for TpsParams {
    fn default() -> Self {
        TpsParams {
            enabled: true,
            patch_um: 600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineParams {
    /// σ (voxels) of the x-z Gaussian applied before every edge cost.
    pub smoothing_sigma: f64,
    pub level4: Level4Params,
    pub level3: Level3Params,
    pub refine: RefineParams,
    pub vesselness: VesselStageParams,
    pub tps: TpsParams,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            smoothing_sigma: 1.0,
            level4: Level4Params::default(),
            level3: Level3Params::default(),
            refine: RefineParams::default(),
            vesselness: VesselStageParams::default(),
            tps: TpsParams::default(),
        }
    }
}

/// Voxel quantities derived from the µm parameters for one geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolvedBands {
    pub level3_above: usize,
    pub level3_below: usize,
    /// Refinement band is `[c - half, c + half]`.
    pub refine_half: usize,
    pub patch_x: usize,
    pub patch_y: usize,
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.smoothing_sigma > 0.0 && self.smoothing_sigma.is_finite()) {
            return bad(format!("smoothing_sigma {} must be > 0", self.smoothing_sigma));
        }
        for (name, [lo, hi]) in [
            ("level4.ilm_bmeis_gap", self.level4.ilm_bmeis_gap),
            ("level3.bmeis_bm_gap", self.level3.bmeis_bm_gap),
            ("level3.bm_csi_gap", self.level3.bm_csi_gap),
        ] {
            if lo > hi {
                return bad(format!("{name}: min {lo} exceeds max {hi}"));
            }
        }
        for (name, v) in [
            ("level3.above_um", self.level3.above_um),
            ("level3.below_um", self.level3.below_um),
            ("refine.band_um", self.refine.band_um),
            ("tps.patch_um", self.tps.patch_um),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be > 0"));
            }
        }
        if self.refine.band_level > TOP_LEVEL {
            return bad(format!("refine.band_level must be at most {TOP_LEVEL}"));
        }
        if !(self.vesselness.weight >= 0.0 && self.vesselness.weight.is_finite()) {
            return bad(format!("vesselness.weight {} must be >= 0", self.vesselness.weight));
        }
        if self.vesselness.scales_um.iter().any(|s| !(*s > 0.0)) {
            return bad("vesselness.scales_um must be positive".into());
        }
        Ok(())
    }

    /// Converts the µm settings to voxels for `geometry` (full resolution).
    pub fn resolve(&self, geometry: &VolumeGeometry) -> Result<ResolvedBands> {
        self.validate()?;
        let dz = |level: u8| geometry.spacing_um(Axis::Z) * (1u32 << level) as f64;
        let vox = |um: f64, level: u8| (um / dz(level)).round() as usize;
        let band = vox(self.refine.band_um, self.refine.band_level).max(3);
        let patch = |axis| {
            ((self.tps.patch_um / geometry.spacing_um(axis)).round() as usize).max(1)
        };
        Ok(ResolvedBands {
            level3_above: vox(self.level3.above_um, 3),
            level3_below: vox(self.level3.below_um, 3).max(1),
            refine_half: band / 2,
            patch_x: patch(Axis::X),
            patch_y: patch(Axis::Y),
        })
    }
}

fn gap(g: [usize; 2]) -> Separation {
    Separation::new(g[0], g[1])
}

#[derive(Debug, Clone)]
pub struct Level4Result {
    pub ilm: Surface,
    pub bmeis: Surface,
    pub stats: GraphStats,
}

/// Double-surface ILM/BMEIS search on the level-4 volume.
pub fn segment_level4(volume: &OctVolume, params: &PipelineParams) -> Result<Level4Result> {
    params.validate()?;
    let smoothed = gaussian_smooth_xz(volume, params.smoothing_sigma)?;
    let cost = edge_cost(&smoothed, Polarity::DarkToBright)?;
    drop(smoothed);
    let problem = GraphSegProblem::from_cost_volumes(&[&cost, &cost], None)?
        .with_smoothness(Smoothness::uniform(params.level4.smoothness))
        .with_separations(vec![gap(params.level4.ilm_bmeis_gap)])?
        .with_level(TOP_LEVEL);
    drop(cost);
    let mut set = solve(&problem)?;
    let bmeis = set.surfaces.pop().unwrap();
    let ilm = set.surfaces.pop().unwrap();
    Ok(Level4Result {
        ilm,
        bmeis,
        stats: set.stats,
    })
}

#[derive(Debug, Clone)]
pub struct Level3Result {
    pub bmeis: Surface,
    pub bm: Surface,
    pub csi: Surface,
    /// Normalised vesselness of the inverted level-3 volume.
    pub vesselness: OctVolume,
    /// Columns whose band was cut by the volume boundary.
    pub clipped_columns: usize,
    pub stats: GraphStats,
}

/// Closest surface to `centre` (in the max-norm sense, up to rounding) whose
/// neighbouring columns differ by at most `dx` / `dy`: the midpoint of the
/// largest smooth minorant and the smallest smooth majorant. Surfaces that
/// are already smooth come back unchanged.
fn smooth_centres(centre: &[i64], nx: usize, ny: usize, dx: usize, dy: usize) -> Vec<i64> {
    let (dx, dy) = (dx as i64, dy as i64);
    let envelope = |sign: i64| {
        // sign = 1: smallest majorant, sign = -1: largest minorant
        let mut e: Vec<i64> = centre.iter().map(|&c| sign * c).collect();
        for y in 0..ny {
            for x in 0..nx {
                let i = y * nx + x;
                if x > 0 {
                    e[i] = e[i].min(e[i - 1] + dx);
                }
                if y > 0 {
                    e[i] = e[i].min(e[i - nx] + dy);
                }
            }
        }
        for y in (0..ny).rev() {
            for x in (0..nx).rev() {
                let i = y * nx + x;
                if x + 1 < nx {
                    e[i] = e[i].min(e[i + 1] + dx);
                }
                if y + 1 < ny {
                    e[i] = e[i].min(e[i + nx] + dy);
                }
            }
        }
        e.into_iter().map(|v| sign * v).collect::<Vec<i64>>()
    };
    let upper = envelope(1);
    let lower = envelope(-1);
    upper
        .iter()
        .zip(&lower)
        .map(|(u, l)| (u + l).div_euclid(2))
        .collect()
}

/// Inclusive band `[c - above, c + below]` per column, clamped to `0..nz`,
/// where `c` is the rounded `centre` made `smoothness`-consistent. Returns
/// the bands and the number of clamped columns.
fn bands_around(
    centre: &Surface,
    above: usize,
    below: usize,
    nz: usize,
    smoothness: usize,
) -> (Vec<(usize, usize)>, usize) {
    let rounded: Vec<i64> = centre.heights().iter().map(|z| z.round() as i64).collect();
    let centres = smooth_centres(&rounded, centre.nx, centre.ny, smoothness, smoothness);
    let mut clipped = 0;
    let bands = centres
        .iter()
        .map(|&c| {
            let lo = c - above as i64;
            let hi = c + below as i64;
            let band = (lo.max(0), hi.min(nz as i64 - 1));
            if band != (lo, hi) {
                clipped += 1;
            }
            // a centre outside the volume still keeps one voxel of band
            let lo = band.0.min(nz as i64 - 1) as usize;
            let hi = band.1.max(lo as i64) as usize;
            (lo, hi)
        })
        .collect();
    (bands, clipped)
}

/// Triple-surface BMEIS/BM/CSI search in the band hung from the level-4 BMEIS.
pub fn segment_level3(
    volume: &OctVolume,
    bmeis4: &Surface,
    params: &PipelineParams,
) -> Result<Level3Result> {
    let g = *volume.geometry();
    let full = VolumeGeometry {
        nz: g.nz << 3,
        ..g
    };
    let bands = params.resolve(&full)?;
    if bmeis4.level != 4 || (bmeis4.nx, bmeis4.ny) != (g.nx, g.ny) {
        return Err(Error::LatticeMismatch(format!(
            "level-4 BMEIS {}x{} at level {} for a {}x{} level-3 volume",
            bmeis4.nx, bmeis4.ny, bmeis4.level, g.nx, g.ny
        )));
    }
    let centre = crate::pyramid::upscale_surface(bmeis4)?;
    let (band, clipped) = bands_around(
        &centre,
        bands.level3_above,
        bands.level3_below,
        g.nz,
        params.level3.smoothness,
    );
    if clipped > 0 {
        log::warn!("level 3: band clipped at the volume boundary in {clipped} columns");
    }

    let smoothed = gaussian_smooth_xz(volume, params.smoothing_sigma)?;
    let d2b = edge_cost(&smoothed, Polarity::DarkToBright)?;
    let b2d = edge_cost(&smoothed, Polarity::BrightToDark)?;
    drop(smoothed);
    let vessels = vesselness(&volume.inverted(), &params.vesselness.filter())?;
    let csi = csi_cost_from_edge(d2b.clone(), &vessels, params.vesselness.weight)?;
    let p3 = &params.level3;
    let problem = GraphSegProblem::from_cost_volumes(&[&d2b, &b2d, &csi], Some(band))?
        .with_smoothness(Smoothness::uniform(p3.smoothness))
        .with_separations(vec![gap(p3.bmeis_bm_gap), gap(p3.bm_csi_gap)])?
        .with_level(3);
    drop((d2b, b2d, csi));
    let mut set = solve(&problem)?;
    let csi = set.surfaces.pop().unwrap();
    let bm = set.surfaces.pop().unwrap();
    let bmeis = set.surfaces.pop().unwrap();
    Ok(Level3Result {
        bmeis,
        bm,
        csi,
        vesselness: vessels,
        clipped_columns: clipped,
        stats: set.stats,
    })
}

/// Cost used for a single-surface refinement.
#[derive(Debug, Clone, Copy)]
pub enum SurfaceCost<'a> {
    Edge(Polarity),
    /// Dark-to-bright edge plus the vesselness term; `vesselness` may be at
    /// any coarser level and is resampled to the volume's level.
    Csi { vesselness: &'a OctVolume },
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub surface: Surface,
    pub bands: Vec<(usize, usize)>,
    pub clipped_columns: usize,
    pub stats: GraphStats,
}

fn resample_to(vessels: &OctVolume, nz: usize) -> Result<OctVolume> {
    let cz = vessels.geometry().nz;
    if nz % cz != 0 || !(nz / cz).is_power_of_two() {
        return Err(Error::LatticeMismatch(format!(
            "cannot resample vesselness with nz={cz} to nz={nz}"
        )));
    }
    upsample_z(vessels, nz / cz)
}

fn surface_cost(
    smoothed: &OctVolume,
    kind: SurfaceCost<'_>,
    weight: f64,
) -> Result<CostVolume> {
    match kind {
        SurfaceCost::Edge(p) => edge_cost(smoothed, p),
        SurfaceCost::Csi { vesselness } => {
            let edge = edge_cost(smoothed, Polarity::DarkToBright)?;
            let v = resample_to(vesselness, smoothed.geometry().nz)?;
            csi_cost_from_edge(edge, &v, weight)
        }
    }
}

/// Single-surface search in `[c - half, c + half]` around the up-scaled parent.
pub fn refine_with_cost(
    cost: &CostVolume,
    parent: &Surface,
    half: usize,
    smoothness: usize,
) -> Result<Refinement> {
    let g = *cost.geometry();
    let centre = crate::pyramid::upscale_surface(parent)?;
    if (centre.nx, centre.ny) != (g.nx, g.ny) {
        return Err(Error::LatticeMismatch(format!(
            "parent surface {}x{} for a {}x{} volume",
            centre.nx, centre.ny, g.nx, g.ny
        )));
    }
    let (bands, clipped) = bands_around(&centre, half, half, g.nz, smoothness);
    if clipped > 0 {
        log::warn!(
            "level {}: band clipped at the volume boundary in {clipped} columns",
            centre.level
        );
    }
    let problem = GraphSegProblem::from_cost_volumes(&[cost], Some(bands.clone()))?
        .with_smoothness(Smoothness::uniform(smoothness))
        .with_level(centre.level);
    let mut set = solve(&problem)?;
    Ok(Refinement {
        surface: set.surfaces.pop().unwrap(),
        bands,
        clipped_columns: clipped,
        stats: set.stats,
    })
}

/// Refines `parent` (level L+1) on `volume` (level L).
pub fn refine_surface(
    volume: &OctVolume,
    parent: &Surface,
    kind: SurfaceCost<'_>,
    params: &PipelineParams,
) -> Result<Refinement> {
    let level = parent
        .level
        .checked_sub(1)
        .ok_or(Error::FinestLevel(parent.level))?;
    let g = *volume.geometry();
    let full = VolumeGeometry {
        nz: g.nz << level,
        ..g
    };
    let bands = params.resolve(&full)?;
    let smoothed = gaussian_smooth_xz(volume, params.smoothing_sigma)?;
    let cost = surface_cost(&smoothed, kind, params.vesselness.weight)?;
    drop(smoothed);
    refine_with_cost(&cost, parent, bands.refine_half, params.refine.smoothness)
}

#[derive(Debug, Clone)]
pub struct SmoothedCsi {
    pub surface: Surface,
    /// `(x µm, y µm, z voxels)` control points, one per patch.
    pub control_points: Vec<[f64; 3]>,
}

/// Thin-plate-spline smoothing of the CSI through the thickest column of
/// every `patch_um` × `patch_um` patch. Edge patches are smaller when the
/// patch size does not divide the grid.
pub fn smooth_csi(
    bm: &Surface,
    csi: &Surface,
    geometry: &VolumeGeometry,
    patch_um: f64,
) -> Result<SmoothedCsi> {
    bm.check_lattice(csi)?;
    if (bm.nx, bm.ny) != (geometry.nx, geometry.ny) {
        return Err(Error::LatticeMismatch(format!(
            "surfaces {}x{} for geometry {}x{}",
            bm.nx, bm.ny, geometry.nx, geometry.ny
        )));
    }
    if !(patch_um > 0.0) {
        return Err(Error::InvalidArgument(format!("patch size {patch_um} µm")));
    }
    let px = ((patch_um / geometry.spacing_um(Axis::X)).round() as usize).max(1);
    let py = ((patch_um / geometry.spacing_um(Axis::Y)).round() as usize).max(1);
    let (nx, ny) = (bm.nx, bm.ny);
    let mut points = Vec::new();
    for y0 in (0..ny).step_by(py) {
        for x0 in (0..nx).step_by(px) {
            let mut best = (f64::NEG_INFINITY, 0, 0);
            for y in y0..(y0 + py).min(ny) {
                for x in x0..(x0 + px).min(nx) {
                    let t = csi.get(x, y) - bm.get(x, y);
                    if t > best.0 {
                        best = (t, x, y);
                    }
                }
            }
            let (_, x, y) = best;
            let (ux, uy) = geometry.column_center_um(x, y);
            points.push([ux, uy, csi.get(x, y)]);
        }
    }
    let tps = fit_tps(&points)?;
    let top = (geometry.nz - 1) as f64;
    let mut surface = Surface::from_fn(csi.level, nx, ny, |x, y| {
        let (ux, uy) = geometry.column_center_um(x, y);
        tps.evaluate(ux, uy)
    });
    for (s, &b) in surface.heights_mut().iter_mut().zip(bm.heights()) {
        *s = s.clamp(b, top.max(b));
    }
    Ok(SmoothedCsi {
        surface,
        control_points: points,
    })
}

/// Choroidal thickness grid in µm.
#[derive(Debug, Clone, PartialEq)]
pub struct ThicknessMap {
    pub nx: usize,
    pub ny: usize,
    pub um: Vec<f64>,
}

impl ThicknessMap {
    pub fn from_surfaces(bm: &Surface, csi: &Surface, geometry: &VolumeGeometry) -> Result<Self> {
        bm.check_lattice(csi)?;
        let dz = geometry.spacing_um(Axis::Z);
        Ok(ThicknessMap {
            nx: bm.nx,
            ny: bm.ny,
            um: csi
                .heights()
                .iter()
                .zip(bm.heights())
                .map(|(c, b)| (c - b) * dz)
                .collect(),
        })
    }

    pub fn constant(nx: usize, ny: usize, um: f64) -> Self {
        ThicknessMap {
            nx,
            ny,
            um: vec![um; nx * ny],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.um[y * self.nx + x]
    }
}

/// Mean thickness over columns whose centre lies within `radius_mm` of the
/// central column `(nx / 2, ny / 2)`. Returns the mean and the column count.
pub fn mean_thickness_in_circle(
    map: &ThicknessMap,
    geometry: &VolumeGeometry,
    radius_mm: f64,
) -> Result<(f64, usize)> {
    if (map.nx, map.ny) != (geometry.nx, geometry.ny) {
        return Err(Error::LatticeMismatch(format!(
            "thickness map {}x{} for geometry {}x{}",
            map.nx, map.ny, geometry.nx, geometry.ny
        )));
    }
    if !(radius_mm >= 0.0 && radius_mm.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius {radius_mm} mm")));
    }
    let (cx, cy) = geometry.column_center_um(geometry.nx / 2, geometry.ny / 2);
    let r = radius_mm * 1000.0;
    let half = [cx, geometry.extent_x_mm * 1000.0 - cx, cy, geometry.extent_y_mm * 1000.0 - cy];
    if half.iter().any(|&h| r > h) {
        log::warn!("circle of radius {radius_mm} mm extends past the scan; using in-grid columns only");
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..map.ny {
        for x in 0..map.nx {
            let (ux, uy) = geometry.column_center_um(x, y);
            if (ux - cx).hypot(uy - cy) <= r {
                sum += map.get(x, y);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument(format!(
            "no column centre within {radius_mm} mm of the centre"
        )));
    }
    Ok((sum / n as f64, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub name: &'static str,
    pub elapsed: Duration,
    pub graph: Option<GraphStats>,
    pub clipped_columns: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub params: PipelineParams,
    pub bands: ResolvedBands,
    pub stages: Vec<StageRecord>,
    /// Rough upper bound on simultaneously live buffers, bytes.
    pub peak_memory_estimate: usize,
    pub control_points: usize,
    /// Set when the input was zero-padded in z to this height.
    pub padded_nz: Option<usize>,
}

impl Provenance {
    pub fn total_elapsed(&self) -> Duration {
        self.stages.iter().map(|s| s.elapsed).sum()
    }

    /// Human-readable `key = value` lines. Timing lines are the only
    /// run-dependent content and are omitted when `timings` is false.
    pub fn to_text(&self, timings: bool) -> String {
        let mut s = String::new();
        let b = &self.bands;
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "bands.level3_above_voxels = {}", b.level3_above);
        let _ = writeln!(s, "bands.level3_below_voxels = {}", b.level3_below);
        let _ = writeln!(s, "bands.refine_voxels = {}", 2 * b.refine_half + 1);
        let _ = writeln!(s, "tps.patch_voxels = {}x{}", b.patch_x, b.patch_y);
        let _ = writeln!(s, "tps.control_points = {}", self.control_points);
        if let Some(nz) = self.padded_nz {
            let _ = writeln!(s, "input.padded_nz = {nz}");
        }
        let _ = writeln!(s, "memory.peak_estimate_bytes = {}", self.peak_memory_estimate);
        for st in &self.stages {
            if let Some(g) = &st.graph {
                let _ = writeln!(s, "stage.{}.graph_nodes = {}", st.name, g.nodes);
                let _ = writeln!(s, "stage.{}.graph_arcs = {}", st.name, g.arcs);
                let _ = writeln!(s, "stage.{}.graph_bytes = {}", st.name, g.memory_bytes);
            }
            if st.clipped_columns > 0 {
                let _ = writeln!(s, "stage.{}.clipped_columns = {}", st.name, st.clipped_columns);
            }
            if timings {
                let _ = writeln!(s, "stage.{}.seconds = {:.3}", st.name, st.elapsed.as_secs_f64());
            }
        }
        if timings {
            let _ = writeln!(s, "total.seconds = {:.3}", self.total_elapsed().as_secs_f64());
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct ChoroidSegmentation {
    pub geometry: VolumeGeometry,
    pub ilm4: Surface,
    pub bmeis4: Surface,
    pub bmeis3: Surface,
    /// BM per level, index = level (0..=3).
    pub bm_levels: Vec<Surface>,
    /// Unsmoothed CSI per level, index = level (0..=3).
    pub csi_levels: Vec<Surface>,
    pub bm: Surface,
    /// Level-0 CSI before smoothing, clamped to lie on or below BM.
    pub csi: Surface,
    pub csi_smoothed: Surface,
    pub control_points: Vec<[f64; 3]>,
    pub thickness: ThicknessMap,
    pub provenance: Provenance,
}

struct Stages {
    records: Vec<StageRecord>,
    peak: usize,
}

impl Stages {
    fn run<T>(
        &mut self,
        name: &'static str,
        live_bytes: usize,
        f: impl FnOnce() -> Result<T>,
        info: impl Fn(&T) -> (Option<GraphStats>, usize),
    ) -> Result<T> {
        let t0 = Instant::now();
        let out = f().map_err(|e| e.in_stage(name))?;
        let (graph, clipped_columns) = info(&out);
        self.peak = self
            .peak
            .max(live_bytes + graph.map_or(0, |g| g.memory_bytes));
        self.records.push(StageRecord {
            name,
            elapsed: t0.elapsed(),
            graph,
            clipped_columns,
        });
        Ok(out)
    }
}

/// Full pipeline on a full-resolution volume.
pub fn segment_choroid(volume: &OctVolume, params: &PipelineParams) -> Result<ChoroidSegmentation> {
    let geometry = *volume.geometry();
    let bands = params.resolve(&geometry).map_err(|e| e.in_stage("params"))?;
    let factor = 1usize << TOP_LEVEL;
    let padded_nz = geometry.nz.div_ceil(factor) * factor;
    let mut stages = Stages {
        records: Vec::new(),
        peak: 0,
    };
    let t0 = Instant::now();
    let input = if padded_nz != geometry.nz {
        log::info!("zero-padding nz {} to {padded_nz}", geometry.nz);
        volume.zero_padded(padded_nz)
    } else {
        volume.clone()
    };
    let pyramid = Pyramid::build(input, TOP_LEVEL).map_err(|e| e.in_stage("pyramid"))?;
    let pyr_bytes = pyramid.memory_bytes();
    stages.records.push(StageRecord {
        name: "pyramid",
        elapsed: t0.elapsed(),
        graph: None,
        clipped_columns: 0,
    });
    let level_bytes = |l: u8| pyramid.level(l).data().len() * 8;

    let l4 = stages.run(
        "level4",
        pyr_bytes + 2 * level_bytes(4),
        || segment_level4(pyramid.level(4), params),
        |r| (Some(r.stats), 0),
    )?;
    let l3 = stages.run(
        "level3",
        pyr_bytes + 6 * level_bytes(3),
        || segment_level3(pyramid.level(3), &l4.bmeis, params),
        |r| (Some(r.stats), r.clipped_columns),
    )?;

    let mut bm = l3.bm.clone();
    let mut csi = l3.csi.clone();
    let mut bm_levels = vec![l3.bm.clone()];
    let mut csi_levels = vec![l3.csi.clone()];
    const BM_NAMES: [&str; 3] = ["level0.bm", "level1.bm", "level2.bm"];
    const CSI_NAMES: [&str; 3] = ["level0.csi", "level1.csi", "level2.csi"];
    for level in (0..3u8).rev() {
        let v = pyramid.level(level);
        let smoothed = stages.run(
            ["level0.smooth", "level1.smooth", "level2.smooth"][level as usize],
            pyr_bytes + level_bytes(level),
            || gaussian_smooth_xz(v, params.smoothing_sigma),
            |_| (None, 0),
        )?;
        let live = pyr_bytes + 2 * level_bytes(level);
        let refined_bm = stages.run(
            BM_NAMES[level as usize],
            live,
            || {
                let cost = edge_cost(&smoothed, Polarity::BrightToDark)?;
                refine_with_cost(&cost, &bm, bands.refine_half, params.refine.smoothness)
            },
            |r| (Some(r.stats), r.clipped_columns),
        )?;
        let refined_csi = stages.run(
            CSI_NAMES[level as usize],
            live + 3 * level_bytes(level),
            || {
                let cost = surface_cost(
                    &smoothed,
                    SurfaceCost::Csi {
                        vesselness: &l3.vesselness,
                    },
                    params.vesselness.weight,
                )?;
                refine_with_cost(&cost, &csi, bands.refine_half, params.refine.smoothness)
            },
            |r| (Some(r.stats), r.clipped_columns),
        )?;
        bm = refined_bm.surface;
        csi = refined_csi.surface;
        bm_levels.insert(0, bm.clone());
        csi_levels.insert(0, csi.clone());
    }

    // the two refinements are independent; keep CSI on or below BM
    let top = (geometry.nz - 1) as f64;
    let mut csi0 = csi;
    for (c, &b) in csi0.heights_mut().iter_mut().zip(bm.heights()) {
        *c = c.max(b).min(top.max(b));
    }
    let mut bm0 = bm;
    for b in bm0.heights_mut() {
        *b = b.min(top);
    }

    let (csi_smoothed, control_points) = if params.tps.enabled {
        let s = stages.run(
            "tps",
            pyr_bytes,
            || smooth_csi(&bm0, &csi0, &geometry, params.tps.patch_um),
            |_| (None, 0),
        )?;
        (s.surface, s.control_points)
    } else {
        (csi0.clone(), Vec::new())
    };
    let thickness = ThicknessMap::from_surfaces(&bm0, &csi_smoothed, &geometry)?;

    Ok(ChoroidSegmentation {
        geometry,
        ilm4: l4.ilm,
        bmeis4: l4.bmeis,
        bmeis3: l3.bmeis,
        bm_levels,
        csi_levels,
        bm: bm0,
        csi: csi0,
        csi_smoothed,
        thickness,
        provenance: Provenance {
            params: params.clone(),
            bands,
            stages: stages.records,
            peak_memory_estimate: stages.peak,
            control_points: control_points.len(),
            padded_nz: (padded_nz != geometry.nz).then_some(padded_nz),
        },
        control_points,
    })
}
