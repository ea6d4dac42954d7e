use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use choroidseg::io::{
    read_paired_csv, read_surface_csv, surface_to_csv, thickness_to_csv, to_flat_config,
    write_text,
};
use choroidseg::metrics::{
    average_surfaces, bland_altman, ColumnMask, LayerReport, PairedMeasurements,
    RepeatabilityReport,
};
use choroidseg::pipeline::{
    mean_thickness_in_circle, segment_choroid, PipelineParams, ThicknessMap, TOP_LEVEL,
};
use choroidseg::volume::{
    generate_phantom, read_raw_volume, write_raw_volume_with_layout, Axis, PhantomSpec, Surface,
    VolumeGeometry,
};
use rayon::prelude::*;

use crate::config::{
    parse_layout, require, resolved_text, EvalConfig, PhantomConfig, ReproConfig, SegmentConfig,
};
use crate::staging::Staging;
use crate::UsageError;

pub const RUN_CONFIG: &str = "run.conf";

fn out_dir(dir: &Option<PathBuf>) -> Result<&Path> {
    require(dir, "--out-dir")
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    Ok(write_text(dir.join(name), text)?)
}

pub fn segment(config: &SegmentConfig) -> Result<()> {
    let target = out_dir(&config.out_dir)?;
    if config.inputs.is_empty() {
        bail!(UsageError("no input volume given".into()));
    }
    if !(config.radius_mm >= 0.0 && config.radius_mm.is_finite()) {
        bail!(UsageError(format!("radius {} mm", config.radius_mm)));
    }
    let geometry = config.geometry.resolve()?;
    let layout = parse_layout(&config.layout)?;
    config.params.validate()?;

    let batch = config.inputs.len() > 1;
    let names: Vec<String> = config
        .inputs
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "volume".into())
        })
        .collect();
    if batch {
        let unique: HashSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            bail!(UsageError("batch inputs must have distinct file names".into()));
        }
    }
    for p in &config.inputs {
        if !p.is_file() {
            bail!(choroidseg::Error::Io {
                path: p.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "input volume not found"),
            });
        }
    }

    let staging = Staging::new(target)?;
    let dirs: Vec<PathBuf> = if batch {
        names
            .iter()
            .map(|n| staging.subdir(n))
            .collect::<Result<_>>()?
    } else {
        vec![staging.path("")]
    };
    config
        .inputs
        .par_iter()
        .zip(&dirs)
        .try_for_each(|(input, dir)| {
            segment_one(input, dir, &geometry, &layout, config)
                .with_context(|| format!("segmenting {}", input.display()))
        })?;
    write(&staging.path(""), RUN_CONFIG, &resolved_text("segment", config)?)?;
    let target = staging.commit()?;
    log::info!("outputs written to {}", target.display());
    Ok(())
}

fn segment_one(
    input: &Path,
    dir: &Path,
    geometry: &VolumeGeometry,
    layout: &choroidseg::volume::Layout,
    config: &SegmentConfig,
) -> Result<()> {
    let volume = read_raw_volume(input, geometry, layout)?;
    let seg = segment_choroid(&volume, &config.params)?;
    drop(volume);
    write(dir, "bm.csv", &surface_to_csv(&seg.bm))?;
    write(dir, "csi.csv", &surface_to_csv(&seg.csi))?;
    write(dir, "csi_smoothed.csv", &surface_to_csv(&seg.csi_smoothed))?;
    write(dir, "thickness.csv", &thickness_to_csv(&seg.thickness))?;
    let (mean, n) = mean_thickness_in_circle(&seg.thickness, geometry, config.radius_mm)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "input = {}", input.display());
    let _ = writeln!(summary, "circle.radius_mm = {}", config.radius_mm);
    let _ = writeln!(summary, "circle.columns = {n}");
    let _ = writeln!(summary, "circle.mean_thickness_um = {mean}");
    let t = &seg.thickness.um;
    let _ = writeln!(
        summary,
        "map.mean_thickness_um = {}",
        t.iter().sum::<f64>() / t.len() as f64
    );
    let _ = writeln!(summary, "map.min_thickness_um = {}", t.iter().copied().fold(f64::INFINITY, f64::min));
    let _ = writeln!(summary, "map.max_thickness_um = {}", t.iter().copied().fold(0.0, f64::max));
    write(dir, "summary.txt", &summary)?;
    let mut prov = String::new();
    let _ = writeln!(prov, "input = {}", input.display());
    let _ = writeln!(prov, "layout = {layout}");
    prov.push_str(&to_flat_config(geometry)?.lines().map(|l| format!("geometry.{l}\n")).collect::<String>());
    prov.push_str(&seg.provenance.to_text(true));
    write(dir, "provenance.txt", &prov)?;
    Ok(())
}

pub fn phantom(config: &PhantomConfig) -> Result<()> {
    let target = out_dir(&config.out_dir)?;
    let layout = parse_layout(&config.layout)?;
    let spec = match &config.spec {
        Some(s) => PhantomSpec {
            noise_seed: config.noise_seed.or(s.noise_seed),
            ..s.clone()
        },
        None => PhantomSpec {
            noise_seed: config.noise_seed,
            ..PhantomSpec::varied(config.geometry.resolve()?, config.seed, config.realistic)
        },
    };
    let p = generate_phantom(&spec)?;
    let staging = Staging::new(target)?;
    let dir = staging.path("");
    write_raw_volume_with_layout(&p.volume, dir.join("volume.img"), &layout)?;
    for (name, s) in ["ilm", "bmeis", "bm", "csi"].iter().zip(p.surfaces()) {
        write(&dir, &format!("{name}.csv"), &surface_to_csv(s))?;
    }
    let thickness = ThicknessMap::from_surfaces(&p.bm, &p.csi, &spec.geometry)?;
    write(&dir, "thickness.csv", &thickness_to_csv(&thickness))?;
    write(&dir, "spec.conf", &to_flat_config(&spec)?)?;
    let resolved = PhantomConfig {
        spec: Some(spec.clone()),
        ..config.clone()
    };
    write(&dir, RUN_CONFIG, &resolved_text("phantom", &resolved)?)?;
    staging.commit()?;
    Ok(())
}

fn layer(path: &Option<PathBuf>, flag: &str) -> Result<Surface> {
    let p = require(path, flag)?;
    read_surface_csv(p).with_context(|| format!("reading {flag}"))
}

pub fn eval(config: &EvalConfig) -> Result<()> {
    let target = out_dir(&config.out_dir)?;
    let geometry = config.geometry.resolve()?;
    let test_bm = layer(&config.test_bm, "--test-bm")?;
    let test_csi = layer(&config.test_csi, "--test-csi")?;
    let mut ref_bm = layer(&config.ref_bm, "--ref-bm")?;
    let mut ref_csi = layer(&config.ref_csi, "--ref-csi")?;
    let two_graders = match (&config.ref2_bm, &config.ref2_csi) {
        (None, None) => false,
        (Some(_), Some(_)) => {
            ref_bm = average_surfaces(&ref_bm, &layer(&config.ref2_bm, "--ref2-bm")?)?;
            ref_csi = average_surfaces(&ref_csi, &layer(&config.ref2_csi, "--ref2-csi")?)?;
            true
        }
        _ => bail!(UsageError("--ref2-bm and --ref2-csi go together".into())),
    };
    if (test_bm.nx, test_bm.ny) != (geometry.nx, geometry.ny) {
        bail!(choroidseg::Error::LatticeMismatch(format!(
            "surfaces are {}x{} but the geometry is {}x{}",
            test_bm.nx, test_bm.ny, geometry.nx, geometry.ny
        )));
    }
    if test_bm.level > TOP_LEVEL {
        bail!(choroidseg::Error::LatticeMismatch(format!("surface level {}", test_bm.level)));
    }
    let dz = geometry.spacing_um(Axis::Z) * (1u32 << test_bm.level) as f64;
    let mask = if config.mask_bscans.is_empty() {
        None
    } else {
        Some(ColumnMask::bscans(geometry.nx, geometry.ny, &config.mask_bscans)?)
    };
    let report = LayerReport::evaluate(
        (&test_bm, &test_csi),
        (&ref_bm, &ref_csi),
        dz,
        mask.as_ref(),
    )?;

    // per-column thickness agreement, test vs reference
    let cols = &report.thickness.columns;
    let ids: Vec<String> = cols.iter().map(|c| format!("{}:{}", c.x, c.y)).collect();
    let t = |bm: &Surface, csi: &Surface, x, y| (csi.get(x, y) - bm.get(x, y)) * dz;
    let ba = if cols.len() >= 2 {
        let m1 = cols.iter().map(|c| t(&test_bm, &test_csi, c.x, c.y)).collect();
        let m2 = cols.iter().map(|c| t(&ref_bm, &ref_csi, c.x, c.y)).collect();
        Some(bland_altman(&PairedMeasurements::with_subjects(ids.clone(), m1, m2)?))
    } else {
        None
    };

    let staging = Staging::new(target)?;
    let dir = staging.path("");
    let mut text = String::new();
    let _ = writeln!(text, "reference = {}", if two_graders { "mean of two graders" } else { "single" });
    let _ = writeln!(text, "spacing_z_um = {dz}");
    text.push_str(&report.to_text());
    if let Some(ba) = &ba {
        let _ = writeln!(text, "thickness.bland_altman.mean_difference_um = {}", ba.mean_difference);
        let _ = writeln!(text, "thickness.bland_altman.lower_um = {}", ba.lower);
        let _ = writeln!(text, "thickness.bland_altman.upper_um = {}", ba.upper);
        write(&dir, "bland_altman_thickness.csv", &ba.to_csv(&ids))?;
    }
    write(&dir, "report.txt", &text)?;
    write(&dir, "bm_errors.csv", &report.bm.to_csv())?;
    write(&dir, "csi_errors.csv", &report.csi.to_csv())?;
    write(&dir, "thickness_errors.csv", &report.thickness.to_csv())?;
    if two_graders {
        write(&dir, "reference_bm.csv", &surface_to_csv(&ref_bm))?;
        write(&dir, "reference_csi.csv", &surface_to_csv(&ref_csi))?;
    }
    write(&dir, RUN_CONFIG, &resolved_text("eval", config)?)?;
    staging.commit()?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn repro(config: &ReproConfig) -> Result<()> {
    let target = out_dir(&config.out_dir)?;
    let pairs = read_paired_csv(require(&config.pairs, "--pairs")?)?;
    let report = RepeatabilityReport::compute(&pairs)?;
    let staging = Staging::new(target)?;
    let dir = staging.path("");
    write(&dir, "report.txt", &report.to_text())?;
    write(&dir, "bland_altman.csv", &report.bland_altman.to_csv(pairs.subjects()))?;
    write(&dir, RUN_CONFIG, &resolved_text("repro", config)?)?;
    staging.commit()?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn info(geometry: &VolumeGeometry, params: &PipelineParams) -> Result<String> {
    let mut s = String::new();
    let g = geometry;
    let _ = writeln!(s, "geometry = {}x{}x{} voxels", g.nx, g.ny, g.nz);
    let _ = writeln!(
        s,
        "extent_mm = {} x {} x {}",
        g.extent_x_mm, g.extent_y_mm, g.extent_z_mm
    );
    let _ = writeln!(
        s,
        "spacing_um = {} x {} x {}",
        g.spacing_um(Axis::X),
        g.spacing_um(Axis::Y),
        g.spacing_um(Axis::Z)
    );
    let _ = writeln!(s, "raw_bytes = {}", g.len());
    let factor = 1usize << TOP_LEVEL;
    let padded = g.nz.div_ceil(factor) * factor;
    if padded != g.nz {
        let _ = writeln!(s, "padded_nz = {padded}");
    }
    for level in 0..=TOP_LEVEL {
        let _ = writeln!(s, "level{level}.nz = {}", padded >> level);
    }
    let padded_g = g.padded_to(padded);
    let b = params.resolve(&padded_g)?;
    let _ = writeln!(s, "level3.band_voxels = {} above, {} below", b.level3_above, b.level3_below);
    let _ = writeln!(s, "refine.band_voxels = {}", 2 * b.refine_half + 1);
    let _ = writeln!(
        s,
        "tps.patches = {}x{} ({} control points)",
        b.patch_x,
        b.patch_y,
        g.nx.div_ceil(b.patch_x) * g.ny.div_ceil(b.patch_y)
    );
    s.push_str("\n# resolved pipeline parameters\n");
    s.push_str(&to_flat_config(params)?);
    Ok(s)
}
