//! Segments a Cirrus-sized phantom and prints per-surface errors and timings.
//!
//! cargo run --release -p choroidseg --example phantom_run -- [seed] [realistic|smooth] [small]

use choroidseg::pipeline::{segment_choroid, PipelineParams};
use choroidseg::volume::{generate_phantom, PhantomSpec, Surface, VolumeGeometry};

fn mean_abs_um(a: &Surface, b: &Surface, dz: f64) -> f64 {
    let n = a.heights().len() as f64;
    a.heights()
        .iter()
        .zip(b.heights())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        * dz
        / n
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let realistic = args.get(2).is_some_and(|s| s == "realistic");
    let g = if args.get(3).is_some_and(|s| s == "small") {
        VolumeGeometry::new(64, 48, 1024, 1.92, 1.44, 2.0)?
    } else {
        VolumeGeometry::cirrus()
    };
    let t0 = std::time::Instant::now();
    let phantom = generate_phantom(&PhantomSpec::varied(g, seed, realistic))?;
    println!("phantom: {:.2}s", t0.elapsed().as_secs_f64());
    let seg = segment_choroid(&phantom.volume, &PipelineParams::default())?;
    print!("{}", seg.provenance.to_text(true));
    let dz = 2000.0 / 1024.0;
    for (level, (bm, csi)) in seg.bm_levels.iter().zip(&seg.csi_levels).enumerate() {
        let f = (1u32 << level) as f64;
        let bm_t = phantom.bm.at_level_from_fine(level as u8);
        let csi_t = phantom.csi.at_level_from_fine(level as u8);
        println!(
            "level {level}: bm {:.2} um, csi {:.2} um",
            mean_abs_um(bm, &bm_t, dz * f),
            mean_abs_um(csi, &csi_t, dz * f)
        );
    }
    println!(
        "final: bm {:.2} um, csi {:.2} um (unsmoothed {:.2})",
        mean_abs_um(&seg.bm, &phantom.bm, dz),
        mean_abs_um(&seg.csi_smoothed, &phantom.csi, dz),
        mean_abs_um(&seg.csi, &phantom.csi, dz)
    );
    Ok(())
}
