//! Evaluation statistics: border and thickness errors, Dice overlap,
//! reference-standard averaging and agreement/repeatability statistics for
//! paired measurements. Standard deviations use the `n - 1` denominator.

use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};
use crate::volume::Surface;

/// z = 1.96 used for limits of agreement and the repeatability coefficient.
pub const Z95: f64 = 1.96;

/// Per-column mean of two tracings of the same surface.
pub fn average_surfaces(a: &Surface, b: &Surface) -> Result<Surface> {
    a.check_lattice(b)?;
    let heights = a
        .heights()
        .iter()
        .zip(b.heights())
        .map(|(x, y)| 0.5 * (x + y))
        .collect();
    Surface::new(a.level, a.nx, a.ny, heights)
}

/// Columns that take part in an evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMask {
    pub nx: usize,
    pub ny: usize,
    keep: Vec<bool>,
}

impl ColumnMask {
    pub fn all(nx: usize, ny: usize) -> Self {
        ColumnMask {
            nx,
            ny,
            keep: vec![true; nx * ny],
        }
    }

    /// Whole B-scans selected by 1-based index.
    pub fn bscans(nx: usize, ny: usize, one_based: &[usize]) -> Result<Self> {
        let mut keep = vec![false; nx * ny];
        for &b in one_based {
            if b == 0 || b > ny {
                return Err(Error::InvalidArgument(format!(
                    "B-scan {b} outside 1..={ny}"
                )));
            }
            keep[(b - 1) * nx..b * nx].fill(true);
        }
        Self::from_vec(nx, ny, keep)
    }

    pub fn from_vec(nx: usize, ny: usize, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != nx * ny {
            return Err(Error::LatticeMismatch(format!(
                "mask of {} entries for {nx}x{ny} columns",
                keep.len()
            )));
        }
        if !keep.iter().any(|&k| k) {
            return Err(Error::InvalidArgument("column mask selects nothing".into()));
        }
        Ok(ColumnMask { nx, ny, keep })
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.keep[y * self.nx + x]
    }

    pub fn count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    fn check(&self, s: &Surface) -> Result<()> {
        if (self.nx, self.ny) == (s.nx, s.ny) {
            Ok(())
        } else {
            Err(Error::LatticeMismatch(format!(
                "mask {}x{} vs surface {}x{}",
                self.nx, self.ny, s.nx, s.ny
            )))
        }
    }
}

/// Test/reference surface pair with the z spacing (µm per voxel) of their
/// level and an optional column mask.
#[derive(Debug, Clone, Copy)]
pub struct SurfacePairSample<'a> {
    pub test: &'a Surface,
    pub reference: &'a Surface,
    pub spacing_z_um: f64,
    pub mask: Option<&'a ColumnMask>,
}

impl<'a> SurfacePairSample<'a> {
    pub fn new(
        test: &'a Surface,
        reference: &'a Surface,
        spacing_z_um: f64,
        mask: Option<&'a ColumnMask>,
    ) -> Result<Self> {
        test.check_lattice(reference)?;
        if let Some(m) = mask {
            m.check(test)?;
        }
        if !(spacing_z_um > 0.0 && spacing_z_um.is_finite()) {
            return Err(Error::InvalidArgument(format!("z spacing {spacing_z_um} µm")));
        }
        Ok(SurfacePairSample {
            test,
            reference,
            spacing_z_um,
            mask,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnError {
    pub x: usize,
    pub y: usize,
    pub signed_um: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    pub mean_unsigned_um: f64,
    pub mean_signed_um: f64,
    /// Masked columns in row-major order.
    pub columns: Vec<ColumnError>,
}

impl ErrorSummary {
    fn from_columns(columns: Vec<ColumnError>) -> Self {
        let n = columns.len() as f64;
        let signed = columns.iter().map(|c| c.signed_um).sum::<f64>() / n;
        let unsigned = columns.iter().map(|c| c.signed_um.abs()).sum::<f64>() / n;
        ErrorSummary {
            mean_unsigned_um: unsigned,
            mean_signed_um: signed,
            columns,
        }
    }

    /// `x,y,signed_um,unsigned_um` table.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,signed_um,unsigned_um\n");
        for c in &self.columns {
            let _ = writeln!(s, "{},{},{},{}", c.x, c.y, c.signed_um, c.signed_um.abs());
        }
        s
    }
}

fn masked_columns(
    nx: usize,
    ny: usize,
    mask: Option<&ColumnMask>,
    f: impl Fn(usize) -> f64,
) -> Vec<ColumnError> {
    (0..ny)
        .flat_map(|y| (0..nx).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.map_or(true, |m| m.contains(x, y)))
        .map(|(x, y)| ColumnError {
            x,
            y,
            signed_um: f(y * nx + x),
        })
        .collect()
}

/// Signed error is `(z_test - z_ref) * spacing`: negative when the test
/// surface lies above (smaller z than) the reference.
pub fn border_errors(sample: &SurfacePairSample) -> ErrorSummary {
    let (t, r) = (sample.test.heights(), sample.reference.heights());
    let dz = sample.spacing_z_um;
    ErrorSummary::from_columns(masked_columns(
        sample.test.nx,
        sample.test.ny,
        sample.mask,
        |i| (t[i] - r[i]) * dz,
    ))
}

/// Signed error is `t_test - t_ref` with `t = (CSI - BM) * spacing`:
/// negative when the test layer is thinner.
pub fn thickness_errors(
    test_bm: &Surface,
    test_csi: &Surface,
    ref_bm: &Surface,
    ref_csi: &Surface,
    spacing_z_um: f64,
    mask: Option<&ColumnMask>,
) -> Result<ErrorSummary> {
    for s in [test_csi, ref_bm, ref_csi] {
        test_bm.check_lattice(s)?;
    }
    let sample = SurfacePairSample::new(test_bm, ref_bm, spacing_z_um, mask)?;
    let (tb, tc, rb, rc) = (
        test_bm.heights(),
        test_csi.heights(),
        ref_bm.heights(),
        ref_csi.heights(),
    );
    let dz = sample.spacing_z_um;
    Ok(ErrorSummary::from_columns(masked_columns(
        test_bm.nx,
        test_bm.ny,
        mask,
        |i| ((tc[i] - tb[i]) - (rc[i] - rb[i])) * dz,
    )))
}

/// Dice overlap `2 Σ|A ∩ B| / (Σ|A| + Σ|B|)` of per-column `[BM, CSI]`
/// intervals, lengths in voxels. Two empty layers give 1.
pub fn dice(
    a_bm: &Surface,
    a_csi: &Surface,
    b_bm: &Surface,
    b_csi: &Surface,
    mask: Option<&ColumnMask>,
) -> Result<f64> {
    for s in [a_csi, b_bm, b_csi] {
        a_bm.check_lattice(s)?;
    }
    if let Some(m) = mask {
        m.check(a_bm)?;
    }
    let (mut inter, mut total) = (0.0, 0.0);
    for y in 0..a_bm.ny {
        for x in 0..a_bm.nx {
            if mask.is_some_and(|m| !m.contains(x, y)) {
                continue;
            }
            let (a0, a1) = (a_bm.get(x, y), a_csi.get(x, y));
            let (b0, b1) = (b_bm.get(x, y), b_csi.get(x, y));
            if a1 < a0 || b1 < b0 {
                return Err(Error::InvalidArgument(format!(
                    "CSI above BM at column (x={x}, y={y})"
                )));
            }
            inter += (a1.min(b1) - a0.max(b0)).max(0.0);
            total += (a1 - a0) + (b1 - b0);
        }
    }
    if total == 0.0 {
        log::warn!("both layers are empty; Dice defined as 1");
        return Ok(1.0);
    }
    Ok(2.0 * inter / total)
}

/// The six mean errors and Dice of one BM/CSI segmentation against a
/// reference.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub bm: ErrorSummary,
    pub csi: ErrorSummary,
    pub thickness: ErrorSummary,
    pub dice: f64,
}

impl LayerReport {
    pub fn evaluate(
        test: (&Surface, &Surface),
        reference: (&Surface, &Surface),
        spacing_z_um: f64,
        mask: Option<&ColumnMask>,
    ) -> Result<Self> {
        let bm = border_errors(&SurfacePairSample::new(test.0, reference.0, spacing_z_um, mask)?);
        let csi = border_errors(&SurfacePairSample::new(test.1, reference.1, spacing_z_um, mask)?);
        let thickness =
            thickness_errors(test.0, test.1, reference.0, reference.1, spacing_z_um, mask)?;
        let dice = dice(test.0, test.1, reference.0, reference.1, mask)?;
        Ok(LayerReport {
            bm,
            csi,
            thickness,
            dice,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, e) in [("bm", &self.bm), ("csi", &self.csi), ("thickness", &self.thickness)] {
            let _ = writeln!(s, "{name}.unsigned_um = {}", e.mean_unsigned_um);
            let _ = writeln!(s, "{name}.signed_um = {}", e.mean_signed_um);
        }
        let _ = writeln!(s, "dice = {}", self.dice);
        let _ = writeln!(s, "columns = {}", self.bm.columns.len());
        s
    }
}

/// One scalar measurement pair per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedMeasurements {
    subjects: Vec<String>,
    m1: Vec<f64>,
    m2: Vec<f64>,
}

impl PairedMeasurements {
    pub fn new(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::with_subjects(
            (1..=pairs.len()).map(|i| i.to_string()).collect(),
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    }

    pub fn with_subjects(subjects: Vec<String>, m1: Vec<f64>, m2: Vec<f64>) -> Result<Self> {
        if subjects.len() != m1.len() || m1.len() != m2.len() {
            return Err(Error::Statistics(format!(
                "{} subjects with {} / {} measurements",
                subjects.len(),
                m1.len(),
                m2.len()
            )));
        }
        if m1.len() < 2 {
            return Err(Error::Statistics(format!(
                "{} subjects, need at least 2",
                m1.len()
            )));
        }
        if m1.iter().chain(&m2).any(|v| !v.is_finite()) {
            return Err(Error::Statistics("non-finite measurement".into()));
        }
        Ok(PairedMeasurements { subjects, m1, m2 })
    }

    pub fn len(&self) -> usize {
        self.m1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m1.is_empty()
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn m1(&self) -> &[f64] {
        &self.m1
    }

    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    /// `m1 - m2` per subject.
    pub fn differences(&self) -> Vec<f64> {
        self.m1.iter().zip(&self.m2).map(|(a, b)| a - b).collect()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (`n - 1` denominator).
pub fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TTest {
    Defined { t: f64, df: f64, p: f64 },
    /// All differences equal: the statistic and p are undefined.
    Degenerate { mean_difference: f64, df: f64 },
}

/// Paired two-sided t-test on `m1 - m2`.
pub fn paired_t_test(pairs: &PairedMeasurements) -> TTest {
    let d = pairs.differences();
    let df = (d.len() - 1) as f64;
    let m = mean(&d);
    let sd = sample_sd(&d);
    if sd == 0.0 {
        return TTest::Degenerate {
            mean_difference: m,
            df,
        };
    }
    let t = m / (sd / (d.len() as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    TTest::Defined { t, df, p }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlandAltman {
    pub mean_difference: f64,
    pub sd_difference: f64,
    pub lower: f64,
    pub upper: f64,
    /// `(mean of pair, m1 - m2)` per subject.
    pub points: Vec<(f64, f64)>,
}

impl BlandAltman {
    pub fn to_csv(&self, subjects: &[String]) -> String {
        let mut s = String::from("subject,mean,difference\n");
        for (id, (m, d)) in subjects.iter().zip(&self.points) {
            let _ = writeln!(s, "{id},{m},{d}");
        }
        s
    }
}

pub fn bland_altman(pairs: &PairedMeasurements) -> BlandAltman {
    let d = pairs.differences();
    let m = mean(&d);
    let sd = sample_sd(&d);
    BlandAltman {
        mean_difference: m,
        sd_difference: sd,
        lower: m - Z95 * sd,
        upper: m + Z95 * sd,
        points: pairs
            .m1
            .iter()
            .zip(&pairs.m2)
            .map(|(a, b)| (0.5 * (a + b), a - b))
            .collect(),
    }
}

/// Two-way ANOVA mean squares for `n` subjects x `k` measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaTable {
    pub n: usize,
    pub k: usize,
    /// Between subjects.
    pub bms: f64,
    /// Between measurements (sessions/raters).
    pub jms: f64,
    /// Residual.
    pub ems: f64,
}

impl AnovaTable {
    pub fn from_pairs(pairs: &PairedMeasurements) -> Self {
        let n = pairs.len();
        let k = 2;
        let grand = (pairs.m1.iter().sum::<f64>() + pairs.m2.iter().sum::<f64>()) / (2 * n) as f64;
        let row_means: Vec<f64> = pairs
            .m1
            .iter()
            .zip(&pairs.m2)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let col_means = [mean(&pairs.m1), mean(&pairs.m2)];
        let ssr = k as f64 * row_means.iter().map(|r| (r - grand).powi(2)).sum::<f64>();
        let ssc = n as f64 * col_means.iter().map(|c| (c - grand).powi(2)).sum::<f64>();
        let mut sse = 0.0;
        for (i, r) in row_means.iter().enumerate() {
            for (j, v) in [pairs.m1[i], pairs.m2[i]].iter().enumerate() {
                sse += (v - r - col_means[j] + grand).powi(2);
            }
        }
        AnovaTable {
            n,
            k,
            bms: ssr / (n - 1) as f64,
            jms: ssc / (k - 1) as f64,
            ems: sse / ((n - 1) * (k - 1)) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Icc {
    /// ICC(2,1): two-way random effects, absolute agreement, single measure.
    pub value: f64,
    /// 95% interval; `None` when undefined (no residual variance).
    pub ci: Option<(f64, f64)>,
    pub anova: AnovaTable,
    pub warning: Option<String>,
}

/// `q` quantile of the F distribution by bisection on its CDF.
pub fn f_quantile(q: f64, d1: f64, d2: f64) -> Result<f64> {
    let dist = FisherSnedecor::new(d1, d2)
        .map_err(|e| Error::Statistics(format!("F({d1}, {d2}): {e}")))?;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while dist.cdf(hi) < q {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Statistics(format!("F({d1}, {d2}) quantile {q} diverges")));
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dist.cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// ICC(2,1) with the F-based 95% confidence interval.
pub fn icc_two_way_random(pairs: &PairedMeasurements) -> Result<Icc> {
    if pairs.len() < 3 {
        return Err(Error::Statistics(format!(
            "ICC needs at least 3 subjects, got {}",
            pairs.len()
        )));
    }
    let a = AnovaTable::from_pairs(pairs);
    let (n, k) = (a.n as f64, a.k as f64);
    if a.bms == 0.0 {
        let msg = "no between-subject variance; ICC reported as 0".to_string();
        log::warn!("{msg}");
        return Ok(Icc {
            value: 0.0,
            ci: None,
            anova: a,
            warning: Some(msg),
        });
    }
    let value = (a.bms - a.ems) / (a.bms + (k - 1.0) * a.ems + k * (a.jms - a.ems) / n);
    let ci = if a.ems > 0.0 && value < 1.0 {
        icc_interval(&a, value)?
    } else {
        None
    };
    Ok(Icc {
        value,
        ci,
        anova: a,
        warning: None,
    })
}

fn icc_interval(a: &AnovaTable, icc: f64) -> Result<Option<(f64, f64)>> {
    let (n, k) = (a.n as f64, a.k as f64);
    let alpha = 0.05;
    let ca = k * icc / (n * (1.0 - icc));
    let cb = 1.0 + k * icc * (n - 1.0) / (n * (1.0 - icc));
    let v = (ca * a.jms + cb * a.ems).powi(2)
        / ((ca * a.jms).powi(2) / (k - 1.0) + (cb * a.ems).powi(2) / ((n - 1.0) * (k - 1.0)));
    if !(v.is_finite() && v > 0.0) {
        return Ok(None);
    }
    let fl = f_quantile(1.0 - alpha / 2.0, n - 1.0, v)?;
    let fu = f_quantile(1.0 - alpha / 2.0, v, n - 1.0)?;
    let spread = k * a.jms + (k * n - k - n) * a.ems;
    let lower = n * (a.bms - fl * a.ems) / (fl * spread + n * a.bms);
    let upper = n * (fu * a.bms - a.ems) / (spread + n * fu * a.bms);
    Ok(Some((lower, upper)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cv {
    pub percent: f64,
    pub subjects_used: usize,
    pub subjects_excluded: usize,
}

/// Mean over subjects of `sd(pair) / mean(pair)`, in percent. Subjects with
/// a zero mean are excluded with a warning.
pub fn cv(pairs: &PairedMeasurements) -> Result<Cv> {
    let (mut sum, mut used, mut excluded) = (0.0, 0usize, 0usize);
    for (id, (a, b)) in pairs.subjects.iter().zip(pairs.m1.iter().zip(&pairs.m2)) {
        let m = 0.5 * (a + b);
        if m == 0.0 {
            log::warn!("subject {id} has zero mean; excluded from CV");
            excluded += 1;
            continue;
        }
        let sd = (a - b).abs() / std::f64::consts::SQRT_2;
        sum += sd / m.abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::Statistics("every subject has zero mean".into()));
    }
    Ok(Cv {
        percent: 100.0 * sum / used as f64,
        subjects_used: used,
        subjects_excluded: excluded,
    })
}

/// Repeatability coefficient `1.96 * sd(m1 - m2)`.
pub fn rc(pairs: &PairedMeasurements) -> f64 {
    Z95 * sample_sd(&pairs.differences())
}

/// Repeatability summary for paired measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatabilityReport {
    pub n: usize,
    pub icc: Icc,
    pub cv: Cv,
    pub rc: f64,
    pub t_test: TTest,
    pub bland_altman: BlandAltman,
}

impl RepeatabilityReport {
    pub fn compute(pairs: &PairedMeasurements) -> Result<Self> {
        Ok(RepeatabilityReport {
            n: pairs.len(),
            icc: icc_two_way_random(pairs)?,
            cv: cv(pairs)?,
            rc: rc(pairs),
            t_test: paired_t_test(pairs),
            bland_altman: bland_altman(pairs),
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "subjects = {}", self.n);
        let _ = writeln!(s, "icc.model = ICC(2,1) two-way random, absolute agreement, single measure");
        let _ = writeln!(s, "icc.value = {}", self.icc.value);
        match self.icc.ci {
            Some((lo, hi)) => {
                let _ = writeln!(s, "icc.ci95_lower = {lo}");
                let _ = writeln!(s, "icc.ci95_upper = {hi}");
            }
            None => {
                let _ = writeln!(s, "icc.ci95 = undefined");
            }
        }
        if let Some(w) = &self.icc.warning {
            let _ = writeln!(s, "icc.warning = {w}");
        }
        let _ = writeln!(s, "cv.percent = {}", self.cv.percent);
        if self.cv.subjects_excluded > 0 {
            let _ = writeln!(s, "cv.excluded_subjects = {}", self.cv.subjects_excluded);
        }
        let _ = writeln!(s, "rc.um = {}", self.rc);
        match self.t_test {
            TTest::Defined { t, df, p } => {
                let _ = writeln!(s, "t_test.t = {t}");
                let _ = writeln!(s, "t_test.df = {df}");
                let _ = writeln!(s, "t_test.p = {p}");
            }
            TTest::Degenerate {
                mean_difference,
                df,
            } => {
                let _ = writeln!(s, "t_test.degenerate = all differences equal {mean_difference}");
                let _ = writeln!(s, "t_test.df = {df}");
            }
        }
        let ba = &self.bland_altman;
        let _ = writeln!(s, "bland_altman.mean_difference = {}", ba.mean_difference);
        let _ = writeln!(s, "bland_altman.lower = {}", ba.lower);
        let _ = writeln!(s, "bland_altman.upper = {}", ba.upper);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DZ: f64 = 2000.0 / 1024.0;

    #[test]
    fn averaging() {
        let a = Surface::flat(0, 3, 2, 100.0);
        let b = Surface::flat(0, 3, 2, 200.0);
        assert_eq!(average_surfaces(&a, &b).unwrap(), Surface::flat(0, 3, 2, 150.0));
        assert_eq!(average_surfaces(&a, &a).unwrap(), a);
        assert!(average_surfaces(&a, &Surface::flat(0, 2, 3, 1.0)).is_err());
    }

    #[test]
    fn border_error_examples() {
        let r = Surface::from_fn(0, 4, 3, |x, y| 300.0 + x as f64 + y as f64);
        let e = border_errors(&SurfacePairSample::new(&r, &r, DZ, None).unwrap());
        assert_eq!((e.mean_unsigned_um, e.mean_signed_um), (0.0, 0.0));

        let below = r.map(|z| z + 2.0);
        let e = border_errors(&SurfacePairSample::new(&below, &r, DZ, None).unwrap());
        assert!((e.mean_signed_um - 3.90625).abs() < 1e-12);
        assert!((e.mean_unsigned_um - 3.90625).abs() < 1e-12);
        let above = r.map(|z| z - 2.0);
        let e = border_errors(&SurfacePairSample::new(&above, &r, DZ, None).unwrap());
        assert!(e.mean_signed_um < 0.0);

        let alt = Surface::from_fn(0, 4, 3, |x, y| {
            r.get(x, y) + if (x + y) % 2 == 0 { 1.0 } else { -1.0 }
        });
        let e = border_errors(&SurfacePairSample::new(&alt, &r, DZ, None).unwrap());
        assert!(e.mean_signed_um.abs() < 1e-12);
        assert!((e.mean_unsigned_um - 1.953125).abs() < 1e-12);
    }

    #[test]
    fn mask_restricts_columns() {
        let r = Surface::flat(0, 4, 3, 10.0);
        let t = Surface::from_fn(0, 4, 3, |_, y| 10.0 + y as f64);
        let m = ColumnMask::bscans(4, 3, &[2]).unwrap();
        let e = border_errors(&SurfacePairSample::new(&t, &r, 1.0, Some(&m)).unwrap());
        assert_eq!(e.columns.len(), 4);
        assert_eq!(e.mean_signed_um, 1.0);
        assert!(ColumnMask::bscans(4, 3, &[0]).is_err());
        assert!(ColumnMask::bscans(4, 3, &[4]).is_err());
        assert!(ColumnMask::bscans(4, 3, &[]).is_err());
        assert!(SurfacePairSample::new(&t, &r, 1.0, Some(&ColumnMask::all(3, 4))).is_err());
    }

    #[test]
    fn thickness_error_examples() {
        let bm = Surface::flat(0, 3, 3, 600.0);
        let csi = Surface::flat(0, 3, 3, 700.0);
        let e = thickness_errors(&bm, &csi, &bm, &csi, DZ, None).unwrap();
        assert_eq!((e.mean_unsigned_um, e.mean_signed_um), (0.0, 0.0));
        let deeper = csi.map(|z| z + 3.0);
        let e = thickness_errors(&bm, &deeper, &bm, &csi, DZ, None).unwrap();
        assert!((e.mean_signed_um - 5.859375).abs() < 1e-12);
        let thinner = csi.map(|z| z - 10.0 / DZ);
        let e = thickness_errors(&bm, &thinner, &bm, &csi, DZ, None).unwrap();
        assert!((e.mean_signed_um + 10.0).abs() < 1e-9);
        assert!((e.mean_unsigned_um - 10.0).abs() < 1e-9);
    }

    #[test]
    fn dice_examples() {
        let f = |z| Surface::flat(0, 2, 2, z);
        assert_eq!(dice(&f(100.0), &f(200.0), &f(100.0), &f(200.0), None).unwrap(), 1.0);
        assert_eq!(dice(&f(100.0), &f(200.0), &f(150.0), &f(250.0), None).unwrap(), 0.5);
        assert_eq!(dice(&f(100.0), &f(200.0), &f(300.0), &f(400.0), None).unwrap(), 0.0);
        assert_eq!(dice(&f(5.0), &f(5.0), &f(7.0), &f(7.0), None).unwrap(), 1.0);
        assert!(dice(&f(5.0), &f(4.0), &f(5.0), &f(6.0), None).is_err());
    }

    fn pairs(v: &[(f64, f64)]) -> PairedMeasurements {
        PairedMeasurements::new(v).unwrap()
    }

    #[test]
    fn t_test_examples() {
        let p = pairs(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)]);
        let TTest::Defined { t, df, p: pv } = paired_t_test(&p) else {
            panic!("degenerate")
        };
        assert!((t - 3.872983346207417).abs() < 1e-12);
        assert_eq!(df, 3.0);
        assert!((pv - 0.0305).abs() < 5e-5, "{pv}");

        let sym = pairs(&[(5.0, 5.0), (3.0, 1.0), (1.0, 3.0), (7.0, 7.0)]);
        let TTest::Defined { t, p: pv, .. } = paired_t_test(&sym) else {
            panic!("degenerate")
        };
        assert_eq!(t, 0.0);
        assert_eq!(pv, 1.0);

        let flat = pairs(&[(3.0, 1.0), (5.0, 3.0), (4.0, 2.0)]);
        assert_eq!(
            paired_t_test(&flat),
            TTest::Degenerate {
                mean_difference: 2.0,
                df: 2.0
            }
        );
    }

    #[test]
    fn bland_altman_and_rc_examples() {
        let p = pairs(&[(4.0, 5.0), (6.0, 5.0)]);
        let ba = bland_altman(&p);
        assert_eq!(ba.mean_difference, 0.0);
        assert!((ba.upper - 1.96 * 2f64.sqrt()).abs() < 1e-12);
        assert!((ba.upper - 2.772).abs() < 5e-4);
        assert_eq!(ba.points, vec![(4.5, -1.0), (5.5, 1.0)]);
        assert!((rc(&p) - 2.772).abs() < 5e-4);
        let same = pairs(&[(1.0, 1.0), (2.0, 2.0)]);
        let ba = bland_altman(&same);
        assert_eq!((ba.mean_difference, ba.lower, ba.upper), (0.0, 0.0, 0.0));
        assert_eq!(rc(&same), 0.0);
    }

    #[test]
    fn cv_examples() {
        let c = cv(&pairs(&[(90.0, 110.0), (100.0, 100.0)])).unwrap();
        assert!((c.percent - 100.0f64.sqrt() * 2f64.sqrt() / 2.0).abs() < 1e-9);
        let single = cv(&pairs(&[(90.0, 110.0), (0.0, 0.0)])).unwrap();
        assert!((single.percent - 14.142135623730951).abs() < 1e-9);
        assert_eq!(single.subjects_excluded, 1);
        assert_eq!(cv(&pairs(&[(3.0, 3.0), (4.0, 4.0)])).unwrap().percent, 0.0);
    }

    #[test]
    fn icc_examples() {
        let perfect = pairs(&[(1.0, 1.0), (2.0, 2.0), (5.0, 5.0)]);
        let icc = icc_two_way_random(&perfect).unwrap();
        assert_eq!(icc.value, 1.0);
        assert_eq!(icc.ci, None);

        let offset = pairs(&[(1.0, 2.0), (2.0, 3.0), (3.0, 4.0), (4.0, 5.0), (5.0, 6.0)]);
        let icc = icc_two_way_random(&offset).unwrap();
        // BMS = 5, JMS = 2.5, EMS = 0
        assert!((icc.value - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(icc.ci, None);

        let none = pairs(&[(1.0, 2.0), (2.0, 1.0), (0.0, 3.0)]);
        let icc = icc_two_way_random(&none).unwrap();
        assert_eq!(icc.value, 0.0);
        assert!(icc.warning.is_some());

        assert!(icc_two_way_random(&pairs(&[(1.0, 2.0), (3.0, 4.0)])).is_err());
    }

    #[test]
    fn f_quantiles() {
        // F(0.975; 4, 4) = 9.6045, F(0.975; 10, 10) = 3.7168
        assert!((f_quantile(0.975, 4.0, 4.0).unwrap() - 9.6045).abs() < 1e-4);
        assert!((f_quantile(0.975, 10.0, 10.0).unwrap() - 3.7168).abs() < 1e-4);
    }
}
