//! Text formats: surface and thickness CSV grids, paired-measurement CSV and
//! flat dotted-key config files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::PairedMeasurements;
use crate::pipeline::ThicknessMap;
use crate::volume::Surface;

fn grid_csv(header: &str, meta: &str, nx: usize, values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 12);
    s.push_str(header);
    s.push('\n');
    s.push_str(meta);
    s.push('\n');
    for row in values.chunks(nx) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn surface_to_csv(surface: &Surface) -> String {
    grid_csv(
        "nx,ny,level",
        &format!("{},{},{}", surface.nx, surface.ny, surface.level),
        surface.nx,
        surface.heights(),
    )
}

pub fn thickness_to_csv(map: &ThicknessMap) -> String {
    grid_csv("nx,ny,unit", &format!("{},{},um", map.nx, map.ny), map.nx, &map.um)
}

struct Grid {
    nx: usize,
    ny: usize,
    tag: String,
    values: Vec<f64>,
}

fn parse_grid(text: &str, header: &str) -> Result<Grid> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let bad = |line: usize, msg: String| Error::Csv(format!("line {line}: {msg}"));
    match lines.next() {
        Some((_, h)) if h.replace(' ', "") == header => {}
        Some((n, h)) => return Err(bad(n, format!("expected header {header:?}, found {h:?}"))),
        None => return Err(Error::Csv("empty file".into())),
    }
    let (n, meta) = lines.next().ok_or_else(|| Error::Csv("missing dimension line".into()))?;
    let fields: Vec<&str> = meta.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(bad(n, format!("expected 3 fields, found {}", fields.len())));
    }
    let dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| bad(n, format!("invalid dimension {s:?}")))
    };
    let (nx, ny) = (dim(fields[0])?, dim(fields[1])?);
    let mut values = Vec::with_capacity(nx * ny);
    let mut rows = 0;
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        rows += 1;
        if rows > ny {
            return Err(bad(n, format!("more than {ny} rows")));
        }
        let before = values.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(n, format!("invalid number {:?}", field.trim())))?;
            if !v.is_finite() {
                return Err(bad(n, format!("non-finite value {v}")));
            }
            values.push(v);
        }
        if values.len() - before != nx {
            return Err(bad(n, format!("expected {nx} values, found {}", values.len() - before)));
        }
    }
    if rows != ny {
        return Err(Error::Csv(format!("expected {ny} rows, found {rows}")));
    }
    Ok(Grid {
        nx,
        ny,
        tag: fields[2].to_string(),
        values,
    })
}

pub fn surface_from_csv(text: &str) -> Result<Surface> {
    let g = parse_grid(text, "nx,ny,level")?;
    let level = g
        .tag
        .parse()
        .map_err(|_| Error::Csv(format!("line 2: invalid level {:?}", g.tag)))?;
    Surface::new(level, g.nx, g.ny, g.values)
}

pub fn thickness_from_csv(text: &str) -> Result<ThicknessMap> {
    let g = parse_grid(text, "nx,ny,unit")?;
    if g.tag != "um" {
        return Err(Error::Csv(format!("line 2: unsupported unit {:?}", g.tag)));
    }
    Ok(ThicknessMap {
        nx: g.nx,
        ny: g.ny,
        um: g.values,
    })
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Csv(msg) => Error::Csv(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_surface_csv(path: impl AsRef<Path>) -> Result<Surface> {
    let path = path.as_ref();
    with_path(path, surface_from_csv(&read_text(path)?))
}

pub fn write_surface_csv(path: impl AsRef<Path>, surface: &Surface) -> Result<()> {
    write_text(path, &surface_to_csv(surface))
}

pub fn read_thickness_csv(path: impl AsRef<Path>) -> Result<ThicknessMap> {
    let path = path.as_ref();
    with_path(path, thickness_from_csv(&read_text(path)?))
}

pub fn write_thickness_csv(path: impl AsRef<Path>, map: &ThicknessMap) -> Result<()> {
    write_text(path, &thickness_to_csv(map))
}

/// Parses `subject,m1,m2` rows. A first line whose numeric fields do not
/// parse is taken as a header; blank lines and `#` comments are skipped.
pub fn paired_from_csv(text: &str) -> Result<PairedMeasurements> {
    let mut subjects = Vec::new();
    let mut m1 = Vec::new();
    let mut m2 = Vec::new();
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Csv(format!(
                "line {n}: expected 3 fields (subject, m1, m2), found {}",
                fields.len()
            )));
        }
        let parsed = (fields[1].parse::<f64>(), fields[2].parse::<f64>());
        match parsed {
            (Ok(a), Ok(b)) => {
                if !(a.is_finite() && b.is_finite()) {
                    return Err(Error::Csv(format!("line {n}: non-finite measurement")));
                }
                subjects.push(fields[0].to_string());
                m1.push(a);
                m2.push(b);
            }
            _ if first => {}
            _ => {
                let field = if parsed.0.is_err() { fields[1] } else { fields[2] };
                return Err(Error::Csv(format!(
                    "line {n}: invalid measurement {field:?}"
                )));
            }
        }
        first = false;
    }
    PairedMeasurements::with_subjects(subjects, m1, m2)
}

pub fn paired_to_csv(pairs: &PairedMeasurements) -> String {
    let mut s = String::from("subject,m1,m2\n");
    for ((id, a), b) in pairs.subjects().iter().zip(pairs.m1()).zip(pairs.m2()) {
        let _ = writeln!(s, "{id},{a},{b}");
    }
    s
}

pub fn read_paired_csv(path: impl AsRef<Path>) -> Result<PairedMeasurements> {
    let path = path.as_ref();
    with_path(path, paired_from_csv(&read_text(path)?))
}

/// Renders a serializable value as sorted `dotted.key = value` lines, which
/// read back through [`from_flat_config`].
pub fn to_flat_config<T: Serialize>(value: &T) -> Result<String> {
    let v = toml::Value::try_from(value).map_err(|e| Error::Config(e.to_string()))?;
    let mut lines = Vec::new();
    flatten("", &v, &mut lines);
    let mut s = String::new();
    for (k, v) in lines {
        let _ = writeln!(s, "{k} = {v}");
    }
    Ok(s)
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut Vec<(String, String)>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Parses dotted-key (or sectioned) config text; unknown keys are rejected
/// by the target type.
pub fn from_flat_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Merges `overrides` into `base`, key by key; both are config texts.
pub fn merge_config_text(base: &str, overrides: &str) -> Result<String> {
    let parse = |s: &str| -> Result<toml::Table> {
        s.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))
    };
    let mut merged = parse(base)?;
    merge_tables(&mut merged, parse(overrides)?);
    Ok(toml::to_string(&merged).map_err(|e| Error::Config(e.to_string()))?)
}

fn merge_tables(dst: &mut toml::Table, src: toml::Table) {
    for (k, v) in src {
        match (dst.get_mut(&k), v) {
            (Some(toml::Value::Table(d)), toml::Value::Table(s)) => merge_tables(d, s),
            (_, v) => {
                dst.insert(k, v);
            }
        }
    }
}
